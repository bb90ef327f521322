//! Filtering symmetric operators on a compact Lie algebra: the space of
//! nonnegative trace-1 filtering operators, degenerate filtrations `W`,
//! cells `D[k]`, stars `X[k]`, sphere models, and the star property.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::lie::{LieAlgebra, Subalgebra};
use crate::linalg;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("matrix is not symmetric (defect {0:.3e})")]
    NotSymmetric(f64),
    #[error("operator must be attached to a proper subalgebra, not the full algebra")]
    FullAlgebra,
    #[error("the center point 1/n has no sphere image")]
    DegeneratePoint,
    #[error("sphere point must be traceless, unit norm, with negative bottom eigenvalue")]
    NotSpherePoint,
    #[error("bisection budget exceeded")]
    NonConvergence,
    #[error("kernel of a W-candidate is not bracket-closed (defect {0:.3e}); tolerance too loose")]
    KernelNotSubalgebra(f64),
    #[error("partition must satisfy 0 < a_1 < b_1 < ... < b_last = 1/n with 2 a_i < b_i")]
    BadPartition,
}

/// Symmetric operator on the algebra, in the fixed Q-orthonormal basis.
#[derive(Debug, Clone)]
pub struct SymOp {
    matrix: DMatrix<f64>,
    parent: Arc<LieAlgebra>,
}

impl SymOp {
    pub fn new(parent: Arc<LieAlgebra>, matrix: DMatrix<f64>) -> Result<Self, OperatorError> {
        let defect = (&matrix - matrix.transpose()).norm();
        if defect > parent.tol() * matrix.norm().max(1.0) {
            return Err(OperatorError::NotSymmetric(defect));
        }
        // symmetrize to kill roundoff drift
        let m = (&matrix + matrix.transpose()) * 0.5;
        Ok(SymOp { matrix: m, parent })
    }

    pub fn parent(&self) -> &Arc<LieAlgebra> {
        &self.parent
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn dist(&self, other: &SymOp) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }
}

/// Eigenvalue filtration of a symmetric operator: sorted distinct levels
/// and cumulative eigenspace spans.
#[derive(Debug, Clone)]
pub struct FiltrationProfile {
    pub levels: Vec<f64>,
    /// spaces[i] spans all eigenvectors with eigenvalue <= levels[i]
    pub spaces: Vec<DMatrix<f64>>,
}

/// Normalized complementary projector of a proper subalgebra:
/// (1/dim(g/k)) (1 - 1_k). Trace 1, kernel k.
pub fn chi_bar(k: &Subalgebra) -> Result<SymOp, OperatorError> {
    let g = k.parent().clone();
    let n = g.dim();
    if k.dim() == n {
        return Err(OperatorError::FullAlgebra);
    }
    let scale = 1.0 / ((n - k.dim()) as f64);
    let m = (DMatrix::identity(n, n) - k.projector()) * scale;
    SymOp::new(g, m)
}

/// Eigen-decomposition with eigenvalue clustering at tol * |A|.
pub fn filtration_of(a: &SymOp) -> FiltrationProfile {
    let g = a.parent();
    let (vals, vecs) = linalg::sym_eigen_sorted(a.matrix());
    let width = g.tol() * a.norm().max(1.0);
    let ids = linalg::cluster_sorted(vals.as_slice(), width);
    let nlevels = ids.last().map(|&x| x + 1).unwrap_or(0);
    let mut levels = Vec::with_capacity(nlevels);
    let mut spaces = Vec::with_capacity(nlevels);
    for lvl in 0..nlevels {
        let members: Vec<usize> = (0..vals.len()).filter(|&i| ids[i] == lvl).collect();
        let mean = members.iter().map(|&i| vals[i]).sum::<f64>() / members.len() as f64;
        levels.push(mean);
        let upto: Vec<usize> = (0..vals.len()).filter(|&i| ids[i] <= lvl).collect();
        let mut m = DMatrix::zeros(vals.len(), upto.len());
        for (c, &i) in upto.iter().enumerate() {
            m.set_column(c, &vecs.column(i));
        }
        spaces.push(m);
    }
    FiltrationProfile { levels, spaces }
}

/// Clustered eigenvalues (per eigenvector) and the eigenvector matrix.
fn clustered_eigen(a: &SymOp) -> (Vec<f64>, DMatrix<f64>) {
    let g = a.parent();
    let (vals, vecs) = linalg::sym_eigen_sorted(a.matrix());
    let width = g.tol() * a.norm().max(1.0);
    let ids = linalg::cluster_sorted(vals.as_slice(), width);
    let nlevels = ids.last().map(|&x| x + 1).unwrap_or(0);
    let mut means = vec![0.0; nlevels];
    let mut counts = vec![0usize; nlevels];
    for i in 0..vals.len() {
        means[ids[i]] += vals[i];
        counts[ids[i]] += 1;
    }
    for l in 0..nlevels {
        means[l] /= counts[l] as f64;
    }
    let lam: Vec<f64> = (0..vals.len()).map(|i| means[ids[i]]).collect();
    (lam, vecs)
}

/// Filtering test in eigen-basis form: for every triple with a structure
/// constant above tolerance, lambda_k <= lambda_i + lambda_j.
pub fn is_filtering(a: &SymOp) -> bool {
    let g = a.parent().clone();
    let tol = g.tol();
    let (lam, vecs) = clustered_eigen(a);
    let n = g.dim();
    let c_tol = tol * g.bracket_norm().max(1.0);
    let f_tol = tol * a.norm().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let br = g.bracket(&vecs.column(i).clone_owned(), &vecs.column(j).clone_owned());
            if br.norm() <= c_tol {
                continue;
            }
            let coords = vecs.transpose() * br;
            for k in 0..n {
                if coords[k].abs() > c_tol && lam[k] > lam[i] + lam[j] + f_tol {
                    return false;
                }
            }
        }
    }
    true
}

/// Limit-form cross-check: evaluates the conjugated bracket
/// e^{tA} [e^{-tA} x, e^{-tA} y] on a time grid and requires its norm to
/// stay bounded with a non-increasing tail.
pub fn is_filtering_by_limit(a: &SymOp, t_grid: &[f64]) -> bool {
    assert!(t_grid.windows(2).all(|w| w[0] < w[1]), "t_grid must be increasing");
    let g = a.parent().clone();
    let n = g.dim();
    let (vals, vecs) = linalg::sym_eigen_sorted(a.matrix());
    let mut norms = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let fwd = &vecs * DMatrix::from_diagonal(&vals.map(|x| (t * x).exp())) * vecs.transpose();
        let bwd = &vecs * DMatrix::from_diagonal(&vals.map(|x| (-t * x).exp())) * vecs.transpose();
        let mut sq = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let bi = bwd.column(i).clone_owned();
                let bj = bwd.column(j).clone_owned();
                let br = g.bracket(&bi, &bj);
                let out = &fwd * br;
                sq += out.norm_squared();
            }
        }
        norms.push(sq.sqrt());
    }
    let scale = norms[0].max(1e-300);
    if scale < 1e-200 {
        return true; // abelian: nothing to conjugate
    }
    let band = g.tol().max(1e-12);
    // bounded by the start, never rising off the running minimum, and
    // non-increasing on the tail half
    let last = *norms.last().unwrap();
    if last > scale * (1.0 + band) {
        return false;
    }
    let running_min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    if last > running_min * (1.0 + band) + band * scale {
        return false;
    }
    let tail = norms.len() / 2;
    for w in norms[tail..].windows(2) {
        if w[1] > w[0] * (1.0 + band) + band * scale * 1e-6 {
            return false;
        }
    }
    true
}

/// Minor data for the derived-action chain v_1 = -A.c, v_{i+1} = -A.v_i
/// on g x wedge^2 g*.
#[derive(Debug, Clone)]
pub struct MinorSequence {
    /// leading principal minors of the chain Gram a_ij = (-A.v_i, v_j), in
    /// the orthonormalized chain basis (Gram-Schmidt rescales each leading
    /// minor by a positive factor, so the sign pattern is exact)
    pub d: Vec<f64>,
    /// admissible scale constant from the a-priori bound a_ij <= 2^{i+j+1}|c|^2
    pub e: f64,
    /// detected dimension of V = span{v_i}
    pub rank: usize,
    /// the derived action projected onto the orthonormalized chain basis
    pub projected: DMatrix<f64>,
}

/// Bracket tensor rotated into the eigenbasis of A, with the derived
/// eigenvalue lam_i + lam_j - lam_k per component.
fn derived_components(a: &SymOp) -> (Vec<f64>, Vec<f64>) {
    let g = a.parent().clone();
    let n = g.dim();
    let (lam, vecs) = clustered_eigen(a);
    let mut gvals = Vec::new();
    let mut comps = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let br = g.bracket(&vecs.column(i).clone_owned(), &vecs.column(j).clone_owned());
            if br.norm() < 1e-300 {
                continue;
            }
            let coords = vecs.transpose() * br;
            for k in 0..n {
                if coords[k] != 0.0 {
                    gvals.push(lam[i] + lam[j] - lam[k]);
                    comps.push(coords[k]);
                }
            }
        }
    }
    (gvals, comps)
}

/// Builds the derived chain in the eigen-coordinates of A, orthonormalized
/// by a Lanczos sweep with full reorthogonalization. The raw Krylov Gram
/// is a moment matrix whose conditioning hides weak violations; the
/// orthonormalized basis keeps every minor sign honest at f64 precision.
pub fn minor_sequence(a: &SymOp, k_max: usize) -> MinorSequence {
    let g = a.parent().clone();
    let (gvals, c0) = derived_components(a);
    let cap = k_max.clamp(2, 48).min(gvals.len().max(1));
    let cnorm = c0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c2 = g.bracket_norm().powi(2).max(1e-300);
    let mut e = f64::INFINITY;
    for i in 1..=cap {
        let bound = (2.0f64.powi(2 * i as i32 + 3) * c2).powf(-1.0 / (i as f64 + 1.0));
        e = e.min(bound);
    }
    if cnorm < 1e-300 {
        return MinorSequence { d: vec![], e, rank: 0, projected: DMatrix::zeros(0, 0) };
    }
    let apply = |v: &[f64]| -> Vec<f64> { v.iter().zip(&gvals).map(|(x, gg)| x * gg).collect() };
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
    // v_1 = -A.c
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut w = apply(&c0);
    let floor = 1e-13 * cnorm * gvals.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
    loop {
        // orthogonalize twice against the established basis
        for _ in 0..2 {
            for b in &basis {
                let d = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= d * bi;
                }
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm <= floor || basis.len() >= cap {
            break;
        }
        for wi in w.iter_mut() {
            *wi /= norm;
        }
        basis.push(w.clone());
        w = apply(basis.last().unwrap());
    }
    let rank = basis.len();
    let mut projected = DMatrix::zeros(rank, rank);
    for i in 0..rank {
        let ai = apply(&basis[i]);
        for j in i..rank {
            let t = dot(&ai, &basis[j]);
            projected[(i, j)] = t;
            projected[(j, i)] = t;
        }
    }
    let mut d = Vec::with_capacity(rank);
    for i in 1..=rank {
        d.push(projected.view((0, 0), (i, i)).clone_owned().determinant());
    }
    MinorSequence { d, e, rank, projected }
}

/// Minor-inequality verdict: the chain Gram must be nonnegative with a
/// once-zero-always-zero tail (positive leading minors up to the chain
/// rank). Evaluated through LDL pivots of the projected derived action.
pub fn minor_filtering_verdict(a: &SymOp) -> (bool, MinorSequence) {
    let g = a.parent().clone();
    let tol = g.tol();
    let seq = minor_sequence(a, 48);
    let k = seq.projected.nrows();
    if k == 0 {
        return (true, seq);
    }
    let diag_scale =
        (0..k).fold(0.0f64, |acc, i| acc.max(seq.projected[(i, i)].abs())).max(1e-300);
    let floor = tol * diag_scale;
    let mut h = seq.projected.clone();
    let mut verdict = true;
    for step in 0..k {
        let piv = h[(step, step)];
        if piv < -floor {
            verdict = false;
            break;
        }
        if piv <= floor {
            // pivot at the noise floor: the remaining block must vanish
            let mut resid: f64 = 0.0;
            for i in step..k {
                for j in step..k {
                    resid = resid.max(h[(i, j)].abs());
                }
            }
            if resid > floor * (k as f64) {
                let (vals, _) = linalg::sym_eigen_sorted(&seq.projected);
                verdict = vals[0] >= -floor * (k as f64);
            }
            break;
        }
        for i in (step + 1)..k {
            let f = h[(i, step)] / piv;
            for j in (step + 1)..k {
                let delta = f * h[(step, j)];
                h[(i, j)] -= delta;
            }
        }
    }
    (verdict, seq)
}

/// Membership in the space of filtering nonnegative trace-1 operators.
pub fn in_f_plus(a: &SymOp) -> bool {
    let g = a.parent();
    let tol = g.tol() * a.norm().max(1.0);
    let (vals, _) = linalg::sym_eigen_sorted(a.matrix());
    vals[0] >= -tol && (a.trace() - 1.0).abs() <= tol && is_filtering(a)
}

/// Commutation defect against a set of symmetry generators.
pub fn invariance_defect(a: &SymOp, generators: &[DMatrix<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for gmat in generators {
        let comm = a.matrix() * gmat - gmat * a.matrix();
        worst = worst.max(comm.norm() / gmat.norm().max(1.0));
    }
    worst
}

/// Membership in `W`: invariant filtering nonnegative trace-1 operators
/// whose kernel lies strictly between h and g. On success returns the
/// kernel as a certified subalgebra.
pub fn in_w(
    h: &Subalgebra,
    generators: &[DMatrix<f64>],
    a: &SymOp,
) -> Result<Option<Subalgebra>, OperatorError> {
    let g = a.parent().clone();
    let tol = g.tol();
    if !in_f_plus(a) || invariance_defect(a, generators) > tol * a.norm().max(1.0) {
        return Ok(None);
    }
    let kernel = kernel_space(a);
    let n = g.dim();
    if kernel.ncols() <= h.dim() || kernel.ncols() >= n {
        return Ok(None);
    }
    if !linalg::subspace_contained(h.basis(), &kernel, tol) {
        return Ok(None);
    }
    let defect = g.closure_defect(&kernel);
    if defect > tol {
        return Err(OperatorError::KernelNotSubalgebra(defect));
    }
    let sub = Subalgebra::from_span(g, &kernel).map_err(|_| OperatorError::KernelNotSubalgebra(defect))?;
    Ok(Some(sub))
}

/// Zero-eigenvalue cluster of a symmetric operator.
pub fn kernel_space(a: &SymOp) -> DMatrix<f64> {
    let g = a.parent();
    let (vals, vecs) = linalg::sym_eigen_sorted(a.matrix());
    let width = g.tol() * a.norm().max(1.0);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= width).collect();
    let mut m = DMatrix::zeros(vals.len(), cols.len());
    for (c, &i) in cols.iter().enumerate() {
        m.set_column(c, &vecs.column(i));
    }
    m
}

/// Membership in the draft cell `D[k]` (draft = true) or in the star
/// `X[k] = W intersect {A k = 0}` (draft = false).
pub fn in_cell_d(
    h: &Subalgebra,
    generators: &[DMatrix<f64>],
    k: &Subalgebra,
    a: &SymOp,
    draft: bool,
) -> Result<bool, OperatorError> {
    let g = a.parent().clone();
    let tol = g.tol() * a.norm().max(1.0);
    let kills = (a.matrix() * k.basis()).norm() <= tol * (k.dim().max(1) as f64);
    if !kills {
        return Ok(false);
    }
    if draft {
        let (vals, _) = linalg::sym_eigen_sorted(a.matrix());
        if vals[0] < -tol || (a.trace() - 1.0).abs() > tol {
            return Ok(false);
        }
        if invariance_defect(a, generators) > tol {
            return Ok(false);
        }
        for i in 0..k.dim() {
            let ad = g.ad(&k.basis().column(i).clone_owned());
            let comm = a.matrix() * &ad - &ad * a.matrix();
            if comm.norm() > tol * ad.norm().max(1.0) {
                return Ok(false);
            }
        }
        let _ = h;
        Ok(true)
    } else {
        Ok(in_w(h, generators, a)?.is_some())
    }
}

/// Model change between the flat trace-1 picture and the unit sphere of
/// traceless operators on g/h: v = (A - 1_m/n) / sqrt(|A|^2 - 1/n).
pub fn model_to_sphere(a: &SymOp, h: &Subalgebra) -> Result<SymOp, OperatorError> {
    let g = a.parent().clone();
    let n = (g.dim() - h.dim()) as f64;
    let one_m = DMatrix::identity(g.dim(), g.dim()) - h.projector();
    let denom_sq = a.matrix().norm_squared() - 1.0 / n;
    if denom_sq <= g.tol() {
        return Err(OperatorError::DegeneratePoint);
    }
    let v = (a.matrix() - one_m / n) / denom_sq.sqrt();
    SymOp::new(g, v)
}

/// Inverse model map: A = (1/n)(1_m - v / lambda_min(v|_m)).
pub fn model_from_sphere(v: &SymOp, h: &Subalgebra) -> Result<SymOp, OperatorError> {
    let g = v.parent().clone();
    let tol = g.tol();
    let m_basis = linalg::orthogonal_complement(h.basis(), g.dim(), tol);
    let n = m_basis.ncols() as f64;
    let restricted = m_basis.transpose() * v.matrix() * &m_basis;
    if restricted.trace().abs() > tol * 10.0 * v.norm().max(1.0)
        || (v.norm() - 1.0).abs() > tol * 10.0
    {
        return Err(OperatorError::NotSpherePoint);
    }
    let (vals, _) = linalg::sym_eigen_sorted(&restricted);
    let lam = vals[0];
    if lam >= -tol {
        return Err(OperatorError::NotSpherePoint);
    }
    let one_m = DMatrix::identity(g.dim(), g.dim()) - h.projector();
    let a = (one_m - v.matrix() / lam) / n;
    SymOp::new(g, a)
}

/// Result of the radial scale search along A_t = t (A - chi_k) + chi_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleLimit {
    /// the ray stays filtering forever (A = center)
    Unbounded,
    Bounded { t: f64, on_omega: bool },
}

/// Radius of the sphere Omega inside the cell of k (kd = dim g/k).
pub fn omega_radius(g_dim: usize, k_dim: usize) -> f64 {
    let kd = (g_dim - k_dim) as f64;
    1.0 / (kd * (5.0 - 1.0 / kd).sqrt())
}

/// Bisection for sup { t : A_t in F_+ } along the star ray from chi_k.
/// Guaranteed >= 1 for A in the star.
pub fn star_scale_limit(k: &Subalgebra, a: &SymOp, budget: usize) -> Result<ScaleLimit, OperatorError> {
    let g = a.parent().clone();
    let center = chi_bar(k)?;
    let u = a.matrix() - center.matrix();
    let unorm = u.norm();
    if unorm <= g.tol() {
        return Ok(ScaleLimit::Unbounded);
    }
    let at = |t: f64| -> SymOp { SymOp::new(g.clone(), center.matrix() + &u * t).unwrap() };
    // {t >= 0 : A_t in F_+} is a segment containing the center t = 0
    let mut hi = 1.0;
    while in_f_plus(&at(hi)) {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(ScaleLimit::Unbounded);
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    let mut steps = 0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if in_f_plus(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
        if steps > budget {
            return Err(OperatorError::NonConvergence);
        }
    }
    let r = omega_radius(g.dim(), k.dim());
    let on_omega = (unorm - r).abs() <= 1e-7 * r.max(1.0);
    Ok(ScaleLimit::Bounded { t: 0.5 * (lo + hi), on_omega })
}

/// Hull check in the style of interval partitions: for every interval
/// [a_i, b_i] free of eigenvalues, the sublevel space F_{a_i} must bracket
/// into F_{2 a_i}.
pub fn in_bwz_hull(
    h: &Subalgebra,
    a: &SymOp,
    partition: &[(f64, f64)],
) -> Result<bool, OperatorError> {
    let g = a.parent().clone();
    let n = (g.dim() - h.dim()) as f64;
    let end = 1.0 / n;
    if partition.is_empty() {
        return Err(OperatorError::BadPartition);
    }
    let mut prev_b = 0.0;
    for (i, &(ai, bi)) in partition.iter().enumerate() {
        if ai <= prev_b || bi <= ai || 2.0 * ai >= bi {
            return Err(OperatorError::BadPartition);
        }
        if i == partition.len() - 1 && (bi - end).abs() > 1e-12 {
            return Err(OperatorError::BadPartition);
        }
        prev_b = bi;
    }
    let (vals, vecs) = linalg::sym_eigen_sorted(a.matrix());
    let tol = g.tol() * a.norm().max(1.0);
    let sublevel = |cut: f64| -> DMatrix<f64> {
        let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= cut).collect();
        let mut m = DMatrix::zeros(vals.len(), cols.len());
        for (c, &i) in cols.iter().enumerate() {
            m.set_column(c, &vecs.column(i));
        }
        m
    };
    for &(ai, bi) in partition {
        let empty = !vals.iter().any(|&v| v >= ai - tol && v <= bi + tol);
        if !empty {
            continue;
        }
        let fa = sublevel(ai);
        let f2a = sublevel(2.0 * ai);
        // [F_a, F_a] must land in F_{2a}
        for i in 0..fa.ncols() {
            for j in (i + 1)..fa.ncols() {
                let br = g.bracket(&fa.column(i).clone_owned(), &fa.column(j).clone_owned());
                if br.norm() <= tol {
                    continue;
                }
                let m = DMatrix::from_column_slice(g.dim(), 1, br.as_slice());
                let on = linalg::orthonormalize(&m, g.tol());
                if !linalg::subspace_contained(&on, &f2a, g.tol().max(1e-8)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Orthonormal basis (Frobenius) of the tangent space of a cell or star at
/// its center: symmetric, trace 0, annihilating k, commuting with the
/// symmetry generators, and for the draft cell also with ad(k).
pub fn cell_tangent_basis(
    g: &Arc<LieAlgebra>,
    k: &Subalgebra,
    generators: &[DMatrix<f64>],
    with_ad_k: bool,
) -> Vec<DMatrix<f64>> {
    let n = g.dim();
    let tol = g.tol();
    // symmetric coordinate basis
    let mut sym_basis: Vec<DMatrix<f64>> = Vec::new();
    for p in 0..n {
        for q in p..n {
            let mut m = DMatrix::zeros(n, n);
            if p == q {
                m[(p, p)] = 1.0;
            } else {
                let s = 1.0 / (2.0f64).sqrt();
                m[(p, q)] = s;
                m[(q, p)] = s;
            }
            sym_basis.push(m);
        }
    }
    let dim_sym = sym_basis.len();
    let mut comms: Vec<DMatrix<f64>> = generators.to_vec();
    if with_ad_k {
        for i in 0..k.dim() {
            comms.push(g.ad(&k.basis().column(i).clone_owned()));
        }
    }
    let rows = 1 + n * k.dim() + n * n * comms.len();
    let mut cons = DMatrix::zeros(rows, dim_sym);
    for (c, s) in sym_basis.iter().enumerate() {
        let mut r = 0;
        cons[(r, c)] = s.trace();
        r += 1;
        let img = s * k.basis();
        for v in img.iter() {
            cons[(r, c)] = *v;
            r += 1;
        }
        for cm in &comms {
            let m = s * cm - cm * s;
            for v in m.iter() {
                cons[(r, c)] = *v;
                r += 1;
            }
        }
    }
    let null = linalg::nullspace(&cons, tol);
    (0..null.ncols())
        .map(|j| {
            let mut m = DMatrix::zeros(n, n);
            for (c, s) in sym_basis.iter().enumerate() {
                if null[(c, j)] != 0.0 {
                    m += s * null[(c, j)];
                }
            }
            m
        })
        .collect()
}

/// Random unit Frobenius direction in the span of a tangent basis.
pub fn random_tangent_direction<R: Rng>(rng: &mut R, basis: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
    if basis.is_empty() {
        return None;
    }
    let n = basis[0].nrows();
    let mut m = DMatrix::zeros(n, n);
    for b in basis {
        let w: f64 = rng.sample(rand_distr_standard_normal());
        m += b * w;
    }
    let nr = m.norm();
    if nr < 1e-12 {
        return None;
    }
    Some(m / nr)
}

// Box-Muller: keeps the rand dependency surface small.
fn rand_distr_standard_normal() -> impl rand::distributions::Distribution<f64> {
    struct StdNormal;
    impl rand::distributions::Distribution<f64> for StdNormal {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen::<f64>();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    StdNormal
}

/// Random trace-1 nonnegative symmetric operator: a normalized Wishart
/// sample blended toward the center 1/n by a uniform factor. The blend
/// keeps both filtering and non-filtering operators frequent; a raw
/// Wishart sample is almost never filtering.
pub fn random_trace_one_psd<R: Rng>(g: &Arc<LieAlgebra>, rng: &mut R) -> SymOp {
    let n = g.dim();
    let raw = DMatrix::from_fn(n, n, |_, _| {
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    let w = &raw * raw.transpose();
    let s: f64 = rng.gen();
    let m = DMatrix::identity(n, n) * ((1.0 - s) / n as f64) + &w * (s / w.trace());
    SymOp::new(g.clone(), m).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn su2_line() -> (Arc<LieAlgebra>, Subalgebra) {
        let g = presets::su2_epsilon();
        let mut m = DMatrix::zeros(3, 1);
        m[(2, 0)] = 1.0;
        let k = Subalgebra::from_span(g.clone(), &m).unwrap();
        (g, k)
    }

    #[test]
    fn chi_bar_basics() {
        let (g, k) = su2_line();
        let a = chi_bar(&k).unwrap();
        assert!((a.trace() - 1.0).abs() < 1e-12);
        let (vals, _) = linalg::sym_eigen_sorted(a.matrix());
        assert!(vals[0].abs() < 1e-12);
        assert!((vals[2] - 0.5).abs() < 1e-12);
        // k = 0 gives identity / n
        let zero = Subalgebra::trivial(g.clone());
        let a0 = chi_bar(&zero).unwrap();
        assert!((a0.matrix() - DMatrix::identity(3, 3) / 3.0).norm() < 1e-12);
        // full algebra rejected
        assert!(matches!(chi_bar(&Subalgebra::full(g)), Err(OperatorError::FullAlgebra)));
    }

    #[test]
    fn filtration_levels() {
        let (g, k) = su2_line();
        let a = chi_bar(&k).unwrap();
        let f = filtration_of(&a);
        assert_eq!(f.levels.len(), 2);
        assert_eq!(f.spaces[0].ncols(), 1);
        assert_eq!(f.spaces[1].ncols(), 3);
        let id3 = SymOp::new(g.clone(), DMatrix::identity(3, 3) / 3.0).unwrap();
        assert_eq!(filtration_of(&id3).levels.len(), 1);
    }

    #[test]
    fn filtering_examples() {
        let (g, k) = su2_line();
        assert!(is_filtering(&chi_bar(&k).unwrap()));
        let bad = SymOp::new(g.clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.6, 0.4, 0.0]))).unwrap();
        assert!(!is_filtering(&bad));
        let id3 = SymOp::new(g.clone(), DMatrix::identity(3, 3) / 3.0).unwrap();
        assert!(is_filtering(&id3));
    }

    #[test]
    fn limit_test_matches() {
        let (g, k) = su2_line();
        let grid: Vec<f64> = (0..9).map(|i| 5.0 * i as f64).collect();
        assert!(is_filtering_by_limit(&chi_bar(&k).unwrap(), &grid));
        let bad = SymOp::new(g.clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.6, 0.4, 0.0]))).unwrap();
        assert!(!is_filtering_by_limit(&bad, &grid));
        let id3 = SymOp::new(g.clone(), DMatrix::identity(3, 3) / 3.0).unwrap();
        assert!(is_filtering_by_limit(&id3, &grid));
    }

    #[test]
    fn minor_verdicts() {
        let (g, k) = su2_line();
        let (ok, seq) = minor_filtering_verdict(&chi_bar(&k).unwrap());
        assert!(ok);
        assert!(seq.d.iter().all(|&x| x >= -1e-12));
        // chain inequality with the admissible constant, on the filtering example
        for i in 0..seq.d.len().saturating_sub(1) {
            assert!(seq.d[i] + 1e-12 >= seq.e.powi(i as i32 + 2) * seq.d[i + 1]);
        }
        let bad = SymOp::new(g.clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.6, 0.4, 0.0]))).unwrap();
        let (ok_bad, _) = minor_filtering_verdict(&bad);
        assert!(!ok_bad);
        // abelian: everything zero, trivially filtering
        let ab = crate::lie::test_algebras::abelian2();
        let a = SymOp::new(ab, DMatrix::identity(2, 2) / 2.0).unwrap();
        let (ok_ab, seq_ab) = minor_filtering_verdict(&a);
        assert!(ok_ab);
        assert_eq!(seq_ab.rank, 0);
    }

    #[test]
    fn f_plus_membership() {
        let (g, k) = su2_line();
        let chi = chi_bar(&k).unwrap();
        assert!(in_f_plus(&chi));
        let neg = SymOp::new(g.clone(), -chi.matrix().clone()).unwrap();
        assert!(!in_f_plus(&neg));
        let twice = SymOp::new(g.clone(), chi.matrix() * 2.0).unwrap();
        assert!(!in_f_plus(&twice));
    }

    #[test]
    fn w_membership_and_kernel() {
        // su(3)/t^2: chi of a root u(2) lies in W with kernel that u(2)
        let p = presets::preset("su3_flag").unwrap();
        let cat = &p.catalog;
        let k = cat.item(0);
        let chi = chi_bar(k).unwrap();
        let got = in_w(cat.h(), cat.generators(), &chi).unwrap();
        assert!(got.is_some());
        assert!(got.unwrap().same_space(k));
        // chi of h itself: kernel equals h, not strict
        let chi_h = chi_bar(cat.h()).unwrap();
        assert!(in_w(cat.h(), cat.generators(), &chi_h).unwrap().is_none());
        // identity / n: kernel 0
        let g = cat.algebra().clone();
        let id = SymOp::new(g.clone(), DMatrix::identity(8, 8) / 8.0).unwrap();
        assert!(in_w(cat.h(), cat.generators(), &id).unwrap().is_none());
    }

    #[test]
    fn cell_membership() {
        let p = presets::preset("su2_cubed").unwrap();
        let cat = &p.catalog;
        let su2_1 = cat.item(1); // dims sorted: [1,3,3,4,4,6,7,9]
        assert_eq!(su2_1.dim(), 3);
        let su2_12 = (0..cat.len()).find(|&i| cat.item(i).dim() == 6).unwrap();
        let chi_12 = chi_bar(cat.item(su2_12)).unwrap();
        // chi of a larger subalgebra lies in the cell and the star of a smaller one
        if cat.item_lt(1, su2_12) {
            assert!(in_cell_d(cat.h(), cat.generators(), su2_1, &chi_12, true).unwrap());
            assert!(in_cell_d(cat.h(), cat.generators(), su2_1, &chi_12, false).unwrap());
        }
        // chi of an incomparable subalgebra is not
        let su2_2 = cat.item(2);
        let chi_2 = chi_bar(su2_2).unwrap();
        assert!(!in_cell_d(cat.h(), cat.generators(), su2_1, &chi_2, true).unwrap());
    }

    #[test]
    fn model_round_trip() {
        let p = presets::preset("su3_flag").unwrap();
        let cat = &p.catalog;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..200 {
            let k = cat.item(rng.gen_range(0..3)).clone();
            let chi = chi_bar(&k).unwrap();
            // random W point: mix of chi's along a flag through k and g keeps it in W
            let a = chi;
            let v = model_to_sphere(&a, cat.h()).unwrap();
            assert!((v.trace()).abs() < 1e-9);
            assert!((v.norm() - 1.0).abs() < 1e-9);
            let back = model_from_sphere(&v, cat.h()).unwrap();
            assert!(back.dist(&a) < 1e-9);
            checked += 1;
        }
        assert!(checked > 0);
        // degenerate center rejected
        let g = cat.algebra().clone();
        let one_m = DMatrix::identity(8, 8) - cat.h().projector();
        let center = SymOp::new(g, one_m / 6.0).unwrap();
        assert!(matches!(model_to_sphere(&center, cat.h()), Err(OperatorError::DegeneratePoint)));
    }

    #[test]
    fn star_scale_examples() {
        let p = presets::preset("su2_cubed").unwrap();
        let cat = &p.catalog;
        let su2_1 = cat.item(1).clone();
        let chi_k = chi_bar(&su2_1).unwrap();
        // center itself: unbounded
        assert_eq!(star_scale_limit(&su2_1, &chi_k, 200).unwrap(), ScaleLimit::Unbounded);
        // chi of a larger subalgebra: bounded with t >= 1
        let su2_12_idx = (0..cat.len()).find(|&i| cat.item(i).dim() == 6 && cat.item_lt(1, i)).unwrap();
        let chi_l = chi_bar(cat.item(su2_12_idx)).unwrap();
        match star_scale_limit(&su2_1, &chi_l, 200).unwrap() {
            ScaleLimit::Bounded { t, .. } => assert!(t >= 1.0 - 1e-9, "t = {t}"),
            ScaleLimit::Unbounded => panic!("expected bounded scale"),
        }
    }

    #[test]
    fn bwz_hull_cases() {
        // positive: a W point passes any admissible partition
        let p = presets::preset("su2_cubed").unwrap();
        let cat = &p.catalog;
        let chi = chi_bar(cat.item(1)).unwrap();
        let n = 9.0;
        let part = vec![(0.02, 1.0 / n)];
        assert!(in_bwz_hull(cat.h(), &chi, &part).unwrap());
        // negative: sublevel space at an empty interval is not a subalgebra
        let g2 = presets::direct_sum(&[presets::su2_epsilon(), presets::su2_epsilon()]);
        let h0 = Subalgebra::trivial(g2.clone());
        let evals = DVector::from_vec(vec![0.02, 0.02, 0.24, 0.24, 0.24, 0.24]);
        let a = SymOp::new(g2.clone(), DMatrix::from_diagonal(&evals)).unwrap();
        let part = vec![(0.05, 1.0 / 6.0)];
        assert!(!in_bwz_hull(&h0, &a, &part).unwrap());
        // bad partition rejected
        assert!(matches!(
            in_bwz_hull(&h0, &a, &[(0.1, 1.0 / 6.0)]),
            Err(OperatorError::BadPartition)
        ));
    }

    #[test]
    fn tangent_dimensions() {
        // D[su2_1] tangent in su2_cubed: symmetric 6x6 block on factors 2,3
        // with trace 0 -> 20 dims
        let p = presets::preset("su2_cubed").unwrap();
        let cat = &p.catalog;
        let basis = cell_tangent_basis(cat.algebra(), cat.item(1), cat.generators(), true);
        assert_eq!(basis.len(), 20);
        // su3_flag: the root-u(2) draft cell is a single point
        let p3 = presets::preset("su3_flag").unwrap();
        let basis3 = cell_tangent_basis(p3.catalog.algebra(), p3.catalog.item(0), p3.catalog.generators(), true);
        assert!(basis3.is_empty());
        // but the h-cell is 2-dimensional
        let basis_h = cell_tangent_basis(p3.catalog.algebra(), p3.catalog.h(), p3.catalog.generators(), true);
        assert_eq!(basis_h.len(), 2);
    }

    #[test]
    fn oracle_triangle_smoke() {
        let g = presets::su2_epsilon();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid: Vec<f64> = (0..9).map(|i| 5.0 * i as f64).collect();
        let mut seen_true = 0;
        let mut seen_false = 0;
        for _ in 0..100 {
            let a = random_trace_one_psd(&g, &mut rng);
            let c3 = is_filtering(&a);
            let lim = is_filtering_by_limit(&a, &grid);
            let (mnr, _) = minor_filtering_verdict(&a);
            assert_eq!(c3, lim);
            assert_eq!(c3, mnr);
            if c3 {
                seen_true += 1;
            } else {
                seen_false += 1;
            }
        }
        assert!(seen_true > 5 && seen_false > 5, "degenerate sampling");
    }
}

/// Worst filtering margin of an operator: the most negative derived
/// eigenvalue lambda_i + lambda_j - lambda_k over the supported bracket
/// triples (nonnegative margins mean filtering).
pub fn filtering_margin(a: &SymOp) -> f64 {
    let (gvals, comps) = derived_components(a);
    let g = a.parent();
    let c_tol = g.tol() * g.bracket_norm().max(1.0);
    gvals
        .iter()
        .zip(&comps)
        .filter(|&(_, c)| c.abs() > c_tol)
        .map(|(&gv, _)| gv)
        .fold(f64::INFINITY, f64::min)
}
