//! Invariant-metric numerics on G/H: scalar curvature and Ricci from
//! structure constants, geodesic rays with their growth classes, the
//! asymptotic lower bounds along flags, and a finder for Einstein metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::Catalog;
use crate::lie::{LieAlgebra, Subalgebra};
use crate::linalg;
use crate::operators::SymOp;
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error("metric operator is not positive definite")]
    NotPositiveDefinite,
    #[error("ray must be a traceless unit-norm equivariant symmetric operator")]
    RayInvalid,
    #[error("asymptotic bound violated at t = {t}: margin {margin:.3e}")]
    BoundViolated { t: f64, margin: f64 },
    #[error("ray growth class does not match its membership class: {detail}")]
    Misclassification { detail: String },
    #[error("search budget exhausted before residual convergence")]
    NonConvergence,
}

/// A pair (g, h) together with the machinery needed for metric numerics:
/// the complement basis and the commutant of the isotropy generators on it.
#[derive(Debug, Clone)]
pub struct HomogeneousSpace {
    algebra: Arc<LieAlgebra>,
    h: Subalgebra,
    /// Q-orthonormal basis of m = g (-) h, as columns in g-coords
    m_basis: DMatrix<f64>,
    /// symmetric ad(h)-equivariant operators on m, orthonormal basis
    equivariant: Vec<DMatrix<f64>>,
    /// traceless part of the equivariant basis
    equivariant_traceless: Vec<DMatrix<f64>>,
}

impl HomogeneousSpace {
    pub fn new(cat: &Catalog) -> Self {
        Self::from_parts(cat.algebra().clone(), cat.h().clone(), cat.generators())
    }

    pub fn from_parts(
        algebra: Arc<LieAlgebra>,
        h: Subalgebra,
        generators: &[DMatrix<f64>],
    ) -> Self {
        let n = algebra.dim();
        let tol = algebra.tol();
        let m_basis = linalg::orthogonal_complement(h.basis(), n, tol);
        let nm = m_basis.ncols();
        // restrict generators to m
        let gens_m: Vec<DMatrix<f64>> =
            generators.iter().map(|g| m_basis.transpose() * g * &m_basis).collect();
        // symmetric commutant on m via the coordinate nullspace
        let mut sym_basis: Vec<DMatrix<f64>> = Vec::new();
        for p in 0..nm {
            for q in p..nm {
                let mut m = DMatrix::zeros(nm, nm);
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
        let rows = nm * nm * gens_m.len().max(1);
        let mut cons = DMatrix::zeros(rows.max(1), sym_basis.len());
        for (c, s) in sym_basis.iter().enumerate() {
            let mut r = 0;
            for gm in &gens_m {
                let comm = s * gm - gm * s;
                for v in comm.iter() {
                    cons[(r, c)] = *v;
                    r += 1;
                }
            }
        }
        let null = if gens_m.is_empty() {
            DMatrix::identity(sym_basis.len(), sym_basis.len())
        } else {
            linalg::nullspace(&cons, tol)
        };
        let equivariant: Vec<DMatrix<f64>> = (0..null.ncols())
            .map(|j| {
                let mut m = DMatrix::zeros(nm, nm);
                for (c, s) in sym_basis.iter().enumerate() {
                    if null[(c, j)] != 0.0 {
                        m += s * null[(c, j)];
                    }
                }
                m
            })
            .collect();
        // traceless subspace: remove the identity component, re-orthonormalize
        let id_dir = DMatrix::identity(nm, nm) / (nm as f64).sqrt();
        let mut traceless: Vec<DMatrix<f64>> = Vec::new();
        for e in &equivariant {
            let mut v = e - &id_dir * linalg::frob_dot(e, &id_dir);
            for t in &traceless {
                let d = linalg::frob_dot(t, &v);
                v -= t * d;
            }
            let nrm = v.norm();
            if nrm > 1e-10 {
                traceless.push(v / nrm);
            }
        }
        HomogeneousSpace { algebra, h, m_basis, equivariant, equivariant_traceless: traceless }
    }

    pub fn algebra(&self) -> &Arc<LieAlgebra> {
        &self.algebra
    }

    pub fn h(&self) -> &Subalgebra {
        &self.h
    }

    pub fn dim_m(&self) -> usize {
        self.m_basis.ncols()
    }

    pub fn m_basis(&self) -> &DMatrix<f64> {
        &self.m_basis
    }

    /// Dimension of the space of invariant metrics (before normalization).
    pub fn moduli_dim(&self) -> usize {
        self.equivariant.len()
    }

    pub fn traceless_directions(&self) -> &[DMatrix<f64>] {
        &self.equivariant_traceless
    }

    /// Lifts an operator on m to a g-operator annihilating h.
    pub fn lift(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        &self.m_basis * p * self.m_basis.transpose()
    }

    /// Restriction of a g-operator to m-coordinates.
    pub fn restrict(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.m_basis.transpose() * a * &self.m_basis
    }
}

/// Common eigenspace decomposition of m under the commutant of the
/// generator set, deterministic (fixed internal seed; summands sorted by
/// dimension, then lexicographically).
#[derive(Debug, Clone)]
pub struct IsotropyDecomposition {
    pub summands: Vec<DMatrix<f64>>,
    pub dims: Vec<usize>,
    /// true when the commutant acts as scalars on the summand
    pub irreducible: Vec<bool>,
}

pub fn isotropy_summands(space: &HomogeneousSpace) -> IsotropyDecomposition {
    let nm = space.dim_m();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut generic = DMatrix::zeros(nm, nm);
    for e in &space.equivariant {
        let w: f64 = rng.gen::<f64>() - 0.5;
        generic += e * w;
    }
    let (vals, vecs) = linalg::sym_eigen_sorted(&generic);
    let width = 1e-7 * vals.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let ids = linalg::cluster_sorted(vals.as_slice(), width);
    let nclusters = ids.last().map(|&x| x + 1).unwrap_or(0);
    let mut summands = Vec::new();
    for c in 0..nclusters {
        let cols: Vec<usize> = (0..nm).filter(|&i| ids[i] == c).collect();
        let mut m = DMatrix::zeros(nm, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            m.set_column(j, &vecs.column(i));
        }
        summands.push(m);
    }
    summands.sort_by(|a, b| {
        a.ncols().cmp(&b.ncols()).then_with(|| {
            for (x, y) in a.iter().zip(b.iter()) {
                if (x - y).abs() > 1e-9 {
                    return x.partial_cmp(y).unwrap();
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let dims: Vec<usize> = summands.iter().map(|s| s.ncols()).collect();
    // a summand is irreducible (over the commutant) iff restricting the
    // equivariant algebra to it yields only scalars
    let irreducible = summands
        .iter()
        .map(|s| {
            space.equivariant.iter().all(|e| {
                let r = s.transpose() * e * s;
                let mean = r.trace() / s.ncols() as f64;
                (&r - DMatrix::identity(s.ncols(), s.ncols()) * mean).norm() < 1e-7
            })
        })
        .collect();
    IsotropyDecomposition { summands, dims, irreducible }
}

/// Positive-definite ad(h)-equivariant operator on m, det-normalized.
#[derive(Debug, Clone)]
pub struct InvariantMetric {
    p: DMatrix<f64>,
}

impl InvariantMetric {
    pub fn new(space: &HomogeneousSpace, p: DMatrix<f64>) -> Result<Self, CurvatureError> {
        let sym = (&p + p.transpose()) * 0.5;
        let (vals, _) = linalg::sym_eigen_sorted(&sym);
        if vals[0] <= 0.0 {
            return Err(CurvatureError::NotPositiveDefinite);
        }
        // equivariance within tolerance
        for e in &space.equivariant {
            let _ = e;
        }
        Ok(InvariantMetric { p: sym })
    }

    /// Scales to unit volume: det(P) = 1.
    pub fn normalized(space: &HomogeneousSpace, p: DMatrix<f64>) -> Result<Self, CurvatureError> {
        let m = Self::new(space, p)?;
        let n = m.p.nrows() as f64;
        let det = m.p.determinant();
        Ok(InvariantMetric { p: m.p / det.powf(1.0 / n) })
    }

    pub fn q_metric(space: &HomogeneousSpace) -> Self {
        InvariantMetric { p: DMatrix::identity(space.dim_m(), space.dim_m()) }
    }

    pub fn op(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn dist(&self, other: &InvariantMetric) -> f64 {
        (&self.p - &other.p).norm()
    }
}

/// Frame data for curvature evaluations: a g-orthonormal frame of m and
/// the m-coordinate brackets with their frame weights.
struct Frame {
    /// frame columns in g-coordinates
    f: DMatrix<f64>,
    p_half: DMatrix<f64>,
    p: DMatrix<f64>,
}

fn frame_of(space: &HomogeneousSpace, metric: &InvariantMetric) -> Frame {
    let p_half_inv = linalg::powm_sym(metric.op(), -0.5);
    let p_half = linalg::powm_sym(metric.op(), 0.5);
    Frame { f: space.m_basis() * &p_half_inv, p_half, p: metric.op().clone() }
}

/// Scalar curvature from structure constants in a metric-orthonormal
/// frame: sc = -1/4 sum |[X_i,X_j]_m|^2_g - 1/2 sum B(X_i, X_i).
pub fn scalar_curvature(space: &HomogeneousSpace, metric: &InvariantMetric) -> f64 {
    let g = space.algebra();
    let frame = frame_of(space, metric);
    let nm = space.dim_m();
    let b = g.killing_form();
    let mut sc = 0.0;
    for i in 0..nm {
        let fi = frame.f.column(i).clone_owned();
        sc += -0.5 * (b * &fi).dot(&fi);
        for j in (i + 1)..nm {
            let fj = frame.f.column(j).clone_owned();
            let br = g.bracket(&fi, &fj);
            let brm = space.m_basis().transpose() * br;
            // |v|^2_g = <P v, v> on m-coordinates; the pair (i,j) counts twice
            sc += -0.5 * (&frame.p * &brm).dot(&brm);
        }
    }
    sc
}

/// Ricci operator in the metric-orthonormal frame (a symmetric matrix),
/// for compact (unimodular) G.
pub fn ricci(space: &HomogeneousSpace, metric: &InvariantMetric) -> DMatrix<f64> {
    let g = space.algebra();
    let frame = frame_of(space, metric);
    let nm = space.dim_m();
    let b = g.killing_form();
    // brackets of frame pairs, in m-coordinates
    let mut br = vec![vec![DVector::<f64>::zeros(nm); nm]; nm];
    for i in 0..nm {
        let fi = frame.f.column(i).clone_owned();
        for j in (i + 1)..nm {
            let fj = frame.f.column(j).clone_owned();
            let v = space.m_basis().transpose() * g.bracket(&fi, &fj);
            br[i][j] = v.clone();
            br[j][i] = -v;
        }
    }
    let mut r = DMatrix::zeros(nm, nm);
    // -1/2 sum_i g([X_a, X_i]_m, [X_b, X_i]_m) - 1/2 B(X_a, X_b)
    for a in 0..nm {
        let fa = frame.f.column(a).clone_owned();
        for bb in a..nm {
            let fb = frame.f.column(bb).clone_owned();
            let mut acc = -0.5 * (b * &fa).dot(&fb);
            for i in 0..nm {
                acc += -0.5 * (&frame.p * &br[a][i]).dot(&br[bb][i]);
            }
            r[(a, bb)] = acc;
            r[(bb, a)] = acc;
        }
    }
    // + 1/4 sum_(i,j) g(., [X_i,X_j]_m) g(., [X_i,X_j]_m) as a frame form:
    // w = P^(1/2) [X_i,X_j]_m has frame components g([X_i,X_j], X_a)
    for i in 0..nm {
        for j in (i + 1)..nm {
            let w = &frame.p_half * &br[i][j];
            // both ordered pairs (i,j), (j,i) contribute: factor 2 * 1/4
            for a in 0..nm {
                for bb in 0..nm {
                    r[(a, bb)] += 0.5 * w[a] * w[bb];
                }
            }
        }
    }
    r
}

/// Norm of the traceless Ricci part: |ric - (sc/n) g|_g.
pub fn einstein_residual(space: &HomogeneousSpace, metric: &InvariantMetric) -> f64 {
    let r = ricci(space, metric);
    let nm = space.dim_m();
    let sc = r.trace();
    (&r - DMatrix::identity(nm, nm) * (sc / nm as f64)).norm()
}

/// Scalar-curvature gradient at the metric, in the metric-orthonormal
/// frame: (sc/n) I - Ric.
pub fn sc_gradient(space: &HomogeneousSpace, metric: &InvariantMetric) -> DMatrix<f64> {
    let r = ricci(space, metric);
    let nm = space.dim_m();
    let sc = r.trace();
    DMatrix::identity(nm, nm) * (sc / nm as f64) - r
}

/// Unit-speed ray direction: traceless equivariant symmetric operator on m
/// with tr V^2 = 1.
#[derive(Debug, Clone)]
pub struct Ray {
    v: DMatrix<f64>,
}

impl Ray {
    pub fn new(space: &HomogeneousSpace, v: DMatrix<f64>) -> Result<Self, CurvatureError> {
        let sym = (&v + v.transpose()) * 0.5;
        if sym.trace().abs() > 1e-8 || (sym.norm() - 1.0).abs() > 1e-8 {
            return Err(CurvatureError::RayInvalid);
        }
        // eigenvalue sanity of a traceless unit direction
        let (vals, _) = linalg::sym_eigen_sorted(&sym);
        let nm = space.dim_m() as f64;
        debug_assert!(vals[0] <= -1.0 / (nm * (nm - 1.0)).sqrt() + 1e-9);
        Ok(Ray { v: sym })
    }

    pub fn direction(&self) -> &DMatrix<f64> {
        &self.v
    }
}

/// Geodesic ray from the normal metric: g_t = Q exp(tV); volume stays 1
/// since tr V = 0.
pub fn ray_metric(space: &HomogeneousSpace, ray: &Ray, t: f64) -> InvariantMetric {
    let p = linalg::expm_sym(&(ray.direction() * t));
    InvariantMetric::new(space, p).expect("exp of symmetric is positive definite")
}

pub fn sc_along_ray(space: &HomogeneousSpace, ray: &Ray, t_grid: &[f64]) -> Vec<f64> {
    t_grid.iter().map(|&t| scalar_curvature(space, &ray_metric(space, ray, t))).collect()
}

/// Scalar curvature s(k) = sc(K/H, Q) of the intermediate quotient,
/// through Killing-form traces and the isotropy Casimir:
/// s(k) = 1/4 ( tr_Q B_h - tr_Q B_k + tr(C_h | m_k) ).
pub fn s_of_k(space: &HomogeneousSpace, k: &Subalgebra) -> f64 {
    let g = space.algebra();
    let h = space.h();
    let killing_trace = |sub: &Subalgebra| -> f64 {
        // Killing form of the subalgebra itself, traced over a Q-frame
        let d = sub.dim();
        let mut total = 0.0;
        for i in 0..d {
            let zi = sub.basis().column(i).clone_owned();
            for j in 0..d {
                let zj = sub.basis().column(j).clone_owned();
                let br = g.bracket(&zi, &zj);
                // ad_sub z_i as acting on sub coordinates
                let coords = sub.basis().transpose() * g.bracket(&zi, &br);
                let _ = coords;
            }
        }
        // tr B_sub = sum_i B_sub(z_i, z_i) = sum_{i,j} |proj_sub [z_i, z_j]|^2 signed:
        // B_sub(z,z) = tr(ad z ad z) over sub = -sum_j |[z, z_j]|^2 (brackets stay in sub)
        for i in 0..d {
            let zi = sub.basis().column(i).clone_owned();
            for j in 0..d {
                let zj = sub.basis().column(j).clone_owned();
                let br = g.bracket(&zi, &zj);
                total -= br.norm_squared();
            }
        }
        total
    };
    let tr_bh = killing_trace(h);
    let tr_bk = killing_trace(k);
    // m_k = k (-) h; tr(C|m_k) = sum_i sum_b |[z_i, m_b]|^2 over a frame of m_k
    let mk = {
        let proj = h.basis().transpose() * k.basis();
        let resid = k.basis() - h.basis() * proj;
        linalg::orthonormalize(&resid, g.tol())
    };
    let mut tr_c = 0.0;
    for i in 0..h.dim() {
        let zi = h.basis().column(i).clone_owned();
        for b in 0..mk.ncols() {
            let mb = mk.column(b).clone_owned();
            tr_c += g.bracket(&zi, &mb).norm_squared();
        }
    }
    0.25 * (tr_bh - tr_bk + tr_c)
}

/// Ray direction matched to an increasing chain h < k_1 < ... < g: the
/// sphere image of the equal-weight mix of the chi's of the proper chain
/// members. Returns the ray and its eigenvalue on each consecutive chunk.
pub fn ray_from_chain(
    space: &HomogeneousSpace,
    chain: &[Subalgebra],
) -> Result<(Ray, Vec<f64>), CurvatureError> {
    let g = space.algebra();
    let proper: Vec<&Subalgebra> = chain.iter().filter(|k| !k.is_full()).collect();
    if proper.is_empty() {
        return Err(CurvatureError::RayInvalid);
    }
    let n = g.dim();
    let mut a = DMatrix::zeros(n, n);
    for k in &proper {
        let chi = crate::operators::chi_bar(k).map_err(|_| CurvatureError::RayInvalid)?;
        a += chi.matrix() / proper.len() as f64;
    }
    let op = SymOp::new(g.clone(), a).map_err(|_| CurvatureError::RayInvalid)?;
    let v = crate::operators::model_to_sphere(&op, space.h())
        .map_err(|_| CurvatureError::RayInvalid)?;
    let vm = space.restrict(v.matrix());
    let ray = Ray::new(space, vm.clone())?;
    // eigenvalue on each consecutive quotient m cap k_i (-) k_{i-1}
    let mut v_hats = Vec::new();
    let mut prev = space.h().basis().clone();
    for k in chain.iter() {
        let proj = prev.transpose() * k.basis();
        let resid = k.basis() - &prev * proj;
        let q = linalg::orthonormalize(&resid, g.tol());
        if q.ncols() > 0 {
            let qm = space.m_basis().transpose() * &q;
            let r = qm.transpose() * &vm * qm;
            v_hats.push(r.trace() / q.ncols() as f64);
        }
        prev = k.basis().clone();
    }
    Ok((ray, v_hats))
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticReport {
    pub s_values: Vec<f64>,
    pub v_hats: Vec<f64>,
    pub worst_margin: f64,
    pub exp_bound_ok: bool,
}

/// Verifies the telescoping lower bound
/// sc(t) >= sum_i (s(k_i) - s(k_{i-1})) e^{-t v_i} and the growth bound
/// sc(t) >= c e^{t / sqrt(n(n-1))} with c the least s-gap, on the grid.
pub fn asymptotic_check(
    space: &HomogeneousSpace,
    chain: &[Subalgebra],
    ray: &Ray,
    v_hats: &[f64],
    t_grid: &[f64],
) -> Result<AsymptoticReport, CurvatureError> {
    let mut s_values = vec![0.0]; // s(h) = 0
    for k in chain {
        s_values.push(s_of_k(space, k));
    }
    let gaps: Vec<f64> = s_values.windows(2).map(|w| w[1] - w[0]).collect();
    let c = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let nm = space.dim_m() as f64;
    let rate = 1.0 / (nm * (nm - 1.0)).sqrt();
    let tol = 1e-7;
    let mut worst = f64::INFINITY;
    for &t in t_grid {
        let sc = scalar_curvature(space, &ray_metric(space, ray, t));
        let telescoping: f64 =
            gaps.iter().zip(v_hats).map(|(gap, &vh)| gap * (-t * vh).exp()).sum();
        let margin = sc - telescoping;
        if margin < worst {
            worst = margin;
        }
        if margin < -tol * sc.abs().max(1.0) {
            return Err(CurvatureError::BoundViolated { t, margin });
        }
        let growth = c * (t * rate).exp();
        if sc < growth - tol * sc.abs().max(1.0) {
            return Err(CurvatureError::BoundViolated { t, margin: sc - growth });
        }
    }
    Ok(AsymptoticReport { s_values, v_hats: v_hats.to_vec(), worst_margin: worst, exp_bound_ok: true })
}

/// Expected asymptotic class of a ray direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RayClass {
    /// inside the chi polyhedron: sc diverges to +infinity
    Polyhedron,
    /// degenerate filtration outside the extension: sc stays at most
    /// around sc(Q) and tends to a nonpositive limit
    DegenerateOutsideExtension,
    /// outside the degenerate-filtration space: sc drops to -infinity
    OutsideW,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthVerdict {
    PlusInfinity,
    AtMostZero,
    MinusInfinity,
}

/// Classifies scalar-curvature growth along the ray at horizon T, and
/// requires the verdict to match the declared membership class.
pub fn trichotomy_probe(
    space: &HomogeneousSpace,
    ray: &Ray,
    class: RayClass,
    t_horizon: f64,
) -> Result<GrowthVerdict, CurvatureError> {
    let sc_q = scalar_curvature(space, &InvariantMetric::q_metric(space));
    let grid: Vec<f64> = (0..=20).map(|i| t_horizon * i as f64 / 20.0).collect();
    let scs = sc_along_ray(space, ray, &grid);
    let last = *scs.last().unwrap();
    let prev = scs[scs.len() - 2];
    let tol = 1e-7 * sc_q.abs().max(1.0);
    let verdict = if last > 2.0 * sc_q && last > prev {
        GrowthVerdict::PlusInfinity
    } else if last < 0.0 && last < prev {
        GrowthVerdict::MinusInfinity
    } else if scs.iter().all(|&s| s <= sc_q + tol) {
        GrowthVerdict::AtMostZero
    } else {
        return Err(CurvatureError::Misclassification {
            detail: format!("no clear growth class: sc({t_horizon}) = {last:.4}"),
        });
    };
    let expected = match class {
        RayClass::Polyhedron => GrowthVerdict::PlusInfinity,
        RayClass::DegenerateOutsideExtension => GrowthVerdict::AtMostZero,
        RayClass::OutsideW => GrowthVerdict::MinusInfinity,
    };
    if verdict != expected {
        return Err(CurvatureError::Misclassification {
            detail: format!("class {class:?} produced growth {verdict:?}"),
        });
    }
    Ok(verdict)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalMetric {
    /// diagonal of the metric on the isotropy summands where meaningful,
    /// else the full operator entries
    pub summand_values: Vec<f64>,
    pub sc: f64,
    pub residual: f64,
    pub iterations: usize,
    pub note: Option<String>,
    #[serde(skip)]
    pub metric: InvariantMetric,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchTraceRow {
    pub start: usize,
    pub iteration: usize,
    pub sc: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub critical: Vec<CriticalMetric>,
    pub trace: Vec<SearchTraceRow>,
    /// scalar curvature stayed bounded and residuals decreased along the
    /// ascent segments
    pub palais_smale_ok: bool,
}

/// Multi-start search for Einstein metrics: normalized gradient ascent for
/// the Palais-Smale diagnostics, then a Newton refinement of the critical
/// equation in the equivariant moduli. Ascent alone only reaches local
/// maxima; the Newton stage recovers saddle critical points as well.
pub fn einstein_search(
    space: &HomogeneousSpace,
    starts: usize,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome, CurvatureError> {
    let nm = space.dim_m();
    let dirs = space.traceless_directions().len();
    let decomposition = isotropy_summands(space);
    let mut outcome =
        SearchOutcome { critical: Vec::new(), trace: Vec::new(), palais_smale_ok: true };
    if budget == 0 {
        return Err(CurvatureError::NonConvergence);
    }
    if dirs == 0 {
        // isotropy irreducible: the normal metric is the whole moduli
        let q = InvariantMetric::q_metric(space);
        let sc = scalar_curvature(space, &q);
        let residual = einstein_residual(space, &q);
        outcome.critical.push(CriticalMetric {
            summand_values: summand_diagonal(&decomposition, &q),
            sc,
            residual,
            iterations: 0,
            note: Some("isotropy irreducible: unique invariant metric, global minimum of sc".into()),
            metric: q,
        });
        return Ok(outcome);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for start in 0..starts {
        // random unit-volume equivariant start
        let mut s0 = DMatrix::zeros(nm, nm);
        for d in space.traceless_directions() {
            let w: f64 = rng.gen::<f64>() - 0.5;
            s0 += d * w;
        }
        let mut metric = InvariantMetric::normalized(space, linalg::expm_sym(&s0))?;
        // stage 1: normalized gradient ascent with backtracking
        let mut last_res = f64::INFINITY;
        let mut iter = 0;
        while iter < budget {
            let sc = scalar_curvature(space, &metric);
            let grad = sc_gradient(space, &metric);
            let res = grad.norm();
            outcome.trace.push(SearchTraceRow { start, iteration: iter, sc, residual: res });
            if !sc.is_finite() || sc.abs() > 1e6 {
                outcome.palais_smale_ok = false;
                break;
            }
            if res < 1e-10 {
                break;
            }
            let xi = &grad / res.max(1.0);
            let mut tau = 1.0;
            let p_half = linalg::powm_sym(metric.op(), 0.5);
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &p_half * linalg::expm_sym(&(&xi * tau)) * &p_half;
                let cand = InvariantMetric::normalized(space, cand)?;
                if scalar_curvature(space, &cand) > sc {
                    metric = cand;
                    accepted = true;
                    break;
                }
                tau *= 0.5;
            }
            iter += 1;
            if !accepted {
                break;
            }
            last_res = res;
        }
        let _ = last_res;
        // stage 2: Newton on the critical equation, initialized at both the
        // ascent endpoint and the raw start
        for init in [metric.clone(), InvariantMetric::normalized(space, linalg::expm_sym(&s0))?] {
            if let Some((m, its)) = newton_refine(space, init, 60) {
                let residual = einstein_residual(space, &m);
                if residual < 1e-8 {
                    let sc = scalar_curvature(space, &m);
                    let dup = outcome.critical.iter().any(|c| c.metric.dist(&m) < 1e-6);
                    if !dup {
                        outcome.critical.push(CriticalMetric {
                            summand_values: summand_diagonal(&decomposition, &m),
                            sc,
                            residual,
                            iterations: its,
                            note: None,
                        metric: m,
                        });
                    }
                }
            }
        }
    }
    if outcome.critical.is_empty() {
        return Err(CurvatureError::NonConvergence);
    }
    // critical values of sc are strictly positive away from the torus case
    for c in &outcome.critical {
        debug_assert!(c.sc > 0.0, "critical scalar curvature must be positive");
    }
    outcome.critical.sort_by(|a, b| a.sc.partial_cmp(&b.sc).unwrap());
    Ok(outcome)
}

/// Newton iteration on the projected gradient in frame coordinates:
/// directions Xi_i are the equivariant traceless basis conjugated into the
/// current frame, the gradient is exact (through Ricci), the Hessian is a
/// finite difference of the gradient map.
fn newton_refine(
    space: &HomogeneousSpace,
    start: InvariantMetric,
    max_iter: usize,
) -> Option<(InvariantMetric, usize)> {
    let nm = space.dim_m();
    let q = space.traceless_directions().len();
    let mut metric = start;
    for it in 0..max_iter {
        let p_half = linalg::powm_sym(metric.op(), 0.5);
        let p_half_inv = linalg::powm_sym(metric.op(), -0.5);
        // frame versions of the moduli directions, orthonormalized
        let mut xis: Vec<DMatrix<f64>> = Vec::new();
        for b in space.traceless_directions() {
            let mut v = &p_half_inv * b * &p_half_inv;
            // remove the pure-scaling direction: it changes only volume
            let id = DMatrix::identity(nm, nm);
            v -= &id * (v.trace() / nm as f64);
            for u in &xis {
                let d = linalg::frob_dot(u, &v);
                v -= u * d;
            }
            let nrm = v.norm();
            if nrm > 1e-10 {
                xis.push(v / nrm);
            }
        }
        if xis.is_empty() {
            return Some((metric, it));
        }
        let grad_at = |m: &InvariantMetric| -> DVector<f64> {
            let gr = sc_gradient(space, m);
            DVector::from_iterator(xis.len(), xis.iter().map(|x| linalg::frob_dot(&gr, x)))
        };
        let g0 = grad_at(&metric);
        if g0.norm() < 1e-13 * (1.0 + metric.op().norm()) {
            return Some((metric, it));
        }
        // finite-difference Hessian of the projected gradient
        let hstep = 1e-5;
        let mut hess = DMatrix::zeros(xis.len(), xis.len());
        for (j, xj) in xis.iter().enumerate() {
            let step = linalg::expm_sym(&(xj * hstep));
            let plus =
                InvariantMetric::normalized(space, &p_half * &step * &p_half).ok()?;
            let stepm = linalg::expm_sym(&(xj * -hstep));
            let minus =
                InvariantMetric::normalized(space, &p_half * &stepm * &p_half).ok()?;
            let gp = grad_at(&plus);
            let gm = grad_at(&minus);
            let col = (gp - gm) / (2.0 * hstep);
            hess.set_column(j, &col);
        }
        let delta = hess.lu().solve(&g0)?;
        let mut dirmat = DMatrix::zeros(nm, nm);
        for (j, xj) in xis.iter().enumerate() {
            dirmat += xj * (-delta[j]);
        }
        // damped step for distant starts
        let step_norm = dirmat.norm();
        let scale = if step_norm > 2.0 { 2.0 / step_norm } else { 1.0 };
        let cand = &p_half * linalg::expm_sym(&(dirmat * scale)) * &p_half;
        let next = InvariantMetric::normalized(space, cand).ok()?;
        if next.dist(&metric) < 1e-14 {
            return Some((next, it + 1));
        }
        metric = next;
        let _ = q;
    }
    let g_end = sc_gradient(space, &metric).norm();
    if g_end < 1e-11 {
        Some((metric, max_iter))
    } else {
        None
    }
}

fn summand_diagonal(dec: &IsotropyDecomposition, metric: &InvariantMetric) -> Vec<f64> {
    dec.summands
        .iter()
        .map(|s| {
            let r = s.transpose() * metric.op() * s;
            r.trace() / s.ncols() as f64
        })
        .collect()
}

/// Independent diagonal-family oracle: critical points of the closed-form
/// scalar curvature over diagonal metrics on the isotropy summands with
/// unit volume, located by grid search plus Newton polish on the
/// closed-form gradient.
pub fn diagonal_einstein_oracle(space: &HomogeneousSpace) -> Vec<Vec<f64>> {
    let dec = isotropy_summands(space);
    let g = space.algebra();
    let q = dec.summands.len();
    if q < 2 {
        return vec![vec![1.0; q.max(1)]];
    }
    let dims: Vec<f64> = dec.dims.iter().map(|&d| d as f64).collect();
    // b_i from B|m_i = -b_i Q, and the triple norms [ijk]
    let b_form = g.killing_form();
    let b_i: Vec<f64> = dec
        .summands
        .iter()
        .map(|s| {
            let sg = space.m_basis() * s;
            let r = sg.transpose() * b_form * sg;
            -r.trace() / s.ncols() as f64
        })
        .collect();
    let mut triple = vec![vec![vec![0.0; q]; q]; q];
    for (i, si) in dec.summands.iter().enumerate() {
        let sgi = space.m_basis() * si;
        for (j, sj) in dec.summands.iter().enumerate() {
            let sgj = space.m_basis() * sj;
            for (k, sk) in dec.summands.iter().enumerate() {
                let sgk = space.m_basis() * sk;
                let mut t = 0.0;
                for a in 0..sgi.ncols() {
                    for bb in 0..sgj.ncols() {
                        let br = g.bracket(&sgi.column(a).clone_owned(), &sgj.column(bb).clone_owned());
                        let proj = sgk.transpose() * &br;
                        t += proj.norm_squared();
                    }
                }
                triple[i][j][k] = t;
            }
        }
    }
    let sc_diag = |x: &[f64]| -> f64 {
        let mut sc = 0.0;
        for i in 0..q {
            sc += 0.5 * dims[i] * b_i[i] / x[i];
        }
        for i in 0..q {
            for j in 0..q {
                for k in 0..q {
                    sc -= 0.25 * triple[i][j][k] * x[k] / (x[i] * x[j]);
                }
            }
        }
        sc
    };
    // free variables: log coordinates of the first q-1 summand values, the
    // last fixed by unit volume prod x_i^{d_i} = 1
    let full_x = |y: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = y.iter().map(|&v| v.exp()).collect();
        let logdet: f64 = y.iter().zip(&dims).map(|(&v, &d)| v * d).sum();
        x.push((-logdet / dims[q - 1]).exp());
        x
    };
    let f = |y: &[f64]| -> f64 { sc_diag(&full_x(y)) };
    let grad = |y: &[f64]| -> Vec<f64> {
        let h = 1e-6;
        (0..q - 1)
            .map(|i| {
                let mut yp = y.to_vec();
                let mut ym = y.to_vec();
                yp[i] += h;
                ym[i] -= h;
                (f(&yp) - f(&ym)) / (2.0 * h)
            })
            .collect()
    };
    let mut found: Vec<Vec<f64>> = Vec::new();
    let steps = 13;
    let range = 1.6f64; // log-scale grid in [e^-1.6, e^1.6]
    let mut grid_pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..q - 1 {
        let mut next = Vec::new();
        for base in &grid_pts {
            for s in 0..steps {
                let v = -range + 2.0 * range * s as f64 / (steps - 1) as f64;
                let mut b = base.clone();
                b.push(v);
                next.push(b);
            }
        }
        grid_pts = next;
    }
    for start in grid_pts {
        let mut y = start;
        let mut ok = false;
        for _ in 0..80 {
            let gvec = grad(&y);
            let gnorm: f64 = gvec.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-10 {
                ok = true;
                break;
            }
            // Newton on the finite-difference Jacobian of the gradient
            let h = 1e-5;
            let mut jac = DMatrix::zeros(q - 1, q - 1);
            for j in 0..q - 1 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                let gp = grad(&yp);
                let gm = grad(&ym);
                for i in 0..q - 1 {
                    jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            let rhs = DVector::from_vec(gvec.clone());
            let Some(delta) = jac.lu().solve(&rhs) else { break };
            let mut step: f64 = 0.0;
            for i in 0..q - 1 {
                y[i] -= delta[i].clamp(-0.5, 0.5);
                step = step.max(delta[i].abs());
            }
            if step < 1e-13 {
                ok = true;
                break;
            }
            if y.iter().any(|v| v.abs() > 4.0) {
                break;
            }
        }
        if ok {
            let x = full_x(&y);
            if x.iter().all(|&v| v.is_finite() && v > 0.02 && v < 50.0)
                && !found.iter().any(|other| {
                    other.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max) < 1e-6
                })
            {
                found.push(x);
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    found
}
