//! Compact Lie algebras given by structure constants in a Q-orthonormal
//! basis, with subalgebra predicates, generation, and toral invariants.
//!
//! All data is stored relative to a fixed basis that is orthonormal for
//! an ad-invariant inner product Q, so Q is the identity matrix and
//! total antisymmetry of the structure tensor certifies ad-invariance.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

/// Default numeric tolerance for all predicates.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LieError {
    #[error("antisymmetry violated at ({i},{j},{k}): residual {residual:.3e}")]
    AntisymmetryViolation { i: usize, j: usize, k: usize, residual: f64 },
    #[error("Jacobi identity violated at ({i},{j},{k}): residual {residual:.3e}")]
    JacobiViolation { i: usize, j: usize, k: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("subspace is not bracket-closed (defect {defect:.3e})")]
    NotClosed { defect: f64 },
    #[error("subalgebras are not nested")]
    NotNested,
    #[error("subalgebras have different parent algebras")]
    ParentMismatch,
    #[error("structure tensor is not cubic or tolerance is not positive")]
    BadInput,
}

/// Compact Lie algebra: structure tensor `C[i][j][k]` meaning
/// `[e_i, e_j] = sum_k C[i][j][k] e_k` in a Q-orthonormal basis.
#[derive(Debug, Clone)]
pub struct LieAlgebra {
    dim: usize,
    /// dense tensor, index `i*n*n + j*n + k`
    c: Vec<f64>,
    /// nonzero entries with i < j, for fast brackets
    nnz: Vec<(usize, usize, usize, f64)>,
    /// cached adjoint matrices ad(e_i)
    ads: Vec<DMatrix<f64>>,
    /// cached Killing form matrix
    killing: DMatrix<f64>,
    tol: f64,
}

impl LieAlgebra {
    /// Validates antisymmetry, total antisymmetry and the Jacobi identity,
    /// then builds the algebra with its cached adjoint data.
    pub fn new(dim: usize, c: Vec<f64>, tol: f64) -> Result<Arc<Self>, LieError> {
        if tol <= 0.0 || c.len() != dim * dim * dim {
            return Err(LieError::BadInput);
        }
        let at = |i: usize, j: usize, k: usize| c[i * dim * dim + j * dim + k];
        // antisymmetry in (i,j) and in (j,k): together, total antisymmetry
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let r1 = (at(i, j, k) + at(j, i, k)).abs();
                    let r2 = (at(i, j, k) + at(i, k, j)).abs();
                    let residual = r1.max(r2);
                    if residual > tol {
                        return Err(LieError::AntisymmetryViolation { i, j, k, residual });
                    }
                }
            }
        }
        let mut nnz = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                for k in 0..dim {
                    let v = at(i, j, k);
                    if v != 0.0 {
                        nnz.push((i, j, k, v));
                    }
                }
            }
        }
        let mut ads = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut m = DMatrix::zeros(dim, dim);
            for j in 0..dim {
                for k in 0..dim {
                    m[(k, j)] = at(i, j, k);
                }
            }
            ads.push(m);
        }
        // Jacobi via ad([x,y]) = [ad x, ad y] on basis pairs
        for i in 0..dim {
            for j in (i + 1)..dim {
                let comm = &ads[i] * &ads[j] - &ads[j] * &ads[i];
                let mut ad_br = DMatrix::zeros(dim, dim);
                for k in 0..dim {
                    let coef = at(i, j, k);
                    if coef != 0.0 {
                        ad_br += &ads[k] * coef;
                    }
                }
                let residual = (comm - ad_br).norm();
                if residual > tol * (dim as f64) {
                    return Err(LieError::JacobiViolation { i, j, k: 0, residual });
                }
            }
        }
        let mut killing = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let t = (&ads[i] * &ads[j]).trace();
                killing[(i, j)] = t;
                killing[(j, i)] = t;
            }
        }
        Ok(Arc::new(LieAlgebra { dim, c, nnz, ads, killing, tol }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn structure(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[i * self.dim * self.dim + j * self.dim + k]
    }

    /// Nonzero structure entries with i < j.
    pub fn nnz(&self) -> &[(usize, usize, usize, f64)] {
        &self.nnz
    }

    /// Frobenius norm of the bracket tensor (over i < j).
    pub fn bracket_norm(&self) -> f64 {
        self.nnz.iter().map(|&(_, _, _, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn ad_basis(&self, i: usize) -> &DMatrix<f64> {
        &self.ads[i]
    }

    /// ad(x) for an arbitrary element.
    pub fn ad(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            if x[i] != 0.0 {
                m += &self.ads[i] * x[i];
            }
        }
        m
    }

    /// Lie bracket of two coordinate vectors.
    pub fn bracket(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, k, v) in &self.nnz {
            out[k] += v * (x[i] * y[j] - x[j] * y[i]);
        }
        out
    }

    /// Killing form B(x, y) = tr(ad x ad y) as a matrix in the basis.
    pub fn killing_form(&self) -> &DMatrix<f64> {
        &self.killing
    }

    /// True iff the span of the columns of `basis` is bracket-closed.
    pub fn is_subalgebra(&self, basis: &DMatrix<f64>) -> Result<bool, LieError> {
        if basis.nrows() != self.dim {
            return Err(LieError::DimensionMismatch { expected: self.dim, got: basis.nrows() });
        }
        Ok(self.closure_defect(basis) <= self.tol)
    }

    /// Worst containment defect of [v_i, v_j] against span(basis).
    pub fn closure_defect(&self, basis: &DMatrix<f64>) -> f64 {
        let on = linalg::orthonormalize(basis, self.tol);
        let d = on.ncols();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                let br = self.bracket(&on.column(i).clone_owned(), &on.column(j).clone_owned());
                let nrm = br.norm();
                if nrm <= self.tol {
                    continue;
                }
                let m = DMatrix::from_column_slice(self.dim, 1, br.as_slice());
                let defect = linalg::containment_defect(&linalg::orthonormalize(&m, self.tol), &on);
                worst = worst.max(defect);
            }
        }
        worst
    }
}

/// Orthonormal-basis subspace of the algebra, certified bracket-closed.
#[derive(Debug, Clone)]
pub struct Subalgebra {
    basis: DMatrix<f64>,
    parent: Arc<LieAlgebra>,
}

impl Subalgebra {
    /// Builds a subalgebra from a spanning set; orthonormalizes and checks
    /// bracket closure.
    pub fn from_span(parent: Arc<LieAlgebra>, span: &DMatrix<f64>) -> Result<Self, LieError> {
        if span.nrows() != parent.dim() {
            return Err(LieError::DimensionMismatch { expected: parent.dim(), got: span.nrows() });
        }
        let basis = linalg::orthonormalize(span, parent.tol());
        let defect = parent.closure_defect(&basis);
        if defect > parent.tol() {
            return Err(LieError::NotClosed { defect });
        }
        Ok(Subalgebra { basis, parent })
    }

    /// The zero subalgebra.
    pub fn trivial(parent: Arc<LieAlgebra>) -> Self {
        let n = parent.dim();
        Subalgebra { basis: DMatrix::zeros(n, 0), parent }
    }

    /// The full algebra as a subalgebra of itself.
    pub fn full(parent: Arc<LieAlgebra>) -> Self {
        let n = parent.dim();
        Subalgebra { basis: DMatrix::identity(n, n), parent }
    }

    pub fn parent(&self) -> &Arc<LieAlgebra> {
        &self.parent
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.parent.dim()
    }

    /// Containment within tolerance (self <= other).
    pub fn contained_in(&self, other: &Subalgebra) -> bool {
        linalg::subspace_contained(&self.basis, &other.basis, self.parent.tol())
    }

    pub fn same_space(&self, other: &Subalgebra) -> bool {
        linalg::subspace_equal(&self.basis, &other.basis, self.parent.tol())
    }

    /// Orthogonal projector onto the subspace, as a dim x dim matrix.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Smallest bracket-closed subspace containing both arguments; computed by
/// iterating span-union-brackets to a fixed point.
pub fn sup_subalgebra(k: &Subalgebra, l: &Subalgebra) -> Result<Subalgebra, LieError> {
    if !Arc::ptr_eq(k.parent(), l.parent()) {
        return Err(LieError::ParentMismatch);
    }
    let g = k.parent().clone();
    let n = g.dim();
    let tol = g.tol();
    let mut cur = {
        let mut m = DMatrix::zeros(n, k.dim() + l.dim());
        m.view_mut((0, 0), (n, k.dim())).copy_from(k.basis());
        m.view_mut((0, k.dim()), (n, l.dim())).copy_from(l.basis());
        linalg::orthonormalize(&m, tol)
    };
    loop {
        let d = cur.ncols();
        let mut ext: Vec<DVector<f64>> = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                let br = g.bracket(&cur.column(i).clone_owned(), &cur.column(j).clone_owned());
                if br.norm() > tol {
                    ext.push(br);
                }
            }
        }
        let mut m = DMatrix::zeros(n, d + ext.len());
        m.view_mut((0, 0), (n, d)).copy_from(&cur);
        for (c, v) in ext.iter().enumerate() {
            m.set_column(d + c, v);
        }
        let next = linalg::orthonormalize(&m, tol);
        if next.ncols() == d {
            // closed: dimension stopped growing
            return Subalgebra::from_span(g.clone(), &next);
        }
        cur = next;
    }
}

/// Derived subalgebra [l, l]: span of all brackets of basis pairs.
pub fn commutant(l: &Subalgebra) -> Subalgebra {
    let g = l.parent().clone();
    let n = g.dim();
    let d = l.dim();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let br = g.bracket(&l.basis().column(i).clone_owned(), &l.basis().column(j).clone_owned());
            if br.norm() > g.tol() {
                cols.push(br);
            }
        }
    }
    let mut m = DMatrix::zeros(n, cols.len());
    for (c, v) in cols.iter().enumerate() {
        m.set_column(c, v);
    }
    let basis = linalg::orthonormalize(&m, g.tol());
    // span of brackets of a subalgebra is itself bracket-closed
    Subalgebra::from_span(g, &basis).expect("commutant must be closed")
}

/// True iff [j, j] is contained in h; requires h <= j.
pub fn is_toral(h: &Subalgebra, j: &Subalgebra) -> Result<bool, LieError> {
    if !h.contained_in(j) {
        return Err(LieError::NotNested);
    }
    let der = commutant(j);
    Ok(der.contained_in(h) || der.dim() == 0)
}

/// True iff span([l,l] + h) = l; requires h <= l.
pub fn is_almost_semisimple(h: &Subalgebra, l: &Subalgebra) -> Result<bool, LieError> {
    if !h.contained_in(l) {
        return Err(LieError::NotNested);
    }
    let der = commutant(l);
    let g = l.parent().clone();
    let n = g.dim();
    let mut m = DMatrix::zeros(n, der.dim() + h.dim());
    m.view_mut((0, 0), (n, der.dim())).copy_from(der.basis());
    m.view_mut((0, der.dim()), (n, h.dim())).copy_from(h.basis());
    let span = linalg::orthonormalize(&m, g.tol());
    Ok(linalg::subspace_equal(&span, l.basis(), g.tol()))
}

/// True iff every generator maps the subspace into itself within tol.
pub fn is_invariant(v: &DMatrix<f64>, generators: &[DMatrix<f64>], tol: f64) -> bool {
    if v.ncols() == 0 {
        return true;
    }
    let on = linalg::orthonormalize(v, tol);
    for gen in generators {
        let img = gen * &on;
        let img_on = linalg::orthonormalize(&img, tol);
        if !linalg::subspace_contained(&img_on, &on, tol) {
            return false;
        }
    }
    true
}

/// Spectral invariants of the quadratic Casimir of a subalgebra.
///
/// `c[r-1] = tr(C | wedge^r l)` is the r-th elementary symmetric function
/// of the eigenvalues of `C = -sum_i (ad_l Z_i)^2` over an orthonormal
/// frame of `l`; the number of positive eigenvalues equals the dimension
/// of the derived subalgebra.
#[derive(Debug, Clone, PartialEq)]
pub struct CasimirProfile {
    pub c: Vec<f64>,
    pub commutant_dim: usize,
}

pub fn casimir_invariants(l: &Subalgebra, r_max: usize) -> CasimirProfile {
    let g = l.parent().clone();
    let d = l.dim();
    if d == 0 {
        return CasimirProfile { c: vec![0.0; r_max], commutant_dim: 0 };
    }
    // ad_l Z_i in the frame of l: entries <z_k, [z_i, z_j]>
    let mut mats = Vec::with_capacity(d);
    for i in 0..d {
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let br = g.bracket(&l.basis().column(i).clone_owned(), &l.basis().column(j).clone_owned());
            let coords = l.basis().transpose() * br;
            m.set_column(j, &coords);
        }
        mats.push(m);
    }
    let mut casimir = DMatrix::zeros(d, d);
    for m in &mats {
        casimir -= m * m;
    }
    let (vals, _) = linalg::sym_eigen_sorted(&casimir);
    let scale = vals.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let commutant_dim = vals.iter().filter(|&&x| x > g.tol() * scale).count();
    // elementary symmetric polynomials of the eigenvalues
    let r_max = r_max.min(d);
    let mut e = vec![0.0f64; r_max + 1];
    e[0] = 1.0;
    for &lam in vals.iter() {
        for r in (1..=r_max).rev() {
            e[r] += lam * e[r - 1];
        }
    }
    CasimirProfile { c: e[1..=r_max].to_vec(), commutant_dim }
}


#[cfg(test)]
mod tests {
    use super::test_algebras::*;
    use super::*;
    use crate::presets;

    fn col(v: Vec<f64>) -> DMatrix<f64> {
        DMatrix::from_vec(v.len(), 1, v)
    }

    #[test]
    fn su2_accepted_and_killing() {
        let g = su2();
        let b = g.killing_form();
        let expect = DMatrix::identity(3, 3) * -2.0;
        assert!((b - expect).norm() < 1e-12);
    }

    #[test]
    fn antisymmetry_violation_detected() {
        let n = 3;
        let mut c = vec![0.0; 27];
        c[0 * 9 + 1 * 3 + 2] = 1.0;
        c[1 * 9 + 0 * 3 + 2] = 1.0; // should be -1
        match LieAlgebra::new(n, c, DEFAULT_TOL) {
            Err(LieError::AntisymmetryViolation { .. }) => {}
            other => panic!("expected antisymmetry violation, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_violation_detected() {
        // the 7-dimensional cross product: totally antisymmetric, not Jacobi
        let n = 7;
        let mut c = vec![0.0; n * n * n];
        let lines = [(0, 1, 3), (1, 2, 4), (2, 3, 5), (3, 4, 6), (4, 5, 0), (5, 6, 1), (6, 0, 2)];
        for (i, j, k) in lines {
            let perms = [
                (i, j, k, 1.0),
                (j, i, k, -1.0),
                (i, k, j, -1.0),
                (k, j, i, -1.0),
                (j, k, i, 1.0),
                (k, i, j, 1.0),
            ];
            for (a, b, d, w) in perms {
                c[a * n * n + b * n + d] = w;
            }
        }
        match LieAlgebra::new(n, c, DEFAULT_TOL) {
            Err(LieError::JacobiViolation { .. }) => {}
            Ok(_) => panic!("expected Jacobi violation"),
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn abelian_killing_zero() {
        let g = abelian2();
        assert!(g.killing_form().norm() < 1e-15);
    }

    #[test]
    fn u3_preset_accepted() {
        // built from a skew-Hermitian basis, orthonormalized, C recomputed
        let g = presets::u_n_algebra(3);
        assert_eq!(g.dim(), 9);
        // Killing of u(n): B(X,Y) = 2n tr(XY) - 2 tr X tr Y; negative semidefinite
        let (vals, _) = linalg::sym_eigen_sorted(g.killing_form());
        assert!(vals.max() < 1e-9);
    }

    #[test]
    fn killing_ad_invariance_random_triples() {
        use rand::{Rng, SeedableRng};
        let g = presets::su_n_algebra(3);
        let b = g.killing_form();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = DVector::from_fn(g.dim(), |_, _| rng.gen::<f64>() - 0.5);
            let y = DVector::from_fn(g.dim(), |_, _| rng.gen::<f64>() - 0.5);
            let z = DVector::from_fn(g.dim(), |_, _| rng.gen::<f64>() - 0.5);
            let lhs = (b * &z).dot(&g.bracket(&x, &y));
            let rhs = (b * &g.bracket(&z, &x)).dot(&y);
            assert!((lhs - rhs).abs() < 1e-9, "ad-invariance of Killing failed");
        }
    }

    #[test]
    fn subalgebra_predicates_su2() {
        let g = su2();
        // 1-dim always closed
        assert!(g.is_subalgebra(&col(vec![0.0, 0.0, 1.0])).unwrap());
        // span(e1, e2) is not closed
        let m = DMatrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(!g.is_subalgebra(&m).unwrap());
        // full algebra closed
        assert!(g.is_subalgebra(&DMatrix::identity(3, 3)).unwrap());
    }

    #[test]
    fn sup_generates_su2_from_two_lines() {
        let g = su2();
        let a = Subalgebra::from_span(g.clone(), &col(vec![1.0, 0.0, 0.0])).unwrap();
        let b = Subalgebra::from_span(g.clone(), &col(vec![0.0, 1.0, 0.0])).unwrap();
        let s = sup_subalgebra(&a, &b).unwrap();
        assert_eq!(s.dim(), 3);
        let s2 = sup_subalgebra(&a, &a).unwrap();
        assert!(s2.same_space(&a));
    }

    #[test]
    fn commutant_cases() {
        let g = su2();
        let full = Subalgebra::full(g.clone());
        assert_eq!(commutant(&full).dim(), 3);
        let line = Subalgebra::from_span(g.clone(), &col(vec![0.0, 0.0, 1.0])).unwrap();
        assert_eq!(commutant(&line).dim(), 0);
    }

    #[test]
    fn toral_and_almost_semisimple() {
        let g = su2();
        let h = Subalgebra::trivial(g.clone());
        let line = Subalgebra::from_span(g.clone(), &col(vec![0.0, 0.0, 1.0])).unwrap();
        let full = Subalgebra::full(g.clone());
        assert!(is_toral(&h, &line).unwrap());
        assert!(!is_toral(&h, &full).unwrap());
        // vacuous: j = h
        assert!(is_toral(&line, &line).unwrap());
        assert!(is_almost_semisimple(&h, &full).unwrap());
        // u(2) = su(2) + R center, h = 0: not almost semisimple
        let u2 = presets::u_n_algebra(2);
        let h0 = Subalgebra::trivial(u2.clone());
        let fullu2 = Subalgebra::full(u2.clone());
        assert!(!is_almost_semisimple(&h0, &fullu2).unwrap());
        // but over its center it is
        let der = commutant(&fullu2);
        assert_eq!(der.dim(), 3);
        let center = linalg::orthogonal_complement(der.basis(), 4, 1e-12);
        let z = Subalgebra::from_span(u2.clone(), &center).unwrap();
        assert!(is_almost_semisimple(&z, &fullu2).unwrap());
    }

    #[test]
    fn nested_precondition() {
        let g = su2();
        let a = Subalgebra::from_span(g.clone(), &col(vec![1.0, 0.0, 0.0])).unwrap();
        let b = Subalgebra::from_span(g.clone(), &col(vec![0.0, 1.0, 0.0])).unwrap();
        assert!(matches!(is_toral(&a, &b), Err(LieError::NotNested)));
    }

    #[test]
    fn casimir_su2_and_u2() {
        let g = su2();
        let full = Subalgebra::full(g.clone());
        let p = casimir_invariants(&full, 3);
        // C = 2 I on su(2): c_1 = 6, all e_r positive, rank 3
        assert!((p.c[0] - 6.0).abs() < 1e-9);
        assert_eq!(p.commutant_dim, 3);
        assert_eq!(p.commutant_dim, commutant(&full).dim());

        let u2 = presets::u_n_algebra(2);
        let fu2 = Subalgebra::full(u2.clone());
        let p2 = casimir_invariants(&fu2, 4);
        assert_eq!(p2.commutant_dim, 3);
        assert_eq!(p2.commutant_dim, commutant(&fu2).dim());

        let ab = abelian2();
        let fab = Subalgebra::full(ab);
        let pa = casimir_invariants(&fab, 2);
        assert!(pa.c.iter().all(|&x| x.abs() < 1e-12));
        assert_eq!(pa.commutant_dim, 0);
    }

    #[test]
    fn invariance_under_ad_h() {
        let su3 = presets::su_n_algebra(3);
        let (h, _items) = presets::su3_flag_subalgebras(&su3);
        let gens: Vec<DMatrix<f64>> = (0..h.dim())
            .map(|i| su3.ad(&h.basis().column(i).clone_owned()))
            .collect();
        // h itself invariant
        assert!(is_invariant(h.basis(), &gens, su3.tol()));
        // a generic line in m is not
        let v = col(vec![0.0, 0.0, 1.0, 0.3, 0.0, 0.0, 0.7, 0.0]);
        assert!(!is_invariant(&v, &gens, su3.tol()));
    }
}
