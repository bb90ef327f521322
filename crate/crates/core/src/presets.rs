//! Built-in pairs (g, h) with subalgebra catalogs, so every check in the
//! crate is runnable offline.
//!
//! Conventions: su(2) factors use epsilon structure constants (so the
//! bi-invariant metric has scalar curvature 3/2); su(n) and u(n) are
//! built from skew-Hermitian matrix bases orthonormalized for
//! Q(X, Y) = -Re tr(XY).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::lattice::Catalog;
use crate::lie::{LieAlgebra, Subalgebra, DEFAULT_TOL};

/// Minimal complex dense matrix, enough for building structure constants.
#[derive(Debug, Clone)]
pub struct CMat {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { re: DMatrix::zeros(n, n), im: DMatrix::zeros(n, n) }
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        CMat {
            re: &self.re * &other.re - &self.im * &other.im,
            im: &self.re * &other.im + &self.im * &other.re,
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        CMat { re: &self.re - &other.re, im: &self.im - &other.im }
    }

    pub fn commutator(&self, other: &CMat) -> CMat {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn trace_re(&self) -> f64 {
        self.re.trace()
    }
}

/// Inner product Q(X, Y) = -Re tr(X Y) on skew-Hermitian matrices.
fn q_dot(x: &CMat, y: &CMat) -> f64 {
    -x.mul(y).trace_re()
}

/// Basis of u(n): (E_ab - E_ba)/sqrt2 and i(E_ab + E_ba)/sqrt2 for a < b,
/// then i E_aa. Orthonormal for Q.
pub fn u_n_matrix_basis(n: usize) -> Vec<CMat> {
    let s = 1.0 / (2.0f64).sqrt();
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let mut m = CMat::zeros(n);
            m.re[(a, b)] = s;
            m.re[(b, a)] = -s;
            out.push(m);
            let mut m = CMat::zeros(n);
            m.im[(a, b)] = s;
            m.im[(b, a)] = s;
            out.push(m);
        }
    }
    for a in 0..n {
        let mut m = CMat::zeros(n);
        m.im[(a, a)] = 1.0;
        out.push(m);
    }
    out
}

/// Basis of su(n): the off-diagonal part of the u(n) basis plus traceless
/// diagonals i diag(1,..,1,-k,0,..)/sqrt(k(k+1)).
pub fn su_n_matrix_basis(n: usize) -> Vec<CMat> {
    let s = 1.0 / (2.0f64).sqrt();
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let mut m = CMat::zeros(n);
            m.re[(a, b)] = s;
            m.re[(b, a)] = -s;
            out.push(m);
            let mut m = CMat::zeros(n);
            m.im[(a, b)] = s;
            m.im[(b, a)] = s;
            out.push(m);
        }
    }
    for k in 1..n {
        let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
        let mut m = CMat::zeros(n);
        for a in 0..k {
            m.im[(a, a)] = norm;
        }
        m.im[(k, k)] = -(k as f64) * norm;
        out.push(m);
    }
    out
}

/// Structure constants of the algebra spanned by an orthonormal (for Q)
/// list of skew-Hermitian matrices.
pub fn algebra_from_matrix_basis(basis: &[CMat]) -> Arc<LieAlgebra> {
    let d = basis.len();
    let mut c = vec![0.0; d * d * d];
    for i in 0..d {
        for j in (i + 1)..d {
            let br = basis[i].commutator(&basis[j]);
            for k in 0..d {
                let v = q_dot(&br, &basis[k]);
                let v = if v.abs() < 1e-14 { 0.0 } else { v };
                c[i * d * d + j * d + k] = v;
                c[j * d * d + i * d + k] = -v;
            }
        }
    }
    LieAlgebra::new(d, c, DEFAULT_TOL).expect("matrix-built algebra must validate")
}

pub fn su_n_algebra(n: usize) -> Arc<LieAlgebra> {
    algebra_from_matrix_basis(&su_n_matrix_basis(n))
}

pub fn u_n_algebra(n: usize) -> Arc<LieAlgebra> {
    algebra_from_matrix_basis(&u_n_matrix_basis(n))
}

/// su(2) with epsilon structure constants.
pub fn su2_epsilon() -> Arc<LieAlgebra> {
    let mut c = vec![0.0; 27];
    for (i, j, k) in [(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)] {
        c[i * 9 + j * 3 + k] = 1.0;
        c[j * 9 + i * 3 + k] = -1.0;
    }
    LieAlgebra::new(3, c, DEFAULT_TOL).unwrap()
}

/// Direct sum with block structure constants.
pub fn direct_sum(parts: &[Arc<LieAlgebra>]) -> Arc<LieAlgebra> {
    let n: usize = parts.iter().map(|p| p.dim()).sum();
    let mut c = vec![0.0; n * n * n];
    let mut off = 0;
    for p in parts {
        let d = p.dim();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    c[(off + i) * n * n + (off + j) * n + (off + k)] = p.structure(i, j, k);
                }
            }
        }
        off += d;
    }
    LieAlgebra::new(n, c, DEFAULT_TOL).unwrap()
}

fn span_of_indices(g: &Arc<LieAlgebra>, idx: &[usize]) -> Subalgebra {
    let n = g.dim();
    let mut m = DMatrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m[(i, c)] = 1.0;
    }
    Subalgebra::from_span(g.clone(), &m).unwrap()
}

/// (h, items) for the full flag manifold of su(3): h = t^2, items = the
/// three root u(2)'s.
pub fn su3_flag_subalgebras(g: &Arc<LieAlgebra>) -> (Subalgebra, Vec<Subalgebra>) {
    let h = span_of_indices(g, &[6, 7]);
    let items = vec![
        span_of_indices(g, &[0, 1, 6, 7]),
        span_of_indices(g, &[2, 3, 6, 7]),
        span_of_indices(g, &[4, 5, 6, 7]),
    ];
    (h, items)
}

/// A preset pair (g, h) with the sup-closed catalog.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub catalog: Catalog,
}

pub const PRESET_NAMES: [&str; 6] = [
    "su2",
    "su2xsu2_diag",
    "su2_cubed",
    "su3_flag",
    "su2modT_squared",
    "example_2_8_p2",
];

pub fn preset(name: &str) -> Option<Preset> {
    let catalog = match name {
        "su2" => {
            let g = su2_epsilon();
            let h = Subalgebra::trivial(g.clone());
            let items = vec![span_of_indices(&g, &[2])];
            Catalog::new("su2", g, h, items, vec![])
                .unwrap()
                .with_item_names(vec!["t_line".into()])
        }
        "su2xsu2_diag" => {
            let g = direct_sum(&[su2_epsilon(), su2_epsilon()]);
            let s = 1.0 / (2.0f64).sqrt();
            let mut hb = DMatrix::zeros(6, 3);
            for i in 0..3 {
                hb[(i, i)] = s;
                hb[(3 + i, i)] = s;
            }
            let h = Subalgebra::from_span(g.clone(), &hb).unwrap();
            Catalog::new("su2xsu2_diag", g, h, vec![], vec![]).unwrap()
        }
        "su2_cubed" => {
            let g = direct_sum(&[su2_epsilon(), su2_epsilon(), su2_epsilon()]);
            let h = Subalgebra::trivial(g.clone());
            let items = vec![
                span_of_indices(&g, &[0, 1, 2]),
                span_of_indices(&g, &[3, 4, 5]),
                span_of_indices(&g, &[8]),
            ];
            Catalog::new("su2_cubed", g, h, items, vec![])
                .unwrap()
                .with_item_names(vec!["su2_1".into(), "su2_2".into(), "t3".into()])
        }
        "su3_flag" => {
            let g = su_n_algebra(3);
            let (h, items) = su3_flag_subalgebras(&g);
            Catalog::new("su3_flag", g, h, items, vec![])
                .unwrap()
                .with_item_names(vec!["u2_12".into(), "u2_13".into(), "u2_23".into()])
        }
        "su2modT_squared" => {
            let g = direct_sum(&[su2_epsilon(), su2_epsilon()]);
            let h = span_of_indices(&g, &[2, 5]);
            let items = vec![span_of_indices(&g, &[0, 1, 2, 5]), span_of_indices(&g, &[2, 3, 4, 5])];
            Catalog::new("su2modT_squared", g, h, items, vec![])
                .unwrap()
                .with_item_names(vec!["su2xt".into(), "txsu2".into()])
        }
        "example_2_8_p2" => example_2_8_p2_catalog(),
        _ => return None,
    };
    let catalog = catalog.close_under_sup().unwrap();
    Some(Preset { name: name.to_string(), catalog })
}

/// G = U(6) acting on Sym^2 C^3, K = image of u(3) under the derived
/// symmetric-square representation, H = stabilizer subalgebra u(2) < u(3).
fn example_2_8_p2_catalog() -> Catalog {
    let n = 6;
    let u6_basis = u_n_matrix_basis(n);
    let g = algebra_from_matrix_basis(&u6_basis);

    // pairs indexing Sym^2 C^3 as symmetric matrices: f_aa = E_aa,
    // f_ab = (E_ab + E_ba)/sqrt2 for a < b
    let pairs = [(0usize, 0usize), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
    let s = 1.0 / (2.0f64).sqrt();
    let sym_basis: Vec<CMat> = pairs
        .iter()
        .map(|&(a, b)| {
            let mut m = CMat::zeros(3);
            if a == b {
                m.re[(a, a)] = 1.0;
            } else {
                m.re[(a, b)] = s;
                m.re[(b, a)] = s;
            }
            m
        })
        .collect();

    // derived representation of u(3) on Sym^2: X . S = X S + S X^T
    let d_rep = |x: &CMat| -> CMat {
        let mut out = CMat::zeros(n);
        let xt = CMat { re: x.re.transpose(), im: x.im.transpose() };
        for (p, sp) in sym_basis.iter().enumerate() {
            let xs = x.mul(sp);
            let sxt = sp.mul(&xt);
            let y = CMat { re: xs.re + sxt.re, im: xs.im + sxt.im };
            for (q, sq) in sym_basis.iter().enumerate() {
                // <S_q, Y> = tr(S_q Y) since S_q is real symmetric
                let re = (&sq.re * &y.re).trace();
                let im = (&sq.re * &y.im).trace();
                out.re[(q, p)] = re;
                out.im[(q, p)] = im;
            }
        }
        out
    };

    let coords = |m: &CMat| -> DVector<f64> {
        DVector::from_iterator(u6_basis.len(), u6_basis.iter().map(|b| q_dot(b, m)))
    };

    let u3_basis = u_n_matrix_basis(3);
    // u(3) basis order: A01, S01, A02, S02, A12, S12, D0, D1, D2
    let rho: Vec<DVector<f64>> = u3_basis.iter().map(|x| coords(&d_rep(x))).collect();

    let from_cols = |cols: &[DVector<f64>]| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(g.dim(), cols.len());
        for (c, v) in cols.iter().enumerate() {
            m.set_column(c, v);
        }
        m
    };

    // h = dR of { X in u(3) : X e_3 = 0 } = span(A01, S01, D0, D1)
    let h_cols = vec![rho[0].clone(), rho[1].clone(), rho[6].clone(), rho[7].clone()];
    let h = Subalgebra::from_span(g.clone(), &from_cols(&h_cols)).unwrap();

    // full image rho(u(3))
    let rho_u3 = Subalgebra::from_span(g.clone(), &from_cols(&rho)).unwrap();

    // su(V1) for V1 = span(f_02, f_12) = coordinates {4, 5}
    let block = |build: &dyn Fn(&mut CMat)| -> DVector<f64> {
        let mut m = CMat::zeros(n);
        build(&mut m);
        coords(&m)
    };
    let su_v1 = vec![
        block(&|m| {
            m.re[(4, 5)] = s;
            m.re[(5, 4)] = -s;
        }),
        block(&|m| {
            m.im[(4, 5)] = s;
            m.im[(5, 4)] = s;
        }),
        block(&|m| {
            m.im[(4, 4)] = s;
            m.im[(5, 5)] = -s;
        }),
    ];
    let mut l2_cols = h_cols.clone();
    l2_cols.extend(su_v1);
    let l2 = Subalgebra::from_span(g.clone(), &from_cols(&l2_cols)).unwrap();

    // toral item: h + R dR(i E_33)
    let mut tor_cols = h_cols;
    tor_cols.push(rho[8].clone());
    let toral = Subalgebra::from_span(g.clone(), &from_cols(&tor_cols)).unwrap();

    Catalog::new("example_2_8_p2", g, h, vec![toral, l2, rho_u3], vec![])
        .unwrap()
        .with_item_names(vec!["h_plus_z3".into(), "h_plus_suV1".into(), "rho_u3".into()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_build() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap_or_else(|| panic!("preset {name} missing"));
            assert!(p.catalog.is_closed());
            assert!(p.catalog.includes_g());
            assert!(p.catalog.len() <= 8 || name == "example_2_8_p2");
        }
    }

    #[test]
    fn su2_epsilon_structure() {
        let g = su2_epsilon();
        assert_eq!(g.structure(0, 1, 2), 1.0);
        assert_eq!(g.structure(1, 0, 2), -1.0);
    }

    #[test]
    fn su3_flag_items_contain_h() {
        let p = preset("su3_flag").unwrap();
        for i in 0..p.catalog.len() {
            assert!(p.catalog.h().contained_in(p.catalog.item(i)));
        }
    }

    #[test]
    fn example_2_8_rho_u3_is_maximal_among_items() {
        let p = preset("example_2_8_p2").unwrap();
        let rho_idx = (0..p.catalog.len())
            .find(|&i| p.catalog.item(i).dim() == 9)
            .unwrap();
        for j in 0..p.catalog.len() {
            if p.catalog.item_lt(rho_idx, j) {
                assert!(p.catalog.item(j).is_full(), "rho(u3) must be maximal");
            }
        }
    }
}
