//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// ascending and eigenvectors as matching columns.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = a.clone().symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Orthonormalize the columns of `m` (modified Gram-Schmidt), dropping
/// columns whose residual norm falls below `tol`. Returns a matrix with
/// orthonormal columns spanning the same subspace.
pub fn orthonormalize(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).clone_owned();
        // two passes of re-orthogonalization for numerical safety
        for _ in 0..2 {
            for u in &cols {
                let d = u.dot(&v);
                v -= u * d;
            }
        }
        let norm = v.norm();
        if norm > tol {
            cols.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Largest sine of a principal angle of `sub` against `space`:
/// max over unit v in sub of the distance from v to `space`.
/// Both arguments must have orthonormal columns.
pub fn containment_defect(sub: &DMatrix<f64>, space: &DMatrix<f64>) -> f64 {
    if sub.ncols() == 0 {
        return 0.0;
    }
    if space.ncols() == 0 {
        return 1.0;
    }
    // residual = (I - P_space) sub; defect = largest singular value
    let proj = space * (space.transpose() * sub);
    let resid = sub - proj;
    resid.singular_values().max()
}

/// True when span(sub) is contained in span(space) within tol.
pub fn subspace_contained(sub: &DMatrix<f64>, space: &DMatrix<f64>, tol: f64) -> bool {
    containment_defect(sub, space) <= tol
}

/// True when the two spans agree within tol.
pub fn subspace_equal(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.ncols() == b.ncols() && subspace_contained(a, b, tol) && subspace_contained(b, a, tol)
}

/// Orthonormal basis of the orthogonal complement of `space` inside R^n.
pub fn orthogonal_complement(space: &DMatrix<f64>, n: usize, tol: f64) -> DMatrix<f64> {
    let d = space.ncols();
    if d == 0 {
        return DMatrix::identity(n, n);
    }
    // complement = eigenvectors of (I - U U^T) with eigenvalue ~ 1
    let p = DMatrix::identity(n, n) - space * space.transpose();
    let (vals, vecs) = sym_eigen_sorted(&p);
    let mut cols = Vec::new();
    for i in 0..n {
        if vals[i] > 0.5 {
            cols.push(vecs.column(i).clone_owned());
        }
    }
    debug_assert_eq!(cols.len(), n - d);
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    orthonormalize(&out, tol)
}

/// Orthonormal basis of the common nullspace of a list of linear maps,
/// i.e. `{ v : A v = 0 for all A }`, with singular values below
/// `tol * scale` treated as zero.
pub fn common_nullspace(maps: &[DMatrix<f64>], n: usize, tol: f64) -> DMatrix<f64> {
    if maps.is_empty() {
        return DMatrix::identity(n, n);
    }
    let rows: usize = maps.iter().map(|m| m.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, n);
    let mut r = 0;
    for m in maps {
        stacked.view_mut((r, 0), (m.nrows(), n)).copy_from(m);
        r += m.nrows();
    }
    nullspace(&stacked, tol)
}

/// Orthonormal basis of the nullspace of `m`.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() > 3 * n {
        // tall systems: eigen-decompose the Gram matrix instead; null
        // directions sit at machine-noise level, so keep a noise floor
        let gram = m.transpose() * m;
        let (vals, vecs) = sym_eigen_sorted(&gram);
        let scale = vals.max().max(1.0);
        let cut = scale * (tol * tol).max(1e-12);
        let cols: Vec<usize> = (0..n).filter(|&i| vals[i] <= cut).collect();
        let mut out = DMatrix::zeros(n, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            out.set_column(j, &vecs.column(i));
        }
        return out;
    }
    // the thin SVD of a wide matrix misses right-singular directions
    let m = if m.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = m.svd(false, true);
    let vt = svd.v_t.unwrap();
    let scale = svd.singular_values.max().max(1.0);
    let mut cols = Vec::new();
    for i in 0..n {
        let sv = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if sv <= tol * scale {
            cols.push(vt.row(i).transpose());
        }
    }
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// exp(A) for symmetric A via eigen-decomposition.
pub fn expm_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(a);
    let d = DMatrix::from_diagonal(&vals.map(|x| x.exp()));
    &vecs * d * vecs.transpose()
}

/// A^p for symmetric positive semidefinite A (eigenvalues clipped at 0).
pub fn powm_sym(a: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(a);
    let d = DMatrix::from_diagonal(&vals.map(|x| x.max(0.0).powf(p)));
    &vecs * d * vecs.transpose()
}

/// Frobenius inner product.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Euclidean distance of `p` to the segment [a, b].
pub fn dist_to_segment(p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ab = b - a;
    let denom = frob_dot(&ab, &ab);
    if denom <= 0.0 {
        return (p - a).norm();
    }
    let t = (frob_dot(&(p - a), &ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Euclidean distance of point `p` to the convex hull of `verts`
/// (each vertex a matrix of the same shape). Exact active-set search
/// over vertex subsets; intended for small vertex counts.
pub fn dist_to_hull(p: &DMatrix<f64>, verts: &[DMatrix<f64>]) -> f64 {
    assert!(!verts.is_empty());
    let k = verts.len();
    let mut best = f64::INFINITY;
    // Enumerate nonempty subsets; project onto the affine hull of each and
    // keep projections with nonnegative barycentric coordinates.
    for mask in 1u32..(1 << k) {
        let sel: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let m = sel.len();
        let base = &verts[sel[0]];
        if m == 1 {
            best = best.min((p - base).norm());
            continue;
        }
        // minimize |p - base - sum_i c_i (v_i - base)|
        let dirs: Vec<DMatrix<f64>> = sel[1..].iter().map(|&i| &verts[i] - base).collect();
        let mut gram = DMatrix::zeros(m - 1, m - 1);
        let mut rhs = DVector::zeros(m - 1);
        let diff = p - base;
        for i in 0..m - 1 {
            rhs[i] = frob_dot(&dirs[i], &diff);
            for j in 0..m - 1 {
                gram[(i, j)] = frob_dot(&dirs[i], &dirs[j]);
            }
        }
        let Some(c) = gram.clone().lu().solve(&rhs) else {
            continue;
        };
        let csum: f64 = c.iter().sum();
        if c.iter().any(|&x| x < -1e-12) || csum > 1.0 + 1e-12 {
            continue;
        }
        let mut q = base.clone();
        for (d, &ci) in dirs.iter().zip(c.iter()) {
            q += d * ci;
        }
        best = best.min((p - q).norm());
    }
    best
}

/// Cluster a sorted slice of values: indices i, i+1 join the same cluster
/// when their gap is at most `width`. Returns cluster id per entry.
pub fn cluster_sorted(vals: &[f64], width: f64) -> Vec<usize> {
    let mut ids = vec![0usize; vals.len()];
    let mut current = 0;
    for i in 1..vals.len() {
        if vals[i] - vals[i - 1] > width {
            current += 1;
        }
        ids[i] = current;
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_dims() {
        let u = orthonormalize(
            &DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 1.0, 0.0])]),
            1e-12,
        );
        let c = orthogonal_complement(&u, 3, 1e-12);
        assert_eq!(c.ncols(), 2);
        assert!(containment_defect(&u, &c) > 0.9);
    }

    #[test]
    fn hull_distance_triangle() {
        let v0 = DMatrix::from_vec(2, 1, vec![0.0, 0.0]);
        let v1 = DMatrix::from_vec(2, 1, vec![1.0, 0.0]);
        let v2 = DMatrix::from_vec(2, 1, vec![0.0, 1.0]);
        let p = DMatrix::from_vec(2, 1, vec![1.0, 1.0]);
        let d = dist_to_hull(&p, &[v0, v1, v2]);
        assert!((d - (0.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn segment_distance() {
        let a = DMatrix::from_vec(2, 1, vec![0.0, 0.0]);
        let b = DMatrix::from_vec(2, 1, vec![2.0, 0.0]);
        let p = DMatrix::from_vec(2, 1, vec![3.0, 1.0]);
        assert!((dist_to_segment(&p, &a, &b) - (2.0f64).sqrt()).abs() < 1e-12);
    }
}
