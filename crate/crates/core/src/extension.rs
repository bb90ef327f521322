//! The join decomposition of the degenerate-filtration space over the
//! toral order ideal: flag families I and J, the kappa coordinate, the
//! extension X_eps, near-simplex witnesses, the retraction onto the
//! nontoral space, and the cover check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::butterflies::{
    self, butterfly_kind, ButterflyError, ButterflyKind, ButterflySampler,
    Flag, Version,
};
use crate::lattice::{Catalog, OrderIdeal};
use crate::lie;
use crate::linalg;
use crate::operators::{self, SymOp};

#[derive(Debug, Error)]
pub enum ExtensionError {
    #[error("no nontoral items: the ideal has empty complement")]
    EmptyComplement,
    #[error("operator is not in V[I]")]
    NotInVI,
    #[error("join system residual {0:.3e} exceeds tolerance")]
    SystemResidual(f64),
    #[error("kappa threshold precondition failed or tolerance failure while building witness")]
    WitnessNotFound,
    #[error("kappa is zero: retraction onto the nontoral space undefined")]
    KappaZero,
    #[error("epsilon must lie in (0,1) and L must be positive")]
    BadConfig,
    #[error(transparent)]
    Butterfly(#[from] ButterflyError),
}

/// Threshold configuration for the extension X_eps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsilonConfig {
    pub eps: f64,
    /// upper bound for flag lengths in the toral complex
    pub l: usize,
}

impl EpsilonConfig {
    pub fn new(eps: f64, l: usize) -> Result<Self, ExtensionError> {
        if !(0.0..1.0).contains(&eps) || eps == 0.0 || l == 0 {
            return Err(ExtensionError::BadConfig);
        }
        Ok(EpsilonConfig { eps, l })
    }

    /// The certified cover threshold eps = 1/(2n(n-1)) with the default
    /// flag-length bound L = dim g - dim h.
    pub fn certified(cat: &Catalog) -> Self {
        let n = (cat.algebra().dim() - cat.h().dim()) as f64;
        EpsilonConfig { eps: 1.0 / (2.0 * n * (n - 1.0)), l: cat.algebra().dim() - cat.h().dim() }
    }

    pub fn threshold(&self) -> f64 {
        self.eps.powi(self.l as i32)
    }
}

/// Flags with all members below the top in the toral ideal and a nontoral
/// top (the family I), and the subfamily topped by the full algebra (J).
pub fn build_i_j(
    cat: &Catalog,
    ideal: &OrderIdeal,
    flags: &[Flag],
) -> Result<(Vec<Flag>, Vec<Flag>), ExtensionError> {
    if (0..cat.len()).all(|i| ideal.contains(i)) {
        return Err(ExtensionError::EmptyComplement);
    }
    let mut i_fam = Vec::new();
    let mut j_fam = Vec::new();
    for f in flags {
        let top_toral = ideal.contains(f.max());
        let tail_toral = f.indices()[1..].iter().all(|&i| ideal.contains(i));
        if !top_toral && tail_toral {
            i_fam.push(f.clone());
            if f.contains_g(cat) {
                j_fam.push(f.clone());
            }
        }
    }
    Ok((i_fam, j_fam))
}

/// Join coordinates of a point of V[I]: the toral simplex part, the
/// nontoral star part, and the join weight kappa.
#[derive(Debug, Clone)]
pub struct JoinPoint {
    pub a1: Option<SymOp>,
    pub kappa: f64,
    pub a2: Option<SymOp>,
    /// the I-flag realizing the decomposition
    pub flag: Flag,
    /// worst residual of the characterizing commutation system
    pub system_residual: f64,
}

/// Residual of the join system: A1 A2 = A2 A1 = lam1 A2 (lam1 the top
/// eigenvalue of A1) and A1 [v, A2 v] = lam1 [v, A2 v], checked over basis
/// vectors and their pairwise polarizations.
fn join_system_residual(cat: &Catalog, a1: &SymOp, a2: &SymOp) -> f64 {
    let g = cat.algebra().clone();
    let n = g.dim();
    let (vals, _) = linalg::sym_eigen_sorted(a1.matrix());
    let lam1 = vals[n - 1];
    let mut worst = (a1.matrix() * a2.matrix() - a2.matrix() * a1.matrix()).norm();
    worst = worst.max((a1.matrix() * a2.matrix() - a2.matrix() * lam1).norm());
    let check_dir = |v: &nalgebra::DVector<f64>, w: &nalgebra::DVector<f64>| -> f64 {
        // bracket [v, A2 w] + [w, A2 v]: polarization of [v, A2 v]
        let br = g.bracket(v, &(a2.matrix() * w)) + g.bracket(w, &(a2.matrix() * v));
        (a1.matrix() * &br - &br * lam1).norm()
    };
    for i in 0..n {
        let ei = nalgebra::DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        worst = worst.max(0.5 * check_dir(&ei, &ei));
        for j in (i + 1)..n {
            let ej = nalgebra::DVector::from_fn(n, |r, _| if r == j { 1.0 } else { 0.0 });
            worst = worst.max(check_dir(&ei, &ej));
        }
    }
    worst
}

/// Splits a point of V[I] as A = (1-kappa) A1 + kappa A2 with A1 in the
/// toral simplex union and A2 in the nontoral star union, per the flag
/// decomposition; the commutation system is verified as an independent
/// characterization.
pub fn join_decompose(
    cat: &Catalog,
    version: Version,
    ideal: &OrderIdeal,
    i_flags: &[Flag],
    a: &SymOp,
    residual_tol: f64,
) -> Result<JoinPoint, ExtensionError> {
    let g = cat.algebra().clone();
    // prefer longer flags: they expose the full toral tail
    let mut order: Vec<&Flag> = i_flags.iter().collect();
    order.sort_by_key(|f| std::cmp::Reverse(f.len()));
    for flag in order {
        let Ok(pt) = butterflies::decompose(cat, version, flag, a, false) else {
            continue;
        };
        let has_g = flag.contains_g(cat);
        let kappa = if has_g { 0.0 } else { pt.lambda[0] };
        // toral side: the chi simplex over the tail
        let tail_weight: f64 = pt.lambda[1..].iter().sum();
        let a1 = if tail_weight > 1e-12 {
            let mut m = nalgebra::DMatrix::zeros(g.dim(), g.dim());
            for (j, &idx) in flag.indices().iter().enumerate().skip(1) {
                if pt.lambda[j] != 0.0 {
                    m += operators::chi_bar(cat.item(idx)).unwrap().matrix() * pt.lambda[j];
                }
            }
            Some(SymOp::new(g.clone(), m / tail_weight).map_err(ButterflyError::from)?)
        } else {
            None
        };
        let a2 = pt.z.clone();
        let system_residual = match (&a1, &a2) {
            (Some(x1), Some(x2)) => join_system_residual(cat, x1, x2),
            _ => 0.0,
        };
        if system_residual > residual_tol {
            return Err(ExtensionError::SystemResidual(system_residual));
        }
        let _ = ideal;
        return Ok(JoinPoint { a1, kappa, a2, flag: flag.clone(), system_residual });
    }
    Err(ExtensionError::NotInVI)
}

/// The join coordinate kappa on V[I].
pub fn kappa(
    cat: &Catalog,
    version: Version,
    ideal: &OrderIdeal,
    i_flags: &[Flag],
    a: &SymOp,
) -> Result<f64, ExtensionError> {
    Ok(join_decompose(cat, version, ideal, i_flags, a, 1e-8)?.kappa)
}

/// Membership in X_eps = { A in V[I] : kappa(A) >= eps^L }.
pub fn in_x_eps(
    cat: &Catalog,
    version: Version,
    ideal: &OrderIdeal,
    i_flags: &[Flag],
    cfg: &EpsilonConfig,
    a: &SymOp,
) -> Result<bool, ExtensionError> {
    Ok(kappa(cat, version, ideal, i_flags, a)? >= cfg.threshold())
}

/// Witness that a small-kappa point is close to a toral simplex: an index
/// along the flag where the renormalized head lies within eps of the chi
/// vertex, together with the convex hull containing the point.
#[derive(Debug, Clone)]
pub struct NearSimplexWitness {
    /// toral subflag (f_i > ... > f_last)
    pub flag: Flag,
    /// head operator B_i in the butterfly of f_i
    pub b: SymOp,
    /// |B_i - chi(f_i)|, certified < eps
    pub dist: f64,
    /// hull coefficients of A over {B_i, chi(f_s) : s > i}
    pub hull_coeffs: Vec<f64>,
}

pub fn near_simplex_witness(
    cat: &Catalog,
    version: Version,
    ideal: &OrderIdeal,
    i_flags: &[Flag],
    cfg: &EpsilonConfig,
    a: &SymOp,
) -> Result<NearSimplexWitness, ExtensionError> {
    let jp = join_decompose(cat, version, ideal, i_flags, a, 1e-8)?;
    if jp.kappa >= cfg.threshold() {
        return Err(ExtensionError::WitnessNotFound);
    }
    let g = cat.algebra().clone();
    let flag = &jp.flag;
    let pt = butterflies::decompose(cat, version, flag, a, false)?;
    let r = flag.len();
    if r < 2 {
        return Err(ExtensionError::WitnessNotFound);
    }
    // partial sums a_i and heads B_i = (a_0 B_0 + sum_{j<=i} w_j chi_j)/a_i
    let mut head = match &pt.z {
        Some(z) => z.matrix() * pt.lambda[0],
        None => nalgebra::DMatrix::zeros(g.dim(), g.dim()),
    };
    let mut a_i = pt.lambda[0];
    for i in 1..r {
        let idx = flag.indices()[i];
        let chi = operators::chi_bar(cat.item(idx)).unwrap();
        head += chi.matrix() * pt.lambda[i];
        a_i += pt.lambda[i];
        if a_i <= 1e-13 {
            continue;
        }
        let b = SymOp::new(g.clone(), &head / a_i).map_err(ButterflyError::from)?;
        let dist = b.dist(&chi);
        if dist < cfg.eps {
            let tail: Vec<usize> = flag.indices()[i..].to_vec();
            let wit_flag = Flag::new(cat, tail)?;
            let mut coeffs = vec![a_i];
            coeffs.extend_from_slice(&pt.lambda[i + 1..]);
            // hull certificate: A = a_i B_i + sum_{s>i} w_s chi_s
            let mut recon = b.matrix() * a_i;
            for (c, &idx2) in wit_flag.indices()[1..].iter().enumerate() {
                recon += operators::chi_bar(cat.item(idx2)).unwrap().matrix() * coeffs[c + 1];
            }
            if (a.matrix() - recon).norm() > 1e-9 * a.norm().max(1.0) * g.dim() as f64 {
                return Err(ExtensionError::WitnessNotFound);
            }
            return Ok(NearSimplexWitness { flag: wit_flag, b, dist, hull_coeffs: coeffs });
        }
    }
    Err(ExtensionError::WitnessNotFound)
}

/// Endpoint of the segment contraction onto the nontoral space: returns
/// A2, after checking that kappa is nondecreasing along the path
/// A(u) = (1-u) A + u A2 on a sample grid.
pub fn retract_to_nontoral(
    cat: &Catalog,
    version: Version,
    ideal: &OrderIdeal,
    i_flags: &[Flag],
    a: &SymOp,
    grid: usize,
) -> Result<SymOp, ExtensionError> {
    let jp = join_decompose(cat, version, ideal, i_flags, a, 1e-8)?;
    if jp.kappa <= 1e-12 {
        return Err(ExtensionError::KappaZero);
    }
    let a2 = jp.a2.clone().ok_or(ExtensionError::KappaZero)?;
    let g = cat.algebra().clone();
    let mut prev = jp.kappa;
    for s in 1..=grid {
        let u = s as f64 / grid as f64;
        let m = a.matrix() * (1.0 - u) + a2.matrix() * u;
        let au = SymOp::new(g.clone(), m).map_err(ButterflyError::from)?;
        let k_u = kappa(cat, version, ideal, i_flags, &au)?;
        if k_u < prev - 1e-9 {
            return Err(ExtensionError::SystemResidual(prev - k_u));
        }
        prev = k_u;
    }
    Ok(a2)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverReport {
    pub samples: usize,
    pub in_x_eps: usize,
    pub in_y_eps: usize,
    pub in_z: usize,
    pub uncovered: usize,
    pub eps: f64,
    pub l: usize,
}

/// Samples points of the butterfly union over the whole catalog and sorts
/// each into X_eps, the witness region Y_eps, or the toral-flag region Z.
/// Reports any uncovered samples.
pub fn cover_check(
    cat: &Catalog,
    version: Version,
    ideal: &OrderIdeal,
    cfg: &EpsilonConfig,
    samples: usize,
    seed: u64,
) -> Result<CoverReport, ExtensionError> {
    let n = (cat.algebra().dim() - cat.h().dim()) as f64;
    assert!(
        cfg.eps <= 1.0 / (2.0 * n * (n - 1.0)) + 1e-15,
        "cover check requires eps <= 1/(2n(n-1))"
    );
    let flags = butterflies::enumerate_flags(cat);
    let (i_flags, _) = build_i_j(cat, ideal, &flags)?;
    let sampler = ButterflySampler::new(cat, version);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoverReport {
        samples: 0,
        in_x_eps: 0,
        in_y_eps: 0,
        in_z: 0,
        uncovered: 0,
        eps: cfg.eps,
        l: cfg.l,
    };
    let nonempty: Vec<&Flag> = flags
        .iter()
        .filter(|f| butterfly_kind(cat, f) != ButterflyKind::Empty)
        .collect();
    for i in 0..samples {
        let f = nonempty[i % nonempty.len()];
        let Some(x) = sampler.butterfly_point(f, &mut rng) else {
            continue;
        };
        report.samples += 1;
        let psi = butterflies::maximal_flag(cat, version, &flags, &x)
            .ok_or(ExtensionError::NotInVI)?;
        if psi.indices().iter().all(|&i| ideal.contains(i)) {
            report.in_z += 1;
            continue;
        }
        match kappa(cat, version, ideal, &i_flags, &x) {
            Ok(k) if k >= cfg.threshold() => report.in_x_eps += 1,
            Ok(_) => match near_simplex_witness(cat, version, ideal, &i_flags, cfg, &x) {
                Ok(_) => report.in_y_eps += 1,
                Err(_) => report.uncovered += 1,
            },
            Err(_) => report.uncovered += 1,
        }
    }
    Ok(report)
}

/// True when [g, g] <= h fails and the catalog has toral entries forming
/// an admissible ideal with nonempty complement.
pub fn admissible(cat: &Catalog, ideal: &OrderIdeal) -> bool {
    let g_full = lie::Subalgebra::full(cat.algebra().clone());
    !lie::is_toral(cat.h(), &g_full).unwrap_or(true)
        && (0..cat.len()).any(|i| !ideal.contains(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice;
    use crate::presets;

    fn setup() -> (presets::Preset, OrderIdeal, Vec<Flag>, Vec<Flag>, Vec<Flag>) {
        let p = presets::preset("su2_cubed").unwrap();
        let ideal = lattice::toral_ideal(&p.catalog).unwrap();
        let flags = butterflies::enumerate_flags(&p.catalog);
        let (i_f, j_f) = build_i_j(&p.catalog, &ideal, &flags).unwrap();
        (p, ideal, flags, i_f, j_f)
    }

    #[test]
    fn i_and_j_families() {
        let (p, ideal, flags, i_f, j_f) = setup();
        let cat = &p.catalog;
        // every I-flag: toral tail, nontoral top
        for f in &i_f {
            assert!(!ideal.contains(f.max()));
            assert!(f.indices()[1..].iter().all(|&i| ideal.contains(i)));
        }
        // J-flags are exactly the I-flags containing g
        for f in &j_f {
            assert!(f.contains_g(cat));
        }
        // (g > t3) lies in J; (su2_1 + t3 > t3) lies in I
        let t3 = 0;
        let gidx = cat.g_index().unwrap();
        let gt3 = Flag::new(cat, vec![gidx, t3]).unwrap();
        assert!(j_f.contains(&gt3));
        let s1t3 = (0..cat.len())
            .find(|&i| cat.item(i).dim() == 4 && cat.item_lt(t3, i))
            .unwrap();
        let fi = Flag::new(cat, vec![s1t3, t3]).unwrap();
        assert!(i_f.contains(&fi) && !j_f.contains(&fi));
        let _ = flags;
    }

    #[test]
    fn kappa_boundary_values() {
        let (p, ideal, _flags, i_f, _j) = setup();
        let cat = &p.catalog;
        let g = cat.algebra().clone();
        // pure nontoral: kappa = 1
        let chi1 = operators::chi_bar(cat.item(1)).unwrap();
        let k1 = kappa(cat, Version::Fine, &ideal, &i_f, &chi1).unwrap();
        assert!((k1 - 1.0).abs() < 1e-12);
        // toral simplex point (in a J-flag): kappa = 0
        let t3 = 0;
        let chi_t = operators::chi_bar(cat.item(t3)).unwrap();
        let k0 = kappa(cat, Version::Fine, &ideal, &i_f, &chi_t).unwrap();
        assert!(k0.abs() < 1e-12);
        // constructed join point: kappa recovered exactly
        let s1t3 = (0..cat.len())
            .find(|&i| cat.item(i).dim() == 4 && cat.item_lt(t3, i))
            .unwrap();
        let sampler = ButterflySampler::new(cat, Version::Fine);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = sampler.star_point(s1t3, &mut rng);
        let a = SymOp::new(g.clone(), z.matrix() * 0.25 + chi_t.matrix() * 0.75).unwrap();
        let jp = join_decompose(cat, Version::Fine, &ideal, &i_f, &a, 1e-8).unwrap();
        assert!((jp.kappa - 0.25).abs() < 1e-9);
        assert!(jp.a2.unwrap().dist(&z) < 1e-8);
        assert!(jp.system_residual <= 1e-8);
        assert!(jp.a1.unwrap().dist(&chi_t) < 1e-9);
    }

    #[test]
    fn x_eps_membership() {
        let (p, ideal, _flags, i_f, _j) = setup();
        let cat = &p.catalog;
        let cfg = EpsilonConfig::certified(cat);
        // pure nontoral always in X_eps
        let chi1 = operators::chi_bar(cat.item(1)).unwrap();
        assert!(in_x_eps(cat, Version::Fine, &ideal, &i_f, &cfg, &chi1).unwrap());
        // kappa = 0 point is not
        let chi_t = operators::chi_bar(cat.item(0)).unwrap();
        assert!(!in_x_eps(cat, Version::Fine, &ideal, &i_f, &cfg, &chi_t).unwrap());
    }

    #[test]
    fn witness_construction() {
        let (p, ideal, _flags, i_f, _j) = setup();
        let cat = &p.catalog;
        let g = cat.algebra().clone();
        let cfg = EpsilonConfig::new(0.05, 2).unwrap();
        let t3 = 0;
        let s1t3 = (0..cat.len())
            .find(|&i| cat.item(i).dim() == 4 && cat.item_lt(t3, i))
            .unwrap();
        let chi_t = operators::chi_bar(cat.item(t3)).unwrap();
        let sampler = ButterflySampler::new(cat, Version::Fine);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = sampler.star_point(s1t3, &mut rng);
        // tiny nontoral weight below eps^L
        let a0 = cfg.threshold() * 0.5;
        let a = SymOp::new(g.clone(), z.matrix() * a0 + chi_t.matrix() * (1.0 - a0)).unwrap();
        let wit = near_simplex_witness(cat, Version::Fine, &ideal, &i_f, &cfg, &a).unwrap();
        assert!(wit.dist < cfg.eps);
        assert!(!wit.hull_coeffs.is_empty());
        // kappa = 0 simplex point: witness is the chi vertex itself
        let wit0 = near_simplex_witness(cat, Version::Fine, &ideal, &i_f, &cfg, &chi_t).unwrap();
        assert!(wit0.dist < 1e-12);
        // kappa above the threshold: precondition fails
        let big = SymOp::new(g.clone(), z.matrix() * 0.5 + chi_t.matrix() * 0.5).unwrap();
        assert!(matches!(
            near_simplex_witness(cat, Version::Fine, &ideal, &i_f, &cfg, &big),
            Err(ExtensionError::WitnessNotFound)
        ));
    }

    #[test]
    fn retraction_to_nontoral() {
        let (p, ideal, _flags, i_f, _j) = setup();
        let cat = &p.catalog;
        let g = cat.algebra().clone();
        let t3 = 0;
        let s1t3 = (0..cat.len())
            .find(|&i| cat.item(i).dim() == 4 && cat.item_lt(t3, i))
            .unwrap();
        let chi_t = operators::chi_bar(cat.item(t3)).unwrap();
        let sampler = ButterflySampler::new(cat, Version::Fine);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = sampler.star_point(s1t3, &mut rng);
        let a = SymOp::new(g.clone(), z.matrix() * 0.25 + chi_t.matrix() * 0.75).unwrap();
        let end = retract_to_nontoral(cat, Version::Fine, &ideal, &i_f, &a, 10).unwrap();
        assert!(end.dist(&z) < 1e-8);
        // kappa = 1: identity
        let end2 = retract_to_nontoral(cat, Version::Fine, &ideal, &i_f, &z, 5).unwrap();
        assert!(end2.dist(&z) < 1e-12);
        // kappa = 0: error
        assert!(matches!(
            retract_to_nontoral(cat, Version::Fine, &ideal, &i_f, &chi_t, 5),
            Err(ExtensionError::KappaZero)
        ));
    }

    #[test]
    fn cover_is_complete() {
        let (p, ideal, _flags, _i, _j) = setup();
        let cat = &p.catalog;
        let cfg = EpsilonConfig::certified(cat);
        for version in [Version::Fine, Version::Draft] {
            let rep = cover_check(cat, version, &ideal, &cfg, 300, 12).unwrap();
            assert_eq!(rep.uncovered, 0, "uncovered samples in {version:?}");
            assert!(rep.in_x_eps > 0);
            assert!(rep.in_z > 0);
        }
    }
}
