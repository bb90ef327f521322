//! Finite catalogs of invariant subalgebras: semilattice closure, the
//! toral order ideal, minimal nontoral elements, and family classification.
//!
//! A catalog never claims completeness of a family; closure and
//! classification are always relative to the declared finite set.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lie::{self, LieAlgebra, LieError, Subalgebra};

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("every invariant subalgebra is toral ([g,g] <= h): excluded torus case")]
    AllToral,
    #[error("no nontoral items in the catalog")]
    EmptyFilter,
    #[error("catalog item {index} does not strictly contain h")]
    DoesNotContainH { index: usize },
    #[error("catalog item {index} is not invariant under the declared generators")]
    NotInvariant { index: usize },
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Finite list of invariant subalgebras of a fixed pair (g, h), together
/// with containment and sup tables. Items strictly contain `h`; the full
/// algebra may be present (tracked by `includes_g`).
#[derive(Debug, Clone)]
pub struct Catalog {
    pub name: String,
    algebra: Arc<LieAlgebra>,
    h: Subalgebra,
    items: Vec<Subalgebra>,
    item_names: Vec<String>,
    /// symmetry generators: ad of an h-basis plus any declared extras
    generators: Vec<DMatrix<f64>>,
    extra_generators: Vec<DMatrix<f64>>,
    includes_g: bool,
    leq: Vec<Vec<bool>>,
    sup: Option<Vec<Vec<usize>>>,
    toral: Vec<bool>,
}

impl Catalog {
    /// Builds a catalog, checking that each item strictly contains `h` and
    /// is invariant under ad(h) and the extra generators.
    pub fn new(
        name: impl Into<String>,
        algebra: Arc<LieAlgebra>,
        h: Subalgebra,
        items: Vec<Subalgebra>,
        extra_generators: Vec<DMatrix<f64>>,
    ) -> Result<Self, LatticeError> {
        let mut generators: Vec<DMatrix<f64>> = (0..h.dim())
            .map(|i| algebra.ad(&h.basis().column(i).clone_owned()))
            .collect();
        generators.extend(extra_generators.iter().cloned());
        for (index, it) in items.iter().enumerate() {
            if !h.contained_in(it) || it.dim() == h.dim() {
                return Err(LatticeError::DoesNotContainH { index });
            }
            if !lie::is_invariant(it.basis(), &generators, algebra.tol()) {
                return Err(LatticeError::NotInvariant { index });
            }
        }
        let item_names = (0..items.len()).map(|i| format!("k{i}")).collect();
        let mut cat = Catalog {
            name: name.into(),
            algebra,
            h,
            items,
            item_names,
            generators,
            extra_generators,
            includes_g: false,
            leq: Vec::new(),
            sup: None,
            toral: Vec::new(),
        };
        cat.rebuild_tables()?;
        Ok(cat)
    }

    /// Replaces the generated item names (same order as the item list).
    pub fn with_item_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.items.len());
        self.item_names = names;
        self
    }

    pub fn item_name(&self, i: usize) -> &str {
        &self.item_names[i]
    }

    fn rebuild_tables(&mut self) -> Result<(), LatticeError> {
        let n = self.items.len();
        self.includes_g = self.items.iter().any(|it| it.is_full());
        let mut leq = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                leq[i][j] = self.items[i].contained_in(&self.items[j]);
            }
        }
        self.leq = leq;
        let mut toral = Vec::with_capacity(n);
        for it in &self.items {
            toral.push(lie::is_toral(&self.h, it)?);
        }
        self.toral = toral;
        Ok(())
    }

    pub fn algebra(&self) -> &Arc<LieAlgebra> {
        &self.algebra
    }

    pub fn h(&self) -> &Subalgebra {
        &self.h
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn extra_generators(&self) -> &[DMatrix<f64>] {
        &self.extra_generators
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, i: usize) -> &Subalgebra {
        &self.items[i]
    }

    pub fn items(&self) -> &[Subalgebra] {
        &self.items
    }

    pub fn includes_g(&self) -> bool {
        self.includes_g
    }

    /// Index of the full algebra, if present.
    pub fn g_index(&self) -> Option<usize> {
        self.items.iter().position(|it| it.is_full())
    }

    /// items[i] <= items[j] as subspaces.
    pub fn item_leq(&self, i: usize, j: usize) -> bool {
        self.leq[i][j]
    }

    /// Strict containment.
    pub fn item_lt(&self, i: usize, j: usize) -> bool {
        i != j && self.leq[i][j] && !self.leq[j][i]
    }

    pub fn is_toral_item(&self, i: usize) -> bool {
        self.toral[i]
    }

    /// Index of sup(items[i], items[j]); only available after closure.
    pub fn sup_idx(&self, i: usize, j: usize) -> usize {
        self.sup.as_ref().expect("catalog not closed")[i][j]
    }

    pub fn is_closed(&self) -> bool {
        self.sup.is_some()
    }

    /// Index of an item equal to the given subalgebra, if any.
    pub fn find(&self, s: &Subalgebra) -> Option<usize> {
        self.items.iter().position(|it| it.same_space(s))
    }

    /// Smallest superset of the catalog closed under `sup`, with the full
    /// algebra adjoined, deduplicated by subspace equality.
    pub fn close_under_sup(&self) -> Result<Catalog, LatticeError> {
        let mut items = self.items.clone();
        if !items.iter().any(|it| it.is_full()) {
            items.push(Subalgebra::full(self.algebra.clone()));
        }
        let mut changed = true;
        while changed {
            changed = false;
            let n = items.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    let s = lie::sup_subalgebra(&items[i], &items[j])?;
                    if !items.iter().any(|it| it.same_space(&s)) {
                        items.push(s);
                        changed = true;
                    }
                }
            }
        }
        // canonical order: by dimension, then lexicographic basis projector
        items.sort_by(|a, b| {
            a.dim().cmp(&b.dim()).then_with(|| {
                let pa = a.projector();
                let pb = b.projector();
                for (x, y) in pa.iter().zip(pb.iter()) {
                    if (x - y).abs() > 1e-12 {
                        return x.partial_cmp(y).unwrap();
                    }
                }
                std::cmp::Ordering::Equal
            })
        });
        // keep declared names; closure products get generated ones
        let item_names = items
            .iter()
            .map(|it| match self.find(it) {
                Some(old) => self.item_names[old].clone(),
                None => {
                    if it.is_full() {
                        "g".to_string()
                    } else {
                        format!("sup_d{}", it.dim())
                    }
                }
            })
            .collect();
        let mut cat = Catalog {
            name: self.name.clone(),
            algebra: self.algebra.clone(),
            h: self.h.clone(),
            items,
            item_names,
            generators: self.generators.clone(),
            extra_generators: self.extra_generators.clone(),
            includes_g: true,
            leq: Vec::new(),
            sup: None,
            toral: Vec::new(),
        };
        cat.rebuild_tables()?;
        let n = cat.items.len();
        let mut sup = vec![vec![0usize; n]; n];
        for i in 0..n {
            for j in 0..n {
                let s = lie::sup_subalgebra(&cat.items[i], &cat.items[j])?;
                sup[i][j] = cat.find(&s).expect("sup closure incomplete");
            }
        }
        cat.sup = Some(sup);
        Ok(cat)
    }
}

/// Downward-closed subset of catalog indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderIdeal {
    pub indices: Vec<usize>,
}

impl OrderIdeal {
    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }
}

/// The toral order ideal `{ j : [j,j] <= h }` of the catalog.
/// Errors with `AllToral` in the excluded torus case `[g,g] <= h`.
pub fn toral_ideal(cat: &Catalog) -> Result<OrderIdeal, LatticeError> {
    let g_full = Subalgebra::full(cat.algebra().clone());
    if lie::is_toral(cat.h(), &g_full)? {
        return Err(LatticeError::AllToral);
    }
    let indices: Vec<usize> = (0..cat.len()).filter(|&i| cat.is_toral_item(i)).collect();
    // downward closure sanity: i toral, j <= i => j toral
    for &i in &indices {
        for j in 0..cat.len() {
            if cat.item_leq(j, i) {
                debug_assert!(cat.is_toral_item(j), "toral set not downward closed");
            }
        }
    }
    Ok(OrderIdeal { indices })
}

/// Minimal elements of the nontoral filter within the catalog.
pub fn minimal_nontoral(cat: &Catalog) -> Result<Vec<usize>, LatticeError> {
    let nontoral: Vec<usize> = (0..cat.len()).filter(|&i| !cat.is_toral_item(i)).collect();
    if nontoral.is_empty() {
        return Err(LatticeError::EmptyFilter);
    }
    Ok(nontoral
        .iter()
        .copied()
        .filter(|&i| !nontoral.iter().any(|&j| cat.item_lt(j, i)))
        .collect())
}

/// Smallest sup-semilattice containing the full algebra and all minimal
/// nontoral elements, as an index set into the closed catalog.
pub fn k_min_indices(cat: &Catalog) -> Result<Vec<usize>, LatticeError> {
    assert!(cat.is_closed(), "k_min requires a sup-closed catalog");
    let mut set: Vec<usize> = minimal_nontoral(cat)?;
    if let Some(g) = cat.g_index() {
        if !set.contains(&g) {
            set.push(g);
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        let cur = set.clone();
        for &i in &cur {
            for &j in &cur {
                let s = cat.sup_idx(i, j);
                if !set.contains(&s) {
                    set.push(s);
                    changed = true;
                }
            }
        }
    }
    set.sort_unstable();
    Ok(set)
}

/// The semilattice of `k_min_indices` as its own catalog.
pub fn k_min_semilattice(cat: &Catalog) -> Result<Catalog, LatticeError> {
    let idx = k_min_indices(cat)?;
    let items: Vec<Subalgebra> = idx.iter().map(|&i| cat.item(i).clone()).collect();
    let base = Catalog::new(
        format!("{}-min", cat.name),
        cat.algebra().clone(),
        cat.h().clone(),
        items,
        cat.extra_generators().to_vec(),
    )?;
    base.close_under_sup()
}

/// Family flags for one catalog item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct FamilyFlags {
    /// nontoral invariant proper subalgebra
    pub type1: bool,
    /// type 1 and almost semisimple (l = [l,l] + h)
    pub type1star: bool,
    /// sup of minimal type-1 items within the catalog
    pub type2: bool,
    pub toral: bool,
}

pub fn classify_family(cat: &Catalog, index: usize) -> Result<FamilyFlags, LatticeError> {
    let it = cat.item(index);
    let toral = cat.is_toral_item(index);
    let proper = !it.is_full();
    let type1 = proper && !toral;
    let type1star = type1 && lie::is_almost_semisimple(cat.h(), it)?;
    let type2 = if cat.is_closed() {
        let kmin = k_min_indices(cat)?;
        proper && kmin.contains(&index)
    } else {
        false
    };
    Ok(FamilyFlags { type1, type1star, type2, toral })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn su3_flag_closure_adds_g_only() {
        let p = presets::preset("su3_flag").unwrap();
        assert_eq!(p.catalog.len(), 4); // three root u(2)'s plus g
        assert!(p.catalog.includes_g());
        let nontoral = minimal_nontoral(&p.catalog).unwrap();
        assert_eq!(nontoral.len(), 3);
        for &i in &nontoral {
            assert_eq!(p.catalog.item(i).dim(), 4);
        }
    }

    #[test]
    fn su3_flag_no_torals_and_classification() {
        let p = presets::preset("su3_flag").unwrap();
        let ideal = toral_ideal(&p.catalog).unwrap();
        assert!(ideal.indices.is_empty());
        for i in 0..p.catalog.len() {
            let f = classify_family(&p.catalog, i).unwrap();
            if p.catalog.item(i).is_full() {
                assert!(!f.type1 && !f.toral);
            } else {
                assert!(f.type1 && f.type1star && f.type2 && !f.toral);
            }
        }
    }

    #[test]
    fn su2_cubed_closure_has_eight_items() {
        let p = presets::preset("su2_cubed").unwrap();
        assert_eq!(p.catalog.len(), 8);
        let ideal = toral_ideal(&p.catalog).unwrap();
        assert_eq!(ideal.indices.len(), 1); // the t-line only
        let mins = minimal_nontoral(&p.catalog).unwrap();
        assert_eq!(mins.len(), 2); // su2_1 and su2_2
    }

    #[test]
    fn close_under_sup_idempotent_and_monotone() {
        for name in ["su2", "su2_cubed", "su3_flag", "su2modT_squared"] {
            let p = presets::preset(name).unwrap();
            let again = p.catalog.close_under_sup().unwrap();
            assert_eq!(again.len(), p.catalog.len(), "closure not idempotent for {name}");
            for i in 0..again.len() {
                assert!(p.catalog.find(again.item(i)).is_some());
            }
        }
    }

    #[test]
    fn chain_catalog_minimal() {
        // chain k1 < k2, both nontoral: minimal = {k1}
        let p = presets::preset("su2_cubed").unwrap();
        let g = p.catalog.algebra().clone();
        let mut span1 = nalgebra::DMatrix::zeros(9, 3);
        for c in 0..3 {
            span1[(c, c)] = 1.0;
        }
        let su2_1 = Subalgebra::from_span(g.clone(), &span1).unwrap();
        let mut span = nalgebra::DMatrix::zeros(9, 6);
        for c in 0..6 {
            span[(c, c)] = 1.0;
        }
        let su2_12 = Subalgebra::from_span(g.clone(), &span).unwrap();
        let cat = Catalog::new(
            "chain",
            g.clone(),
            Subalgebra::trivial(g.clone()),
            vec![su2_1.clone(), su2_12],
            vec![],
        )
        .unwrap()
        .close_under_sup()
        .unwrap();
        let mins = minimal_nontoral(&cat).unwrap();
        assert_eq!(mins.len(), 1);
        assert!(cat.item(mins[0]).same_space(&su2_1));
    }

    #[test]
    fn all_toral_rejected() {
        // g = su(2), h = su(2): [g,g] <= h
        let g = crate::lie::test_algebras::su2();
        let h = Subalgebra::full(g.clone());
        let cat = Catalog::new("torus", g.clone(), h, vec![], vec![]).unwrap();
        assert!(matches!(toral_ideal(&cat), Err(LatticeError::AllToral)));
    }

    #[test]
    fn example_2_8_p2_catalog() {
        let p = presets::preset("example_2_8_p2").unwrap();
        // toral item (5), l2 (7), s3 (8), rho(u3) (9), g (36)
        let dims: Vec<usize> = (0..p.catalog.len()).map(|i| p.catalog.item(i).dim()).collect();
        assert_eq!(dims, vec![5, 7, 8, 9, 36]);
        let ideal = toral_ideal(&p.catalog).unwrap();
        assert_eq!(ideal.indices, vec![0]);
        let mins = minimal_nontoral(&p.catalog).unwrap();
        // rho(u3) and h + su(V1) are the minimal nontoral items
        let min_dims: Vec<usize> = mins.iter().map(|&i| p.catalog.item(i).dim()).collect();
        assert_eq!(min_dims, vec![7, 9]);
        // s3 = h + su(V1) + center direction is nontoral but not almost semisimple
        let f = classify_family(&p.catalog, 2).unwrap();
        assert!(f.type1 && !f.type1star && !f.type2);
        // the two minimal ones are almost semisimple and of type 2
        for &i in &mins {
            let f = classify_family(&p.catalog, i).unwrap();
            assert!(f.type1star && f.type2);
        }
    }
}
