//! Catalog files: JSON with sparse structure-constant triples, named
//! subalgebra bases (row-major, rows are basis vectors), the isotropy
//! name, and optional extra invariance generators.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Catalog, LatticeError};
use crate::lie::{LieAlgebra, LieError, Subalgebra};

#[derive(Debug, Error)]
pub enum CatalogIoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("value {0:?} is not a decimal number")]
    BadValue(String),
    #[error("isotropy entry {0:?} is not among the subalgebras")]
    UnknownH(String),
    #[error("basis row has length {got}, expected {expected}")]
    BadRow { expected: usize, got: usize },
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// A numeric entry: plain JSON number or a bit-exact decimal string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    F(f64),
    S(String),
}

impl Num {
    fn to_f64(&self) -> Result<f64, CatalogIoError> {
        match self {
            Num::F(x) => Ok(*x),
            Num::S(s) => s.trim().parse().map_err(|_| CatalogIoError::BadValue(s.clone())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubalgebraFile {
    pub name: String,
    /// rows are basis vectors of length `dim`
    pub basis: Vec<Vec<Num>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogFile {
    pub name: String,
    pub dim: usize,
    /// sparse triples (i, j, k, C_ijk); the antisymmetric partner of a
    /// listed triple may be omitted
    pub structure: Vec<(usize, usize, usize, Num)>,
    pub subalgebras: Vec<SubalgebraFile>,
    /// name of the isotropy subalgebra within `subalgebras`
    pub h: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_invariance: Vec<Vec<Vec<Num>>>,
}

/// Parses and validates a catalog file into a closed catalog.
pub fn load_catalog(text: &str, tol: f64) -> Result<Catalog, CatalogIoError> {
    let file: CatalogFile = serde_json::from_str(text)?;
    let n = file.dim;
    let mut c = vec![0.0; n * n * n];
    let mut set = vec![false; n * n * n];
    for &(i, j, k, ref v) in &file.structure {
        let val = v.to_f64()?;
        c[i * n * n + j * n + k] = val;
        set[i * n * n + j * n + k] = true;
    }
    // fill omitted antisymmetric partners
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let a = i * n * n + j * n + k;
                let b = j * n * n + i * n + k;
                if set[a] && !set[b] {
                    c[b] = -c[a];
                    set[b] = true;
                }
            }
        }
    }
    let algebra = LieAlgebra::new(n, c, tol)?;
    let parse_sub = |sf: &SubalgebraFile| -> Result<Subalgebra, CatalogIoError> {
        let mut m = DMatrix::zeros(n, sf.basis.len());
        for (col, row) in sf.basis.iter().enumerate() {
            if row.len() != n {
                return Err(CatalogIoError::BadRow { expected: n, got: row.len() });
            }
            for (r, v) in row.iter().enumerate() {
                m[(r, col)] = v.to_f64()?;
            }
        }
        Ok(Subalgebra::from_span(algebra.clone(), &m)?)
    };
    let h_entry = file
        .subalgebras
        .iter()
        .find(|s| s.name == file.h)
        .ok_or_else(|| CatalogIoError::UnknownH(file.h.clone()))?;
    let h = if h_entry.basis.is_empty() {
        Subalgebra::trivial(algebra.clone())
    } else {
        parse_sub(h_entry)?
    };
    let mut items = Vec::new();
    let mut names = Vec::new();
    for sf in &file.subalgebras {
        if sf.name == file.h {
            continue;
        }
        items.push(parse_sub(sf)?);
        names.push(sf.name.clone());
    }
    let mut extra = Vec::new();
    for mat in &file.extra_invariance {
        let mut m = DMatrix::zeros(n, n);
        for (r, row) in mat.iter().enumerate() {
            for (cidx, v) in row.iter().enumerate() {
                m[(r, cidx)] = v.to_f64()?;
            }
        }
        extra.push(m);
    }
    let cat =
        Catalog::new(file.name, algebra, h, items, extra)?.with_item_names(names);
    Ok(cat.close_under_sup()?)
}

/// Serializes a catalog (pre- or post-closure) back to the file schema.
pub fn save_catalog(cat: &Catalog) -> CatalogFile {
    let g: &Arc<LieAlgebra> = cat.algebra();
    let n = g.dim();
    let mut structure = Vec::new();
    for &(i, j, k, v) in g.nnz() {
        structure.push((i, j, k, Num::F(v)));
    }
    let to_rows = |s: &Subalgebra| -> Vec<Vec<Num>> {
        (0..s.dim())
            .map(|c| (0..n).map(|r| Num::F(s.basis()[(r, c)])).collect())
            .collect()
    };
    let mut subalgebras = vec![SubalgebraFile { name: "h".into(), basis: to_rows(cat.h()) }];
    for i in 0..cat.len() {
        subalgebras.push(SubalgebraFile {
            name: cat.item_name(i).to_string(),
            basis: to_rows(cat.item(i)),
        });
    }
    CatalogFile {
        name: cat.name.clone(),
        dim: n,
        structure,
        subalgebras,
        h: "h".into(),
        extra_invariance: cat
            .extra_generators()
            .iter()
            .map(|m| {
                (0..n)
                    .map(|r| (0..n).map(|c| Num::F(m[(r, c)])).collect())
                    .collect()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn preset_round_trip() {
        for name in ["su2", "su2_cubed", "su3_flag"] {
            let p = presets::preset(name).unwrap();
            let file = save_catalog(&p.catalog);
            let text = serde_json::to_string(&file).unwrap();
            let loaded = load_catalog(&text, 1e-9).unwrap();
            assert_eq!(loaded.len(), p.catalog.len(), "{name}");
            for i in 0..loaded.len() {
                assert!(p.catalog.find(loaded.item(i)).is_some());
            }
        }
    }

    #[test]
    fn decimal_strings_accepted() {
        let text = r#"{
            "name": "su2-by-hand",
            "dim": 3,
            "structure": [[0,1,2,"1.0"], [1,2,0,"1"], [2,0,1,1.0]],
            "subalgebras": [
                {"name": "h", "basis": []},
                {"name": "t", "basis": [["0","0","1.0"]]}
            ],
            "h": "h"
        }"#;
        let cat = load_catalog(text, 1e-9).unwrap();
        assert_eq!(cat.len(), 2); // t plus adjoined g
        assert_eq!(cat.item(0).dim(), 1);
    }

    #[test]
    fn corrupted_structure_rejected() {
        // antisymmetry broken on purpose
        let text = r#"{
            "name": "bad",
            "dim": 3,
            "structure": [[0,1,2,1.0], [1,0,2,1.0]],
            "subalgebras": [{"name": "h", "basis": []}],
            "h": "h"
        }"#;
        assert!(matches!(load_catalog(text, 1e-9), Err(CatalogIoError::Lie(_))));
    }

    #[test]
    fn unknown_h_rejected() {
        let text = r#"{
            "name": "x",
            "dim": 3,
            "structure": [[0,1,2,1.0],[1,2,0,1.0],[2,0,1,1.0]],
            "subalgebras": [{"name": "a", "basis": [["0","0","1"]]}],
            "h": "missing"
        }"#;
        assert!(matches!(load_catalog(text, 1e-9), Err(CatalogIoError::UnknownH(_))));
    }
}
