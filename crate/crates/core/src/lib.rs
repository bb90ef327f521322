//! Existence machinery for invariant Einstein metrics on a compact
//! homogeneous space G/H, driven entirely by structure constants.
//!
//! The library works with a compact Lie algebra given by its structure
//! constants in a Q-orthonormal basis, a distinguished isotropy
//! subalgebra, and a finite catalog of invariant subalgebras. On top of
//! that it provides:
//!
//! * filtering symmetric operators, the degenerate-filtration space `W`,
//!   cells `D[k]` and stars `X[k]` ([`operators`]);
//! * finite subalgebra semilattices, toral order ideals and family
//!   classification ([`lattice`]);
//! * the flag order, butterflies, the level filtration `X^(s)` and its
//!   retraction maps ([`butterflies`]);
//! * the join coordinate `kappa`, the extension `X_eps` and the cover
//!   check ([`extension`]);
//! * flag complexes, exact reduced homology, graph criteria and joins
//!   ([`topology`]);
//! * scalar-curvature numerics: Ricci, geodesic rays, asymptotic bounds
//!   and an Einstein-metric finder ([`curvature`]);
//! * batch analysis pipeline,built-in presets and catalog file I/O
//!   ([`analysis`], [`presets`], [`catalog_io`]).

pub mod analysis;
pub mod butterflies;
pub mod catalog_io;
pub mod curvature;
pub mod extension;
pub mod lattice;
pub mod lie;
pub mod linalg;
pub mod operators;
pub mod presets;
pub mod topology;

pub use lattice::Catalog;
pub use lie::{LieAlgebra, LieError, Subalgebra};
pub use operators::SymOp;
