//! Numerical laboratory for dissipative bosonic dynamics on truncated Fock
//! spaces. Builds GKSL generators from polynomial jump operators, integrates
//! the master equation, and checks every closed-form stability,
//! regularization, and perturbation bound against the numerics.

pub mod catcode;
pub mod certificates;
pub mod error;
pub mod evolve;
pub mod fock;
pub mod gksl;
pub mod lattice;
pub mod linalg;
pub mod suite;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, FockCutoff, ModeSpace, Operator, PolySpec};
pub use gksl::{GeneratorSpec, Superoperator};
pub use lattice::{LatticeGeometry, WeightProfile};

pub use num_complex::Complex64 as C64;
