//! Pseudo-spectral simulation of incompressible flow with shear-dependent
//! viscosity on the periodic box, together with numerical checks of the
//! structural inequalities behind its energy estimates.
//!
//! The velocity satisfies
//!
//! ```text
//! u_t - div(G[|Du|^2] Du) + (u . grad) u + grad p = 0,   div u = 0
//! ```
//!
//! with `Du` the symmetric gradient and `G` a viscosity law bounded below by
//! `m0 > 0` (see [`constitutive`]).

pub mod analysis;
pub mod cli;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod quadrature;
pub mod solver;
pub mod stress;
pub mod tensor;

pub use constitutive::{AdmissibleLaw, ConstitutiveLaw, LawKind, LawSpec, StructuralReport, UserLaw};
pub use error::{Error, Result};
pub use fields::{Grid, SpectralField, StrainField};
pub use tensor::Sym3;
pub use solver::{SimConfig, SimState};
