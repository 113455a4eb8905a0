//! Structure-preserving finite element solver for a coupled, non-isothermal
//! conserved/non-conserved phase-field system written in inverse-temperature
//! form.
//!
//! The crate is organised bottom-up: periodic meshes ([`mesh`]), sparse linear
//! algebra ([`linalg`]), P1 assembly ([`fem`]), the thermodynamic model
//! ([`model`]), the fully discrete time stepper ([`scheme`]), conservation and
//! stability diagnostics ([`diagnostics`]), and the packaged numerical
//! experiments ([`experiments`]).

pub mod error;
pub mod diagnostics;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod scheme;

pub use error::{Error, Result};
