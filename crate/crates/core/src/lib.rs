//! Electron pumping through a periodically driven quantum dot coupled to
//! structured reservoirs.

pub mod adiabatic;
pub mod error;
pub mod fcs;
pub mod floquet;
pub mod fme;
pub mod hamiltonian;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod ode;

pub use error::{Error, Result};
