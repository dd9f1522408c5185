#![no_std]

#[cfg(test)]
extern crate std;

extern crate alloc;

pub mod baseline;
pub mod error;
pub mod estimation;
pub mod frailty;
pub mod hlik;
pub mod inference;
mod linalg;
pub mod model;
pub mod optim;
pub mod selection;
pub mod simulation;

pub use baseline::BaselineFamily;
pub use error::{Error, Result};
pub use frailty::{FrailtySpec, Structure};
pub use hlik::{HlikModel, HlikValue, Layout};
pub use model::{build_design, CovariateInfo, Dataset, Design, FixedParams, RandomEffects, SurvivalRecord};
