//! Numerical laboratory for the generalized Hunter–Saxton system
//! `u_xt + u u_xx - λ u_x² - κ ρ² = I(t)`, `ρ_t + u ρ_x = 2λ ρ u_x` on the circle.

pub mod asymptotics;
pub mod charsolve;
pub mod error;
pub mod expcli;
pub mod initdata;
pub mod norms;
pub mod output;
pub mod pdecheck;
pub mod quad;
pub mod specfun;

pub use error::{Error, Result};
