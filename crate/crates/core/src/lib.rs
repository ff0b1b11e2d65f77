//! Intraday FX curve construction, functional GARCH volatility modelling and
//! forecast evaluation.

pub mod basis;
pub mod curves;
pub mod diagnostics;
pub mod error;
pub mod evalstat;
pub mod fgarch;
pub mod longmem;
pub mod risk;
pub mod stats;
pub mod synth;
pub mod trading;

pub use error::{Error, Result};
