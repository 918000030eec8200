//! Exact simulation and verification toolkit for multipartite GHZ
//! nonlocality tests with lossy detectors, classical broadcast
//! communication and output errors.
//!
//! * [`model`]: correlation problems, local strategies and the efficiency,
//!   error and total-variation measures.
//! * [`ghz`]: the GHZ scenario with `k` phase settings.
//! * [`protocol`]: broadcast protocol trees and their conversion into
//!   lossy-detector models.
//! * [`rect`]: rectangle counting, bias and the rectangle bound.
//! * [`zgroup`]: multisets over `Z_T` and the addition theorem.
//! * [`search`]: optimal classical strategies and the efficiency LP.
//!
//! Heavy loops run on rayon when the `parallel` feature (default) is on.

pub mod error;
pub mod ghz;
pub mod lp;
pub mod model;
pub mod par;
pub mod protocol;
pub mod rational;
pub mod rect;
pub mod sample;
pub mod search;
pub mod zgroup;

pub use error::{Error, Result};
pub use ghz::GhzInstance;
pub use model::{CorrelationProblem, DeterministicLhv, MixedLhv, ModelDistribution, Outcome};
pub use protocol::{MixedProtocol, ProtocolTree, Randomness};
pub use rational::{Bias, Rational};
pub use rect::Rectangle;
pub use zgroup::{MultisetZ, Subgroup};
