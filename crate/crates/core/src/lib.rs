//! Full-duplex cell-free massive MIMO simulation and optimization.
//!
//! The pipeline for one channel draw is:
//!
//! 1. [`scenario`]: drop APs and UEs in a disc, compute large-scale fading and
//!    draw small-scale channels (including the residual self-interference loop).
//! 2. [`pilots`]: assign orthogonal pilots with the heap-based balancing
//!    algorithm (or randomly, for the baselines).
//! 3. [`estimation`]: simulate uplink training and form LMMSE estimates with
//!    their closed-form error variances.
//! 4. [`zf`]: build zero-forcing precoders and receivers and evaluate SINRs.
//! 5. [`optimizer`]: maximize spectral efficiency with successive inner
//!    approximation, recover the AP/DL-UE association and refine.
//!
//! [`harness`] wires the pieces into seeded Monte Carlo experiments that emit CSV.

pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod pilots;
pub mod scenario;
pub mod zf;

mod error;

pub use error::{Error, Result};
pub use scenario::SystemConfig;
