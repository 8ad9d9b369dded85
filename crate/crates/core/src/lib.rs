//! Quadratic Sturm–Liouville pencils with distributional potentials.

pub mod cjson;
pub mod cli;
pub mod coefficients;
pub mod conditions;
pub mod entire;
pub mod roots;
pub mod forward;
pub mod halfinverse;
pub mod inverse;
pub mod kernels;
pub mod moments;
pub mod recovery;
