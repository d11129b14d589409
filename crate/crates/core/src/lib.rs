//! Harmonic maps into symmetric spaces from normalized potentials: loop algebra,
//! Birkhoff and Iwasawa factorizations, the DPW construction and its compact dual.

pub mod dpw;
pub mod duality;
pub mod factor;
pub mod linalg;
pub mod loopalg;
pub mod pipeline;
pub mod rational;
pub mod symspace;
pub mod uniton;
pub mod willmore;

pub use linalg::CMat;
pub use loopalg::{DegreeWindow, LaurentLoop, LoopError};
