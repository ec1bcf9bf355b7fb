pub mod bootstrap;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod identification;
pub mod linalg;
pub mod model;
pub mod simulation;
