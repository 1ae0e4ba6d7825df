pub mod error;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod steady;
pub mod estimator;
pub mod cost;
pub mod parallel;
pub mod simulate;
pub mod oracle;
pub mod export;
pub mod fixtures;
pub mod cli;
