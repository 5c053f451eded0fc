pub mod ahfv;
pub mod antiwindup_plant;
pub mod antiwindup_synth;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod minimax_lqr;
pub mod model;
pub mod optim;
pub mod riccati;
pub mod simulate;
