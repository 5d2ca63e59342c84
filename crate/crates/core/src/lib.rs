//! Discrete-event simulator for comparing active queue management schemes
//! on a single-bottleneck dumbbell, including a RED variant whose max_p is
//! computed online by a Kohonen self-organizing map.

pub mod aqm;
pub mod cli;
pub mod engine;
pub mod kred;
pub mod metrics;
pub mod scenario;
pub mod som;
pub mod tcp;
