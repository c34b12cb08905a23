//! Network-coding-enabled NDN for layered video streaming.

pub mod galois;
pub mod prlnc;
pub mod optimizer;
pub mod protocol;
pub mod sim;
pub mod config;
