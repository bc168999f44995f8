#![no_std]

extern crate alloc;

pub mod brute;
pub mod contour;
pub mod env;
pub mod evfit;
pub mod gp;
pub mod kde;
pub mod linalg;
pub mod math;
pub mod narx;
pub mod optim;
pub mod presets;
pub mod response;
pub mod rng;
pub mod seq;
