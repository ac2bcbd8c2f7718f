pub mod citest;
pub mod data;
pub mod density;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod knv;
pub mod orient;
pub mod simgen;
pub mod skeleton;

pub use error::{Error, Result};
