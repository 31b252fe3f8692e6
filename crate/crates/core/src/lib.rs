pub mod error;
pub mod geometry;
pub mod imagebuf;
pub mod autodiff;
pub mod warp;
pub mod losses;
pub mod synthdata;
pub mod refine;
pub mod augment;
pub mod eval;
pub mod gradcheck;
pub mod cli;

pub use error::{Error, Result};
