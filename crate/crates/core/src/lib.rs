// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod backbone;
pub mod dynid;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod pipeline;
pub mod raymap;
pub mod sim;
pub mod smooth;

pub use error::{Error, Result};
