//! Seasonal-trend decomposition by iterated Loess (STL).

mod loess;
mod stl;

pub use loess::loess_smooth;
pub use stl::{stl_decompose, stl_decompose_values, Decomposition, StlConfig};

pub(crate) use stl::median;
