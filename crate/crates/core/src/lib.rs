pub mod model;
pub mod polyalgebra;
pub mod spectral;
pub mod testing;
