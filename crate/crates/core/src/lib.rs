pub mod diagnostics;
pub mod error;
pub mod ibp;
pub mod inference;
pub mod model;
pub mod partition;
pub mod primitives;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod stable;
pub mod stick;
pub mod store;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;
pub use special::GfcTable;
pub use weights::WeightTable;

pub type GfcTable64 = GfcTable<f64>;
pub type GfcTable32 = GfcTable<f32>;
pub type WeightTable64 = WeightTable<f64>;
pub type WeightTable32 = WeightTable<f32>;
