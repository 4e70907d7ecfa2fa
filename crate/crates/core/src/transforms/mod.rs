//! Real-world transformations: JPEG compression, resampling and ordered chains.

pub mod chain;
pub mod jpeg;
pub mod resample;

pub use chain::{apply_chain, TransformChain, TransformStep};
pub use jpeg::{
    jpeg_decode, jpeg_encode, jpeg_roundtrip, quant_tables_for_quality, QuantTables, Subsampling,
};
pub use resample::{resample, scaled_dims, ResampleKernel};
