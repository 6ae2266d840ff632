//! Lossless image compression with a local autoregressive model.
//!
//! Each pixel is modelled from a causal window of radius `h` only, which
//! lets a decoder process every pixel on a diagonal wavefront at once:
//! `W + (H-1)(h+1)` rounds instead of `H·W`. Three decoders share one
//! bitstream:
//!
//! - [`Scheme::Sequential`] visits one pixel per round.
//! - [`Scheme::Parallel`] batches each wavefront step across worker threads.
//! - [`Scheme::Sheared`] shifts row `i` right by `(i-1)(h+1)` so every
//!   wavefront becomes one contiguous column, and runs a model whose first
//!   kernel is sheared the same way.
//!
//! ```no_run
//! use loclc::{codec, ImageTensor, LocalModel, ModelConfig, Scheme};
//!
//! let model = LocalModel::random(ModelConfig::default(), 0)?;
//! let image = ImageTensor::read("photo.ppm", None)?;
//! let stream = codec::encode(&image, &model, 0)?;
//! let decoded = codec::decode(&stream, &model, Scheme::Sheared, 0)?;
//! assert_eq!(decoded.image, image);
//! # Ok::<(), loclc::Error>(())
//! ```

pub mod codec;
pub mod distribution;
pub mod error;
pub mod image;
pub mod model;
pub mod nnkernel;
pub mod parity;
pub mod rans;
pub mod schedule;
pub mod shear;

pub use crate::image::ImageTensor;
pub use codec::{CompressedStream, Scheme};
pub use error::{Error, Result};
pub use model::{LocalModel, ModelConfig, OutputParams, WeightSet};
