//! Encoder, time-conditioned decoder, patch discriminator and contour network.

mod bundle;
pub mod checkpoint;
mod contour;
mod decoder;
mod discriminator;
mod encoder;
mod layers;

pub use bundle::{EncodeMode, ModelBundle};
pub use decoder::{time_embedding, Decoder, TappedDecoder};
pub use discriminator::min_input_side;
