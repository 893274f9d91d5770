//! Multiview latent texture sampling on UV-mapped meshes.
//!
//! A latent texture is denoised by running a 2D diffusion denoiser on
//! several rendered views at every sampling step and merging the per-view
//! updates back into texture space, picking for each texel the view that
//! sees it at the highest resolution. A small hash-grid color field can then
//! be distilled from the decoded views and baked into a texture atlas.

// `!(x > 0.0)` rejects NaN too; index loops mirror the math in the kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod denoiser;
pub mod diffusion;
pub mod colorfield;
pub mod error;
pub mod geometry;
pub mod io;
pub mod raster;
pub mod rng;
pub mod sims;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{Grid, LatentImage, LatentTexture};
