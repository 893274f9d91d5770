//! Hash-grid color field: distillation from multiview RGB and texture bake.

mod bake;
pub mod check;
mod checkpoint;
mod field;
mod hashgrid;
mod train;

pub use bake::{bake_texture, dilate, latent_preview, samples_from_view, texel_faces};
pub use checkpoint::{load_field, read_field, save_field, write_field};
pub use field::{ColorField, DistillSample};
pub use hashgrid::{corner_index, levels, locate, FieldConfig, Level, LevelCorners};
pub use train::{distill, Adam, DistillConfig, DistillStats};
