//! Mesh ingestion and normalization, the fallback UV atlas, camera rigs,
//! prompt-view suffixes and texture-resolution policies.

mod atlas;
mod camera;
mod mesh;
mod obj;
pub mod primitives;
mod resolution;

pub use atlas::naive_atlas;
pub use camera::{
    augment_prompt, fit_fov, make_cameras, orbit_eye, prompt_view_suffix, Camera, CameraFrame,
    CameraPreset, PresetKind, FOV_MARGIN, JITTER_DEG, LATENT_IMAGE_SIZE,
};
pub use mesh::{
    for_each_uv_texel, normalize_mesh, uv_chart_overlaps, uv_to_texel, Aabb, TriMesh, Uv, Vec3,
};
pub use obj::{load_obj, parse_obj, prepare_mesh, write_obj, FALLBACK_ATLAS_RESOLUTION};
pub use resolution::{texture_resolution, ResolutionMode};
