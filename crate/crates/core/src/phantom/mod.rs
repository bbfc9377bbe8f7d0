//! Procedural SPR joint cross-sections with analytic keypoints.
//!
//! Keypoints, in order: K1 rivet-head top, K2 sheet surface next to the head,
//! K3 flare extremum, K4 pierced top-sheet edge, K5 lowest interior rivet
//! point, K6 bottom surface below K5.

mod config;
mod noise;
mod render;

use std::path::Path;

pub use config::*;
pub use noise::{corrupt, NoiseParams};
pub use render::{render, render_full, Rendering, FRAME_MARGIN_PX, MIN_RENDER_SIZE};

use crate::dataio::{write_manifest, Domain, Manifest, Sample};
use crate::rng::{derive_named, derive_seed};
use crate::{Error, Result};

/// Draws per sample before [`generate_dataset`] gives up on a frame overflow.
pub const MAX_GEOMETRY_TRIES: u64 = 10;

/// One generated sample, not yet written to disk.
pub struct GeneratedSample {
    pub config: JointConfig,
    pub rendering: Rendering,
}

/// Generates sample `index` of a dataset. Only `(seed, index)` matters, so a
/// dataset's first samples do not depend on its total count.
pub fn generate_sample(seed: u64, index: u64, domain: Domain, size: usize) -> Result<GeneratedSample> {
    let base = derive_seed(seed, index);
    let mut last = None;
    for attempt in 0..MAX_GEOMETRY_TRIES {
        let s = if attempt == 0 { base } else { derive_seed(base, attempt) };
        let config = sample_config(s);
        match render_full(&config, size) {
            Ok(mut rendering) => {
                if domain == Domain::Noisy {
                    rendering.image = corrupt(&rendering.image, &NoiseParams::ct_like(), derive_named(s, "noise"));
                }
                return Ok(GeneratedSample { config, rendering });
            }
            Err(e @ Error::GeometryOverflow { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Writes `count` images under `out_dir/images/` and `out_dir/manifest.json`.
pub fn generate_dataset(count: usize, domain: Domain, seed: u64, out_dir: &Path, size: usize) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let g = generate_sample(seed, i as u64, domain, size)?;
        let id = format!("{}-{i:06}", domain.as_str());
        let rel = Path::new("images").join(format!("{id}.png"));
        g.rendering.image.write_png(&out_dir.join(&rel))?;
        samples.push(Sample {
            id,
            image_path: rel,
            config_id: g.config.config_id.clone(),
            domain,
            keypoints: g.rendering.keypoints,
            pixel_pitch_mm: g.config.pixel_pitch_mm,
            head_radius_px: g.config.head_radius_px(),
        });
        tracing::debug!(index = i, "generated sample");
    }
    let manifest = Manifest::new(samples).with_root(out_dir);
    write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}
