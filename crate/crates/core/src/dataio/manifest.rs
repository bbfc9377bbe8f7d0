use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, KeypointSet, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Clean,
    Noisy,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Clean => "clean",
            Domain::Noisy => "noisy",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clean" => Ok(Domain::Clean),
            "noisy" => Ok(Domain::Noisy),
            other => Err(format!("unknown domain {other:?} (expected clean or noisy)")),
        }
    }
}

/// One annotated image. Keypoints are in the pixel frame of the stored image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    /// Relative paths are resolved against the manifest's directory.
    #[serde(rename = "image")]
    pub image_path: PathBuf,
    pub config_id: String,
    pub domain: Domain,
    pub keypoints: KeypointSet,
    pub pixel_pitch_mm: f64,
    pub head_radius_px: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub samples: Vec<Sample>,
    /// Directory relative image paths are resolved against.
    #[serde(skip)]
    pub root: Option<PathBuf>,
}

/// Equality ignores the directory the manifest was loaded from.
impl PartialEq for Manifest {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.samples == other.samples
    }
}

impl Manifest {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { version: MANIFEST_VERSION, samples, root: None }
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = Some(root.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn image_path(&self, sample: &Sample) -> PathBuf {
        match &self.root {
            Some(root) if sample.image_path.is_relative() => root.join(&sample.image_path),
            _ => sample.image_path.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Schema(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Schema(format!("duplicate sample id {:?}", s.id)));
            }
            if !(s.head_radius_px > 0.0 && s.head_radius_px.is_finite()) {
                return Err(Error::Schema(format!("sample {:?}: head_radius_px must be positive", s.id)));
            }
            if !(s.pixel_pitch_mm > 0.0 && s.pixel_pitch_mm.is_finite()) {
                return Err(Error::Schema(format!("sample {:?}: pixel_pitch_mm must be positive", s.id)));
            }
        }
        Ok(())
    }

    /// Rewrites relative image paths so they resolve from `new_root`.
    pub fn rebased(&self, new_root: &Path) -> Result<Manifest> {
        let mut samples = self.samples.clone();
        for s in &mut samples {
            let abs = self.image_path(s);
            s.image_path = if abs.is_relative() && self.root.is_none() {
                abs
            } else {
                crate::io::relative_to(&abs, new_root)?
            };
        }
        Ok(Manifest { version: self.version, samples, root: Some(new_root.to_path_buf()) })
    }

    /// Subset with the given sample indices, keeping the same root.
    pub fn select(&self, indices: &[usize]) -> Manifest {
        Manifest {
            version: self.version,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            root: self.root.clone(),
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    m.validate()?;
    Ok(m)
}

/// Reads and validates a manifest; relative image paths resolve against its directory.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = parse_manifest(&text).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(m.with_root(root))
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    crate::io::write_json(path, manifest)
}
