//! Manifests, configuration-exclusive splits and input preprocessing.

mod manifest;
mod preprocess;
mod split;

pub use manifest::{parse_manifest, read_manifest, write_manifest, Domain, Manifest, Sample, MANIFEST_VERSION};
pub use preprocess::{
    detect_roi, modal_border_intensity, preprocess, preprocess_image, PreprocessTransform, Roi, DEFAULT_INPUT_SIZE,
    ROI_DILATION_PX,
};
pub use split::{split_by_config, train_group_count};
