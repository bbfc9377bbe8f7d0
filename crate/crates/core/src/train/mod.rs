//! Pixel-wise BCE, the Adam training loop, two-phase transfer learning and prediction.

mod config;
mod loss;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use config::{SigmaStep, TrainConfig};
pub use loss::{bce_logits, bce_loss, bce_mean};

use crate::augment::augment_sample;
use crate::dataio::{detect_roi, preprocess, preprocess_image, split_by_config, Manifest, PreprocessTransform, Roi};
use crate::heatmap::{decode_all, encode, HeatmapStack};
use crate::nn::{sigmoid, Adam, ModelConfig, Sidecar, Unet};
use crate::rng::{derive_named, derive_seed, rng_from};
use crate::{Error, KeypointSet, Raster, Result, NUM_KEYPOINTS};

pub const PREDICTIONS_VERSION: u32 = 1;

/// Phase names recorded in checkpoints and logs.
pub mod phase {
    pub const PRETRAIN: &str = "pretrain";
    pub const FINETUNE: &str = "finetune";
    pub const SCRATCH: &str = "scratch";
}

/// A sample ready for the network: intensities in `[-1, 1]` at the model's
/// input size, keypoints in the same frame.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub config_id: String,
    pub image: Raster,
    pub keypoints: KeypointSet,
    pub transform: PreprocessTransform,
}

fn normalize(mut image: Raster) -> Raster {
    image.map_inplace(|v| v * 2.0 - 1.0);
    image
}

fn read_image(manifest: &Manifest, sample: &crate::dataio::Sample) -> Result<Raster> {
    Raster::read_png(&manifest.image_path(sample))
}

/// Loads, crops and rescales every sample. The detected ROI is replaced by the
/// whole image when it would cut off a keypoint.
pub fn prepare(manifest: &Manifest, input_size: usize) -> Result<Vec<Prepared>> {
    manifest
        .samples
        .iter()
        .map(|s| {
            let image = read_image(manifest, s)?;
            let mut roi = detect_roi(&image);
            if !s.keypoints.points().iter().all(|p| roi.contains(*p)) {
                tracing::debug!(id = %s.id, "keypoint outside detected ROI, using full image");
                roi = Roi::full(&image);
            }
            let (img, kps, transform) = preprocess(&image, &s.keypoints, roi, input_size)?;
            Ok(Prepared { id: s.id.clone(), config_id: s.config_id.clone(), image: normalize(img), keypoints: kps, transform })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: String,
    pub sigma: f64,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

pub struct Trained {
    pub net: Unet<f32>,
    pub sidecar: Sidecar,
    pub log: Vec<EpochLog>,
}

impl Trained {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::nn::save_checkpoint(path, &self.net, &self.sidecar)
    }

    pub fn log_lines(&self) -> String {
        self.log.iter().map(|l| serde_json::to_string(l).expect("plain struct") + "\n").collect()
    }
}

/// Starting point of a phase.
pub enum Init {
    /// New weights drawn from the config seed.
    Fresh,
    Pretrained(Unet<f32>),
}

fn sample_loss_and_grad(net: &Unet<f32>, image: &Raster, target: &HeatmapStack, scale: f64, grads: Option<&mut [Vec<f32>]>) -> Result<f64> {
    let (logits, cache) = net.forward_train(image.data())?;
    let mut dlogits = logits.clone();
    let sum = bce_logits(&logits.data, target.data(), scale, &mut dlogits.data);
    if let Some(grads) = grads {
        net.backward(&cache, &dlogits, grads);
    }
    Ok(sum / logits.data.len() as f64)
}

/// Trains for `config.epochs` epochs on `manifest` and returns the final network.
///
/// Per sample: augmentation (resampled on keypoint ejection), targets encoded
/// at the epoch's σ from the transformed keypoints, forward, BCE. Gradients are
/// averaged over each mini-batch before one Adam step.
pub fn run_phase(init: Init, manifest: &Manifest, config: &TrainConfig, phase: &str) -> Result<Trained> {
    config.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut net = match init {
        Init::Fresh => Unet::<f32>::build(&config.model, derive_named(config.seed, "init"))?,
        Init::Pretrained(net) => {
            if net.config() != &config.model {
                return Err(Error::CheckpointMismatch(format!(
                    "initial network {:?} differs from configured model {:?}",
                    net.config(),
                    config.model
                )));
            }
            net
        }
    };
    let size = config.model.input_size;
    if config.model.num_keypoints != NUM_KEYPOINTS {
        return Err(Error::CheckpointMismatch(format!("model predicts {} maps, data has {NUM_KEYPOINTS} keypoints", config.model.num_keypoints)));
    }

    let (train_m, holdout_m) = if config.holdout_fraction > 0.0 {
        match split_by_config(manifest, 1.0 - config.holdout_fraction, derive_named(config.seed, "holdout")) {
            Ok(pair) => pair,
            Err(Error::InsufficientGroups(_)) => (manifest.clone(), Manifest::new(Vec::new())),
            Err(e) => return Err(e),
        }
    } else {
        (manifest.clone(), Manifest::new(Vec::new()))
    };
    let train = prepare(&train_m, size)?;
    let holdout = prepare(&holdout_m, size)?;
    tracing::info!(phase, train = train.len(), holdout = holdout.len(), params = net.parameter_count(), "starting phase");

    let mut adam = Adam::new(config.adam(), net.params());
    let mut grads = net.zero_grads();
    let order_seed = derive_named(config.seed, "order");
    let augment_seed = derive_named(config.seed, "augment");
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let sigma = config.sigma_at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_from(derive_seed(order_seed, epoch as u64)));
        let epoch_aug = derive_seed(augment_seed, epoch as u64);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let scale = 1.0 / (batch.len() * NUM_KEYPOINTS * size * size) as f64;
            for &i in batch {
                let s = &train[i];
                let (image, kps) = if config.augment_enabled {
                    let (img, k, _) = augment_sample(&s.image, &s.keypoints, derive_seed(epoch_aug, i as u64))?;
                    (img, k)
                } else {
                    (s.image.clone(), s.keypoints.clone())
                };
                let target = encode(&kps, size, size, sigma)?;
                total += sample_loss_and_grad(&net, &image, &target, scale, Some(&mut grads))?;
            }
            adam.step(net.params_mut(), &grads);
        }
        let train_loss = total / train.len() as f64;
        let holdout_loss = if holdout.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            for s in &holdout {
                let target = encode(&s.keypoints, size, size, sigma)?;
                sum += sample_loss_and_grad(&net, &s.image, &target, 1.0, None)?;
            }
            Some(sum / holdout.len() as f64)
        };
        tracing::info!(phase, epoch, sigma, train_loss, holdout_loss, "epoch done");
        log.push(EpochLog { epoch, phase: phase.to_string(), sigma, train_loss, holdout_loss });
    }

    let sidecar = Sidecar {
        model_config: config.model.clone(),
        train_config: serde_json::to_value(config).expect("plain struct"),
        epoch: config.epochs,
        phase: phase.to_string(),
        seed: config.seed,
    };
    Ok(Trained { net, sidecar, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    pub keypoints: KeypointSet,
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predictions {
    pub version: u32,
    pub checkpoint: String,
    pub predictions: Vec<Prediction>,
}

impl Predictions {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if p.version != PREDICTIONS_VERSION {
            return Err(Error::Schema(format!("unsupported predictions version {}", p.version)));
        }
        Ok(p)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Probability maps for one preprocessed, normalized image.
pub fn heatmaps(net: &Unet<f32>, image: &Raster) -> Result<HeatmapStack> {
    let c = net.config();
    let (logits, _) = net.forward_train(image.data())?;
    let probs = logits.data.into_iter().map(sigmoid).collect();
    HeatmapStack::from_vec(c.num_keypoints, c.input_size, c.input_size, probs)
}

/// One prediction in stored-image coordinates, plus the network-frame heatmaps.
pub fn predict_image(net: &Unet<f32>, image: &Raster, subpixel: bool) -> Result<(KeypointSet, Vec<f64>, HeatmapStack, PreprocessTransform)> {
    if net.config().num_keypoints != NUM_KEYPOINTS {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint predicts {} keypoints, manifests carry {NUM_KEYPOINTS}",
            net.config().num_keypoints
        )));
    }
    let (input, transform) = preprocess_image(image, detect_roi(image), net.config().input_size)?;
    let maps = heatmaps(net, &normalize(input))?;
    let (points, conf) = decode_all(&maps, subpixel);
    let kps = KeypointSet::from_slice(&points)?.map(|p| transform.invert(p));
    Ok((kps, conf.into_iter().map(f64::from).collect(), maps, transform))
}

pub fn predict(net: &Unet<f32>, manifest: &Manifest, subpixel: bool, checkpoint: &str) -> Result<Predictions> {
    let mut predictions = Vec::with_capacity(manifest.len());
    for s in &manifest.samples {
        let image = read_image(manifest, s)?;
        let (keypoints, confidence, _, _) = predict_image(net, &image, subpixel)?;
        predictions.push(Prediction { id: s.id.clone(), keypoints, confidence });
    }
    Ok(Predictions { version: PREDICTIONS_VERSION, checkpoint: checkpoint.to_string(), predictions })
}

/// Model config smaller than the default, for quick runs and tests.
pub fn small_model(input_size: usize) -> ModelConfig {
    ModelConfig { input_size, stages: 3, base_channels: 8, ..ModelConfig::default() }
}
