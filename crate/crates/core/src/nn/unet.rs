use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{
    conv_backward, conv_forward, deconv_backward, deconv_forward, instance_norm_backward, instance_norm_forward, relu,
    ConvGeom, Tensor,
};
use super::Scalar;
use crate::rng::rng_from;
use crate::{Error, Result};

/// Probability the untrained head outputs everywhere; almost every target
/// pixel is background.
pub const OUTPUT_PRIOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub num_keypoints: usize,
    pub stages: usize,
    pub base_channels: usize,
    pub channel_growth: usize,
    /// Decoder width at full resolution; the encoder width when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_base_channels: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            in_channels: 1,
            num_keypoints: crate::NUM_KEYPOINTS,
            stages: 4,
            base_channels: 16,
            channel_growth: 2,
            decoder_base_channels: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stages == 0 || self.stages > 10 {
            return bad(format!("stages must lie in 1..=10, got {}", self.stages));
        }
        if self.input_size == 0 || self.input_size % (1 << self.stages) != 0 {
            return bad(format!("input_size {} not divisible by 2^{}", self.input_size, self.stages));
        }
        if self.num_keypoints == 0 || self.in_channels == 0 || self.base_channels == 0 || self.channel_growth == 0 {
            return bad("num_keypoints, in_channels, base_channels and channel_growth must be positive".into());
        }
        if self.decoder_base_channels == Some(0) {
            return bad("decoder_base_channels must be positive".into());
        }
        Ok(())
    }

    pub fn encoder_channels(&self, stage: usize) -> usize {
        self.base_channels * self.channel_growth.pow(stage as u32)
    }

    pub fn decoder_channels(&self, stage: usize) -> usize {
        self.decoder_base_channels.unwrap_or(self.base_channels) * self.channel_growth.pow(stage as u32)
    }

    pub fn bottleneck_size(&self) -> usize {
        self.input_size >> self.stages
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv(ConvGeom),
    /// Transposed 3×3 stride-2 convolution.
    Up,
}

/// One convolution; all but the head are followed by instance norm and ReLU.
#[derive(Debug, Clone)]
struct Layer {
    kind: Kind,
    out_c: usize,
    weight: usize,
    bias: Option<usize>,
}

#[derive(Debug, Clone)]
struct DecoderLevel {
    up: Layer,
    skip_proj: Option<Layer>,
    conv: Layer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Heatmap UNet: strided-conv encoder, transposed-conv decoder, summation
/// skips, 1×1 head with a logistic output.
#[derive(Debug, Clone)]
pub struct Unet<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    encoder: Vec<(Layer, Layer)>,
    /// Deepest level first.
    decoder: Vec<DecoderLevel>,
    head: Layer,
}

/// Saved state of one conv + norm + ReLU block.
struct BlockCache<T> {
    input: Tensor<T>,
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<T> {
    encoder: Vec<(BlockCache<T>, BlockCache<T>)>,
    decoder: Vec<(BlockCache<T>, Option<BlockCache<T>>, BlockCache<T>)>,
    head_input: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// On/off state of every ReLU in the network, in a fixed order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut blocks: Vec<&BlockCache<T>> = Vec::new();
        for (a, b) in &self.encoder {
            blocks.extend([a, b]);
        }
        for (u, p, c) in &self.decoder {
            blocks.push(u);
            blocks.extend(p.iter());
            blocks.push(c);
        }
        blocks.iter().flat_map(|b| b.xhat.data.iter().map(|&v| v > T::ZERO)).collect()
    }
}

const C3: ConvGeom = ConvGeom { k: 3, stride: 1, pad: 1 };
const C3S2: ConvGeom = ConvGeom { k: 3, stride: 2, pad: 1 };
const C1: ConvGeom = ConvGeom { k: 1, stride: 1, pad: 0 };

impl<T: Scalar> Unet<T> {
    /// Builds the network with Kaiming-normal weights drawn from `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let mut params: Vec<Param<T>> = Vec::new();
        let mut layer = |name: String, kind: Kind, in_c: usize, out_c: usize, bias: bool, params: &mut Vec<Param<T>>| {
            let (shape, fan_in) = match kind {
                Kind::Conv(g) => (vec![out_c, in_c, g.k, g.k], in_c * g.k * g.k),
                Kind::Up => (vec![in_c, out_c, 3, 3], in_c * 9),
            };
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| T::from_f64(normal.sample(&mut rng))).collect();
            params.push(Param { name: format!("{name}.weight"), shape, data });
            let weight = params.len() - 1;
            let bias = bias.then(|| {
                let b = (OUTPUT_PRIOR / (1.0 - OUTPUT_PRIOR)).ln();
                params.push(Param { name: format!("{name}.bias"), shape: vec![out_c], data: vec![T::from_f64(b); out_c] });
                params.len() - 1
            });
            Layer { kind, out_c, weight, bias }
        };

        let mut encoder = Vec::new();
        let mut c_in = config.in_channels;
        for s in 0..config.stages {
            let c = config.encoder_channels(s);
            let a = layer(format!("enc{s}.conv"), Kind::Conv(C3), c_in, c, false, &mut params);
            let b = layer(format!("enc{s}.down"), Kind::Conv(C3S2), c, c, false, &mut params);
            encoder.push((a, b));
            c_in = c;
        }
        let mut decoder = Vec::new();
        for s in (0..config.stages).rev() {
            let (ce, cd) = (config.encoder_channels(s), config.decoder_channels(s));
            let up = layer(format!("dec{s}.up"), Kind::Up, c_in, cd, false, &mut params);
            let skip_proj = (ce != cd).then(|| layer(format!("dec{s}.skip"), Kind::Conv(C1), ce, cd, false, &mut params));
            let conv = layer(format!("dec{s}.conv"), Kind::Conv(C3), cd, cd, false, &mut params);
            decoder.push(DecoderLevel { up, skip_proj, conv });
            c_in = cd;
        }
        let head = layer("head".into(), Kind::Conv(C1), c_in, config.num_keypoints, true, &mut params);
        Ok(Self { config: config.clone(), params, encoder, decoder, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Zeroed gradient buffers shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::ZERO; p.data.len()]).collect()
    }

    fn conv_raw(&self, l: &Layer, x: &Tensor<T>) -> Tensor<T> {
        let w = &self.params[l.weight].data;
        match l.kind {
            Kind::Conv(g) => conv_forward(x, w, l.bias.map(|b| self.params[b].data.as_slice()), l.out_c, g),
            Kind::Up => deconv_forward(x, w, l.out_c),
        }
    }

    fn block(&self, l: &Layer, x: Tensor<T>) -> (Tensor<T>, BlockCache<T>) {
        let mut xhat = self.conv_raw(l, &x);
        let inv_std = instance_norm_forward(&mut xhat);
        (relu(&xhat), BlockCache { input: x, xhat, inv_std })
    }

    fn block_backward(&self, l: &Layer, cache: &BlockCache<T>, mut dy: Tensor<T>, grads: &mut [Vec<T>], need_dx: bool) -> Option<Tensor<T>> {
        for (d, &x) in dy.data.iter_mut().zip(&cache.xhat.data) {
            if !(x > T::ZERO) {
                *d = T::ZERO;
            }
        }
        instance_norm_backward(&cache.xhat, &cache.inv_std, &mut dy);
        self.conv_raw_backward(l, &cache.input, &dy, grads, need_dx)
    }

    fn conv_raw_backward(&self, l: &Layer, x: &Tensor<T>, dy: &Tensor<T>, grads: &mut [Vec<T>], need_dx: bool) -> Option<Tensor<T>> {
        let w = &self.params[l.weight].data;
        match l.kind {
            Kind::Conv(g) => {
                let (dw, db) = match l.bias {
                    Some(b) => {
                        let (lo, hi) = grads.split_at_mut(b);
                        (&mut lo[l.weight], Some(hi[0].as_mut_slice()))
                    }
                    None => (&mut grads[l.weight], None),
                };
                conv_backward(x, dy, w, dw, db, g, need_dx)
            }
            Kind::Up => Some(deconv_backward(x, dy, w, &mut grads[l.weight])),
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        let s = self.config.input_size;
        let want = self.config.in_channels * s * s;
        if input.len() != want {
            return Err(Error::Shape(format!(
                "expected {}×{s}×{s} input ({want} values), got {}",
                self.config.in_channels,
                input.len()
            )));
        }
        Ok(())
    }

    /// Logits for one sample, with the activations needed by [`Unet::backward`].
    pub fn forward_train(&self, input: &[T]) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let s = self.config.input_size;
        let mut x = Tensor::from_vec(self.config.in_channels, s, s, input.to_vec());
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut enc_cache = Vec::with_capacity(self.encoder.len());
        for (a, b) in &self.encoder {
            let (skip, ca) = self.block(a, x);
            let (down, cb) = self.block(b, skip.clone());
            skips.push(skip);
            enc_cache.push((ca, cb));
            x = down;
        }
        let mut dec_cache = Vec::with_capacity(self.decoder.len());
        for level in &self.decoder {
            let skip = skips.pop().expect("one skip per level");
            let (mut up, cu) = self.block(&level.up, x);
            let cp = match &level.skip_proj {
                Some(p) => {
                    let (proj, cp) = self.block(p, skip);
                    up.add_assign(&proj);
                    Some(cp)
                }
                None => {
                    up.add_assign(&skip);
                    None
                }
            };
            let (out, cc) = self.block(&level.conv, up);
            dec_cache.push((cu, cp, cc));
            x = out;
        }
        let logits = self.conv_raw(&self.head, &x);
        Ok((logits, ForwardCache { encoder: enc_cache, decoder: dec_cache, head_input: x }))
    }

    /// Accumulates parameter gradients into `grads` given the gradient of the
    /// loss with respect to the logits.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>, grads: &mut [Vec<T>]) {
        let mut d = self.conv_raw_backward(&self.head, &cache.head_input, dlogits, grads, true).expect("dx");
        let mut dskips = Vec::with_capacity(self.decoder.len());
        for (level, (cu, cp, cc)) in self.decoder.iter().zip(&cache.decoder).rev() {
            let dsum = self.block_backward(&level.conv, cc, d, grads, true).expect("dx");
            let dskip = match (&level.skip_proj, cp) {
                (Some(p), Some(cp)) => self.block_backward(p, cp, dsum.clone(), grads, true).expect("dx"),
                _ => dsum.clone(),
            };
            dskips.push(dskip);
            d = self.block_backward(&level.up, cu, dsum, grads, true).expect("dx");
        }
        // dskips now runs from the shallowest level to the deepest
        for (s, ((a, b), (ca, cb))) in self.encoder.iter().zip(&cache.encoder).enumerate().rev() {
            let mut dskip = self.block_backward(b, cb, d, grads, true).expect("dx");
            dskip.add_assign(&dskips[s]);
            match self.block_backward(a, ca, dskip, grads, s > 0) {
                Some(dx) => d = dx,
                None => return,
            }
        }
    }

    /// Per-pixel probabilities for a batch laid out `B×C×H×W`; output is
    /// `B×num_keypoints×H×W`.
    pub fn forward(&self, batch: &[T]) -> Result<Vec<T>> {
        let s = self.config.input_size;
        let per = self.config.in_channels * s * s;
        if batch.is_empty() || batch.len() % per != 0 {
            return Err(Error::Shape(format!("batch of {} values is not a multiple of {per}", batch.len())));
        }
        let mut out = Vec::with_capacity(batch.len() / per * self.config.num_keypoints * s * s);
        for sample in batch.chunks(per) {
            let (logits, _) = self.forward_train(sample)?;
            out.extend(logits.data.into_iter().map(sigmoid));
        }
        Ok(out)
    }
}

/// Probability clamp keeping every output strictly inside (0, 1).
pub const PROB_EPS: f64 = 1e-7;

/// Logistic function clamped to `[PROB_EPS, 1 − PROB_EPS]`.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    let p = 1.0 / (1.0 + (-z.to_f64()).exp());
    T::from_f64(p.clamp(PROB_EPS, 1.0 - PROB_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_build_shapes() {
        let cfg = ModelConfig::default();
        let a: Unet<f32> = Unet::build(&cfg, 0).unwrap();
        let b: Unet<f32> = Unet::build(&cfg, 0).unwrap();
        assert_eq!(a.parameter_count(), b.parameter_count());
        assert_eq!(a.params(), b.params());
        assert_eq!(cfg.bottleneck_size(), 14);
        assert!(a.parameter_count() > 100_000 && a.parameter_count() < 1_000_000);
        assert!(a.params().iter().all(|p| !p.name.contains("skip")));
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = ModelConfig { input_size: 100, ..Default::default() };
        assert!(matches!(Unet::<f32>::build(&cfg, 0), Err(Error::Config(_))));
        let cfg = ModelConfig { num_keypoints: 0, ..Default::default() };
        assert!(Unet::<f32>::build(&cfg, 0).is_err());
    }

    #[test]
    fn output_shape_and_range() {
        let cfg = ModelConfig { input_size: 32, stages: 2, base_channels: 4, num_keypoints: 1, ..Default::default() };
        let net: Unet<f32> = Unet::build(&cfg, 1).unwrap();
        let batch: Vec<f32> = (0..2 * 32 * 32).map(|i| ((i as f32) * 0.37).sin()).collect();
        let out = net.forward(&batch).unwrap();
        assert_eq!(out.len(), 2 * 32 * 32);
        assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(matches!(net.forward(&batch[..100]), Err(Error::Shape(_))));
    }

    #[test]
    fn projection_only_when_widths_differ() {
        let cfg = ModelConfig { input_size: 16, stages: 2, base_channels: 4, decoder_base_channels: Some(6), ..Default::default() };
        let net: Unet<f64> = Unet::build(&cfg, 0).unwrap();
        let names: Vec<_> = net.params().iter().map(|p| p.name.as_str()).collect();
        assert!(names.contains(&"dec0.skip.weight") && names.contains(&"dec1.skip.weight"));
    }

    fn gradcheck_setup() -> (Unet<f64>, Vec<f64>, Vec<f64>) {
        let cfg = ModelConfig {
            input_size: 32,
            stages: 2,
            base_channels: 4,
            decoder_base_channels: Some(6),
            num_keypoints: 2,
            ..Default::default()
        };
        let net: Unet<f64> = Unet::build(&cfg, 7).unwrap();
        let input: Vec<f64> = (0..32 * 32).map(|i| ((i as f64) * 0.173).sin() * 0.8 + ((i / 32) as f64 * 0.05)).collect();
        let pts = [crate::Point::new(10.3, 12.7), crate::Point::new(21.0, 18.4)];
        let target = crate::heatmap::encode_points(&pts, 32, 32, 2.0).unwrap();
        let target = target.data().iter().map(|&v| v as f64).collect();
        (net, input, target)
    }

    /// Loss plus the on/off state of every ReLU.
    fn loss_and_pattern(net: &Unet<f64>, input: &[f64], target: &[f64]) -> (f64, Vec<bool>) {
        let (logits, cache) = net.forward_train(input).unwrap();
        let mut scratch = vec![0.0; logits.data.len()];
        let loss = crate::train::bce_logits(&logits.data, target, 1.0, &mut scratch);
        (loss, cache.relu_pattern())
    }

    #[test]
    fn gradients_match_central_differences() {
        let (mut net, input, target) = gradcheck_setup();
        let (logits, cache) = net.forward_train(&input).unwrap();
        let mut dlogits = logits.clone();
        crate::train::bce_logits(&logits.data, &target, 1.0, &mut dlogits.data);
        let mut grads = net.zero_grads();
        net.backward(&cache, &dlogits, &mut grads);
        let (_, base) = loss_and_pattern(&net, &input, &target);

        let h = 1e-3;
        let mut checked = 0;
        let mut covered = Vec::new();
        for p in 0..net.params().len() {
            let n = net.params()[p].data.len();
            let mut found = 0;
            for j in 0..n.min(60) {
                let i = (j * 7919 + p * 31) % n;
                let orig = net.params()[p].data[i];
                net.params_mut()[p].data[i] = orig + h;
                let (lp, pp) = loss_and_pattern(&net, &input, &target);
                net.params_mut()[p].data[i] = orig - h;
                let (lm, pm) = loss_and_pattern(&net, &input, &target);
                net.params_mut()[p].data[i] = orig;
                // a stencil straddling a ReLU kink has no meaningful difference quotient
                if pp != base || pm != base {
                    continue;
                }
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[p][i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4, "{}[{i}]: analytic {an:e}, numeric {fd:e}, rel {rel:e}", net.params()[p].name);
                found += 1;
            }
            if found > 0 {
                covered.push(net.params()[p].name.clone());
            }
            checked += found;
        }
        assert!(checked >= 20, "{checked}");
        let kinds = [".conv.", ".down.", ".up.", ".skip.", "head.weight", "head.bias"];
        for k in kinds {
            assert!(covered.iter().any(|n| n.contains(k)), "no weight of kind {k} checked");
        }
    }
}
