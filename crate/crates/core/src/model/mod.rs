//! Local PixelCNN: one masked `(h+1) × (2h+1)` convolution followed by 1×1
//! residual blocks and a discretized-logistic-mixture head.
//!
//! The first kernel stores its masked cells (the current pixel and
//! everything right of it on the bottom row) as explicit zeros, so the
//! receptive field of an output is exactly the causal context of radius
//! `h`. Shearing the model only moves first-kernel cells around.

mod format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nnkernel::{self, Tensor};
use crate::schedule;

pub use format::{load_weights, save_weights, MAGIC as WEIGHT_MAGIC, VERSION as WEIGHT_VERSION};

/// Lowest log-scale the head may produce; smaller values are clamped.
pub const MIN_LOG_SCALE: f32 = -8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Dependency horizon `h`.
    pub horizon: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    pub hidden: usize,
    pub resblocks: usize,
    pub mixtures: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            channels: 3,
            hidden: 64,
            resblocks: 2,
            mixtures: 5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.horizon == 0 || self.horizon > u8::MAX as usize {
            return fail(format!("horizon {} out of range", self.horizon));
        }
        if self.channels != 1 && self.channels != 3 {
            return fail(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.hidden == 0 || self.hidden > u16::MAX as usize {
            return fail(format!("hidden width {} out of range", self.hidden));
        }
        if self.resblocks > u8::MAX as usize {
            return fail(format!("{} residual blocks is too many", self.resblocks));
        }
        if self.mixtures == 0 || self.mixtures > u8::MAX as usize {
            return fail(format!("mixture count {} out of range", self.mixtures));
        }
        Ok(())
    }

    pub fn kernel_height(&self) -> usize {
        self.horizon + 1
    }

    pub fn kernel_width(&self) -> usize {
        2 * self.horizon + 1
    }

    /// First-kernel width after shearing with offset `h+1`: `h(h+2)`.
    pub fn sheared_kernel_width(&self) -> usize {
        self.horizon * (self.horizon + 2)
    }

    /// Head outputs per pixel: `3K` for grayscale, `10K` for RGB
    /// (logit, 3 means, 3 log-scales, 3 coupling coefficients per component).
    pub fn params_per_pixel(&self) -> usize {
        match self.channels {
            1 => 3 * self.mixtures,
            _ => 10 * self.mixtures,
        }
    }

    /// Whether first-kernel cell `(row, col)` may be nonzero.
    pub fn is_live_cell(&self, row: usize, col: usize, sheared: bool) -> bool {
        let h = self.horizon;
        if !sheared {
            return row < h || col < h;
        }
        // Sheared row r holds original columns shifted right by r(h+1).
        let shift = row * (h + 1);
        let width = if row < h { 2 * h + 1 } else { h };
        col >= shift && col < shift + width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    pub inner_weight: Tensor,
    pub inner_bias: Tensor,
    pub outer_weight: Tensor,
    pub outer_bias: Tensor,
}

/// Every learned tensor of a [`LocalModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    /// `[h+1, 2h+1, C, hidden]`, or `[h+1, h(h+2), C, hidden]` once sheared.
    pub first_kernel: Tensor,
    pub first_bias: Tensor,
    pub blocks: Vec<ResBlock>,
    /// `[hidden, params_per_pixel]`.
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub sheared: bool,
}

impl WeightSet {
    /// Seeded random initialisation, masked cells zero.
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |dims: &[usize], bound: f32| {
            let n = dims.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
            Tensor::new(dims.to_vec(), data).expect("positive dims")
        };
        let (kh, kw, c, hid) = (
            config.kernel_height(),
            config.kernel_width(),
            config.channels,
            config.hidden,
        );
        let p = config.params_per_pixel();
        let fan_in = (kh * kw * c) as f32;
        let mut first_kernel = uniform(&[kh, kw, c, hid], 1.0 / fan_in.sqrt());
        let first_bias = uniform(&[hid], 0.1);
        let inner = 1.0 / (hid as f32).sqrt();
        let blocks = (0..config.resblocks)
            .map(|_| ResBlock {
                inner_weight: uniform(&[hid, hid], inner),
                inner_bias: uniform(&[hid], 0.1),
                outer_weight: uniform(&[hid, hid], 0.5 * inner),
                outer_bias: uniform(&[hid], 0.1),
            })
            .collect();
        let head_weight = uniform(&[hid, p], inner);
        let mut head_bias = uniform(&[p], 0.1);
        // Centre the log-scales at a moderately peaked value.
        let k = config.mixtures;
        let scales = match config.channels {
            1 => 2 * k..3 * k,
            _ => 4 * k..7 * k,
        };
        for v in &mut head_bias.data_mut()[scales] {
            *v -= 2.0;
        }
        zero_masked(config, &mut first_kernel, false);
        Self {
            first_kernel,
            first_bias,
            blocks,
            head_weight,
            head_bias,
            sheared: false,
        }
    }

    /// All-zero network whose head bias makes every conditional (nearly) uniform.
    ///
    /// Needs 128 components: each one sits on the boundary between two
    /// adjacent bins with the smallest allowed scale, so it splits its mass
    /// evenly over that pair.
    pub fn uniform_head(config: &ModelConfig) -> Result<Self> {
        if config.mixtures != 128 {
            return Err(Error::Validation(format!(
                "uniform head needs 128 mixture components, config has {}",
                config.mixtures
            )));
        }
        let (kh, kw, c, hid) = (
            config.kernel_height(),
            config.kernel_width(),
            config.channels,
            config.hidden,
        );
        let k = config.mixtures;
        let mut head_bias = vec![0.0f32; config.params_per_pixel()];
        for m in 0..k {
            let mean = -1.0 + (4 * m + 1) as f32 / 255.0;
            for ch in 0..c {
                head_bias[k + m * c + ch] = mean;
                head_bias[k + k * c + m * c + ch] = MIN_LOG_SCALE;
            }
        }
        Ok(Self {
            first_kernel: Tensor::zeros(&[kh, kw, c, hid]),
            first_bias: Tensor::zeros(&[hid]),
            blocks: (0..config.resblocks)
                .map(|_| ResBlock {
                    inner_weight: Tensor::zeros(&[hid, hid]),
                    inner_bias: Tensor::zeros(&[hid]),
                    outer_weight: Tensor::zeros(&[hid, hid]),
                    outer_bias: Tensor::zeros(&[hid]),
                })
                .collect(),
            head_weight: Tensor::zeros(&[hid, config.params_per_pixel()]),
            head_bias: Tensor::new(vec![config.params_per_pixel()], head_bias)?,
            sheared: false,
        })
    }

    /// Every tensor in file order, with its name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("first.weight".to_string(), &self.first_kernel),
            ("first.bias".to_string(), &self.first_bias),
        ];
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{b}.inner.weight"), &block.inner_weight));
            out.push((format!("block{b}.inner.bias"), &block.inner_bias));
            out.push((format!("block{b}.outer.weight"), &block.outer_weight));
            out.push((format!("block{b}.outer.bias"), &block.outer_bias));
        }
        out.push(("head.weight".to_string(), &self.head_weight));
        out.push(("head.bias".to_string(), &self.head_bias));
        out
    }

    /// Checks every tensor shape against `config`, finiteness, and that masked cells are zero.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let (kh, c, hid, p) = (
            config.kernel_height(),
            config.channels,
            config.hidden,
            config.params_per_pixel(),
        );
        let kw = if self.sheared {
            config.sheared_kernel_width()
        } else {
            config.kernel_width()
        };
        let expect = |name: &str, t: &Tensor, dims: &[usize]| {
            if t.dims() != dims {
                return Err(Error::Validation(format!(
                    "{name} has shape {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} contains non-finite values"
                )));
            }
            Ok(())
        };
        expect("first.weight", &self.first_kernel, &[kh, kw, c, hid])?;
        expect("first.bias", &self.first_bias, &[hid])?;
        if self.blocks.len() != config.resblocks {
            return Err(Error::Validation(format!(
                "{} residual blocks, config says {}",
                self.blocks.len(),
                config.resblocks
            )));
        }
        for block in &self.blocks {
            expect("inner.weight", &block.inner_weight, &[hid, hid])?;
            expect("inner.bias", &block.inner_bias, &[hid])?;
            expect("outer.weight", &block.outer_weight, &[hid, hid])?;
            expect("outer.bias", &block.outer_bias, &[hid])?;
        }
        expect("head.weight", &self.head_weight, &[hid, p])?;
        expect("head.bias", &self.head_bias, &[p])?;
        let cell = c * hid;
        for (idx, chunk) in self.first_kernel.data().chunks_exact(cell).enumerate() {
            let (row, col) = (idx / kw, idx % kw);
            if !config.is_live_cell(row, col, self.sheared) && chunk.iter().any(|&v| v != 0.0) {
                return Err(Error::Validation(format!(
                    "masked first-kernel cell ({row}, {col}) is nonzero"
                )));
            }
        }
        Ok(())
    }
}

fn zero_masked(config: &ModelConfig, kernel: &mut Tensor, sheared: bool) {
    let kw = kernel.dims()[1];
    let cell = config.channels * config.hidden;
    for (idx, chunk) in kernel.data_mut().chunks_exact_mut(cell).enumerate() {
        if !config.is_live_cell(idx / kw, idx % kw, sheared) {
            chunk.fill(0.0);
        }
    }
}

/// Moves first-kernel row `r` (0-indexed) right by `r(h+1)` columns, widening
/// the kernel to `h(h+2)`. Every other tensor is copied unchanged.
pub fn shear_weights(weights: &WeightSet, config: &ModelConfig) -> Result<WeightSet> {
    if weights.sheared {
        return Err(Error::AlreadySheared);
    }
    weights.validate(config)?;
    let h = config.horizon;
    let (kh, kw, sw) = (
        config.kernel_height(),
        config.kernel_width(),
        config.sheared_kernel_width(),
    );
    let cell = config.channels * config.hidden;
    let src = weights.first_kernel.data();
    let mut data = vec![0.0f32; kh * sw * cell];
    for row in 0..kh {
        for col in 0..kw {
            if !config.is_live_cell(row, col, false) {
                continue;
            }
            let to = col + row * (h + 1);
            data[(row * sw + to) * cell..][..cell]
                .copy_from_slice(&src[(row * kw + col) * cell..][..cell]);
        }
    }
    Ok(WeightSet {
        first_kernel: Tensor::new(vec![kh, sw, config.channels, config.hidden], data)?,
        sheared: true,
        ..weights.clone()
    })
}

/// Head output for one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputParams {
    channels: usize,
    mixtures: usize,
    values: Vec<f32>,
}

impl OutputParams {
    pub fn new(channels: usize, mixtures: usize, values: Vec<f32>) -> Result<Self> {
        let per = if channels == 1 { 3 } else { 10 };
        if (channels != 1 && channels != 3) || mixtures == 0 || values.len() != per * mixtures {
            return Err(Error::Shape(format!(
                "{} values do not describe {mixtures} components over {channels} channels",
                values.len()
            )));
        }
        Ok(Self {
            channels,
            mixtures,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mixtures(&self) -> usize {
        self.mixtures
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn logit(&self, k: usize) -> f32 {
        self.values[k]
    }

    pub fn mean(&self, k: usize, c: usize) -> f32 {
        self.values[self.mixtures + k * self.channels + c]
    }

    /// Clamped at [`MIN_LOG_SCALE`].
    pub fn log_scale(&self, k: usize, c: usize) -> f32 {
        self.values[self.mixtures * (1 + self.channels) + k * self.channels + c].max(MIN_LOG_SCALE)
    }

    /// Raw coupling coefficient: 0 scales R into G, 1 scales R into B, 2 scales G into B.
    pub fn coupling(&self, k: usize, which: usize) -> f32 {
        debug_assert_eq!(self.channels, 3);
        self.values[7 * self.mixtures + 3 * k + which]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.channels == other.channels
            && self.mixtures == other.mixtures
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A validated weight set ready for inference.
#[derive(Clone, Debug)]
pub struct LocalModel {
    config: ModelConfig,
    weights: WeightSet,
    hash: u64,
    /// First-kernel cells with at least one nonzero weight, as flat patch offsets.
    taps: Vec<usize>,
}

impl LocalModel {
    pub fn new(config: ModelConfig, weights: WeightSet) -> Result<Self> {
        weights.validate(&config)?;
        let hash = format::content_hash(&config, &weights);
        let taps = weights
            .first_kernel
            .data()
            .chunks_exact(config.hidden)
            .enumerate()
            .filter(|(_, w)| w.iter().any(|&v| v != 0.0))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            config,
            weights,
            hash,
            taps,
        })
    }

    /// Seeded random model.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Self::new(config, WeightSet::random(&config, seed))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (config, weights) = load_weights(bytes)?;
        Self::new(config, weights)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        save_weights(&self.config, &self.weights)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    /// FNV-1a-64 of the serialized weight file (the value stored in its trailer).
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn is_sheared(&self) -> bool {
        self.weights.sheared
    }

    /// The same model with its first kernel sheared by `h+1`.
    pub fn sheared(&self) -> Result<Self> {
        Self::new(self.config, shear_weights(&self.weights, &self.config)?)
    }

    /// `[h+1, width, C]` where width is `2h+1`, or `h(h+2)` for a sheared model.
    pub fn patch_dims(&self) -> [usize; 3] {
        let w = if self.weights.sheared {
            self.config.sheared_kernel_width()
        } else {
            self.config.kernel_width()
        };
        [self.config.kernel_height(), w, self.config.channels]
    }

    /// Distribution parameters of the pixel whose context is `patch`.
    pub fn forward_patch(&self, patch: &Tensor) -> Result<OutputParams> {
        let dims = self.patch_dims();
        if patch.dims() != dims {
            return Err(Error::Shape(format!(
                "patch {:?} does not match model input {dims:?}",
                patch.dims()
            )));
        }
        let mut out = vec![0.0f32; self.config.params_per_pixel()];
        self.forward_into(patch.data(), &mut out);
        OutputParams::new(self.config.channels, self.config.mixtures, out)
    }

    /// Unchecked forward on a flat patch; `out` has `params_per_pixel` slots.
    pub(crate) fn forward_into(&self, patch: &[f32], out: &mut [f32]) {
        let hid = self.config.hidden;
        let kernel = self.weights.first_kernel.data();
        let mut x = vec![0.0f32; hid];
        for &tap in &self.taps {
            nnkernel::accumulate(&mut x, &kernel[tap * hid..][..hid], patch[tap]);
        }
        for (v, &b) in x.iter_mut().zip(self.weights.first_bias.data()) {
            *v += b;
        }
        self.trunk_and_head(x, out);
    }

    /// Everything after the first-layer sum (bias already added).
    fn trunk_and_head(&self, mut x: Vec<f32>, out: &mut [f32]) {
        let hid = self.config.hidden;
        nnkernel::elu_in_place(&mut x);
        let mut t = vec![0.0f32; hid];
        let mut u = vec![0.0f32; hid];
        for block in &self.weights.blocks {
            nnkernel::dense_into(
                &x,
                block.inner_weight.data(),
                block.inner_bias.data(),
                &mut t,
            );
            nnkernel::elu_in_place(&mut t);
            nnkernel::dense_into(
                &t,
                block.outer_weight.data(),
                block.outer_bias.data(),
                &mut u,
            );
            for (a, &b) in x.iter_mut().zip(&u) {
                *a += b;
            }
            nnkernel::elu_in_place(&mut x);
        }
        nnkernel::dense_into(
            &x,
            self.weights.head_weight.data(),
            self.weights.head_bias.data(),
            out,
        );
    }

    /// Parameters for every pixel via one full-image convolution; row-major grid.
    ///
    /// Meant for evaluation. The codec never uses it: it goes through
    /// [`forward_patch`](Self::forward_patch) so encoder and decoder share
    /// one inference path.
    pub fn forward_image(&self, image: &ImageTensor) -> Result<Vec<OutputParams>> {
        if self.weights.sheared {
            return Err(Error::Shape(
                "forward_image expects an unsheared model".into(),
            ));
        }
        let c = self.config.channels;
        if image.channels() != c {
            return Err(Error::Shape(format!(
                "image has {} channels, model expects {c}",
                image.channels()
            )));
        }
        let h = self.config.horizon;
        let (ih, iw) = (image.height(), image.width());
        let (ph, pw) = (ih + h, iw + 2 * h);
        let mut padded = Tensor::zeros(&[ph, pw, c]);
        for i in 0..ih {
            for j in 0..iw {
                for ch in 0..c {
                    padded.set(
                        &[i + h, j + h, ch],
                        schedule::normalize(image.get(i, j, ch)),
                    );
                }
            }
        }
        let pre = nnkernel::conv2d_valid(&padded, &self.weights.first_kernel, (h, h))?;
        let hid = self.config.hidden;
        pre.data()
            .chunks_exact(hid)
            .map(|acc| {
                let mut x = acc.to_vec();
                for (v, &b) in x.iter_mut().zip(self.weights.first_bias.data()) {
                    *v += b;
                }
                let mut out = vec![0.0f32; self.config.params_per_pixel()];
                self.trunk_and_head(x, &mut out);
                OutputParams::new(c, self.config.mixtures, out)
            })
            .collect()
    }
}
