//! Discretized logistic mixtures over `{0..255}` and their 16-bit integer tables.
//!
//! Pixel `x` occupies the bin centred on `2x/255 - 1` with half-width `1/255`.
//! Bins 0 and 255 absorb the open tails, so every component's mass is exactly
//! one. For RGB the green and blue means are shifted linearly by the already
//! known red (and green) values, each scaled to `[-1, 1]`.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::OutputParams;

/// Fixed-point precision of every frequency table.
pub const PRECISION: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION;
const BUDGET: u32 = TOTAL - 256;

pub type Pmf = [f64; 256];

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn centered(v: u8) -> f64 {
    2.0 * v as f64 / 255.0 - 1.0
}

/// Mean of component `k` for `channel`, after coupling with earlier channels.
fn coupled_mean(params: &OutputParams, k: usize, channel: usize, prior: &[u8]) -> f64 {
    let mu = params.mean(k, channel) as f64;
    match channel {
        1 => mu + (params.coupling(k, 0) as f64).tanh() * centered(prior[0]),
        2 => {
            mu + (params.coupling(k, 1) as f64).tanh() * centered(prior[0])
                + (params.coupling(k, 2) as f64).tanh() * centered(prior[1])
        }
        _ => mu,
    }
}

/// Probability of every value of `channel`, given the already-known `prior` channel values.
pub fn pmf(params: &OutputParams, channel: usize, prior: &[u8]) -> Result<Pmf> {
    if !params.is_finite() {
        return Err(Error::NonFinite);
    }
    if channel >= params.channels() || prior.len() < channel {
        return Err(Error::Shape(format!(
            "channel {channel} with {} prior values for a {}-channel head",
            prior.len(),
            params.channels()
        )));
    }
    let k_count = params.mixtures();
    let max_logit = (0..k_count)
        .map(|k| params.logit(k) as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = (0..k_count)
        .map(|k| (params.logit(k) as f64 - max_logit).exp())
        .collect();
    let norm: f64 = weights.iter().sum();

    let mut out = [0.0f64; 256];
    for (k, &wk) in weights.iter().enumerate() {
        let pi = wk / norm;
        let mu = coupled_mean(params, k, channel, prior);
        let inv_s = (-(params.log_scale(k, channel) as f64)).exp();
        let mut below = 0.0f64;
        for (x, slot) in out.iter_mut().enumerate().take(255) {
            let edge = -1.0 + (2 * x + 1) as f64 / 255.0;
            let cdf = sigmoid((edge - mu) * inv_s);
            *slot += pi * (cdf - below);
            below = cdf;
        }
        // 1 - σ(z) evaluated as σ(-z) to keep precision in the upper tail.
        let last_edge = -1.0 + 509.0 / 255.0;
        out[255] += pi * sigmoid(-(last_edge - mu) * inv_s);
    }
    Ok(out)
}

/// Cumulative integer frequencies `c_0 = 0 < c_1 < … < c_256 = 2^16`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QuantizedCdf {
    cum: [u32; 257],
}

impl std::fmt::Debug for QuantizedCdf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuantizedCdf")
            .field("freqs", &self.freqs())
            .finish()
    }
}

impl QuantizedCdf {
    /// Builds a table from per-symbol frequencies; each must be ≥ 1 and they must sum to 2^16.
    pub fn from_freqs(freqs: &[u32; 256]) -> Result<Self> {
        let mut cum = [0u32; 257];
        for (s, &f) in freqs.iter().enumerate() {
            if f == 0 {
                return Err(Error::Validation(format!("symbol {s} has zero frequency")));
            }
            cum[s + 1] = cum[s].saturating_add(f);
        }
        if cum[256] != TOTAL {
            return Err(Error::Validation(format!(
                "frequencies sum to {}, not {TOTAL}",
                cum[256]
            )));
        }
        Ok(Self { cum })
    }

    pub fn uniform() -> Self {
        Self::from_freqs(&[TOTAL / 256; 256]).expect("uniform table is valid")
    }

    pub fn cumulative(&self) -> &[u32; 257] {
        &self.cum
    }

    pub fn start(&self, symbol: u8) -> u32 {
        self.cum[symbol as usize]
    }

    pub fn freq(&self, symbol: u8) -> u32 {
        self.cum[symbol as usize + 1] - self.cum[symbol as usize]
    }

    pub fn freqs(&self) -> [u32; 256] {
        std::array::from_fn(|s| self.cum[s + 1] - self.cum[s])
    }

    /// The symbol whose interval `[start, start + freq)` contains `slot < 2^16`.
    pub fn symbol_for_slot(&self, slot: u32) -> u8 {
        debug_assert!(slot < TOTAL);
        (self.cum.partition_point(|&c| c <= slot) - 1) as u8
    }

    /// `-log2(freq / 2^16)`.
    pub fn cost_bits(&self, symbol: u8) -> f64 {
        PRECISION as f64 - (self.freq(symbol) as f64).log2()
    }
}

/// Integer table for `pmf`: one unit per symbol, the remaining `2^16 - 256`
/// split by floor, leftover units going one at a time to the largest
/// fractional residuals (ties to the lower symbol).
pub fn quantize(pmf: &Pmf) -> QuantizedCdf {
    let total: f64 = pmf.iter().map(|&p| p.max(0.0)).sum();
    if !(total.is_finite() && total > 0.0) {
        return QuantizedCdf::uniform();
    }
    let mut floors = [0u32; 256];
    let mut residuals = [0.0f64; 256];
    let mut assigned: u32 = 0;
    for s in 0..256 {
        let scaled = pmf[s].max(0.0) * BUDGET as f64 / total;
        let fl = scaled.floor().min(BUDGET as f64);
        floors[s] = fl as u32;
        residuals[s] = scaled - fl;
        assigned += floors[s];
    }
    let mut order: [u8; 256] = std::array::from_fn(|s| s as u8);
    let by_residual_desc = |a: &u8, b: &u8| {
        residuals[*b as usize]
            .total_cmp(&residuals[*a as usize])
            .then(a.cmp(b))
    };
    if assigned <= BUDGET {
        let mut rem = (BUDGET - assigned) as usize;
        // Only the set of winners matters, so a partial selection is enough.
        if rem > 0 && rem < 256 {
            order.select_nth_unstable_by(rem - 1, by_residual_desc);
        } else {
            order.sort_unstable_by(by_residual_desc);
        }
        while rem > 0 {
            for &s in order.iter().take(rem.min(256)) {
                floors[s as usize] += 1;
            }
            rem = rem.saturating_sub(256);
        }
    } else {
        // Only reachable through rounding in `scaled`; take back from the
        // smallest residuals among symbols that have units to give.
        let mut excess = assigned - BUDGET;
        order.sort_unstable_by(|a, b| by_residual_desc(b, a));
        while excess > 0 {
            for &s in order.iter() {
                if excess == 0 {
                    break;
                }
                if floors[s as usize] > 0 {
                    floors[s as usize] -= 1;
                    excess -= 1;
                }
            }
        }
    }
    let freqs: [u32; 256] = std::array::from_fn(|s| floors[s] + 1);
    QuantizedCdf::from_freqs(&freqs).expect("quantizer preserves the total")
}

/// `quantize(pmf(..))`.
pub fn quantized_cdf(params: &OutputParams, channel: usize, prior: &[u8]) -> Result<QuantizedCdf> {
    Ok(quantize(&pmf(params, channel, prior)?))
}

/// `-Σ log2 p(x)` over every subpixel, with `params` in row-major pixel order.
pub fn log2_likelihood(image: &ImageTensor, params: &[OutputParams]) -> Result<f64> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    if params.len() != h * w {
        return Err(Error::Shape(format!(
            "{} parameter sets for {h}x{w} pixels",
            params.len()
        )));
    }
    let mut bits = 0.0;
    for i in 0..h {
        for j in 0..w {
            let px = image.pixel(i, j);
            let p = &params[i * w + j];
            if p.channels() != c {
                return Err(Error::Shape(format!(
                    "head has {} channels, image {c}",
                    p.channels()
                )));
            }
            for ch in 0..c {
                let prob = pmf(p, ch, &px[..ch])?[px[ch] as usize];
                if prob <= 0.0 {
                    return Err(Error::Internal(format!(
                        "zero probability for value {} at ({i}, {j}, {ch})",
                        px[ch]
                    )));
                }
                bits -= prob.log2();
            }
        }
    }
    Ok(bits)
}

/// Bits per subpixel.
pub fn bits_per_dim(bits: f64, image: &ImageTensor) -> f64 {
    bits / image.dimensions() as f64
}
