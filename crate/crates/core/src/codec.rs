//! End-to-end compression.
//!
//! Every scheme uses the same symbol order: wavefront ticks ascending, rows
//! ascending within a tick, channels innermost. So one stream serves all three
//! decoders. Model evaluation always goes through the per-pixel patch path,
//! in the encoder too, so encoder and decoder compute bit-identical tables
//! regardless of batching or thread count.
//!
//! Container, little-endian:
//!
//! ```text
//! "NLLC" | version u8 = 1 | H u32 | W u32 | C u8 | h u8 | model hash u64 | payload len u32 | payload
//! ```

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::distribution::quantized_cdf;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::LocalModel;
use crate::rans::{RansDecoder, RansEncoder};
use crate::schedule::{self, fill_patch};
use crate::shear::{column_rows, unshear_image, ShearedBuffer};

pub const MAGIC: &[u8; 4] = b"NLLC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1 + 1 + 8 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Sequential,
    Parallel,
    Sheared,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Sequential, Scheme::Parallel, Scheme::Sheared];

    pub fn short_name(self) -> &'static str {
        match self {
            Scheme::Sequential => "seq",
            Scheme::Parallel => "par",
            Scheme::Sheared => "shear",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "seq" | "sequential" => Ok(Scheme::Sequential),
            "par" | "parallel" => Ok(Scheme::Parallel),
            "shear" | "sheared" => Ok(Scheme::Sheared),
            other => Err(Error::Format(format!(
                "unknown scheme {other:?} (seq, par, shear)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedStream {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub horizon: usize,
    pub model_hash: u64,
    pub payload: Vec<u8>,
}

impl CompressedStream {
    /// Payload length in bits (the coded message, header excluded).
    pub fn bits(&self) -> u64 {
        8 * self.payload.len() as u64
    }

    pub fn bits_per_dim(&self) -> f64 {
        self.bits() as f64 / (self.height * self.width * self.channels) as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.push(self.channels as u8);
        out.push(self.horizon as u8);
        out.extend_from_slice(&self.model_hash.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                offset: bytes.len(),
                needed: HEADER_LEN - bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad container magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {}",
                bytes[4]
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let height = u32_at(5);
        let width = u32_at(9);
        let channels = bytes[13] as usize;
        let horizon = bytes[14] as usize;
        let model_hash = u64::from_le_bytes(bytes[15..23].try_into().unwrap());
        let len = u32_at(23);
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) || horizon == 0 {
            return Err(Error::Format(format!(
                "invalid header geometry {height}x{width}x{channels}, h={horizon}"
            )));
        }
        let rest = &bytes[HEADER_LEN..];
        if rest.len() < len {
            return Err(Error::Truncated {
                offset: bytes.len(),
                needed: len - rest.len(),
            });
        }
        if rest.len() > len {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                rest.len() - len
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            horizon,
            model_hash,
            payload: rest.to_vec(),
        })
    }
}

/// Decoder output plus work counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub image: ImageTensor,
    /// Scheduler rounds: one per pixel for the sequential decoder, one per
    /// wavefront tick (sheared column) otherwise.
    pub rounds: usize,
    pub forward_passes: usize,
}

/// Runs `f` on a pool of `threads` workers; 0 uses rayon's global pool.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_model(model: &LocalModel) -> Result<()> {
    if model.is_sheared() {
        return Err(Error::Validation(
            "the codec takes the unsheared model; decoders shear it themselves".into(),
        ));
    }
    Ok(())
}

/// Head output for one pixel from its unsheared context.
fn pixel_params(model: &LocalModel, image: &ImageTensor, i: usize, j: usize) -> Vec<f32> {
    let [kh, kw, c] = model.patch_dims();
    let mut patch = vec![0.0f32; kh * kw * c];
    fill_patch(image, i, j, model.config().horizon, &mut patch);
    let mut out = vec![0.0f32; model.config().params_per_pixel()];
    model.forward_into(&patch, &mut out);
    out
}

fn to_params(model: &LocalModel, raw: Vec<f32>) -> Result<crate::model::OutputParams> {
    crate::model::OutputParams::new(model.config().channels, model.config().mixtures, raw)
}

/// Compresses `image`; bytes do not depend on `threads`.
pub fn encode(image: &ImageTensor, model: &LocalModel, threads: usize) -> Result<CompressedStream> {
    check_model(model)?;
    let cfg = model.config();
    if image.channels() != cfg.channels {
        return Err(Error::Shape(format!(
            "image has {} channels, model expects {}",
            image.channels(),
            cfg.channels
        )));
    }
    let schedule = schedule::cached(image.height(), image.width(), cfg.horizon);
    let positions: Vec<(usize, usize)> = schedule.positions().collect();

    // Intervals in canonical symbol order, computed in parallel.
    let intervals: Vec<[(u32, u32); 3]> = with_threads(threads, || {
        positions
            .par_iter()
            .map(|&(i, j)| {
                let params = to_params(model, pixel_params(model, image, i, j))?;
                let px = image.pixel(i - 1, j - 1);
                let mut iv = [(0, 0); 3];
                for c in 0..px.len() {
                    let cdf = quantized_cdf(&params, c, &px[..c])?;
                    iv[c] = (cdf.start(px[c]), cdf.freq(px[c]));
                }
                Ok(iv)
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut enc = RansEncoder::new();
    for iv in intervals.iter().rev() {
        for &(start, freq) in iv[..cfg.channels].iter().rev() {
            enc.encode_interval(start, freq);
        }
    }
    Ok(CompressedStream {
        height: image.height(),
        width: image.width(),
        channels: cfg.channels,
        horizon: cfg.horizon,
        model_hash: model.hash(),
        payload: enc.finish(),
    })
}

fn check_stream(stream: &CompressedStream, model: &LocalModel) -> Result<()> {
    check_model(model)?;
    if stream.model_hash != model.hash() {
        return Err(Error::ModelMismatch {
            expected: stream.model_hash,
            found: model.hash(),
        });
    }
    let cfg = model.config();
    if stream.horizon != cfg.horizon || stream.channels != cfg.channels {
        return Err(Error::Format(format!(
            "stream has h={} C={}, model h={} C={}",
            stream.horizon, stream.channels, cfg.horizon, cfg.channels
        )));
    }
    Ok(())
}

/// Decodes the channels of one pixel, the first table already computed.
fn decode_pixel(
    dec: &mut RansDecoder<'_>,
    params: &crate::model::OutputParams,
    first: &crate::distribution::QuantizedCdf,
    out: &mut [u8],
) -> Result<()> {
    out[0] = dec.decode(first)?;
    for c in 1..out.len() {
        let cdf = quantized_cdf(params, c, &out[..c])?;
        out[c] = dec.decode(&cdf)?;
    }
    Ok(())
}

fn finish(dec: &RansDecoder<'_>) -> Result<()> {
    if !dec.is_finished() {
        return Err(Error::CorruptStream(format!(
            "stream not exhausted after the last symbol ({} of payload bytes read)",
            dec.bytes_consumed()
        )));
    }
    Ok(())
}

/// One pixel per round, raster order within each wavefront tick.
pub fn decode_sequential(stream: &CompressedStream, model: &LocalModel) -> Result<Decoded> {
    check_stream(stream, model)?;
    let (h, w, c) = (stream.height, stream.width, stream.channels);
    let schedule = schedule::cached(h, w, stream.horizon);
    let mut image = ImageTensor::zeros(h, w, c)?;
    let mut dec = RansDecoder::new(&stream.payload)?;
    let mut passes = 0;
    for (i, j) in schedule.positions() {
        let params = to_params(model, pixel_params(model, &image, i, j))?;
        passes += 1;
        let first = quantized_cdf(&params, 0, &[])?;
        decode_pixel(&mut dec, &params, &first, image.pixel_mut(i - 1, j - 1))?;
    }
    finish(&dec)?;
    Ok(Decoded {
        image,
        rounds: passes,
        forward_passes: passes,
    })
}

/// Wavefront decoding: each tick's pixels are evaluated as one parallel batch.
pub fn decode_parallel(
    stream: &CompressedStream,
    model: &LocalModel,
    threads: usize,
) -> Result<Decoded> {
    check_stream(stream, model)?;
    let (h, w, c) = (stream.height, stream.width, stream.channels);
    let schedule = schedule::cached(h, w, stream.horizon);
    with_threads(threads, || {
        let mut image = ImageTensor::zeros(h, w, c)?;
        let mut dec = RansDecoder::new(&stream.payload)?;
        let mut passes = 0;
        for step in schedule.steps() {
            let batch = step
                .par_iter()
                .map(|&(i, j)| {
                    let params = to_params(model, pixel_params(model, &image, i, j))?;
                    let first = quantized_cdf(&params, 0, &[])?;
                    Ok((params, first))
                })
                .collect::<Result<Vec<_>>>()?;
            passes += batch.len();
            for (&(i, j), (params, first)) in step.iter().zip(&batch) {
                decode_pixel(&mut dec, params, first, image.pixel_mut(i - 1, j - 1))?;
            }
        }
        finish(&dec)?;
        Ok(Decoded {
            image,
            rounds: schedule.len(),
            forward_passes: passes,
        })
    })?
}

/// Wavefront decoding on the sheared layout: tick `t` is column `t`.
pub fn decode_sheared(
    stream: &CompressedStream,
    model: &LocalModel,
    threads: usize,
) -> Result<Decoded> {
    check_stream(stream, model)?;
    let sheared = model.sheared()?;
    let (h, w, c) = (stream.height, stream.width, stream.channels);
    let horizon = stream.horizon;
    let offset = horizon + 1;
    let [kh, kw, _] = sheared.patch_dims();
    let n_params = sheared.config().params_per_pixel();
    with_threads(threads, || {
        let mut buf = ShearedBuffer::zeros(h, w, c, offset);
        let mut dec = RansDecoder::new(&stream.payload)?;
        let mut passes = 0;
        let cols = buf.cols();
        for col in 1..=cols {
            let rows = column_rows(col, h, w, offset);
            let batch = rows
                .clone()
                .into_par_iter()
                .map(|row| {
                    let mut window = vec![0.0f32; kh * kw * c];
                    buf.fill_window(row, col, horizon, &mut window);
                    let mut raw = vec![0.0f32; n_params];
                    sheared.forward_into(&window, &mut raw);
                    let params = to_params(&sheared, raw)?;
                    let first = quantized_cdf(&params, 0, &[])?;
                    Ok((params, first))
                })
                .collect::<Result<Vec<_>>>()?;
            passes += batch.len();
            for (row, (params, first)) in rows.zip(&batch) {
                decode_pixel(&mut dec, params, first, buf.cell_mut(row, col))?;
            }
        }
        finish(&dec)?;
        Ok(Decoded {
            image: unshear_image(&buf),
            rounds: cols,
            forward_passes: passes,
        })
    })?
}

pub fn decode(
    stream: &CompressedStream,
    model: &LocalModel,
    scheme: Scheme,
    threads: usize,
) -> Result<Decoded> {
    match scheme {
        Scheme::Sequential => decode_sequential(stream, model),
        Scheme::Parallel => decode_parallel(stream, model, threads),
        Scheme::Sheared => decode_sheared(stream, model, threads),
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TimingRecord {
    pub scheme: Scheme,
    /// Median decode wall time over the repeats.
    pub wall_seconds: f64,
    pub rounds: usize,
    pub bits: u64,
    pub bpd: f64,
}

impl serde::Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.short_name())
    }
}

/// Encodes once, then times `repeats` decodes with `scheme`, checking each result.
pub fn measure(
    model: &LocalModel,
    image: &ImageTensor,
    scheme: Scheme,
    repeats: usize,
    threads: usize,
) -> Result<TimingRecord> {
    let stream = encode(image, model, threads)?;
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut rounds = 0;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let decoded = decode(&stream, model, scheme, threads)?;
        times.push(start.elapsed().as_secs_f64());
        if decoded.image != *image {
            return Err(Error::Internal(format!(
                "{scheme} decode did not reproduce the input"
            )));
        }
        rounds = decoded.rounds;
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    };
    Ok(TimingRecord {
        scheme,
        wall_seconds: median,
        rounds,
        bits: stream.bits(),
        bpd: stream.bits_per_dim(),
    })
}
