#![allow(dead_code)]

use std::path::PathBuf;

use loclc::{ImageTensor, LocalModel, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, c, |_, _, _| rng.gen()).unwrap()
}

/// Random walk along rows, so the model sees some spatial structure.
pub fn smooth(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> ImageTensor {
    let mut img = ImageTensor::zeros(h, w, c).unwrap();
    for ch in 0..c {
        let mut v: i32 = rng.gen_range(0..256);
        for i in 0..h {
            for j in 0..w {
                v = (v + rng.gen_range(-12..=12)).clamp(0, 255);
                img.set(i, j, ch, v as u8);
            }
        }
    }
    img
}

pub fn small_model(h: usize, c: usize, seed: u64) -> LocalModel {
    LocalModel::random(
        ModelConfig {
            horizon: h,
            channels: c,
            hidden: 8,
            resblocks: 1,
            mixtures: 3,
        },
        seed,
    )
    .unwrap()
}

pub fn natural_images() -> Vec<(String, ImageTensor)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    ["astronaut.ppm", "coffee.ppm", "chelsea.ppm"]
        .iter()
        .map(|name| {
            (
                name.to_string(),
                ImageTensor::read(dir.join(name), None).unwrap(),
            )
        })
        .collect()
}

/// Positions (1-indexed) whose values pixel `(i, j)` is conditioned on.
pub fn context(i: usize, j: usize, h: usize, height: usize, width: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in i.saturating_sub(h).max(1)..=i {
        for c in j.saturating_sub(h).max(1)..=(j + h).min(width) {
            if r < i || c < j {
                out.push((r, c));
            }
        }
    }
    debug_assert!(out.iter().all(|&(r, _)| r <= height));
    out
}

/// Breadth-layered topological sort of the dependency DAG, rows ascending per layer.
pub fn brute_force_levels(height: usize, width: usize, h: usize) -> Vec<Vec<(usize, usize)>> {
    let mut level = vec![vec![0usize; width + 1]; height + 1];
    let mut layers: Vec<Vec<(usize, usize)>> = Vec::new();
    // Raster order is already topological: every dependency precedes its pixel.
    for i in 1..=height {
        for j in 1..=width {
            let l = context(i, j, h, height, width)
                .iter()
                .map(|&(r, c)| level[r][c] + 1)
                .max()
                .unwrap_or(0);
            level[i][j] = l;
            if layers.len() <= l {
                layers.resize(l + 1, Vec::new());
            }
            layers[l].push((i, j));
        }
    }
    for layer in &mut layers {
        layer.sort();
    }
    layers
}
