//! Wavefront decode topology for local autoregressive models.
//!
//! Positions are 1-indexed `(row, col)` pairs throughout this module. Pixel
//! `(i, j)` depends on rows `i-h..i-1`, columns `j-h..j+h`, plus row `i`,
//! columns `j-h..j-1`. It becomes decodable at tick `j + (i-1)(h+1)`, and all
//! pixels sharing a tick are conditionally independent.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::image::ImageTensor;
use crate::nnkernel::Tensor;

/// Model input value for a pixel intensity. Zero padding is `0.0`, i.e. a black pixel.
pub fn normalize(v: u8) -> f32 {
    INPUT_LUT[v as usize]
}

static INPUT_LUT: [f32; 256] = {
    let mut lut = [0.0f32; 256];
    let mut i = 0;
    while i < 256 {
        lut[i] = i as f32 / 255.0;
        i += 1;
    }
    lut
};

/// Tick at which pixel `(i, j)` can be decoded.
pub fn timestep(i: usize, j: usize, h: usize) -> usize {
    debug_assert!(i >= 1 && j >= 1);
    j + (i - 1) * (h + 1)
}

/// Total number of ticks, `W + (H-1)(h+1)`.
pub fn total_steps(height: usize, width: usize, h: usize) -> usize {
    width + (height - 1) * (h + 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WavefrontSchedule {
    height: usize,
    width: usize,
    horizon: usize,
    steps: Vec<Vec<(usize, usize)>>,
}

impl WavefrontSchedule {
    /// Groups every position of an `H × W` image by tick, rows ascending within a tick.
    ///
    /// When `W <= h` some ticks are idle (no position); every other image has
    /// at least one position per tick.
    pub fn build(height: usize, width: usize, h: usize) -> Self {
        assert!(
            height >= 1 && width >= 1 && h >= 1,
            "schedule needs positive extents"
        );
        let steps = (1..=total_steps(height, width, h))
            .map(|t| {
                rows_at_tick(t, height, width, h)
                    .map(|i| (i, t - (i - 1) * (h + 1)))
                    .collect()
            })
            .collect();
        Self {
            height,
            width,
            horizon: h,
            steps,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of ticks `T`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Vec<(usize, usize)>] {
        &self.steps
    }

    /// Positions decoded at tick `t` (1-indexed).
    pub fn step(&self, t: usize) -> &[(usize, usize)] {
        &self.steps[t - 1]
    }

    /// Largest number of positions in one tick: `min(H, ⌊(W+h)/(h+1)⌋)`.
    ///
    /// For square `D × D` images this is `⌊(D+h)/(h+1)⌋`.
    pub fn max_parallelism(&self) -> usize {
        self.height
            .min((self.width + self.horizon) / (self.horizon + 1))
    }

    /// Pixel-major symbol order shared by every encoder and decoder.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps.iter().flatten().copied()
    }
}

/// Rows holding a pixel at tick `t`: those `i` with `1 <= t - (i-1)(h+1) <= W`.
pub(crate) fn rows_at_tick(
    t: usize,
    height: usize,
    width: usize,
    h: usize,
) -> std::ops::RangeInclusive<usize> {
    let o = h + 1;
    // t - (i-1)o >= 1  <=>  i <= (t-1)/o + 1
    let last = ((t - 1) / o + 1).min(height);
    // t - (i-1)o <= W  <=>  i >= ceil((t-W)/o) + 1
    let first = if t > width {
        (t - width).div_ceil(o) + 1
    } else {
        1
    };
    // An empty range when first > last.
    first..=last
}

/// Shared, lazily built schedule for `(H, W, h)`.
pub fn cached(height: usize, width: usize, h: usize) -> Arc<WavefrontSchedule> {
    type Cache = Mutex<HashMap<(usize, usize, usize), Arc<WavefrontSchedule>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry((height, width, h))
        .or_insert_with(|| Arc::new(WavefrontSchedule::build(height, width, h)))
        .clone()
}

/// Every coded symbol as `(row, col, channel)`: ticks ascending, rows
/// ascending, channels innermost.
pub fn canonical_order(
    height: usize,
    width: usize,
    h: usize,
    channels: usize,
) -> Vec<(usize, usize, usize)> {
    let schedule = cached(height, width, h);
    schedule
        .positions()
        .flat_map(|(i, j)| (0..channels).map(move |c| (i, j, c)))
        .collect()
}

/// The `(h+1) × (2h+1) × C` context window of pixel `(i, j)`, normalised.
///
/// Rows `i-h..=i`, columns `j-h..=j+h`; cells outside the image are zero.
/// The current pixel and the cells right of it are copied as-is; the model
/// ignores them.
pub fn gather_patch(image: &ImageTensor, i: usize, j: usize, h: usize) -> Tensor {
    let c = image.channels();
    let kw = 2 * h + 1;
    let mut data = vec![0.0f32; (h + 1) * kw * c];
    fill_patch(image, i, j, h, &mut data);
    Tensor::new(vec![h + 1, kw, c], data).expect("patch dims are positive")
}

/// Writes the window of [`gather_patch`] into `out`, which must already be zeroed.
pub(crate) fn fill_patch(image: &ImageTensor, i: usize, j: usize, h: usize, out: &mut [f32]) {
    let c = image.channels();
    let kw = 2 * h + 1;
    let (height, width) = (image.height() as isize, image.width() as isize);
    for r in 0..=h {
        let row = i as isize - h as isize + r as isize;
        if row < 1 || row > height {
            continue;
        }
        for k in 0..kw {
            let col = j as isize - h as isize + k as isize;
            if col < 1 || col > width {
                continue;
            }
            let src = image.pixel(row as usize - 1, col as usize - 1);
            let dst = &mut out[(r * kw + k) * c..][..c];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = normalize(s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestep_values() {
        assert_eq!(timestep(1, 1, 1), 1);
        assert_eq!(timestep(1, 5, 1), 5);
        assert_eq!(timestep(5, 5, 1), 13);
        assert_eq!(timestep(3, 2, 2), 8);
        for h in 1..5 {
            assert_eq!(timestep(1, 1, h), 1);
        }
    }

    #[test]
    fn five_by_five_horizon_one() {
        let s = WavefrontSchedule::build(5, 5, 1);
        assert_eq!(s.len(), 13);
        assert_eq!(s.step(9), &[(3, 5), (4, 3), (5, 1)]);
        assert_eq!(s.steps().iter().map(Vec::len).max(), Some(3));
        assert_eq!(s.max_parallelism(), 3);
    }

    #[test]
    fn tiny_schedules() {
        assert_eq!(WavefrontSchedule::build(1, 1, 1).steps(), &[vec![(1, 1)]]);
        let s = WavefrontSchedule::build(3, 3, 1);
        let expected: Vec<Vec<(usize, usize)>> = vec![
            vec![(1, 1)],
            vec![(1, 2)],
            vec![(1, 3), (2, 1)],
            vec![(2, 2)],
            vec![(2, 3), (3, 1)],
            vec![(3, 2)],
            vec![(3, 3)],
        ];
        assert_eq!(s.steps(), expected.as_slice());
    }

    #[test]
    fn narrow_images_have_idle_ticks() {
        let s = WavefrontSchedule::build(4, 1, 2);
        assert_eq!(s.len(), 1 + 3 * 3);
        let busy: Vec<_> = s
            .steps()
            .iter()
            .filter(|p| !p.is_empty())
            .cloned()
            .collect();
        assert_eq!(
            busy,
            vec![vec![(1, 1)], vec![(2, 1)], vec![(3, 1)], vec![(4, 1)]]
        );
    }

    #[test]
    fn canonical_order_examples() {
        assert_eq!(
            canonical_order(2, 2, 1, 1),
            vec![(1, 1, 0), (1, 2, 0), (2, 1, 0), (2, 2, 0)]
        );
        let order = canonical_order(5, 5, 1, 1);
        let pos = |p| order.iter().position(|&(i, j, _)| (i, j) == p).unwrap();
        assert!(pos((2, 1)) < pos((1, 5)));

        let col = canonical_order(6, 1, 2, 1);
        let ts: Vec<_> = col.iter().map(|&(i, j, _)| timestep(i, j, 2)).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(col
            .iter()
            .enumerate()
            .all(|(k, &(i, j, _))| i == k + 1 && j == 1));

        let rgb = canonical_order(1, 2, 1, 3);
        assert_eq!(
            rgb,
            vec![
                (1, 1, 0),
                (1, 1, 1),
                (1, 1, 2),
                (1, 2, 0),
                (1, 2, 1),
                (1, 2, 2)
            ]
        );
    }

    #[test]
    fn cache_returns_shared_instance() {
        let a = cached(7, 9, 2);
        let b = cached(7, 9, 2);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, WavefrontSchedule::build(7, 9, 2));
    }

    #[test]
    fn corner_patch_has_zero_context() {
        let img = ImageTensor::from_fn(4, 4, 3, |_, _, _| 200).unwrap();
        let p = gather_patch(&img, 1, 1, 2);
        assert_eq!(p.dims(), &[3, 5, 3]);
        for r in 0..3 {
            for k in 0..5 {
                let inside = r == 2 && k >= 2;
                for c in 0..3 {
                    let v = p.get(&[r, k, c]);
                    assert_eq!(v == 0.0, !inside, "cell {r},{k}");
                }
            }
        }
    }

    #[test]
    fn interior_patch_of_constant_image() {
        let img = ImageTensor::from_fn(6, 6, 1, |_, _, _| 7).unwrap();
        let p = gather_patch(&img, 4, 3, 2);
        assert!(p.data().iter().all(|&v| v == normalize(7)));
    }

    #[test]
    fn ramp_patch_matches_index_arithmetic() {
        // x_ij = 10 i + j (1-indexed)
        let img = ImageTensor::from_fn(5, 5, 1, |i, j, _| (10 * (i + 1) + j + 1) as u8).unwrap();
        let p = gather_patch(&img, 3, 3, 1);
        let expect = [22, 23, 24, 32, 33, 34];
        for (k, &e) in expect.iter().enumerate() {
            assert_eq!(p.data()[k], normalize(e));
        }
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize(0), 0.0);
        assert_eq!(normalize(255), 1.0);
    }
}
