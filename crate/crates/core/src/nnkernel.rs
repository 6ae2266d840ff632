//! Small dense/convolution kernels with a fixed accumulation order.
//!
//! Every output is accumulated one product at a time, in the order
//! (kernel row, kernel column, input channel), starting from `+0.0`.
//! Vectorisation is only allowed across *outputs*, never inside a single
//! sum, so results are bit-identical no matter how callers batch work.
//!
//! A consequence of starting from `+0.0` is that adding a product with a
//! zero weight never changes the running sum: the sum can never be `-0.0`,
//! and `x + (±0.0) == x` for every other `x`. Kernels that differ only by
//! zero cells (masked or sheared first layers) therefore agree bit for bit.

use crate::error::{Error, Result};

/// Dense row-major `f32` tensor of rank 1 to 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::Shape(format!(
                "tensor rank {} not in 1..=4",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero extent in {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self::new(dims.to_vec(), vec![0.0; n]).expect("valid dims")
    }

    pub fn filled(dims: &[usize], value: f32) -> Self {
        let mut t = Self::zeros(dims);
        t.data.fill(value);
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f32) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Bitwise equality, distinguishing `-0.0` from `+0.0` and comparing NaN payloads.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Adds `weights[k] * x` to `acc[k]` for every output `k`.
///
/// This is the only accumulation primitive: each call contributes exactly
/// one product to each output, so the caller's loop order is the
/// accumulation order.
#[inline]
pub fn accumulate(acc: &mut [f32], weights: &[f32], x: f32) {
    debug_assert_eq!(acc.len(), weights.len());
    for (a, &w) in acc.iter_mut().zip(weights) {
        *a += w * x;
    }
}

/// `out = input · weight + bias`, with `weight` stored `[in, out]`.
pub fn dense_into(input: &[f32], weight: &[f32], bias: &[f32], out: &mut [f32]) {
    let n_out = bias.len();
    debug_assert_eq!(weight.len(), input.len() * n_out);
    debug_assert_eq!(out.len(), n_out);
    out.fill(0.0);
    for (&x, row) in input.iter().zip(weight.chunks_exact(n_out)) {
        accumulate(out, row, x);
    }
    for (o, &b) in out.iter_mut().zip(bias) {
        *o += b;
    }
}

/// Valid (unpadded) 2-D convolution of an `[H, W, Cin]` input with a
/// `[kh, kw, Cin, Cout]` kernel.
///
/// Output `(y, x)` is aligned with input position `(y + anchor.0, x + anchor.1)`;
/// the anchor only fixes that correspondence and must lie inside the kernel.
/// Callers pad explicitly.
pub fn conv2d_valid(input: &Tensor, kernel: &Tensor, anchor: (usize, usize)) -> Result<Tensor> {
    let &[h, w, cin] = input.dims() else {
        return Err(Error::Shape(format!(
            "conv input must be rank 3, got {:?}",
            input.dims()
        )));
    };
    let &[kh, kw, kcin, cout] = kernel.dims() else {
        return Err(Error::Shape(format!(
            "conv kernel must be rank 4, got {:?}",
            kernel.dims()
        )));
    };
    if kcin != cin {
        return Err(Error::Shape(format!(
            "kernel expects {kcin} channels, input has {cin}"
        )));
    }
    if kh > h || kw > w {
        return Err(Error::Shape(format!(
            "kernel {kh}x{kw} larger than input {h}x{w}"
        )));
    }
    if anchor.0 >= kh || anchor.1 >= kw {
        return Err(Error::Shape(format!(
            "anchor {anchor:?} outside {kh}x{kw} kernel"
        )));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0f32; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * cout..][..cout];
            for r in 0..kh {
                for c in 0..kw {
                    let px = ((oy + r) * w + ox + c) * cin;
                    for ch in 0..cin {
                        let taps = &k[((r * kw + c) * cin + ch) * cout..][..cout];
                        accumulate(acc, taps, x[px + ch]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

/// Per-position affine map over the trailing channel axis.
pub fn conv1x1(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let &[cin, cout] = weight.dims() else {
        return Err(Error::Shape(format!(
            "1x1 weight must be rank 2, got {:?}",
            weight.dims()
        )));
    };
    if bias.dims() != [cout] {
        return Err(Error::Shape(format!(
            "bias {:?} does not match {cout} outputs",
            bias.dims()
        )));
    }
    let trailing = *input.dims().last().expect("rank >= 1");
    if trailing != cin {
        return Err(Error::Shape(format!(
            "input has {trailing} channels, weight expects {cin}"
        )));
    }
    let positions = input.len() / cin;
    let mut out = vec![0.0f32; positions * cout];
    for (src, dst) in input
        .data()
        .chunks_exact(cin)
        .zip(out.chunks_exact_mut(cout))
    {
        dense_into(src, weight.data(), bias.data(), dst);
    }
    let mut dims = input.dims().to_vec();
    *dims.last_mut().expect("rank >= 1") = cout;
    Tensor::new(dims, out)
}

/// ELU with unit alpha: `x` for `x > 0`, `exp(x) - 1` otherwise. Bounded below by -1.
#[inline]
pub fn elu(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_in_place(xs: &mut [f32]) {
    for x in xs {
        *x = elu(*x);
    }
}

pub fn activation(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    elu_in_place(out.data_mut());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &Tensor, kernel: &Tensor) -> Vec<f32> {
        let (h, w, cin) = (input.dims()[0], input.dims()[1], input.dims()[2]);
        let (kh, kw, cout) = (kernel.dims()[0], kernel.dims()[1], kernel.dims()[3]);
        let mut out = Vec::new();
        for y in 0..=h - kh {
            for x in 0..=w - kw {
                for o in 0..cout {
                    let mut s = 0.0f32;
                    for r in 0..kh {
                        for c in 0..kw {
                            for ch in 0..cin {
                                s += kernel.get(&[r, c, ch, o]) * input.get(&[y + r, x + c, ch]);
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn conv_identity_1x1() {
        let input = Tensor::new(vec![1, 1, 1], vec![3.5]).unwrap();
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d_valid(&input, &kernel, (0, 0)).unwrap();
        assert_eq!(out.data(), &[3.5]);
    }

    #[test]
    fn conv_zero_input_gives_zero() {
        let input = Tensor::zeros(&[4, 5, 2]);
        let kernel = Tensor::filled(&[2, 3, 2, 3], 0.7);
        let out = conv2d_valid(&input, &kernel, (1, 1)).unwrap();
        assert_eq!(out.dims(), &[3, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_ones_sum_over_support() {
        let input = Tensor::filled(&[2, 3, 1], 1.0);
        let kernel = Tensor::filled(&[2, 3, 1, 1], 1.0);
        let out = conv2d_valid(&input, &kernel, (1, 1)).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn conv_shape_errors() {
        let input = Tensor::zeros(&[2, 2, 1]);
        assert!(conv2d_valid(&input, &Tensor::zeros(&[3, 1, 1, 1]), (0, 0)).is_err());
        assert!(conv2d_valid(&input, &Tensor::zeros(&[1, 1, 2, 1]), (0, 0)).is_err());
        assert!(conv2d_valid(&input, &Tensor::zeros(&[1, 1, 1, 1]), (1, 0)).is_err());
    }

    #[test]
    fn conv_matches_naive_loop_bitwise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = rng.gen_range(1..=8);
            let w = rng.gen_range(1..=8);
            let cin = rng.gen_range(1..=4);
            let kh = rng.gen_range(1..=h);
            let kw = rng.gen_range(1..=w);
            let cout = rng.gen_range(1..=4);
            let input = Tensor::new(
                vec![h, w, cin],
                (0..h * w * cin).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let kernel = Tensor::new(
                vec![kh, kw, cin, cout],
                (0..kh * kw * cin * cout)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let fast = conv2d_valid(&input, &kernel, (0, 0)).unwrap();
            let slow = naive_conv(&input, &kernel);
            assert!(fast
                .data()
                .iter()
                .zip(&slow)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn conv1x1_cases() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, -3.0, 4.0]).unwrap();
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero_bias = Tensor::zeros(&[2]);
        assert_eq!(conv1x1(&x, &eye, &zero_bias).unwrap(), x);

        let b = Tensor::new(vec![3], vec![0.25, -1.0, 9.0]).unwrap();
        let out = conv1x1(&x, &Tensor::zeros(&[2, 3]), &b).unwrap();
        assert_eq!(out.dims(), &[2, 3]);
        assert_eq!(out.data(), &[0.25, -1.0, 9.0, 0.25, -1.0, 9.0]);

        let one = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let bias = Tensor::new(vec![2], vec![0.5, -0.5]).unwrap();
        assert_eq!(conv1x1(&one, &eye, &bias).unwrap().data(), &[1.5, 1.5]);

        assert!(conv1x1(&x, &Tensor::zeros(&[3, 2]), &zero_bias).is_err());
        assert!(conv1x1(&x, &eye, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(2.5), 2.5);
        assert!(elu(-1e4) >= -1.0);
        let probe = [-3.0f32, -1.0, -0.1, 0.0, 0.1, 1.0];
        let t = Tensor::new(vec![6], probe.to_vec()).unwrap();
        let got = activation(&t);
        for (&x, &y) in probe.iter().zip(got.data()) {
            let reference = if x > 0.0 {
                x as f64
            } else {
                (x as f64).exp() - 1.0
            };
            assert!(
                (y as f64 - reference).abs() < 1e-6,
                "{x}: {y} vs {reference}"
            );
        }
    }

    #[test]
    fn zero_weight_products_do_not_change_sums() {
        let mut acc = vec![0.0f32, 1.5, -2.0];
        let before = acc.clone();
        accumulate(&mut acc, &[0.0, -0.0, 0.0], -7.0);
        accumulate(&mut acc, &[-0.0, 0.0, -0.0], 3.0);
        assert!(acc
            .iter()
            .zip(&before)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
