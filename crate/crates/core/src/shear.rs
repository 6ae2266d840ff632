//! Sheared image layout.
//!
//! Row `i` (1-indexed) is shifted right by `(i-1)·o`, so pixel `(i, j)` lands
//! in column `j + (i-1)·o` of an `H × L` buffer, `L = W + (H-1)·o`. With
//! `o = h+1` the column index equals the wavefront tick, and the pixels of a
//! tick sit in one contiguous column slab (storage is column-major).

use std::ops::RangeInclusive;

use crate::image::ImageTensor;
use crate::schedule::normalize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShearedBuffer {
    rows: usize,
    width: usize,
    offset: usize,
    channels: usize,
    /// Column-major: `((col-1)·H + (row-1))·C + channel`.
    data: Vec<u8>,
}

impl ShearedBuffer {
    /// All-zero buffer for an `H × W × C` image.
    pub fn zeros(rows: usize, width: usize, channels: usize, offset: usize) -> Self {
        assert!(rows >= 1 && width >= 1 && offset >= 1);
        let cols = width + (rows - 1) * offset;
        Self {
            rows,
            width,
            offset,
            channels,
            data: vec![0; rows * cols * channels],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `L = W + (H-1)·o`.
    pub fn cols(&self) -> usize {
        self.width + (self.rows - 1) * self.offset
    }

    /// Width of the unsheared image.
    pub fn image_width(&self) -> usize {
        self.width
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Sheared column of pixel `(i, j)`.
    pub fn column_of(&self, i: usize, j: usize) -> usize {
        j + (i - 1) * self.offset
    }

    /// Contiguous storage of column `c`, all rows.
    pub fn column(&self, c: usize) -> &[u8] {
        let n = self.rows * self.channels;
        &self.data[(c - 1) * n..c * n]
    }

    pub fn cell(&self, row: usize, col: usize) -> &[u8] {
        let o = ((col - 1) * self.rows + row - 1) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [u8] {
        let o = ((col - 1) * self.rows + row - 1) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Normalised window of rows `row-h..=row`, columns `col-h(h+2)..=col-1`,
    /// written as `[h+1, h(h+2), C]` into `out` (pre-zeroed). Cells outside
    /// the buffer stay zero.
    pub fn fill_window(&self, row: usize, col: usize, h: usize, out: &mut [f32]) {
        let width = h * (h + 2);
        let c = self.channels;
        debug_assert_eq!(out.len(), (h + 1) * width * c);
        for r in 0..=h {
            let Some(src_row) = (row + r).checked_sub(h).filter(|&v| v >= 1) else {
                continue;
            };
            for k in 0..width {
                let Some(src_col) = (col + k).checked_sub(width).filter(|&v| v >= 1) else {
                    continue;
                };
                let dst = &mut out[(r * width + k) * c..][..c];
                for (d, &s) in dst.iter_mut().zip(self.cell(src_row, src_col)) {
                    *d = normalize(s);
                }
            }
        }
    }
}

/// Places pixel `(i, j)` at sheared column `j + (i-1)·o`; every other cell is zero.
pub fn shear_image(image: &ImageTensor, offset: usize) -> ShearedBuffer {
    let mut buf = ShearedBuffer::zeros(image.height(), image.width(), image.channels(), offset);
    for i in 1..=image.height() {
        for j in 1..=image.width() {
            let c = buf.column_of(i, j);
            buf.cell_mut(i, c)
                .copy_from_slice(image.pixel(i - 1, j - 1));
        }
    }
    buf
}

/// Inverse of [`shear_image`].
pub fn unshear_image(buf: &ShearedBuffer) -> ImageTensor {
    ImageTensor::from_fn(buf.rows, buf.width, buf.channels, |i, j, ch| {
        buf.cell(i + 1, buf.column_of(i + 1, j + 1))[ch]
    })
    .expect("buffer geometry is a valid image")
}

/// Rows holding a real pixel in sheared column `c`: `1 <= c - (i-1)·o <= W`.
pub fn column_rows(c: usize, height: usize, width: usize, offset: usize) -> RangeInclusive<usize> {
    let last = ((c - 1) / offset + 1).min(height);
    let first = if c > width {
        (c - width).div_ceil(offset) + 1
    } else {
        1
    };
    first..=last
}
