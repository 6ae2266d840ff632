//! Single-stream byte-wise rANS with 16-bit frequency tables.
//!
//! The coder is a stack: symbols come out of the decoder in the reverse of
//! the order they went into the encoder. The state lives in `[2^24, 2^32)`
//! between operations. The finished stream is the little-endian final state
//! followed by the renormalisation bytes in the order the decoder consumes them.

use crate::distribution::{QuantizedCdf, PRECISION};
use crate::error::{Error, Result};

/// Lower bound of the normalised state interval.
pub const STATE_LOWER: u32 = 1 << 24;
const SLOT_MASK: u32 = (1 << PRECISION) - 1;

#[derive(Clone, Debug, Default)]
pub struct RansEncoder {
    state: u32,
    /// Renormalisation bytes in emission order.
    emitted: Vec<u8>,
}

impl RansEncoder {
    pub fn new() -> Self {
        Self {
            state: STATE_LOWER,
            emitted: Vec::new(),
        }
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Pushes `symbol` onto the stack.
    pub fn encode(&mut self, symbol: u8, cdf: &QuantizedCdf) {
        self.encode_interval(cdf.start(symbol), cdf.freq(symbol));
    }

    /// Pushes the interval `[start, start + freq)` of a `2^16` total.
    pub fn encode_interval(&mut self, start: u32, freq: u32) {
        debug_assert!(freq > 0 && start + freq <= 1 << PRECISION);
        // Largest state that still fits in the interval after the update.
        let x_max = ((STATE_LOWER >> PRECISION) << 8) as u64 * freq as u64;
        let mut x = self.state;
        while x as u64 >= x_max {
            self.emitted.push(x as u8);
            x >>= 8;
        }
        self.state = ((x / freq) << PRECISION) + (x % freq) + start;
    }

    /// Bytes the decoder will read, state first.
    pub fn finish(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.emitted.len());
        out.extend_from_slice(&flush(self.state));
        out.extend(self.emitted.iter().rev());
        out
    }
}

/// Little-endian state bytes.
pub fn flush(state: u32) -> [u8; 4] {
    state.to_le_bytes()
}

#[derive(Clone, Debug)]
pub struct RansDecoder<'a> {
    state: u32,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> RansDecoder<'a> {
    /// Reads the flushed state; it must lie in the normalised interval.
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let head: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::CorruptStream("payload shorter than the 4-byte state".into()))?;
        let state = u32::from_le_bytes(head);
        if state < STATE_LOWER {
            return Err(Error::CorruptStream(format!(
                "initial state {state:#x} below {STATE_LOWER:#x}"
            )));
        }
        Ok(Self {
            state,
            bytes,
            pos: 4,
        })
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Slot the next symbol will be read from, `state mod 2^16`.
    pub fn peek_slot(&self) -> u32 {
        self.state & SLOT_MASK
    }

    /// Pops the next symbol.
    pub fn decode(&mut self, cdf: &QuantizedCdf) -> Result<u8> {
        let symbol = cdf.symbol_for_slot(self.peek_slot());
        self.advance(cdf.start(symbol), cdf.freq(symbol))?;
        Ok(symbol)
    }

    /// Consumes the interval the current slot falls in.
    pub fn advance(&mut self, start: u32, freq: u32) -> Result<()> {
        let slot = self.peek_slot();
        if slot < start || slot - start >= freq {
            return Err(Error::CorruptStream(format!(
                "slot {slot} outside interval [{start}, {})",
                start as u64 + freq as u64
            )));
        }
        let mut x = freq * (self.state >> PRECISION) + (self.state & SLOT_MASK) - start;
        while x < STATE_LOWER {
            let Some(&b) = self.bytes.get(self.pos) else {
                return Err(Error::CorruptStream("ran out of payload bytes".into()));
            };
            x = (x << 8) | b as u32;
            self.pos += 1;
        }
        self.state = x;
        Ok(())
    }

    /// True once every byte was read and the state is back at its initial value.
    pub fn is_finished(&self) -> bool {
        self.pos == self.bytes.len() && self.state == STATE_LOWER
    }

    pub fn bytes_consumed(&self) -> usize {
        self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{quantize, TOTAL};
    use rand::{Rng, SeedableRng};

    fn random_cdf(rng: &mut impl Rng) -> QuantizedCdf {
        let mut p = [0.0f64; 256];
        for v in &mut p {
            *v = rng.gen::<f64>().powi(6);
        }
        quantize(&p)
    }

    #[test]
    fn empty_message_is_four_bytes() {
        let bytes = RansEncoder::new().finish();
        assert_eq!(bytes, flush(STATE_LOWER));
        let dec = RansDecoder::new(&bytes).unwrap();
        assert!(dec.is_finished());
    }

    #[test]
    fn flush_layout_is_little_endian() {
        assert_eq!(flush(0x0001_2345), [0x45, 0x23, 0x01, 0x00]);
        let state = 0x89ab_cdef;
        assert_eq!(RansDecoder::new(&flush(state)).unwrap().state(), state);
        assert!(RansDecoder::new(&flush(0x0001_2345)).is_err());
        assert!(RansDecoder::new(&[1, 2, 3]).is_err());
    }

    #[test]
    fn single_symbol_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let cdf = random_cdf(&mut rng);
            let s: u8 = rng.gen();
            let mut enc = RansEncoder::new();
            enc.encode(s, &cdf);
            let bytes = enc.finish();
            let mut dec = RansDecoder::new(&bytes).unwrap();
            assert_eq!(dec.decode(&cdf).unwrap(), s);
            assert!(dec.is_finished());
        }
    }

    #[test]
    fn lifo_order() {
        let cdf = QuantizedCdf::uniform();
        let msg = [3u8, 1, 4, 1, 5];
        let mut enc = RansEncoder::new();
        for &s in msg.iter().rev() {
            enc.encode(s, &cdf);
        }
        let bytes = enc.finish();
        let mut dec = RansDecoder::new(&bytes).unwrap();
        let got: Vec<u8> = (0..5).map(|_| dec.decode(&cdf).unwrap()).collect();
        assert_eq!(got, msg);
        assert!(dec.is_finished());
    }

    #[test]
    fn truncated_stream_is_corrupt() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let cdf = random_cdf(&mut rng);
        let msg: Vec<u8> = (0..300).map(|_| rng.gen()).collect();
        let mut enc = RansEncoder::new();
        for &s in msg.iter().rev() {
            enc.encode(s, &cdf);
        }
        let bytes = enc.finish();
        let short = &bytes[..bytes.len() - 1];
        let mut dec = RansDecoder::new(short).unwrap();
        let err = (0..msg.len()).try_for_each(|_| dec.decode(&cdf).map(|_| ()));
        assert!(matches!(err, Err(Error::CorruptStream(_))));
    }

    #[test]
    fn fair_coin_is_one_bit_per_symbol() {
        // Two-symbol table 32768/32768, driven through the raw interval API.
        let half = TOTAL / 2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let msg: Vec<u32> = (0..10_000).map(|_| rng.gen_range(0..2)).collect();
        let mut enc = RansEncoder::new();
        for &s in msg.iter().rev() {
            enc.encode_interval(s * half, half);
        }
        let bytes = enc.finish();
        assert!(bytes.len() <= 10_000 / 8 + 8, "{} bytes", bytes.len());
        let mut dec = RansDecoder::new(&bytes).unwrap();
        for &s in &msg {
            let got = dec.peek_slot() / half;
            assert_eq!(got, s);
            dec.advance(got * half, half).unwrap();
        }
        assert!(dec.is_finished());
    }

    #[test]
    fn decoded_slot_maps_through_cdf_bins() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let cdfs: Vec<_> = (0..64).map(|_| random_cdf(&mut rng)).collect();
        let msg: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
        let mut enc = RansEncoder::new();
        for (s, c) in msg.iter().zip(&cdfs).rev() {
            enc.encode(*s, c);
        }
        let bytes = enc.finish();
        let mut dec = RansDecoder::new(&bytes).unwrap();
        for (s, c) in msg.iter().zip(&cdfs) {
            let slot = dec.state() % (1 << 16);
            let cum = c.cumulative();
            let by_scan = (0..256)
                .find(|&k| cum[k] <= slot && slot < cum[k + 1])
                .unwrap();
            assert_eq!(by_scan as u8, *s);
            assert_eq!(dec.decode(c).unwrap(), *s);
            assert!(dec.state() >= STATE_LOWER);
        }
    }
}
