//! Fixed-width bit buffers.
//!
//! A [`BitBuffer`] is the content of one bucket and the unit every Hamming
//! comparison works on. Bit index 0 is the most-significant bit: the buffer
//! `00000111` has ones at indices 5, 6 and 7. Storage is a vector of `u64`
//! words, MSB-first, with the unused tail of the last word kept at zero so
//! that derived equality and hashing are bitwise.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const LIMB: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitBuffer {
    width: usize,
    limbs: Vec<u64>,
}

#[inline]
fn limbs_for(width: usize) -> usize {
    width.div_ceil(LIMB)
}

#[inline]
fn low_mask(n: usize) -> u64 {
    if n >= LIMB {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl BitBuffer {
    /// All-zero buffer. Panics on `width == 0`.
    pub fn zeros(width: usize) -> Self {
        assert!(width > 0, "bit buffer width must be positive");
        BitBuffer {
            width,
            limbs: vec![0; limbs_for(width)],
        }
    }

    pub fn ones(width: usize) -> Self {
        Self::zeros(width).complement()
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            out.set(i, b);
        }
        out
    }

    /// Buffer of `bytes.len() * 8` bits, first byte's MSB at index 0.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut out = Self::zeros(bytes.len() * 8);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut limb = 0u64;
            for (j, &b) in chunk.iter().enumerate() {
                limb |= (b as u64) << (56 - 8 * j);
            }
            out.limbs[i] = limb;
        }
        out
    }

    /// Bytes MSB-first; a width that is not a multiple of 8 is zero-padded
    /// at the end.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width.div_ceil(8);
        (0..n)
            .map(|i| (self.limbs[i / 8] >> (56 - 8 * (i % 8))) as u8)
            .collect()
    }

    /// The low `width` bits of `value`, most-significant first. `width <= 64`.
    pub fn from_u64(value: u64, width: usize) -> Self {
        assert!(width > 0 && width <= LIMB, "width must be in 1..=64");
        let mut out = Self::zeros(width);
        out.limbs[0] = (value & low_mask(width)) << (LIMB - width);
        out
    }

    /// Inverse of [`BitBuffer::from_u64`]; only the first 64 bits are read.
    pub fn to_u64(&self) -> u64 {
        let n = self.width.min(LIMB);
        self.read(0, n)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.width, "bit index {i} out of range {}", self.width);
        (self.limbs[i / LIMB] >> (LIMB - 1 - i % LIMB)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.width, "bit index {i} out of range {}", self.width);
        let mask = 1u64 << (LIMB - 1 - i % LIMB);
        if value {
            self.limbs[i / LIMB] |= mask;
        } else {
            self.limbs[i / LIMB] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.limbs.iter().map(|l| l.count_ones() as usize).sum()
    }

    /// Number of ones in `[start, start + len)`.
    pub fn count_ones_in(&self, start: usize, len: usize) -> usize {
        assert!(start + len <= self.width);
        let mut total = 0;
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let n = (end - pos).min(LIMB);
            total += self.read(pos, n).count_ones() as usize;
            pos += n;
        }
        total
    }

    fn check_width(&self, other: &BitBuffer) -> Result<()> {
        if self.width != other.width {
            return Err(Error::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        Ok(())
    }

    /// Number of positions where the two buffers differ.
    pub fn hamming(&self, other: &BitBuffer) -> Result<usize> {
        self.check_width(other)?;
        Ok(self
            .limbs
            .iter()
            .zip(&other.limbs)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn xor(&self, other: &BitBuffer) -> Result<BitBuffer> {
        self.check_width(other)?;
        Ok(BitBuffer {
            width: self.width,
            limbs: self.limbs.iter().zip(&other.limbs).map(|(a, b)| a ^ b).collect(),
        })
    }

    /// Ascending indices of the differing bits.
    pub fn diff_positions(&self, other: &BitBuffer) -> Result<Vec<usize>> {
        self.check_width(other)?;
        let mut out = Vec::new();
        for (li, (a, b)) in self.limbs.iter().zip(&other.limbs).enumerate() {
            let mut x = a ^ b;
            while x != 0 {
                let lead = x.leading_zeros() as usize;
                out.push(li * LIMB + lead);
                x &= !(1u64 << (LIMB - 1 - lead));
            }
        }
        Ok(out)
    }

    /// Every bit inverted.
    pub fn complement(&self) -> BitBuffer {
        let mut out = BitBuffer {
            width: self.width,
            limbs: self.limbs.iter().map(|l| !l).collect(),
        };
        out.clear_tail();
        out
    }

    /// Left circular rotation: bit `s` moves to index 0.
    pub fn rotate(&self, s: usize) -> Result<BitBuffer> {
        if s >= self.width {
            return Err(Error::OutOfRange {
                what: "rotation",
                value: s,
                limit: self.width,
            });
        }
        if s == 0 {
            return Ok(self.clone());
        }
        let mut out = BitBuffer::zeros(self.width);
        let mut pos = 0;
        while pos < self.width {
            let n = (self.width - pos).min(LIMB);
            out.write(pos, n, self.read_wrapped((pos + s) % self.width, n));
            pos += n;
        }
        Ok(out)
    }

    /// Copy of `[start, start + len)` as a new buffer.
    pub fn slice(&self, start: usize, len: usize) -> BitBuffer {
        assert!(len > 0 && start + len <= self.width);
        let mut out = BitBuffer::zeros(len);
        let mut pos = 0;
        while pos < len {
            let n = (len - pos).min(LIMB);
            out.write(pos, n, self.read(start + pos, n));
            pos += n;
        }
        out
    }

    /// Overwrites `[start, start + part.width())` with `part`.
    pub fn splice(&mut self, start: usize, part: &BitBuffer) {
        assert!(start + part.width <= self.width);
        let mut pos = 0;
        while pos < part.width {
            let n = (part.width - pos).min(LIMB);
            self.write(start + pos, n, part.read(pos, n));
            pos += n;
        }
    }

    pub fn concat(&self, tail: &BitBuffer) -> BitBuffer {
        let mut out = BitBuffer::zeros(self.width + tail.width);
        out.splice(0, self);
        out.splice(self.width, tail);
        out
    }

    /// 0.0/1.0 feature vector, one coordinate per bit.
    pub fn to_features(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Reads `n <= 64` bits starting at `pos`, returned in the low bits.
    fn read(&self, pos: usize, n: usize) -> u64 {
        debug_assert!(n > 0 && n <= LIMB && pos + n <= self.width);
        let li = pos / LIMB;
        let off = pos % LIMB;
        let hi = self.limbs[li] << off;
        let joined = if off == 0 || li + 1 >= self.limbs.len() {
            hi
        } else {
            hi | (self.limbs[li + 1] >> (LIMB - off))
        };
        joined >> (LIMB - n)
    }

    fn read_wrapped(&self, pos: usize, n: usize) -> u64 {
        if pos + n <= self.width {
            self.read(pos, n)
        } else {
            let first = self.width - pos;
            let rest = n - first;
            (self.read(pos, first) << rest) | self.read(0, rest)
        }
    }

    /// Writes the low `n <= 64` bits of `value` starting at `pos`.
    fn write(&mut self, pos: usize, n: usize, value: u64) {
        debug_assert!(n > 0 && n <= LIMB && pos + n <= self.width);
        let value = value & low_mask(n);
        let li = pos / LIMB;
        let off = pos % LIMB;
        let fits = off + n <= LIMB;
        if fits {
            let shift = LIMB - off - n;
            let mask = low_mask(n) << shift;
            self.limbs[li] = (self.limbs[li] & !mask) | (value << shift);
        } else {
            let first = LIMB - off;
            let rest = n - first;
            let mask = low_mask(first);
            self.limbs[li] = (self.limbs[li] & !mask) | (value >> rest);
            let shift = LIMB - rest;
            let mask = low_mask(rest) << shift;
            self.limbs[li + 1] = (self.limbs[li + 1] & !mask) | ((value & low_mask(rest)) << shift);
        }
    }

    fn clear_tail(&mut self) {
        let used = self.width % LIMB;
        if used != 0 {
            let last = self.limbs.len() - 1;
            self.limbs[last] &= !low_mask(LIMB - used);
        }
    }
}

impl fmt::Display for BitBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width <= 128 {
            write!(f, "BitBuffer({self})")
        } else {
            write!(f, "BitBuffer({} bits, {} ones)", self.width, self.count_ones())
        }
    }
}

impl FromStr for BitBuffer {
    type Err = Error;

    /// Parses a string of `0`/`1` characters; `_` and whitespace are ignored.
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::Format("empty bit string".into()));
        }
        Ok(BitBuffer::from_bools(&bits))
    }
}
