//! Simulated NVM data zone.
//!
//! The device stores one [`BitBuffer`] per bucket plus a valid flag, and
//! keeps wear counters for every bit and every bucket. All writes are
//! differential (read-before-write): only the bits that differ from the
//! current content are counted as flipped, and word/line touch counts are
//! derived from that diff set. The one exception is [`WriteMode::Full`],
//! used by the conventional baseline, which rewrites every bit.

use std::io::{Read, Write};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"FLIPKV01";
const WEAR_MAGIC: &[u8; 8] = b"FLIPWEAR";
pub const DEFAULT_LINE_LATENCY_NS: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    pub bucket_bits: usize,
    #[serde(default = "default_word_bits")]
    pub word_bits: usize,
    #[serde(default = "default_line_bits")]
    pub line_bits: usize,
    pub n_buckets: usize,
}

fn default_word_bits() -> usize {
    32
}

fn default_line_bits() -> usize {
    512
}

impl DeviceGeometry {
    pub fn new(bucket_bits: usize, n_buckets: usize) -> Self {
        DeviceGeometry {
            bucket_bits,
            word_bits: default_word_bits(),
            line_bits: default_line_bits(),
            n_buckets,
        }
    }

    pub fn with_word_bits(mut self, word_bits: usize) -> Self {
        self.word_bits = word_bits;
        self
    }

    pub fn with_line_bits(mut self, line_bits: usize) -> Self {
        self.line_bits = line_bits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let DeviceGeometry {
            bucket_bits,
            word_bits,
            line_bits,
            n_buckets,
        } = *self;
        if bucket_bits == 0 || word_bits == 0 || line_bits == 0 || n_buckets == 0 {
            return Err(Error::Geometry("all geometry fields must be positive".into()));
        }
        if line_bits % word_bits != 0 {
            return Err(Error::Geometry(format!(
                "word_bits {word_bits} does not divide line_bits {line_bits}"
            )));
        }
        if bucket_bits % word_bits != 0 {
            return Err(Error::Geometry(format!(
                "bucket_bits {bucket_bits} is not a multiple of word_bits {word_bits}"
            )));
        }
        if bucket_bits % line_bits != 0 && line_bits % bucket_bits != 0 {
            return Err(Error::Geometry(format!(
                "line_bits {line_bits} and bucket_bits {bucket_bits} must divide one another"
            )));
        }
        Ok(())
    }

    pub fn words_per_bucket(&self) -> usize {
        self.bucket_bits / self.word_bits
    }

    /// Lines a single bucket spans (1 when several buckets share a line).
    pub fn lines_per_bucket(&self) -> usize {
        self.bucket_bits.div_ceil(self.line_bits)
    }
}

/// Accounting for one device mutation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WriteReport {
    /// Payload plus auxiliary flips.
    pub bits_flipped: u64,
    pub aux_bits_flipped: u64,
    pub words_touched: u64,
    pub lines_touched: u64,
    pub modeled_latency_ns: f64,
}

impl WriteReport {
    pub fn payload_bits_flipped(&self) -> u64 {
        self.bits_flipped - self.aux_bits_flipped
    }

    pub fn is_zero(&self) -> bool {
        self.bits_flipped == 0 && self.words_touched == 0 && self.lines_touched == 0
    }
}

impl Add for WriteReport {
    type Output = WriteReport;

    fn add(self, rhs: WriteReport) -> WriteReport {
        WriteReport {
            bits_flipped: self.bits_flipped + rhs.bits_flipped,
            aux_bits_flipped: self.aux_bits_flipped + rhs.aux_bits_flipped,
            words_touched: self.words_touched + rhs.words_touched,
            lines_touched: self.lines_touched + rhs.lines_touched,
            modeled_latency_ns: self.modeled_latency_ns + rhs.modeled_latency_ns,
        }
    }
}

impl AddAssign for WriteReport {
    fn add_assign(&mut self, rhs: WriteReport) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteMode {
    /// Read-before-write: only differing bits are programmed.
    Differential,
    /// Every bit of the bucket is programmed regardless of old content.
    Full,
}

/// Empirical CDF over a counter array: `(value, P(X <= value))` for every
/// distinct value, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub points: Vec<(u64, f64)>,
}

impl Cdf {
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Cdf {
        let mut values: Vec<u64> = counts.into_iter().collect();
        if values.is_empty() {
            return Cdf { points: Vec::new() };
        }
        values.sort_unstable();
        let n = values.len() as f64;
        let mut points: Vec<(u64, f64)> = Vec::new();
        for (i, v) in values.iter().enumerate() {
            let is_last_of_run = i + 1 == values.len() || values[i + 1] != *v;
            if is_last_of_run {
                points.push((*v, (i + 1) as f64 / n));
            }
        }
        if let Some(last) = points.last_mut() {
            last.1 = 1.0;
        }
        Cdf { points }
    }

    /// P(X <= x).
    pub fn prob_le(&self, x: u64) -> f64 {
        match self.points.partition_point(|(v, _)| *v <= x) {
            0 => 0.0,
            i => self.points[i - 1].1,
        }
    }

    pub fn max(&self) -> u64 {
        self.points.last().map_or(0, |p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WearStats {
    pub address_write_cdf: Cdf,
    pub bit_flip_cdf: Cdf,
    pub max_address_writes: u64,
    pub max_bit_flips: u64,
}

impl WearStats {
    /// Writes `metric,value,cum_prob` rows for one CDF.
    pub fn write_cdf_csv<W: Write>(out: W, metric: &str, cdf: &Cdf) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value", "cum_prob"])?;
        for (v, p) in &cdf.points {
            w.write_record([metric.to_string(), v.to_string(), format!("{p:.6}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NvmDevice {
    geometry: DeviceGeometry,
    line_latency_ns: f64,
    buckets: Vec<BitBuffer>,
    valid: Vec<bool>,
    bit_flips: Vec<u32>,
    address_writes: Vec<u64>,
    aux_flips: u64,
    index_zone: Vec<BitBuffer>,
}

impl NvmDevice {
    /// Device with `initial` contents in buckets `0..initial.len()` marked
    /// valid; the rest zeroed and invalid. All counters start at zero.
    pub fn create(geometry: DeviceGeometry, initial: Vec<BitBuffer>) -> Result<Self> {
        geometry.validate()?;
        if initial.len() > geometry.n_buckets {
            return Err(Error::Geometry(format!(
                "{} initial buckets exceed capacity {}",
                initial.len(),
                geometry.n_buckets
            )));
        }
        if let Some(bad) = initial.iter().find(|b| b.width() != geometry.bucket_bits) {
            return Err(Error::WidthMismatch {
                left: geometry.bucket_bits,
                right: bad.width(),
            });
        }
        let n = geometry.n_buckets;
        let mut valid = vec![false; n];
        valid[..initial.len()].iter_mut().for_each(|v| *v = true);
        let mut buckets = initial;
        buckets.resize(n, BitBuffer::zeros(geometry.bucket_bits));
        Ok(NvmDevice {
            geometry,
            line_latency_ns: DEFAULT_LINE_LATENCY_NS,
            buckets,
            valid,
            bit_flips: vec![0; n * geometry.bucket_bits],
            address_writes: vec![0; n],
            aux_flips: 0,
            index_zone: Vec::new(),
        })
    }

    pub fn with_line_latency_ns(mut self, ns: f64) -> Self {
        self.line_latency_ns = ns;
        self
    }

    pub fn geometry(&self) -> &DeviceGeometry {
        &self.geometry
    }

    pub fn n_buckets(&self) -> usize {
        self.geometry.n_buckets
    }

    pub fn line_latency_ns(&self) -> f64 {
        self.line_latency_ns
    }

    fn check_addr(&self, addr: usize) -> Result<()> {
        if addr >= self.geometry.n_buckets {
            return Err(Error::OutOfRange {
                what: "bucket address",
                value: addr,
                limit: self.geometry.n_buckets,
            });
        }
        Ok(())
    }

    /// Current content and valid flag. Never touches counters.
    pub fn read(&self, addr: usize) -> Result<(BitBuffer, bool)> {
        self.check_addr(addr)?;
        Ok((self.buckets[addr].clone(), self.valid[addr]))
    }

    /// Borrowing variant of [`NvmDevice::read`].
    pub fn content(&self, addr: usize) -> Result<&BitBuffer> {
        self.check_addr(addr)?;
        Ok(&self.buckets[addr])
    }

    pub fn is_valid(&self, addr: usize) -> Result<bool> {
        self.check_addr(addr)?;
        Ok(self.valid[addr])
    }

    pub fn contents(&self) -> &[BitBuffer] {
        &self.buckets
    }

    /// Differential write of `new` into `addr`, plus `aux_flips` flips of
    /// encoder metadata stored next to the bucket. The bucket is marked
    /// valid; setting the flag is not accounted as a flip.
    pub fn apply_diff(&mut self, addr: usize, new: &BitBuffer, aux_flips: u64) -> Result<WriteReport> {
        self.apply(addr, new, aux_flips, WriteMode::Differential)
    }

    pub fn apply(&mut self, addr: usize, new: &BitBuffer, aux_flips: u64, mode: WriteMode) -> Result<WriteReport> {
        self.check_addr(addr)?;
        let bucket_bits = self.geometry.bucket_bits;
        if new.width() != bucket_bits {
            return Err(Error::WidthMismatch {
                left: bucket_bits,
                right: new.width(),
            });
        }
        let positions: Vec<usize> = match mode {
            WriteMode::Differential => self.buckets[addr].diff_positions(new)?,
            WriteMode::Full => (0..bucket_bits).collect(),
        };
        let base = addr * bucket_bits;
        for &p in &positions {
            self.bit_flips[base + p] += 1;
        }
        let (words, lines) = self.touched(base, &positions);
        let payload = positions.len() as u64;
        if payload + aux_flips > 0 {
            self.address_writes[addr] += 1;
        }
        self.aux_flips += aux_flips;
        self.buckets[addr] = new.clone();
        self.valid[addr] = true;
        Ok(WriteReport {
            bits_flipped: payload + aux_flips,
            aux_bits_flipped: aux_flips,
            words_touched: words,
            lines_touched: lines,
            modeled_latency_ns: lines as f64 * self.line_latency_ns,
        })
    }

    /// Distinct words and lines among ascending bit positions offset by `base`.
    fn touched(&self, base: usize, positions: &[usize]) -> (u64, u64) {
        let g = &self.geometry;
        let mut words = 0u64;
        let mut lines = 0u64;
        let mut last_word = usize::MAX;
        let mut last_line = usize::MAX;
        for &p in positions {
            let global = base + p;
            let w = global / g.word_bits;
            let l = global / g.line_bits;
            if w != last_word {
                words += 1;
                last_word = w;
            }
            if l != last_line {
                lines += 1;
                last_line = l;
            }
        }
        (words, lines)
    }

    /// Clears the valid flag of a live bucket; the content stays in place.
    /// Accounts exactly one auxiliary flip.
    pub fn reset_flag(&mut self, addr: usize) -> Result<WriteReport> {
        self.check_addr(addr)?;
        if !self.valid[addr] {
            return Err(Error::NotLive(addr));
        }
        self.valid[addr] = false;
        self.aux_flips += 1;
        Ok(WriteReport {
            bits_flipped: 1,
            aux_bits_flipped: 1,
            ..WriteReport::default()
        })
    }

    /// Appends `extra` zeroed, invalid buckets. Existing buckets and
    /// counters are untouched.
    pub fn extend(&mut self, extra: usize) {
        let g = &mut self.geometry;
        g.n_buckets += extra;
        self.buckets.resize(g.n_buckets, BitBuffer::zeros(g.bucket_bits));
        self.valid.resize(g.n_buckets, false);
        self.address_writes.resize(g.n_buckets, 0);
        self.bit_flips.resize(g.n_buckets * g.bucket_bits, 0);
    }

    /// Reserves a device-resident region of `slots` records of
    /// `record_bits` each, used by a persistent index. Its flips are
    /// accounted as auxiliary.
    pub fn attach_index_zone(&mut self, slots: usize, record_bits: usize) {
        self.index_zone = vec![BitBuffer::zeros(record_bits); slots];
    }

    pub fn index_slots(&self) -> usize {
        self.index_zone.len()
    }

    pub fn index_record(&self, slot: usize) -> Result<&BitBuffer> {
        self.index_zone.get(slot).ok_or(Error::OutOfRange {
            what: "index slot",
            value: slot,
            limit: self.index_zone.len(),
        })
    }

    pub fn write_index_record(&mut self, slot: usize, record: &BitBuffer) -> Result<WriteReport> {
        let limit = self.index_zone.len();
        let old = self.index_zone.get(slot).ok_or(Error::OutOfRange {
            what: "index slot",
            value: slot,
            limit,
        })?;
        let positions = old.diff_positions(record)?;
        let (words, lines) = self.touched(0, &positions);
        let flips = positions.len() as u64;
        self.aux_flips += flips;
        self.index_zone[slot] = record.clone();
        Ok(WriteReport {
            bits_flipped: flips,
            aux_bits_flipped: flips,
            words_touched: words,
            lines_touched: lines,
            modeled_latency_ns: lines as f64 * self.line_latency_ns,
        })
    }

    pub fn bit_flip_counts(&self) -> &[u32] {
        &self.bit_flips
    }

    pub fn address_write_counts(&self) -> &[u64] {
        &self.address_writes
    }

    pub fn aux_flip_count(&self) -> u64 {
        self.aux_flips
    }

    /// Sum of all per-bit counters plus the auxiliary counter.
    pub fn total_flips(&self) -> u64 {
        self.bit_flips.iter().map(|&c| c as u64).sum::<u64>() + self.aux_flips
    }

    pub fn stats(&self) -> WearStats {
        let address_write_cdf = Cdf::from_counts(self.address_writes.iter().copied());
        let bit_flip_cdf = Cdf::from_counts(self.bit_flips.iter().map(|&c| c as u64));
        WearStats {
            max_address_writes: address_write_cdf.max(),
            max_bit_flips: bit_flip_cdf.max(),
            address_write_cdf,
            bit_flip_cdf,
        }
    }

    /// Serializes the data zone.
    ///
    /// Layout: 32-byte header (`FLIPKV01`, `bucket_bits`, `n_buckets`, then
    /// `word_bits | line_bits << 32`, each as little-endian `u64`), followed
    /// by the raw bucket contents MSB-first, `bucket_bits / 8` bytes each.
    /// A wear trailer (`FLIPWEAR`, valid flags, address write counts, per-bit
    /// flip counts, aux counter, line latency) follows the contents.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.geometry;
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(g.bucket_bits as u64).to_le_bytes())?;
        out.write_all(&(g.n_buckets as u64).to_le_bytes())?;
        let packed = g.word_bits as u64 | ((g.line_bits as u64) << 32);
        out.write_all(&packed.to_le_bytes())?;
        for b in &self.buckets {
            out.write_all(&b.to_bytes())?;
        }
        out.write_all(WEAR_MAGIC)?;
        let flags: Vec<u8> = self.valid.iter().map(|&v| v as u8).collect();
        out.write_all(&flags)?;
        for c in &self.address_writes {
            out.write_all(&c.to_le_bytes())?;
        }
        for c in &self.bit_flips {
            out.write_all(&c.to_le_bytes())?;
        }
        out.write_all(&self.aux_flips.to_le_bytes())?;
        out.write_all(&self.line_latency_ns.to_le_bytes())?;
        Ok(())
    }

    /// Inverse of [`NvmDevice::write_snapshot`]. A file that ends after the
    /// bucket contents loads with zeroed counters and every bucket valid.
    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| Error::io("<snapshot>", e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad snapshot magic".into()));
        }
        let bucket_bits = cur.u64()? as usize;
        let n_buckets = cur.u64()? as usize;
        let packed = cur.u64()?;
        let geometry = DeviceGeometry {
            bucket_bits,
            word_bits: (packed & 0xffff_ffff) as usize,
            line_bits: (packed >> 32) as usize,
            n_buckets,
        };
        geometry
            .validate()
            .map_err(|e| Error::Format(format!("snapshot header: {e}")))?;
        let bucket_bytes = bucket_bits.div_ceil(8);
        let mut buckets = Vec::with_capacity(n_buckets);
        for _ in 0..n_buckets {
            let raw = BitBuffer::from_bytes(cur.take(bucket_bytes)?);
            buckets.push(if raw.width() == bucket_bits {
                raw
            } else {
                raw.slice(0, bucket_bits)
            });
        }
        let mut device = NvmDevice::create(geometry, buckets)?;
        if cur.remaining() == 0 {
            return Ok(device);
        }
        if cur.take(8)? != WEAR_MAGIC {
            return Err(Error::Format("bad wear trailer magic".into()));
        }
        for v in device.valid.iter_mut() {
            *v = cur.take(1)?[0] != 0;
        }
        for c in device.address_writes.iter_mut() {
            *c = cur.u64()?;
        }
        for c in device.bit_flips.iter_mut() {
            *c = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        }
        device.aux_flips = cur.u64()?;
        device.line_latency_ns = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        if cur.remaining() != 0 {
            return Err(Error::Format("trailing bytes after wear trailer".into()));
        }
        Ok(device)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated snapshot".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> BitBuffer {
        s.parse().unwrap()
    }

    /// The six rows of the worked example, padded to 512 bits with leading
    /// zeros so each row's last byte is the example byte.
    pub(crate) fn table2_padded() -> Vec<BitBuffer> {
        ["00000111", "00001011", "00101100", "00111100", "11010000", "01110000"]
            .iter()
            .map(|row| BitBuffer::zeros(504).concat(&b(row)))
            .collect()
    }

    #[test]
    fn geometry_validation() {
        assert!(DeviceGeometry::new(512, 4).validate().is_ok());
        assert!(DeviceGeometry::new(32, 4).validate().is_ok());
        assert!(DeviceGeometry::new(48, 4).validate().is_err());
        assert!(DeviceGeometry::new(512, 0).validate().is_err());
        assert!(DeviceGeometry::new(512, 4).with_line_bits(96).validate().is_err());
        assert!(DeviceGeometry::new(1536, 4).with_line_bits(1024).validate().is_err());
    }

    #[test]
    fn create_with_initial_contents() {
        let dev = NvmDevice::create(DeviceGeometry::new(512, 6), table2_padded()).unwrap();
        let (content, valid) = dev.read(0).unwrap();
        assert!(valid);
        assert_eq!(content.slice(504, 8), b("00000111"));
        assert_eq!(dev.stats().max_address_writes, 0);
        assert_eq!(dev.total_flips(), 0);
    }

    #[test]
    fn create_empty_and_errors() {
        let dev = NvmDevice::create(DeviceGeometry::new(64, 3), vec![]).unwrap();
        assert!(dev.contents().iter().all(|c| c.count_ones() == 0));
        assert!(!dev.is_valid(2).unwrap());
        assert_eq!(dev.stats().bit_flip_cdf.points, vec![(0, 1.0)]);
        assert!(NvmDevice::create(DeviceGeometry::new(64, 1), vec![BitBuffer::zeros(64); 2]).is_err());
        assert!(NvmDevice::create(DeviceGeometry::new(64, 1), vec![BitBuffer::zeros(32)]).is_err());
        assert!(matches!(dev.read(3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn one_bit_write_from_worked_example() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(512, 6), table2_padded()).unwrap();
        let d1 = BitBuffer::zeros(504).concat(&b("00001111"));
        let before = dev.stats();
        let r = dev.apply_diff(0, &d1, 0).unwrap();
        assert_eq!(r.bits_flipped, 1);
        assert_eq!(r.words_touched, 1);
        assert_eq!(r.lines_touched, 1);
        assert_eq!(r.modeled_latency_ns, 600.0);
        assert_eq!(dev.read(0).unwrap().0, d1);
        assert_ne!(before, dev.stats());
    }

    #[test]
    fn identical_write_is_free() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(512, 6), table2_padded()).unwrap();
        let same = dev.read(2).unwrap().0;
        let r = dev.apply_diff(2, &same, 0).unwrap();
        assert!(r.is_zero());
        assert_eq!(dev.address_write_counts()[2], 0);
    }

    #[test]
    fn full_complement_geometry() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(512, 2), vec![]).unwrap();
        let r = dev.apply_diff(1, &BitBuffer::ones(512), 0).unwrap();
        assert_eq!((r.bits_flipped, r.words_touched, r.lines_touched), (512, 16, 1));
        // second identical write is idempotent
        assert!(dev.apply_diff(1, &BitBuffer::ones(512), 0).unwrap().is_zero());
    }

    #[test]
    fn lines_counted_in_global_coordinates() {
        // two 256-bit buckets share one 512-bit line; 4 lines per 2048-bit bucket otherwise
        let mut dev = NvmDevice::create(DeviceGeometry::new(256, 4), vec![]).unwrap();
        let r = dev.apply_diff(1, &BitBuffer::ones(256), 0).unwrap();
        assert_eq!((r.words_touched, r.lines_touched), (8, 1));
        let mut big = NvmDevice::create(DeviceGeometry::new(2048, 2), vec![]).unwrap();
        let mut v = BitBuffer::zeros(2048);
        v.set(0, true);
        v.set(1500, true);
        let r = big.apply_diff(1, &v, 0).unwrap();
        assert_eq!((r.bits_flipped, r.words_touched, r.lines_touched), (2, 2, 2));
    }

    #[test]
    fn full_mode_counts_every_bit() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(64, 1), vec![]).unwrap();
        let r = dev.apply(0, &BitBuffer::zeros(64), 0, WriteMode::Full).unwrap();
        assert_eq!((r.bits_flipped, r.words_touched, r.lines_touched), (64, 2, 1));
        assert!(dev.bit_flip_counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn reset_flag_semantics() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(512, 6), table2_padded()).unwrap();
        let content = dev.read(4).unwrap().0;
        let before = dev.total_flips();
        let r = dev.reset_flag(4).unwrap();
        assert_eq!(r.bits_flipped, 1);
        assert_eq!(dev.total_flips(), before + 1);
        let (after, valid) = dev.read(4).unwrap();
        assert!(!valid);
        assert_eq!(after, content);
        assert!(matches!(dev.reset_flag(4), Err(Error::NotLive(4))));
    }

    #[test]
    fn aux_flips_accounted() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(32, 1), vec![]).unwrap();
        let r = dev.apply_diff(0, &BitBuffer::zeros(32), 3).unwrap();
        assert_eq!((r.bits_flipped, r.aux_bits_flipped, r.lines_touched), (3, 3, 0));
        assert_eq!(dev.address_write_counts()[0], 1);
        assert_eq!(dev.total_flips(), 3);
    }

    #[test]
    fn cdf_examples() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(32, 4), vec![]).unwrap();
        for a in 0..4 {
            dev.apply_diff(a, &BitBuffer::from_u64(a as u64 + 1, 32), 0).unwrap();
        }
        let s = dev.stats();
        assert_eq!(s.address_write_cdf.prob_le(1), 1.0);
        assert_eq!(s.address_write_cdf.prob_le(0), 0.0);
        let cdf = Cdf::from_counts([0, 0, 1, 3]);
        assert_eq!(cdf.points, vec![(0, 0.5), (1, 0.75), (3, 1.0)]);
        assert_eq!(cdf.prob_le(2), 0.75);
    }

    #[test]
    fn extend_keeps_existing_state() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(512, 6), table2_padded()).unwrap();
        dev.apply_diff(0, &BitBuffer::ones(512), 0).unwrap();
        let flips = dev.bit_flip_counts().to_vec();
        dev.extend(4);
        assert_eq!(dev.n_buckets(), 10);
        assert_eq!(&dev.bit_flip_counts()[..flips.len()], &flips[..]);
        assert_eq!(dev.read(9).unwrap(), (BitBuffer::zeros(512), false));
    }

    #[test]
    fn snapshot_round_trip_and_bad_magic() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(64, 3), vec![BitBuffer::ones(64)]).unwrap();
        dev.apply_diff(2, &BitBuffer::from_u64(0xdead_beef, 64), 0).unwrap();
        dev.reset_flag(0).unwrap();
        let mut bytes = Vec::new();
        dev.write_snapshot(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"FLIPKV01");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 64);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(&bytes[32..40], &[0xff; 8]);
        let back = NvmDevice::read_snapshot(&bytes[..]).unwrap();
        assert_eq!(back.contents(), dev.contents());
        assert_eq!(back.stats(), dev.stats());
        assert_eq!(back.total_flips(), dev.total_flips());
        assert!(!back.is_valid(0).unwrap());

        // contents-only file
        let raw = back.read_snapshot_prefix_len();
        let plain = NvmDevice::read_snapshot(&bytes[..raw]).unwrap();
        assert_eq!(plain.total_flips(), 0);

        bytes[0] = b'X';
        assert!(matches!(NvmDevice::read_snapshot(&bytes[..]), Err(Error::Format(_))));
    }

    impl NvmDevice {
        fn read_snapshot_prefix_len(&self) -> usize {
            32 + self.n_buckets() * self.geometry.bucket_bits / 8
        }
    }

    #[test]
    fn index_zone_flips_are_aux() {
        let mut dev = NvmDevice::create(DeviceGeometry::new(32, 2), vec![]).unwrap();
        dev.attach_index_zone(4, 96);
        let mut rec = BitBuffer::zeros(96);
        rec.set(0, true);
        rec.set(95, true);
        let r = dev.write_index_record(3, &rec).unwrap();
        assert_eq!((r.bits_flipped, r.aux_bits_flipped), (2, 2));
        assert_eq!(dev.aux_flip_count(), 2);
        assert!(dev.write_index_record(4, &rec).is_err());
    }
}
