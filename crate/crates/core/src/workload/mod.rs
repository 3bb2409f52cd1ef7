//! Workload generation and the phased driver.

mod gen;
mod trace;

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gen::{
    derive_seed, gen_normal, gen_prototype_mixture, gen_uniform, load_records, mixture_prototypes, BlendPart, Source,
    ValueGen,
};
pub use trace::{parse_trace, run_trace, write_op_csv, TraceOp};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};
use crate::nvm::{DeviceGeometry, WriteReport};
use crate::store::{Key, KvEngine, OpKind};

pub const DEFAULT_WINDOW: usize = 1000;

/// Fractions of each operation kind in a phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpMix {
    pub put: f64,
    pub update: f64,
    pub delete: f64,
    pub get: f64,
}

impl OpMix {
    pub fn puts() -> Self {
        OpMix {
            put: 1.0,
            ..OpMix::default()
        }
    }

    pub fn updates() -> Self {
        OpMix {
            update: 1.0,
            ..OpMix::default()
        }
    }

    pub fn deletes() -> Self {
        OpMix {
            delete: 1.0,
            ..OpMix::default()
        }
    }

    pub fn gets() -> Self {
        OpMix {
            get: 1.0,
            ..OpMix::default()
        }
    }

    fn ratios(&self) -> [(OpKind, f64); 4] {
        [
            (OpKind::Put, self.put),
            (OpKind::Upd, self.update),
            (OpKind::Del, self.delete),
            (OpKind::Get, self.get),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.ratios();
        if r.iter().any(|(_, x)| x.is_nan() || *x < 0.0) {
            return Err(Error::Config("op mix ratios must be non-negative".into()));
        }
        let sum: f64 = r.iter().map(|(_, x)| x).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("op mix ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Per-kind counts for `n` ops, rounded on the cumulative ratio so they
    /// sum to `n` exactly.
    fn counts(&self, n: usize) -> [(OpKind, usize); 4] {
        let mut out = [(OpKind::Put, 0); 4];
        let mut cum = 0.0;
        let mut prev = 0usize;
        for (i, (kind, r)) in self.ratios().into_iter().enumerate() {
            cum += r;
            let upto = if i == 3 {
                n
            } else {
                ((cum * n as f64).round() as usize).min(n)
            };
            out[i] = (kind, upto.saturating_sub(prev));
            prev = prev.max(upto);
        }
        out
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> OpKind {
        let mut x = rng.random::<f64>();
        for (kind, r) in self.ratios() {
            if x < r {
                return kind;
            }
            x -= r;
        }
        self.ratios()
            .into_iter()
            .rev()
            .find(|(_, r)| *r > 0.0)
            .map_or(OpKind::Get, |(k, _)| k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// All puts, then updates, then deletes, then gets.
    #[default]
    Block,
    /// Each op kind drawn independently according to the mix.
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    #[serde(default)]
    pub name: String,
    pub source: Source,
    pub mix: OpMix,
    pub count: usize,
    #[serde(default)]
    pub schedule: Schedule,
    /// Retrain the engine's model before the phase starts.
    #[serde(default)]
    pub retrain_before: bool,
}

/// Old data present on the device before the store is initialised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmUp {
    pub source: Source,
    /// Buckets to fill from address 0; all of them when absent.
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub warmup: Option<WarmUp>,
    pub phases: Vec<Phase>,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

const WARMUP_TAG: u64 = 0x7761_726d;
const OPS_TAG: u64 = 0x006f_7073;

impl WorkloadSpec {
    pub fn new(seed: u64, phases: Vec<Phase>) -> Self {
        WorkloadSpec {
            seed,
            window: DEFAULT_WINDOW,
            warmup: None,
            phases,
        }
    }

    pub fn with_warmup(mut self, source: Source, count: Option<usize>) -> Self {
        self.warmup = Some(WarmUp { source, count });
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.phases.is_empty() {
            return Err(Error::Config("workload has no phases".into()));
        }
        for p in &self.phases {
            if p.count == 0 {
                return Err(Error::Config(format!("phase {:?} has zero ops", p.name)));
            }
            p.mix.validate()?;
            p.source.validate()?;
        }
        if let Some(w) = &self.warmup {
            w.source.validate()?;
        }
        Ok(())
    }

    /// Initial device contents: warm-up values followed by zeroed buckets.
    pub fn initial_contents(&self, geometry: &DeviceGeometry) -> Result<Vec<BitBuffer>> {
        let Some(w) = &self.warmup else {
            return Ok(Vec::new());
        };
        let n = w.count.unwrap_or(geometry.n_buckets);
        if n > geometry.n_buckets {
            return Err(Error::Config(format!(
                "warm-up of {n} values exceeds {} buckets",
                geometry.n_buckets
            )));
        }
        w.source
            .generator(geometry.bucket_bits, derive_seed(self.seed, WARMUP_TAG), self.seed)?
            .take(n)
    }
}

/// Aggregated metrics over consecutive operations of one phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub phase: usize,
    pub window: usize,
    pub ops: u64,
    pub puts: u64,
    pub updates: u64,
    pub deletes: u64,
    pub gets: u64,
    pub payload_flips: u64,
    pub aux_flips: u64,
    pub words: u64,
    pub lines: u64,
    pub latency_ns: f64,
    pub flips_per_512: f64,
    pub aux_flips_per_512: f64,
    pub lines_per_op: f64,
}

impl Window {
    fn record(&mut self, kind: OpKind, r: &WriteReport) {
        self.ops += 1;
        match kind {
            OpKind::Put => self.puts += 1,
            OpKind::Upd => self.updates += 1,
            OpKind::Del => self.deletes += 1,
            OpKind::Get => self.gets += 1,
        }
        self.payload_flips += r.payload_bits_flipped();
        self.aux_flips += r.aux_bits_flipped;
        self.words += r.words_touched;
        self.lines += r.lines_touched;
        self.latency_ns += r.modeled_latency_ns;
    }

    fn finish(&mut self, bucket_bits: usize) {
        let blocks = per_512_blocks(self.puts + self.updates, bucket_bits);
        self.flips_per_512 = ratio(self.payload_flips as f64, blocks);
        self.aux_flips_per_512 = ratio(self.aux_flips as f64, blocks);
        self.lines_per_op = ratio(self.lines as f64, self.ops as f64);
    }
}

/// Written payload measured in 512-bit units.
pub fn per_512_blocks(writes: u64, bucket_bits: usize) -> f64 {
    writes as f64 * bucket_bits as f64 / 512.0
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Everything the driver observed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    pub windows: Vec<Window>,
    /// Sum of every operation's report.
    pub total: WriteReport,
    pub device_flips_before: u64,
    pub device_flips_after: u64,
}

impl Timeline {
    pub fn ops(&self) -> u64 {
        self.windows.iter().map(|w| w.ops).sum()
    }

    pub fn writes(&self) -> u64 {
        self.windows.iter().map(|w| w.puts + w.updates).sum()
    }

    /// Reported flips match the growth of the device's counters.
    pub fn conserved(&self) -> bool {
        self.device_flips_after - self.device_flips_before == self.total.bits_flipped
    }

    pub fn phase_windows(&self, phase: usize) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(move |w| w.phase == phase)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.windows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("windows.csv", e))?;
        Ok(())
    }
}

/// A failed run with the metrics gathered up to the failing operation.
#[derive(Debug)]
pub struct DriveFailure {
    pub error: Error,
    pub partial: Timeline,
}

impl fmt::Display for DriveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} ops)", self.error, self.partial.ops())
    }
}

impl std::error::Error for DriveFailure {}

/// Live keys with O(1) uniform sampling.
#[derive(Debug, Default)]
struct LiveKeys {
    keys: Vec<u64>,
    pos: HashMap<u64, usize>,
}

impl LiveKeys {
    fn insert(&mut self, k: u64) {
        self.pos.insert(k, self.keys.len());
        self.keys.push(k);
    }

    fn remove(&mut self, k: u64) {
        if let Some(i) = self.pos.remove(&k) {
            self.keys.swap_remove(i);
            if let Some(&moved) = self.keys.get(i) {
                self.pos.insert(moved, i);
            }
        }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> Option<u64> {
        (!self.keys.is_empty()).then(|| self.keys[rng.random_range(0..self.keys.len())])
    }
}

struct Driver<'a, E: ?Sized> {
    engine: &'a mut E,
    spec: &'a WorkloadSpec,
    bucket_bits: usize,
    rng: ChaCha8Rng,
    live: LiveKeys,
    next_key: u64,
    timeline: Timeline,
    current: Window,
}

impl<E: KvEngine + ?Sized> Driver<'_, E> {
    fn flush(&mut self) {
        if self.current.ops > 0 {
            let phase = self.current.phase;
            let next = self.current.window + 1;
            let mut w = std::mem::take(&mut self.current);
            w.finish(self.bucket_bits);
            self.timeline.windows.push(w);
            self.current.phase = phase;
            self.current.window = next;
        }
    }

    fn op(&mut self, kind: OpKind, gen: &mut ValueGen) -> Result<()> {
        let victim = match kind {
            OpKind::Put => None,
            _ => self.live.pick(&mut self.rng),
        };
        let (kind, report) = match (kind, victim) {
            (OpKind::Get, Some(k)) => {
                self.engine.get(&Key::from_u64(k))?;
                (OpKind::Get, WriteReport::default())
            }
            (OpKind::Get, None) => (OpKind::Get, WriteReport::default()),
            (OpKind::Del, Some(k)) => {
                let r = self.engine.delete(&Key::from_u64(k))?;
                self.live.remove(k);
                (OpKind::Del, r.write)
            }
            (OpKind::Upd, Some(k)) => {
                let v = gen.next_value()?;
                (OpKind::Upd, self.engine.update(&Key::from_u64(k), &v)?.write)
            }
            // puts, and updates or deletes with nothing live
            _ => {
                let v = gen.next_value()?;
                let k = self.next_key;
                let r = self.engine.put(Key::from_u64(k), &v)?;
                self.next_key += 1;
                self.live.insert(k);
                (OpKind::Put, r.write)
            }
        };
        self.current.record(kind, &report);
        self.timeline.total += report;
        if self.current.ops as usize == self.spec.window {
            self.flush();
        }
        Ok(())
    }

    fn phase(&mut self, index: usize, phase: &Phase) -> Result<()> {
        if phase.retrain_before {
            self.engine.retrain()?;
        }
        self.current = Window {
            phase: index,
            ..Window::default()
        };
        let mut gen = phase.source.generator(
            self.bucket_bits,
            derive_seed(self.spec.seed, 100 + index as u64),
            self.spec.seed,
        )?;
        match phase.schedule {
            Schedule::Block => {
                for (kind, n) in phase.mix.counts(phase.count) {
                    for _ in 0..n {
                        self.op(kind, &mut gen)?;
                    }
                }
            }
            Schedule::Interleaved => {
                for _ in 0..phase.count {
                    let kind = phase.mix.sample(&mut self.rng);
                    self.op(kind, &mut gen)?;
                }
            }
        }
        self.flush();
        Ok(())
    }
}

/// Runs every phase of `spec` against `engine`. Keys are consecutive
/// integers; update, delete and get victims are drawn uniformly from the
/// live keys. An update or delete with no live key becomes a put.
pub fn drive<E: KvEngine + ?Sized>(engine: &mut E, spec: &WorkloadSpec) -> Result<Timeline, DriveFailure> {
    let before = engine.device().total_flips();
    let fail = |error, partial| DriveFailure { error, partial };
    if let Err(e) = spec.validate() {
        return Err(fail(e, Timeline::default()));
    }
    let mut d = Driver {
        bucket_bits: engine.device().geometry().bucket_bits,
        engine,
        spec,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, OPS_TAG)),
        live: LiveKeys::default(),
        next_key: 0,
        timeline: Timeline {
            device_flips_before: before,
            ..Timeline::default()
        },
        current: Window::default(),
    };
    for (i, phase) in spec.phases.iter().enumerate() {
        if let Err(e) = d.phase(i, phase) {
            d.flush();
            d.timeline.device_flips_after = d.engine.device().total_flips();
            return Err(fail(e, d.timeline));
        }
    }
    d.timeline.device_flips_after = d.engine.device().total_flips();
    Ok(d.timeline)
}
