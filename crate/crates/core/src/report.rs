//! Run configuration, summaries and the files the CLI emits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitBuffer;
use crate::encoders::Scheme;
use crate::error::{Error, Result};
use crate::ml::{elbow_scan, pca_fit, training_features, ClusterModel, ElbowCurve, MlConfig, PcaTarget};
use crate::nvm::{DeviceGeometry, NvmDevice, WearStats, DEFAULT_LINE_LATENCY_NS};
use crate::store::{InPlaceStore, KvEngine, KvStore, StoreConfig};
use crate::workload::{drive, per_512_blocks, Timeline, WorkloadSpec};

/// Complete description of a run: device, store, model and workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: DeviceGeometry,
    #[serde(default)]
    pub store: StoreConfig,
    #[serde(default)]
    pub ml: MlConfig,
    pub workload: WorkloadSpec,
    #[serde(default = "default_latency")]
    pub line_latency_ns: f64,
}

fn default_latency() -> f64 {
    DEFAULT_LINE_LATENCY_NS
}

impl RunConfig {
    pub fn new(geometry: DeviceGeometry, workload: WorkloadSpec) -> Self {
        RunConfig {
            geometry,
            store: StoreConfig::default(),
            ml: MlConfig::default(),
            workload,
            line_latency_ns: DEFAULT_LINE_LATENCY_NS,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.store.validate()?;
        self.workload.validate()?;
        if self.line_latency_ns.is_nan() || self.line_latency_ns < 0.0 {
            return Err(Error::Config("line_latency_ns must be non-negative".into()));
        }
        Ok(())
    }

    /// Uses `seed` for both the workload and model training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.workload.seed = seed;
        self.ml.seed = seed;
        self
    }

    /// Store settings with the model section folded in and `k` applied.
    pub fn store_config(&self, k: Option<usize>) -> StoreConfig {
        let mut cfg = self.store.clone();
        cfg.ml = self.ml.clone();
        if let Some(k) = k {
            cfg.ml.k = k;
        }
        cfg
    }

    /// Fresh device holding the warm-up contents.
    pub fn device(&self) -> Result<NvmDevice> {
        let contents = self.workload.initial_contents(&self.geometry)?;
        Ok(NvmDevice::create(self.geometry, contents)?.with_line_latency_ns(self.line_latency_ns))
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: String,
    pub k: Option<usize>,
    pub ops: u64,
    pub writes: u64,
    pub payload_flips: u64,
    pub aux_flips: u64,
    pub words: u64,
    pub lines: u64,
    pub flips_per_512: f64,
    pub aux_flips_per_512: f64,
    pub lines_per_op: f64,
    /// Modeled line-write latency per op.
    pub avg_latency_ns: f64,
    /// Measured model inference time per op. Not deterministic.
    pub predict_ns_per_op: f64,
    /// `avg_latency_ns + predict_ns_per_op`.
    pub combined_latency_ns: f64,
    pub max_bit_flips: u64,
    pub max_address_writes: u64,
    pub conserved: bool,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn new(
        scheme: Scheme,
        k: Option<usize>,
        timeline: &Timeline,
        device: &NvmDevice,
        predict_time: Duration,
        error: Option<&Error>,
    ) -> Self {
        let w = &timeline.windows;
        let ops: u64 = w.iter().map(|x| x.ops).sum();
        let writes = timeline.writes();
        let payload_flips: u64 = w.iter().map(|x| x.payload_flips).sum();
        let aux_flips: u64 = w.iter().map(|x| x.aux_flips).sum();
        let lines: u64 = w.iter().map(|x| x.lines).sum();
        let latency: f64 = w.iter().map(|x| x.latency_ns).sum();
        let blocks = per_512_blocks(writes, device.geometry().bucket_bits);
        let per = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let stats = device.stats();
        let avg_latency_ns = per(latency, ops as f64);
        let predict_ns_per_op = per(predict_time.as_nanos() as f64, ops as f64);
        RunSummary {
            scheme: scheme.name().to_string(),
            k,
            ops,
            writes,
            payload_flips,
            aux_flips,
            words: w.iter().map(|x| x.words).sum(),
            lines,
            flips_per_512: per(payload_flips as f64, blocks),
            aux_flips_per_512: per(aux_flips as f64, blocks),
            lines_per_op: per(lines as f64, ops as f64),
            avg_latency_ns,
            predict_ns_per_op,
            combined_latency_ns: avg_latency_ns + predict_ns_per_op,
            max_bit_flips: stats.max_bit_flips,
            max_address_writes: stats.max_address_writes,
            conserved: timeline.conserved(),
            error: error.map(ToString::to_string),
        }
    }

    /// Label used for per-cell output directories.
    pub fn cell_name(&self) -> String {
        match self.k {
            Some(k) => format!("{}_k{k}", self.scheme),
            None => self.scheme.clone(),
        }
    }
}

/// Everything produced by one run. `error` holds a failure that stopped
/// the workload early; the metrics cover the ops completed before it.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub timeline: Timeline,
    pub device: NvmDevice,
    pub error: Option<Error>,
}

#[derive(Debug, Default)]
pub struct RunOptions {
    /// Cluster count for PNW; the configured one when absent.
    pub k: Option<usize>,
    /// Pre-trained PNW model used instead of training at start-up.
    pub model: Option<ClusterModel>,
    /// Starting device instead of a fresh warm-up.
    pub device: Option<NvmDevice>,
}

fn execute<E: KvEngine>(engine: &mut E, spec: &WorkloadSpec) -> (Timeline, Option<Error>) {
    match drive(engine, spec) {
        Ok(t) => (t, None),
        Err(f) => (f.partial, Some(f.error)),
    }
}

/// Runs the configured workload under `scheme`.
pub fn run_scheme(config: &RunConfig, scheme: Scheme, opts: RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let device = match opts.device {
        Some(d) => d,
        None => config.device()?,
    };
    match scheme.encoding(device.geometry().word_bits) {
        Some(encoding) => {
            let mut store = InPlaceStore::new(device, encoding)?;
            let (timeline, error) = execute(&mut store, &config.workload);
            let summary = RunSummary::new(scheme, None, &timeline, store.device(), Duration::ZERO, error.as_ref());
            Ok(RunOutcome {
                summary,
                timeline,
                device: store.into_device(),
                error,
            })
        }
        None => {
            let store_cfg = config.store_config(opts.k.or(opts.model.as_ref().map(|m| m.k)));
            let mut store = match opts.model {
                Some(m) => KvStore::with_model(device, store_cfg, m)?,
                None => KvStore::init(device, store_cfg)?,
            };
            let (timeline, error) = execute(&mut store, &config.workload);
            let k = Some(store.model().k);
            let summary = RunSummary::new(
                scheme,
                k,
                &timeline,
                store.device(),
                store.predict_time(),
                error.as_ref(),
            );
            Ok(RunOutcome {
                summary,
                timeline,
                device: store.into_device(),
                error,
            })
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Both wear CDFs as `wear_address_cdf.csv` and `wear_bit_cdf.csv`.
pub fn write_wear_csvs(dir: &Path, stats: &WearStats) -> Result<()> {
    for (name, metric, cdf) in [
        ("wear_address_cdf.csv", "address_writes", &stats.address_write_cdf),
        ("wear_bit_cdf.csv", "bit_flips", &stats.bit_flip_cdf),
    ] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        WearStats::write_cdf_csv(&mut w, metric, cdf)?;
        finish(w, &path)?;
    }
    Ok(())
}

/// `summary.json`, `windows.csv`, both wear CDFs and the `device.bin`
/// snapshot.
pub fn write_run_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("summary.json"), &outcome.summary)?;
    let path = dir.join("windows.csv");
    let mut w = create(&path)?;
    outcome.timeline.write_csv(&mut w)?;
    finish(w, &path)?;
    write_wear_csvs(dir, &outcome.device.stats())?;
    let path = dir.join("device.bin");
    let mut w = create(&path)?;
    outcome.device.write_snapshot(&mut w).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)
}

/// One row of `comparison.csv`. Measured timings are left out so the file
/// is reproducible.
#[derive(Debug, Serialize)]
struct ComparisonRow<'a> {
    scheme: &'a str,
    k: Option<usize>,
    ops: u64,
    writes: u64,
    payload_flips: u64,
    aux_flips: u64,
    flips_per_512: f64,
    aux_flips_per_512: f64,
    lines_per_op: f64,
    avg_latency_ns: f64,
    max_bit_flips: u64,
    max_address_writes: u64,
    error: Option<&'a str>,
}

pub fn write_comparison_csv<W: Write>(out: W, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in rows {
        w.serialize(ComparisonRow {
            scheme: &s.scheme,
            k: s.k,
            ops: s.ops,
            writes: s.writes,
            payload_flips: s.payload_flips,
            aux_flips: s.aux_flips,
            flips_per_512: s.flips_per_512,
            aux_flips_per_512: s.aux_flips_per_512,
            lines_per_op: s.lines_per_op,
            avg_latency_ns: s.avg_latency_ns,
            max_bit_flips: s.max_bit_flips,
            max_address_writes: s.max_address_writes,
            error: s.error.as_deref(),
        })?;
    }
    w.flush().map_err(|e| Error::io("comparison.csv", e))?;
    Ok(())
}

/// Runs every scheme over the same workload, PNW once per `k`, in
/// parallel. Cells keep the order of `schemes` then `k_list`.
pub fn compare(config: &RunConfig, schemes: &[Scheme], k_list: &[usize]) -> Result<Vec<RunOutcome>> {
    if schemes.len() < 2 {
        return Err(Error::Config("compare needs at least two schemes".into()));
    }
    let mut cells: Vec<(Scheme, Option<usize>)> = Vec::new();
    for &s in schemes {
        if s == Scheme::Pnw {
            if k_list.is_empty() {
                cells.push((s, None));
            }
            cells.extend(k_list.iter().map(|&k| (s, Some(k))));
        } else {
            cells.push((s, None));
        }
    }
    cells
        .into_par_iter()
        .map(|(scheme, k)| {
            run_scheme(
                config,
                scheme,
                RunOptions {
                    k,
                    ..RunOptions::default()
                },
            )
        })
        .collect()
}

/// Model, elbow curve and cumulative PCA spectrum of one training corpus.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: ClusterModel,
    pub elbow: ElbowCurve,
    /// `(component, cumulative variance ratio)`, components numbered from 1.
    pub pca_cumulative: Vec<(usize, f64)>,
}

/// Trains the placement model and scans k from 1 to `k_max` in the same
/// feature space.
pub fn fit(contents: &[BitBuffer], ml: &MlConfig, k_max: usize) -> Result<FitReport> {
    let model = ClusterModel::train(contents, ml)?;
    let (features, _) = training_features(contents, ml)?;
    let elbow = elbow_scan(&features, k_max, &ml.params())?;
    let (raw, _) = training_features(
        contents,
        &MlConfig {
            pca_threshold: usize::MAX,
            ..ml.clone()
        },
    )?;
    let spectrum = pca_fit(&raw, PcaTarget::Components(1))?.full_variance_ratio;
    let mut cum = 0.0;
    let pca_cumulative = spectrum
        .iter()
        .enumerate()
        .map(|(i, r)| {
            cum += r;
            (i + 1, cum.min(1.0))
        })
        .collect();
    Ok(FitReport {
        model,
        elbow,
        pca_cumulative,
    })
}

/// `model.json`, `elbow.csv` and `pca_variance.csv`.
pub fn write_fit_outputs(dir: &Path, report: &FitReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.model.save(&dir.join("model.json"))?;
    let path = dir.join("elbow.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["k", "sse"])?;
    for (k, sse) in &report.elbow.points {
        w.write_record([k.to_string(), sse.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = dir.join("pca_variance.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["component", "cum_ratio"])?;
    for (c, r) in &report.pca_cumulative {
        w.write_record([c.to_string(), format!("{r:.9}")])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{OpMix, Phase, Schedule, Source};

    fn config(n: usize, phases: Vec<Phase>) -> RunConfig {
        let wl = WorkloadSpec::new(5, phases).with_warmup(Source::Uniform, None);
        let mut cfg = RunConfig::new(DeviceGeometry::new(32, n), wl);
        cfg.ml.k = 2;
        cfg
    }

    fn puts(source: Source, n: usize) -> Phase {
        Phase {
            name: "load".into(),
            source,
            mix: OpMix::puts(),
            count: n,
            schedule: Schedule::Block,
            retrain_before: false,
        }
    }

    #[test]
    fn conventional_is_exactly_512() {
        let cfg = config(400, vec![puts(Source::Uniform, 300)]);
        let out = run_scheme(&cfg, Scheme::Conventional, RunOptions::default()).unwrap();
        assert_eq!(out.summary.flips_per_512, 512.0);
        assert!(out.summary.conserved);
        assert!(out.error.is_none());
    }

    #[test]
    fn dcw_identical_overwrite_is_free() {
        let src = Source::PrototypeMixture {
            prototypes: 1,
            p: 0.0,
            prototype_seed: Some(3),
        };
        let mut cfg = config(
            100,
            vec![
                puts(src.clone(), 50),
                Phase {
                    mix: OpMix::updates(),
                    ..puts(src, 200)
                },
            ],
        );
        cfg.workload.warmup = None;
        let out = run_scheme(&cfg, Scheme::Dcw, RunOptions::default()).unwrap();
        let upd: u64 = out.timeline.phase_windows(1).map(|w| w.payload_flips).sum();
        assert_eq!(upd, 0);
    }

    #[test]
    fn compare_grid_and_csv() {
        let cfg = config(400, vec![puts(Source::Uniform, 200)]);
        let cells = compare(&cfg, &[Scheme::Dcw, Scheme::Pnw], &[1, 2]).unwrap();
        let names: Vec<String> = cells.iter().map(|c| c.summary.cell_name()).collect();
        assert_eq!(names, ["dcw", "pnw_k1", "pnw_k2"]);
        let rows: Vec<RunSummary> = cells.into_iter().map(|c| c.summary).collect();
        let mut a = Vec::new();
        write_comparison_csv(&mut a, &rows).unwrap();
        let again: Vec<RunSummary> = compare(&cfg, &[Scheme::Dcw, Scheme::Pnw], &[1, 2])
            .unwrap()
            .into_iter()
            .map(|c| c.summary)
            .collect();
        let mut b = Vec::new();
        write_comparison_csv(&mut b, &again).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("scheme,k,ops,"));
        assert!(compare(&cfg, &[Scheme::Dcw], &[]).is_err());
    }

    #[test]
    fn run_outputs_written() {
        let cfg = config(400, vec![puts(Source::Uniform, 200)]);
        let out = run_scheme(&cfg, Scheme::Pnw, RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_outputs(dir.path(), &out).unwrap();
        for f in [
            "summary.json",
            "windows.csv",
            "wear_address_cdf.csv",
            "wear_bit_cdf.csv",
            "device.bin",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = NvmDevice::read_snapshot(File::open(dir.path().join("device.bin")).unwrap()).unwrap();
        assert_eq!(back.total_flips(), out.device.total_flips());
        let s: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.payload_flips + s.aux_flips, out.timeline.total.bits_flipped);
    }

    #[test]
    fn config_json_sections() {
        let json = r#"{
            "geometry": {"bucket_bits": 32, "n_buckets": 64},
            "store": {"load_factor": 0.9, "update_mode": "latency"},
            "ml": {"k": 3, "seed": 9},
            "workload": {"phases": [{"source": {"kind": "uniform"}, "mix": {"put": 1.0}, "count": 10}]}
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.store_config(None).ml.k, 3);
        assert_eq!(cfg.store_config(Some(5)).ml.k, 5);
        let bad = json.replace("\"load_factor\"", "\"loadfactor\"");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn fit_outputs() {
        let rows: Vec<BitBuffer> = ["00000111", "00001011", "00101100", "00111100", "11010000", "01110000"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let ml = MlConfig::default().with_k(3);
        let rep = fit(&rows, &ml, 1).unwrap();
        assert_eq!(rep.elbow.points.len(), 1);
        let last = rep.pca_cumulative.last().unwrap().1;
        assert!((last - 1.0).abs() < 1e-9);
        let dir = tempfile::tempdir().unwrap();
        write_fit_outputs(dir.path(), &rep).unwrap();
        let first = std::fs::read(dir.path().join("model.json")).unwrap();
        write_fit_outputs(dir.path(), &fit(&rows, &ml, 1).unwrap()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("model.json")).unwrap());
    }
}
