use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flipkv::encoders::Scheme;
use flipkv::error::{Error, Result};
use flipkv::ml::{ClusterModel, MlConfig};
use flipkv::nvm::NvmDevice;
use flipkv::report::{
    compare, fit, run_scheme, write_comparison_csv, write_fit_outputs, write_json, write_run_outputs, write_wear_csvs,
    RunConfig, RunOptions,
};
use flipkv::store::{InPlaceStore, KvStore, StoreConfig};
use flipkv::workload::{load_records, parse_trace, run_trace, write_op_csv};

#[derive(Parser)]
#[command(name = "flipkv", version, about = "Bit-flip-aware key/value store simulator")]
struct Cli {
    /// JSON config with geometry, store, ml and workload sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the workload and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write model.json, elbow.csv and pca_variance.csv.
    Fit(FitArgs),
    /// Run the workload (or a trace) under one scheme.
    Run(RunArgs),
    /// Run the workload under several schemes and k values.
    Compare(CompareArgs),
    /// Wear CDFs of a device snapshot.
    Stats(StatsArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Raw record file to train on instead of the config's warm-up data.
    #[arg(long, requires = "record_bytes")]
    data: Option<PathBuf>,
    #[arg(long)]
    record_bytes: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Largest k of the elbow scan.
    #[arg(long, default_value_t = 10)]
    k_max: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "pnw")]
    scheme: Scheme,
    #[arg(long)]
    k: Option<usize>,
    /// Pre-trained model for pnw.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Start from this device snapshot instead of the warm-up.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Replay a PUT/GET/DEL/UPD trace and write ops.csv.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "conventional,dcw,fnw,minshift,cap16,pnw"
    )]
    schemes: Vec<Scheme>,
    #[arg(long, value_delimiter = ',')]
    k_list: Vec<usize>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    snapshot: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("flipkv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let cfg = RunConfig::load(path)?;
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn load_snapshot(path: &Path) -> Result<NvmDevice> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    NvmDevice::read_snapshot(BufReader::new(f))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Run(a) => cmd_run(cli, a),
        Command::Compare(a) => cmd_compare(cli, a),
        Command::Stats(a) => cmd_stats(cli, a),
    }
}

fn cmd_fit(cli: &Cli, a: &FitArgs) -> Result<ExitCode> {
    let (contents, mut ml) = match (&a.data, a.record_bytes) {
        (Some(path), Some(rb)) => {
            let ml = match &cli.config {
                Some(_) => load_config(cli)?.ml,
                None => MlConfig::default(),
            };
            (load_records(path, rb)?, ml)
        }
        _ => {
            let cfg = load_config(cli)?;
            (cfg.workload.initial_contents(&cfg.geometry)?, cfg.ml)
        }
    };
    if let Some(k) = a.k {
        ml.k = k;
    }
    if let Some(s) = cli.seed {
        ml.seed = s;
    }
    let report = fit(&contents, &ml, a.k_max)?;
    write_fit_outputs(&cli.out_dir, &report)?;
    println!(
        "k={} sse={} suggested_k={}",
        report.model.k, report.model.sse, report.elbow.knee
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(cli: &Cli, a: &RunArgs) -> Result<ExitCode> {
    let model = a.model.as_deref().map(ClusterModel::load).transpose()?;
    let device = a.snapshot.as_deref().map(load_snapshot).transpose()?;
    if let Some(trace) = &a.trace {
        return run_trace_cmd(cli, a, trace, model, device);
    }
    let cfg = load_config(cli)?;
    let out = run_scheme(&cfg, a.scheme, RunOptions { k: a.k, model, device })?;
    write_run_outputs(&cli.out_dir, &out)?;
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    match out.error {
        Some(e) => {
            eprintln!("flipkv: run stopped early: {e}");
            Ok(ExitCode::from(e.exit_code() as u8))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn run_trace_cmd(
    cli: &Cli,
    a: &RunArgs,
    trace: &Path,
    model: Option<ClusterModel>,
    device: Option<NvmDevice>,
) -> Result<ExitCode> {
    let f = File::open(trace).map_err(|e| Error::io(trace, e))?;
    let ops = parse_trace(BufReader::new(f))?;
    let cfg = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let device = match (device, &cfg) {
        (Some(d), _) => d,
        (None, Some(c)) => c.device()?,
        (None, None) => return Err(Error::Config("--trace needs --config or --snapshot".into())),
    };
    let mut records = Vec::new();
    let (result, device) = match a.scheme.encoding(device.geometry().word_bits) {
        Some(enc) => {
            let mut s = InPlaceStore::new(device, enc)?;
            (run_trace(&mut s, &ops, &mut records), s.into_device())
        }
        None => {
            let store_cfg = match &cfg {
                Some(c) => c.store_config(a.k),
                None => {
                    let mut sc = StoreConfig::default();
                    if let Some(k) = a.k {
                        sc.ml.k = k;
                    }
                    sc
                }
            };
            let mut s = match model {
                Some(m) => KvStore::with_model(device, store_cfg, m)?,
                None => KvStore::init(device, store_cfg)?,
            };
            (run_trace(&mut s, &ops, &mut records), s.into_device())
        }
    };
    mkdir(&cli.out_dir)?;
    let path = cli.out_dir.join("ops.csv");
    write_op_csv(File::create(&path).map_err(|e| Error::io(&path, e))?, &records)?;
    write_wear_csvs(&cli.out_dir, &device.stats())?;
    let path = cli.out_dir.join("device.bin");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    device
        .write_snapshot(std::io::BufWriter::new(f))
        .map_err(|e| Error::io(&path, e))?;
    result?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(cli: &Cli, a: &CompareArgs) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let cells = compare(&cfg, &a.schemes, &a.k_list)?;
    mkdir(&cli.out_dir)?;
    for cell in &cells {
        write_run_outputs(&cli.out_dir.join("cells").join(cell.summary.cell_name()), cell)?;
    }
    let summaries: Vec<_> = cells.iter().map(|c| c.summary.clone()).collect();
    let path = cli.out_dir.join("comparison.csv");
    write_comparison_csv(File::create(&path).map_err(|e| Error::io(&path, e))?, &summaries)?;
    write_comparison_csv(std::io::stdout(), &summaries)?;
    let worst = cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(Error::exit_code))
        .max();
    Ok(worst.map_or(ExitCode::SUCCESS, |c| ExitCode::from(c as u8)))
}

fn cmd_stats(cli: &Cli, a: &StatsArgs) -> Result<ExitCode> {
    let device = load_snapshot(&a.snapshot)?;
    let stats = device.stats();
    mkdir(&cli.out_dir)?;
    write_wear_csvs(&cli.out_dir, &stats)?;
    let summary = serde_json::json!({
        "n_buckets": device.n_buckets(),
        "bucket_bits": device.geometry().bucket_bits,
        "total_flips": device.total_flips(),
        "max_bit_flips": stats.max_bit_flips,
        "max_address_writes": stats.max_address_writes,
    });
    write_json(&cli.out_dir.join("stats.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}
