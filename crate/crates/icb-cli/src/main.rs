//! `icb` — command-line front end for the input-compression-bound library.
//!
//! Subcommands:
//! - `icb`: evaluate the bound for a given mutual information and train size.
//! - `kernel`: build a binary task, compute its NNGP/NTK Grams, dump them.
//! - `run-exp-a`: sweep the nine consecutive-class tasks over a finite
//!   training-time grid with sampled metaparameters.
//! - `run-exp-b`: sweep all 45 class pairs at convergence with uniform
//!   ridge draws.
//! - `rand-test`: natural-vs-random-label comparison over a ridge grid.
//! - `rank`: Kendall-τ ranking report from a sweep CSV.
//!
//! Every subcommand that consumes data reads IDX files from `--data-dir`
//! (or the `ICB_DATA_DIR` environment variable) and falls back to a
//! self-contained ten-class synthetic source, so the full pipeline runs
//! without any external downloads.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use icb::bound::{bits_to_nats, icb, nats_to_bits, vacuous, BoundConfig};
use icb::datasets::{load_idx, synth_ten_class, make_binary_task, RawDataset};
use icb::harness::{
    exp_a, exp_b, randomization_test, rank_records, read_records_csv, write_rank_csv, RankRow,
    SweepConfig, SweepSummary, TrialOptions,
};
use icb::infometrics::mi_validity;
use icb::kernels::{
    dataset_hash, gram_train, kernel_cfg_hash, save_gram_pair, Activation, NetConfig,
};

type DynResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "icb",
    version,
    about = "Input compression bounds for infinite-width network ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the bound from a mutual-information value
    Icb(IcbArgs),
    /// Compute NNGP/NTK train Grams for one task and write them out
    Kernel(KernelArgs),
    /// Sweep A: nine consecutive-class tasks across the finite time grid
    RunExpA(SweepArgs),
    /// Sweep B: all 45 class pairs at t = inf with ridge ~ U(0, 2)
    RunExpB(SweepArgs),
    /// Natural-vs-random-label comparison over a ridge grid
    RandTest(RandArgs),
    /// Kendall-tau ranking report from a sweep CSV
    Rank(RankArgs),
}

#[derive(Args)]
struct IcbArgs {
    /// Mutual information in nats (use exactly one of --i-nats / --i-bits)
    #[arg(long, required_unless_present = "i_bits", conflicts_with = "i_bits")]
    i_nats: Option<f64>,
    /// Mutual information in bits
    #[arg(long)]
    i_bits: Option<f64>,
    /// Training-set size
    #[arg(long)]
    n: usize,
    /// Confidence parameter of the high-probability bound
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

/// Data-source selection shared by every subcommand that builds tasks.
#[derive(Args)]
struct SourceArgs {
    /// Directory with IDX image/label files; omit for the synthetic source
    #[arg(long, env = "ICB_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Image file name inside --data-dir
    #[arg(long, default_value = "train-images-idx3-ubyte")]
    images: String,
    /// Label file name inside --data-dir
    #[arg(long, default_value = "train-labels-idx1-ubyte")]
    labels: String,
    /// Synthetic source: input dimension
    #[arg(long, default_value_t = 16)]
    synth_d: usize,
    /// Synthetic source: points per class (ten classes total)
    #[arg(long, default_value_t = 2000)]
    synth_per_class: usize,
    /// Synthetic source: cluster separation
    #[arg(long, default_value_t = 4.0)]
    synth_sep: f64,
    /// Synthetic source: generation seed
    #[arg(long, default_value_t = 7)]
    synth_seed: u64,
}

impl SourceArgs {
    fn load(&self) -> DynResult<RawDataset> {
        let raw = match &self.data_dir {
            Some(dir) => load_idx(dir.join(&self.images), dir.join(&self.labels))?,
            None => synth_ten_class(
                self.synth_d,
                self.synth_per_class,
                self.synth_sep,
                self.synth_seed,
            )?,
        };
        Ok(raw)
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Relu,
    Erf,
    Linear,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Erf => Activation::Erf,
            ActivationArg::Linear => Activation::Linear,
        }
    }
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 0)]
    class_a: u8,
    #[arg(long, default_value_t = 1)]
    class_b: u8,
    #[arg(long, default_value_t = 100)]
    n_trn: usize,
    #[arg(long, default_value_t = 100)]
    n_tst: usize,
    /// Hidden-layer count
    #[arg(long, default_value_t = 2)]
    depth: u32,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    /// Weight variance; defaults to 2.0 for relu, 1.0 otherwise
    #[arg(long)]
    w_var: Option<f64>,
    /// Bias variance
    #[arg(long, default_value_t = 0.1)]
    b_var: f64,
    /// Train/test split seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output stem: writes <out>.k.csv, <out>.theta.csv and <out>.gram
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// JSON sweep configuration; explicit flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed of the whole sweep
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per task (defaults to 10; full-scale runs use 100 for sweep
    /// A and 50 for sweep B)
    #[arg(long)]
    seeds: Option<u64>,
    /// Test points per trial
    #[arg(long)]
    n_tst: Option<usize>,
    /// Fixed training-set size (sweep B; sweep A samples a range)
    #[arg(long)]
    n_trn: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Monte-Carlo rounds per mutual-information estimate
    #[arg(long)]
    mc_rounds: Option<usize>,
    /// Comma-separated ridge grid (sweep A sampling grid)
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Worker threads; 0 uses every core
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV path; a summary lands at <out>.summary.json
    #[arg(long)]
    out: PathBuf,
}

impl SweepArgs {
    fn sweep_config(&self) -> DynResult<SweepConfig> {
        let mut cfg: SweepConfig = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => SweepConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.seeds {
            cfg.n_seeds = v;
        }
        if let Some(v) = self.n_tst {
            cfg.n_tst = v;
        }
        if let Some(v) = self.n_trn {
            cfg.n_trn_fixed = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.mc_rounds {
            cfg.mc_rounds = v;
        }
        if let Some(v) = &self.lambda_grid {
            cfg.lambda_grid = v.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RandArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 0)]
    class_a: u8,
    #[arg(long, default_value_t = 1)]
    class_b: u8,
    /// Comma-separated ridge values, one natural/random row pair each
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.1,0.01,0.001,0.0001")]
    lambda_grid: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n_trn: usize,
    #[arg(long, default_value_t = 2000)]
    n_tst: usize,
    /// Master seed (split, label randomization, estimator draws)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 32)]
    mc_rounds: usize,
    /// Optional output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Sweep CSV produced by run-exp-a / run-exp-b
    #[arg(long)]
    input: PathBuf,
    /// Optional output CSV path for the ranking table
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> DynResult<()> {
    match cli.command {
        Command::Icb(args) => cmd_icb(&args),
        Command::Kernel(args) => cmd_kernel(&args),
        Command::RunExpA(args) => cmd_sweep(&args, exp_a),
        Command::RunExpB(args) => cmd_sweep(&args, exp_b),
        Command::RandTest(args) => cmd_rand(&args),
        Command::Rank(args) => cmd_rank(&args),
    }
}

fn cmd_icb(args: &IcbArgs) -> DynResult<()> {
    let i_nats = match (args.i_nats, args.i_bits) {
        (Some(v), None) => v,
        (None, Some(v)) => bits_to_nats(v),
        // clap enforces exactly one of the two flags
        _ => unreachable!(),
    };
    let cfg = BoundConfig::new(args.delta)?;
    let value = icb(i_nats, args.n, cfg)?;
    println!("i_nats = {i_nats}");
    println!("i_bits = {}", nats_to_bits(i_nats));
    println!("n_trn = {}", args.n);
    println!("delta = {}", args.delta);
    println!("icb = {value}");
    println!("icb_pct = {:.2}", value * 100.0);
    println!("vacuous = {}", vacuous(value));
    println!("valid = {}", mi_validity(i_nats, args.n));
    Ok(())
}

fn write_matrix_csv(path: &Path, m: &nalgebra::DMatrix<f64>) -> DynResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_kernel(args: &KernelArgs) -> DynResult<()> {
    let raw = args.source.load()?;
    let ds = make_binary_task(&raw, args.class_a, args.class_b, args.n_trn, args.n_tst, args.seed)?;
    let activation: Activation = args.activation.into();
    let cfg = NetConfig {
        depth_l: args.depth,
        w_var: args
            .w_var
            .unwrap_or_else(|| NetConfig::for_activation(activation).w_var),
        b_var: args.b_var,
        ..NetConfig::for_activation(activation)
    };
    let pair = gram_train(&ds.x_trn, &cfg)?;

    let stem = args.out.display();
    let k_path = PathBuf::from(format!("{stem}.k.csv"));
    let theta_path = PathBuf::from(format!("{stem}.theta.csv"));
    let cache_path = PathBuf::from(format!("{stem}.gram"));
    write_matrix_csv(&k_path, &pair.k)?;
    write_matrix_csv(&theta_path, &pair.theta)?;
    let ds_hash = dataset_hash(&ds.x_trn);
    let cfg_hash = kernel_cfg_hash(&cfg);
    save_gram_pair(&cache_path, &pair, ds_hash, cfg_hash)?;

    println!("n_trn = {}", ds.n_trn());
    println!("d = {}", ds.d());
    println!("dataset_hash = {ds_hash}");
    println!("cfg_hash = {cfg_hash}");
    println!("k_csv = {}", k_path.display());
    println!("theta_csv = {}", theta_path.display());
    println!("cache = {}", cache_path.display());
    Ok(())
}

fn cmd_sweep(
    args: &SweepArgs,
    runner: fn(&RawDataset, &SweepConfig, &Path) -> icb::Result<SweepSummary>,
) -> DynResult<()> {
    let cfg = args.sweep_config()?;
    let raw = args.source.load()?;
    let summary = runner(&raw, &cfg, &args.out)?;
    println!("rows = {}", summary.n_rows);
    println!("errors = {}", summary.n_errors);
    println!("valid = {}", summary.n_valid);
    match summary.satisfaction_pct {
        Some(p) => println!("satisfaction_pct = {p}"),
        None => println!("satisfaction_pct = -"),
    }
    println!("wall_time_s = {:.3}", summary.wall_time_s);
    println!("out = {}", args.out.display());
    println!("summary = {}.summary.json", args.out.display());
    Ok(())
}

fn cmd_rand(args: &RandArgs) -> DynResult<()> {
    let raw = args.source.load()?;
    let opts = TrialOptions {
        delta: args.delta,
        mc_rounds: args.mc_rounds,
        ..TrialOptions::default()
    };
    let rows = randomization_test(
        &raw,
        (args.class_a, args.class_b),
        &args.lambda_grid,
        args.n_trn,
        args.n_tst,
        args.seed,
        &opts,
        args.out.as_deref(),
    )?;
    for r in &rows {
        println!(
            "lambda={} labels={} train_acc={} test_acc={} ge_clean={} i_lb_nats={} i_ub_nats={} valid={} icb_lb={} icb_ub={}",
            r.lambda,
            r.labels,
            r.train_acc,
            r.test_acc,
            r.ge_clean,
            r.i_lb_nats,
            r.i_ub_nats,
            r.valid,
            r.icb_lb,
            r.icb_ub
        );
    }
    if let Some(out) = &args.out {
        println!("out = {}", out.display());
    }
    Ok(())
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

fn print_rank_rows(rows: &[RankRow]) {
    for r in rows {
        println!(
            "task={} n_valid={} satisfaction_pct={} tau_base_clean={} tau_base_awgn={} tau_base_fgsm={} tau_icb_clean={} tau_icb_awgn={} tau_icb_fgsm={}",
            r.task,
            r.n_valid,
            opt_cell(r.satisfaction_pct),
            opt_cell(r.tau_base_clean),
            opt_cell(r.tau_base_awgn),
            opt_cell(r.tau_base_fgsm),
            opt_cell(r.tau_icb_clean),
            opt_cell(r.tau_icb_awgn),
            opt_cell(r.tau_icb_fgsm)
        );
    }
}

fn cmd_rank(args: &RankArgs) -> DynResult<()> {
    let records = read_records_csv(&args.input)?;
    let rows = rank_records(&records)?;
    print_rank_rows(&rows);
    if let Some(out) = &args.out {
        write_rank_csv(&rows, out)?;
        println!("out = {}", out.display());
    }
    Ok(())
}
