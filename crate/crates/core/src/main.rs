use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use rgg_transfer::gnn::read_checkpoint;
use rgg_transfer::harness::config::CONFIG_HELP;
use rgg_transfer::harness::dataset::{generate_dataset, Dataset};
use rgg_transfer::harness::experiment::{
    checkpoint_file, default_dataset_dir, evaluate_checkpoint, run_transfer_experiment, train_and_save, write_outcome,
};
use rgg_transfer::harness::report::{write_bounds, write_csv, ALPHA_HEADER};
use rgg_transfer::harness::suite::{run_alpha, run_bounds_suite, tally};
use rgg_transfer::harness::Config;
use rgg_transfer::Error;

/// Output root used when `--out` is absent.
const OUT_ENV: &str = "RGG_TRANSFER_OUT";

#[derive(Parser)]
#[command(
    name = "rgg-transfer",
    version,
    about = "Graph-filter power allocation on random geometric graphs and checks of transfer bounds",
    after_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to absent keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides experiment.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output root [env: RGG_TRANSFER_OUT, default: out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArg {
    /// Dataset directory [default: <out>/dataset]
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the graph dataset under <out>/dataset
    #[command(after_help = CONFIG_HELP)]
    Generate(Common),
    /// Train a policy at the training scale
    #[command(after_help = CONFIG_HELP)]
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dataset: DatasetArg,
    },
    /// Evaluate a checkpoint and WMMSE at every evaluation scale
    #[command(after_help = CONFIG_HELP)]
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dataset: DatasetArg,
        /// Checkpoint to evaluate [default: <out>/models/gnn_n<train_scale>.ckpt]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train, train per-scale references, evaluate across scales
    #[command(after_help = CONFIG_HELP)]
    Transfer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dataset: DatasetArg,
        /// Generate the dataset first
        #[arg(long)]
        generate: bool,
    },
    /// Run the randomized bound verification suites
    #[command(after_help = CONFIG_HELP)]
    Bounds(Common),
    /// Fit the discrepancy decay exponent
    #[command(after_help = CONFIG_HELP)]
    Alpha(Common),
}

struct Context {
    config: Config,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn new(common: &Common) -> Result<Self, Error> {
        let config = match &common.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let out = common
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        info!("output root {}", out.display());
        Ok(Self {
            seed: common.seed.unwrap_or(config.experiment.seed),
            config,
            out,
        })
    }

    fn dataset_dir(&self, arg: &DatasetArg) -> PathBuf {
        arg.dataset.clone().unwrap_or_else(|| default_dataset_dir(&self.out))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(common) => {
            let ctx = Context::new(&common)?;
            let dir = default_dataset_dir(&ctx.out);
            let m = generate_dataset(&ctx.config.dataset, ctx.seed, &dir)?;
            for s in &m.scales {
                println!(
                    "scale {}: side {}, {} graphs, mean nodes {:.2}",
                    s.target,
                    s.side,
                    s.graphs.len(),
                    s.mean_nodes(rgg_transfer::harness::dataset::Split::Train)
                );
            }
        }
        Command::Train { common, dataset } => {
            let ctx = Context::new(&common)?;
            let ds = Dataset::open(&ctx.dataset_dir(&dataset))?;
            let scale = ctx.config.experiment.train_scale;
            train_and_save(&ctx.config, &ds, scale, ctx.seed, &ctx.out)?;
            println!("wrote {}", ctx.out.join(checkpoint_file(scale)).display());
        }
        Command::Eval {
            common,
            dataset,
            checkpoint,
        } => {
            let ctx = Context::new(&common)?;
            let ds = Dataset::open(&ctx.dataset_dir(&dataset))?;
            let ckpt =
                checkpoint.unwrap_or_else(|| ctx.out.join(checkpoint_file(ctx.config.experiment.train_scale)));
            let params = read_checkpoint(&ckpt)?;
            let outcome = evaluate_checkpoint(&ctx.config, &ds, &params, ctx.seed)?;
            write_outcome(&ctx.config, &outcome, &ctx.out)?;
            print_records(&outcome.records);
        }
        Command::Transfer {
            common,
            dataset,
            generate,
        } => {
            let ctx = Context::new(&common)?;
            let dir = ctx.dataset_dir(&dataset);
            if generate {
                generate_dataset(&ctx.config.dataset, ctx.seed, &dir)?;
            }
            let outcome = run_transfer_experiment(&ctx.config, &dir, &ctx.out, ctx.seed)?;
            print_records(&outcome.records);
        }
        Command::Bounds(common) => {
            let ctx = Context::new(&common)?;
            let reports = run_bounds_suite(&ctx.config.bounds, ctx.seed)?;
            write_bounds(&ctx.out.join("bounds.csv"), &reports)?;
            let detail = ctx.out.join("bounds_detail.json");
            fs::write(&detail, serde_json::to_string_pretty(&reports)?).map_err(|e| Error::io(&detail, e))?;
            for (name, holds, total) in tally(&reports) {
                println!("{name}: {holds}/{total} hold");
            }
        }
        Command::Alpha(common) => {
            let ctx = Context::new(&common)?;
            let fit = run_alpha(&ctx.config.bounds, ctx.seed)?;
            let rows: Vec<(usize, usize, f64)> = ctx
                .config
                .bounds
                .alpha_sides
                .iter()
                .zip(&fit.sizes)
                .zip(&fit.mean_w2)
                .map(|((&b, &n), &w)| (b, n, w))
                .collect();
            write_csv(&ctx.out.join("alpha.csv"), &ALPHA_HEADER, &rows)?;
            let json = ctx.out.join("alpha.json");
            fs::write(&json, serde_json::to_string_pretty(&fit)?).map_err(|e| Error::io(&json, e))?;
            if fit.infinite_alpha {
                println!("alpha: infinite (no discrepancy at some size)");
            } else {
                println!("alpha = {:.4} (r^2 = {:.4})", fit.alpha, fit.r_squared);
            }
        }
    }
    Ok(())
}

fn print_records(records: &[rgg_transfer::policy::MetricsRecord]) {
    for r in records {
        println!(
            "n={:<5} {:<20} sum rate {:>10.4} +- {:<8.4} violation {:>8.4} +- {:.4}",
            r.scale, r.policy, r.sum_rate_mean, r.sum_rate_std, r.violation_mean, r.violation_std
        );
    }
}

fn is_usage_error(e: &Error) -> bool {
    match e {
        Error::DatasetNotFound(_) | Error::Config(_) => true,
        Error::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
        _ => false,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
