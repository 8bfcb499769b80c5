//! Command-line driver for the cardioseg workspace: dataset generation,
//! training, ablation sweeps, evaluation, report rendering, and point-cloud
//! utilities. Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cardioseg::config::{resolve, TrainConfig};
use cardioseg::dataset::{generate_dataset, GenConfig, SplitCounts};
use cardioseg::experiment::{render_ablation_table, run_ablation};
use cardioseg::pointcloud::{chamfer, emd, farthest_point_sample, read_xyz, write_xyz, PointCloud};
use cardioseg::report::{
    evaluate_gt_echo, evaluate_run, read_report, render_report, EvalSplit,
};
use cardioseg::synth::{DomainShiftConfig, PhantomParams};
use cardioseg::train::{parse_grid, run_training};

#[derive(Parser)]
#[command(
    name = "cardioseg",
    version,
    about = "Cardiac segmentation with adversarial domain adaptation",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-domain synthetic cardiac dataset.
    GenData(GenDataArgs),
    /// Train the segmenter, optionally with adversarial adaptation.
    Train(TrainArgs),
    /// Train every arm of a loss-component grid and tabulate target scores.
    Ablate(AblateArgs),
    /// Evaluate a checkpoint on labelled subjects; writes report plus plots.
    Eval(EvalArgs),
    /// Render a previously written report.json as a text table.
    Report(ReportArgs),
    /// Point-cloud utilities over whitespace-separated xyz text files.
    #[command(subcommand)]
    Pointcloud(PointcloudCmd),
}

/// Flat `key = value` config file plus repeatable inline overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Config file; one `key = value` per line, `#` comments.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single config key, e.g. `--set epochs=10`. Repeatable;
    /// beats the config file, which beats the recipe preset.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        self.set
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .with_context(|| format!("--set `{kv}`: expected KEY=VALUE"))
            })
            .collect()
    }

    fn resolve(&self) -> Result<(TrainConfig, Option<PathBuf>, Option<PathBuf>)> {
        let text = match &self.config {
            Some(p) => Some(
                std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?,
            ),
            None => None,
        };
        let run = resolve(text.as_deref(), &self.overrides()?)?;
        Ok((run.cfg, run.data_dir, run.out_dir))
    }
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Root seed for anatomy, intensities, and splits.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Slice height and width in pixels.
    #[arg(long, default_value_t = 80)]
    image_size: usize,
    /// Slices per subject.
    #[arg(long, default_value_t = 4)]
    slices: usize,
    /// Source-domain subject count, split 70/10/20.
    #[arg(long, default_value_t = 10)]
    source: usize,
    /// Target-domain subject count, split 70/10/20.
    #[arg(long, default_value_t = 10)]
    target: usize,
    /// Explicit source split `train,val,test`; overrides --source.
    #[arg(long, value_name = "TR,VA,TE")]
    source_split: Option<String>,
    /// Explicit target split `train,val,test`; overrides --target.
    #[arg(long, value_name = "TR,VA,TE")]
    target_split: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Dataset directory produced by gen-data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for checkpoint, history, and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Arms, e.g. `none;d2;d1+d2;d1+d2+d3+emd`.
    #[arg(long)]
    grid: String,
    /// Comma-separated seeds; defaults to the configured seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Run the independent trainings on a thread pool.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate. Optional with --echo-gt.
    #[arg(long, required_unless_present = "echo_gt")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Domain to evaluate: source or target.
    #[arg(long, default_value = "target")]
    domain: String,
    /// Split to evaluate: train, val, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Score the reference labels against themselves instead of running the
    /// network; validates the metric path end to end.
    #[arg(long)]
    echo_gt: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a report.json written by eval.
    #[arg(long, value_name = "REPORT.JSON")]
    input: PathBuf,
}

#[derive(Subcommand)]
enum PointcloudCmd {
    /// Subsample a cloud to its k mutually farthest points.
    Fps {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Minimum-cost one-to-one matching distance between two equal-size
    /// clouds; prints the cost.
    Emd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also print the index matching, one `i -> j` pair per line.
        #[arg(long)]
        matching: bool,
    },
    /// Symmetric nearest-neighbour distance between two clouds.
    Chamfer {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

/// Written into every run directory before any real work starts.
#[derive(serde::Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    config_path: Option<String>,
    config: Option<String>,
    seed: u64,
    started_unix: u64,
    build_hash: String,
    out_dir: String,
}

fn write_run_manifest(
    out_dir: &Path,
    command: &str,
    config_path: Option<&Path>,
    config_snapshot: Option<&str>,
    seed: u64,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let manifest = RunManifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        config_path: config_path.map(|p| p.display().to_string()),
        config: config_snapshot.map(str::to_string),
        seed,
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        build_hash: env!("BUILD_CONTENT_HASH").to_string(),
        out_dir: out_dir.display().to_string(),
    };
    std::fs::write(
        out_dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Default output directory: $CARDIOSEG_OUT_ROOT (or ./runs) / command.
fn default_out(command: &str) -> PathBuf {
    let root = std::env::var_os("CARDIOSEG_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(command)
}

fn pick_out(flag: Option<PathBuf>, from_cfg: Option<PathBuf>, command: &str) -> PathBuf {
    flag.or(from_cfg).unwrap_or_else(|| default_out(command))
}

fn pick_data(flag: Option<PathBuf>, from_cfg: Option<PathBuf>) -> Result<PathBuf> {
    flag.or(from_cfg)
        .context("no dataset directory: pass --data or set `data_dir` in the config")
}

fn parse_split_counts(text: &str) -> Result<SplitCounts> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("split `{text}`: expected `train,val,test`");
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().with_context(|| format!("split count `{p}`")))
        .collect::<Result<_>>()?;
    Ok(SplitCounts { train: nums[0], val: nums[1], test: nums[2] })
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().with_context(|| format!("seed `{s}`")))
        .collect()
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| default_out("dataset"));
    if out.exists() && std::fs::read_dir(&out)?.next().is_some() {
        if !args.force {
            bail!(
                "output directory {} is not empty; pass --force to replace it",
                out.display()
            );
        }
        std::fs::remove_dir_all(&out)?;
    }
    let phantom = PhantomParams {
        image_size: args.image_size,
        n_slices: args.slices,
        seed: args.seed,
        ..Default::default()
    };
    let gen = GenConfig {
        phantom,
        shift: DomainShiftConfig::default(),
        source: match &args.source_split {
            Some(s) => parse_split_counts(s)?,
            None => SplitCounts::from_fractions(args.source),
        },
        target: match &args.target_split {
            Some(s) => parse_split_counts(s)?,
            None => SplitCounts::from_fractions(args.target),
        },
    };
    write_run_manifest(&out, "gen-data", None, None, args.seed)?;
    let manifest = generate_dataset(&out, &gen)?;
    println!(
        "wrote {} source + {} target subjects to {}",
        manifest.source.all().count(),
        manifest.target.all().count(),
        out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (cfg, cfg_data, cfg_out) = args.config.resolve()?;
    let data = pick_data(args.data, cfg_data)?;
    let out = pick_out(args.out, cfg_out, "train");
    write_run_manifest(
        &out,
        "train",
        args.config.config.as_deref(),
        Some(&cfg.to_text()),
        cfg.seed,
    )?;
    let outcome = run_training(&cfg, &data, &out, args.resume.as_deref())?;
    for es in &outcome.epoch_stats {
        println!(
            "epoch {:>4}  total {:>10.4}  val dice {:.4}  ({:.1}s)",
            es.epoch, es.total, es.val_dice, es.seconds
        );
    }
    println!(
        "done: {} epochs, best val dice {:.4}{} -> {}",
        outcome.epochs_run,
        outcome.best_val_dice,
        if outcome.stopped_early { " (stopped early)" } else { "" },
        outcome.checkpoint.display()
    );
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let (cfg, cfg_data, cfg_out) = args.config.resolve()?;
    let data = pick_data(args.data, cfg_data)?;
    let out = pick_out(args.out, cfg_out, "ablate");
    let arms = parse_grid(&args.grid)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![cfg.seed],
    };
    write_run_manifest(
        &out,
        "ablate",
        args.config.config.as_deref(),
        Some(&cfg.to_text()),
        cfg.seed,
    )?;
    let outcome = run_ablation(&cfg, &arms, &seeds, &data, &out, args.parallel)?;
    print!("{}", render_ablation_table(&outcome));
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let split: EvalSplit = args.split.parse()?;
    let out = pick_out(args.out, None, "eval");
    let report = if args.echo_gt {
        let (cfg, cfg_data, _) = match &args.checkpoint {
            Some(ckpt) => {
                let (cfg, _) = cardioseg::report::load_generator(ckpt)?;
                (cfg, None, None::<PathBuf>)
            }
            None => args.config.resolve()?,
        };
        let data = pick_data(args.data, cfg_data)?;
        write_run_manifest(&out, "eval", None, Some(&cfg.to_text()), cfg.seed)?;
        evaluate_gt_echo(&cfg, &data, &out, &args.domain, split)?
    } else {
        let ckpt = args.checkpoint.as_deref().context("--checkpoint is required")?;
        let data = pick_data(args.data, None)?;
        write_run_manifest(&out, "eval", None, None, 0)?;
        evaluate_run(ckpt, &data, &out, &args.domain, split)?
    };
    print!("{}", render_report(&report));
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = read_report(&args.input)?;
    print!("{}", render_report(&report));
    Ok(())
}

fn cmd_pointcloud(cmd: PointcloudCmd) -> Result<()> {
    match cmd {
        PointcloudCmd::Fps { input, k, output } => {
            let cloud = read_xyz(&input)?;
            let idx = farthest_point_sample(&cloud.points, k)?;
            let sampled =
                PointCloud::new(idx.iter().map(|&i| cloud.points[i]).collect::<Vec<_>>());
            write_xyz(&sampled, &output)?;
            println!("kept {} of {} points -> {}", k, cloud.len(), output.display());
        }
        PointcloudCmd::Emd { a, b, matching } => {
            let ca = read_xyz(&a)?;
            let cb = read_xyz(&b)?;
            let m = emd(&ca, &cb)?;
            println!("{:.12e}", m.cost);
            if matching {
                for (i, &j) in m.perm.iter().enumerate() {
                    println!("{i} -> {j}");
                }
            }
        }
        PointcloudCmd::Chamfer { a, b } => {
            let ca = read_xyz(&a)?;
            let cb = read_xyz(&b)?;
            println!("{:.12e}", chamfer(&ca, &cb)?);
        }
    }
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
        Command::Pointcloud(cmd) => cmd_pointcloud(cmd),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
