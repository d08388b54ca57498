use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cap_cli::commands::{self, Outcome};
use cap_cli::config::{parse_classes, parse_methods, parse_n_list, Overrides, RunConfig};
use cap_cli::fixture::FixtureSpec;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cap", version, about = "Class-specific anchor sizing and evaluation on KITTI-format data")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Comma-separated class names.
    #[arg(long, global = true)]
    classes: Option<String>,
    /// kmeans, gmm, or both (comma-separated).
    #[arg(long, global = true)]
    method: Option<String>,
    /// Cluster counts, e.g. `1..5` or `1,2,4`.
    #[arg(long, global = true)]
    n: Option<String>,
    /// Dataset root with label_2/, calib/ and velodyne/.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// File listing frame ids, one per line.
    #[arg(long, global = true)]
    split: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit size models per class, method and cluster count.
    Cluster,
    /// Write dense anchor sets for fitted models.
    Anchors {
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Anchor coverage histograms against ground truth.
    Coverage {
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Proposal recall at the configured proposal counts.
    Recall {
        #[arg(long)]
        proposals: PathBuf,
    },
    /// 3D average precision per class and difficulty.
    Ap {
        #[arg(long, required = true)]
        detections: Vec<PathBuf>,
    },
    /// Render BEV maps as PNG plus raw tensors.
    BevRender {
        #[arg(long)]
        frame: Option<String>,
    },
    /// Write a synthetic KITTI-format dataset into the output directory.
    Fixture {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Command::Fixture { spec, frames } = &cli.command {
        let mut fs = match spec {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                FixtureSpec::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => FixtureSpec::default(),
        };
        if let Some(f) = frames {
            fs.frames = *f;
        }
        if let Some(s) = cli.seed {
            fs.seed = s;
        }
        fs.validate()?;
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("fixture"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build()?;
        return pool.install(|| commands::fixture(&fs, &out));
    }

    let overrides = Overrides {
        dataset_root: cli.root,
        split_file: cli.split,
        output_dir: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
        classes: cli.classes.as_deref().map(parse_classes),
        methods: cli.method.as_deref().map(parse_methods).transpose()?,
        n: cli.n.as_deref().map(parse_n_list).transpose()?,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    pool.install(|| match &cli.command {
        Command::Cluster => commands::cluster(&cfg),
        Command::Anchors { models } => commands::anchors(&cfg, models.as_deref()),
        Command::Coverage { models } => commands::coverage(&cfg, models.as_deref()),
        Command::Recall { proposals } => commands::recall(&cfg, proposals),
        Command::Ap { detections } => commands::ap(&cfg, detections),
        Command::BevRender { frame } => commands::bev_render(&cfg, frame.as_deref()),
        Command::Fixture { .. } => unreachable!("handled above"),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
