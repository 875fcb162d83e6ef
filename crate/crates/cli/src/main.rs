//! `geoseg`: run the dataset pipeline stages from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 network error, 3 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geoseg::dataset::{clean_predictions, Config, Dataset, Split};
use geoseg::http::ReqwestTransport;
use geoseg::raster::list_masks;
use geoseg::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "geoseg", version, about = "Aerial-imagery segmentation dataset pipeline")]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; for dataset stages this replaces the configured root.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print the work plan and exit without network access or file writes.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the tile grid and write grid.geojson.
    Grid(Common),
    /// Download imagery for every selected tile.
    Fetch {
        #[command(flatten)]
        common: Common,
        /// Acquisition epoch; defaults to the configured imagery tag.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Load and normalize the ground truth.
    Groundtruth(Common),
    /// Rasterize masks and write the manifest.
    Rasterize(Common),
    /// Morphologically clean predicted masks.
    Clean {
        #[command(flatten)]
        common: Common,
        /// Directory of predicted `mask_{id}_{tag}.png` files
        #[arg(long)]
        pred_dir: PathBuf,
        /// Only use predictions with this tag
        #[arg(long)]
        tag: Option<String>,
    },
    /// Score predicted masks against the dataset masks.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory of predicted `mask_{id}_{tag}.png` files
        #[arg(long)]
        pred_dir: PathBuf,
        /// Only use predictions with this tag
        #[arg(long)]
        tag: Option<String>,
    },
    /// Compare predictions of two epochs (`--tag T1 --tag T2`).
    Trend {
        #[command(flatten)]
        common: Common,
        /// Directory of predicted `mask_{id}_{tag}.png` files
        #[arg(long)]
        pred_dir: PathBuf,
        /// Epoch tag; give it twice, reference epoch first
        #[arg(long, num_args = 1, required = true)]
        tag: Vec<String>,
    },
    /// Run grid, fetch, groundtruth and rasterize.
    Build(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Grid(_) => "grid",
            Command::Fetch { .. } => "fetch",
            Command::Groundtruth(_) => "groundtruth",
            Command::Rasterize(_) => "rasterize",
            Command::Clean { .. } => "clean",
            Command::Evaluate { .. } => "evaluate",
            Command::Trend { .. } => "trend",
            Command::Build(_) => "build",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Grid(c) | Command::Groundtruth(c) | Command::Rasterize(c) | Command::Build(c) => c,
            Command::Fetch { common, .. }
            | Command::Clean { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Trend { common, .. } => common,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Network => 2,
        ErrorKind::Data => 3,
    }
}

fn count_masks(dir: &Path, tag: Option<&str>) -> Result<usize, Error> {
    list_masks(dir, tag).map(|v| v.len())
}

/// Runs the command and returns its one-line summary.
fn run(cmd: &Command) -> Result<String, Error> {
    let common = cmd.common();
    let config = Config::load(&common.config)?;
    let transport = ReqwestTransport::from_env()?;
    let mut ds = Dataset::new(config, &transport);
    let is_dataset_stage = matches!(
        cmd,
        Command::Grid(_) | Command::Fetch { .. } | Command::Groundtruth(_) | Command::Rasterize(_) | Command::Build(_)
    );
    if let (true, Some(out)) = (is_dataset_stage, &common.out) {
        ds = ds.with_root(out);
    }
    let default_tag = ds.tag().to_string();

    if common.dry_run {
        let plan = match cmd {
            Command::Clean { pred_dir, tag, .. } => {
                format!("masks to clean: {}", count_masks(pred_dir, tag.as_deref())?)
            }
            Command::Evaluate { pred_dir, tag, .. } => {
                let tag = tag.as_deref().unwrap_or(&default_tag);
                format!("masks to evaluate: {}", count_masks(pred_dir, Some(tag))?)
            }
            Command::Trend { pred_dir, tag, .. } => tag
                .iter()
                .map(|t| count_masks(pred_dir, Some(t)).map(|n| format!("{t}: {n} masks")))
                .collect::<Result<Vec<_>, Error>>()?
                .join("\n"),
            Command::Fetch { tag, .. } => ds.plan(tag.as_deref().unwrap_or(&default_tag))?.to_string(),
            _ => ds.plan(&default_tag)?.to_string(),
        };
        println!("{plan}");
        return Ok("dry run, nothing written".into());
    }

    match cmd {
        Command::Grid(_) => {
            let g = ds.stage_grid()?;
            Ok(format!(
                "{} tiles ({} selected) -> {}",
                g.len(),
                g.selected().count(),
                ds.root.join("grid.geojson").display()
            ))
        }
        Command::Fetch { tag, .. } => {
            let s = ds.stage_fetch(tag.as_deref().unwrap_or(&default_tag))?;
            Ok(format!("{} images fetched, {} already present", s.fetched, s.skipped))
        }
        Command::Groundtruth(_) => {
            let l = ds.stage_groundtruth()?;
            Ok(format!("{} ground-truth polygons", l.features.len()))
        }
        Command::Rasterize(_) => {
            let (m, s) = ds.stage_rasterize()?;
            Ok(format!(
                "{} masks written, {} kept; manifest lists {} tiles",
                s.written,
                s.skipped,
                m.tiles.len()
            ))
        }
        Command::Build(_) => {
            let m = ds.build()?;
            Ok(format!(
                "{} train, {} test tiles -> {}",
                m.split(Split::Train).count(),
                m.split(Split::Test).count(),
                ds.root.join("manifest.json").display()
            ))
        }
        Command::Clean { pred_dir, tag, .. } => {
            let out = common.out.clone().unwrap_or_else(|| pred_dir.join("cleaned"));
            let table = ds.table()?;
            let policy = ds.config.cleaning_policy(&table);
            let n = clean_predictions(pred_dir, &out, tag.as_deref(), &policy)?;
            Ok(format!("{n} masks cleaned -> {}", out.display()))
        }
        Command::Evaluate { pred_dir, tag, .. } => {
            let tag = tag.as_deref().unwrap_or(&default_tag);
            let out = common.out.clone().unwrap_or_else(|| ds.root.join("reports").join(tag));
            let r = ds.evaluate(pred_dir, tag, &out)?;
            Ok(format!("{} classes scored -> {}", r.classes.len(), out.join("metrics.csv").display()))
        }
        Command::Trend { pred_dir, tag, .. } => {
            let [t1, t2] = tag.as_slice() else {
                return Err(Error::Config("trend needs exactly two --tag values".into()));
            };
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| ds.root.join("reports").join(format!("trend_{t1}_{t2}")));
            let r = ds.trend(pred_dir, t1, t2, &out)?;
            let flagged = r.rows.iter().filter(|r| r.unreliable).count();
            Ok(format!(
                "{} rows, {flagged} unreliable -> {}",
                r.rows.len(),
                out.join("trend.csv").display()
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("geoseg: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let name = cli.command.name();
    match run(&cli.command) {
        Ok(summary) => {
            eprintln!("geoseg {name}: ok: {summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("geoseg {name}: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
