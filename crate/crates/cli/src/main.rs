//! Command-line entry point: superset generation, training, tiling,
//! benchmarks, rendering and the HTTP service.

mod config;
mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use tiling_core::geom::{Point, Polygon, Region, RigidTransform};
use tiling_core::graph::{build_graph, crop_superset};
use tiling_core::io::{load_superset, load_weights, render_solution, save_superset, save_weights, tileset_from_str, SolutionDoc};
use tiling_core::nn::{Model, ModelConfig};
use tiling_core::solve::{tile_region, Policy, TileRequest};
use tiling_core::tileset::{build_superset_with, builtin, GrowthOrder, Superset, TileSet, DEFAULT_SUPERSET_CAP};
use tiling_core::train::{save_checkpoint, train, Adam};
use tiling_service::{AppState, DEFAULT_PORT};

use config::FileConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "tiling", version, about = "Tile polygonal regions with a learned placement policy")]
struct Cli {
    /// Master seed; drawn at random when neither this nor the config sets it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with optional `seed`, `train`, `solve` and `service` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel crops and runs; defaults to the logical core count.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a superset, print its statistics and optionally cache it.
    Superset {
        #[command(flatten)]
        source: TilesetArgs,
        /// Binary superset cache to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train placement weights on random shapes.
    Train {
        #[command(flatten)]
        source: SupersetArgs,
        /// Weights file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        train_shapes: Option<usize>,
        #[arg(long)]
        val_shapes: Option<usize>,
        /// Line-delimited JSON training metrics.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Directory for per-epoch and best checkpoints.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Tile one shape and write the solution.
    Tile {
        #[command(flatten)]
        source: SupersetArgs,
        /// Region document: `{"outer": [[x, y], ...], "holes": [...]}` or a bare vertex list.
        #[arg(long)]
        shape: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Gnn)]
        policy: PolicyArg,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// Crop poses to try.
        #[arg(short = 'K', long = "K", alias = "k")]
        k: Option<usize>,
        /// Fixed crop pose `rotation,tx,ty`; skips the pose search.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        pose: Option<Vec<f64>>,
        /// Solution document to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Time policies over scaled shapes; writes one CSV row per shape, size and policy.
    Bench {
        #[command(flatten)]
        source: SupersetArgs,
        /// Directory of region documents (`*.json`).
        #[arg(long)]
        shapes: PathBuf,
        /// Scale factors applied about each shape's centroid.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sizes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "greedy,random")]
        policies: Vec<PolicyArg>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(short = 'K', long = "K", alias = "k")]
        k: Option<usize>,
        /// CSV file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a solution document as SVG.
    Render {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// Superset whose candidates are drawn under the tiles.
        #[command(flatten)]
        source: OptionalSupersetArgs,
    },
    /// Serve the HTTP API configured by the `service` config section.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

#[derive(Args)]
struct TilesetArgs {
    /// Tile-set descriptor file or `builtin:<name>`.
    #[arg(long)]
    tileset: String,
    /// Growth rings; defaults to the tile set's own.
    #[arg(long)]
    rings: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_SUPERSET_CAP)]
    cap: usize,
}

#[derive(Args)]
struct SupersetArgs {
    /// Tile-set descriptor file or `builtin:<name>`.
    #[arg(long, required_unless_present = "superset")]
    tileset: Option<String>,
    /// Binary superset cache; grown from the tile set when absent.
    #[arg(long)]
    superset: Option<PathBuf>,
    #[arg(long)]
    rings: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_SUPERSET_CAP)]
    cap: usize,
}

#[derive(Args)]
struct OptionalSupersetArgs {
    #[arg(long)]
    tileset: Option<String>,
    #[arg(long)]
    superset: Option<PathBuf>,
    #[arg(long)]
    rings: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_SUPERSET_CAP)]
    cap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Gnn,
    Greedy,
    Random,
}

impl PolicyArg {
    fn name(self) -> &'static str {
        match self {
            PolicyArg::Gnn => "gnn",
            PolicyArg::Greedy => "greedy",
            PolicyArg::Random => "random",
        }
    }
}

fn load_tileset(arg: &str) -> Result<TileSet, CliError> {
    let descriptor = match arg.strip_prefix("builtin:") {
        Some(name) => builtin::all().into_iter().find(|d| d.name == name).ok_or_else(|| {
            let names: Vec<String> = builtin::all().into_iter().map(|d| d.name).collect();
            CliError::usage(format!("unknown builtin tile set '{name}'; available: {}", names.join(", ")))
        })?,
        None => {
            let text = std::fs::read_to_string(arg).map_err(|e| CliError::from(e).context(arg))?;
            tileset_from_str(&text).map_err(|e| CliError::from(e).context(arg))?
        }
    };
    Ok(TileSet::from_descriptor(&descriptor)?)
}

fn grow(ts: TileSet, rings: Option<u32>, cap: usize) -> Result<Superset, CliError> {
    let rings = rings.unwrap_or(ts.default_rings);
    info!("growing '{}' superset with {rings} rings", ts.name);
    Ok(build_superset_with(Arc::new(ts), rings, cap, GrowthOrder::Forward)?)
}

fn open_superset(tileset: Option<&str>, cache: Option<&Path>, rings: Option<u32>, cap: usize) -> Result<Superset, CliError> {
    match (tileset, cache) {
        (named, Some(path)) => {
            let ss = load_superset(path).map_err(|e| CliError::from(e).context(path.display()))?;
            if let Some(arg) = named {
                let ts = load_tileset(arg)?;
                if ts.name != ss.tileset.name {
                    return Err(CliError::usage(format!(
                        "superset {} belongs to tile set '{}', not '{}'",
                        path.display(),
                        ss.tileset.name,
                        ts.name
                    )));
                }
            }
            Ok(ss)
        }
        (Some(arg), None) => grow(load_tileset(arg)?, rings, cap),
        (None, None) => Err(CliError::usage("either --tileset or --superset is required")),
    }
}

impl SupersetArgs {
    fn open(&self) -> Result<Superset, CliError> {
        open_superset(self.tileset.as_deref(), self.superset.as_deref(), self.rings, self.cap)
    }
}

fn read_shape(path: &Path) -> Result<Region, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let parsed = if value.is_array() {
        serde_json::from_value::<Vec<Point>>(value)
            .map_err(|e| e.to_string())
            .and_then(|pts| Polygon::new(pts).map(Region::from).map_err(|e| e.to_string()))
    } else {
        serde_json::from_value::<Region>(value).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn scaled(region: &Region, s: f64) -> Result<Region, CliError> {
    let c = region.outer().centroid();
    let scale = |p: &Polygon| {
        let pts = p.vertices().iter().map(|&v| c + (v - c) * s).collect();
        Polygon::new(pts).map_err(|e| CliError::usage(format!("scaling by {s}: {e}")))
    };
    let holes = region.holes().iter().map(scale).collect::<Result<Vec<_>, _>>()?;
    Region::new(scale(region.outer())?, holes).map_err(|e| CliError::usage(format!("scaling by {s}: {e}")))
}

fn load_model(path: &Path, ss: &Superset) -> Result<Model, CliError> {
    let model = load_weights(path).map_err(|e| CliError::from(e).context(path.display()))?;
    model.check_dims(ss.tileset.len(), ss.poses.len()).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(model)
}

fn policy_for(arg: PolicyArg, model: Option<&Arc<Model>>) -> Result<Policy, CliError> {
    Ok(match arg {
        PolicyArg::Gnn => Policy::Gnn(model.cloned().ok_or_else(|| CliError::usage("--policy gnn requires --weights"))?),
        PolicyArg::Greedy => Policy::Greedy,
        PolicyArg::Random => Policy::Random,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::from(e).context(path.display()))
}

/// Candidate outlines of the crop a solution was taken from.
fn crop_outlines<'a>(ss: &'a Superset, region: &Region) -> Vec<&'a Polygon> {
    crop_superset(ss, region, &RigidTransform::IDENTITY).into_iter().map(|i| &ss.placements[i].polygon).collect()
}

struct Context {
    seed: u64,
    file: FileConfig,
}

impl Context {
    fn request(&self, runs: Option<usize>, k: Option<usize>, fixed_pose: Option<RigidTransform>) -> TileRequest {
        TileRequest {
            k: k.or(self.file.solve.k).unwrap_or(1),
            runs: runs.or(self.file.solve.runs).unwrap_or(1),
            seed: self.seed,
            options: self.file.solve.options,
            fixed_pose,
        }
    }
}

fn cmd_superset(source: &TilesetArgs, out: Option<&Path>) -> Result<(), CliError> {
    let ts = load_tileset(&source.tileset)?;
    let rings = source.rings.unwrap_or(ts.default_rings);
    let ss = grow(ts, Some(rings), source.cap)?;
    let g = build_graph(&ss.placements, &ss).map_err(|e| CliError { kind: error::Kind::Internal, message: e.to_string() })?;
    println!("tile set: {}", ss.tileset.name);
    println!("rings: {rings}");
    println!("placements: {}", ss.len());
    println!("relative poses: {}", ss.poses.len());
    println!("overlap edges: {}", g.overlap_edges.len());
    println!("neighbor edges: {}", g.neighbor_edges.len());
    println!("mean degree: {:.2}", g.mean_degree().unwrap_or(0.0));
    if let Some(path) = out {
        save_superset(path, &ss).map_err(|e| CliError::from(e).context(path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

struct TrainArgs<'a> {
    out: &'a Path,
    epochs: Option<usize>,
    train_shapes: Option<usize>,
    val_shapes: Option<usize>,
    metrics: Option<&'a Path>,
    checkpoints: Option<&'a Path>,
}

fn cmd_train(ctx: &Context, source: &SupersetArgs, args: TrainArgs<'_>) -> Result<(), CliError> {
    let ss = source.open()?;
    let mut cfg = ctx.file.train.clone().unwrap_or_default();
    cfg.seed = ctx.seed;
    cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
    cfg.train_shapes = args.train_shapes.unwrap_or(cfg.train_shapes);
    cfg.val_shapes = args.val_shapes.unwrap_or(cfg.val_shapes);
    let mut model = Model::new(ModelConfig {
        seed: ctx.seed,
        ..ModelConfig::new(ss.tileset.len(), ss.poses.len())
    });
    let mut metrics: Box<dyn Write> = match args.metrics {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::sink()),
    };
    if let Some(dir) = args.checkpoints {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
    }
    let mut sink = |epoch: usize, best: bool, m: &Model, adam: &Adam| {
        if let Some(dir) = args.checkpoints {
            save_checkpoint(BufWriter::new(File::create(dir.join(format!("epoch-{epoch}.ckpt")))?), m, adam)?;
            if best {
                save_checkpoint(BufWriter::new(File::create(dir.join("best.ckpt"))?), m, adam)?;
            }
        }
        Ok(())
    };
    let report = train(&mut model, &ss, &cfg, &mut metrics, &mut sink)?;
    metrics.flush()?;
    save_weights(args.out, &model).map_err(|e| CliError::from(e).context(args.out.display()))?;
    println!("initial validation loss: {:.6}", report.initial_val);
    println!("best validation loss: {:.6} (epoch {})", report.best_val, report.best_epoch);
    println!("epochs: {}", report.epochs_run);
    println!("iterations: {}", report.iterations);
    println!("wrote {}", args.out.display());
    Ok(())
}

struct TileArgs<'a> {
    shape: &'a Path,
    policy: PolicyArg,
    weights: Option<&'a Path>,
    runs: Option<usize>,
    k: Option<usize>,
    pose: Option<&'a [f64]>,
    out: Option<&'a Path>,
    svg: Option<&'a Path>,
}

fn cmd_tile(ctx: &Context, source: &SupersetArgs, args: TileArgs<'_>) -> Result<(), CliError> {
    if args.policy == PolicyArg::Gnn && args.weights.is_none() {
        return Err(CliError::usage("--policy gnn requires --weights"));
    }
    let fixed_pose = match args.pose {
        Some(&[rotation, tx, ty]) => Some(RigidTransform::new(rotation, Point::new(tx, ty))),
        Some(_) => return Err(CliError::usage("--pose takes rotation,tx,ty")),
        None => None,
    };
    let region = read_shape(args.shape)?;
    let ss = source.open()?;
    let model = args.weights.map(|p| load_model(p, &ss)).transpose()?.map(Arc::new);
    let policy = policy_for(args.policy, model.as_ref())?;
    let req = ctx.request(args.runs, args.k, fixed_pose);
    let sol = tile_region(&policy, &ss, &region, &req)?;
    let doc = SolutionDoc::new(&sol, &ss.tileset, &policy, &req);
    let m = &sol.metrics;
    println!("tiles: {}", sol.selected.len());
    println!("coverage: {:.2}%", m.coverage * 100.0);
    println!("holes: {}", m.holes);
    println!("rounds: {}", m.rounds);
    println!("wall time: {:.1} ms", m.wall_ms);
    println!("digest: {}", doc.digest());
    if let Some(path) = args.out {
        write_file(path, &doc.to_json())?;
    }
    if let Some(path) = args.svg {
        write_file(path, &render_solution(&doc, &crop_outlines(&ss, &sol.region)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow<'a> {
    shape: &'a str,
    size: f64,
    policy: &'a str,
    n_candidates: usize,
    coverage: f64,
    holes: usize,
    rounds: usize,
    wall_ms: f64,
}

struct BenchArgs<'a> {
    shapes: &'a Path,
    sizes: &'a [f64],
    policies: &'a [PolicyArg],
    weights: Option<&'a Path>,
    runs: Option<usize>,
    k: Option<usize>,
    out: Option<&'a Path>,
}

fn cmd_bench(ctx: &Context, source: &SupersetArgs, args: BenchArgs<'_>) -> Result<(), CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(args.shapes)
        .map_err(|e| CliError::from(e).context(args.shapes.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!("no shape documents (*.json) in {}", args.shapes.display())));
    }
    let shapes = files
        .iter()
        .map(|p| Ok((p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), read_shape(p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let ss = source.open()?;
    let model = args.weights.map(|p| load_model(p, &ss)).transpose()?.map(Arc::new);
    let policies = args
        .policies
        .iter()
        .map(|&p| Ok((p, policy_for(p, model.as_ref())?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let sink: Box<dyn Write> = match args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut csv = csv::Writer::from_writer(sink);
    let req = ctx.request(args.runs, args.k, None);
    for (name, shape) in &shapes {
        for &size in args.sizes {
            let region = scaled(shape, size)?;
            for (arg, policy) in &policies {
                let sol = tile_region(policy, &ss, &region, &req)
                    .map_err(|e| CliError::from(e).context(format!("{name} at size {size} with {}", arg.name())))?;
                csv.serialize(BenchRow {
                    shape: name,
                    size,
                    policy: arg.name(),
                    n_candidates: crop_superset(&ss, &sol.region, &RigidTransform::IDENTITY).len(),
                    coverage: sol.metrics.coverage,
                    holes: sol.metrics.holes,
                    rounds: sol.metrics.rounds,
                    wall_ms: sol.metrics.wall_ms,
                })?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

fn cmd_render(solution: &Path, svg: &Path, source: &OptionalSupersetArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(solution).map_err(|e| CliError::from(e).context(solution.display()))?;
    let doc = SolutionDoc::from_json(&text).map_err(|e| CliError::from(e).context(solution.display()))?;
    let out = if source.tileset.is_some() || source.superset.is_some() {
        let ss = open_superset(source.tileset.as_deref(), source.superset.as_deref(), source.rings, source.cap)?;
        render_solution(&doc, &crop_outlines(&ss, &doc.region))
    } else {
        render_solution(&doc, &[])
    };
    write_file(svg, &out)
}

fn cmd_serve(ctx: &Context, host: IpAddr, port: u16) -> Result<(), CliError> {
    let cfg = ctx
        .file
        .service
        .as_ref()
        .ok_or_else(|| CliError::usage("serve needs --config with a `service` section"))?;
    let state = AppState::load(cfg)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let addr = SocketAddr::new(host, port);
    println!("serving on http://{addr}");
    runtime.block_on(tiling_service::serve(state, addr))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError { kind: error::Kind::Internal, message: e.to_string() })?;
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or_else(rand::random);
    eprintln!("seed: {seed}");
    let ctx = Context { seed, file };
    match &cli.command {
        Command::Superset { source, out } => cmd_superset(source, out.as_deref()),
        Command::Train {
            source,
            out,
            epochs,
            train_shapes,
            val_shapes,
            metrics,
            checkpoints,
        } => cmd_train(
            &ctx,
            source,
            TrainArgs {
                out,
                epochs: *epochs,
                train_shapes: *train_shapes,
                val_shapes: *val_shapes,
                metrics: metrics.as_deref(),
                checkpoints: checkpoints.as_deref(),
            },
        ),
        Command::Tile {
            source,
            shape,
            policy,
            weights,
            runs,
            k,
            pose,
            out,
            svg,
        } => cmd_tile(
            &ctx,
            source,
            TileArgs {
                shape,
                policy: *policy,
                weights: weights.as_deref(),
                runs: *runs,
                k: *k,
                pose: pose.as_deref(),
                out: out.as_deref(),
                svg: svg.as_deref(),
            },
        ),
        Command::Bench {
            source,
            shapes,
            sizes,
            policies,
            weights,
            runs,
            k,
            out,
        } => cmd_bench(
            &ctx,
            source,
            BenchArgs {
                shapes,
                sizes,
                policies,
                weights: weights.as_deref(),
                runs: *runs,
                k: *k,
                out: out.as_deref(),
            },
        ),
        Command::Render { solution, svg, source } => cmd_render(solution, svg, source),
        Command::Serve { port, host } => cmd_serve(&ctx, *host, *port),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TILING_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
