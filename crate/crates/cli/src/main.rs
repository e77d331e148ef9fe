use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use poleloc::classing::{kmeans_fit, KMeansModel, KMeansParams};
use poleloc::cloud_io::load_cloud;
use poleloc::config::Config;
use poleloc::eval::{records_to_csv, run_experiment, ExperimentConfig};
use poleloc::extraction::{extract_poles, ExtractionParams};
use poleloc::geometry::Pose2;
use poleloc::matcher::{ransac_localize, RansacParams, ScoringMode};
use poleloc::polemap::{DistanceTable, Frame, Pole, PoleMap, TableParams};
use poleloc::synth::{generate_world, observe, random_queries, ObservationSpec, WorldSpec};

// Per-stage seed offsets from the global seed.
const WORLD_SEED: u64 = 1;
const KMEANS_SEED: u64 = 2;
const RANSAC_SEED: u64 = 3;
const OBSERVE_SEED: u64 = 4;
const QUERY_SEED: u64 = 1000;

#[derive(Parser)]
#[command(name = "poleloc", version, about = "Pole landmark extraction, classing and map matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set ransac.inlier_radius=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Global seed; stages use fixed offsets from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect poles in a point cloud and write a pole map CSV.
    Extract(ExtractArgs),
    /// Learn pole classes with k-means and write the model and classed map.
    Cluster(ClusterArgs),
    /// Build the pairwise-distance table of a global map.
    BuildTable(BuildTableArgs),
    /// Localize a local map in a global map; prints `tx,ty,theta,score`.
    Localize(LocalizeArgs),
    /// Generate a synthetic world and optionally one observation of it.
    Synth(SynthArgs),
    /// Run the baseline vs class-aware accuracy experiment.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    count_threshold: Option<u32>,
    #[arg(long)]
    min_height: Option<f64>,
    #[arg(long)]
    max_width: Option<f64>,
    #[arg(long)]
    isolation_radius: Option<f64>,
    #[arg(long)]
    slice_count: Option<usize>,
    #[arg(long)]
    ground_clearance: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ClusterArgs {
    /// Pole map with descriptors.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    standardize: Option<bool>,
    #[arg(long)]
    out_model: PathBuf,
    /// The input map with the class column filled.
    #[arg(long)]
    out_map: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    max_distance: Option<f64>,
    #[arg(long)]
    min_pair_separation: Option<f64>,
}

#[derive(Args)]
struct BuildTableArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RansacArgs {
    #[arg(long, value_parser = ["baseline", "class_gated", "class_literal"])]
    mode: Option<String>,
    #[arg(long)]
    n_input_poles: Option<usize>,
    #[arg(long)]
    inlier_radius: Option<f64>,
    #[arg(long)]
    distance_tol: Option<f64>,
    #[arg(long)]
    max_hypotheses: Option<usize>,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    local: PathBuf,
    #[arg(long)]
    global: PathBuf,
    /// Precomputed distance table of the global map.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Classifies unclassed local poles for class-aware modes.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    ransac: RansacArgs,
    #[command(flatten)]
    table_params: TableArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Accuracy thresholds in meters, e.g. `5,1`.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    queries: Option<usize>,
    #[command(flatten)]
    ransac: RansacArgs,
    #[command(flatten)]
    common: Common,
}

/// Config file, then `--set` overrides, then dedicated flags.
fn load_config(common: &Common, flags: &[(&str, Option<String>)]) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &common.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
        cfg.set(k.trim(), v.trim());
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(*k, v.clone());
        }
    }
    if let Some(s) = common.seed {
        cfg.set("seed", s.to_string());
    }
    Ok(cfg)
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn extraction_params(cfg: &Config) -> Result<ExtractionParams> {
    let d = ExtractionParams::default();
    let p = ExtractionParams {
        voxel_size: cfg.get_or("extract.voxel_size", d.voxel_size)?,
        count_threshold: cfg.get_or("extract.count_threshold", d.count_threshold)?,
        min_height: cfg.get_or("extract.min_height", d.min_height)?,
        max_width: cfg.get_or("extract.max_width", d.max_width)?,
        isolation_radius: cfg.get_or("extract.isolation_radius", d.isolation_radius)?,
        slice_count: cfg.get_or("extract.slice_count", d.slice_count)?,
        ground_clearance: cfg.get_or("extract.ground_clearance", d.ground_clearance)?,
    };
    p.validate()?;
    Ok(p)
}

fn table_params(cfg: &Config) -> Result<TableParams> {
    let d = TableParams::default();
    let p = TableParams {
        bin_width: cfg.get_or("table.bin_width", d.bin_width)?,
        max_distance: cfg.get_or("table.max_distance", d.max_distance)?,
        min_pair_separation: cfg.get_or("table.min_pair_separation", d.min_pair_separation)?,
    };
    p.validate()?;
    Ok(p)
}

fn ransac_params(cfg: &Config, seed: u64) -> Result<RansacParams> {
    let d = RansacParams::default();
    let p = RansacParams {
        n_input_poles: cfg.get_or("ransac.n_input_poles", d.n_input_poles)?,
        inlier_radius: cfg.get_or("ransac.inlier_radius", d.inlier_radius)?,
        distance_tol: cfg.get_or("ransac.distance_tol", d.distance_tol)?,
        max_hypotheses: cfg.get_or("ransac.max_hypotheses", d.max_hypotheses)?,
        seed: seed + RANSAC_SEED,
        mode: cfg.get_or("ransac.mode", d.mode)?,
        min_pair_separation: cfg.get_or("ransac.min_pair_separation", d.min_pair_separation)?,
    };
    p.validate()?;
    Ok(p)
}

fn table_flags(t: &TableArgs) -> [(&'static str, Option<String>); 3] {
    [
        ("table.bin_width", opt(&t.bin_width)),
        ("table.max_distance", opt(&t.max_distance)),
        ("table.min_pair_separation", opt(&t.min_pair_separation)),
    ]
}

fn ransac_flags(r: &RansacArgs) -> [(&'static str, Option<String>); 5] {
    [
        ("ransac.mode", r.mode.clone()),
        ("ransac.n_input_poles", opt(&r.n_input_poles)),
        ("ransac.inlier_radius", opt(&r.inlier_radius)),
        ("ransac.distance_tol", opt(&r.distance_tol)),
        ("ransac.max_hypotheses", opt(&r.max_hypotheses)),
    ]
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let cfg = load_config(
        &a.common,
        &[
            ("extract.voxel_size", opt(&a.voxel_size)),
            ("extract.count_threshold", opt(&a.count_threshold)),
            ("extract.min_height", opt(&a.min_height)),
            ("extract.max_width", opt(&a.max_width)),
            ("extract.isolation_radius", opt(&a.isolation_radius)),
            ("extract.slice_count", opt(&a.slice_count)),
            ("extract.ground_clearance", opt(&a.ground_clearance)),
        ],
    )?;
    let params = extraction_params(&cfg)?;
    let cloud = load_cloud(&a.cloud)?;
    let poles = extract_poles(&cloud, &params)?
        .into_iter()
        .enumerate()
        .map(|(i, d)| Pole { id: i as u64, center: d.center, width: d.width, class_id: None, descriptor: d.descriptor })
        .collect();
    let map = PoleMap::new(Frame::Global, poles)?;
    map.save(&a.out)?;
    eprintln!("{} poles written to {}", map.len(), a.out.display());
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let cfg = load_config(
        &a.common,
        &[
            ("cluster.k", opt(&a.k)),
            ("cluster.max_iters", opt(&a.max_iters)),
            ("cluster.standardize", opt(&a.standardize)),
        ],
    )?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let d = KMeansParams::default();
    let params = KMeansParams {
        k: cfg.get_or("cluster.k", d.k)?,
        seed: seed + KMEANS_SEED,
        max_iters: cfg.get_or("cluster.max_iters", d.max_iters)?,
        standardize: cfg.get_or("cluster.standardize", d.standardize)?,
    };
    let mut map = PoleMap::load(&a.map, Frame::Global)?;
    if map.descriptor_dim() == 0 {
        bail!("{} has no descriptor columns", a.map.display());
    }
    let descriptors: Vec<Vec<f64>> = map.poles.iter().map(|p| p.descriptor.clone()).collect();
    let fit = kmeans_fit(&descriptors, &params)?;
    for (p, &l) in map.poles.iter_mut().zip(&fit.assignment.labels) {
        p.class_id = Some(l);
    }
    fit.model.save(&a.out_model)?;
    map.save(&a.out_map)?;
    eprintln!(
        "k = {}: {} iterations, converged = {}, sse = {}",
        params.k,
        fit.iterations,
        fit.converged,
        fit.sse_history.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_build_table(a: &BuildTableArgs) -> Result<()> {
    let cfg = load_config(&a.common, &table_flags(&a.table))?;
    let map = PoleMap::load(&a.map, Frame::Global)?;
    let table = DistanceTable::build(&map, table_params(&cfg)?)?;
    write(&a.out, &table.to_csv())?;
    eprintln!("{} pairs written to {}", table.len(), a.out.display());
    Ok(())
}

fn cmd_localize(a: &LocalizeArgs) -> Result<()> {
    let mut flags = ransac_flags(&a.ransac).to_vec();
    flags.extend(table_flags(&a.table_params));
    let cfg = load_config(&a.common, &flags)?;
    let params = ransac_params(&cfg, cfg.get_or("seed", 0)?)?;
    let mut local = PoleMap::load(&a.local, Frame::Local)?;
    let global = PoleMap::load(&a.global, Frame::Global)?;
    if let Some(path) = &a.model {
        let model = KMeansModel::load(path)?;
        for p in local.poles.iter_mut().filter(|p| p.class_id.is_none()) {
            p.class_id = Some(model.assign_class(&p.descriptor)?);
        }
    }
    let table = match &a.table {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let table = DistanceTable::from_csv(&text, path)?;
            let fits = table.bins().flat_map(|(_, ps)| ps).all(|p| {
                global.poles.get(p.a).is_some_and(|g| g.id == p.id_a)
                    && global.poles.get(p.b).is_some_and(|g| g.id == p.id_b)
            });
            if !fits {
                bail!("{} was not built from {}", path.display(), a.global.display());
            }
            table
        }
        None => DistanceTable::build(&global, table_params(&cfg)?)?,
    };
    let r = ransac_localize(&local, &global, &table, &params)?;
    let p = r.best.pose;
    println!("{},{},{},{}", p.tx, p.ty, p.theta, r.best.score);
    Ok(())
}

fn world_spec(cfg: &Config, seed: u64) -> Result<WorldSpec> {
    Ok(WorldSpec::from_config(cfg, seed + WORLD_SEED)?)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = load_config(&a.common, &[])?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let spec = world_spec(&cfg, seed)?;
    let world = generate_world(&spec)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    world.map.save(&a.out_dir.join("global.csv"))?;
    if cfg.contains("obs.sensor_range") {
        let pose = match cfg.get_list::<f64>("obs.pose")? {
            Some(v) if v.len() == 3 => Pose2::new(v[0], v[1], v[2]),
            Some(_) => bail!("obs.pose needs three values tx,ty,theta"),
            None => Pose2::new(spec.extent.0 / 2.0, spec.extent.1 / 2.0, 0.0),
        };
        let obs = ObservationSpec { true_pose: pose, seed: seed + OBSERVE_SEED, ..ObservationSpec::from_config(&cfg)? };
        let local = observe(&world.map, &obs)?;
        local.save(&a.out_dir.join("local.csv"))?;
        write(&a.out_dir.join("pose.txt"), &format!("{},{},{}\n", pose.tx, pose.ty, pose.theta))?;
    }
    eprintln!("{} poles written to {}", world.map.len(), a.out_dir.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut flags = ransac_flags(&a.ransac).to_vec();
    flags.push(("eval.thresholds", a.thresholds.clone()));
    flags.push(("eval.queries", opt(&a.queries)));
    let cfg = load_config(&a.common, &flags)?;
    let seed: u64 = cfg.get_or("seed", 0)?;

    let spec = world_spec(&cfg, seed)?;
    let mut world = generate_world(&spec)?;
    let d = KMeansParams::default();
    let kp = KMeansParams {
        k: cfg.get_or("cluster.k", spec.types.len())?,
        seed: seed + KMEANS_SEED,
        max_iters: cfg.get_or("cluster.max_iters", d.max_iters)?,
        standardize: cfg.get_or("cluster.standardize", d.standardize)?,
    };
    let descriptors: Vec<Vec<f64>> = world.map.poles.iter().map(|p| p.descriptor.clone()).collect();
    let fit = kmeans_fit(&descriptors, &kp)?;
    for (p, &l) in world.map.poles.iter_mut().zip(&fit.assignment.labels) {
        p.class_id = Some(l);
    }

    let defaults = ExperimentConfig::default();
    let modes = match cfg.get_list::<ScoringMode>("eval.modes")? {
        Some(m) => m,
        // A mode flag narrows the comparison to that mode.
        None => match a.ransac.mode.as_deref() {
            Some(m) => vec![m.parse()?],
            None => defaults.modes,
        },
    };
    let config = ExperimentConfig {
        modes,
        ransac: ransac_params(&cfg, seed)?,
        table: table_params(&cfg)?,
        thresholds: cfg.get_list("eval.thresholds")?.unwrap_or(defaults.thresholds),
        dataset: cfg.get_or("eval.dataset", defaults.dataset)?,
    };
    let count: usize = cfg.get_or("eval.queries", 200)?;
    let obs = ObservationSpec::from_config(&cfg)?;
    let queries = random_queries(spec.extent, &obs, count, seed + QUERY_SEED);
    let exp = run_experiment(&world.map, Some(&fit.model), &queries, &config)?;

    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    write(&a.out_dir.join("trajectory.csv"), &records_to_csv(&exp.records))?;
    let summary = exp.report.summary_text();
    write(&a.out_dir.join("summary.txt"), &summary)?;
    write(&a.out_dir.join("table.csv"), &exp.report.table_csv())?;
    print!("{summary}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::BuildTable(a) => cmd_build_table(a),
        Command::Localize(a) => cmd_localize(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("poleloc: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
