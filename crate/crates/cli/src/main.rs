use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use profilematch::assignment::{assign_distance_matrices, assign_ot_baseline_with};
use profilematch::geometry::DistanceMatrix;
use profilematch::gw::tlb_with;
use profilematch::io::{self, ExperimentWriter, InputKind};
use profilematch::matching::{discrepancy_matrix_with, match_discrepancies};
use profilematch::par::Execution;
use profilematch::synthetic::kmeans;
use profilematch::theory::{
    run_mixture_experiment_streaming, run_noise_stability_experiment_streaming, summarize,
    MixtureConfig, NoiseConfig, RotationKind, DEFAULT_PLANE_ANGLE,
};
use profilematch::Error;

/// Distance-profile matching of point clouds.
#[derive(Parser, Debug)]
#[command(name = "profilematch", version)]
struct Cli {
    /// Worker threads; output never depends on it.
    #[arg(long, global = true, env = "PROFILEMATCH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match every source point to its closest target profile.
    Match(MatchArgs),
    /// One-to-one matching of equally sized inputs.
    Assign(AssignArgs),
    /// Third lower bound to the Gromov-Wasserstein distance.
    Tlb(TlbArgs),
    /// Simulation sweeps.
    #[command(subcommand)]
    Simulate(Simulate),
    /// k-means labels for a point cloud.
    Cluster(ClusterArgs),
    /// Write the pairwise distance matrix of a point cloud.
    Distances(DistancesArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Points,
    Distances,
}

impl From<Kind> for InputKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Points => InputKind::Points,
            Kind::Distances => InputKind::Distances,
        }
    }
}

#[derive(Args, Debug)]
struct Inputs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum, default_value = "points")]
    input_kind: Kind,
}

impl Inputs {
    fn load(&self) -> Result<(DistanceMatrix, DistanceMatrix)> {
        let kind = self.input_kind.into();
        let dx = io::read_distances(&self.source, kind)
            .with_context(|| format!("reading {}", self.source.display()))?;
        let dy = io::read_distances(&self.target, kind)
            .with_context(|| format!("reading {}", self.target.display()))?;
        Ok((dx, dy))
    }
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 1.0)]
    order: f64,
    /// Inlier threshold rho; sources with discrepancy < rho are inliers.
    #[arg(long, default_value_t = f64::INFINITY)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AssignArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Squared-Euclidean assignment on raw coordinates instead of profiles.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TlbArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 1.0)]
    order: f64,
    /// Write the optimal coupling here, with a JSON sidecar next to it.
    #[arg(long)]
    emit_coupling: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// JSON config; flags below override its seed and replicate count.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Record CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON [default: <out> with extension .summary.json]
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Simulate {
    /// Outlier-robust matching on paired Gaussian mixtures.
    Mixture {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long = "k", default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        t: usize,
        #[arg(long, default_value_t = 10)]
        s: usize,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        center_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        order: f64,
    },
    /// Noise stability of assignment matching under a rigid motion.
    Noise {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_enum, default_value = "full")]
        rotation: Rotation,
        #[arg(long, default_value_t = DEFAULT_PLANE_ANGLE)]
        angle: f64,
        #[arg(long, default_value_t = 1.0)]
        location_scale: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rotation {
    TwoCoord,
    Full,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistancesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for shape or dimension mismatches, 2 for any other bad input.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::DimensionMismatch(_)) => 3,
        _ => 2,
    }
}

fn run(cmd: Command) -> Result<()> {
    let exec = Execution::default();
    match cmd {
        Command::Match(a) => {
            check_order(a.order)?;
            if a.threshold.is_nan() || a.threshold <= 0.0 {
                bail!(Error::InvalidInput(format!("threshold must be positive, got {}", a.threshold)));
            }
            let (dx, dy) = a.inputs.load()?;
            let d = discrepancy_matrix_with(&dx, &dy, a.order, exec)?;
            let res = match_discrepancies(&d, a.threshold);
            io::write_file(&a.out, |w| io::write_match(w, &res))?;
            let disc = &res.discrepancy;
            let mean = disc.iter().sum::<f64>() / disc.len() as f64;
            println!("n = {}", dx.len());
            println!("m = {}", dy.len());
            println!("inliers = {}", res.inliers.len());
            println!("max discrepancy = {}", io::fmt_real(disc.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            println!("min discrepancy = {}", io::fmt_real(disc.iter().cloned().fold(f64::INFINITY, f64::min)));
            println!("mean discrepancy = {}", io::fmt_real(mean));
        }
        Command::Assign(a) => {
            let assignment = if a.baseline {
                if !matches!(a.inputs.input_kind, Kind::Points) {
                    bail!(Error::InvalidInput("the baseline needs point coordinates".into()));
                }
                let x = io::read_points_file(&a.inputs.source)
                    .with_context(|| format!("reading {}", a.inputs.source.display()))?;
                let y = io::read_points_file(&a.inputs.target)
                    .with_context(|| format!("reading {}", a.inputs.target.display()))?;
                assign_ot_baseline_with(&x, &y, exec)?
            } else {
                let (dx, dy) = a.inputs.load()?;
                assign_distance_matrices(&dx, &dy, exec)?
            };
            io::write_file(&a.out, |w| io::write_permutation(w, &assignment.permutation))?;
            println!("n = {}", assignment.permutation.len());
            println!("total cost = {}", io::fmt_real(assignment.total_cost));
        }
        Command::Tlb(a) => {
            check_order(a.order)?;
            let (dx, dy) = a.inputs.load()?;
            let t = tlb_with(&dx, &dy, a.order, exec)?;
            println!("{}", io::fmt_real(t.value));
            if let Some(path) = &a.emit_coupling {
                io::write_coupling_files(path, &t.coupling, a.order, t.value)?;
            }
        }
        Command::Simulate(Simulate::Mixture { sweep, d, k, t, s, n, m, center_scale, order }) => {
            let mut cfg = match &sweep.config {
                Some(p) => read_config::<MixtureConfig>(p)?,
                None => MixtureConfig {
                    d,
                    k,
                    t,
                    s,
                    n,
                    m,
                    sigmas: vec![0.0, 0.01, 0.02, 0.04, 0.08],
                    replicates: 100,
                    seed: 0,
                    center_scale,
                    order,
                },
            };
            apply_overrides(&sweep, &mut cfg.seed, &mut cfg.replicates, &mut cfg.sigmas);
            sweep_to_files(&sweep, |sink| run_mixture_experiment_streaming(&cfg, exec, sink))?;
        }
        Command::Simulate(Simulate::Noise { sweep, d, n, rotation, angle, location_scale }) => {
            let mut cfg = match &sweep.config {
                Some(p) => read_config::<NoiseConfig>(p)?,
                None => NoiseConfig {
                    d,
                    n,
                    sigmas: vec![0.001, 0.01, 0.05, 0.1],
                    rotation: match rotation {
                        Rotation::TwoCoord => RotationKind::TwoCoord,
                        Rotation::Full => RotationKind::Full,
                    },
                    replicates: 100,
                    seed: 0,
                    angle,
                    location_scale,
                },
            };
            apply_overrides(&sweep, &mut cfg.seed, &mut cfg.replicates, &mut cfg.sigmas);
            sweep_to_files(&sweep, |sink| run_noise_stability_experiment_streaming(&cfg, exec, sink))?;
        }
        Command::Cluster(a) => {
            let x = io::read_points_file(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let labels = kmeans(&x, a.k, a.seed, a.max_iters)?;
            io::write_file(&a.out, |w| io::write_labels(w, &labels))?;
            println!("n = {}, k = {}", x.len(), a.k);
        }
        Command::Distances(a) => {
            let x = io::read_points_file(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let d = DistanceMatrix::from_cloud_with(&x, exec);
            io::write_file(&a.out, |w| io::write_distance_matrix(w, &d))?;
        }
    }
    Ok(())
}

fn check_order(order: f64) -> Result<()> {
    if !(order.is_finite() && order >= 1.0) {
        bail!(Error::InvalidInput(format!("order must be >= 1, got {order}")));
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
    let cfg = serde_json::from_str(&text).map_err(Error::from).with_context(|| format!("parsing {}", path.display()))?;
    Ok(cfg)
}

fn apply_overrides(sweep: &SweepArgs, seed: &mut u64, replicates: &mut usize, sigmas: &mut Vec<f64>) {
    if let Some(s) = sweep.seed {
        *seed = s;
    }
    if let Some(r) = sweep.replicates {
        *replicates = r;
    }
    if let Some(s) = &sweep.sigmas {
        *sigmas = s.clone();
    }
}

fn sweep_to_files<F>(sweep: &SweepArgs, run: F) -> Result<()>
where
    F: FnOnce(&mut dyn FnMut(&profilematch::theory::ExperimentRecord) -> profilematch::Result<()>) -> profilematch::Result<()>,
{
    let file = std::fs::File::create(&sweep.out).map_err(Error::from)?;
    let mut writer = ExperimentWriter::new(std::io::BufWriter::new(file))?;
    let mut records = Vec::new();
    run(&mut |r| {
        writer.write(r)?;
        records.push(r.clone());
        Ok(())
    })?;
    let rows = summarize(&records);
    let summary = sweep.summary.clone().unwrap_or_else(|| sweep.out.with_extension("summary.json"));
    io::write_summary(&summary, &rows)?;
    for row in &rows {
        println!(
            "{} sigma={} replicates={} recovery={} accuracy={}",
            row.method.as_str(),
            io::fmt_real(row.sigma),
            row.replicates,
            io::fmt_real(row.recovery_frequency),
            io::fmt_real(row.accuracy_mean)
        );
    }
    Ok(())
}
