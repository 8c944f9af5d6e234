//! Command-line driver for the diffusion-polynomial laboratory.
//!
//! Exit code 0 means every verdict of the invoked command passed; 1 means at
//! least one failed; 2 signals an execution error.

use clap::{Args, Parser, Subcommand};
use diffpoly::analysis::{
    self, default_degrees, default_kernel_distances, emit_report, estimates_to_csv,
    kernel_residuals_to_csv, verdict_table, OutputFormat, SuiteOutput, SweepConfig,
};
use diffpoly::pointsets::{greedy_maximal_separated, mz_weights_with_delta0, DEFAULT_DELTA0};
use diffpoly::spectrum::SpectralSpace;
use diffpoly::{Error, Exponent, ManifoldModel, Result};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "diffpoly",
    about = "Random diffusion polynomials on model manifolds: spectra, kernels, point sets, and norm-ratio experiments",
    version
)]
struct Cli {
    /// Key-value config file (lines of `key = value`, same keys as the
    /// flags); explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct CommonArgs {
    /// Manifold: t1, t2, t3, or s2.
    #[arg(long)]
    manifold: Option<String>,
    /// Comma-separated degree sweep, e.g. 16,32,64.
    #[arg(long)]
    ns: Option<String>,
    /// Single degree (overrides --ns with a one-point sweep).
    #[arg(long)]
    n: Option<f64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed; all substreams derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Grid density per unit frequency for oversampled norms.
    #[arg(long)]
    oversample: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension ratio N/n^d over a degree sweep.
    Weyl(CommonArgs),
    /// Kernel leading-order remainder at fixed geodesic distances.
    KernelAsym {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated geodesic distances to probe.
        #[arg(long)]
        distances: Option<String>,
    },
    /// Scaled Christoffel function n^d·Λ(x): homogeneity and sweep band.
    Christoffel(CommonArgs),
    /// Build a maximal ε-separated set and export it as CSV.
    Pointset {
        #[command(flatten)]
        common: CommonArgs,
        /// Separation ε.
        #[arg(long)]
        eps: f64,
        /// Attach Marcinkiewicz-Zygmund weights for degree --n.
        #[arg(long, default_value_t = false)]
        mz: bool,
    },
    /// Average Nikolskii factor sweep for one (p, q) pair.
    Average {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
    },
    /// Worst Nikolskii factor sweep for one (p, q) pair.
    Worst {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
    },
    /// Norm moments E‖P‖_q^s, or inverse sup moments with --neg-r.
    Moments {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        q: Option<String>,
        /// Moment power s ≥ 1.
        #[arg(long)]
        s: Option<f64>,
        /// Inverse sup-moment order r (runs the bounded-product sweep).
        #[arg(long)]
        neg_r: Option<f64>,
    },
    /// Normalized point-evaluation maxima and small-ball probabilities.
    Smallball(CommonArgs),
    /// Full default suite; exit code 0 iff every verdict passes.
    Suite {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials for the small-ball check (default 100000).
        #[arg(long)]
        smallball_trials: Option<u64>,
    },
}

fn load_config(path: &PathBuf) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: expected `key = value`, got {line:?}",
                path.display(),
                idx + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Resolved {
    manifold: ManifoldModel,
    ns: Vec<f64>,
    trials: u64,
    seed: u64,
    out: Option<PathBuf>,
    format: OutputFormat,
    oversample: f64,
}

fn parse_ns(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad degree {t:?}")))
        })
        .collect()
}

fn resolve(common: &CommonArgs, cfg: &HashMap<String, String>) -> Result<Resolved> {
    let manifold_name = common
        .manifold
        .clone()
        .or_else(|| cfg.get("manifold").cloned())
        .unwrap_or_else(|| "t1".to_string());
    let manifold = ManifoldModel::parse(&manifold_name)?;
    let ns = if let Some(n) = common.n.or_else(|| cfg.get("n").and_then(|v| v.parse().ok())) {
        vec![n]
    } else if let Some(text) = common.ns.clone().or_else(|| cfg.get("ns").cloned()) {
        parse_ns(&text)?
    } else {
        default_degrees(manifold)
    };
    let trials = common
        .trials
        .or_else(|| cfg.get("trials").and_then(|v| v.parse().ok()))
        .unwrap_or(2000);
    let seed = common.seed.or_else(|| cfg.get("seed").and_then(|v| v.parse().ok())).unwrap_or(1);
    let out = common.out.clone().or_else(|| cfg.get("out").map(PathBuf::from));
    let format = OutputFormat::parse(
        &common
            .format
            .clone()
            .or_else(|| cfg.get("format").cloned())
            .unwrap_or_else(|| "csv".to_string()),
    )?;
    let oversample = common
        .oversample
        .or_else(|| cfg.get("oversample").and_then(|v| v.parse().ok()))
        .unwrap_or(8.0);
    Ok(Resolved { manifold, ns, trials, seed, out, format, oversample })
}

fn sweep_config(r: &Resolved) -> SweepConfig {
    let mut cfg = SweepConfig::new(r.manifold);
    cfg.ns = r.ns.clone();
    cfg.trials = r.trials;
    cfg.master_seed = r.seed;
    cfg.oversample = r.oversample;
    cfg
}

fn finish(out: SuiteOutput, r: &Resolved) -> Result<i32> {
    if !out.rows.is_empty() {
        print!("{}", estimates_to_csv(&out.rows));
    }
    if !out.kernel_residuals.is_empty() {
        print!("{}", kernel_residuals_to_csv(&out.kernel_residuals));
    }
    print!("{}", verdict_table(&out.verdicts));
    if let Some(dir) = &r.out {
        let written = emit_report(&out, dir, r.format)?;
        for path in written {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(if out.all_pass() { 0 } else { 1 })
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => HashMap::new(),
    };
    match cli.command {
        Command::Weyl(common) => {
            let r = resolve(&common, &cfg)?;
            finish(analysis::run_weyl_suite(r.manifold, &r.ns)?, &r)
        }
        Command::KernelAsym { common, distances } => {
            let r = resolve(&common, &cfg)?;
            let dists = match distances.or_else(|| cfg.get("distances").cloned()) {
                Some(text) => parse_ns(&text)?,
                None => default_kernel_distances(r.manifold),
            };
            finish(analysis::run_kernel_asym_suite(r.manifold, &r.ns, &dists)?, &r)
        }
        Command::Christoffel(common) => {
            let r = resolve(&common, &cfg)?;
            finish(analysis::run_christoffel_suite(r.manifold, &r.ns, r.seed)?, &r)
        }
        Command::Pointset { common, eps, mz } => {
            let r = resolve(&common, &cfg)?;
            let set = greedy_maximal_separated(&r.manifold, eps, r.seed)?;
            eprintln!(
                "{}: {} points, separation {}, covering ≤ {:.6}",
                r.manifold.name(),
                set.len(),
                set.separation(),
                set.covering_radius_bound()
            );
            let csv = if mz {
                let n = r.ns.last().copied().unwrap_or(1.0);
                let space = Arc::new(SpectralSpace::build(r.manifold, n)?);
                let rule = mz_weights_with_delta0(&set, &space, DEFAULT_DELTA0)?;
                let mut buf = Vec::new();
                rule.write_csv(&mut buf)?;
                String::from_utf8(buf).expect("csv is utf-8")
            } else {
                let mut buf = Vec::new();
                set.write_csv(&mut buf, None)?;
                String::from_utf8(buf).expect("csv is utf-8")
            };
            match &r.out {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        if !parent.as_os_str().is_empty() {
                            std::fs::create_dir_all(parent)?;
                        }
                    }
                    std::fs::write(path, csv)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Average { common, p, q } => {
            let r = resolve(&common, &cfg)?;
            let mut cfg = sweep_config(&r);
            cfg.pairs = vec![(Exponent::parse(&p)?, Exponent::parse(&q)?)];
            finish(analysis::run_theorem11_suite(&cfg)?, &r)
        }
        Command::Worst { common, p, q } => {
            let r = resolve(&common, &cfg)?;
            let mut cfg = sweep_config(&r);
            cfg.pairs = vec![(Exponent::parse(&p)?, Exponent::parse(&q)?)];
            finish(analysis::run_worst_suite(&cfg)?, &r)
        }
        Command::Moments { common, q, s, neg_r } => {
            let r = resolve(&common, &cfg)?;
            let sweep = sweep_config(&r);
            let out = if let Some(order) = neg_r {
                analysis::run_negative_moment_suite(&sweep, order)?
            } else {
                let q = Exponent::parse(&q.or_else(|| cfg.get("q").cloned()).ok_or_else(
                    || Error::InvalidArgument("moments needs --q or --neg-r".to_string()),
                )?)?;
                analysis::run_custom_moment_sweep(&sweep, q, s.unwrap_or(1.0))?
            };
            finish(out, &r)
        }
        Command::Smallball(common) => {
            let r = resolve(&common, &cfg)?;
            let n = r.ns.last().copied().unwrap_or(64.0);
            let out = analysis::run_smallball_suite(r.manifold, n, r.trials, r.seed)?;
            if let Some(report) = &out.smallball {
                println!("t,empirical,bound,pass");
                for pt in &report.small_ball {
                    println!("{},{},{},{}", pt.t, pt.empirical, pt.bound, pt.pass);
                }
            }
            finish(out, &r)
        }
        Command::Suite { common, smallball_trials } => {
            let r = resolve(&common, &cfg)?;
            let sb_trials = smallball_trials
                .or_else(|| cfg.get("smallball_trials").and_then(|v| v.parse().ok()))
                .unwrap_or(100_000);
            let out = analysis::run_full_suite(r.seed, r.trials, sb_trials)?;
            finish(out, &r)
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(2);
        }
    }
}
