//! Command-line surface tying the pipeline into reproducible runs.
//!
//! Every subcommand takes a manifest and derives all randomness from its
//! single seed. Exit codes: 0 success, 1 numerical or convergence failure,
//! 2 input or validation error. Outputs land in the manifest's output
//! directory and carry the standard version-and-config comment header.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::estimator::{build_dictionary, estimate, SolverOptions};
use crate::evaluation::{
    confidence_band, loocv, simulate_aggregate, SyntheticConfig, TrueDistribution,
};
use crate::gof::ks2d2s;
use crate::io::{
    read_episode_csv, read_measure_csv, read_samples_csv, write_band_csv, write_cdf_surface_csv,
    write_episode_csv, write_estimate_metadata, write_kstest_report, write_loocv_csv,
    write_measure_csv, write_samples_csv, Manifest,
};
use crate::measures::DiscreteMeasure;
use crate::pde_forward::{assemble, discretize, simulate, Episode, TacSeries};
use crate::sampler::{metropolis_sample, refine_density, McmcConfig, SampleSet};

#[derive(Parser)]
#[command(
    name = "tacmix",
    version,
    about = "Nonparametric estimation of a random PDE parameter distribution from aggregate input/output series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate aggregate measured outputs for the manifest's episode inputs
    Simulate(SimulateArgs),
    /// Estimate the parameter distribution from the manifest's dataset
    Estimate(EstimateArgs),
    /// Draw Metropolis samples from a refined estimated distribution
    Sample(SampleArgs),
    /// Two-sample two-dimensional Kolmogorov-Smirnov test
    Kstest(KstestArgs),
    /// Leave-one-out cross-validation of the estimation pipeline
    Loocv(LoocvArgs),
    /// Simultaneous confidence band of sampled output paths
    Band(BandArgs),
    /// Emit plot-ready CSV files
    Plotdata(PlotdataArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Run manifest (key=value file)
    manifest: PathBuf,
    /// True distribution: independent Beta(ALPHA, BETA) on each axis
    #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"],
          conflicts_with = "node", required_unless_present = "node")]
    beta: Vec<f64>,
    /// True distribution: point mass at grid node (I1, I2)
    #[arg(long, num_args = 2, value_names = ["I1", "I2"],
          conflicts_with = "beta", required_unless_present = "beta")]
    node: Vec<usize>,
    /// Parameter draws averaged into each output
    #[arg(long, default_value_t = 100)]
    paths: usize,
    /// Measurement noise standard deviation
    #[arg(long, default_value_t = 1e-3)]
    noise: f64,
}

#[derive(Args)]
struct EstimateArgs {
    manifest: PathBuf,
    /// Exit 0 even when the solver hit its iteration cap
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Args)]
struct SampleArgs {
    manifest: PathBuf,
    /// Measure CSV to sample from (default: <output_dir>/measure.csv)
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Retained samples
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// CDF refinement factor before sampling
    #[arg(long, default_value_t = 4)]
    refine: usize,
    /// Chain states per retained sample
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Discarded warm-up states
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
}

#[derive(Args)]
struct KstestArgs {
    manifest: PathBuf,
    /// First `q1,q2` sample file
    sample1: PathBuf,
    /// Second `q1,q2` sample file
    sample2: PathBuf,
}

#[derive(Args)]
struct LoocvArgs {
    manifest: PathBuf,
    /// Parameter draws per fold
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Extra complexity rungs as comma-separated m1xm2xN triples,
    /// overriding the manifest grid (e.g. 2x2x2,4x4x4)
    #[arg(long)]
    ladder: Option<String>,
}

#[derive(Args)]
struct BandArgs {
    manifest: PathBuf,
    /// Parameter sample file simulated on the episode input
    #[arg(long)]
    samples: PathBuf,
    /// Episode input file (default: first manifest episode)
    #[arg(long)]
    episode: Option<PathBuf>,
    /// Overall band level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    /// CDF surface `q1,q2,F` of a measure
    Cdf,
    /// Two-dimensional sample histogram `q1,q2,count`
    Hist,
    /// Confidence band `t,mean,lo,hi` of sampled paths
    Band,
}

#[derive(Args)]
struct PlotdataArgs {
    manifest: PathBuf,
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// Measure CSV (cdf kind; default: <output_dir>/measure.csv)
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Sample CSV (hist and band kinds)
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Histogram bins per axis
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Episode input file for the band kind (default: first manifest episode)
    #[arg(long)]
    episode: Option<PathBuf>,
    /// Band level for the band kind
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

/// Parses arguments and runs one command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Kstest(a) => cmd_kstest(&a),
        Command::Loocv(a) => cmd_loocv(&a),
        Command::Band(a) => cmd_band(&a),
        Command::Plotdata(a) => cmd_plotdata(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            match e {
                Error::Numerical(_) => 1,
                _ => 2,
            }
        }
    }
}

fn prepare(manifest_path: &Path) -> Result<Manifest> {
    let manifest = Manifest::parse(manifest_path)?;
    fs::create_dir_all(manifest.output_dir())?;
    Ok(manifest)
}

fn out_file(manifest: &Manifest, name: &str) -> PathBuf {
    manifest.output_dir().join(name)
}

fn default_measure_path(manifest: &Manifest, given: &Option<PathBuf>) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| out_file(manifest, "measure.csv"))
}

fn echo_with(manifest: &Manifest, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut echo = manifest.echo();
    echo.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    echo
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let episodes = manifest.load_episodes()?;
    let (true_dist, dist_echo) = if !args.beta.is_empty() {
        let (alpha, beta) = (args.beta[0], args.beta[1]);
        (
            TrueDistribution::BetaProduct { alpha, beta },
            format!("beta({alpha},{beta})"),
        )
    } else {
        let grid = manifest.grid()?;
        let (i1, i2) = (args.node[0], args.node[1]);
        if i1 >= manifest.m1 || i2 >= manifest.m2 {
            return Err(Error::Config(format!(
                "node ({i1},{i2}) is outside the {}x{} grid",
                manifest.m1, manifest.m2
            )));
        }
        let node = grid.index(i1, i2);
        (
            TrueDistribution::Discrete(DiscreteMeasure::point_mass(grid, node)?),
            format!("point_mass({i1},{i2})"),
        )
    };
    let cfg = SyntheticConfig {
        true_dist,
        path_count: args.paths,
        noise_std: args.noise,
        seed: manifest.seed,
    };
    let dataset = simulate_aggregate(&episodes, &cfg, manifest.n_intervals)?;
    let echo = echo_with(
        &manifest,
        &[
            ("true_dist", dist_echo),
            ("paths", args.paths.to_string()),
            ("noise", args.noise.to_string()),
        ],
    );
    for ep in dataset.episodes() {
        let path = out_file(&manifest, &format!("{}.csv", ep.id()));
        write_episode_csv(&path, ep, "simulate", &echo)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let dataset = manifest.load_dataset()?;
    let grid = manifest.grid()?;
    let dict = build_dictionary(&grid, &dataset, manifest.n_intervals)?;
    let result = estimate(&dict, &dataset, manifest.reg, SolverOptions::default())?;

    let echo = echo_with(&manifest, &[]);
    let measure_path = out_file(&manifest, "measure.csv");
    write_measure_csv(&measure_path, &result.measure, "estimate", &echo)?;
    let meta_path = out_file(&manifest, "estimate.meta");
    write_estimate_metadata(
        &meta_path,
        &result,
        manifest.reg,
        manifest.n_intervals,
        manifest.seed,
        "estimate",
        &echo,
    )?;
    println!("wrote {}", measure_path.display());
    println!("wrote {}", meta_path.display());
    println!(
        "objective={} iterations={} converged={}",
        result.objective, result.iterations, result.converged
    );
    if !result.converged {
        eprintln!(
            "estimate stopped at the {}-iteration cap before reaching tolerance",
            result.iterations
        );
        if !args.allow_nonconverged {
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_sample(args: &SampleArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let measure_path = default_measure_path(&manifest, &args.measure);
    let measure = read_measure_csv(&measure_path)?;
    let refined = refine_density(&measure, args.refine)?;
    if refined.used_bilinear_fallback() {
        eprintln!("grid too coarse for spline refinement; used bilinear interpolation");
    }
    if args.thin == 0 {
        return Err(Error::Config("thin must be at least 1".into()));
    }
    let chain = McmcConfig::new(
        args.burn_in + args.count * args.thin,
        args.burn_in,
        manifest.seed,
    )?;
    let (raw, report) = metropolis_sample(&refined, &chain)?;
    let samples = raw.thinned(args.thin)?;
    let echo = echo_with(
        &manifest,
        &[
            ("measure", measure_path.display().to_string()),
            ("count", args.count.to_string()),
            ("refine", args.refine.to_string()),
            ("thin", args.thin.to_string()),
            ("burn_in", args.burn_in.to_string()),
        ],
    );
    let path = out_file(&manifest, "samples.csv");
    write_samples_csv(&path, &samples, "sample", &echo)?;
    println!("wrote {}", path.display());
    println!(
        "acceptance_rate={} retained={}",
        report.acceptance_rate,
        samples.len()
    );
    Ok(0)
}

fn cmd_kstest(args: &KstestArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let sample1 = read_samples_csv(&args.sample1)?;
    let sample2 = read_samples_csv(&args.sample2)?;
    let result = ks2d2s(&sample1, &sample2)?;
    let echo = echo_with(
        &manifest,
        &[
            ("sample1", args.sample1.display().to_string()),
            ("sample2", args.sample2.display().to_string()),
        ],
    );
    let path = out_file(&manifest, "kstest.txt");
    write_kstest_report(&path, &result, "kstest", &echo)?;
    println!("wrote {}", path.display());
    println!("d_stat={}", result.d_stat);
    println!("n_hat={}", result.n_hat);
    println!("z_n={}", result.z_n);
    println!("z_inf={}", result.z_inf);
    println!("p_value={}", result.p_value);
    Ok(0)
}

fn parse_ladder(text: &str) -> Result<Vec<(usize, usize, usize)>> {
    text.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split('x').collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::Config(format!("ladder rung `{item}` must be m1xm2xN counts"))
                })
            };
            match parts[..] {
                [a, b, c] => Ok((parse(a)?, parse(b)?, parse(c)?)),
                _ => Err(Error::Config(format!(
                    "ladder rung `{item}` must be m1xm2xN counts"
                ))),
            }
        })
        .collect()
}

fn cmd_loocv(args: &LoocvArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let dataset = manifest.load_dataset()?;
    let rungs = match &args.ladder {
        Some(text) => parse_ladder(text)?,
        None => vec![(manifest.m1, manifest.m2, manifest.n_intervals)],
    };
    let mut reports = Vec::with_capacity(rungs.len());
    for (m1, m2, n_intervals) in rungs {
        let grid = crate::measures::make_uniform_grid(&manifest.domain, m1, m2)?;
        reports.push(loocv(
            &dataset,
            &grid,
            n_intervals,
            manifest.reg,
            args.samples,
            manifest.seed,
        )?);
    }
    let echo = echo_with(
        &manifest,
        &[
            ("samples", args.samples.to_string()),
            (
                "ladder",
                args.ladder.clone().unwrap_or_else(|| "manifest".into()),
            ),
        ],
    );
    let path = out_file(&manifest, "loocv.csv");
    write_loocv_csv(&path, &reports, "loocv", &echo)?;
    println!("wrote {}", path.display());
    for report in &reports {
        println!(
            "M={} N={} nrmse_mean={}",
            report.node_count,
            report.n_intervals,
            report
                .nrmse_mean
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        );
    }
    Ok(0)
}

fn simulate_sampled_paths(
    manifest: &Manifest,
    samples: &SampleSet,
    episode: &Episode,
) -> Result<Vec<TacSeries>> {
    let input_only = Episode::new(
        episode.id(),
        episode.tau(),
        episode.input().to_vec(),
        None,
    )?;
    samples
        .points()
        .iter()
        .map(|q| {
            let sys = discretize(&assemble(*q, manifest.n_intervals)?, episode.tau())?;
            simulate(&sys, &input_only)
        })
        .collect()
}

fn band_echo_and_csv(
    manifest: &Manifest,
    samples_path: &Path,
    episode_path: Option<&PathBuf>,
    alpha: f64,
    command: &str,
) -> Result<PathBuf> {
    let samples = read_samples_csv(samples_path)?;
    let episode = match episode_path {
        Some(p) => read_episode_csv(p)?,
        None => {
            let first = manifest.episode_paths().first().ok_or_else(|| {
                Error::Config("manifest lists no episodes to take the input from".into())
            })?;
            read_episode_csv(first)?
        }
    };
    let paths = simulate_sampled_paths(manifest, &samples, &episode)?;
    let band = confidence_band(&paths, alpha)?;
    let echo = echo_with(
        manifest,
        &[
            ("samples", samples_path.display().to_string()),
            ("episode", episode.id().to_string()),
            ("alpha", alpha.to_string()),
        ],
    );
    let path = out_file(manifest, "band.csv");
    write_band_csv(&path, &band, command, &echo)?;
    Ok(path)
}

fn cmd_band(args: &BandArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let path = band_echo_and_csv(
        &manifest,
        &args.samples,
        args.episode.as_ref(),
        args.alpha,
        "band",
    )?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn histogram_rows(
    samples: &SampleSet,
    domain: &crate::measures::ParameterDomain,
    bins: usize,
) -> Result<Vec<(f64, f64, u64)>> {
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    let mut counts = vec![0u64; bins * bins];
    let span1 = domain.q1_max() - domain.q1_min();
    let span2 = domain.q2_max() - domain.q2_min();
    let locate = |v: f64, lo: f64, span: f64| -> usize {
        let t = ((v - lo) / span * bins as f64).floor();
        (t.max(0.0) as usize).min(bins - 1)
    };
    for p in samples.points() {
        let b1 = locate(p.q1, domain.q1_min(), span1);
        let b2 = locate(p.q2, domain.q2_min(), span2);
        counts[b1 * bins + b2] += 1;
    }
    let mut rows = Vec::with_capacity(bins * bins);
    for b1 in 0..bins {
        for b2 in 0..bins {
            let c1 = domain.q1_min() + (b1 as f64 + 0.5) / bins as f64 * span1;
            let c2 = domain.q2_min() + (b2 as f64 + 0.5) / bins as f64 * span2;
            rows.push((c1, c2, counts[b1 * bins + b2]));
        }
    }
    Ok(rows)
}

fn cmd_plotdata(args: &PlotdataArgs) -> Result<i32> {
    let manifest = prepare(&args.manifest)?;
    let path = match args.kind {
        PlotKind::Cdf => {
            let measure_path = default_measure_path(&manifest, &args.measure);
            let measure = read_measure_csv(&measure_path)?;
            let echo = echo_with(
                &manifest,
                &[("measure", measure_path.display().to_string())],
            );
            let path = out_file(&manifest, "cdf_surface.csv");
            write_cdf_surface_csv(&path, &measure, "plotdata", &echo)?;
            path
        }
        PlotKind::Hist => {
            let samples_path = args.samples.as_ref().ok_or_else(|| {
                Error::Config("plotdata --kind hist needs --samples".into())
            })?;
            let samples = read_samples_csv(samples_path)?;
            let rows = histogram_rows(&samples, &manifest.domain, args.bins)?;
            let echo = echo_with(
                &manifest,
                &[
                    ("samples", samples_path.display().to_string()),
                    ("bins", args.bins.to_string()),
                ],
            );
            let mut s = crate::io::header("plotdata", &echo);
            s.push_str("q1,q2,count\n");
            for (c1, c2, count) in rows {
                s.push_str(&format!("{c1},{c2},{count}\n"));
            }
            let path = out_file(&manifest, "histogram.csv");
            fs::write(&path, s)?;
            path
        }
        PlotKind::Band => {
            let samples_path = args.samples.as_ref().ok_or_else(|| {
                Error::Config("plotdata --kind band needs --samples".into())
            })?;
            band_echo_and_csv(
                &manifest,
                samples_path,
                args.episode.as_ref(),
                args.alpha,
                "plotdata",
            )?
        }
    };
    println!("wrote {}", path.display());
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_parses_triples_and_rejects_malformed_items() {
        assert_eq!(
            parse_ladder("2x2x2,16x4x8").unwrap(),
            vec![(2, 2, 2), (16, 4, 8)]
        );
        assert!(parse_ladder("4x4").is_err());
        assert!(parse_ladder("axbxc").is_err());
        assert!(parse_ladder("2x2x2x2").is_err());
    }

    #[test]
    fn histogram_bins_cover_the_domain_and_clamp_edges() {
        let domain = crate::measures::ParameterDomain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let pts = vec![
            crate::measures::ParameterPoint::new(0.0, 0.0).unwrap(),
            crate::measures::ParameterPoint::new(1.0, 1.0).unwrap(),
            crate::measures::ParameterPoint::new(0.49, 0.51).unwrap(),
        ];
        let samples = SampleSet::from_points(pts);
        let rows = histogram_rows(&samples, &domain, 2).unwrap();
        assert_eq!(rows.len(), 4);
        let total: u64 = rows.iter().map(|r| r.2).sum();
        assert_eq!(total, 3);
        assert_eq!(rows[0], (0.25, 0.25, 1));
        assert_eq!(rows[1], (0.25, 0.75, 1));
        assert_eq!(rows[3], (0.75, 0.75, 1));
        assert!(histogram_rows(&samples, &domain, 0).is_err());
    }

    #[test]
    fn unknown_arguments_exit_with_the_validation_code() {
        assert_eq!(run(["tacmix", "bogus-subcommand"]), 2);
        assert_eq!(run(["tacmix", "--help"]), 0);
        assert_eq!(run(["tacmix", "--version"]), 0);
    }
}
