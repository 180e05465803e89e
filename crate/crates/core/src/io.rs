//! File formats: episode/measure/sample CSVs, key=value reports, manifests.
//!
//! Every emitted file starts with `#` comment lines carrying the tool
//! version and the configuration that produced it, and never a timestamp,
//! so identical runs produce byte-identical files. Numbers are written in
//! shortest round-trip form; files written here re-parse to bit-identical
//! values.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::{AggregateDataset, EstimateResult, RegularizationWeights};
use crate::evaluation::{ConfidenceBand, LoocvReport};
use crate::gof::KsResult;
use crate::measures::{
    make_uniform_grid, DiscreteMeasure, ParameterDomain, ParameterGrid, ParameterPoint,
};
use crate::pde_forward::{tau_consistent, Episode};
use crate::sampler::SampleSet;

pub const TOOL_NAME: &str = "tacmix";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative slack allowed between consecutive time steps of an episode file.
const TIME_GRID_REL_TOL: f64 = 1e-9;

fn open_error(path: &Path, e: std::io::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot open: {e}"),
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Comment block put on top of every output file.
pub(crate) fn header(command: &str, echo: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {TOOL_NAME} {TOOL_VERSION}");
    let _ = writeln!(s, "# command={command}");
    for (k, v) in echo {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn parse_float(path: &Path, line: usize, field: &str, text: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("field {field}: `{text}` is not a number")))
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Reads one drinking episode from a `t,u[,y]` CSV. The episode id is the
/// file stem. The time column must start at zero and advance on a uniform
/// grid; the sample interval is inferred from the first step.
pub fn read_episode_csv(path: &Path) -> Result<Episode> {
    let text = fs::read_to_string(path).map_err(|e| open_error(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());

    let mut rdr = csv_reader(&text);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let has_output = match headers.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["t", "u"] => false,
        ["t", "u", "y"] => true,
        _ => {
            return Err(parse_error(
                path,
                1,
                format!("expected header `t,u` or `t,u,y`, got `{}`", headers.join(",")),
            ))
        }
    };

    let mut times = Vec::new();
    let mut input = Vec::new();
    let mut output = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, got {}", headers.len(), record.len()),
            ));
        }
        times.push(parse_float(path, line, "t", &record[0])?);
        input.push(parse_float(path, line, "u", &record[1])?);
        if has_output {
            output.push(parse_float(path, line, "y", &record[2])?);
        }
        lines.push(line);
    }
    if times.len() < 2 {
        return Err(parse_error(
            path,
            0,
            "need at least 2 samples to infer the sample interval",
        ));
    }
    let tau = times[1] - times[0];
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(parse_error(
            path,
            lines[1],
            format!("time must increase; first step is {tau}"),
        ));
    }
    if times[0].abs() > TIME_GRID_REL_TOL * tau {
        return Err(parse_error(
            path,
            lines[0],
            format!("time must start at 0, got {}", times[0]),
        ));
    }
    for k in 1..times.len() {
        let step = times[k] - times[k - 1];
        if (step - tau).abs() > TIME_GRID_REL_TOL * tau {
            return Err(parse_error(
                path,
                lines[k],
                format!("non-uniform time grid: step {step} differs from {tau}"),
            ));
        }
    }
    Episode::new(id, tau, input, if has_output { Some(output) } else { None })
}

/// Writes an episode as `t,u[,y]` rows under the standard comment header.
pub fn write_episode_csv(
    path: &Path,
    episode: &Episode,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let mut s = header(command, echo);
    let tau = episode.tau();
    if let Some(y) = episode.output() {
        s.push_str("t,u,y\n");
        for (k, (u, yv)) in episode.input().iter().zip(y).enumerate() {
            let _ = writeln!(s, "{},{},{}", k as f64 * tau, u, yv);
        }
    } else {
        s.push_str("t,u\n");
        for (k, u) in episode.input().iter().enumerate() {
            let _ = writeln!(s, "{},{}", k as f64 * tau, u);
        }
    }
    write_text(path, &s)
}

/// Writes a discrete measure as `q1,q2,p` rows in node order, plus a
/// `# domain=` comment so the exact grid can be rebuilt even when one axis
/// has a single node.
pub fn write_measure_csv(
    path: &Path,
    measure: &DiscreteMeasure,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let grid = measure.grid();
    let d = grid.domain();
    let mut all_echo = echo.to_vec();
    all_echo.push((
        "domain".into(),
        format!("{},{},{},{}", d.q1_min(), d.q1_max(), d.q2_min(), d.q2_max()),
    ));
    let mut s = header(command, &all_echo);
    s.push_str("q1,q2,p\n");
    for j in 0..grid.len() {
        let q = grid.node(j);
        let _ = writeln!(s, "{},{},{}", q.q1, q.q2, measure.weights()[j]);
    }
    write_text(path, &s)
}

fn scan_domain_comment(path: &Path, text: &str) -> Result<Option<ParameterDomain>> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let Some(rest) = line.strip_prefix('#') else {
            continue;
        };
        let Some(value) = rest.trim().strip_prefix("domain=") else {
            continue;
        };
        let parts: Vec<&str> = value.split(',').collect();
        if parts.len() != 4 {
            return Err(parse_error(path, idx + 1, "domain needs 4 comma-separated bounds"));
        }
        let mut b = [0.0; 4];
        for (slot, part) in b.iter_mut().zip(&parts) {
            *slot = parse_float(path, idx + 1, "domain", part.trim())?;
        }
        return Ok(Some(ParameterDomain::new(b[0], b[1], b[2], b[3])?));
    }
    Ok(None)
}

/// Reads a measure written by [`write_measure_csv`], reconstructing its
/// grid. Rows must be complete nodes of a rectangular grid in node order;
/// without a `# domain=` comment both axes need at least two coordinates.
pub fn read_measure_csv(path: &Path) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path).map_err(|e| open_error(path, e))?;
    let domain_hint = scan_domain_comment(path, &text)?;

    let mut rdr = csv_reader(&text);
    let headers = rdr.headers().map_err(|e| parse_error(path, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["q1", "q2", "p"] {
        return Err(parse_error(path, 1, "expected header `q1,q2,p`"));
    }
    let mut q1 = Vec::new();
    let mut q2 = Vec::new();
    let mut p = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(parse_error(path, line, "expected 3 fields"));
        }
        q1.push(parse_float(path, line, "q1", &record[0])?);
        q2.push(parse_float(path, line, "q2", &record[1])?);
        p.push(parse_float(path, line, "p", &record[2])?);
    }
    if p.is_empty() {
        return Err(parse_error(path, 0, "no measure rows"));
    }

    let m2 = q1.iter().take_while(|v| **v == q1[0]).count();
    if p.len() % m2 != 0 {
        return Err(parse_error(
            path,
            0,
            format!("{} rows do not tile a grid with {} q2 nodes", p.len(), m2),
        ));
    }
    let m1 = p.len() / m2;
    let domain = match domain_hint {
        Some(d) => d,
        None => {
            if m1 < 2 || m2 < 2 {
                return Err(parse_error(
                    path,
                    0,
                    "an axis with a single node needs a `# domain=` comment",
                ));
            }
            ParameterDomain::new(q1[0], q1[p.len() - 1], q2[0], q2[m2 - 1])?
        }
    };
    let grid = make_uniform_grid(&domain, m1, m2)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    for j in 0..p.len() {
        let node = grid.node(j);
        if !close(q1[j], node.q1) || !close(q2[j], node.q2) {
            return Err(parse_error(
                path,
                0,
                format!(
                    "row {j} coordinates ({},{}) do not lie on the uniform {m1}x{m2} grid",
                    q1[j], q2[j]
                ),
            ));
        }
    }
    DiscreteMeasure::new(grid, p)
}

/// Writes parameter samples as `q1,q2` rows.
pub fn write_samples_csv(
    path: &Path,
    samples: &SampleSet,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let mut s = header(command, echo);
    s.push_str("q1,q2\n");
    for pt in samples.points() {
        let _ = writeln!(s, "{},{}", pt.q1, pt.q2);
    }
    write_text(path, &s)
}

/// Reads a `q1,q2` sample file.
pub fn read_samples_csv(path: &Path) -> Result<SampleSet> {
    let text = fs::read_to_string(path).map_err(|e| open_error(path, e))?;
    let mut rdr = csv_reader(&text);
    let headers = rdr.headers().map_err(|e| parse_error(path, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["q1", "q2"] {
        return Err(parse_error(path, 1, "expected header `q1,q2`"));
    }
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(parse_error(path, line, "expected 2 fields"));
        }
        let q1 = parse_float(path, line, "q1", &record[0])?;
        let q2 = parse_float(path, line, "q2", &record[1])?;
        points.push(ParameterPoint::new(q1, q2)?);
    }
    Ok(SampleSet::from_points(points))
}

/// Writes cross-validation reports as `fold,episode_id,nrmse,seconds` rows.
/// Each report block is preceded by a comment echoing its complexity and
/// followed by a summary comment; a non-converged fold leaves its nrmse
/// field empty.
pub fn write_loocv_csv(
    path: &Path,
    reports: &[LoocvReport],
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let mut s = header(command, echo);
    s.push_str("fold,episode_id,nrmse,seconds\n");
    for report in reports {
        let _ = writeln!(
            s,
            "# complexity M={} N={} w1={} w2={} samples={} seed={}",
            report.node_count,
            report.n_intervals,
            report.w1,
            report.w2,
            report.sample_count,
            report.seed
        );
        for fold in &report.folds {
            let nrmse = fold.nrmse.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fold.fold,
                csv_field(&fold.episode_id),
                nrmse,
                fold.seconds
            );
        }
        let converged = report.folds.iter().filter(|f| f.converged).count();
        let mean = report
            .nrmse_mean
            .map(|v| v.to_string())
            .unwrap_or_else(|| "none".into());
        let _ = writeln!(
            s,
            "# nrmse_mean={mean} converged_folds={converged}/{}",
            report.folds.len()
        );
    }
    write_text(path, &s)
}

/// Writes a confidence band as `t,mean,lo,hi` rows.
pub fn write_band_csv(
    path: &Path,
    band: &ConfidenceBand,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let mut s = header(command, echo);
    s.push_str("t,mean,lo,hi\n");
    for k in 0..band.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            k as f64 * band.tau(),
            band.means()[k],
            band.lower(k),
            band.upper(k)
        );
    }
    write_text(path, &s)
}

/// Writes a two-sample KS result as key=value lines.
pub fn write_kstest_report(
    path: &Path,
    result: &KsResult,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let mut s = header(command, echo);
    let _ = writeln!(s, "d_stat={}", result.d_stat);
    let _ = writeln!(s, "n_hat={}", result.n_hat);
    let _ = writeln!(s, "z_n={}", result.z_n);
    let _ = writeln!(s, "z_inf={}", result.z_inf);
    let _ = writeln!(s, "p_value={}", result.p_value);
    write_text(path, &s)
}

/// Writes the estimate's sidecar metadata as key=value lines.
pub fn write_estimate_metadata(
    path: &Path,
    estimate: &EstimateResult,
    reg: RegularizationWeights,
    n_intervals: usize,
    seed: u64,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let mut s = header(command, echo);
    let _ = writeln!(s, "objective={}", estimate.objective);
    let _ = writeln!(s, "residual_norm={}", estimate.residual_norm);
    let _ = writeln!(s, "iterations={}", estimate.iterations);
    let _ = writeln!(s, "converged={}", estimate.converged);
    let _ = writeln!(s, "w1={}", reg.w1);
    let _ = writeln!(s, "w2={}", reg.w2);
    let _ = writeln!(s, "N={n_intervals}");
    let _ = writeln!(s, "M={}", estimate.measure.grid().len());
    let _ = writeln!(s, "seed={seed}");
    write_text(path, &s)
}

/// Writes the CDF surface of a measure as `q1,q2,F` rows in node order.
pub fn write_cdf_surface_csv(
    path: &Path,
    measure: &DiscreteMeasure,
    command: &str,
    echo: &[(String, String)],
) -> Result<()> {
    let grid = measure.grid();
    let cdf = measure.cdf();
    let mut s = header(command, echo);
    s.push_str("q1,q2,F\n");
    for j in 0..grid.len() {
        let q = grid.node(j);
        let (i1, i2) = grid.axis_indices(j);
        let _ = writeln!(s, "{},{},{}", q.q1, q.q2, cdf.value(i1, i2));
    }
    write_text(path, &s)
}

/// Run configuration: episode files, grid geometry, solver weights, seed.
///
/// Parsed from a flat key=value file; relative paths resolve against the
/// manifest's own directory so a manifest plus its data travel together.
#[derive(Debug, Clone)]
pub struct Manifest {
    episode_names: Vec<String>,
    episode_paths: Vec<PathBuf>,
    pub tau: f64,
    pub time_unit: String,
    pub domain: ParameterDomain,
    pub m1: usize,
    pub m2: usize,
    pub n_intervals: usize,
    pub reg: RegularizationWeights,
    pub seed: u64,
    output_name: String,
    output_path: PathBuf,
}

const MANIFEST_KEYS: [&str; 14] = [
    "episodes",
    "tau",
    "time_unit",
    "q1_min",
    "q1_max",
    "q2_min",
    "q2_max",
    "m1",
    "m2",
    "n_intervals",
    "w1",
    "w2",
    "seed",
    "output_dir",
];

impl Manifest {
    pub fn parse(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| open_error(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));

        let mut values: Vec<Option<(usize, String)>> = vec![None; MANIFEST_KEYS.len()];
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_error(path, lineno, "expected key=value"));
            };
            let key = key.trim();
            let value = value.trim();
            let Some(slot) = MANIFEST_KEYS.iter().position(|k| *k == key) else {
                return Err(parse_error(path, lineno, format!("unknown key `{key}`")));
            };
            if values[slot].is_some() {
                return Err(parse_error(path, lineno, format!("duplicate key `{key}`")));
            }
            values[slot] = Some((lineno, value.to_string()));
        }
        let missing: Vec<&str> = MANIFEST_KEYS
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_none())
            .map(|(k, _)| *k)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "manifest {} is missing keys: {}",
                path.display(),
                missing.join(", ")
            )));
        }

        let get = |name: &str| -> (usize, String) {
            let slot = MANIFEST_KEYS.iter().position(|k| *k == name).unwrap();
            values[slot].clone().unwrap()
        };
        let float = |name: &str| -> Result<f64> {
            let (line, v) = get(name);
            parse_float(path, line, name, &v)
        };
        let integer = |name: &str| -> Result<u64> {
            let (line, v) = get(name);
            v.parse::<u64>()
                .map_err(|_| parse_error(path, line, format!("field {name}: `{v}` is not a count")))
        };

        let (episodes_line, episodes_raw) = get("episodes");
        let episode_names: Vec<String> = episodes_raw
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        if episode_names.iter().any(String::is_empty) {
            return Err(parse_error(path, episodes_line, "empty episode path in list"));
        }
        let episode_paths = episode_names.iter().map(|n| base.join(n)).collect();

        let domain = ParameterDomain::new(
            float("q1_min")?,
            float("q1_max")?,
            float("q2_min")?,
            float("q2_max")?,
        )?;
        let tau = float("tau")?;
        if !(tau > 0.0) || !tau.is_finite() {
            let (line, _) = get("tau");
            return Err(parse_error(path, line, format!("tau must be positive, got {tau}")));
        }
        let reg = RegularizationWeights::new(float("w1")?, float("w2")?)?;
        let (_, output_name) = get("output_dir");
        let output_path = base.join(&output_name);

        Ok(Manifest {
            episode_names,
            episode_paths,
            tau,
            time_unit: get("time_unit").1,
            domain,
            m1: integer("m1")? as usize,
            m2: integer("m2")? as usize,
            n_intervals: integer("n_intervals")? as usize,
            reg,
            seed: integer("seed")?,
            output_name,
            output_path,
        })
    }

    /// Episode file paths resolved against the manifest directory.
    pub fn episode_paths(&self) -> &[PathBuf] {
        &self.episode_paths
    }

    /// Output directory resolved against the manifest directory.
    pub fn output_dir(&self) -> &Path {
        &self.output_path
    }

    pub fn grid(&self) -> Result<ParameterGrid> {
        make_uniform_grid(&self.domain, self.m1, self.m2)
    }

    /// Reads every episode file, checking each against the manifest tau.
    pub fn load_episodes(&self) -> Result<Vec<Episode>> {
        self.episode_paths
            .iter()
            .map(|p| {
                let ep = read_episode_csv(p)?;
                if !tau_consistent(ep.tau(), self.tau) {
                    return Err(Error::Config(format!(
                        "episode {} has tau={} but the manifest declares tau={}",
                        p.display(),
                        ep.tau(),
                        self.tau
                    )));
                }
                Ok(ep)
            })
            .collect()
    }

    /// Reads the full measured dataset (every episode must carry outputs).
    pub fn load_dataset(&self) -> Result<AggregateDataset> {
        AggregateDataset::new(self.load_episodes()?)
    }

    /// The manifest restated as key=value pairs, with paths exactly as
    /// written in the file, for output headers.
    pub fn echo(&self) -> Vec<(String, String)> {
        let d = &self.domain;
        vec![
            ("episodes".into(), self.episode_names.join(",")),
            ("tau".into(), self.tau.to_string()),
            ("time_unit".into(), self.time_unit.clone()),
            ("q1_min".into(), d.q1_min().to_string()),
            ("q1_max".into(), d.q1_max().to_string()),
            ("q2_min".into(), d.q2_min().to_string()),
            ("q2_max".into(), d.q2_max().to_string()),
            ("m1".into(), self.m1.to_string()),
            ("m2".into(), self.m2.to_string()),
            ("n_intervals".into(), self.n_intervals.to_string()),
            ("w1".into(), self.reg.w1.to_string()),
            ("w2".into(), self.reg.w2.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("output_dir".into(), self.output_name.clone()),
        ]
    }
}
