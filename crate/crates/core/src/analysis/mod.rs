//! Monte Carlo experiments that probe the quantitative statements about
//! perturbed flows, plus the exact shuffle-product engine in [`shuffle`].
//!
//! Every experiment returns an [`McReport`]: one record per replicate (each
//! carrying the seed of its noise path) and a summary table of means,
//! standard errors and fitted slopes. Replicates run on the rayon pool and
//! are reduced in replicate order, so results do not depend on the number of
//! threads.

pub mod shuffle;

pub use shuffle::{shuffle_identity_check, shuffle_permutations, simplex_integral, Polynomial, ShuffleCheck};

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{generator, FbmGenerator, FbmPath, Method};
use crate::flow::{picard_solve, solve_forward, solve_transformed, DriftField, MalliavinKernel, Trajectory};
use crate::grid::TimeGrid;
use crate::rng::{rng_from_seed, stream_seed};
use crate::stats::{mean, ols, quantile, std_err};
use crate::table::Table;

/// Bootstrap resamples used by [`holder_fit`].
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// One replicate: its seed and the recorded values.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub seed: u64,
    pub values: Vec<f64>,
}

/// One line of `summary.csv`. Confidence bounds are NaN when not applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl SummaryRow {
    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, se: f64::NAN, n: 1, ci_lo: f64::NAN, ci_hi: f64::NAN }
    }

    pub fn estimate(name: impl Into<String>, value: f64, se: f64, n: usize) -> Self {
        Self { name: name.into(), value, se, n, ci_lo: f64::NAN, ci_hi: f64::NAN }
    }
}

/// Abscissae of a log-log regression and the record columns holding the
/// per-replicate samples whose means are the ordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub abscissae: Vec<f64>,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub experiment: String,
    pub seed: u64,
    pub params: Vec<(String, String)>,
    pub record_columns: Vec<String>,
    pub records: Vec<Record>,
    pub summary: Vec<SummaryRow>,
    pub regression: Option<Regression>,
}

impl McReport {
    pub fn new(experiment: &str, seed: u64, record_columns: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            params: Vec::new(),
            record_columns: record_columns.iter().map(|s| s.to_string()).collect(),
            records: Vec::new(),
            summary: Vec::new(),
            regression: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.name == name)
    }

    /// Values of one record column across replicates.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.values[j]).collect()
    }

    fn manifest(&self, t: &mut Table) {
        t.meta("experiment", &self.experiment);
        t.meta("version", crate::VERSION);
        t.meta("seed", self.seed);
        for (k, v) in &self.params {
            t.meta(k, v);
        }
    }

    pub fn records_table(&self) -> Table {
        let mut header = vec!["seed".to_string()];
        header.extend(self.record_columns.iter().cloned());
        let mut t = Table::new(header);
        self.manifest(&mut t);
        for r in &self.records {
            let mut row = vec![r.seed.to_string()];
            row.extend(r.values.iter().map(|v| v.to_string()));
            t.push(row);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["name", "value", "se", "n", "ci_lo", "ci_hi"]);
        self.manifest(&mut t);
        for r in &self.summary {
            t.push(vec![
                r.name.clone(),
                r.value.to_string(),
                r.se.to_string(),
                r.n.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
            ]);
        }
        t
    }

    /// Writes `records.csv` and `summary.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.records_table().write_path(dir.join("records.csv"))?;
        self.summary_table().write_path(dir.join("summary.csv"))
    }
}

/// Least-squares slope of `log moment` against `log |x - y|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% percentile bootstrap interval over replicate resamples.
    pub ci: (f64, f64),
}

fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<crate::stats::LineFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateFit("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Fits the report's regression; the interval comes from resampling whole
/// replicates (all pairs of a replicate share one path).
pub fn holder_fit(report: &McReport) -> Result<HolderFit> {
    let reg = report
        .regression
        .as_ref()
        .ok_or_else(|| Error::DegenerateFit("report carries no regression data".into()))?;
    if reg.abscissae.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 abscissae, got {}", reg.abscissae.len())));
    }
    let n = report.records.len();
    if n == 0 {
        return Err(Error::DegenerateFit("no replicates".into()));
    }
    let cols: Vec<Vec<f64>> = reg.columns.iter().map(|&j| report.column(j)).collect();
    let ys: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let fit = log_log_fit(&reg.abscissae, &ys)?;
    let mut rng = rng_from_seed(stream_seed(report.seed, BOOTSTRAP_STREAM));
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut idx = vec![0usize; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        let yb: Vec<f64> = cols.iter().map(|c| mean(&idx.iter().map(|&i| c[i]).collect::<Vec<_>>())).collect();
        if let Ok(f) = log_log_fit(&reg.abscissae, &yb) {
            slopes.push(f.slope);
        }
    }
    let ci = if slopes.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        slopes.sort_by(f64::total_cmp);
        (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
    };
    Ok(HolderFit { slope: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, ci })
}

/// Noise and discretisation shared by the pathwise experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub hurst: f64,
    pub method: Method,
    pub horizon: f64,
    pub n_steps: usize,
}

impl NoiseConfig {
    pub fn new(hurst: f64, horizon: f64, n_steps: usize) -> Self {
        Self { hurst, method: Method::Circulant, horizon, n_steps }
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::unit(self.horizon, self.n_steps)
    }

    fn generator(&self) -> Result<Box<dyn FbmGenerator>> {
        generator(self.method, self.hurst, self.grid()?)
    }

    fn describe(&self, report: &mut McReport) {
        report
            .param("hurst", self.hurst)
            .param("method", self.method)
            .param("horizon", self.horizon)
            .param("n_steps", self.n_steps);
    }
}

fn replicate_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| stream_seed(seed, i)).collect()
}

fn check_replicates(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 replicates, got {n}")));
    }
    Ok(())
}

/// `E[sup_t |X^x_t - X^y_t|^p]` for each pair, both solutions driven by the
/// same path, followed by a log-log fit against `|x - y|`.
///
/// Differences are taken in the shifted frame `X - (B_t - B_0)`, so the noise
/// cancels exactly.
pub fn moment_estimate(
    drift: &dyn DriftField,
    noise: &NoiseConfig,
    pairs: &[(Vec<f64>, Vec<f64>)],
    p: u32,
    n_replicates: usize,
    seed: u64,
) -> Result<McReport> {
    if p < 2 || !p.is_power_of_two() {
        return Err(Error::Domain(format!("p = {p} must be a power of two >= 2")));
    }
    check_replicates(n_replicates)?;
    if pairs.is_empty() {
        return Err(Error::Domain("no (x, y) pairs given".into()));
    }
    let d = drift.dim();
    if pairs.iter().any(|(x, y)| x.len() != d || y.len() != d) {
        return Err(Error::Dimension(format!("every point must have dimension {d}")));
    }
    let gen = noise.generator()?;
    let seeds = replicate_seeds(seed, n_replicates);
    let rows: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| {
            let path = gen.sample(d, s);
            pairs
                .iter()
                .map(|(x, y)| {
                    let a = solve_transformed(drift, x, 0.0, &path, noise.n_steps)?;
                    let b = solve_transformed(drift, y, 0.0, &path, noise.n_steps)?;
                    Ok(a.sup_distance(&b).powi(p as i32))
                })
                .collect()
        })
        .collect();
    let cols: Vec<String> = (0..pairs.len()).map(|j| format!("sup_pow_{j}")).collect();
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut report = McReport::new("moment", seed, &col_refs);
    noise.describe(&mut report);
    report.param("drift", drift.name()).param("dim", d).param("p", p).param("n_replicates", n_replicates);
    for (j, (x, y)) in pairs.iter().enumerate() {
        report.param(&format!("pair_{j}"), format!("{x:?} {y:?}"));
    }
    for (s, row) in seeds.iter().zip(rows) {
        report.records.push(Record { seed: *s, values: row? });
    }
    let abscissae: Vec<f64> = pairs.iter().map(|(x, y)| euclid(x, y)).collect();
    for (j, a) in abscissae.iter().enumerate() {
        let c = report.column(j);
        report.summary.push(SummaryRow::scalar(format!("distance_{j}"), *a));
        report.summary.push(SummaryRow::estimate(format!("moment_{j}"), mean(&c), std_err(&c), c.len()));
    }
    report.regression = Some(Regression { abscissae, columns: (0..pairs.len()).collect() });
    if pairs.len() >= 3 {
        let fit = holder_fit(&report)?;
        report.summary.push(SummaryRow {
            name: "slope".into(),
            value: fit.slope,
            se: f64::NAN,
            n: n_replicates,
            ci_lo: fit.ci.0,
            ci_hi: fit.ci.1,
        });
        report.summary.push(SummaryRow::scalar("intercept", fit.intercept));
        report.summary.push(SummaryRow::scalar("r_squared", fit.r_squared));
    }
    Ok(report)
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Settings for [`uniqueness_gap`].
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessConfig {
    pub x0: Vec<f64>,
    /// Constant initial guesses, one pair per comparison.
    pub init_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub n_paths: usize,
    /// Stopping tolerance; defaults to `1.5 dt`.
    pub tol: Option<f64>,
    /// Iteration cap; defaults to `n_steps + 5`.
    pub max_iter: Option<usize>,
}

struct PicardEnd {
    traj: Trajectory,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn run_picard(
    drift: &dyn DriftField,
    x0: &[f64],
    path: &FbmPath,
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<PicardEnd> {
    let start = Trajectory::constant(*path.grid(), x0.to_vec(), init);
    match picard_solve(drift, x0, path, &start, max_iter, tol) {
        Ok(o) => Ok(PicardEnd { traj: o.trajectory, residual: o.residual, iterations: o.iterations, converged: true }),
        Err(Error::NonConvergence { iterations, residual, last }) => {
            Ok(PicardEnd { traj: *last, residual, iterations, converged: false })
        }
        Err(e) => Err(e),
    }
}

/// Runs Picard iteration from antagonistic initial guesses on each noise path
/// and records the sup distance between the returned iterates. A control arm
/// on the zero path is always included and reported as `control_*` rows.
pub fn uniqueness_gap(drift: &dyn DriftField, noise: &NoiseConfig, cfg: &UniquenessConfig, seed: u64) -> Result<McReport> {
    let d = drift.dim();
    if cfg.x0.len() != d || cfg.init_pairs.iter().any(|(a, b)| a.len() != d || b.len() != d) {
        return Err(Error::Dimension(format!("start point and initial guesses must have dimension {d}")));
    }
    if cfg.init_pairs.is_empty() {
        return Err(Error::Domain("no initial-guess pairs given".into()));
    }
    check_replicates(cfg.n_paths)?;
    let grid = noise.grid()?;
    let tol = cfg.tol.unwrap_or(1.5 * grid.dt());
    let max_iter = cfg.max_iter.unwrap_or(noise.n_steps + 5);
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol = {tol} must be positive")));
    }
    let gen = noise.generator()?;
    let arm = |path: &FbmPath| -> Result<Vec<f64>> {
        let mut row = Vec::new();
        for (a, b) in &cfg.init_pairs {
            let ea = run_picard(drift, &cfg.x0, path, a, max_iter, tol)?;
            let eb = run_picard(drift, &cfg.x0, path, b, max_iter, tol)?;
            let both = ea.converged && eb.converged;
            row.extend([
                ea.traj.sup_distance(&eb.traj),
                ea.residual,
                eb.residual,
                ea.iterations as f64,
                eb.iterations as f64,
                if both { 1.0 } else { 0.0 },
            ]);
        }
        Ok(row)
    };
    let seeds = replicate_seeds(seed, cfg.n_paths);
    let rows: Vec<Result<Vec<f64>>> = seeds.par_iter().map(|&s| arm(&gen.sample(d, s))).collect();
    let control = arm(&FbmPath::zero(grid, d))?;

    const FIELDS: [&str; 6] = ["gap", "residual_a", "residual_b", "iterations_a", "iterations_b", "converged"];
    let names: Vec<String> =
        (0..cfg.init_pairs.len()).flat_map(|j| FIELDS.iter().map(move |f| format!("{f}_{j}"))).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut report = McReport::new("uniqueness", seed, &refs);
    noise.describe(&mut report);
    report
        .param("drift", drift.name())
        .param("dim", d)
        .param("x0", format!("{:?}", cfg.x0))
        .param("n_paths", cfg.n_paths)
        .param("tol", tol)
        .param("max_iter", max_iter);
    for (j, (a, b)) in cfg.init_pairs.iter().enumerate() {
        report.param(&format!("init_pair_{j}"), format!("{a:?} {b:?}"));
    }
    for (s, row) in seeds.iter().zip(rows) {
        report.records.push(Record { seed: *s, values: row? });
    }
    let k = FIELDS.len();
    for j in 0..cfg.init_pairs.len() {
        let gaps = report.column(j * k);
        let conv = report.column(j * k + 5);
        let within: Vec<f64> =
            gaps.iter().zip(&conv).map(|(g, c)| if *c == 1.0 && *g <= 10.0 * tol { 1.0 } else { 0.0 }).collect();
        report.summary.push(SummaryRow::estimate(format!("fraction_within_{j}"), mean(&within), std_err(&within), within.len()));
        report.summary.push(SummaryRow::estimate(format!("mean_gap_{j}"), mean(&gaps), std_err(&gaps), gaps.len()));
        report.summary.push(SummaryRow::estimate(format!("converged_{j}"), mean(&conv), std_err(&conv), conv.len()));
        report.summary.push(SummaryRow::scalar(format!("control_gap_{j}"), control[j * k]));
        report.summary.push(SummaryRow::scalar(format!("control_residual_a_{j}"), control[j * k + 1]));
        report.summary.push(SummaryRow::scalar(format!("control_residual_b_{j}"), control[j * k + 2]));
        report.summary.push(SummaryRow::scalar(format!("control_converged_{j}"), control[j * k + 5]));
    }
    Ok(report)
}

/// Settings for [`averaging_tail`]. Noise is generated on `[0, u]` with
/// `noise.n_steps` steps; `r` must be a grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct TailConfig {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub r: f64,
    pub lambdas: Vec<f64>,
    pub n_paths: usize,
}

/// Exponent `zeta` of the threshold `lambda (u - r)^{1 - zeta} |h1 - h2|`.
pub const TAIL_ZETA: f64 = 0.5;

/// Fit of `log P` against `lambda^2` over the usable window.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: Vec<f64>,
}

/// Least squares of `log P` on `lambda^2`, restricted to estimates with
/// `10 / n <= P <= 0.5`.
pub fn tail_fit(lambdas: &[f64], probs: &[f64], n: usize) -> Result<TailFit> {
    let lo = 10.0 / n as f64;
    let (xs, ys, used): (Vec<f64>, Vec<f64>, Vec<f64>) = lambdas
        .iter()
        .zip(probs)
        .filter(|(_, p)| **p >= lo && **p <= 0.5 && **p > 0.0)
        .map(|(l, p)| (l * l, p.ln(), *l))
        .fold((vec![], vec![], vec![]), |mut acc, (x, y, l)| {
            acc.0.push(x);
            acc.1.push(y);
            acc.2.push(l);
            acc
        });
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} usable lambda points, need 3", xs.len())));
    }
    let f = ols(&xs, &ys)?;
    Ok(TailFit { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared, used })
}

/// Tail probabilities of `|int_r^u b(s, B_s + h1) - b(s, B_s + h2) ds|`.
///
/// Drifts with sup norm above 1 are rescaled to norm 1. A degenerate tail fit
/// is reported through the `fit_status` parameter rather than as an error.
pub fn averaging_tail(drift: &dyn DriftField, noise: &NoiseConfig, cfg: &TailConfig, seed: u64) -> Result<McReport> {
    let d = drift.dim();
    if cfg.h1.len() != d || cfg.h2.len() != d {
        return Err(Error::Dimension(format!("shifts must have dimension {d}")));
    }
    check_replicates(cfg.n_paths)?;
    let grid = noise.grid()?;
    let u = noise.horizon;
    let r_idx = grid
        .index_of(cfg.r)
        .ok_or_else(|| Error::Grid(format!("r = {} is not a node of the noise grid", cfg.r)))?;
    if r_idx >= grid.n_steps() {
        return Err(Error::Domain(format!("need r < u, got r = {} and u = {u}", cfg.r)));
    }
    let norm = drift.sup_norm();
    let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    let dh = cfg.h1.iter().zip(&cfg.h2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let unit = (u - cfg.r).powf(1.0 - TAIL_ZETA) * dh;
    let gen = noise.generator()?;
    let dt = grid.dt();
    let seeds = replicate_seeds(seed, cfg.n_paths);
    let values: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let path = gen.sample(d, s);
            let mut acc = [0.0; crate::flow::MAX_DIM];
            let (mut y1, mut y2) = ([0.0; crate::flow::MAX_DIM], [0.0; crate::flow::MAX_DIM]);
            let (mut b1, mut b2) = ([0.0; crate::flow::MAX_DIM], [0.0; crate::flow::MAX_DIM]);
            for i in r_idx..grid.n_steps() {
                let bi = path.value(i);
                for k in 0..d {
                    y1[k] = bi[k] + cfg.h1[k];
                    y2[k] = bi[k] + cfg.h2[k];
                }
                let t = grid.node(i);
                drift.eval(t, &y1[..d], &mut b1[..d]);
                drift.eval(t, &y2[..d], &mut b2[..d]);
                for k in 0..d {
                    acc[k] += (b1[k] - b2[k]) * dt;
                }
            }
            scale * acc[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let mut report = McReport::new("tail", seed, &["abs_integral"]);
    noise.describe(&mut report);
    report
        .param("drift", drift.name())
        .param("dim", d)
        .param("h1", format!("{:?}", cfg.h1))
        .param("h2", format!("{:?}", cfg.h2))
        .param("r", cfg.r)
        .param("u", u)
        .param("zeta", TAIL_ZETA)
        .param("drift_scale", scale)
        .param("n_paths", cfg.n_paths);
    for (s, v) in seeds.iter().zip(&values) {
        report.records.push(Record { seed: *s, values: vec![*v] });
    }
    let n = values.len();
    let probs: Vec<f64> = cfg
        .lambdas
        .iter()
        .map(|l| values.iter().filter(|v| **v > l * unit).count() as f64 / n as f64)
        .collect();
    for (l, p) in cfg.lambdas.iter().zip(&probs) {
        report.summary.push(SummaryRow::estimate(format!("tail_{l}"), *p, (p * (1.0 - p) / n as f64).sqrt(), n));
    }
    match tail_fit(&cfg.lambdas, &probs, n) {
        Ok(f) => {
            report.param("fit_status", "ok");
            report.param("fit_lambdas", format!("{:?}", f.used));
            report.summary.push(SummaryRow::scalar("slope", f.slope));
            report.summary.push(SummaryRow::scalar("intercept", f.intercept));
            report.summary.push(SummaryRow::scalar("r_squared", f.r_squared));
        }
        Err(e) => {
            report.param("fit_status", e.to_string());
        }
    }
    Ok(report)
}

/// Samples of `theta -> D_theta X_T` on the interior nodes of a grid, one
/// vector per replicate with `d x d` row-major blocks for `m = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinField {
    pub grid: TimeGrid,
    pub dim: usize,
    pub seeds: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
}

impl MalliavinField {
    /// Field from externally computed samples (blocks at `m = 0` and `m = n`
    /// are ignored).
    pub fn new(grid: TimeGrid, dim: usize, seeds: Vec<u64>, samples: Vec<Vec<f64>>) -> Result<Self> {
        let want = grid.len() * dim * dim;
        if samples.is_empty() || samples.len() != seeds.len() || samples.iter().any(|s| s.len() != want) {
            return Err(Error::Dimension(format!("each sample needs {want} values and a seed")));
        }
        Ok(Self { grid, dim, seeds, samples })
    }
}

/// `D_theta X_T` for `theta` on the interior grid nodes, starting from `x0`.
pub fn malliavin_field(
    drift: &dyn DriftField,
    noise: &NoiseConfig,
    x0: &[f64],
    n_replicates: usize,
    seed: u64,
) -> Result<MalliavinField> {
    let d = drift.dim();
    if x0.len() != d {
        return Err(Error::Dimension(format!("x0 must have dimension {d}")));
    }
    let grid = noise.grid()?;
    let tables = MalliavinKernel::new(grid, noise.hurst)?;
    let gen = noise.generator()?;
    let seeds = replicate_seeds(seed, n_replicates);
    let samples = seeds
        .par_iter()
        .map(|&s| {
            let path = gen.sample(d, s);
            let traj = solve_forward(drift, x0, 0.0, &path, noise.n_steps)?;
            tables.terminal(drift, &traj)
        })
        .collect::<Result<Vec<_>>>()?;
    MalliavinField::new(grid, d, seeds, samples)
}

/// Monte Carlo Sobolev–Slobodeckij seminorm with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

/// `sum_{m != m'} dt^2 E|F(theta_m) - F(theta_m')|^2 / |theta_m - theta_m'|^{1 + 2 beta}`
/// over interior nodes, the expectation replaced by the replicate mean.
///
/// Each node stands for a cell of width `dt`, so the sum approximates the
/// double integral over `[dt/2, T - dt/2]^2` with the diagonal cells removed.
pub fn sobolev_slobodeckij(field: &MalliavinField, beta: f64) -> Result<SsEstimate> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Domain(format!("beta = {beta} must lie in (0, 1/2)")));
    }
    let per = sobolev_per_replicate(field, beta);
    let n = per.len();
    let se = if n > 1 { std_err(&per) } else { 0.0 };
    Ok(SsEstimate { value: mean(&per), se, n })
}

fn sobolev_per_replicate(field: &MalliavinField, beta: f64) -> Vec<f64> {
    let n = field.grid.n_steps();
    let dt = field.grid.dt();
    let dd = field.dim * field.dim;
    // weights depend on the lag only
    let w: Vec<f64> = (0..n).map(|l| if l == 0 { 0.0 } else { dt * dt / (l as f64 * dt).powf(1.0 + 2.0 * beta) }).collect();
    field
        .samples
        .par_iter()
        .map(|s| {
            let mut total = 0.0;
            for m in 1..n {
                let a = &s[m * dd..(m + 1) * dd];
                let mut row = 0.0;
                for k in m + 1..n {
                    let b = &s[k * dd..(k + 1) * dd];
                    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                    row += sq * w[k - m];
                }
                total += 2.0 * row;
            }
            total
        })
        .collect()
}

/// Sobolev–Slobodeckij experiment as a report: one record per replicate.
pub fn sobolev_report(field: &MalliavinField, beta: f64, drift_name: &str, hurst: f64, seed: u64) -> Result<McReport> {
    let est = sobolev_slobodeckij(field, beta)?;
    let per = sobolev_per_replicate(field, beta);
    let mut report = McReport::new("malliavin-norm", seed, &["seminorm"]);
    report
        .param("drift", drift_name)
        .param("hurst", hurst)
        .param("dim", field.dim)
        .param("beta", beta)
        .param("horizon", field.grid.horizon())
        .param("n_steps", field.grid.n_steps())
        .param("n_replicates", field.samples.len());
    for (s, v) in field.seeds.iter().zip(per) {
        report.records.push(Record { seed: *s, values: vec![v] });
    }
    report.summary.push(SummaryRow::estimate("seminorm", est.value, est.se, est.n));
    Ok(report)
}

/// Shuffle-identity check as a report, one record per `(f, g)` case.
pub fn shuffle_report(cases: &[(Vec<Polynomial>, Vec<Polynomial>)], theta: f64, t: f64, seed: u64) -> Result<McReport> {
    let mut report = McReport::new("shuffle", seed, &["m", "n", "lhs", "rhs", "abs_err", "exact"]);
    report.param("theta", theta).param("t", t).param("cases", cases.len());
    let mut worst: f64 = 0.0;
    let mut exact = 0usize;
    for (i, (f, g)) in cases.iter().enumerate() {
        let c = shuffle_identity_check(f, g, theta, t)?;
        worst = worst.max(c.abs_err);
        exact += c.exact_match as usize;
        report.records.push(Record {
            seed: stream_seed(seed, i as u64),
            values: vec![f.len() as f64, g.len() as f64, c.lhs, c.rhs, c.abs_err, if c.exact_match { 1.0 } else { 0.0 }],
        });
    }
    report.summary.push(SummaryRow::scalar("max_abs_err", worst));
    report.summary.push(SummaryRow::estimate("exact_matches", exact as f64, f64::NAN, cases.len()));
    report.summary.push(SummaryRow::scalar("shuffle_count", shuffle_count(cases)));
    Ok(report)
}

fn shuffle_count(cases: &[(Vec<Polynomial>, Vec<Polynomial>)]) -> f64 {
    cases.iter().map(|(f, g)| shuffle_permutations(f.len(), g.len()).map(|s| s.len()).unwrap_or(0) as f64).sum()
}

/// Random polynomials with `n_coeffs` coefficients uniform in `[-1, 1]`.
pub fn random_polynomials(count: usize, n_coeffs: usize, rng: &mut impl rand::Rng) -> Vec<Polynomial> {
    (0..count)
        .map(|_| Polynomial::new((0..n_coeffs).map(|_| rng.random_range(-1.0..=1.0)).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Drift;

    fn synthetic(xs: &[f64], p: f64, reps: usize) -> McReport {
        let mut r = McReport::new("synthetic", 1, &["a", "b", "c"]);
        for i in 0..reps {
            r.records.push(Record { seed: i as u64, values: xs.iter().map(|x| x.powf(p)).collect() });
        }
        r.regression = Some(Regression { abscissae: xs.to_vec(), columns: vec![0, 1, 2] });
        r
    }

    #[test]
    fn holder_fit_recovers_power_laws() {
        let r = synthetic(&[1e-3, 1e-2, 1e-1], 2.0, 40);
        let f = holder_fit(&r).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.ci.0 - 2.0).abs() < 1e-12 && (f.ci.1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn holder_fit_rejects_short_or_flat_data() {
        let mut r = synthetic(&[0.1, 0.1, 0.1], 2.0, 5);
        assert!(matches!(holder_fit(&r), Err(Error::DegenerateFit(_))));
        r.regression = Some(Regression { abscissae: vec![0.1], columns: vec![0] });
        assert!(matches!(holder_fit(&r), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn zero_drift_moments_are_exact() {
        let noise = NoiseConfig::new(0.2, 1.0, 64);
        let pairs: Vec<_> = [1e-3, 1e-2, 1e-1].iter().map(|h| (vec![0.0], vec![*h])).collect();
        let r = moment_estimate(&Drift::zero(1), &noise, &pairs, 2, 30, 5).unwrap();
        for (j, h) in [1e-3f64, 1e-2, 1e-1].iter().enumerate() {
            assert!(r.column(j).iter().all(|v| *v == h * h));
            let m = r.get(&format!("moment_{j}")).unwrap();
            assert!((m.value - h * h).abs() <= 1e-15 * h * h);
            assert!(m.se <= 1e-15 * h * h);
        }
        let slope = r.get("slope").unwrap();
        assert!((slope.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tail_is_zero_for_equal_shifts_and_constant_drift() {
        let noise = NoiseConfig::new(0.2, 0.5, 32);
        let lambdas = vec![0.5, 1.0, 2.0];
        let cfg = TailConfig { h1: vec![0.0], h2: vec![0.0], r: 0.0, lambdas: lambdas.clone(), n_paths: 50 };
        let r = averaging_tail(&Drift::indicator(1, 0.0, 1.0).unwrap(), &noise, &cfg, 3).unwrap();
        assert!(r.summary.iter().filter(|s| s.name.starts_with("tail_")).all(|s| s.value == 0.0));
        let cfg = TailConfig { h1: vec![0.0], h2: vec![0.3], r: 0.0, lambdas, n_paths: 50 };
        let r = averaging_tail(&Drift::constant(vec![0.4]), &noise, &cfg, 3).unwrap();
        assert!(r.summary.iter().filter(|s| s.name.starts_with("tail_")).all(|s| s.value == 0.0));
        assert!(r.params.iter().any(|(k, v)| k == "fit_status" && v.contains("degenerate")));
    }

    #[test]
    fn tail_fit_needs_three_points() {
        assert!(tail_fit(&[1.0, 2.0], &[0.3, 0.1], 1000).is_err());
        let f = tail_fit(&[1.0, 2.0, 3.0], &[0.4, 0.4f64.powi(4), 0.4f64.powi(9)], 100_000).unwrap();
        assert!((f.slope - 0.4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_drift_gap_vanishes() {
        let noise = NoiseConfig::new(0.2, 1.0, 32);
        let cfg = UniquenessConfig {
            x0: vec![0.0],
            init_pairs: vec![(vec![0.5], vec![-0.5])],
            n_paths: 10,
            tol: None,
            max_iter: None,
        };
        let r = uniqueness_gap(&Drift::zero(1), &noise, &cfg, 9).unwrap();
        assert!(r.column(0).iter().all(|g| *g == 0.0));
        assert_eq!(r.get("control_gap_0").unwrap().value, 0.0);
        assert_eq!(r.get("fraction_within_0").unwrap().value, 1.0);
    }

    #[test]
    fn sobolev_rejects_beta_outside_range_and_grows_with_beta() {
        let noise = NoiseConfig::new(0.3, 1.0, 32);
        let field = malliavin_field(&Drift::zero(1), &noise, &[0.0], 2, 1).unwrap();
        assert!(sobolev_slobodeckij(&field, 0.0).is_err());
        assert!(sobolev_slobodeckij(&field, 0.5).is_err());
        let a = sobolev_slobodeckij(&field, 0.1).unwrap().value;
        let b = sobolev_slobodeckij(&field, 0.3).unwrap().value;
        assert!(b > a && a > 0.0);
    }

    #[test]
    fn report_tables_carry_seeds_and_manifest() {
        let r = synthetic(&[1e-3, 1e-2, 1e-1], 2.0, 3);
        let t = r.records_table();
        assert_eq!(t.header[0], "seed");
        assert_eq!(t.get_meta("experiment"), Some("synthetic"));
        assert_eq!(t.get_meta("version"), Some(crate::VERSION));
        assert_eq!(t.rows.len(), 3);
    }
}
