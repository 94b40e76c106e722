//! Experiment execution and file output.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use roughflow::analysis::{
    averaging_tail, malliavin_field, moment_estimate, random_polynomials, shuffle_report, sobolev_report,
    uniqueness_gap, McReport, NoiseConfig, Record, SummaryRow,
};
use roughflow::continuity::{comparison_table, fv_reference, push_forward, test_integral, Comparison, GridDensity, ParticleEnsemble};
use roughflow::fbm::{default_lambda, generator, superposed_path, FbmPath, SuperpositionSpec};
use roughflow::flow::{flow_grid, Drift, DriftField, TransformedDrift};
use roughflow::fraccalc::{girsanov_weight_with, KhInverse};
use roughflow::rng::{rng_from_seed, stream_seed};
use roughflow::stats::{mean, std_err};
use roughflow::transport::{
    residual_table, solve_transport, upwind_reference, weak_residual, BumpField, Gaussian, GridFunction, Lattice,
    ResidualLevel, TestPair,
};
use roughflow::TimeGrid;

use crate::config::{ContinuityParams, ExperimentConfig, HurstSpec, NoiseSpec, Params, TransportParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] roughflow::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

type Result<T> = std::result::Result<T, RunError>;

/// Runs the experiment into `out` and returns the names of the files written,
/// `manifest.txt` last.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out).map_err(|source| RunError::Io { path: out.to_path_buf(), source })?;
    let mut files = execute(cfg, out)?;
    let manifest = format!(
        "# roughflow experiment manifest; rerun with `roughflow run --config manifest.txt`\n\
         # version = {VERSION}\n# outputs = {}\n\n{}",
        files.join(", "),
        cfg.echo()
    );
    write(out, "manifest.txt", &manifest)?;
    files.push("manifest.txt".into());
    Ok(files)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| RunError::Io { path, source })
}

fn sample_path(noise: &NoiseSpec, seed: u64) -> roughflow::Result<FbmPath> {
    let grid = noise.grid();
    match &noise.hurst {
        HurstSpec::Single(h) => Ok(generator(noise.method, *h, grid)?.sample(noise.dim, seed)),
        HurstSpec::Superposed { seq, weights } => {
            let spec = match weights {
                Some(w) => SuperpositionSpec::new(seq.clone(), w.clone())?,
                None => default_lambda(seq, seq.len(), seed)?,
            };
            superposed_path(&spec, noise.dim, grid, seed)
        }
    }
}

fn noise_config(noise: &NoiseSpec) -> NoiseConfig {
    NoiseConfig { hurst: noise.single_hurst(), method: noise.method, horizon: noise.horizon, n_steps: noise.n_steps }
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let seed = cfg.seed;
    let noise = cfg.noise.as_ref();
    let drift = cfg.drift.as_ref();
    let need_noise = || noise.expect("validated: kind uses noise");
    let need_drift = || drift.expect("validated: kind uses a drift");
    let report = |r: McReport| -> Result<Vec<String>> {
        r.write_dir(out)?;
        Ok(vec!["records.csv".into(), "summary.csv".into()])
    };
    match &cfg.params {
        Params::FbmGen { n_paths } => {
            let noise = need_noise();
            let mut files = Vec::new();
            for i in 0..*n_paths {
                let name = format!("path_{i}.csv");
                sample_path(noise, stream_seed(seed, i as u64))?.write_csv(out.join(&name))?;
                files.push(name);
            }
            Ok(files)
        }
        Params::OdeSolve { starts } => {
            let noise = need_noise();
            let path = sample_path(noise, seed)?;
            path.write_csv(out.join("path.csv"))?;
            flow_grid(need_drift(), starts, &path, noise.n_steps)?.write_csv(out.join("flow.csv"))?;
            Ok(vec!["path.csv".into(), "flow.csv".into()])
        }
        Params::Uniqueness(u) => report(uniqueness_gap(need_drift(), &noise_config(need_noise()), u, seed)?),
        Params::Moment { x0, deltas, p, n_replicates } => {
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = deltas
                .iter()
                .map(|d| {
                    let mut y = x0.clone();
                    y[0] += d;
                    (x0.clone(), y)
                })
                .collect();
            report(moment_estimate(need_drift(), &noise_config(need_noise()), &pairs, *p, *n_replicates, seed)?)
        }
        Params::Tail(t) => report(averaging_tail(need_drift(), &noise_config(need_noise()), t, seed)?),
        Params::Girsanov { n_paths } => report(girsanov(need_drift(), need_noise(), *n_paths, seed)?),
        Params::Transport(t) => transport(need_drift(), need_noise(), t, seed, out),
        Params::Continuity(c) => continuity(need_drift(), need_noise(), c, seed, out),
        Params::Shuffle { m, n, cases, degree, theta, t } => {
            let mut rng = rng_from_seed(seed);
            let list: Vec<_> = (0..*cases)
                .map(|_| (random_polynomials(*m, degree + 1, &mut rng), random_polynomials(*n, degree + 1, &mut rng)))
                .collect();
            let mut r = shuffle_report(&list, *theta, *t, seed)?;
            r.param("degree", degree);
            report(r)
        }
        Params::MalliavinNorm { x0, beta, n_replicates } => {
            let noise = need_noise();
            let drift = need_drift();
            let field = malliavin_field(drift, &noise_config(noise), x0, *n_replicates, seed)?;
            report(sobolev_report(&field, *beta, &drift.name(), noise.single_hurst(), seed)?)
        }
    }
}

fn girsanov(drift: &Drift, noise: &NoiseSpec, n_paths: usize, seed: u64) -> roughflow::Result<McReport> {
    let h = noise.single_hurst();
    let op = KhInverse::new(h, noise.n_steps)?;
    let gen = generator(noise.method, h, noise.grid())?;
    let seeds: Vec<u64> = (0..n_paths as u64).map(|i| stream_seed(seed, i)).collect();
    let rows = seeds
        .par_iter()
        .map(|&s| girsanov_weight_with(&op, drift, &gen.sample(noise.dim, s)))
        .collect::<roughflow::Result<Vec<_>>>()?;
    let zero = girsanov_weight_with(&op, &Drift::zero(noise.dim), &gen.sample(noise.dim, seeds[0]))?;
    let mut r = McReport::new("girsanov", seed, &["weight", "log_weight"]);
    r.param("drift", drift.name())
        .param("hurst", h)
        .param("dim", noise.dim)
        .param("horizon", noise.horizon)
        .param("n_steps", noise.n_steps)
        .param("n_paths", n_paths);
    for (s, w) in seeds.iter().zip(&rows) {
        r.records.push(Record { seed: *s, values: vec![w.weight, w.log_weight] });
    }
    let ws: Vec<f64> = rows.iter().map(|w| w.weight).collect();
    r.summary.push(SummaryRow::estimate("mean_weight", mean(&ws), std_err(&ws), ws.len()));
    r.summary.push(SummaryRow::scalar("zero_drift_weight", zero.weight));
    Ok(r)
}

fn transport(drift: &Drift, noise: &NoiseSpec, p: &TransportParams, seed: u64, out: &Path) -> Result<Vec<String>> {
    let d = noise.dim;
    let path = sample_path(noise, seed)?;
    let star = TransformedDrift::new(drift, &path)?;
    let u0 = Gaussian { amp: p.u0_amp, center: p.u0_center.clone(), width: p.u0_width };
    let lattice = Lattice::cube(d, p.lo, p.hi, p.points)?;
    let tgrid = TimeGrid::unit(noise.horizon, p.t_steps)?;
    let chars = solve_transport(&u0, drift, &path, &tgrid, &lattice, noise.n_steps)?;
    let fine = upwind_reference(&u0, &star, &noise.grid(), &lattice)?;
    let stride = noise.n_steps / p.t_steps;
    let values: Vec<f64> = (0..=p.t_steps).flat_map(|i| fine.slice(i * stride).to_vec()).collect();
    let reference = GridFunction::new(tgrid, lattice, values)?;
    let pair = TestPair::spanning(noise.horizon, BumpField::new(p.eta_center.clone(), p.eta_radius.clone())?)?;
    let mut levels = Vec::new();
    for (level, &(nt, nx)) in p.levels.iter().enumerate() {
        let lat = Lattice::cube(d, p.lo, p.hi, nx)?;
        let tg = TimeGrid::unit(noise.horizon, nt)?;
        let u = solve_transport(&u0, drift, &path, &tg, &lat, noise.n_steps)?;
        levels.push(ResidualLevel { level, h: lat.spacing(), dt: tg.dt(), residual: weak_residual(&u, &star, &pair)? });
    }
    let rel_l1 = chars.l1_distance(&reference, p.t_steps)? / reference.l1_norm(p.t_steps);
    path.write_csv(out.join("path.csv"))?;
    let mut t = chars.to_table();
    t.meta("solver", "characteristics").meta("drift", drift.name()).meta("rel_l1_vs_reference", rel_l1);
    t.write_path(out.join("characteristics.csv"))?;
    let mut t = reference.to_table();
    t.meta("solver", "upwind").meta("drift", drift.name()).meta("dt", noise.grid().dt());
    t.write_path(out.join("reference.csv"))?;
    let mut t = residual_table(&levels);
    t.meta("eta_center", format!("{:?}", p.eta_center)).meta("eta_radius", format!("{:?}", p.eta_radius));
    t.write_path(out.join("residuals.csv"))?;
    Ok(["path.csv", "characteristics.csv", "reference.csv", "residuals.csv"].map(String::from).to_vec())
}

fn continuity(drift: &Drift, noise: &NoiseSpec, p: &ContinuityParams, seed: u64, out: &Path) -> Result<Vec<String>> {
    let d = noise.dim;
    let path = sample_path(noise, seed)?;
    let star = TransformedDrift::new(drift, &path)?;
    let h = (p.hi - p.lo) / p.cells as f64;
    let lattice = Lattice::cube(d, p.lo + 0.5 * h, p.hi - 0.5 * h, p.cells)?;
    let w2 = p.density_width * p.density_width;
    let dens = GridDensity::from_fn(lattice, |x| {
        let r2: f64 = x.iter().zip(&p.density_center).map(|(a, c)| (a - c) * (a - c)).sum();
        (-r2 / (2.0 * w2)).exp()
    })?;
    let ens = ParticleEnsemble::from_density(&dens, p.per_cell)?;
    let pushed = push_forward(&ens, drift, &path, noise.horizon, noise.n_steps)?;
    let fv = fv_reference(&dens, &star, &noise.grid())?;
    let outflow = fv.outflow.last().copied().unwrap_or(0.0);
    let mut rows = vec![Comparison {
        phi_id: "mass".into(),
        pushforward: test_integral(&pushed, |_| 1.0),
        reference: fv.last().mass() + outflow,
    }];
    for (i, c) in p.test_centers.iter().enumerate() {
        let eta = BumpField::new(c.clone(), vec![p.test_radius; d])?;
        use roughflow::transport::ScalarField;
        rows.push(Comparison {
            phi_id: format!("bump_{i}"),
            pushforward: test_integral(&pushed, |x| eta.value(x)),
            reference: fv.last().integrate(|x| eta.value(x)),
        });
    }
    path.write_csv(out.join("path.csv"))?;
    pushed.write_csv(out.join("particles.csv"))?;
    let mut t = comparison_table(&rows);
    t.meta("drift", drift.name())
        .meta("n_particles", pushed.len())
        .meta("initial_mass", ens.total_mass())
        .meta("reference_outflow", outflow)
        .meta("test_radius", p.test_radius);
    t.write_path(out.join("comparison.csv"))?;
    Ok(["path.csv", "particles.csv", "comparison.csv"].map(String::from).to_vec())
}
