//! INI experiment configs: parsing, validation and the canonical echo used
//! for manifests.

use std::fmt;
use std::path::PathBuf;

use ini::Ini;
use roughflow::analysis::{TailConfig, UniquenessConfig};
use roughflow::fbm::{Method, SuperpositionSpec};
use roughflow::flow::{Drift, MAX_DIM};
use roughflow::TimeGrid;

use crate::drift_expr::parse_drift;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    FbmGen,
    OdeSolve,
    Uniqueness,
    Moment,
    Tail,
    Girsanov,
    Transport,
    Continuity,
    Shuffle,
    MalliavinNorm,
}

impl Kind {
    pub const ALL: [Kind; 10] = [
        Kind::FbmGen,
        Kind::OdeSolve,
        Kind::Uniqueness,
        Kind::Moment,
        Kind::Tail,
        Kind::Girsanov,
        Kind::Transport,
        Kind::Continuity,
        Kind::Shuffle,
        Kind::MalliavinNorm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::FbmGen => "fbm-gen",
            Kind::OdeSolve => "ode-solve",
            Kind::Uniqueness => "uniqueness",
            Kind::Moment => "moment",
            Kind::Tail => "tail",
            Kind::Girsanov => "girsanov",
            Kind::Transport => "transport",
            Kind::Continuity => "continuity",
            Kind::Shuffle => "shuffle",
            Kind::MalliavinNorm => "malliavin-norm",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn uses_noise(self) -> bool {
        self != Kind::Shuffle
    }

    fn uses_drift(self) -> bool {
        !matches!(self, Kind::FbmGen | Kind::Shuffle)
    }

    /// Kinds that can run on a superposed path.
    fn allows_superposition(self) -> bool {
        matches!(self, Kind::FbmGen | Kind::OdeSolve)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One violated field, `field` in `section.key` form.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HurstSpec {
    Single(f64),
    /// Weights `None` means the default `2^{-n} / max(1, E sup)` rule.
    Superposed { seq: Vec<f64>, weights: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub hurst: HurstSpec,
    pub method: Method,
    pub horizon: f64,
    pub n_steps: usize,
    pub dim: usize,
}

impl NoiseSpec {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::unit(self.horizon, self.n_steps).expect("validated grid")
    }

    pub fn single_hurst(&self) -> f64 {
        match self.hurst {
            HurstSpec::Single(h) => h,
            HurstSpec::Superposed { .. } => unreachable!("validated: superposition only where supported"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportParams {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub u0_amp: f64,
    pub u0_center: Vec<f64>,
    pub u0_width: f64,
    pub t_steps: usize,
    pub levels: Vec<(usize, usize)>,
    pub eta_center: Vec<f64>,
    pub eta_radius: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityParams {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub density_center: Vec<f64>,
    pub density_width: f64,
    pub per_cell: usize,
    pub test_centers: Vec<Vec<f64>>,
    pub test_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    FbmGen { n_paths: usize },
    OdeSolve { starts: Vec<Vec<f64>> },
    Uniqueness(UniquenessConfig),
    Moment { x0: Vec<f64>, deltas: Vec<f64>, p: u32, n_replicates: usize },
    Tail(TailConfig),
    Girsanov { n_paths: usize },
    Transport(TransportParams),
    Continuity(ContinuityParams),
    Shuffle { m: usize, n: usize, cases: usize, degree: usize, theta: f64, t: f64 },
    MalliavinNorm { x0: Vec<f64>, beta: f64, n_replicates: usize },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub noise: Option<NoiseSpec>,
    pub drift: Option<Drift>,
    pub params: Params,
    /// Resolved values (defaults included) in a fixed order, for the manifest.
    echo: Vec<(String, Vec<(String, String)>)>,
}

impl ExperimentConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some((_, kv)) = self.echo.iter_mut().find(|(s, _)| s == "experiment") {
            if let Some(entry) = kv.iter_mut().find(|(k, _)| k == "seed") {
                entry.1 = seed.to_string();
            }
        }
    }

    /// Complete config as INI text. It omits `out`, so the same run into two
    /// directories produces identical manifests, and it parses back to the
    /// same experiment.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (i, (section, kv)) in self.echo.iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            s.push_str(&format!("[{section}]\n"));
            for (k, v) in kv {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<FieldError>> {
    let ini = Ini::load_from_str(text)
        .map_err(|e| vec![FieldError { field: "config".into(), message: format!("INI syntax: {e}") }])?;
    let mut cx = Ctx::default();
    let mut sections: Vec<Section> = Vec::new();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            for (k, _) in props.iter() {
                cx.error(k, "key outside any section");
            }
            continue;
        };
        if sections.iter().any(|s| s.name == name) {
            cx.error(name, "duplicate section");
            continue;
        }
        let mut entries: Vec<(String, String)> = Vec::new();
        for (k, v) in props.iter() {
            if entries.iter().any(|(e, _)| e == k) {
                cx.error(&format!("{name}.{k}"), "duplicate key");
            } else {
                entries.push((k.to_string(), v.trim().to_string()));
            }
        }
        let used = vec![false; entries.len()];
        sections.push(Section { name: name.to_string(), entries, used });
    }
    let mut take = |name: &str| -> Section {
        match sections.iter().position(|s| s.name == name) {
            Some(i) => sections.remove(i),
            None => Section { name: name.to_string(), entries: Vec::new(), used: Vec::new() },
        }
    };

    let mut exp = take("experiment");
    let kind_text = cx.text(&mut exp, "kind", None);
    let kind = kind_text.as_deref().and_then(|k| {
        let parsed = Kind::parse(k);
        if parsed.is_none() {
            let all: Vec<&str> = Kind::ALL.iter().map(|k| k.as_str()).collect();
            cx.error("experiment.kind", &format!("unknown kind '{k}' (expected one of {})", all.join(", ")));
        }
        parsed
    });
    let seed = cx.parse::<u64>(&mut exp, "seed", Some(0), "a non-negative integer");
    let out = exp.get("out").map(PathBuf::from);
    cx.finish(exp);
    let Some(kind) = kind else {
        return Err(cx.errors);
    };

    let noise = if kind.uses_noise() {
        let mut sec = take("noise");
        let n = cx.noise(&mut sec, kind);
        cx.finish(sec);
        n
    } else {
        None
    };
    let dim = noise.as_ref().map_or(1, |n| n.dim);

    let drift = if kind.uses_drift() {
        let mut sec = take("drift");
        let expr = cx.text(&mut sec, "expr", None);
        let level = if sec.entries.iter().any(|(k, _)| k == "mollify") {
            cx.value(
                &mut sec,
                "mollify",
                None,
                &|s: &str| s.parse::<u32>().map_err(|_| format!("'{s}' is not an integer level")),
                &|l: &u32| if *l <= 30 { Ok(()) } else { Err(format!("level {l} violates 0 <= level <= 30")) },
                &|l: &u32| l.to_string(),
            )
            .map(Some)
        } else {
            Some(None)
        };
        let d = expr.and_then(|e| match parse_drift(&e, dim) {
            Ok(d) => Some(d),
            Err(m) => {
                cx.error("drift.expr", &m);
                None
            }
        });
        let d = match (d, level) {
            (Some(d), Some(None)) => Some(d),
            (Some(d), Some(Some(l))) => d.mollified(l).map_err(|e| cx.error("drift.mollify", &e.to_string())).ok(),
            _ => None,
        };
        cx.finish(sec);
        d
    } else {
        None
    };

    let mut sec = take(kind.as_str());
    let params = cx.params(&mut sec, kind, noise.as_ref(), dim);
    cx.finish(sec);

    for s in sections {
        let msg = match s.name.as_str() {
            "noise" | "drift" => format!("section not used by kind {kind}"),
            other if Kind::parse(other).is_some() => format!("section not used by kind {kind}"),
            _ => "unknown section".to_string(),
        };
        cx.error(&s.name, &msg);
    }

    match (cx.errors.is_empty(), params) {
        (true, Some(params)) => Ok(ExperimentConfig { kind, seed: seed.unwrap_or(0), out, noise, drift, params, echo: cx.echo }),
        (_, _) => Err(cx.errors),
    }
}

struct Section {
    name: String,
    entries: Vec<(String, String)>,
    used: Vec<bool>,
}

impl Section {
    fn get(&mut self, key: &str) -> Option<String> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        self.used[i] = true;
        Some(self.entries[i].1.clone())
    }
}

#[derive(Default)]
struct Ctx {
    errors: Vec<FieldError>,
    echo: Vec<(String, Vec<(String, String)>)>,
}

type Check<'a, T> = &'a dyn Fn(&T) -> Result<(), String>;

fn positive(v: &f64) -> Result<(), String> {
    if *v > 0.0 {
        Ok(())
    } else {
        Err(format!("{v} violates > 0"))
    }
}

fn at_least<const N: usize>(v: &usize) -> Result<(), String> {
    if *v >= N {
        Ok(())
    } else {
        Err(format!("{v} violates >= {N}"))
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_points(v: &[Vec<f64>]) -> String {
    v.iter().map(|p| fmt_list(p)).collect::<Vec<_>>().join("; ")
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("'{t}' is not a finite number"))
        })
        .collect()
}

impl Ctx {
    fn error(&mut self, field: &str, message: &str) {
        self.errors.push(FieldError { field: field.to_string(), message: message.to_string() });
    }

    fn record(&mut self, section: &str, key: &str, value: String) {
        match self.echo.iter_mut().find(|(s, _)| s == section) {
            Some((_, kv)) => kv.push((key.to_string(), value)),
            None => self.echo.push((section.to_string(), vec![(key.to_string(), value)])),
        }
    }

    fn finish(&mut self, sec: Section) {
        for ((k, _), used) in sec.entries.iter().zip(&sec.used) {
            if !used {
                self.error(&format!("{}.{k}", sec.name), "unknown key");
            }
        }
    }

    fn text(&mut self, sec: &mut Section, key: &str, default: Option<&str>) -> Option<String> {
        let v = sec.get(key).or_else(|| default.map(str::to_string));
        match v {
            Some(v) if !v.is_empty() => {
                self.record(&sec.name, key, v.clone());
                Some(v)
            }
            _ => {
                self.error(&format!("{}.{key}", sec.name), "required key is missing");
                None
            }
        }
    }

    fn parse<T: std::str::FromStr + ToString>(&mut self, sec: &mut Section, key: &str, default: Option<T>, what: &str) -> Option<T> {
        self.value(sec, key, default, &|s: &str| s.parse::<T>().map_err(|_| format!("'{s}' is not {what}")), &|_| Ok(()), &|v: &T| v.to_string())
    }

    fn value<T>(
        &mut self,
        sec: &mut Section,
        key: &str,
        default: Option<T>,
        parse: &dyn Fn(&str) -> Result<T, String>,
        check: Check<T>,
        show: &dyn Fn(&T) -> String,
    ) -> Option<T> {
        let field = format!("{}.{key}", sec.name);
        let v = match sec.get(key) {
            Some(raw) => match parse(&raw) {
                Ok(v) => v,
                Err(m) => {
                    self.error(&field, &m);
                    return None;
                }
            },
            None => match default {
                Some(d) => d,
                None => {
                    self.error(&field, "required key is missing");
                    return None;
                }
            },
        };
        if let Err(m) = check(&v) {
            self.error(&field, &m);
            return None;
        }
        self.record(&sec.name, key, show(&v));
        Some(v)
    }

    fn num(&mut self, sec: &mut Section, key: &str, default: Option<f64>, check: Check<f64>) -> Option<f64> {
        let parse = |s: &str| -> Result<f64, String> {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("'{s}' is not a finite number"))
        };
        self.value(sec, key, default, &parse, check, &|v: &f64| v.to_string())
    }

    fn count(&mut self, sec: &mut Section, key: &str, default: Option<usize>, check: Check<usize>) -> Option<usize> {
        let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("'{s}' is not a non-negative integer"));
        self.value(sec, key, default, &parse, check, &|v: &usize| v.to_string())
    }

    fn list(&mut self, sec: &mut Section, key: &str, default: Option<Vec<f64>>, check: Check<Vec<f64>>) -> Option<Vec<f64>> {
        self.value(sec, key, default, &parse_list, check, &|v: &Vec<f64>| fmt_list(v))
    }

    /// A point of `R^dim`; a single value is broadcast to every coordinate.
    fn point(&mut self, sec: &mut Section, key: &str, default: f64, dim: usize) -> Option<Vec<f64>> {
        let parse = |s: &str| -> Result<Vec<f64>, String> {
            let v = parse_list(s)?;
            match v.len() {
                1 => Ok(vec![v[0]; dim]),
                n if n == dim => Ok(v),
                n => Err(format!("{n} coordinates given, dimension is {dim}")),
            }
        };
        self.value(sec, key, Some(vec![default; dim]), &parse, &|_| Ok(()), &|v: &Vec<f64>| fmt_list(v))
    }

    /// `;`-separated points of `R^dim`, each broadcast like [`Ctx::point`].
    fn points(&mut self, sec: &mut Section, key: &str, default: Vec<Vec<f64>>, dim: usize) -> Option<Vec<Vec<f64>>> {
        let parse = |s: &str| -> Result<Vec<Vec<f64>>, String> {
            s.split(';')
                .map(|p| {
                    let v = parse_list(p)?;
                    match v.len() {
                        1 => Ok(vec![v[0]; dim]),
                        n if n == dim => Ok(v),
                        n => Err(format!("point '{}' has {n} coordinates, dimension is {dim}", p.trim())),
                    }
                })
                .collect()
        };
        self.value(sec, key, Some(default), &parse, &|_| Ok(()), &|v: &Vec<Vec<f64>>| fmt_points(v))
    }

    fn noise(&mut self, sec: &mut Section, kind: Kind) -> Option<NoiseSpec> {
        let has_seq = sec.entries.iter().any(|(k, _)| k == "hurst_seq");
        let has_single = sec.entries.iter().any(|(k, _)| k == "hurst");
        let rough = |h: &f64| -> Result<(), String> {
            if *h > 0.0 && *h < 0.5 {
                Ok(())
            } else {
                Err(format!("H = {h} violates H ∈ (0,1/2)"))
            }
        };
        let hurst = if has_seq && has_single {
            self.error("noise.hurst", "give either hurst or hurst_seq, not both");
            sec.get("hurst");
            sec.get("hurst_seq");
            sec.get("weights");
            None
        } else if has_seq {
            if !kind.allows_superposition() {
                self.error("noise.hurst_seq", &format!("superposed noise is not supported by kind {kind}"));
            }
            let seq = self.list(sec, "hurst_seq", None, &|v: &Vec<f64>| {
                v.iter().try_for_each(rough)?;
                if v.windows(2).any(|w| w[1] >= w[0]) {
                    return Err("Hurst sequence must be strictly decreasing".into());
                }
                Ok(())
            });
            let weights = if sec.entries.iter().any(|(k, _)| k == "weights") {
                self.list(sec, "weights", None, &|_| Ok(())).map(Some)
            } else {
                Some(None)
            };
            match (seq, weights) {
                (Some(seq), Some(w)) => {
                    if let Some(w) = &w {
                        if let Err(e) = SuperpositionSpec::new(seq.clone(), w.clone()) {
                            self.error("noise.weights", &e.to_string());
                        }
                    }
                    Some(HurstSpec::Superposed { seq, weights: w })
                }
                _ => None,
            }
        } else {
            self.num(sec, "hurst", None, &rough).map(HurstSpec::Single)
        };
        let default_method = match (&hurst, kind) {
            (Some(HurstSpec::Superposed { .. }), _) => "superposed",
            (_, Kind::Girsanov) => "volterra",
            _ => "circulant",
        };
        let method = self.value(
            sec,
            "method",
            Some(Method::parse(default_method).expect("known method")),
            &|s: &str| Method::parse(s).map_err(|e| e.to_string()),
            &|m: &Method| match m {
                Method::CovarianceCholesky | Method::Circulant | Method::Volterra | Method::Superposed => Ok(()),
                other => Err(format!("method '{other}' cannot generate paths")),
            },
            &|m: &Method| m.as_str().to_string(),
        );
        let horizon = self.num(sec, "horizon", Some(1.0), &positive);
        let n_steps = self.count(sec, "n_steps", Some(256), &at_least::<1>);
        let dim = self.count(sec, "dim", Some(1), &|d: &usize| {
            if (1..=MAX_DIM).contains(d) {
                Ok(())
            } else {
                Err(format!("{d} violates 1 <= dim <= {MAX_DIM}"))
            }
        });
        if let (Some(m), Some(h)) = (method, &hurst) {
            let superposed = matches!(h, HurstSpec::Superposed { .. });
            if superposed != (m == Method::Superposed) {
                self.error("noise.method", "method 'superposed' goes with hurst_seq, the other methods with hurst");
            }
            if kind == Kind::Girsanov && m != Method::Volterra {
                self.error("noise.method", "girsanov needs Wiener increments: method must be volterra");
            }
        }
        Some(NoiseSpec { hurst: hurst?, method: method?, horizon: horizon?, n_steps: n_steps?, dim: dim? })
    }

    fn params(&mut self, sec: &mut Section, kind: Kind, noise: Option<&NoiseSpec>, dim: usize) -> Option<Params> {
        let origin = vec![0.0; dim];
        match kind {
            Kind::FbmGen => Some(Params::FbmGen { n_paths: self.count(sec, "n_paths", Some(1), &at_least::<1>)? }),
            Kind::OdeSolve => Some(Params::OdeSolve { starts: self.points(sec, "starts", vec![origin], dim)? }),
            Kind::Uniqueness => {
                let x0 = self.point(sec, "x0", 0.0, dim);
                let a = self.point(sec, "init_a", 0.5, dim);
                let b = self.point(sec, "init_b", -0.5, dim);
                let n_paths = self.count(sec, "n_paths", Some(100), &at_least::<2>);
                let tol = self.optional_num(sec, "tol", &positive);
                let max_iter = self.optional_count(sec, "max_iter");
                Some(Params::Uniqueness(UniquenessConfig {
                    x0: x0?,
                    init_pairs: vec![(a?, b?)],
                    n_paths: n_paths?,
                    tol: tol?,
                    max_iter: max_iter?,
                }))
            }
            Kind::Moment => {
                let x0 = self.point(sec, "x0", 0.0, dim);
                let deltas = self.list(sec, "deltas", Some(vec![1e-3, 1e-2, 1e-1]), &|v: &Vec<f64>| {
                    if v.len() < 3 {
                        return Err(format!("{} distances given, the fit needs >= 3", v.len()));
                    }
                    v.iter().try_for_each(positive)
                });
                let p = self.value(
                    sec,
                    "p",
                    Some(2u32),
                    &|s: &str| s.parse::<u32>().map_err(|_| format!("'{s}' is not an integer")),
                    &|p: &u32| {
                        if *p >= 2 && p.is_power_of_two() {
                            Ok(())
                        } else {
                            Err(format!("p = {p} violates p = 2^k, k >= 1"))
                        }
                    },
                    &|p: &u32| p.to_string(),
                );
                let n_replicates = self.count(sec, "n_replicates", Some(2000), &at_least::<2>);
                Some(Params::Moment { x0: x0?, deltas: deltas?, p: p?, n_replicates: n_replicates? })
            }
            Kind::Tail => {
                let h1 = self.point(sec, "h1", 0.0, dim);
                let h2 = self.point(sec, "h2", 0.05, dim);
                let grid = noise.map(NoiseSpec::grid);
                let r = self.num(sec, "r", Some(0.0), &|r: &f64| match grid {
                    Some(g) if *r < g.horizon() && g.index_of(*r).is_some() => Ok(()),
                    Some(_) => Err(format!("r = {r} must be a grid node below the horizon")),
                    None => Ok(()),
                });
                let lambdas = self.list(sec, "lambdas", Some((1..=30).map(|k| k as f64 / 10.0).collect()), &|v: &Vec<f64>| {
                    v.iter().try_for_each(positive)?;
                    if v.windows(2).any(|w| w[1] <= w[0]) {
                        return Err("lambdas must be strictly increasing".into());
                    }
                    Ok(())
                });
                let n_paths = self.count(sec, "n_paths", Some(10_000), &at_least::<2>);
                Some(Params::Tail(TailConfig { h1: h1?, h2: h2?, r: r?, lambdas: lambdas?, n_paths: n_paths? }))
            }
            Kind::Girsanov => Some(Params::Girsanov { n_paths: self.count(sec, "n_paths", Some(10_000), &at_least::<2>)? }),
            Kind::Transport => {
                let lo = self.num(sec, "lo", Some(-3.0), &|_| Ok(()));
                let hi = self.num(sec, "hi", Some(3.0), &|_| Ok(()));
                if let (Some(l), Some(h)) = (lo, hi) {
                    if !(l < h) {
                        self.error("transport.hi", &format!("lattice needs lo < hi, got [{l}, {h}]"));
                    }
                }
                let points = self.count(sec, "points", Some(241), &|n: &usize| {
                    if *n < 3 {
                        Err(format!("{n} violates >= 3"))
                    } else if n.checked_pow(dim as u32).is_none_or(|m| m > 10_000_000) {
                        Err(format!("{n}^{dim} lattice points exceed the 1e7 guard"))
                    } else {
                        Ok(())
                    }
                });
                let u0_amp = self.num(sec, "u0_amp", Some(1.0), &|_| Ok(()));
                let u0_center = self.point(sec, "u0_center", 0.0, dim);
                let u0_width = self.num(sec, "u0_width", Some(0.5), &positive);
                let n_steps = noise.map_or(1, |n| n.n_steps);
                let t_steps = self.count(sec, "t_steps", Some(4), &|k: &usize| {
                    if *k >= 1 && n_steps % k == 0 {
                        Ok(())
                    } else {
                        Err(format!("t_steps = {k} must be >= 1 and divide noise.n_steps = {n_steps}"))
                    }
                });
                let levels = self.value(
                    sec,
                    "levels",
                    Some(vec![(64, 121), (128, 241), (256, 481)]),
                    &parse_levels,
                    &|_| Ok(()),
                    &|v: &Vec<(usize, usize)>| v.iter().map(|(a, b)| format!("{a}x{b}")).collect::<Vec<_>>().join(", "),
                );
                let eta_center = self.point(sec, "eta_center", 0.0, dim);
                let eta_radius = self.point(sec, "eta_radius", 1.0, dim);
                if let Some(r) = &eta_radius {
                    if r.iter().any(|v| !(*v > 0.0)) {
                        self.error("transport.eta_radius", "radii violate > 0");
                    }
                }
                Some(Params::Transport(TransportParams {
                    lo: lo?,
                    hi: hi?,
                    points: points?,
                    u0_amp: u0_amp?,
                    u0_center: u0_center?,
                    u0_width: u0_width?,
                    t_steps: t_steps?,
                    levels: levels?,
                    eta_center: eta_center?,
                    eta_radius: eta_radius?,
                }))
            }
            Kind::Continuity => {
                let lo = self.num(sec, "lo", Some(-4.0), &|_| Ok(()));
                let hi = self.num(sec, "hi", Some(4.0), &|_| Ok(()));
                if let (Some(l), Some(h)) = (lo, hi) {
                    if !(l < h) {
                        self.error("continuity.hi", &format!("domain needs lo < hi, got [{l}, {h}]"));
                    }
                }
                let cells = self.count(sec, "cells", Some(1000), &at_least::<2>);
                let density_center = self.point(sec, "density_center", 0.0, dim);
                let density_width = self.num(sec, "density_width", Some(0.7), &positive);
                let per_cell = self.count(sec, "per_cell", Some(10), &at_least::<1>);
                let test_centers = self.points(sec, "test_centers", vec![vec![-1.0; dim], origin, vec![1.0; dim]], dim);
                let test_radius = self.num(sec, "test_radius", Some(0.75), &positive);
                Some(Params::Continuity(ContinuityParams {
                    lo: lo?,
                    hi: hi?,
                    cells: cells?,
                    density_center: density_center?,
                    density_width: density_width?,
                    per_cell: per_cell?,
                    test_centers: test_centers?,
                    test_radius: test_radius?,
                }))
            }
            Kind::Shuffle => {
                let m = self.count(sec, "m", Some(2), &at_least::<1>);
                let n = self.count(sec, "n", Some(2), &at_least::<1>);
                if let (Some(a), Some(b)) = (m, n) {
                    if a + b > 8 {
                        self.error("shuffle.n", &format!("m + n = {} violates m + n <= 8", a + b));
                    }
                }
                let cases = self.count(sec, "cases", Some(1), &at_least::<1>);
                let degree = self.count(sec, "degree", Some(3), &|d: &usize| {
                    if *d <= 8 {
                        Ok(())
                    } else {
                        Err(format!("{d} violates degree <= 8"))
                    }
                });
                let theta = self.num(sec, "theta", Some(0.0), &|_| Ok(()));
                let t = self.num(sec, "t", Some(1.0), &|_| Ok(()));
                if let (Some(a), Some(b)) = (theta, t) {
                    if !(a < b) {
                        self.error("shuffle.t", &format!("t = {b} violates theta < t"));
                    }
                }
                Some(Params::Shuffle { m: m?, n: n?, cases: cases?, degree: degree?, theta: theta?, t: t? })
            }
            Kind::MalliavinNorm => {
                let x0 = self.point(sec, "x0", 0.0, dim);
                let beta = self.num(sec, "beta", Some(0.1), &|b: &f64| {
                    if *b > 0.0 && *b < 0.5 {
                        Ok(())
                    } else {
                        Err(format!("beta = {b} violates beta ∈ (0,1/2)"))
                    }
                });
                let n_replicates = self.count(sec, "n_replicates", Some(30), &at_least::<2>);
                Some(Params::MalliavinNorm { x0: x0?, beta: beta?, n_replicates: n_replicates? })
            }
        }
    }

    /// `Some(None)` when the key is absent.
    fn optional_num(&mut self, sec: &mut Section, key: &str, check: Check<f64>) -> Option<Option<f64>> {
        if sec.entries.iter().any(|(k, _)| k == key) {
            self.num(sec, key, None, check).map(Some)
        } else {
            Some(None)
        }
    }

    fn optional_count(&mut self, sec: &mut Section, key: &str) -> Option<Option<usize>> {
        if sec.entries.iter().any(|(k, _)| k == key) {
            self.count(sec, key, None, &at_least::<1>).map(Some)
        } else {
            Some(None)
        }
    }
}

fn parse_levels(s: &str) -> Result<Vec<(usize, usize)>, String> {
    let v: Vec<(usize, usize)> = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            let (a, b) = t.split_once('x').ok_or_else(|| format!("level '{t}' is not <time steps>x<points>"))?;
            let nt = a.trim().parse::<usize>().map_err(|_| format!("'{a}' is not a step count"))?;
            let nx = b.trim().parse::<usize>().map_err(|_| format!("'{b}' is not a point count"))?;
            if nt == 0 || nx < 3 {
                return Err(format!("level '{t}' needs >= 1 time step and >= 3 points"));
            }
            Ok((nt, nx))
        })
        .collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("no refinement levels".into());
    }
    Ok(v)
}
