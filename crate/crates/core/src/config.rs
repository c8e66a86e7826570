//! TOML experiment configuration and its validated form.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::csv::read_density_csv;
use crate::field::{Axis, DensityField, Grid, DEFAULT_FLOOR_RATIO};
use crate::potential::{CubicSpline, Potential, PotentialFamily};
use crate::solver_fk::{interpolant, FkOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub family: String,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub v0: Option<f64>,
    pub knots: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: String,
    pub mean: Option<Vec<f64>>,
    pub var: Option<f64>,
    pub components: Option<Vec<Component>>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub save_times: Option<Vec<f64>>,
    pub save_count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: String,
    pub bandwidth: Option<f64>,
    pub beta_margin: f64,
    pub paths: usize,
    pub dt_path: Option<f64>,
    pub probes: Option<Vec<f64>>,
    pub probe_time: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: "fd".into(),
            bandwidth: None,
            beta_margin: 0.1,
            paths: 100_000,
            dt_path: None,
            probes: None,
            probe_time: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VerdictFromConfig {
    Time(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub mutual: Option<bool>,
    pub floor_ratio: f64,
    pub verdict_from: Option<VerdictFromConfig>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mutual: None,
            floor_ratio: DEFAULT_FLOOR_RATIO,
            verdict_from: None,
        }
    }
}

/// Pass thresholds for the verification suite and the verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Second-difference tolerance for the convexity verdict; default `1e-4·max|I|`.
    pub convexity: Option<f64>,
    pub gamma_margin: f64,
    pub entropy_d1_rel: f64,
    pub entropy_d1_abs: f64,
    pub entropy_d2_rel: f64,
    pub entropy_d2_abs: f64,
    pub mutual_d1_rel: f64,
    pub mutual_d1_abs: f64,
    pub mutual_d2_rel: f64,
    pub mutual_d2_abs: f64,
    pub identity_rel: f64,
    pub fk_sigmas: f64,
    pub fk_abs: f64,
    pub mass: f64,
    pub monotone_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            convexity: None,
            gamma_margin: 1e-3,
            entropy_d1_rel: 0.02,
            entropy_d1_abs: 1e-3,
            entropy_d2_rel: 0.05,
            entropy_d2_abs: 1e-3,
            mutual_d1_rel: 0.03,
            mutual_d1_abs: 1e-3,
            mutual_d2_rel: 0.07,
            mutual_d2_abs: 5e-3,
            identity_rel: 1e-3,
            fk_sigmas: 3.0,
            fk_abs: 1e-3,
            mass: 1e-8,
            monotone_slack: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub members: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fd,
    Fk,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerdictFrom {
    /// From the first sample if `μ_0` qualifies, else from the first qualifying save time.
    Auto,
    Time(f64),
}

/// Identity checks run by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Member {
    Conservation,
    EntropyDerivatives,
    MutualDerivatives,
    KvDecomposition,
    IntegrationByParts,
    FkVsFd,
    BetaInvariance,
}

impl Member {
    pub const ALL: [Member; 7] = [
        Member::Conservation,
        Member::EntropyDerivatives,
        Member::MutualDerivatives,
        Member::KvDecomposition,
        Member::IntegrationByParts,
        Member::FkVsFd,
        Member::BetaInvariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Member::Conservation => "conservation",
            Member::EntropyDerivatives => "entropy_derivatives",
            Member::MutualDerivatives => "mutual_derivatives",
            Member::KvDecomposition => "kv_decomposition",
            Member::IntegrationByParts => "integration_by_parts",
            Member::FkVsFd => "fk_vs_fd",
            Member::BetaInvariance => "beta_invariance",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Pointwise density usable off the grid.
pub type Pdf<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

/// Initial density as configured: closed form where available.
#[derive(Debug, Clone)]
pub enum InitialDensity {
    Gaussians(Vec<Component>),
    Tabulated(DensityField<f64>),
}

impl InitialDensity {
    /// Pointwise normalized density, usable off the grid.
    pub fn pdf(&self) -> Pdf<'_> {
        match self {
            InitialDensity::Gaussians(comps) => {
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                Box::new(move |x: &[f64]| {
                    comps
                        .iter()
                        .map(|c| {
                            let d = c.mean.len() as f64;
                            let r2: f64 = x.iter().zip(&c.mean).map(|(a, m)| (a - m) * (a - m)).sum();
                            c.weight / total * (-r2 / (2.0 * c.var)).exp()
                                / (2.0 * std::f64::consts::PI * c.var).powf(d / 2.0)
                        })
                        .sum()
                })
            }
            InitialDensity::Tabulated(d) => Box::new(interpolant(d)),
        }
    }
}

/// Validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub grid: Grid<f64>,
    pub potential: Potential<f64>,
    pub initial: InitialDensity,
    pub mu0: DensityField<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub save_times: Vec<f64>,
    pub method: Method,
    pub bandwidth: f64,
    pub beta_margin: f64,
    pub fk: FkOptions,
    pub probes: Option<Vec<Vec<f64>>>,
    pub probe_time: f64,
    pub mutual: bool,
    pub floor_ratio: f64,
    pub verdict_from: VerdictFrom,
    pub tolerances: Tolerances,
    pub members: Vec<Member>,
}

impl Experiment {
    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.fk.seed = seed;
        self
    }
}

fn cfg(field: &str, message: impl Into<String>) -> Error {
    Error::config(field, message)
}

fn need<T: Clone>(v: &Option<T>, field: &str, why: &str) -> Result<T> {
    v.clone().ok_or_else(|| cfg(field, format!("required {why}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into());
            cfg(&field, msg.trim().to_string())
        })
    }

    /// Validates and resolves the config; relative file paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<Experiment> {
        let g = &self.grid;
        let dim = g.n.len();
        if !(1..=2).contains(&dim) || g.lo.len() != dim || g.hi.len() != dim {
            return Err(cfg("grid", "lo, hi and n must have the same length, 1 or 2"));
        }
        let axes = (0..dim)
            .map(|k| Axis {
                lo: g.lo[k],
                hi: g.hi[k],
                n: g.n[k],
            })
            .collect();
        let grid = Grid::new(axes).map_err(|e| cfg("grid", e.to_string()))?;
        let potential = self.potential_on(&grid)?;
        let (initial, mu0) = self.initial_on(&grid, base)?;

        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(cfg("time.t_end", "must be positive"));
        }
        let h = grid.h_min();
        let dt = t.dt.unwrap_or(h * h);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(cfg("time.dt", "must be positive"));
        }
        let save_times = match (&t.save_times, t.save_count) {
            (Some(_), Some(_)) => return Err(cfg("time", "give either save_times or save_count, not both")),
            (Some(s), None) => s.clone(),
            (None, Some(c)) if c >= 1 => (1..=c).map(|k| t.t_end * k as f64 / c as f64).collect(),
            _ => return Err(cfg("time.save_count", "required (or save_times), at least 1")),
        };
        if save_times.iter().any(|s| !(*s >= 0.0 && *s <= t.t_end)) {
            return Err(cfg(
                "time.save_times",
                format!("every save time must lie in [0, {}]", t.t_end),
            ));
        }
        if save_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(cfg("time.save_times", "must be strictly increasing"));
        }

        let s = &self.solver;
        let method = match s.method.as_str() {
            "fd" => Method::Fd,
            "fk" => Method::Fk,
            "both" => Method::Both,
            other => {
                return Err(cfg(
                    "solver.method",
                    format!("unknown method `{other}`, expected fd, fk or both"),
                ))
            }
        };
        let hmax = (0..dim).map(|k| grid.h(k)).fold(0.0, f64::max);
        let bandwidth = s.bandwidth.unwrap_or(2.0 * hmax);
        if bandwidth < 2.0 * hmax * (1.0 - 1e-12) {
            return Err(cfg(
                "solver.bandwidth",
                format!("must be at least twice the grid spacing ({})", 2.0 * hmax),
            ));
        }
        if !(s.beta_margin >= 0.0) {
            return Err(cfg("solver.beta_margin", "must be nonnegative"));
        }
        if s.paths < crate::solver_fk::MIN_PATHS {
            return Err(cfg(
                "solver.paths",
                format!("must be at least {}", crate::solver_fk::MIN_PATHS),
            ));
        }
        if let Some(d) = s.dt_path {
            if !(d > 0.0) {
                return Err(cfg("solver.dt_path", "must be positive"));
            }
        }
        let probes = match &s.probes {
            None => None,
            Some(p) if !p.is_empty() && p.len() % dim == 0 => {
                let pts: Vec<Vec<f64>> = p.chunks(dim).map(<[f64]>::to_vec).collect();
                if let Some(bad) = pts.iter().find(|x| !grid.contains(x)) {
                    return Err(cfg("solver.probes", format!("probe {bad:?} lies outside the grid")));
                }
                Some(pts)
            }
            Some(_) => {
                return Err(cfg(
                    "solver.probes",
                    format!("need a nonempty list of {dim}-coordinate points"),
                ))
            }
        };
        let probe_time = s.probe_time.unwrap_or(t.t_end);
        if !(probe_time > 0.0 && probe_time <= t.t_end) {
            return Err(cfg("solver.probe_time", format!("must lie in (0, {}]", t.t_end)));
        }

        let a = &self.analysis;
        let mutual = a.mutual.unwrap_or(dim == 1);
        if mutual && dim != 1 {
            return Err(cfg("analysis.mutual", "mutual-information analysis needs a 1D grid"));
        }
        if !(a.floor_ratio > 0.0 && a.floor_ratio <= 1e-6) {
            return Err(cfg("analysis.floor_ratio", "must lie in (0, 1e-6]"));
        }
        let verdict_from = match &a.verdict_from {
            None => VerdictFrom::Auto,
            Some(VerdictFromConfig::Keyword(k)) if k == "auto" => VerdictFrom::Auto,
            Some(VerdictFromConfig::Keyword(k)) => {
                return Err(cfg(
                    "analysis.verdict_from",
                    format!("expected a time or \"auto\", got `{k}`"),
                ))
            }
            Some(VerdictFromConfig::Time(t0)) if *t0 >= 0.0 => VerdictFrom::Time(*t0),
            Some(VerdictFromConfig::Time(_)) => return Err(cfg("analysis.verdict_from", "must be nonnegative")),
        };
        let members = match &self.verify.members {
            None => Member::ALL.to_vec(),
            Some(list) => list
                .iter()
                .map(|m| Member::parse(m).ok_or_else(|| cfg("verify.members", format!("unknown member `{m}`"))))
                .collect::<Result<_>>()?,
        };
        Ok(Experiment {
            seed: self.seed,
            output: self.output.as_ref().map(|p| base.join(p)),
            grid,
            potential,
            initial,
            mu0,
            t_end: t.t_end,
            dt,
            save_times,
            method,
            bandwidth,
            beta_margin: s.beta_margin,
            fk: FkOptions {
                paths: s.paths,
                dt_path: s.dt_path,
                seed: self.seed,
            },
            probes,
            probe_time,
            mutual,
            floor_ratio: a.floor_ratio,
            verdict_from,
            tolerances: self.tolerances,
            members,
        })
    }

    fn potential_on(&self, grid: &Grid<f64>) -> Result<Potential<f64>> {
        let p = &self.potential;
        let family = match p.family.as_str() {
            "quadratic" => PotentialFamily::Quadratic {
                alpha: need(&p.alpha, "potential.alpha", "for the quadratic family")?,
            },
            "quartic" => PotentialFamily::EvenQuartic {
                a: need(&p.a, "potential.a", "for the quartic family")?,
                b: need(&p.b, "potential.b", "for the quartic family")?,
            },
            "constant" => PotentialFamily::Constant {
                v0: p.v0.unwrap_or(0.0),
            },
            "tabulated" => {
                let knots = need(&p.knots, "potential.knots", "for the tabulated family")?;
                let values = need(&p.values, "potential.values", "for the tabulated family")?;
                PotentialFamily::Tabulated(
                    CubicSpline::natural(knots, values).map_err(|e| cfg("potential.knots", e.to_string()))?,
                )
            }
            other => {
                return Err(cfg(
                    "potential.family",
                    format!("unknown family `{other}`, expected quadratic, quartic, constant or tabulated"),
                ))
            }
        };
        Potential::on_grid(family, grid).map_err(|e| cfg("potential", e.to_string()))
    }

    fn initial_on(&self, grid: &Grid<f64>, base: &Path) -> Result<(InitialDensity, DensityField<f64>)> {
        let i = &self.initial;
        let dim = grid.dim();
        let check = |c: &Component, field: &str| -> Result<()> {
            if c.mean.len() != dim {
                return Err(cfg(field, format!("mean must have {dim} coordinates")));
            }
            if !(c.var > 0.0 && c.var.is_finite()) {
                return Err(cfg(field, "variance must be positive"));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(cfg(field, "weight must be positive"));
            }
            Ok(())
        };
        let initial = match i.kind.as_str() {
            "gaussian" => {
                let c = Component {
                    weight: 1.0,
                    mean: need(&i.mean, "initial.mean", "for a gaussian")?,
                    var: need(&i.var, "initial.var", "for a gaussian")?,
                };
                check(&c, "initial")?;
                InitialDensity::Gaussians(vec![c])
            }
            "mixture" => {
                let comps = need(&i.components, "initial.components", "for a mixture")?;
                if comps.is_empty() {
                    return Err(cfg("initial.components", "must not be empty"));
                }
                for c in &comps {
                    check(c, "initial.components")?;
                }
                InitialDensity::Gaussians(comps)
            }
            "tabulated" => {
                let file = base.join(need(&i.file, "initial.file", "for a tabulated density")?);
                if !file.exists() {
                    return Err(cfg("initial.file", format!("{} does not exist", file.display())));
                }
                let d = read_density_csv(&file).map_err(|e| cfg("initial.file", e.to_string()))?;
                if d.grid().dim() != dim {
                    return Err(cfg("initial.file", "tabulated density has the wrong dimension"));
                }
                InitialDensity::Tabulated(d)
            }
            other => {
                return Err(cfg(
                    "initial.kind",
                    format!("unknown kind `{other}`, expected gaussian, mixture or tabulated"),
                ))
            }
        };
        let pdf = initial.pdf();
        let mu0 = DensityField::from_fn(grid.clone(), |x| pdf(&x[..dim])).map_err(|e| cfg("initial", e.to_string()))?;
        drop(pdf);
        Ok((initial, mu0))
    }
}

/// Reads and validates a config file.
pub fn load(path: &Path) -> Result<Experiment> {
    let text =
        std::fs::read_to_string(path).map_err(|e| cfg("--config", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::from_toml(&text)?.resolve(base)
}
