//! Experiment driver: evolve, tabulate functionals over time, check the derivative
//! identities and issue the log-concavity and convexity verdicts.

use std::fmt::Write as _;

use crate::config::{Experiment, Member, Tolerances, VerdictFrom};
use crate::error::{Error, Result};
use crate::field::{diff2, log_field, DensityField, Grid, JointDensity};
use crate::functionals::{Evaluator, MutualValues, MAX_CLIPPED_FRACTION};
use crate::potential::{choose_beta, steady_state, Potential, SchrodingerPotential};
use crate::scalar::{min_eigenvalue, Mat2};
use crate::solver_fd::{build_transition_kernel, evolve, FlowTrajectory, KernelPropagator};
use crate::solver_fk::{fk_density, fk_gamma, heat_kernel_density, FkEstimate, FkOptions};

pub const REPORT_HEADER: &str = "t,H_rel,J_rel,K_rel,G_rel,I,Phi,Psi,dI_analytic,d2I_analytic,gamma_margin";

/// One save time of an [`InfoReport`]. Mutual columns are `None` when disabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoRow {
    pub t: f64,
    pub h_rel: f64,
    pub j_rel: f64,
    pub k_rel: f64,
    pub g_rel: f64,
    pub mutual: Option<MutualValues<f64>>,
    pub gamma_margin: f64,
    pub excluded_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoReport {
    pub rows: Vec<InfoRow>,
    /// Margin of `μ_0` for `V/2`-relative log-concavity.
    pub precondition_margin: f64,
}

impl InfoReport {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    fn mutual_column(&self, f: impl Fn(&MutualValues<f64>) -> f64) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.mutual.as_ref().map(&f)).collect()
    }

    pub fn mutual_information(&self) -> Option<Vec<f64>> {
        self.mutual_column(|m| m.i)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let m = r.mutual.unwrap_or(MutualValues {
                i: f64::NAN,
                phi: f64::NAN,
                psi: f64::NAN,
                d1_analytic: f64::NAN,
                d2_analytic: f64::NAN,
                excluded_mass: f64::NAN,
            });
            let cols = [
                r.t,
                r.h_rel,
                r.j_rel,
                r.k_rel,
                r.g_rel,
                m.i,
                m.phi,
                m.psi,
                m.d1_analytic,
                m.d2_analytic,
                r.gamma_margin,
            ];
            let line: Vec<String> = cols.iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything computed by [`run_trajectory`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: FlowTrajectory<f64>,
    pub nu: DensityField<f64>,
    pub report: InfoReport,
}

/// Smallest eigenvalue of `−∇²log μ − ½∇²V` over nodes with trusted derivatives.
///
/// The same number is the log-concavity margin of `γ = e^{V/2} μ`.
pub fn check_relative_log_concavity(d: &DensityField<f64>, p: &Potential<f64>, floor_ratio: f64) -> Result<f64> {
    let grid = d.grid();
    let log = log_field(d, floor_ratio)?;
    if log.clipped_fraction() > MAX_CLIPPED_FRACTION {
        return Err(Error::Resolution(format!(
            "{:.1}% of nodes fall below the log floor",
            100.0 * log.clipped_fraction()
        )));
    }
    let usable = log.usable(grid);
    let hess = log_hessian(d.values(), &log.values, &usable, grid);
    let hv = p.sample_hessian(grid)?;
    let dim = grid.dim();
    let mut margin = f64::INFINITY;
    for i in (0..grid.len()).filter(|&i| usable[i]) {
        let mut m = [[0.0; 2]; 2];
        for r in 0..dim {
            for c in 0..dim {
                m[r][c] = -hess[i][r][c] - 0.5 * hv[i][r][c];
            }
        }
        margin = margin.min(min_eigenvalue(&m, dim));
    }
    if margin.is_infinite() {
        return Err(Error::Resolution("no node has a usable log Hessian".into()));
    }
    Ok(margin)
}

/// `ln(a/b)` without forming the logs of `a` and `b`, whose rounding grows with their size.
fn log_ratio(a: f64, b: f64) -> f64 {
    ((a - b) / b).ln_1p()
}

/// Hessian of `log μ`. Interior entries at usable nodes are built from log ratios of
/// neighbors, so they do not inherit the rounding of large negative logs in the tails.
fn log_hessian(values: &[f64], log: &[f64], usable: &[bool], grid: &Grid<f64>) -> Vec<Mat2<f64>> {
    let mut hess = diff2(log, grid);
    let dim = grid.dim();
    for i in (0..grid.len()).filter(|&i| usable[i]) {
        let mi = grid.multi_index(i);
        let inside = (0..dim).all(|k| mi[k] > 0 && mi[k] + 1 < grid.n(k));
        if !inside {
            continue;
        }
        for k in 0..dim {
            let s = grid.stride(k);
            let h = grid.h(k);
            hess[i][k][k] = (log_ratio(values[i + s], values[i]) - log_ratio(values[i], values[i - s])) / (h * h);
        }
        if dim == 2 {
            let (sx, sy) = (grid.stride(0), grid.stride(1));
            let up = log_ratio(values[i + sx + sy], values[i + sx - sy]);
            let down = log_ratio(values[i - sx + sy], values[i - sx - sy]);
            let mixed = (up - down) / (4.0 * grid.h(0) * grid.h(1));
            hess[i][0][1] = mixed;
            hess[i][1][0] = mixed;
        }
    }
    hess
}

/// Log-concavity margin of `γ_t` at every saved time.
pub fn check_gamma_log_concavity(
    traj: &FlowTrajectory<f64>,
    p: &Potential<f64>,
    floor_ratio: f64,
) -> Result<Vec<(f64, f64)>> {
    traj.times
        .iter()
        .zip(&traj.fields)
        .map(|(t, f)| {
            Ok((
                *t,
                check_relative_log_concavity(f, p, floor_ratio).map_err(|e| e.at_time(*t))?,
            ))
        })
        .collect()
}

/// Evolves `μ_0`, propagates the transition kernel and tabulates every functional.
pub fn run_trajectory(exp: &Experiment) -> Result<RunOutput> {
    let grid = &exp.grid;
    let p = &exp.potential;
    let ev = Evaluator::new(exp.floor_ratio)?;
    let nu = steady_state(p, grid)?.density;
    let hv = p.sample_hessian(grid)?;
    let precondition_margin = check_relative_log_concavity(&exp.mu0, p, exp.floor_ratio).map_err(|e| e.at_time(0.0))?;
    let trajectory = evolve(&exp.mu0, p, exp.t_end, exp.dt, &exp.save_times)?;
    log::info!(
        "evolved {} save times, {} implicit steps",
        trajectory.times.len(),
        trajectory.meta.steps
    );
    let v = p.sample(grid)?;
    let mut propagator = if exp.mutual {
        if exp.save_times.first() == Some(&0.0) {
            log::warn!("mutual information is infinite at t = 0; that row is left out of the report");
        }
        Some(KernelPropagator::new(p, grid, exp.bandwidth)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (t, field) in trajectory.times.iter().zip(&trajectory.fields) {
        let t = *t;
        if propagator.is_some() && t == 0.0 {
            continue;
        }
        let tag = |e: Error| e.at_time(t);
        let info = ev.relative_functionals(field, &nu, &hv).map_err(tag)?;
        let gamma_margin = check_relative_log_concavity(field, p, exp.floor_ratio).map_err(tag)?;
        let mutual = match propagator.as_mut() {
            None => None,
            Some(prop) => {
                prop.advance_to(t, exp.dt).map_err(tag)?;
                let joint = prop.snapshot().map_err(tag)?.joint(&exp.mu0).map_err(tag)?;
                let gamma: Vec<f64> = joint
                    .marginal_t_values()
                    .iter()
                    .zip(&v)
                    .map(|(m, v)| m * (v / 2.0).exp())
                    .collect();
                Some(ev.mutual_values(&joint, &gamma).map_err(tag)?)
            }
        };
        log::debug!("t = {t}: H_rel = {:.6e}", info.h_rel);
        rows.push(InfoRow {
            t,
            h_rel: info.h_rel,
            j_rel: info.j_rel,
            k_rel: info.k_rel,
            g_rel: info.g_rel,
            mutual,
            gamma_margin,
            excluded_mass: info.excluded_mass.max(mutual.map_or(0.0, |m| m.excluded_mass)),
        });
    }
    Ok(RunOutput {
        trajectory,
        nu,
        report: InfoReport {
            rows,
            precondition_margin,
        },
    })
}

/// Finite-difference derivative compared against its analytic counterpart at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeRow {
    pub t: f64,
    pub finite_difference: f64,
    pub analytic: f64,
    pub residual: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub rows: Vec<DerivativeRow>,
}

impl DerivativeCheck {
    pub fn pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.residual <= r.allowed)
    }

    /// Largest residual relative to its analytic value.
    pub fn max_relative(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual / r.analytic.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    /// Largest residual divided by what the tolerance allows there; `≤ 1` passes.
    pub fn worst_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.residual / r.allowed).fold(0.0, f64::max)
    }
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 5 {
        return Err(Error::Precondition(format!(
            "derivative checks need at least 5 samples, got {}",
            times.len()
        )));
    }
    let d = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d.max(1.0)) {
        return Err(Error::Precondition(
            "derivative checks need uniformly spaced samples".into(),
        ));
    }
    Ok(d)
}

/// Central first and second differences of `f` at interior samples against `d1` and `d2`.
fn derivative_checks(
    times: &[f64],
    f: &[f64],
    d1: &[f64],
    d2: &[f64],
    tol1: (f64, f64),
    tol2: (f64, f64),
) -> Result<(DerivativeCheck, DerivativeCheck)> {
    let delta = uniform_step(times)?;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for k in 1..times.len() - 1 {
        let fd1 = (f[k + 1] - f[k - 1]) / (2.0 * delta);
        let fd2 = (f[k + 1] - 2.0 * f[k] + f[k - 1]) / (delta * delta);
        first.push(DerivativeRow {
            t: times[k],
            finite_difference: fd1,
            analytic: d1[k],
            residual: (fd1 - d1[k]).abs(),
            allowed: (tol1.0 * d1[k].abs()).max(tol1.1),
        });
        second.push(DerivativeRow {
            t: times[k],
            finite_difference: fd2,
            analytic: d2[k],
            residual: (fd2 - d2[k]).abs(),
            allowed: (tol2.0 * d2[k].abs()).max(tol2.1),
        });
    }
    Ok((DerivativeCheck { rows: first }, DerivativeCheck { rows: second }))
}

/// `dH_ν/dt = −J_ν` and `d²H_ν/dt² = 2K_ν + 2G_ν` by central differences.
pub fn check_entropy_derivatives(report: &InfoReport, tol: &Tolerances) -> Result<(DerivativeCheck, DerivativeCheck)> {
    let times = report.times();
    let h: Vec<f64> = report.rows.iter().map(|r| r.h_rel).collect();
    let d1: Vec<f64> = report.rows.iter().map(|r| -r.j_rel).collect();
    let d2: Vec<f64> = report.rows.iter().map(|r| 2.0 * r.k_rel + 2.0 * r.g_rel).collect();
    derivative_checks(
        &times,
        &h,
        &d1,
        &d2,
        (tol.entropy_d1_rel, tol.entropy_d1_abs),
        (tol.entropy_d2_rel, tol.entropy_d2_abs),
    )
}

/// `dI/dt = −Φ` and `d²I/dt²` against its analytic expression, by central differences.
pub fn check_mutual_derivatives(report: &InfoReport, tol: &Tolerances) -> Result<(DerivativeCheck, DerivativeCheck)> {
    let missing = || Error::Precondition("mutual information was not computed for this run".into());
    let i = report.mutual_information().ok_or_else(missing)?;
    let d1 = report.mutual_column(|m| m.d1_analytic).ok_or_else(missing)?;
    let d2 = report.mutual_column(|m| m.d2_analytic).ok_or_else(missing)?;
    derivative_checks(
        &report.times(),
        &i,
        &d1,
        &d2,
        (tol.mutual_d1_rel, tol.mutual_d1_abs),
        (tol.mutual_d2_rel, tol.mutual_d2_abs),
    )
}

/// True when `values` never increase by more than `slack`.
pub fn non_increasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityVerdict {
    pub convex: bool,
    /// Smallest second difference, scaled to the mean sample spacing.
    pub worst_second_difference: f64,
    pub tol: f64,
    pub from_time: f64,
    pub samples: usize,
    /// Smallest analytic second derivative over the same samples.
    pub d2_analytic_min: f64,
}

/// Checks every second difference of `I(t)` on samples at or after `from_time`.
pub fn convexity_verdict(report: &InfoReport, from_time: f64, tol: Option<f64>) -> Result<ConvexityVerdict> {
    let rows: Vec<(f64, MutualValues<f64>)> = report
        .rows
        .iter()
        .filter(|r| r.t >= from_time - 1e-12)
        .filter_map(|r| r.mutual.map(|m| (r.t, m)))
        .collect();
    if rows.len() < 3 {
        return Err(Error::Precondition(format!(
            "convexity verdict needs 3 samples with mutual information at t >= {from_time}, got {}",
            rows.len()
        )));
    }
    let max_i = report
        .mutual_information()
        .unwrap_or_default()
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let tol = tol.unwrap_or(1e-4 * max_i);
    let spacing = (rows[rows.len() - 1].0 - rows[0].0) / (rows.len() - 1) as f64;
    let mut worst = f64::INFINITY;
    for w in rows.windows(3) {
        let (t0, t1, t2) = (w[0].0, w[1].0, w[2].0);
        let (i0, i1, i2) = (w[0].1.i, w[1].1.i, w[2].1.i);
        let divided = 2.0 * ((i2 - i1) / (t2 - t1) - (i1 - i0) / (t1 - t0)) / (t2 - t0);
        worst = worst.min(divided * spacing * spacing);
    }
    let d2_min = rows.iter().map(|r| r.1.d2_analytic).fold(f64::INFINITY, f64::min);
    Ok(ConvexityVerdict {
        convex: worst >= -tol,
        worst_second_difference: worst,
        tol,
        from_time: rows[0].0,
        samples: rows.len(),
        d2_analytic_min: d2_min,
    })
}

/// Start time for the convexity verdict.
pub fn verdict_start(report: &InfoReport, from: VerdictFrom) -> Option<f64> {
    match from {
        VerdictFrom::Time(t) => Some(t),
        VerdictFrom::Auto if report.precondition_margin >= 0.0 => report.rows.first().map(|r| r.t),
        VerdictFrom::Auto => report.rows.iter().find(|r| r.gamma_margin >= 0.0).map(|r| r.t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Fitted slope of `log H_ν` against `t`; `NaN` when saturated.
    pub slope: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// `H_ν` fell below `1e-12` before 5 usable samples were available.
    pub saturated: bool,
}

impl DecayFit {
    pub fn pass(&self) -> bool {
        !self.saturated && self.slope < 0.0 && self.r_squared >= 0.99
    }
}

/// Least-squares fit of `log H_ν(t)` on the later half of the positive samples.
pub fn check_exponential_convergence(report: &InfoReport) -> DecayFit {
    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.h_rel > 1e-12)
        .map(|r| (r.t, r.h_rel.ln()))
        .collect();
    if pts.len() < 5 {
        return DecayFit {
            slope: f64::NAN,
            r_squared: f64::NAN,
            samples: pts.len(),
            saturated: true,
        };
    }
    let tail = &pts[pts.len() / 2..];
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let syy: f64 = tail.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    DecayFit {
        slope,
        r_squared,
        samples: tail.len(),
        saturated: false,
    }
}

/// One probe of the path estimator against a deterministic reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub x: [f64; 2],
    pub t: f64,
    pub estimate: FkEstimate,
    pub reference: f64,
}

impl ProbeRow {
    pub fn pass(&self, tol: &Tolerances) -> bool {
        (self.estimate.value - self.reference).abs() <= (tol.fk_sigmas * self.estimate.stderr).max(tol.fk_abs)
    }
}

/// Probe nodes: configured points snapped to the grid, or an evenly spaced line
/// through the middle quarter of the box (20 points for a constant potential, else 5).
pub fn probe_nodes(exp: &Experiment) -> Vec<usize> {
    let grid = &exp.grid;
    let snap = |x: &[f64]| {
        let mut mi = [0usize; 2];
        for k in 0..grid.dim() {
            let a = grid.axis(k);
            mi[k] = (((x[k] - a.lo) / a.spacing()).round().max(0.0) as usize).min(a.n - 1);
        }
        grid.flat_index(mi)
    };
    match &exp.probes {
        Some(pts) => pts.iter().map(|x| snap(x)).collect(),
        None => {
            let count = if exp.potential.is_constant() { 20 } else { 5 };
            let a = grid.axis(0);
            let c = 0.5 * (a.lo + a.hi);
            let half = (a.hi - a.lo) / 8.0;
            (0..count)
                .map(|k| {
                    let mut x = [c - half + 2.0 * half * k as f64 / (count - 1) as f64, 0.0];
                    if grid.dim() == 2 {
                        x[1] = 0.5 * (grid.axis(1).lo + grid.axis(1).hi);
                    }
                    snap(&x[..grid.dim()])
                })
                .collect()
        }
    }
}

/// Path-estimated density at the probe nodes against the grid solution, or against
/// the closed-form heat solution when the potential is constant.
pub fn fk_probes(exp: &Experiment, traj: Option<&FlowTrajectory<f64>>) -> Result<Vec<ProbeRow>> {
    let p = &exp.potential;
    let grid = &exp.grid;
    let t = exp.probe_time;
    let beta = choose_beta(p, grid, exp.beta_margin)?;
    let sp = SchrodingerPotential::new(p, beta)?;
    let mu0 = exp.initial.pdf();
    let reference_field = if p.is_constant() {
        None
    } else {
        let saved = traj.and_then(|tr| {
            tr.times
                .iter()
                .position(|s| (*s - t).abs() <= 1e-12)
                .map(|k| tr.fields[k].clone())
        });
        Some(match saved {
            Some(f) => f,
            None => evolve(&exp.mu0, p, t, exp.dt, &[t])?
                .fields
                .pop()
                .expect("evolve saves the target time"),
        })
    };
    let dim = grid.dim();
    probe_nodes(exp)
        .into_iter()
        .enumerate()
        .map(|(k, node)| {
            let x = grid.node(node);
            let opts = FkOptions {
                seed: exp.fk.seed.wrapping_add(k as u64),
                ..exp.fk
            };
            let estimate = fk_density(&x[..dim], t, &*mu0, &sp, &opts)?;
            let reference = match &reference_field {
                None => heat_kernel_density(&x[..dim], t, &exp.mu0)?,
                Some(f) => f.values()[node],
            };
            Ok(ProbeRow {
                x,
                t,
                estimate,
                reference,
            })
        })
        .collect()
}

/// `γ_t` at the first probe estimated with two different shifts and seeds.
pub fn beta_invariance(exp: &Experiment) -> Result<(FkEstimate, FkEstimate)> {
    let p = &exp.potential;
    let beta = choose_beta(p, &exp.grid, exp.beta_margin)?;
    let node = probe_nodes(exp)[0];
    let x = exp.grid.node(node);
    let dim = exp.grid.dim();
    let mu0 = exp.initial.pdf();
    let gamma0 = |y: &[f64]| {
        let m = mu0(y);
        if m == 0.0 {
            0.0
        } else {
            m * (p.value_unchecked(y) / 2.0).exp()
        }
    };
    let a = fk_gamma(
        &x[..dim],
        exp.probe_time,
        &gamma0,
        &SchrodingerPotential::new(p, beta)?,
        &exp.fk,
    )?;
    let shifted = FkOptions {
        seed: exp.fk.seed.wrapping_add(0x9e37_79b9),
        ..exp.fk
    };
    let b = fk_gamma(
        &x[..dim],
        exp.probe_time,
        &gamma0,
        &SchrodingerPotential::new(p, beta + 1.0)?,
        &shifted,
    )?;
    Ok((a, b))
}

/// Flat `key=value` summary of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Verdicts {
    pub entries: Vec<(String, String)>,
}

impl Verdicts {
    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// Summary verdicts for a completed run.
pub fn summarize(exp: &Experiment, run: &RunOutput) -> Verdicts {
    let report = &run.report;
    let tol = &exp.tolerances;
    let mut v = Verdicts::default();
    let sci = |x: f64| format!("{x:.6e}");
    v.push("precondition_margin", sci(report.precondition_margin));
    v.push("precondition_holds", report.precondition_margin >= 0.0);
    let gamma_min = report.rows.iter().map(|r| r.gamma_margin).fold(f64::INFINITY, f64::min);
    v.push("gamma_margin_min", sci(gamma_min));
    v.push("gamma_log_concave", gamma_min >= -tol.gamma_margin);
    v.push("mass_error_max", sci(run.trajectory.max_mass_error()));
    let h: Vec<f64> = run.report.rows.iter().map(|r| r.h_rel).collect();
    v.push("entropy_non_increasing", non_increasing(&h, 1e-10));
    if let Some(i) = report.mutual_information() {
        v.push("mutual_non_increasing", non_increasing(&i, tol.monotone_slack));
        match verdict_start(report, exp.verdict_from) {
            Some(from) => match convexity_verdict(report, from, tol.convexity) {
                Ok(c) => {
                    v.push("convexity", c.convex);
                    v.push("convexity_from", sci(c.from_time));
                    v.push("convexity_asserted", report.precondition_margin >= 0.0);
                    v.push("worst_second_difference", sci(c.worst_second_difference));
                    v.push("convexity_tol", sci(c.tol));
                    v.push("d2_analytic_min", sci(c.d2_analytic_min));
                }
                Err(e) => v.push("convexity", format!("undetermined ({e})")),
            },
            None => v.push("convexity", "undetermined (no qualifying start time)"),
        }
    }
    let fit = check_exponential_convergence(report);
    v.push("decay_saturated", fit.saturated);
    if !fit.saturated {
        v.push("decay_slope", sci(fit.slope));
        v.push("decay_r_squared", sci(fit.r_squared));
    }
    let excluded = report.rows.iter().map(|r| r.excluded_mass).fold(0.0, f64::max);
    v.push("excluded_mass_max", sci(excluded));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

/// Outcome of one verification member.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub member: Member,
    pub status: Status,
    pub residual: f64,
    pub tol: f64,
    pub note: String,
}

impl CheckLine {
    fn new(member: Member, residual: f64, tol: f64, extra_ok: bool, note: String) -> Self {
        let status = if extra_ok && residual <= tol {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            member,
            status,
            residual,
            tol,
            note,
        }
    }

    fn failed(member: Member, e: &Error) -> Self {
        Self {
            member,
            status: Status::Fail,
            residual: f64::NAN,
            tol: f64::NAN,
            note: e.to_string(),
        }
    }

    fn skipped(member: Member, why: &str) -> Self {
        Self {
            member,
            status: Status::Skip,
            residual: f64::NAN,
            tol: f64::NAN,
            note: why.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        let mut s = format!(
            "{tag} {} residual={:.6e} tol={:.6e}",
            self.member.name(),
            self.residual,
            self.tol
        );
        if !self.note.is_empty() {
            let _ = write!(s, " ({})", self.note);
        }
        s
    }
}

/// Final-time joint density and the independently evolved marginal at the same time.
fn final_joint(exp: &Experiment, run: &RunOutput) -> Result<(JointDensity<f64>, DensityField<f64>)> {
    let t = exp.t_end;
    let kernel = build_transition_kernel(&exp.potential, &exp.grid, t, exp.dt, exp.bandwidth)?;
    let joint = kernel.joint(&exp.mu0)?;
    let marginal = match run.trajectory.times.iter().position(|s| *s == t) {
        Some(k) => run.trajectory.fields[k].clone(),
        None => evolve(&exp.mu0, &exp.potential, t, exp.dt, &[t])?
            .fields
            .pop()
            .expect("target time is saved"),
    };
    Ok((joint, marginal))
}

fn derivative_line(member: Member, checks: Result<(DerivativeCheck, DerivativeCheck)>) -> CheckLine {
    match checks {
        Ok((d1, d2)) => CheckLine::new(
            member,
            d1.worst_ratio().max(d2.worst_ratio()),
            1.0,
            !d1.rows.is_empty(),
            format!(
                "residual is the worst ratio to the allowed error; max first-derivative gap {:.3e}, second {:.3e}",
                d1.max_residual(),
                d2.max_residual()
            ),
        ),
        Err(e) => CheckLine::failed(member, &e),
    }
}

/// Runs the configured verification members. Solver and analysis failures of the
/// underlying run propagate; failures inside a member become FAIL lines.
pub fn run_verify(exp: &Experiment) -> Result<Vec<CheckLine>> {
    let tol = &exp.tolerances;
    let mut run: Option<RunOutput> = None;
    let mut joint: Option<(JointDensity<f64>, DensityField<f64>)> = None;
    let mut lines = Vec::new();
    for &member in &exp.members {
        if run.is_none() && !matches!(member, Member::FkVsFd | Member::BetaInvariance) {
            run = Some(run_trajectory(exp)?);
        }
        let needs_joint = matches!(member, Member::KvDecomposition | Member::IntegrationByParts);
        if needs_joint && !exp.mutual {
            lines.push(CheckLine::skipped(
                member,
                "needs mutual-information analysis on a 1D grid",
            ));
            continue;
        }
        if needs_joint && joint.is_none() {
            joint = Some(final_joint(exp, run.as_ref().expect("run computed above"))?);
        }
        let line = match member {
            Member::Conservation => {
                let r = run.as_ref().expect("run computed above");
                let positive = r.trajectory.fields.iter().all(|f| f.values().iter().all(|v| *v >= 0.0));
                let h: Vec<f64> = r.report.rows.iter().map(|row| row.h_rel).collect();
                let monotone = non_increasing(&h, tol.monotone_slack);
                CheckLine::new(
                    member,
                    r.trajectory.max_mass_error(),
                    tol.mass,
                    positive && monotone,
                    format!("positive={positive} entropy_non_increasing={monotone}"),
                )
            }
            Member::EntropyDerivatives => derivative_line(
                member,
                check_entropy_derivatives(&run.as_ref().expect("run").report, tol),
            ),
            Member::MutualDerivatives if !exp.mutual => {
                CheckLine::skipped(member, "mutual-information analysis is off")
            }
            Member::MutualDerivatives => {
                let report = &run.as_ref().expect("run").report;
                let mut line = derivative_line(member, check_mutual_derivatives(report, tol));
                let monotone = report
                    .mutual_information()
                    .is_some_and(|i| non_increasing(&i, tol.monotone_slack));
                if !monotone {
                    line.status = Status::Fail;
                }
                let _ = write!(line.note, "; mutual_non_increasing={monotone}");
                line
            }
            Member::KvDecomposition => {
                let (j, m) = joint.as_ref().expect("joint computed above");
                let nu = &run.as_ref().expect("run").nu;
                match Evaluator::new(exp.floor_ratio).and_then(|ev| ev.kv_decomposition_residual(j, m, nu)) {
                    Ok(r) => CheckLine::new(
                        member,
                        r.relative(),
                        tol.identity_rel,
                        true,
                        format!("absolute {:.3e}", r.residual),
                    ),
                    Err(e) => CheckLine::failed(member, &e),
                }
            }
            Member::IntegrationByParts => {
                let (j, _) = joint.as_ref().expect("joint computed above");
                let ones = vec![1.0; exp.grid.len()];
                match Evaluator::new(exp.floor_ratio).and_then(|ev| ev.integration_by_parts_residual(j, &ones)) {
                    Ok(r) => CheckLine::new(
                        member,
                        r.relative(),
                        tol.identity_rel,
                        true,
                        format!("absolute {:.3e}", r.residual),
                    ),
                    Err(e) => CheckLine::failed(member, &e),
                }
            }
            Member::FkVsFd => match fk_probes(exp, run.as_ref().map(|r| &r.trajectory)) {
                Ok(probes) => {
                    let worst = probes
                        .iter()
                        .map(|p| {
                            (p.estimate.value - p.reference).abs() / (tol.fk_sigmas * p.estimate.stderr).max(tol.fk_abs)
                        })
                        .fold(0.0, f64::max);
                    let reference = if exp.potential.is_constant() {
                        "closed-form heat solution"
                    } else {
                        "grid solution"
                    };
                    CheckLine::new(
                        member,
                        worst,
                        1.0,
                        !probes.is_empty(),
                        format!(
                            "{} probes against the {reference}; residual is the worst ratio to the allowed error",
                            probes.len()
                        ),
                    )
                }
                Err(e) => CheckLine::failed(member, &e),
            },
            Member::BetaInvariance => match beta_invariance(exp) {
                Ok((a, b)) => {
                    let spread = a.stderr.hypot(b.stderr);
                    CheckLine::new(
                        member,
                        (a.value - b.value).abs(),
                        (tol.fk_sigmas * spread).max(tol.fk_abs),
                        true,
                        format!("estimates {:.6e} and {:.6e}", a.value, b.value),
                    )
                }
                Err(e) => CheckLine::failed(member, &e),
            },
        };
        log::info!("{}", line.to_line());
        lines.push(line);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, i: f64, d2: f64) -> InfoRow {
        InfoRow {
            t,
            h_rel: 0.0,
            j_rel: 0.0,
            k_rel: 0.0,
            g_rel: 0.0,
            mutual: Some(MutualValues {
                i,
                d2_analytic: d2,
                ..Default::default()
            }),
            gamma_margin: 0.5,
            excluded_mass: 0.0,
        }
    }

    #[test]
    fn convexity_of_convex_and_concave_sequences() {
        let rows: Vec<InfoRow> = (1..=6).map(|k| row(k as f64 * 0.1, (-(k as f64)).exp(), 1.0)).collect();
        let rep = InfoReport {
            rows,
            precondition_margin: 0.5,
        };
        let v = convexity_verdict(&rep, 0.0, None).unwrap();
        assert!(v.convex && v.worst_second_difference > 0.0);
        let rows: Vec<InfoRow> = (1..=6)
            .map(|k| row(k as f64 * 0.1, -(k as f64 * 0.1).powi(2), -2.0))
            .collect();
        let rep = InfoReport {
            rows,
            precondition_margin: 0.5,
        };
        let v = convexity_verdict(&rep, 0.0, Some(1e-6)).unwrap();
        assert!(!v.convex);
        assert!((v.worst_second_difference + 0.02).abs() < 1e-12);
        assert!(convexity_verdict(&rep, 0.55, None).is_err());
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let rows: Vec<InfoRow> = (0..20)
            .map(|k| {
                let t = k as f64 * 0.1;
                InfoRow {
                    h_rel: 2.0 * (-3.0 * t).exp(),
                    ..row(t, 0.0, 0.0)
                }
            })
            .collect();
        let fit = check_exponential_convergence(&InfoReport {
            rows,
            precondition_margin: 0.0,
        });
        assert!((fit.slope + 3.0).abs() < 1e-10 && fit.pass());
        let flat = check_exponential_convergence(&InfoReport {
            rows: (0..8).map(|k| row(k as f64, 0.0, 0.0)).collect(),
            precondition_margin: 0.0,
        });
        assert!(flat.saturated && !flat.pass());
    }

    #[test]
    fn derivative_checks_need_uniform_samples() {
        let times = [0.1, 0.2, 0.35, 0.4, 0.5];
        let f = [0.0; 5];
        assert!(derivative_checks(&times, &f, &f, &f, (0.1, 0.0), (0.1, 0.0)).is_err());
        let times = [0.1, 0.2, 0.3, 0.4, 0.5];
        let f: Vec<f64> = times.iter().map(|t| t * t).collect();
        let d1: Vec<f64> = times.iter().map(|t| 2.0 * t).collect();
        let d2 = [2.0; 5];
        let (a, b) = derivative_checks(&times, &f, &d1, &d2, (1e-9, 0.0), (1e-9, 0.0)).unwrap();
        assert!(a.pass() && b.pass());
        assert_eq!(a.rows.len(), 3);
    }
}
