//! Monte Carlo estimator of `γ_t` and `μ_t` by Brownian path expectation, plus closed-form kernels.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::potential::{Potential, SchrodingerPotential};
use crate::scalar::pairwise_sum;

pub const MIN_PATHS: usize = 1000;
pub const DEFAULT_PATH_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkOptions {
    pub paths: usize,
    /// Path time step; `None` uses `t / 256`.
    pub dt_path: Option<f64>,
    pub seed: u64,
}

impl Default for FkOptions {
    fn default() -> Self {
        Self {
            paths: 10_000,
            dt_path: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkEstimate {
    pub value: f64,
    pub stderr: f64,
    pub paths: usize,
    pub dt_path: f64,
    pub seed: u64,
}

fn path_weight(
    x: &[f64],
    t: f64,
    steps: usize,
    gamma0: &(dyn Fn(&[f64]) -> f64 + Sync),
    sp: &SchrodingerPotential<'_, f64>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let dim = x.len();
    let dt = t / steps as f64;
    let sdt = dt.sqrt();
    let mut w = [0.0f64; 2];
    for k in 0..dim {
        w[k] = x[k] / std::f64::consts::SQRT_2;
    }
    let mut accum = 0.0;
    let mut pos = [0.0f64; 2];
    for _ in 0..steps {
        for k in 0..dim {
            pos[k] = std::f64::consts::SQRT_2 * w[k];
        }
        let c = sp.value_unchecked(&pos[..dim]);
        if c < -1e-12 {
            return Err(Error::Precondition(format!(
                "c + beta = {c} < 0 at {:?}; choose a larger beta",
                &pos[..dim]
            )));
        }
        accum += c * dt;
        for wk in w.iter_mut().take(dim) {
            let z: f64 = StandardNormal.sample(rng);
            *wk += sdt * z;
        }
    }
    for k in 0..dim {
        pos[k] = std::f64::consts::SQRT_2 * w[k];
    }
    let g = gamma0(&pos[..dim]);
    let weight = g * (-accum).exp() * (sp.beta * t).exp();
    if !weight.is_finite() {
        return Err(Error::Numeric(format!(
            "path weight overflowed (gamma0 = {g}, integral = {accum})"
        )));
    }
    Ok(weight)
}

/// Estimates `γ_t(x) = E[γ_0(√2 W_t) e^{-∫(c+β)(√2 W_r)dr}] e^{βt}` with `W_0 = x/√2`.
pub fn fk_gamma(
    x: &[f64],
    t: f64,
    gamma0: &(dyn Fn(&[f64]) -> f64 + Sync),
    sp: &SchrodingerPotential<'_, f64>,
    opts: &FkOptions,
) -> Result<FkEstimate> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("time must be nonnegative, got {t}")));
    }
    if opts.paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_PATHS} paths are required, got {}",
            opts.paths
        )));
    }
    if x.is_empty() || x.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "point must have 1 or 2 coordinates, got {}",
            x.len()
        )));
    }
    let steps = match opts.dt_path {
        None => DEFAULT_PATH_STEPS,
        Some(d) if d > 0.0 => ((t / d) - 1e-9).ceil().max(1.0) as usize,
        Some(d) => return Err(Error::InvalidArgument(format!("path step must be positive, got {d}"))),
    };
    let dt_path = t / steps as f64;
    if t == 0.0 {
        let g = gamma0(x);
        if !g.is_finite() {
            return Err(Error::Numeric(format!("gamma0({x:?}) is not finite")));
        }
        return Ok(FkEstimate {
            value: g,
            stderr: 0.0,
            paths: opts.paths,
            dt_path: 0.0,
            seed: opts.seed,
        });
    }
    let weights = (0..opts.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            path_weight(x, t, steps, gamma0, sp, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = weights.len() as f64;
    let mean = pairwise_sum(&weights) / n;
    let sq: Vec<f64> = weights.iter().map(|w| (w - mean) * (w - mean)).collect();
    let sd = (pairwise_sum(&sq) / (n - 1.0)).sqrt();
    Ok(FkEstimate {
        value: mean,
        stderr: sd / n.sqrt(),
        paths: opts.paths,
        dt_path,
        seed: opts.seed,
    })
}

/// `μ_t(x) = e^{-V(x)/2} γ_t(x)` with `γ_0 = e^{V/2} μ_0`.
pub fn fk_density(
    x: &[f64],
    t: f64,
    mu0: &(dyn Fn(&[f64]) -> f64 + Sync),
    sp: &SchrodingerPotential<'_, f64>,
    opts: &FkOptions,
) -> Result<FkEstimate> {
    let p = sp.base;
    let gamma0 = |y: &[f64]| {
        let m = mu0(y);
        if m == 0.0 {
            0.0
        } else {
            m * (p.value_unchecked(y) / 2.0).exp()
        }
    };
    let g = fk_gamma(x, t, &gamma0, sp, opts)?;
    if t == 0.0 {
        return Ok(FkEstimate { value: mu0(x), ..g });
    }
    let scale = (-p.value_unchecked(x) / 2.0).exp();
    Ok(FkEstimate {
        value: scale * g.value,
        stderr: scale * g.stderr,
        ..g
    })
}

/// Piecewise-linear interpolant of a gridded density, zero outside the grid.
pub fn interpolant(d: &DensityField<f64>) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x: &[f64]| {
        let grid = d.grid();
        let mut idx = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..grid.dim() {
            let a = grid.axis(k);
            if !(x[k] >= a.lo && x[k] <= a.hi) {
                return 0.0;
            }
            let s = ((x[k] - a.lo) / a.spacing()).min((a.n - 1) as f64);
            let i = (s.floor() as usize).min(a.n - 2);
            idx[k] = i;
            frac[k] = s - i as f64;
        }
        if grid.dim() == 1 {
            let v = d.values();
            v[idx[0]] * (1.0 - frac[0]) + v[idx[0] + 1] * frac[0]
        } else {
            let at = |i: usize, j: usize| d.values()[grid.flat_index([i, j])];
            let (i, j) = (idx[0], idx[1]);
            let (fx, fy) = (frac[0], frac[1]);
            at(i, j) * (1.0 - fx) * (1.0 - fy)
                + at(i + 1, j) * fx * (1.0 - fy)
                + at(i, j + 1) * (1.0 - fx) * fy
                + at(i + 1, j + 1) * fx * fy
        }
    }
}

/// Heat-flow solution `∫ μ_0(y) (4πt)^{-d/2} e^{-|y-x|²/4t} dy` by trapezoid quadrature.
pub fn heat_kernel_density(x: &[f64], t: f64, mu0: &DensityField<f64>) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("heat kernel needs t > 0, got {t}")));
    }
    let grid = mu0.grid();
    if x.len() != grid.dim() {
        return Err(Error::InvalidArgument("point dimension differs from the grid".into()));
    }
    let norm = (4.0 * std::f64::consts::PI * t).powf(-(grid.dim() as f64) / 2.0);
    let terms: Vec<f64> = grid
        .nodes()
        .zip(mu0.values())
        .zip(grid.weights())
        .map(|((y, m), w)| {
            let r2: f64 = (0..grid.dim()).map(|k| (y[k] - x[k]) * (y[k] - x[k])).sum();
            w * m * (-r2 / (4.0 * t)).exp()
        })
        .collect();
    Ok(norm * pairwise_sum(&terms))
}

/// Density at `x` of the OU flow with `V = α x²/2` started from the point `y`.
pub fn ou_transition(x: f64, y: f64, t: f64, alpha: f64) -> f64 {
    let mean = y * (-alpha * t).exp();
    let var = -(-2.0 * alpha * t).exp_m1() / alpha;
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// One row per probe: `x,t,estimate,stderr,paths` (`x,y,t,...` in 2D).
pub fn probes_to_csv(probes: &[(Vec<f64>, f64, FkEstimate)]) -> String {
    let dim = probes.first().map_or(1, |p| p.0.len());
    let mut s = String::from(if dim == 2 {
        "x,y,t,estimate,stderr,paths\n"
    } else {
        "x,t,estimate,stderr,paths\n"
    });
    for (x, t, e) in probes {
        for c in x {
            let _ = write!(s, "{c:.16e},");
        }
        let _ = writeln!(s, "{t:.16e},{:.16e},{:.16e},{}", e.value, e.stderr, e.paths);
    }
    s
}

/// `γ_0 = e^{V/2} μ_0` sampled as a closure over an interpolated density.
pub fn gamma_from_density<'a>(d: &'a DensityField<f64>, p: &'a Potential<f64>) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    let mu = interpolant(d);
    move |y: &[f64]| {
        let m = mu(y);
        if m == 0.0 {
            0.0
        } else {
            m * (p.value_unchecked(y) / 2.0).exp()
        }
    }
}
