//! Conservative implicit solvers for `∂t μ = Δμ + ∇·(μ∇V)` and for `∂t γ = Δγ − (c+β)γ`.
//!
//! Fluxes use Scharfetter–Gummel exponential fitting, so the nodal `e^{-V}` is an exact
//! discrete steady state. Time stepping is implicit Euler; 2D uses a Lie-split ADI sweep.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::csv::{density_to_csv, write_atomic};
use crate::field::{mollified_delta, DensityField, Grid, JointDensity};
use crate::potential::{Potential, SchrodingerPotential};
use crate::scalar::Real;

/// Bernoulli function `z / (e^z − 1)`.
fn bernoulli<T: Real>(z: T) -> T {
    if z.abs() < T::lit(1e-5) {
        T::one() - z / T::lit(2.0) + z * z / T::lit(12.0)
    } else {
        z / z.exp_m1()
    }
}

/// LU factors of a tridiagonal matrix; solves `M x = s ⊙ b` in place.
#[derive(Debug, Clone)]
struct Tridiag<T> {
    lower: Vec<T>,
    cprime: Vec<T>,
    inv: Vec<T>,
    scale: Vec<T>,
}

impl<T: Real> Tridiag<T> {
    fn factor(lower: Vec<T>, diag: &[T], upper: &[T], scale: Vec<T>) -> Option<Self> {
        let n = diag.len();
        let mut cprime = vec![T::zero(); n];
        let mut inv = vec![T::zero(); n];
        let mut prev_c = T::zero();
        for i in 0..n {
            let denom = diag[i] - if i > 0 { lower[i] * prev_c } else { T::zero() };
            if !(denom.is_finite() && denom.abs() > T::min_positive_value()) {
                return None;
            }
            inv[i] = T::one() / denom;
            cprime[i] = if i + 1 < n { upper[i] * inv[i] } else { T::zero() };
            prev_c = cprime[i];
        }
        Some(Self {
            lower,
            cprime,
            inv,
            scale,
        })
    }

    fn solve_strided(&self, x: &mut [T], base: usize, stride: usize) {
        let n = self.inv.len();
        let mut prev = T::zero();
        for i in 0..n {
            let k = base + i * stride;
            let y = (self.scale[i] * x[k] - self.lower[i] * prev) * self.inv[i];
            x[k] = y;
            prev = y;
        }
        for i in (0..n - 1).rev() {
            let k = base + i * stride;
            x[k] = x[k] - self.cprime[i] * x[k + stride];
        }
    }

    /// Solves for every column of a row-major `n × width` block at once.
    fn solve_block(&self, x: &mut [T], width: usize) {
        let n = self.inv.len();
        for j in 0..width {
            x[j] = self.scale[0] * x[j] * self.inv[0];
        }
        for i in 1..n {
            let (done, rest) = x.split_at_mut(i * width);
            let prev = &done[(i - 1) * width..];
            let row = &mut rest[..width];
            let (s, l, inv) = (self.scale[i], self.lower[i], self.inv[i]);
            for (r, p) in row.iter_mut().zip(prev) {
                *r = (s * *r - l * *p) * inv;
            }
        }
        for i in (0..n - 1).rev() {
            let (head, tail) = x.split_at_mut((i + 1) * width);
            let row = &mut head[i * width..];
            let next = &tail[..width];
            let c = self.cprime[i];
            for (r, q) in row.iter_mut().zip(next) {
                *r = *r - c * *q;
            }
        }
    }
}

/// Edge coefficients of the Scharfetter–Gummel flux along one grid line:
/// `J_{i+½} = fwd[i]·μ_i − bwd[i]·μ_{i+1}`.
#[derive(Debug, Clone)]
struct FluxLine<T> {
    fwd: Vec<T>,
    bwd: Vec<T>,
}

impl<T: Real> FluxLine<T> {
    fn new(v: &[T], h: T) -> Self {
        let fwd = v.windows(2).map(|w| bernoulli(w[1] - w[0]) / h).collect();
        let bwd = v.windows(2).map(|w| bernoulli(w[0] - w[1]) / h).collect();
        Self { fwd, bwd }
    }

    /// Implicit Euler matrix `W − dt·A` with trapezoid control volumes `W`.
    fn implicit(&self, weights: &[T], dt: T) -> Option<Tridiag<T>> {
        let n = weights.len();
        let mut lower = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        for i in 0..n {
            let mut d = weights[i];
            if i > 0 {
                lower[i] = -dt * self.fwd[i - 1];
                d = d + dt * self.bwd[i - 1];
            }
            if i + 1 < n {
                upper[i] = -dt * self.bwd[i];
                d = d + dt * self.fwd[i];
            }
            diag[i] = d;
        }
        Tridiag::factor(lower, &diag, &upper, weights.to_vec())
    }

    /// `(W − dt·A)x − W b` residual, max norm.
    fn residual(&self, weights: &[T], dt: T, x: &[T], b: &[T]) -> T {
        let n = x.len();
        let mut worst = T::zero();
        for i in 0..n {
            let mut flux_out = T::zero();
            if i + 1 < n {
                flux_out = flux_out + self.fwd[i] * x[i] - self.bwd[i] * x[i + 1];
            }
            if i > 0 {
                flux_out = flux_out - (self.fwd[i - 1] * x[i - 1] - self.bwd[i - 1] * x[i]);
            }
            let r = weights[i] * x[i] + dt * flux_out - weights[i] * b[i];
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Metadata written next to a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta {
    pub scheme: &'static str,
    pub boundary: &'static str,
    pub dt: f64,
    pub steps: usize,
}

/// Density fields at `t = 0` followed by each positive save time.
#[derive(Debug, Clone)]
pub struct FlowTrajectory<T> {
    pub times: Vec<T>,
    pub fields: Vec<DensityField<T>>,
    pub meta: SolverMeta,
}

impl FlowTrajectory<f64> {
    /// Writes `field_NNN.csv` per saved time plus `manifest.txt` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = format!(
            "scheme={}\nboundary={}\ndt={:.16e}\nsteps={}\ncount={}\n",
            self.meta.scheme,
            self.meta.boundary,
            self.meta.dt,
            self.meta.steps,
            self.times.len()
        );
        let mut written = Vec::new();
        for (k, (t, f)) in self.times.iter().zip(&self.fields).enumerate() {
            let name = format!("field_{k:03}.csv");
            let path = dir.join(&name);
            write_atomic(&path, &density_to_csv(f))?;
            let _ = writeln!(manifest, "{name} t={t:.16e} mass={:.16e}", f.mass());
            written.push(path);
        }
        let path = dir.join("manifest.txt");
        write_atomic(&path, &manifest)?;
        written.push(path);
        Ok(written)
    }
}

impl<T: Real> FlowTrajectory<T> {
    pub fn max_mass_error(&self) -> T {
        self.fields
            .iter()
            .map(|f| (f.mass() - T::one()).abs())
            .fold(T::zero(), T::max)
    }
}

/// Lines of a grid along one axis: `(base, stride, len)` in flat node indexing.
fn lines<T: Real>(grid: &Grid<T>, axis: usize) -> Vec<(usize, usize)> {
    let n = grid.n(axis);
    let stride = grid.stride(axis);
    (0..grid.len() / n)
        .map(|l| (if stride == 1 { l * n } else { l }, stride))
        .collect()
}

/// Assembled flux lines of the FP operator on a grid.
/// Per-axis weights, line (base, stride) pairs and their flux coefficients.
type AxisLines<T> = (Vec<T>, Vec<(usize, usize)>, Vec<FluxLine<T>>);
/// Per-axis line (base, stride) pairs with factored implicit matrices.
type FactoredLines<T> = (Vec<(usize, usize)>, Vec<Tridiag<T>>);

struct FpOperator<T> {
    axes: Vec<AxisLines<T>>,
}

impl<T: Real> FpOperator<T> {
    fn new(p: &Potential<T>, grid: &Grid<T>) -> Result<Self> {
        let v = p.sample(grid)?;
        let mut axes = Vec::new();
        for k in 0..grid.dim() {
            let n = grid.n(k);
            let h = grid.h(k);
            let ls = lines(grid, k);
            let flux = ls
                .iter()
                .map(|&(base, stride)| {
                    let vl: Vec<T> = (0..n).map(|i| v[base + i * stride]).collect();
                    FluxLine::new(&vl, h)
                })
                .collect();
            axes.push((grid.axis(k).weights(), ls, flux));
        }
        Ok(Self { axes })
    }

    fn factor(&self, dt: T) -> Result<Vec<Vec<Tridiag<T>>>> {
        self.axes
            .iter()
            .map(|(w, _, flux)| {
                flux.iter()
                    .map(|f| {
                        f.implicit(w, dt).ok_or(Error::Solver {
                            step: 0,
                            residual: f64::NAN,
                        })
                    })
                    .collect()
            })
            .collect()
    }

    fn step(&self, values: &mut [T], factors: &[Vec<Tridiag<T>>]) {
        for ((_, ls, _), fs) in self.axes.iter().zip(factors) {
            for (&(base, stride), f) in ls.iter().zip(fs) {
                f.solve_strided(values, base, stride);
            }
        }
    }
}

fn steps_for(interval: f64, dt: f64) -> usize {
    ((interval / dt) - 1e-9).ceil().max(1.0) as usize
}

fn validate_times<T: Real>(t_end: T, dt: T, save_times: &[T]) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if save_times.iter().any(|t| *t < T::zero() || *t > t_end) {
        return Err(Error::InvalidArgument(format!("save times must lie in [0, {t_end}]")));
    }
    if save_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("save times must be strictly increasing".into()));
    }
    Ok(())
}

/// Evolves `mu0` under the FP flow with no-flux boundaries, saving at `save_times`.
pub fn evolve<T: Real>(
    mu0: &DensityField<T>,
    p: &Potential<T>,
    t_end: T,
    dt: T,
    save_times: &[T],
) -> Result<FlowTrajectory<T>> {
    validate_times(t_end, dt, save_times)?;
    if (mu0.mass() - T::one()).abs() > T::lit(1e-8).max(T::epsilon() * T::lit(64.0)) {
        return Err(Error::InvalidArgument(format!(
            "initial density has mass {}, expected 1",
            mu0.mass()
        )));
    }
    let grid = mu0.grid().clone();
    let op = FpOperator::new(p, &grid)?;
    let mut values = mu0.values().to_vec();
    let mut t = 0.0f64;
    let mut step = 0usize;
    let mut times = vec![T::zero()];
    let mut fields = vec![DensityField::from_solver(grid.clone(), values.clone(), 0.0)?];
    let check_residual = grid.dim() == 1;
    let mut rhs = Vec::new();
    for &target in save_times.iter().filter(|t| **t > T::zero()) {
        let target_f = target.as_f64();
        if target_f > t {
            let n = steps_for(target_f - t, dt.as_f64());
            let h = T::lit((target_f - t) / n as f64);
            let factors = op.factor(h).map_err(|_| Error::Solver {
                step,
                residual: f64::NAN,
            })?;
            for _ in 0..n {
                if check_residual {
                    rhs.clone_from(&values);
                }
                op.step(&mut values, &factors);
                step += 1;
                if check_residual {
                    let (w, _, flux) = &op.axes[0];
                    let r = flux[0].residual(w, h, &values, &rhs);
                    let scale = rhs.iter().copied().fold(T::zero(), T::max) * grid.h(0);
                    if !(r <= T::lit(1e-8).max(T::epsilon() * T::lit(1e3)) * scale.max(T::min_positive_value())) {
                        return Err(Error::Solver {
                            step,
                            residual: r.as_f64(),
                        });
                    }
                }
                clamp_small_negatives(&mut values, target_f)?;
            }
            t = target_f;
        }
        times.push(target);
        fields.push(DensityField::from_solver(grid.clone(), values.clone(), t)?);
    }
    log::debug!("evolve: {step} implicit steps on {} nodes", grid.len());
    Ok(FlowTrajectory {
        times,
        fields,
        meta: SolverMeta {
            scheme: "scharfetter-gummel/implicit-euler",
            boundary: "no-flux",
            dt: dt.as_f64(),
            steps: step,
        },
    })
}

fn clamp_small_negatives<T: Real>(values: &mut [T], t: f64) -> Result<()> {
    let tol = -T::lit(1e-12);
    for v in values.iter_mut() {
        if *v < T::zero() {
            if *v < tol || !v.is_finite() {
                return Err(Error::Positivity { min: v.as_f64(), t });
            }
            *v = T::zero();
        } else if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite value at t = {t}")));
        }
    }
    Ok(())
}

/// `γ` fields at increasing save times, already multiplied back by `e^{βt}`.
#[derive(Debug, Clone)]
pub struct GammaTrajectory<T> {
    pub grid: Grid<T>,
    pub times: Vec<T>,
    pub fields: Vec<Vec<T>>,
    pub beta: T,
}

impl<T: Real> GammaTrajectory<T> {
    /// Maps `γ_t` back to `e^{-V/2} γ_t`.
    pub fn densities(&self, p: &Potential<T>) -> Result<Vec<Vec<T>>> {
        let v = p.sample(&self.grid)?;
        Ok(self
            .fields
            .iter()
            .map(|g| g.iter().zip(&v).map(|(a, b)| *a * (-*b / T::lit(2.0)).exp()).collect())
            .collect())
    }
}

/// Solves `∂t γ̃ = Δγ̃ − (c+β)γ̃` with zero Dirichlet data, returning `γ ≈ γ̃ e^{βt}`.
pub fn evolve_gamma<T: Real>(
    gamma0: &[T],
    grid: &Grid<T>,
    sp: &SchrodingerPotential<'_, T>,
    t_end: T,
    dt: T,
    save_times: &[T],
) -> Result<GammaTrajectory<T>> {
    validate_times(t_end, dt, save_times)?;
    if gamma0.len() != grid.len() {
        return Err(Error::InvalidArgument("gamma0 does not match the grid".into()));
    }
    if gamma0.iter().any(|g| !(g.is_finite() && *g >= T::zero())) {
        return Err(Error::Precondition("gamma0 must be finite and nonnegative".into()));
    }
    let (mut interior_max, mut boundary_max) = (T::zero(), T::zero());
    for (i, g) in gamma0.iter().enumerate() {
        if grid.is_boundary(i) {
            boundary_max = boundary_max.max(*g);
        } else {
            interior_max = interior_max.max(*g);
        }
    }
    if boundary_max > interior_max * T::lit(1.0 + 1e-9) {
        return Err(Error::Precondition(format!(
            "gamma0 grows toward the boundary (boundary max {boundary_max}, interior max {interior_max}); \
             the initial density must decay at least like e^(-V/2)"
        )));
    }
    let c = sp.sample(grid)?;
    if c.iter().any(|v| *v < T::zero()) {
        return Err(Error::Precondition(
            "c + beta must be nonnegative on the grid; choose a larger beta".into(),
        ));
    }
    let dim = grid.dim();
    let share = T::one() / T::from_usize_lossy(dim);
    let build = |h_t: T| -> Result<Vec<FactoredLines<T>>> {
        (0..dim)
            .map(|k| {
                let n = grid.n(k);
                let h2 = grid.h(k) * grid.h(k);
                let ls = lines(grid, k);
                let mut fs = Vec::new();
                for &(base, stride) in &ls {
                    // Interior unknowns only; boundary nodes stay at zero.
                    let m = n - 2;
                    let mut lower = vec![-h_t / h2; m];
                    let mut upper = vec![-h_t / h2; m];
                    lower[0] = T::zero();
                    upper[m - 1] = T::zero();
                    let diag: Vec<T> = (1..n - 1)
                        .map(|i| T::one() + T::lit(2.0) * h_t / h2 + h_t * share * c[base + i * stride])
                        .collect();
                    fs.push(
                        Tridiag::factor(lower, &diag, &upper, vec![T::one(); m]).ok_or(Error::Solver {
                            step: 0,
                            residual: f64::NAN,
                        })?,
                    );
                }
                Ok((ls, fs))
            })
            .collect()
    };
    let mut values = gamma0.to_vec();
    for (i, v) in values.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            *v = T::zero();
        }
    }
    let mut t = 0.0f64;
    // Discrete counterpart of e^{βt}: each implicit step damps the shift by 1/(1+β·dt).
    let mut unshift = T::one();
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for &target in save_times {
        let target_f = target.as_f64();
        if target_f > t {
            let n = steps_for(target_f - t, dt.as_f64());
            let h_t = T::lit((target_f - t) / n as f64);
            let sweeps = build(h_t)?;
            for _ in 0..n {
                for (ls, fs) in &sweeps {
                    for (&(base, stride), f) in ls.iter().zip(fs) {
                        f.solve_strided(&mut values, base + stride, stride);
                    }
                }
                clamp_small_negatives(&mut values, target_f)?;
                unshift = unshift * (T::one() + sp.beta * h_t);
            }
            t = target_f;
        }
        let out: Vec<T> = values.iter().map(|v| *v * unshift).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("gamma overflowed at t = {t}")));
        }
        times.push(target);
        fields.push(out);
    }
    Ok(GammaTrajectory {
        grid: grid.clone(),
        times,
        fields,
        beta: sp.beta,
    })
}

/// Discrete transition density `p[i][j] ≈ μ_{t|0}(x_i | x_j)`, one contiguous column per source node.
#[derive(Debug, Clone)]
pub struct TransitionKernel<T> {
    pub grid0: Grid<T>,
    pub grid_t: Grid<T>,
    pub t: T,
    columns: Vec<T>,
}

impl<T: Real> TransitionKernel<T> {
    pub fn p(&self, i: usize, j: usize) -> T {
        self.columns[j * self.grid_t.len() + i]
    }

    pub fn column(&self, j: usize) -> &[T] {
        let n = self.grid_t.len();
        &self.columns[j * n..(j + 1) * n]
    }

    pub fn columns(&self) -> &[T] {
        &self.columns
    }

    /// Joint density `μ_0(x0)·p(x_t|x0)`.
    pub fn joint(&self, mu0: &DensityField<T>) -> Result<JointDensity<T>> {
        if mu0.grid() != &self.grid0 {
            return Err(Error::InvalidArgument(
                "initial density grid differs from the kernel source grid".into(),
            ));
        }
        JointDensity::from_conditionals(mu0, self.grid_t.clone(), self.columns.clone())
    }
}

const BLOCK: usize = 32;

/// Evolves every mollified point mass of a 1D grid together.
///
/// Columns are grouped in blocks laid out row-major so each implicit sweep runs
/// across a whole block at once; blocks are independent and advance in parallel.
pub struct KernelPropagator<T> {
    grid: Grid<T>,
    flux: FluxLine<T>,
    weights: Vec<T>,
    blocks: Vec<(usize, Vec<T>)>,
    t: f64,
    steps: usize,
}

impl<T: Real> KernelPropagator<T> {
    pub fn new(p: &Potential<T>, grid: &Grid<T>, bandwidth: T) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidArgument(
                "transition kernels are built on 1D grids".into(),
            ));
        }
        let n = grid.len();
        let v = p.sample(grid)?;
        let flux = FluxLine::new(&v, grid.h(0));
        let mut blocks = Vec::new();
        let mut j0 = 0;
        while j0 < n {
            let width = BLOCK.min(n - j0);
            let mut data = vec![T::zero(); n * width];
            for jj in 0..width {
                let x0 = grid.node(j0 + jj);
                let d = mollified_delta(grid, &x0[..1], bandwidth)?;
                for (i, val) in d.values().iter().enumerate() {
                    data[i * width + jj] = *val;
                }
            }
            blocks.push((width, data));
            j0 += width;
        }
        Ok(Self {
            grid: grid.clone(),
            flux,
            weights: grid.axis(0).weights(),
            blocks,
            t: 0.0,
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Steps every column to `target` with steps no longer than `dt`.
    pub fn advance_to(&mut self, target: T, dt: T) -> Result<()> {
        let target_f = target.as_f64();
        if !(dt > T::zero()) || target_f < self.t {
            return Err(Error::InvalidArgument(format!(
                "cannot advance kernel from t = {} to {target_f} with dt = {dt}",
                self.t
            )));
        }
        if target_f == self.t {
            return Ok(());
        }
        let n = steps_for(target_f - self.t, dt.as_f64());
        let h = T::lit((target_f - self.t) / n as f64);
        let factor = self.flux.implicit(&self.weights, h).ok_or(Error::Solver {
            step: self.steps,
            residual: f64::NAN,
        })?;
        self.blocks.par_iter_mut().try_for_each(|(width, data)| {
            for _ in 0..n {
                factor.solve_block(data, *width);
            }
            clamp_small_negatives(data, target_f)
        })?;
        self.t = target_f;
        self.steps += n;
        Ok(())
    }

    /// Current kernel with every column renormalized to unit mass.
    pub fn snapshot(&self) -> Result<TransitionKernel<T>> {
        let n = self.grid.len();
        let w = &self.weights;
        let mut columns = vec![T::zero(); n * n];
        let mut j0 = 0;
        for (width, data) in &self.blocks {
            for jj in 0..*width {
                let col = &mut columns[(j0 + jj) * n..(j0 + jj + 1) * n];
                let mut mass = T::zero();
                for i in 0..n {
                    col[i] = data[i * width + jj];
                    mass = mass + w[i] * col[i];
                }
                if !(mass > T::zero()) {
                    return Err(Error::Numeric(format!("kernel column {} lost its mass", j0 + jj)));
                }
                for v in col.iter_mut() {
                    *v = *v / mass;
                }
            }
            j0 += width;
        }
        Ok(TransitionKernel {
            grid0: self.grid.clone(),
            grid_t: self.grid.clone(),
            t: T::lit(self.t),
            columns,
        })
    }
}

/// Kernel at time `t`: column `j` is the evolved mollified point mass at node `j`.
pub fn build_transition_kernel<T: Real>(
    p: &Potential<T>,
    grid: &Grid<T>,
    t: T,
    dt: T,
    bandwidth: T,
) -> Result<TransitionKernel<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!("kernel time must be positive, got {t}")));
    }
    let mut prop = KernelPropagator::new(p, grid, bandwidth)?;
    prop.advance_to(t, dt)?;
    prop.snapshot()
}
