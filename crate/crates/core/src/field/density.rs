use crate::error::{Error, Result};
use crate::field::grid::{quadrature, Grid};
use crate::scalar::Real;

/// Nonnegative nodal density on a grid with its cached trapezoid mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    grid: Grid<T>,
    values: Vec<T>,
    mass: T,
}

impl<T: Real> DensityField<T> {
    /// Wraps nodal values; negative or non-finite entries are rejected.
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= T::zero()))
        {
            return Err(Error::InvalidArgument(format!(
                "density value {v} at node {i} is negative or not finite"
            )));
        }
        let mass = quadrature(&values, &grid);
        Ok(Self { grid, values, mass })
    }

    /// Samples `f` at every node and normalizes.
    pub fn from_fn(grid: Grid<T>, f: impl Fn([T; 2]) -> T) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)?.normalized()
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Rescales to unit mass. A field already at unit mass (to summation round-off) is left untouched,
    /// so normalizing twice is bitwise identical to normalizing once.
    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn normalize(&mut self) -> Result<()> {
        if !(self.mass > T::zero()) {
            return Err(Error::AllZero);
        }
        let tol = T::epsilon() * T::from_usize_lossy(self.values.len() + 16);
        if (self.mass - T::one()).abs() <= tol {
            return Ok(());
        }
        let inv = T::one() / self.mass;
        for v in &mut self.values {
            *v = *v * inv;
        }
        self.mass = quadrature(&self.values, &self.grid);
        Ok(())
    }

    /// Mean per axis.
    pub fn mean(&self) -> [T; 2] {
        let mut m = [T::zero(); 2];
        for k in 0..self.grid.dim() {
            let f: Vec<T> = self.grid.nodes().zip(&self.values).map(|(x, v)| x[k] * *v).collect();
            m[k] = quadrature(&f, &self.grid) / self.mass;
        }
        m
    }

    /// Variance per axis.
    pub fn variance(&self) -> [T; 2] {
        let mean = self.mean();
        let mut var = [T::zero(); 2];
        for k in 0..self.grid.dim() {
            let f: Vec<T> = self
                .grid
                .nodes()
                .zip(&self.values)
                .map(|(x, v)| (x[k] - mean[k]) * (x[k] - mean[k]) * *v)
                .collect();
            var[k] = quadrature(&f, &self.grid) / self.mass;
        }
        var
    }

    /// Replaces entries in `(-tol, 0)` by zero; fails on anything more negative.
    pub(crate) fn from_solver(grid: Grid<T>, mut values: Vec<T>, t: f64) -> Result<Self> {
        let tol = T::lit(1e-12);
        let mut min = T::zero();
        for v in &mut values {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite density at t = {t}")));
            }
            if *v < T::zero() {
                min = min.min(*v);
                *v = T::zero();
            }
        }
        if min < -tol {
            return Err(Error::Positivity { min: min.as_f64(), t });
        }
        let mass = quadrature(&values, &grid);
        Ok(Self { grid, values, mass })
    }
}

/// Log of a density with a relative floor; floored nodes are flagged.
#[derive(Debug, Clone)]
pub struct LogField<T> {
    pub values: Vec<T>,
    pub clipped: Vec<bool>,
}

impl<T: Real> LogField<T> {
    pub fn clipped_fraction(&self) -> f64 {
        let c = self.clipped.iter().filter(|c| **c).count();
        c as f64 / self.clipped.len() as f64
    }

    /// Nodes whose derivative stencils touch no clipped node.
    pub fn usable(&self, grid: &Grid<T>) -> Vec<bool> {
        usable_mask(&self.clipped, grid)
    }
}

/// Default floor for logs, relative to the peak value.
pub const DEFAULT_FLOOR_RATIO: f64 = 1e-12;

pub fn log_field<T: Real>(d: &DensityField<T>, floor_ratio: T) -> Result<LogField<T>> {
    log_values(d.values(), floor_ratio)
}

pub(crate) fn log_values<T: Real>(values: &[T], floor_ratio: T) -> Result<LogField<T>> {
    if !(floor_ratio > T::zero() && floor_ratio <= T::lit(1e-6)) {
        return Err(Error::InvalidArgument(format!(
            "floor ratio {floor_ratio} outside (0, 1e-6]"
        )));
    }
    let peak = values.iter().copied().fold(T::zero(), T::max);
    if !(peak > T::zero()) {
        return Err(Error::AllZero);
    }
    let floor = floor_ratio * peak;
    let mut out = Vec::with_capacity(values.len());
    let mut clipped = Vec::with_capacity(values.len());
    for &v in values {
        if v < floor {
            out.push(floor.ln());
            clipped.push(true);
        } else {
            out.push(v.ln());
            clipped.push(false);
        }
    }
    Ok(LogField { values: out, clipped })
}

fn stencil_range(i: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    if i == 0 {
        0..=3
    } else if i + 1 == n {
        n - 4..=n - 1
    } else {
        i - 1..=i + 1
    }
}

pub(crate) fn usable_mask<T: Real>(clipped: &[bool], grid: &Grid<T>) -> Vec<bool> {
    let n0 = grid.n(0);
    if grid.dim() == 1 {
        return (0..n0).map(|i| !stencil_range(i, n0).any(|k| clipped[k])).collect();
    }
    let n1 = grid.n(1);
    let mut out = vec![false; grid.len()];
    for i in 0..n0 {
        for j in 0..n1 {
            let ok = stencil_range(i, n0).all(|a| stencil_range(j, n1).all(|b| !clipped[a * n1 + b]));
            out[i * n1 + j] = ok;
        }
    }
    out
}

/// Normalized Gaussian bump centred at `x0` with the given standard deviation.
pub fn mollified_delta<T: Real>(grid: &Grid<T>, x0: &[T], bandwidth: T) -> Result<DensityField<T>> {
    if !grid.contains(x0) {
        return Err(Error::Domain {
            point: x0.iter().map(|v| v.as_f64()).collect(),
            bounds: grid
                .bounds()
                .into_iter()
                .map(|(a, b)| (a.as_f64(), b.as_f64()))
                .collect(),
        });
    }
    let h = grid.axes().iter().map(|a| a.spacing()).fold(T::zero(), T::max);
    if bandwidth < T::lit(2.0) * h * T::lit(1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth {bandwidth} below twice the grid spacing {h}"
        )));
    }
    let dim = grid.dim();
    let two_var = T::lit(2.0) * bandwidth * bandwidth;
    let values = grid
        .nodes()
        .map(|x| {
            let mut r2 = T::zero();
            for k in 0..dim {
                r2 = r2 + (x[k] - x0[k]) * (x[k] - x0[k]);
            }
            (-r2 / two_var).exp()
        })
        .collect();
    DensityField::new(grid.clone(), values)?.normalized()
}
