use crate::error::{Error, Result};
use crate::field::density::DensityField;
use crate::field::grid::{quadrature, Grid};
use crate::scalar::Real;

/// Joint density of `(X_0, X_t)` on a product of two 1D grids.
///
/// Stored as the initial marginal `mu0` together with the forward conditionals
/// `μ_{t|0}(·|x0_j)`, one contiguous column per `x0` node.
#[derive(Debug, Clone)]
pub struct JointDensity<T> {
    grid0: Grid<T>,
    grid_t: Grid<T>,
    mu0: Vec<T>,
    conditionals: Vec<T>,
    mass: T,
}

impl<T: Real> JointDensity<T> {
    /// Builds `μ_0(x0)·p(x_t|x0)` from an initial density and conditional columns.
    pub fn from_conditionals(mu0: &DensityField<T>, grid_t: Grid<T>, columns: Vec<T>) -> Result<Self> {
        let grid0 = mu0.grid().clone();
        if grid0.dim() != 1 || grid_t.dim() != 1 {
            return Err(Error::InvalidArgument(
                "joint densities are one-dimensional in each variable".into(),
            ));
        }
        let (n0, nt) = (grid0.len(), grid_t.len());
        if columns.len() != n0 * nt {
            return Err(Error::InvalidArgument(format!(
                "expected {} conditional entries, got {}",
                n0 * nt,
                columns.len()
            )));
        }
        if columns.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::InvalidArgument(
                "conditional densities must be finite and nonnegative".into(),
            ));
        }
        let mut joint = Self {
            grid0,
            grid_t,
            mu0: mu0.values().to_vec(),
            conditionals: columns,
            mass: T::zero(),
        };
        joint.mass = quadrature(&joint.marginal_t_values(), &joint.grid_t);
        Ok(joint)
    }

    /// Builds a joint from tabulated values `f(x0_j, xt_i)` laid out column by column.
    pub fn from_values(grid0: Grid<T>, grid_t: Grid<T>, values: Vec<T>) -> Result<Self> {
        let (n0, nt) = (grid0.len(), grid_t.len());
        if values.len() != n0 * nt {
            return Err(Error::InvalidArgument(format!(
                "expected {} joint entries, got {}",
                n0 * nt,
                values.len()
            )));
        }
        let w0 = grid0.weights();
        let wt = grid_t.weights();
        let total: T = values
            .chunks(nt)
            .zip(&w0)
            .map(|(col, a)| *a * col.iter().zip(&wt).map(|(v, b)| *v * *b).sum::<T>())
            .sum();
        if !(total > T::zero()) {
            return Err(Error::AllZero);
        }
        let mut mu0 = Vec::with_capacity(n0);
        let mut cond = Vec::with_capacity(n0 * nt);
        for col in values.chunks(nt) {
            let m = quadrature(col, &grid_t) / total;
            mu0.push(m);
            if m > T::zero() {
                cond.extend(col.iter().map(|v| *v / total / m));
            } else {
                cond.extend(std::iter::repeat_n(T::zero(), nt));
            }
        }
        let mu0 = DensityField::new(grid0, mu0)?;
        Self::from_conditionals(&mu0, grid_t, cond)
    }

    pub fn grid0(&self) -> &Grid<T> {
        &self.grid0
    }

    pub fn grid_t(&self) -> &Grid<T> {
        &self.grid_t
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn mu0(&self) -> &[T] {
        &self.mu0
    }

    /// Forward conditional `μ_{t|0}(·|x0_j)`.
    pub fn conditional(&self, j: usize) -> &[T] {
        let nt = self.grid_t.len();
        &self.conditionals[j * nt..(j + 1) * nt]
    }

    /// Joint value at `(x0_j, xt_i)`.
    pub fn value(&self, j: usize, i: usize) -> T {
        self.mu0[j] * self.conditionals[j * self.grid_t.len() + i]
    }

    /// Marginal of `X_t` by trapezoid quadrature over `x0`.
    pub fn marginal_t_values(&self) -> Vec<T> {
        let nt = self.grid_t.len();
        let w0 = self.grid0.weights();
        let mut out = vec![T::zero(); nt];
        for (j, w) in w0.iter().enumerate() {
            let a = *w * self.mu0[j];
            if a == T::zero() {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.conditional(j)) {
                *o = *o + a * *c;
            }
        }
        out
    }

    pub fn marginal_t(&self) -> Result<DensityField<T>> {
        DensityField::new(self.grid_t.clone(), self.marginal_t_values())
    }

    /// Marginal of `X_0` by quadrature over `x_t`.
    pub fn marginal_0_values(&self) -> Vec<T> {
        (0..self.grid0.len())
            .map(|j| self.mu0[j] * quadrature(self.conditional(j), &self.grid_t))
            .collect()
    }
}
