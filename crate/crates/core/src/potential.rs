//! Potentials `V`, the Schrödinger potential `c = ¼‖∇V‖² − ½ΔV`, and the steady state `e^{-V}/Z`.

use crate::error::{Error, Result};
use crate::field::{quadrature, DensityField, Grid};
use crate::scalar::{zero_mat, zero_vec, Mat2, Real, Vec2};

/// Natural cubic spline through `(knots, values)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<T> {
    knots: Vec<T>,
    values: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> CubicSpline<T> {
    pub fn natural(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        let n = knots.len();
        if n < 3 || values.len() != n {
            return Err(Error::InvalidArgument(
                "spline needs at least 3 knots and one value per knot".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "spline knots must be strictly increasing".into(),
            ));
        }
        // Tridiagonal system for interior second derivatives; natural ends are zero.
        let m = n - 2;
        let mut diag = vec![T::zero(); m];
        let mut upper = vec![T::zero(); m];
        let mut lower = vec![T::zero(); m];
        let mut rhs = vec![T::zero(); m];
        let six = T::lit(6.0);
        for k in 0..m {
            let i = k + 1;
            let h0 = knots[i] - knots[i - 1];
            let h1 = knots[i + 1] - knots[i];
            lower[k] = h0;
            diag[k] = T::lit(2.0) * (h0 + h1);
            upper[k] = h1;
            rhs[k] = six * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
        }
        for k in 1..m {
            let f = lower[k] / diag[k - 1];
            diag[k] = diag[k] - f * upper[k - 1];
            rhs[k] = rhs[k] - f * rhs[k - 1];
        }
        let mut second = vec![T::zero(); n];
        for k in (0..m).rev() {
            let next = if k + 1 < m { second[k + 2] } else { T::zero() };
            second[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
        }
        Ok(Self { knots, values, second })
    }

    pub fn range(&self) -> (T, T) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Value, first and second derivative; linear extrapolation outside the knots.
    pub fn eval(&self, x: T) -> (T, T, T) {
        let n = self.knots.len();
        let (lo, hi) = self.range();
        if x < lo || x > hi {
            let (edge, k) = if x < lo { (lo, 0) } else { (hi, n - 2) };
            let (v, d, _) = self.eval_piece(k, edge);
            return (v + d * (x - edge), d, T::zero());
        }
        let k = match self
            .knots
            .binary_search_by(|p| p.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => (i - 1).min(n - 2),
        };
        self.eval_piece(k, x)
    }

    fn eval_piece(&self, k: usize, x: T) -> (T, T, T) {
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let (m0, m1) = (self.second[k], self.second[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let six = T::lit(6.0);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / six;
        let d = (y1 - y0) / h - (T::lit(3.0) * a * a - T::one()) * h * m0 / six
            + (T::lit(3.0) * b * b - T::one()) * h * m1 / six;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialFamily<T> {
    /// `V = α‖x‖²/2`
    Quadratic {
        alpha: T,
    },
    /// `V = Σ_k (a x_k⁴/4 + b x_k²/2)`
    EvenQuartic {
        a: T,
        b: T,
    },
    Constant {
        v0: T,
    },
    /// 1D only.
    Tabulated(CubicSpline<T>),
}

/// A potential on a box, shifted so that its minimum is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T> {
    family: PotentialFamily<T>,
    dim: usize,
    offset: T,
    bounds: Vec<(T, T)>,
}

impl<T: Real> Potential<T> {
    pub fn new(family: PotentialFamily<T>, bounds: Vec<(T, T)>) -> Result<Self> {
        let dim = bounds.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "potential dimension must be 1 or 2, got {dim}"
            )));
        }
        if bounds.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(Error::InvalidArgument("empty potential bounds".into()));
        }
        let offset = match &family {
            PotentialFamily::Quadratic { alpha } => {
                if !(*alpha > T::zero()) {
                    return Err(Error::InvalidArgument(format!(
                        "quadratic alpha must be positive, got {alpha}"
                    )));
                }
                T::zero()
            }
            PotentialFamily::EvenQuartic { a, b } => {
                if *a < T::zero() || *b < T::zero() {
                    return Err(Error::InvalidArgument(
                        "even-quartic coefficients must be nonnegative".into(),
                    ));
                }
                T::zero()
            }
            PotentialFamily::Constant { v0 } => -*v0,
            PotentialFamily::Tabulated(s) => {
                if dim != 1 {
                    return Err(Error::InvalidArgument(
                        "tabulated potentials are one-dimensional".into(),
                    ));
                }
                let (lo, hi) = s.range();
                if bounds[0].0 < lo || bounds[0].1 > hi {
                    return Err(Error::InvalidArgument(
                        "tabulated potential knots must cover the domain".into(),
                    ));
                }
                let samples = 16 * s.knots.len();
                let step = (bounds[0].1 - bounds[0].0) / T::from_usize_lossy(samples);
                let min = (0..=samples)
                    .map(|i| s.eval(bounds[0].0 + T::from_usize_lossy(i) * step).0)
                    .fold(T::infinity(), T::min);
                -min
            }
        };
        Ok(Self {
            family,
            dim,
            offset,
            bounds,
        })
    }

    /// Convenience constructor on a grid's box.
    pub fn on_grid(family: PotentialFamily<T>, grid: &Grid<T>) -> Result<Self> {
        Self::new(family, grid.bounds())
    }

    pub fn quadratic(alpha: T, grid: &Grid<T>) -> Result<Self> {
        Self::on_grid(PotentialFamily::Quadratic { alpha }, grid)
    }

    pub fn constant(grid: &Grid<T>) -> Result<Self> {
        Self::on_grid(PotentialFamily::Constant { v0: T::zero() }, grid)
    }

    pub fn family(&self) -> &PotentialFamily<T> {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, PotentialFamily::Constant { .. })
    }

    fn check(&self, x: &[T]) -> Result<()> {
        let inside = x.len() >= self.dim
            && self.bounds.iter().zip(x).all(|((lo, hi), xi)| {
                let slack = (*hi - *lo) * T::lit(1e-12);
                *xi >= *lo - slack && *xi <= *hi + slack
            });
        if inside {
            Ok(())
        } else {
            Err(Error::Domain {
                point: x.iter().map(|v| v.as_f64()).collect(),
                bounds: self.bounds.iter().map(|(a, b)| (a.as_f64(), b.as_f64())).collect(),
            })
        }
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        self.check(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn gradient(&self, x: &[T]) -> Result<Vec2<T>> {
        self.check(x)?;
        Ok(self.gradient_unchecked(x))
    }

    pub fn hessian(&self, x: &[T]) -> Result<Mat2<T>> {
        self.check(x)?;
        Ok(self.hessian_unchecked(x))
    }

    pub fn laplacian(&self, x: &[T]) -> Result<T> {
        let h = self.hessian(x)?;
        Ok((0..self.dim).map(|k| h[k][k]).sum())
    }

    /// Analytic formulas evaluated anywhere; used by path samplers that leave the box.
    pub fn value_unchecked(&self, x: &[T]) -> T {
        let half = T::lit(0.5);
        let v = match &self.family {
            PotentialFamily::Quadratic { alpha } => half * *alpha * x[..self.dim].iter().map(|v| *v * *v).sum::<T>(),
            PotentialFamily::EvenQuartic { a, b } => x[..self.dim]
                .iter()
                .map(|v| {
                    let v2 = *v * *v;
                    *a * v2 * v2 / T::lit(4.0) + *b * v2 * half
                })
                .sum(),
            PotentialFamily::Constant { v0 } => *v0,
            PotentialFamily::Tabulated(s) => s.eval(x[0]).0,
        };
        v + self.offset
    }

    pub fn gradient_unchecked(&self, x: &[T]) -> Vec2<T> {
        let mut g = zero_vec();
        for k in 0..self.dim {
            g[k] = match &self.family {
                PotentialFamily::Quadratic { alpha } => *alpha * x[k],
                PotentialFamily::EvenQuartic { a, b } => *a * x[k] * x[k] * x[k] + *b * x[k],
                PotentialFamily::Constant { .. } => T::zero(),
                PotentialFamily::Tabulated(s) => s.eval(x[0]).1,
            };
        }
        g
    }

    pub fn hessian_unchecked(&self, x: &[T]) -> Mat2<T> {
        let mut h = zero_mat();
        for k in 0..self.dim {
            h[k][k] = match &self.family {
                PotentialFamily::Quadratic { alpha } => *alpha,
                PotentialFamily::EvenQuartic { a, b } => T::lit(3.0) * *a * x[k] * x[k] + *b,
                PotentialFamily::Constant { .. } => T::zero(),
                PotentialFamily::Tabulated(s) => s.eval(x[0]).2,
            };
        }
        h
    }

    pub fn laplacian_unchecked(&self, x: &[T]) -> T {
        let h = self.hessian_unchecked(x);
        (0..self.dim).map(|k| h[k][k]).sum()
    }

    /// `¼‖∇V‖² − ½ΔV` without a shift.
    pub fn schrodinger_unchecked(&self, x: &[T]) -> T {
        let g = self.gradient_unchecked(x);
        let g2: T = g[..self.dim].iter().map(|v| *v * *v).sum();
        g2 / T::lit(4.0) - self.laplacian_unchecked(x) / T::lit(2.0)
    }

    fn check_grid(&self, grid: &Grid<T>) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "grid dimension {} does not match potential dimension {}",
                grid.dim(),
                self.dim
            )));
        }
        for (k, a) in grid.axes().iter().enumerate() {
            self.check(
                &{
                    let mut p = [T::zero(); 2];
                    p[k] = a.lo;
                    p
                }[..],
            )
            .and(self.check(
                &{
                    let mut p = [T::zero(); 2];
                    p[k] = a.hi;
                    p
                }[..],
            ))
            .map_err(|_| Error::InvalidArgument(format!("grid axis {k} extends outside the potential box")))?;
        }
        Ok(())
    }

    /// `V` at every grid node.
    pub fn sample(&self, grid: &Grid<T>) -> Result<Vec<T>> {
        self.check_grid(grid)?;
        Ok(grid.nodes().map(|x| self.value_unchecked(&x)).collect())
    }

    /// `∇²V` at every grid node.
    pub fn sample_hessian(&self, grid: &Grid<T>) -> Result<Vec<Mat2<T>>> {
        self.check_grid(grid)?;
        Ok(grid.nodes().map(|x| self.hessian_unchecked(&x)).collect())
    }
}

/// The shifted Schrödinger potential `c + β`.
#[derive(Debug, Clone, Copy)]
pub struct SchrodingerPotential<'a, T> {
    pub base: &'a Potential<T>,
    pub beta: T,
}

impl<'a, T: Real> SchrodingerPotential<'a, T> {
    pub fn new(base: &'a Potential<T>, beta: T) -> Result<Self> {
        if !(beta >= T::zero()) {
            return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
        }
        Ok(Self { base, beta })
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        self.base.check(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn value_unchecked(&self, x: &[T]) -> T {
        self.base.schrodinger_unchecked(x) + self.beta
    }

    pub fn sample(&self, grid: &Grid<T>) -> Result<Vec<T>> {
        self.base.check_grid(grid)?;
        Ok(grid.nodes().map(|x| self.value_unchecked(&x)).collect())
    }
}

/// Smallest shift making `c + β ≥ margin` at every grid node.
pub fn choose_beta<T: Real>(p: &Potential<T>, grid: &Grid<T>, margin: T) -> Result<T> {
    p.check_grid(grid)?;
    let min_c = grid
        .nodes()
        .map(|x| p.schrodinger_unchecked(&x))
        .fold(T::infinity(), T::min);
    Ok((-min_c).max(T::zero()) + margin)
}

/// Normalized steady state `e^{-V}/Z` with its normalizer.
#[derive(Debug, Clone)]
pub struct SteadyState<T> {
    pub density: DensityField<T>,
    pub normalizer: T,
}

pub fn steady_state<T: Real>(p: &Potential<T>, grid: &Grid<T>) -> Result<SteadyState<T>> {
    let v = p.sample(grid)?;
    let unnormalized: Vec<T> = v.iter().map(|x| (-*x).exp()).collect();
    let z = quadrature(&unnormalized, grid);
    if !(z.as_f64() >= 1e-300) {
        return Err(Error::Underflow { z: z.as_f64() });
    }
    let values = unnormalized.iter().map(|x| *x / z).collect();
    let density = DensityField::new(grid.clone(), values)?;
    Ok(SteadyState { density, normalizer: z })
}
