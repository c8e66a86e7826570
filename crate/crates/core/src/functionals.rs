//! Entropy, Fisher-type functionals, their relative and mutual versions, and the
//! two structural identities relating the mutual second-order quantities.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    diff1, diff1_line, diff2, diff2_line, log_values, quadrature, DensityField, Grid, JointDensity, LogField,
    DEFAULT_FLOOR_RATIO,
};
use crate::scalar::{hs_inner, Mat2, Real};

/// Minimum grid nodes per standard deviation for derivative-based functionals.
pub const MIN_NODES_PER_SD: f64 = 8.0;
/// Largest tolerated fraction of floor-clipped nodes.
pub const MAX_CLIPPED_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InfoValues<T> {
    pub h: T,
    pub j: T,
    pub k: T,
    pub h_rel: T,
    pub j_rel: T,
    pub k_rel: T,
    pub g_rel: T,
    /// Mass on nodes left out of the derivative integrals.
    pub excluded_mass: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MutualValues<T> {
    pub i: T,
    pub phi: T,
    pub psi: T,
    pub d1_analytic: T,
    pub d2_analytic: T,
    pub excluded_mass: T,
}

/// Residual of an identity together with the magnitude it is judged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual<T> {
    pub residual: T,
    pub scale: T,
}

impl<T: Real> IdentityResidual<T> {
    pub fn relative(&self) -> T {
        if self.scale > T::zero() {
            self.residual / self.scale
        } else {
            self.residual
        }
    }
}

/// Log of a density with its derivatives and the nodes where they are trusted.
struct LogDerivs<T> {
    log: LogField<T>,
    usable: Vec<bool>,
}

/// 1D log derivatives along a line.
struct LineDerivs<T> {
    d1: Vec<T>,
    d2: Vec<T>,
    usable: Vec<bool>,
}

/// Log of a closed-form reference density: exact wherever it is positive, since
/// it carries no solver noise that a relative floor would need to suppress.
fn reference_log<T: Real>(values: &[T]) -> LogField<T> {
    let tiny = T::min_positive_value();
    LogField {
        values: values.iter().map(|v| v.max(tiny).ln()).collect(),
        clipped: values.iter().map(|v| *v <= T::zero()).collect(),
    }
}

fn std_devs<T: Real>(values: &[T], grid: &Grid<T>) -> [T; 2] {
    let w = grid.weights();
    let mut mass = T::zero();
    let mut m1 = [T::zero(); 2];
    let mut m2 = [T::zero(); 2];
    for (idx, (v, w)) in values.iter().zip(&w).enumerate() {
        let x = grid.node(idx);
        let a = *v * *w;
        mass = mass + a;
        for k in 0..grid.dim() {
            m1[k] = m1[k] + a * x[k];
            m2[k] = m2[k] + a * x[k] * x[k];
        }
    }
    let mut out = [T::zero(); 2];
    for k in 0..grid.dim() {
        let mean = m1[k] / mass;
        out[k] = (m2[k] / mass - mean * mean).max(T::zero()).sqrt();
    }
    out
}

fn check_nodes_per_sd<T: Real>(values: &[T], grid: &Grid<T>, what: &str) -> Result<()> {
    let sd = std_devs(values, grid);
    for (k, s) in sd.iter().enumerate().take(grid.dim()) {
        let per = (*s / grid.h(k)).as_f64();
        if per < MIN_NODES_PER_SD {
            return Err(Error::Resolution(format!(
                "{what}: {per:.2} nodes per standard deviation along axis {k}, need {MIN_NODES_PER_SD}"
            )));
        }
    }
    Ok(())
}

/// Floor-clipped logs and derivative evaluation with the resolution checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluator<T> {
    pub floor_ratio: T,
}

impl<T: Real> Default for Evaluator<T> {
    fn default() -> Self {
        Self {
            floor_ratio: T::lit(DEFAULT_FLOOR_RATIO),
        }
    }
}

impl<T: Real> Evaluator<T> {
    pub fn new(floor_ratio: T) -> Result<Self> {
        if !(floor_ratio > T::zero() && floor_ratio <= T::lit(1e-6)) {
            return Err(Error::InvalidArgument(format!(
                "floor ratio {floor_ratio} outside (0, 1e-6]"
            )));
        }
        Ok(Self { floor_ratio })
    }

    fn resolved(&self, values: &[T], grid: &Grid<T>, what: &str) -> Result<LogDerivs<T>> {
        let log = log_values(values, self.floor_ratio)?;
        let frac = log.clipped_fraction();
        if frac > MAX_CLIPPED_FRACTION {
            return Err(Error::Resolution(format!(
                "{what}: {:.1}% of nodes fall below the log floor",
                100.0 * frac
            )));
        }
        check_nodes_per_sd(values, grid, what)?;
        let usable = log.usable(grid);
        Ok(LogDerivs { log, usable })
    }

    fn line(&self, values: &[T], h: T, check_clip: bool, what: &str, grid: &Grid<T>) -> Result<LineDerivs<T>> {
        let log = log_values(values, self.floor_ratio)?;
        if check_clip && log.clipped_fraction() > MAX_CLIPPED_FRACTION {
            return Err(Error::Resolution(format!(
                "{what}: {:.1}% of nodes fall below the log floor",
                100.0 * log.clipped_fraction()
            )));
        }
        check_nodes_per_sd(values, grid, what)?;
        Ok(LineDerivs {
            d1: diff1_line(&log.values, h),
            d2: diff2_line(&log.values, h),
            usable: log.usable(grid),
        })
    }

    /// `−∫ μ log μ` with `0 log 0 = 0`.
    pub fn entropy(&self, d: &DensityField<T>) -> T {
        entropy_values(d.values(), d.grid())
    }

    /// `∫ μ ‖∇ log μ‖²` over usable nodes.
    pub fn fisher(&self, d: &DensityField<T>) -> Result<T> {
        let l = self.resolved(d.values(), d.grid(), "fisher information")?;
        let grad = diff1(&l.log.values, d.grid());
        let w = d.grid().weights();
        let dim = d.grid().dim();
        Ok(sum_masked(&l.usable, |i| {
            let g = grad[i];
            w[i] * d.values()[i] * (0..dim).map(|k| g[k] * g[k]).sum::<T>()
        }))
    }

    /// `∫ μ ‖∇² log μ‖²_HS` over usable nodes.
    pub fn second_order_fisher(&self, d: &DensityField<T>) -> Result<T> {
        let l = self.resolved(d.values(), d.grid(), "second-order fisher information")?;
        let hess = diff2(&l.log.values, d.grid());
        let w = d.grid().weights();
        let dim = d.grid().dim();
        Ok(sum_masked(&l.usable, |i| {
            w[i] * d.values()[i] * hs_inner(&hess[i], &hess[i], dim)
        }))
    }

    /// Absolute and `ν`-relative functionals of `d`; `hess_v` is `∇²V` at every node.
    pub fn relative_functionals(
        &self,
        d: &DensityField<T>,
        nu: &DensityField<T>,
        hess_v: &[Mat2<T>],
    ) -> Result<InfoValues<T>> {
        let grid = d.grid();
        if nu.grid() != grid || hess_v.len() != grid.len() {
            return Err(Error::InvalidArgument(
                "density, reference and potential Hessian must share one grid".into(),
            ));
        }
        let floor = self.floor_ratio * d.max_value();
        if let Some(i) = (0..grid.len()).find(|&i| nu.values()[i] <= T::zero() && d.values()[i] > floor) {
            return Err(Error::Support(format!(
                "reference density vanishes at node {i} where the density carries mass"
            )));
        }
        let dim = grid.dim();
        let w = grid.weights();
        let mu = d.values();
        let lm = self.resolved(mu, grid, "density")?;
        let ln = reference_log(nu.values());
        let usable_nu = ln.usable(grid);
        let gm = diff1(&lm.log.values, grid);
        let hm = diff2(&lm.log.values, grid);
        let gn = diff1(&ln.values, grid);
        let hn = diff2(&ln.values, grid);

        let h = entropy_values(mu, grid);
        let h_rel = (0..grid.len())
            .filter(|&i| mu[i] > T::zero())
            .map(|i| w[i] * mu[i] * (mu[i].ln() - nu.values()[i].ln()))
            .sum::<T>();
        let mut out = InfoValues {
            h,
            h_rel,
            ..Default::default()
        };
        for i in 0..grid.len() {
            let a = w[i] * mu[i];
            if !lm.usable[i] {
                out.excluded_mass = out.excluded_mass + a;
                continue;
            }
            out.j = out.j + a * (0..dim).map(|k| gm[i][k] * gm[i][k]).sum::<T>();
            out.k = out.k + a * hs_inner(&hm[i], &hm[i], dim);
            if !usable_nu[i] {
                out.excluded_mass = out.excluded_mass + a;
                continue;
            }
            let mut g = [T::zero(); 2];
            let mut hh = [[T::zero(); 2]; 2];
            for r in 0..dim {
                g[r] = gm[i][r] - gn[i][r];
                for c in 0..dim {
                    hh[r][c] = hm[i][r][c] - hn[i][r][c];
                }
            }
            out.j_rel = out.j_rel + a * (0..dim).map(|k| g[k] * g[k]).sum::<T>();
            out.k_rel = out.k_rel + a * hs_inner(&hh, &hh, dim);
            let mut quad = T::zero();
            for r in 0..dim {
                for c in 0..dim {
                    quad = quad + g[r] * hess_v[i][r][c] * g[c];
                }
            }
            out.g_rel = out.g_rel + a * quad;
        }
        Ok(out)
    }

    /// Per-column pass over the joint density shared by all mutual quantities.
    fn columns(&self, joint: &JointDensity<T>, extra: &Extras<'_, T>) -> Result<JointSums<T>> {
        let g0 = joint.grid0();
        let gt = joint.grid_t();
        let ht = gt.h(0);
        let wt = gt.weights();
        let w0 = g0.weights();
        let marg_values = joint.marginal_t_values();
        let marg = self.line(&marg_values, ht, true, "time-t marginal", gt)?;
        let mu0 = joint.mu0();
        let floor0 = self.floor_ratio * mu0.iter().copied().fold(T::zero(), T::max);
        let active: Vec<usize> = (0..g0.len())
            .filter(|&j| mu0[j] >= floor0 && mu0[j] > T::zero())
            .collect();
        let skipped: T = (0..g0.len())
            .filter(|j| !active.contains(j))
            .map(|j| w0[j] * mu0[j])
            .sum();
        let per_col: Vec<ColumnSums<T>> = active
            .par_iter()
            .map(|&j| {
                let col = joint.conditional(j);
                let l = self.line(col, ht, false, &format!("conditional column {j}"), gt)?;
                let mut s = ColumnSums {
                    weight: w0[j] * mu0[j],
                    entropy: entropy_values(col, gt),
                    ..Default::default()
                };
                for i in 0..gt.len() {
                    let om = wt[i] * col[i];
                    let ok = l.usable[i]
                        && marg.usable[i]
                        && extra.nu.is_none_or(|n| n.usable[i])
                        && extra.gamma.is_none_or(|g| g.usable[i]);
                    if !ok {
                        s.excluded = s.excluded + om;
                        continue;
                    }
                    let a = l.d1[i] - marg.d1[i];
                    let big_a = l.d2[i] - marg.d2[i];
                    s.phi = s.phi + om * a * a;
                    s.psi = s.psi + om * big_a * big_a;
                    if let Some(n) = extra.nu {
                        let b1 = l.d1[i] - n.d1[i];
                        let b2 = l.d2[i] - n.d2[i];
                        s.j_cond = s.j_cond + om * b1 * b1;
                        s.k_cond = s.k_cond + om * b2 * b2;
                        s.cross = s.cross + om * (marg.d2[i] - n.d2[i]) * big_a;
                    }
                    if let Some(g) = extra.gamma {
                        s.gamma_cross = s.gamma_cross + om * g.d2[i] * big_a;
                    }
                    if let Some(rho) = extra.rho {
                        s.ibp_sq = s.ibp_sq + om * rho[i] * a * a;
                        s.ibp_hess = s.ibp_hess + om * rho[i] * big_a;
                    }
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let mut total = JointSums {
            marginal: marg_values,
            marg,
            excluded: skipped,
            ..Default::default()
        };
        for s in &per_col {
            let a = s.weight;
            total.entropy = total.entropy + a * s.entropy;
            total.phi = total.phi + a * s.phi;
            total.psi = total.psi + a * s.psi;
            total.j_cond = total.j_cond + a * s.j_cond;
            total.k_cond = total.k_cond + a * s.k_cond;
            total.cross = total.cross + a * s.cross;
            total.gamma_cross = total.gamma_cross + a * s.gamma_cross;
            total.ibp_sq = total.ibp_sq + a * s.ibp_sq;
            total.ibp_hess = total.ibp_hess + a * s.ibp_hess;
            total.excluded = total.excluded + a * s.excluded;
        }
        Ok(total)
    }

    fn line_of(&self, d: &DensityField<T>, what: &str) -> Result<LineDerivs<T>> {
        let grid = d.grid();
        if grid.dim() != 1 {
            return Err(Error::InvalidArgument(format!("{what} must be one-dimensional")));
        }
        self.line(d.values(), grid.h(0), false, what, grid)
    }

    fn check_joint(joint: &JointDensity<T>, other: &DensityField<T>, what: &str) -> Result<()> {
        if other.grid() != joint.grid_t() {
            return Err(Error::InvalidArgument(format!(
                "{what} is not on the joint density's time-t grid"
            )));
        }
        Ok(())
    }

    /// `I(X_0;X_t) = H(X_t) − H(X_t|X_0)`.
    pub fn mutual_information(&self, joint: &JointDensity<T>) -> Result<T> {
        let s = self.columns(joint, &Extras::default())?;
        Ok(entropy_values(&s.marginal, joint.grid_t()) - s.entropy)
    }

    /// `Φ = ∫∫ μ_{0,t} |∂_{x_t} log μ_{0|t}|²`.
    pub fn backward_fisher(&self, joint: &JointDensity<T>) -> Result<T> {
        Ok(self.columns(joint, &Extras::default())?.phi)
    }

    /// `Φ` computed directly and as `J_ν(X_t|X_0) − J_ν(X_t)`.
    pub fn backward_fisher_two_route(&self, joint: &JointDensity<T>, nu: &DensityField<T>) -> Result<(T, T)> {
        Self::check_joint(joint, nu, "reference density")?;
        let n = self.line_of(nu, "reference density")?;
        let s = self.columns(
            joint,
            &Extras {
                nu: Some(&n),
                ..Default::default()
            },
        )?;
        let wt = joint.grid_t().weights();
        let j_marg = sum_masked(&and_masks(&s.marg.usable, &n.usable), |i| {
            let b = s.marg.d1[i] - n.d1[i];
            wt[i] * s.marginal[i] * b * b
        });
        Ok((s.phi, s.j_cond - j_marg))
    }

    /// `Ψ = ∫∫ μ_{0,t} (∂²_{x_t} log μ_{0|t})²`.
    pub fn psi(&self, joint: &JointDensity<T>) -> Result<T> {
        Ok(self.columns(joint, &Extras::default())?.psi)
    }

    /// Residual of `K_ν(X_0;X_t) = Ψ + 2∫ μ_t ∂²log(μ_t/ν) ∫ μ_{0|t} ∂²log μ_{0|t} dx_0`.
    ///
    /// `marginal` is the time-t density computed independently of the joint; it
    /// supplies the `K_ν(X_t)` term.
    pub fn kv_decomposition_residual(
        &self,
        joint: &JointDensity<T>,
        marginal: &DensityField<T>,
        nu: &DensityField<T>,
    ) -> Result<IdentityResidual<T>> {
        Self::check_joint(joint, nu, "reference density")?;
        Self::check_joint(joint, marginal, "marginal density")?;
        let n = self.line_of(nu, "reference density")?;
        let m = self.line_of(marginal, "marginal density")?;
        let s = self.columns(
            joint,
            &Extras {
                nu: Some(&n),
                ..Default::default()
            },
        )?;
        let wt = joint.grid_t().weights();
        let k_marg = sum_masked(&and_masks(&m.usable, &n.usable), |i| {
            let b = m.d2[i] - n.d2[i];
            wt[i] * marginal.values()[i] * b * b
        });
        let k_mutual = s.k_cond - k_marg;
        Ok(IdentityResidual {
            residual: (k_mutual - s.psi - T::lit(2.0) * s.cross).abs(),
            scale: k_mutual.abs(),
        })
    }

    /// Residual of `∫∫ μ_{0,t} ρ (∂ log μ_{0|t})² + ∫∫ μ_{0,t} ρ ∂² log μ_{0|t} = 0`
    /// for a weight `ρ` depending on `x_t` only.
    pub fn integration_by_parts_residual(&self, joint: &JointDensity<T>, rho: &[T]) -> Result<IdentityResidual<T>> {
        if rho.len() != joint.grid_t().len() {
            return Err(Error::InvalidArgument(
                "weight field does not match the time-t grid".into(),
            ));
        }
        let w0 = joint.grid0().weights();
        let mu0 = joint.mu0();
        let edge = [0, 1, w0.len() - 2, w0.len() - 1]
            .iter()
            .map(|&j| w0[j] * mu0[j])
            .sum::<T>();
        if edge > T::lit(1e-10) {
            return Err(Error::Precondition(format!(
                "initial density carries mass {edge} at the edge of its grid"
            )));
        }
        let s = self.columns(
            joint,
            &Extras {
                rho: Some(rho),
                ..Default::default()
            },
        )?;
        Ok(IdentityResidual {
            residual: (s.ibp_sq + s.ibp_hess).abs(),
            scale: s.ibp_sq.abs().max(s.ibp_hess.abs()),
        })
    }

    /// `d²I/dt² = 2Ψ + 4∫∫ μ_{0,t} ∂²log γ_t ∂²log μ_{0|t}` with `gamma_t = e^{V/2} μ_t`.
    pub fn mutual_second_derivative(&self, joint: &JointDensity<T>, gamma_t: &[T]) -> Result<T> {
        let s = self.with_gamma(joint, gamma_t)?;
        Ok(T::lit(2.0) * s.psi + T::lit(4.0) * s.gamma_cross)
    }

    fn with_gamma(&self, joint: &JointDensity<T>, gamma_t: &[T]) -> Result<JointSums<T>> {
        let gt = joint.grid_t();
        if gamma_t.len() != gt.len() {
            return Err(Error::InvalidArgument(
                "gamma field does not match the time-t grid".into(),
            ));
        }
        let g = self.line(gamma_t, gt.h(0), false, "gamma", gt)?;
        self.columns(
            joint,
            &Extras {
                gamma: Some(&g),
                ..Default::default()
            },
        )
    }

    /// All mutual quantities at one time from a single pass over the joint.
    pub fn mutual_values(&self, joint: &JointDensity<T>, gamma_t: &[T]) -> Result<MutualValues<T>> {
        let s = self.with_gamma(joint, gamma_t)?;
        Ok(MutualValues {
            i: entropy_values(&s.marginal, joint.grid_t()) - s.entropy,
            phi: s.phi,
            psi: s.psi,
            d1_analytic: -s.phi,
            d2_analytic: T::lit(2.0) * s.psi + T::lit(4.0) * s.gamma_cross,
            excluded_mass: s.excluded,
        })
    }
}

#[derive(Default)]
struct Extras<'a, T> {
    nu: Option<&'a LineDerivs<T>>,
    gamma: Option<&'a LineDerivs<T>>,
    rho: Option<&'a [T]>,
}

#[derive(Default)]
struct ColumnSums<T> {
    weight: T,
    entropy: T,
    phi: T,
    psi: T,
    j_cond: T,
    k_cond: T,
    cross: T,
    gamma_cross: T,
    ibp_sq: T,
    ibp_hess: T,
    excluded: T,
}

struct JointSums<T> {
    marginal: Vec<T>,
    marg: LineDerivs<T>,
    entropy: T,
    phi: T,
    psi: T,
    j_cond: T,
    k_cond: T,
    cross: T,
    gamma_cross: T,
    ibp_sq: T,
    ibp_hess: T,
    excluded: T,
}

impl<T: Real> Default for JointSums<T> {
    fn default() -> Self {
        Self {
            marginal: Vec::new(),
            marg: LineDerivs {
                d1: Vec::new(),
                d2: Vec::new(),
                usable: Vec::new(),
            },
            entropy: T::zero(),
            phi: T::zero(),
            psi: T::zero(),
            j_cond: T::zero(),
            k_cond: T::zero(),
            cross: T::zero(),
            gamma_cross: T::zero(),
            ibp_sq: T::zero(),
            ibp_hess: T::zero(),
            excluded: T::zero(),
        }
    }
}

fn and_masks(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

fn sum_masked<T: Real>(mask: &[bool], f: impl Fn(usize) -> T) -> T {
    (0..mask.len()).filter(|&i| mask[i]).map(f).sum()
}

fn entropy_values<T: Real>(values: &[T], grid: &Grid<T>) -> T {
    let terms: Vec<T> = values
        .iter()
        .map(|v| if *v > T::zero() { -*v * v.ln() } else { T::zero() })
        .collect();
    quadrature(&terms, grid)
}

/// `F(X;Y) = ∫ μ_0 F(Y|X=x0) dx0 − F(Y)`.
pub fn mutual_version<T: Real>(f_cond: &[T], mu0: &DensityField<T>, f_marg: T) -> Result<T> {
    if f_cond.len() != mu0.grid().len() {
        return Err(Error::InvalidArgument(
            "conditional values do not match the initial grid".into(),
        ));
    }
    let terms: Vec<T> = f_cond.iter().zip(mu0.values()).map(|(f, m)| *f * *m).collect();
    Ok(quadrature(&terms, mu0.grid()) - f_marg)
}

pub fn entropy<T: Real>(d: &DensityField<T>) -> T {
    Evaluator::default().entropy(d)
}

pub fn fisher<T: Real>(d: &DensityField<T>) -> Result<T> {
    Evaluator::default().fisher(d)
}

pub fn second_order_fisher<T: Real>(d: &DensityField<T>) -> Result<T> {
    Evaluator::default().second_order_fisher(d)
}

pub fn relative_functionals<T: Real>(
    d: &DensityField<T>,
    nu: &DensityField<T>,
    hess_v: &[Mat2<T>],
) -> Result<InfoValues<T>> {
    Evaluator::default().relative_functionals(d, nu, hess_v)
}

pub fn backward_fisher<T: Real>(joint: &JointDensity<T>) -> Result<T> {
    Evaluator::default().backward_fisher(joint)
}

pub fn psi<T: Real>(joint: &JointDensity<T>) -> Result<T> {
    Evaluator::default().psi(joint)
}

pub fn kv_decomposition_residual<T: Real>(
    joint: &JointDensity<T>,
    marginal: &DensityField<T>,
    nu: &DensityField<T>,
) -> Result<IdentityResidual<T>> {
    Evaluator::default().kv_decomposition_residual(joint, marginal, nu)
}

pub fn integration_by_parts_residual<T: Real>(joint: &JointDensity<T>, rho: &[T]) -> Result<IdentityResidual<T>> {
    Evaluator::default().integration_by_parts_residual(joint, rho)
}

pub fn mutual_second_derivative<T: Real>(joint: &JointDensity<T>, gamma_t: &[T]) -> Result<T> {
    Evaluator::default().mutual_second_derivative(joint, gamma_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal(g: &Grid<f64>, m: f64, var: f64) -> DensityField<f64> {
        DensityField::from_fn(g.clone(), |x: [f64; 2]| (-(x[0] - m) * (x[0] - m) / (2.0 * var)).exp()).unwrap()
    }

    #[test]
    fn entropy_of_uniform_and_gaussians() {
        let g = Grid::line(0.0, 1.0, 65).unwrap();
        let u = DensityField::new(g, vec![1.0f64; 65]).unwrap();
        assert!(entropy(&u).abs() < 1e-14);
        let g = Grid::line(-8.0, 8.0, 1025).unwrap();
        let h1 = entropy(&normal(&g, 0.0, 1.0));
        assert!((h1 - 1.418_938_533_204_672_7).abs() < 1e-4);
        let narrow = entropy(&normal(&g, 0.0, 0.01));
        assert!((narrow - (-0.883_646_559_789_373)).abs() < 1e-3);
    }

    #[test]
    fn resolution_errors() {
        let g = Grid::line(-8.0, 8.0, 33).unwrap();
        let e = fisher(&normal(&g, 0.0, 1.0)).unwrap_err();
        assert!(matches!(e, Error::Resolution(_)));
        let g = Grid::line(-60.0, 60.0, 4097).unwrap();
        let e = second_order_fisher(&normal(&g, 0.0, 1.0)).unwrap_err();
        assert!(matches!(e, Error::Resolution(_)), "{e}");
    }

    #[test]
    fn mutual_version_of_constant_is_zero() {
        let g = Grid::line(-8.0, 8.0, 257).unwrap();
        let mu0 = normal(&g, 0.0, 1.0);
        let f = vec![0.7; 257];
        assert!(mutual_version(&f, &mu0, 0.7).unwrap().abs() < 1e-12);
    }
}
