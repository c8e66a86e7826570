use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum node count per axis.
pub const MIN_NODES: usize = 33;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Real> Axis<T> {
    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.n - 1)
    }

    /// Node coordinate; the last node is pinned to `hi` exactly.
    pub fn coord(&self, i: usize) -> T {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + T::from_usize_lossy(i) * self.spacing()
        }
    }

    pub fn weights(&self) -> Vec<T> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = h / T::lit(2.0);
        w[self.n - 1] = h / T::lit(2.0);
        w
    }
}

/// Uniform rectangular grid in one or two dimensions, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    axes: Vec<Axis<T>>,
}

impl<T: Real> Grid<T> {
    pub fn new(axes: Vec<Axis<T>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.n < MIN_NODES {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} has {} nodes, need at least {MIN_NODES}",
                    a.n
                )));
            }
            if !(a.hi > a.lo) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} bounds [{}, {}] are not an increasing finite interval",
                    a.lo, a.hi
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(lo: T, hi: T, n: usize) -> Result<Self> {
        Self::new(vec![Axis { lo, hi, n }])
    }

    pub fn square(lo: T, hi: T, n: usize) -> Result<Self> {
        Self::new(vec![Axis { lo, hi, n }, Axis { lo, hi, n }])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis<T> {
        &self.axes[k]
    }

    pub fn n(&self, k: usize) -> usize {
        self.axes[k].n
    }

    pub fn h(&self, k: usize) -> T {
        self.axes[k].spacing()
    }

    /// Smallest spacing over all axes.
    pub fn h_min(&self) -> T {
        self.axes.iter().map(|a| a.spacing()).fold(T::infinity(), T::min)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stride of axis `k` in the flat node ordering.
    pub fn stride(&self, k: usize) -> usize {
        if self.dim() == 2 && k == 0 {
            self.axes[1].n
        } else {
            1
        }
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [idx, 0]
        } else {
            let n1 = self.axes[1].n;
            [idx / n1, idx % n1]
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.dim() == 1 {
            mi[0]
        } else {
            mi[0] * self.axes[1].n + mi[1]
        }
    }

    /// Coordinates of a node; the unused component is zero in 1D.
    pub fn node(&self, idx: usize) -> [T; 2] {
        let mi = self.multi_index(idx);
        let mut x = [T::zero(); 2];
        for (k, a) in self.axes.iter().enumerate() {
            x[k] = a.coord(mi[k]);
        }
        x
    }

    pub fn nodes(&self) -> impl Iterator<Item = [T; 2]> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Product trapezoid weights.
    pub fn weights(&self) -> Vec<T> {
        let w0 = self.axes[0].weights();
        if self.dim() == 1 {
            return w0;
        }
        let w1 = self.axes[1].weights();
        let mut w = Vec::with_capacity(self.len());
        for a in &w0 {
            for b in &w1 {
                w.push(*a * *b);
            }
        }
        w
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() >= self.dim()
            && self.axes.iter().zip(x).all(|(a, &xi)| {
                let slack = a.spacing() * T::lit(1e-9);
                xi >= a.lo - slack && xi <= a.hi + slack
            })
    }

    pub fn bounds(&self) -> Vec<(T, T)> {
        self.axes.iter().map(|a| (a.lo, a.hi)).collect()
    }

    /// Indices of nodes on the outer boundary of the box.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        self.axes
            .iter()
            .enumerate()
            .any(|(k, a)| mi[k] == 0 || mi[k] + 1 == a.n)
    }
}

/// Trapezoid-rule integral of nodal values over the grid.
pub fn quadrature<T: Real>(f: &[T], grid: &Grid<T>) -> T {
    debug_assert_eq!(f.len(), grid.len());
    if grid.dim() == 1 {
        let n = f.len();
        let h = grid.h(0);
        let inner: T = f[1..n - 1].iter().copied().sum();
        return h * (inner + (f[0] + f[n - 1]) / T::lit(2.0));
    }
    let w = grid.weights();
    f.iter().zip(&w).map(|(a, b)| *a * *b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_endpoints() {
        let g = Grid::<f64>::line(-8.0, 8.0, 1025).unwrap();
        assert_eq!(g.h(0), 16.0 / 1024.0);
        assert_eq!(g.node(0)[0], -8.0);
        assert_eq!(g.node(1024)[0], 8.0);
        assert_eq!(g.node(512)[0], 0.0);
    }

    #[test]
    fn rejects_small_or_bad_axes() {
        assert!(Grid::<f64>::line(0.0, 1.0, 32).is_err());
        assert!(Grid::<f64>::line(1.0, 0.0, 65).is_err());
        assert!(Grid::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn quadrature_constant_and_affine() {
        for n in [33, 64, 101] {
            let g = Grid::<f64>::line(0.0, 1.0, n).unwrap();
            let one = vec![1.0; n];
            assert!((quadrature(&one, &g) - 1.0).abs() < 1e-14);
            let x: Vec<f64> = g.nodes().map(|p| p[0]).collect();
            assert!((quadrature(&x, &g) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn quadrature_normal_pdf_is_spectrally_accurate() {
        let g = Grid::<f64>::line(-8.0, 8.0, 1025).unwrap();
        let f: Vec<f64> = g
            .nodes()
            .map(|p| (-p[0] * p[0] / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .collect();
        assert!((quadrature(&f, &g) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_2d_affine() {
        let g = Grid::<f64>::square(0.0, 1.0, 33).unwrap();
        let f: Vec<f64> = g.nodes().map(|p| 1.0 + p[0] + 2.0 * p[1]).collect();
        assert!((quadrature(&f, &g) - 2.5).abs() < 1e-13);
        assert_eq!(g.flat_index(g.multi_index(100)), 100);
    }
}
