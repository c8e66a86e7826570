//! Second-order finite differences: central in the interior, one-sided at the ends.

use crate::field::grid::Grid;
use crate::scalar::{zero_mat, zero_vec, Mat2, Real, Vec2};

/// First derivative of a strided line of `n` values.
fn d1_line<T: Real>(f: &[T], base: usize, stride: usize, n: usize, h: T, out: &mut [T]) {
    let at = |i: usize| f[base + i * stride];
    let two_h = T::lit(2.0) * h;
    out[0] = (T::lit(-3.0) * at(0) + T::lit(4.0) * at(1) - at(2)) / two_h;
    for i in 1..n - 1 {
        out[i] = (at(i + 1) - at(i - 1)) / two_h;
    }
    out[n - 1] = (T::lit(3.0) * at(n - 1) - T::lit(4.0) * at(n - 2) + at(n - 3)) / two_h;
}

fn d2_line<T: Real>(f: &[T], base: usize, stride: usize, n: usize, h: T, out: &mut [T]) {
    let at = |i: usize| f[base + i * stride];
    let h2 = h * h;
    let (two, four, five) = (T::lit(2.0), T::lit(4.0), T::lit(5.0));
    out[0] = (two * at(0) - five * at(1) + four * at(2) - at(3)) / h2;
    for i in 1..n - 1 {
        out[i] = (at(i + 1) - two * at(i) + at(i - 1)) / h2;
    }
    out[n - 1] = (two * at(n - 1) - five * at(n - 2) + four * at(n - 3) - at(n - 4)) / h2;
}

/// First derivative of a contiguous 1D line.
pub fn diff1_line<T: Real>(f: &[T], h: T) -> Vec<T> {
    let mut out = vec![T::zero(); f.len()];
    d1_line(f, 0, 1, f.len(), h, &mut out);
    out
}

/// Second derivative of a contiguous 1D line.
pub fn diff2_line<T: Real>(f: &[T], h: T) -> Vec<T> {
    let mut out = vec![T::zero(); f.len()];
    d2_line(f, 0, 1, f.len(), h, &mut out);
    out
}

/// Partial derivative along `axis` of a nodal field.
pub fn partial<T: Real>(f: &[T], grid: &Grid<T>, axis: usize, order: u8) -> Vec<T> {
    let n = grid.n(axis);
    let h = grid.h(axis);
    let stride = grid.stride(axis);
    let mut out = vec![T::zero(); f.len()];
    let mut line = vec![T::zero(); n];
    let other = grid.len() / n;
    for l in 0..other {
        let base = if stride == 1 { l * n } else { l };
        match order {
            1 => d1_line(f, base, stride, n, h, &mut line),
            _ => d2_line(f, base, stride, n, h, &mut line),
        }
        for i in 0..n {
            out[base + i * stride] = line[i];
        }
    }
    out
}

/// Gradient at every node.
pub fn diff1<T: Real>(f: &[T], grid: &Grid<T>) -> Vec<Vec2<T>> {
    let mut out = vec![zero_vec(); f.len()];
    for k in 0..grid.dim() {
        let d = partial(f, grid, k, 1);
        for (o, v) in out.iter_mut().zip(d) {
            o[k] = v;
        }
    }
    out
}

/// Hessian at every node; the mixed partial is the composition of first differences.
pub fn diff2<T: Real>(f: &[T], grid: &Grid<T>) -> Vec<Mat2<T>> {
    let mut out = vec![zero_mat(); f.len()];
    for k in 0..grid.dim() {
        let d = partial(f, grid, k, 2);
        for (o, v) in out.iter_mut().zip(d) {
            o[k][k] = v;
        }
    }
    if grid.dim() == 2 {
        let dx = partial(f, grid, 0, 1);
        let dxy = partial(&dx, grid, 1, 1);
        for (o, v) in out.iter_mut().zip(dxy) {
            o[0][1] = v;
            o[1][0] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_differentiated_exactly() {
        let g = Grid::<f64>::line(-3.0, 5.0, 65).unwrap();
        let f: Vec<f64> = g.nodes().map(|x| x[0] * x[0]).collect();
        let d2 = diff2(&f, &g);
        assert!(d2.iter().all(|m| (m[0][0] - 2.0).abs() < 1e-10));
        let d1 = diff1(&f, &g);
        for (x, d) in g.nodes().zip(&d1) {
            assert!((d[0] - 2.0 * x[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = Grid::<f64>::square(0.0, 1.0, 33).unwrap();
        let f = vec![3.5; g.len()];
        assert!(diff1(&f, &g).iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        assert!(diff2(&f, &g).iter().all(|m| m.iter().flatten().all(|v| v.abs() < 1e-9)));
    }

    #[test]
    fn sine_slope_at_origin_within_taylor_bound() {
        let g = Grid::<f64>::line(-1.0, 1.0, 65).unwrap();
        let h = g.h(0);
        let f: Vec<f64> = g.nodes().map(|x| x[0].sin()).collect();
        let d = diff1(&f, &g);
        // central difference error is h^2/6 |f'''| <= h^2/6
        assert!((d[32][0] - 1.0).abs() <= h * h / 6.0 + 1e-15);
    }

    #[test]
    fn mixed_partial_of_bilinear() {
        let g = Grid::<f64>::square(-1.0, 1.0, 33).unwrap();
        let f: Vec<f64> = g.nodes().map(|x| 3.0 * x[0] * x[1] + x[1] * x[1]).collect();
        let hs = diff2(&f, &g);
        for m in &hs {
            assert!((m[0][1] - 3.0).abs() < 1e-10);
            assert!((m[1][1] - 2.0).abs() < 1e-9);
            assert!(m[0][0].abs() < 1e-9);
        }
    }
}
