//! Expectations against the standard Gaussian and interpolation on uniform grids.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights approximating `E f(Z)` for `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Uniform trapezoid rule on `[-span, span]` with `n` nodes, weights
    /// normalised to sum to one. Converges geometrically for integrands
    /// analytic in a strip.
    pub fn trapezoid(n: usize, span: f64) -> Self {
        assert!(n >= 3 && n % 2 == 1, "trapezoid rule needs an odd node count >= 3");
        let h = 2.0 * span / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| -span + i as f64 * h).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|z| (-0.5 * z * z).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        GaussRule { nodes, weights }
    }

    /// Gauss-Hermite rule for the probabilists' weight via Golub-Welsch.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1);
        let jacobi = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        GaussRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// Samples of a function on `x_i = (i - n) h`, `i = 0..=2n`, evaluated by
/// local Lagrange interpolation and linear extrapolation outside the grid.
#[derive(Debug, Clone)]
pub struct SymmetricGrid {
    h: f64,
    half: usize,
    values: Vec<f64>,
    stencil: usize,
    bary: Vec<f64>,
}

impl SymmetricGrid {
    pub fn new(h: f64, half: usize, values: Vec<f64>, stencil: usize) -> Self {
        assert_eq!(values.len(), 2 * half + 1);
        let stencil = stencil.min(values.len()).max(2);
        // barycentric weights of equispaced nodes: (-1)^j C(p-1, j)
        let mut bary = Vec::with_capacity(stencil);
        let mut c = 1.0;
        for j in 0..stencil {
            bary.push(if j % 2 == 0 { c } else { -c });
            c = c * (stencil - 1 - j) as f64 / (j + 1) as f64;
        }
        SymmetricGrid { h, half, values, stencil, bary }
    }

    pub fn point(h: f64, half: usize, i: usize) -> f64 {
        (i as f64 - half as f64) * h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let s = x / self.h + self.half as f64;
        if s <= 0.0 {
            let slope = self.values[1] - self.values[0];
            return self.values[0] + slope * s;
        }
        let last = (n - 1) as f64;
        if s >= last {
            let slope = self.values[n - 1] - self.values[n - 2];
            return self.values[n - 1] + slope * (s - last);
        }
        let cell = s.floor() as usize;
        let start = (cell + 1).saturating_sub(self.stencil / 2).min(n - self.stencil);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.stencil {
            let d = s - (start + j) as f64;
            if d == 0.0 {
                return self.values[start + j];
            }
            let c = self.bary[j] / d;
            num += c * self.values[start + j];
            den += c;
        }
        num / den
    }
}

/// `log E exp(zeta Y)` for samples `ys` with weights `ws` summing to one,
/// divided by `zeta`; tends to `E Y` as `zeta -> 0` without cancellation.
pub fn scaled_log_mean_exp(ys: &[f64], ws: &[f64], zeta: f64) -> f64 {
    let mean: f64 = ys.iter().zip(ws).map(|(y, w)| y * w).sum();
    if zeta == 0.0 {
        return mean;
    }
    let spread = ys.iter().map(|y| zeta * (y - mean)).fold(f64::NEG_INFINITY, f64::max);
    if spread < 500.0 {
        let s: f64 = ys.iter().zip(ws).map(|(y, w)| w * (zeta * (y - mean)).exp_m1()).sum();
        mean + s.ln_1p() / zeta
    } else {
        let top = ys.iter().map(|y| zeta * y).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = ys.iter().zip(ws).map(|(y, w)| w * (zeta * y - top).exp()).sum();
        (top + s.ln()) / zeta
    }
}

/// Numerically stable `log(sum exp(a_i) w_i)`.
pub fn log_sum_exp_weighted(a: &[f64], w: &[f64]) -> f64 {
    let top = a.iter().zip(w).filter(|p| *p.1 > 0.0).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    let s: f64 = a.iter().zip(w).map(|(x, wi)| wi * (x - top).exp()).sum();
    top + s.ln()
}

/// `log cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        for rule in [GaussRule::trapezoid(61, 9.0), GaussRule::gauss_hermite(30)] {
            assert!((rule.expect(|z| z * z) - 1.0).abs() < 1e-13);
            assert!((rule.expect(|z| z.powi(4)) - 3.0).abs() < 1e-12);
            assert!((rule.expect(|z| (0.7 * z).cos()) - (-0.245f64).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_is_accurate_for_analytic_functions() {
        let h = 0.05;
        let half = 200;
        let vals = (0..=2 * half).map(|i| log_cosh(SymmetricGrid::point(h, half, i))).collect();
        let g = SymmetricGrid::new(h, half, vals, 12);
        for k in 0..1000 {
            let x = -9.7 + k as f64 * 0.0193;
            assert!((g.eval(x) - log_cosh(x)).abs() < 1e-13, "x = {x}");
        }
        // linear extrapolation beyond the grid
        assert!((g.eval(12.0) - log_cosh(12.0)).abs() < 1e-8);
    }

    #[test]
    fn small_zeta_limit() {
        let ys = [0.1, 0.5, 0.9];
        let ws = [0.2, 0.3, 0.5];
        let mean = 0.02 + 0.15 + 0.45;
        assert!((scaled_log_mean_exp(&ys, &ws, 0.0) - mean).abs() < 1e-15);
        let var: f64 = ys.iter().zip(&ws).map(|(y, w)| w * (y - mean) * (y - mean)).sum();
        let tiny = scaled_log_mean_exp(&ys, &ws, 1e-12);
        assert!((tiny - mean - 0.5e-12 * var).abs() < 1e-16);
        let one = scaled_log_mean_exp(&ys, &ws, 1.0);
        let direct = (0.2 * 0.1f64.exp() + 0.3 * 0.5f64.exp() + 0.5 * 0.9f64.exp()).ln();
        assert!((one - direct).abs() < 1e-15);
    }
}
