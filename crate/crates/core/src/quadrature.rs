//! Gauss–Jacobi rules, orthonormal Jacobi polynomials and tensor rules on the unit ball.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Result};

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Three-term recurrence of the Jacobi weight `(1−t)^α (1+t)^β` on `[−1, 1]`.
///
/// `diag[k]` and `offdiag[k] = sqrt(β_k)` (with `offdiag[0] = 0`) are the
/// entries of the Jacobi matrix; `mass` is the total weight.
#[derive(Clone, Debug)]
pub struct JacobiRecurrence {
    pub alpha: f64,
    pub beta: f64,
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
    pub mass: f64,
}

impl JacobiRecurrence {
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        if alpha <= -1.0 || beta <= -1.0 {
            return invalid(format!("Jacobi exponents must exceed -1 (got {alpha}, {beta})"));
        }
        let ab = alpha + beta;
        let mut diag = Vec::with_capacity(n + 1);
        let mut offdiag = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let kf = k as f64;
            let a = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            diag.push(a);
            let b2 = match k {
                0 => 0.0,
                1 => 4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab)),
                _ => {
                    4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab)
                        / ((2.0 * kf + ab).powi(2) * (2.0 * kf + ab + 1.0) * (2.0 * kf + ab - 1.0))
                }
            };
            offdiag.push(b2.sqrt());
        }
        let mass = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0))
            .exp();
        Ok(JacobiRecurrence {
            alpha,
            beta,
            diag,
            offdiag,
            mass,
        })
    }

    /// Values and derivatives `p_k^{(j)}(t)` of the orthonormal polynomials,
    /// `out[k][j]` for `k ≤ kmax`, `j ≤ max_deriv ≤ 4`.
    pub fn eval(&self, t: f64, kmax: usize, max_deriv: usize) -> Vec<[f64; 5]> {
        assert!(kmax < self.diag.len(), "recurrence too short");
        let mut out = vec![[0.0; 5]; kmax + 1];
        out[0][0] = 1.0 / self.mass.sqrt();
        for k in 0..kmax {
            let prev = if k > 0 { out[k - 1] } else { [0.0; 5] };
            let cur = out[k];
            let mut next = [0.0; 5];
            for j in 0..=max_deriv {
                let mut v = (t - self.diag[k]) * cur[j] - self.offdiag[k] * prev[j];
                if j > 0 {
                    v += j as f64 * cur[j - 1];
                }
                next[j] = v / self.offdiag[k + 1];
            }
            out[k + 1] = next;
        }
        out
    }
}

/// Gauss–Jacobi nodes and weights (Golub–Welsch), exact for degree `2n − 1`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return invalid("Gauss rule needs at least one node");
    }
    let rec = JacobiRecurrence::new(alpha, beta, n)?;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = rec.diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = rec.offdiag[i + 1];
            m[(i + 1, i)] = rec.offdiag[i + 1];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], rec.mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Newton polish of the nodes against p_n, weights from the Christoffel formula.
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (x0, w0) in pairs {
        let mut x = x0;
        for _ in 0..3 {
            let p = rec.eval(x, n, 1);
            let step = p[n][0] / p[n][1];
            if !step.is_finite() {
                break;
            }
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let p = rec.eval(x, n - 1, 0);
        let s: f64 = p.iter().map(|v| v[0] * v[0]).sum();
        let w = 1.0 / s;
        nodes.push(x);
        weights.push(if w.is_finite() { w } else { w0 });
    }
    Ok((nodes, weights))
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_jacobi(n, 0.0, 0.0).expect("legendre rule");
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Chebyshev–Lobatto points on `[0, 1]` (`p + 1` points, endpoints included).
pub fn chebyshev_lobatto_unit(p: usize) -> Vec<f64> {
    if p == 0 {
        return vec![0.0];
    }
    (0..=p)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / p as f64).cos()))
        .collect()
}

/// Surface measure of the unit sphere `S^{N−1}` (counting measure for `N = 1`).
pub fn sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * (h * std::f64::consts::PI.ln() - ln_gamma(h)).exp()
}

/// Exact `μ_a(B_1) = ∫_B ((1 − |z|²)/2)^a dz`.
pub fn ball_weighted_volume(dim: usize, a: f64) -> f64 {
    // |S^{N-1}| · (1/2) 2^{-a} B(N/2, a + 1)
    let h = dim as f64 / 2.0;
    let beta = (ln_gamma(h) + ln_gamma(a + 1.0) - ln_gamma(h + a + 1.0)).exp();
    sphere_area(dim) * 0.5 * 2f64.powf(-a) * beta
}

/// Tensor rule for `∫_{B_1} F(z) ρ(z)^a dz` on the unit ball in dimension 1 or 2.
///
/// Radial Gauss–Jacobi in `t = 2|z|² − 1` with exponents `(a, N/2 − 1)`;
/// angular trapezoid (dimension 2) or the two points `±r` (dimension 1).
#[derive(Clone, Debug)]
pub struct BallQuadrature {
    pub dim: usize,
    pub weight_exp: f64,
    pub n_radial: usize,
    pub n_angular: usize,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl BallQuadrature {
    pub fn new(dim: usize, weight_exp: f64, n_radial: usize, n_angular: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("ball quadrature supports dimension 1 or 2, got {dim}"));
        }
        let beta = dim as f64 / 2.0 - 1.0;
        let (t, w) = gauss_jacobi(n_radial, weight_exp, beta)?;
        let scale = 2f64.powf(-1.0 - dim as f64 / 2.0 - 2.0 * weight_exp);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let n_angular = if dim == 1 { 2 } else { n_angular.max(1) };
        for (ti, wi) in t.iter().zip(&w) {
            let r = ((1.0 + ti) / 2.0).sqrt();
            let wr = wi * scale;
            if dim == 1 {
                nodes.push([r, 0.0]);
                weights.push(wr);
                nodes.push([-r, 0.0]);
                weights.push(wr);
            } else {
                let dphi = 2.0 * std::f64::consts::PI / n_angular as f64;
                for j in 0..n_angular {
                    let phi = (j as f64 + 0.5) * dphi;
                    nodes.push([r * phi.cos(), r * phi.sin()]);
                    weights.push(wr * dphi);
                }
            }
        }
        Ok(BallQuadrature {
            dim,
            weight_exp,
            n_radial,
            n_angular,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(&z[..self.dim]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5, 0.0, 2.0);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn jacobi_rule_matches_beta_integral() {
        // ∫ (1-t)^1 (1+t)^{-1/2} t^2 dt via the rule vs. exact moments
        let (x, w) = gauss_jacobi(6, 1.0, -0.5).unwrap();
        let mass: f64 = w.iter().sum();
        let exact_mass = 2f64.powf(1.5) * 4.0 / 3.0;
        assert!((mass - exact_mass).abs() < 1e-13);
        let rec = JacobiRecurrence::new(1.0, -0.5, 8).unwrap();
        // orthonormality of p_0..p_5
        for i in 0..6 {
            for j in 0..6 {
                let g: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(t, w)| {
                        let p = rec.eval(*t, 5, 0);
                        w * p[i][0] * p[j][0]
                    })
                    .sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-13, "gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn recurrence_derivatives_match_finite_differences() {
        let rec = JacobiRecurrence::new(1.0, 0.0, 10).unwrap();
        let t = 0.3;
        let h = 1e-5;
        let p = rec.eval(t, 7, 2);
        let pp = rec.eval(t + h, 7, 0);
        let pm = rec.eval(t - h, 7, 0);
        let fd1 = (pp[7][0] - pm[7][0]) / (2.0 * h);
        let fd2 = (pp[7][0] - 2.0 * p[7][0] + pm[7][0]) / (h * h);
        assert!((fd1 - p[7][1]).abs() < 1e-6 * p[7][1].abs().max(1.0));
        assert!((fd2 - p[7][2]).abs() < 1e-3 * p[7][2].abs().max(1.0));
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_weighted_volume(1, 1.0) - 2.0 / 3.0).abs() < 1e-14);
        assert!((ball_weighted_volume(2, 1.0) - std::f64::consts::PI / 4.0).abs() < 1e-14);
        assert!((ball_weighted_volume(2, 0.0) - std::f64::consts::PI).abs() < 1e-14);
        for dim in 1..=2 {
            for a in [0.0, 1.0, 2.5] {
                let q = BallQuadrature::new(dim, a, 8, 8).unwrap();
                let v = q.integrate(|_| 1.0);
                assert!((v - ball_weighted_volume(dim, a)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn ball_rule_integrates_polynomials_exactly() {
        // ∫_{B_1 ⊂ R^2} z_1^2 z_2^2 ρ dz = π/96 (polar: ∫ r^5 (1-r^2)/2 dr · π/4)
        let q = BallQuadrature::new(2, 1.0, 6, 10).unwrap();
        let v = q.integrate(|z| z[0] * z[0] * z[1] * z[1]);
        let exact = std::f64::consts::PI / 4.0 * 0.5 * (1.0 / 6.0 - 1.0 / 8.0);
        assert!((v - exact).abs() < 1e-15);
    }
}
