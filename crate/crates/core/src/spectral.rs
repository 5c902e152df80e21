//! Galerkin discretization of `L_σ w = −ρΔw + (σ+1) z·∇w` and of `L_σ² + nL_σ`,
//! eigendecomposition, resolvent solves and the heat kernel.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{Discretization, Field};
use crate::error::{invalid, Error, Result};
use crate::jet::Jet;
use crate::quadrature::{gauss_jacobi, JacobiRecurrence};

/// Which operator to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Power {
    /// `L_σ`.
    First,
    /// `L_σ² + n L_σ`.
    FourthOrder,
}

/// One eigenpair `(λ, μ = λ² + nλ)` with its position in the basis.
#[derive(Clone, Debug, Serialize)]
pub struct EigenEntry {
    /// Flat eigen-index.
    pub index: usize,
    pub mode: usize,
    pub l: usize,
    pub k: usize,
    pub lambda: f64,
    pub mu: f64,
}

/// Per angular degree Galerkin matrices and their eigenpairs.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    pub dim: usize,
    pub sigma: f64,
    pub n: f64,
    pub k_max: usize,
    /// `A_l`, the Galerkin matrix of `L_σ` on the radial block of degree `l`.
    pub blocks: Vec<DMatrix<f64>>,
    /// Eigenvalues per degree, ascending.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Orthonormal eigenvectors per degree (columns).
    pub eigenvectors: Vec<DMatrix<f64>>,
    /// `l` of every mode of the discretization.
    mode_l: Vec<usize>,
}

/// Radial action `L_l p` in `t = 2|z|² − 1` given `p, p', p''`.
fn radial_operator(dim: usize, sigma: f64, l: usize, t: f64, p: &[f64; 5]) -> f64 {
    let nl = dim as f64 + 2.0 * l as f64;
    -2.0 * (1.0 - t * t) * p[2] + (2.0 * (sigma + 1.0) * (1.0 + t) - nl * (1.0 - t)) * p[1]
        + (sigma + 1.0) * l as f64 * p[0]
}

/// Exact eigenvalue `λ_{l,k} = 2k² + (N + 2l + 2σ)k + (σ+1)l`.
pub fn exact_eigenvalue(dim: usize, sigma: f64, l: usize, k: usize) -> f64 {
    let (k, l) = (k as f64, l as f64);
    2.0 * k * k + (dim as f64 + 2.0 * l + 2.0 * sigma) * k + (sigma + 1.0) * l
}

impl SpectralOperator {
    pub fn build(disc: &Discretization, n: f64) -> Result<Self> {
        Self::build_with_quadrature(disc, n, disc.k_max + 2)
    }

    /// Build with an explicit number of radial Gauss–Jacobi nodes (at least `K + 1`).
    pub fn build_with_quadrature(disc: &Discretization, n: f64, n_quad: usize) -> Result<Self> {
        if !(n >= 0.0) {
            return invalid(format!("zeroth-order coefficient must be nonnegative, got {n}"));
        }
        let kk = disc.k_max;
        if n_quad < kk + 1 {
            return Err(Error::Quadrature(format!(
                "{n_quad} radial nodes cannot integrate degree {} exactly",
                2 * kk
            )));
        }
        let results: Vec<Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)>> = (0..=disc.l_max)
            .into_par_iter()
            .map(|l| {
                let rec: &JacobiRecurrence = disc.recurrence(l);
                let (t, w) = gauss_jacobi(n_quad, rec.alpha, rec.beta)?;
                let mut a = DMatrix::<f64>::zeros(kk + 1, kk + 1);
                for (ti, wi) in t.iter().zip(&w) {
                    let p = rec.eval(*ti, kk, 2);
                    let lp: Vec<f64> = (0..=kk)
                        .map(|k| radial_operator(disc.dim, disc.sigma, l, *ti, &p[k]))
                        .collect();
                    for i in 0..=kk {
                        for j in 0..=kk {
                            a[(i, j)] += wi * p[i][0] * lp[j];
                        }
                    }
                }
                let scale = a.amax().max(1.0);
                let asym = (&a - a.transpose()).amax();
                if asym > 1e-12 * scale {
                    return Err(Error::Quadrature(format!(
                        "Galerkin block l = {l} not symmetric (defect {asym:e})"
                    )));
                }
                let a = (&a + a.transpose()) * 0.5;
                let eig = SymmetricEigen::new(a.clone());
                let mut order: Vec<usize> = (0..=kk).collect();
                order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
                let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let mut vecs = DMatrix::<f64>::zeros(kk + 1, kk + 1);
                for (c, &i) in order.iter().enumerate() {
                    let mut col = eig.eigenvectors.column(i).into_owned();
                    // deterministic sign: largest entry positive
                    let imax = col.iamax();
                    if col[imax] < 0.0 {
                        col = -col;
                    }
                    vecs.set_column(c, &col);
                }
                Ok((a, vals, vecs))
            })
            .collect();
        let mut blocks = Vec::new();
        let mut eigenvalues = Vec::new();
        let mut eigenvectors = Vec::new();
        for r in results {
            let (a, v, e) = r?;
            blocks.push(a);
            eigenvalues.push(v);
            eigenvectors.push(e);
        }
        Ok(SpectralOperator {
            dim: disc.dim,
            sigma: disc.sigma,
            n,
            k_max: kk,
            blocks,
            eigenvalues,
            eigenvectors,
            mode_l: disc.modes.iter().map(|m| m.l).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.mode_l.len() * (self.k_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mu(&self, lambda: f64) -> f64 {
        lambda * lambda + self.n * lambda
    }

    fn block_range(&self, mode: usize) -> std::ops::Range<usize> {
        let k = self.k_max + 1;
        mode * k..(mode + 1) * k
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.len() {
            return invalid(format!(
                "field has {} coefficients, operator expects {}",
                f.len(),
                self.len()
            ));
        }
        Ok(())
    }

    /// Eigenpairs over all modes, sorted by `λ` (ties by mode, then radial index).
    pub fn spectrum(&self) -> Vec<EigenEntry> {
        let mut out = Vec::new();
        for (m, &l) in self.mode_l.iter().enumerate() {
            for (k, &lambda) in self.eigenvalues[l].iter().enumerate() {
                out.push(EigenEntry {
                    index: self.eigen_index(m, k),
                    mode: m,
                    l,
                    k,
                    lambda,
                    mu: self.mu(lambda),
                });
            }
        }
        out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.mode.cmp(&b.mode)).then(a.k.cmp(&b.k)));
        out
    }

    /// Smallest nonzero eigenvalue `λ₁` over all modes.
    pub fn lambda_1(&self) -> f64 {
        let tol = 1e-9 * self.eigenvalues.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        self.eigenvalues
            .iter()
            .flatten()
            .copied()
            .filter(|v| *v > tol)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mu_1(&self) -> f64 {
        self.mu(self.lambda_1())
    }

    /// Coefficients in the eigenbasis (same flat layout: mode-major, ascending eigenvalue).
    pub fn to_eigen(&self, f: &Field) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for (m, &l) in self.mode_l.iter().enumerate() {
            let r = self.block_range(m);
            let c = DVector::from_column_slice(&f.coeffs[r.clone()]);
            let e = self.eigenvectors[l].tr_mul(&c);
            out[r].copy_from_slice(e.as_slice());
        }
        out
    }

    pub fn from_eigen(&self, e: &[f64]) -> Field {
        let mut out = vec![0.0; e.len()];
        for (m, &l) in self.mode_l.iter().enumerate() {
            let r = self.block_range(m);
            let c = DVector::from_column_slice(&e[r.clone()]);
            let v = &self.eigenvectors[l] * c;
            out[r].copy_from_slice(v.as_slice());
        }
        Field { coeffs: out }
    }

    /// Eigenvalue `λ` belonging to flat eigen-index `i`.
    pub fn lambda_at(&self, i: usize) -> f64 {
        let k = self.k_max + 1;
        self.eigenvalues[self.mode_l[i / k]][i % k]
    }

    pub fn mu_at(&self, i: usize) -> f64 {
        self.mu(self.lambda_at(i))
    }

    /// Exact matrix action of `L_σ` or `L_σ² + nL_σ`.
    pub fn apply(&self, f: &Field, power: Power) -> Result<Field> {
        self.check(f)?;
        let mut out = vec![0.0; f.len()];
        for (m, &l) in self.mode_l.iter().enumerate() {
            let r = self.block_range(m);
            let c = DVector::from_column_slice(&f.coeffs[r.clone()]);
            let a = &self.blocks[l];
            let ac = a * &c;
            let v = match power {
                Power::First => ac,
                Power::FourthOrder => a * &ac + ac * self.n,
            };
            out[r].copy_from_slice(v.as_slice());
        }
        Ok(Field { coeffs: out })
    }

    /// Solve `(1/h) w + (L_σ² + nL_σ) w = f` mode by mode.
    pub fn resolvent_solve(&self, h: f64, f: &Field) -> Result<Field> {
        if !(h > 0.0) {
            return invalid(format!("step must be positive, got {h}"));
        }
        self.check(f)?;
        let mut e = self.to_eigen(f);
        for (i, v) in e.iter_mut().enumerate() {
            *v /= 1.0 / h + self.mu_at(i);
        }
        Ok(self.from_eigen(&e))
    }

    /// `e^{−t(L_σ² + nL_σ)} g`.
    pub fn semigroup(&self, t: f64, g: &Field) -> Field {
        let mut e = self.to_eigen(g);
        for (i, v) in e.iter_mut().enumerate() {
            *v *= (-self.mu_at(i) * t).exp();
        }
        self.from_eigen(&e)
    }

    /// Residual `max_k ‖L_σ φ_k − λ_k φ_k‖_σ` and Gram defect of the eigenvectors.
    pub fn eigen_residuals(&self) -> (f64, f64) {
        let mut res: f64 = 0.0;
        let mut gram: f64 = 0.0;
        for (l, a) in self.blocks.iter().enumerate() {
            let v = &self.eigenvectors[l];
            for (k, lam) in self.eigenvalues[l].iter().enumerate() {
                let col = v.column(k);
                res = res.max((a * col - col * *lam).norm() / lam.abs().max(1.0));
            }
            let g = v.tr_mul(v) - DMatrix::<f64>::identity(v.ncols(), v.ncols());
            gram = gram.max(g.amax());
        }
        (res, gram)
    }

    /// The `i`-th eigenfunction in the flat eigen layout, as a field.
    pub fn eigenfunction(&self, i: usize) -> Field {
        let mut e = vec![0.0; self.len()];
        e[i] = 1.0;
        self.from_eigen(&e)
    }

    /// Flat eigen-index of `(mode, radial rank)`.
    pub fn eigen_index(&self, mode: usize, k: usize) -> usize {
        mode * (self.k_max + 1) + k
    }
}

/// Pointwise heat-kernel value with its truncation tail estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub tail: f64,
    pub flagged: bool,
}

/// `G(t, z, z') = Σ e^{−μ_k t} φ_k(z) φ_k(z')` over the discrete eigenbasis.
pub struct HeatKernel<'a> {
    pub op: &'a SpectralOperator,
    pub disc: &'a Discretization,
    /// Tail estimates above this value are flagged.
    pub tail_tol: f64,
}

impl<'a> HeatKernel<'a> {
    pub fn new(op: &'a SpectralOperator, disc: &'a Discretization) -> Self {
        HeatKernel {
            op,
            disc,
            tail_tol: 1e-10,
        }
    }

    /// `Σ_k (−μ_k)^j e^{−μ_k t} φ_k(z') φ_k` as a field in the first argument.
    pub fn section(&self, t: f64, z2: &[f64], time_derivs: usize) -> Field {
        let b = Field {
            coeffs: self.disc.basis_values(z2),
        };
        let mut e = self.op.to_eigen(&b);
        for (i, v) in e.iter_mut().enumerate() {
            let mu = self.op.mu_at(i);
            *v *= (-mu).powi(time_derivs as i32) * (-mu * t).exp();
        }
        self.op.from_eigen(&e)
    }

    pub fn eval(&self, t: f64, z: &[f64], z2: &[f64]) -> Result<KernelValue> {
        if !(t > 0.0) {
            return invalid(format!("kernel time must be positive, got {t}"));
        }
        let bz = self.disc.basis_values(z);
        let bz2 = self.disc.basis_values(z2);
        let ez = self.op.to_eigen(&Field { coeffs: bz });
        let ez2 = self.op.to_eigen(&Field { coeffs: bz2 });
        let value = ez
            .iter()
            .zip(&ez2)
            .enumerate()
            .map(|(i, (a, b))| (-self.op.mu_at(i) * t).exp() * a * b)
            .sum();
        let tail = self.tail_bound(t);
        Ok(KernelValue {
            value,
            tail,
            flagged: tail > self.tail_tol,
        })
    }

    /// Jet of `∂_t^j G(t, ·, z')` at `z`.
    pub fn jet(&self, t: f64, z: &[f64], z2: &[f64], time_derivs: usize, order: usize) -> Jet {
        let s = self.section(t, z2, time_derivs);
        self.disc.eval_jet(&s, z, order)
    }

    /// Bound on the omitted eigensum `Σ_{(l,k) ∉ basis} e^{−μ t} sup|φ|²`, using the closed-form spectrum
    /// and endpoint maxima of orthonormal Jacobi polynomials.
    pub fn tail_bound(&self, t: f64) -> f64 {
        let dim = self.disc.dim;
        let sigma = self.disc.sigma;
        let (l_cap, k_cap) = if dim == 1 {
            (1, self.disc.k_max + 200)
        } else {
            (self.disc.l_max + 200, self.disc.k_max + 200)
        };
        let mut total = 0.0;
        for l in 0..=l_cap {
            let beta = l as f64 + dim as f64 / 2.0 - 1.0;
            let harm_sup = if dim == 1 {
                std::f64::consts::FRAC_1_SQRT_2
            } else if l == 0 {
                1.0 / (2.0 * std::f64::consts::PI).sqrt()
            } else {
                1.0 / std::f64::consts::PI.sqrt()
            };
            let mult = if dim == 2 && l > 0 { 2.0 } else { 1.0 };
            let c = 2f64.powf(1.0 + beta / 2.0 + sigma);
            let k_start = if l <= self.disc.l_max { self.disc.k_max + 1 } else { 0 };
            if k_start > k_cap {
                continue;
            }
            let rec = match JacobiRecurrence::new(sigma, beta, k_cap + 1) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let pp = rec.eval(1.0, k_cap, 0);
            let pm = rec.eval(-1.0, k_cap, 0);
            let mut shell = 0.0;
            for k in k_start..=k_cap {
                let lam = exact_eigenvalue(dim, sigma, l, k);
                let mu = lam * lam + self.op.n * lam;
                let sup = harm_sup * c * pp[k][0].abs().max(pm[k][0].abs());
                let term = mult * (-mu * t).exp() * sup * sup;
                shell += term;
                if term < 1e-300 && k > k_start + 2 {
                    break;
                }
            }
            total += shell;
            if shell < 1e-300 && l > self.disc.l_max {
                break;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(dim: usize, l: usize, k: usize) -> (Discretization, SpectralOperator) {
        let d = Discretization::new(dim, 1.0, l, k).unwrap();
        let op = SpectralOperator::build(&d, dim as f64).unwrap();
        (d, op)
    }

    #[test]
    fn linear_functions_are_eigenfunctions() {
        for dim in 1..=2 {
            let (d, op) = setup(dim, 3, 6);
            let z1 = d.coordinate(0);
            let lz = op.apply(&z1, Power::First).unwrap();
            assert!(lz.sub(&z1.scale(2.0)).max_abs() < 1e-12);
            let bz = op.apply(&z1, Power::FourthOrder).unwrap();
            assert!(bz.sub(&z1.scale(4.0 + 2.0 * dim as f64)).max_abs() < 1e-11);
            let one = d.project(|_| 1.0);
            assert!(op.apply(&one, Power::First).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn matches_closed_form_spectrum() {
        for dim in 1..=2 {
            for sigma in [0.5, 1.0, 2.0] {
                let d = Discretization::new(dim, sigma, 4, 10).unwrap();
                let op = SpectralOperator::build(&d, 1.0).unwrap();
                for l in 0..=d.l_max {
                    for k in 0..=10 {
                        let e = exact_eigenvalue(dim, sigma, l, k);
                        assert!((op.eigenvalues[l][k] - e).abs() < 1e-10 * e.max(1.0));
                    }
                }
                assert!((op.lambda_1() - (sigma + 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn galerkin_matches_pointwise_operator() {
        // L_σ f = −ρΔf + (σ+1) z·∇f checked with jets at a sample point
        let (d, op) = setup(2, 4, 4);
        let f = d.project(|z| z[0].powi(3) * z[1] - z[1] * z[1] + 0.3 * z[0]);
        let lf = op.apply(&f, Power::First).unwrap();
        let z = [0.35, -0.2];
        let j = d.eval_jet(&f, &z, 2);
        let rho = 0.5 * (1.0 - z[0] * z[0] - z[1] * z[1]);
        let g = j.gradient();
        let direct = -rho * j.laplacian().value() + 2.0 * (z[0] * g[0] + z[1] * g[1]);
        assert!((d.eval(&lf, &z) - direct).abs() < 1e-12);
    }

    #[test]
    fn eigen_residuals_small() {
        let (_, op) = setup(2, 8, 20);
        let (res, gram) = op.eigen_residuals();
        assert!(res < 1e-10 && gram < 1e-10, "{res} {gram}");
    }

    #[test]
    fn resolvent_examples() {
        let (d, op) = setup(1, 1, 8);
        let c = d.project(|_| 2.5);
        let w = op.resolvent_solve(0.1, &c).unwrap();
        assert!(w.sub(&c.scale(0.1)).max_abs() < 1e-14);
        let i = op.eigen_index(1, 0);
        let phi = op.eigenfunction(i);
        let w = op.resolvent_solve(0.3, &phi).unwrap();
        assert!(w.sub(&phi.scale(1.0 / (1.0 / 0.3 + op.mu_at(i)))).max_abs() < 1e-14);
        assert!(op.resolvent_solve(0.0, &phi).is_err());
    }

    #[test]
    fn insufficient_quadrature_is_rejected() {
        let d = Discretization::new(1, 1.0, 1, 8).unwrap();
        assert!(SpectralOperator::build_with_quadrature(&d, 1.0, 5).is_err());
    }

    #[test]
    fn kernel_limits() {
        let (d, op) = setup(1, 1, 24);
        let k = HeatKernel::new(&op, &d);
        let g = k.eval(10.0, &[0.3], &[-0.8]).unwrap();
        assert!((g.value - 1.5).abs() < 1e-8);
        assert!(!g.flagged);
        let small = k.eval(1e-6, &[0.0], &[0.0]).unwrap();
        assert!(small.flagged);
    }

    proptest! {
        #[test]
        fn fourth_order_identity(seed in 0u64..500) {
            let (_, op) = setup(2, 3, 5);
            let coeffs: Vec<f64> = (0..op.len()).map(|i| ((seed as f64) * 0.37 + i as f64).sin()).collect();
            let f = Field { coeffs };
            let l1 = op.apply(&f, Power::First).unwrap();
            let l2 = op.apply(&l1, Power::First).unwrap();
            let b = op.apply(&f, Power::FourthOrder).unwrap();
            let rhs = l2.axpy(op.n, &l1);
            prop_assert!(b.sub(&rhs).max_abs() <= 1e-12 * rhs.max_abs().max(1.0));
        }

        #[test]
        fn kernel_symmetric_and_normalized(a in -1.0f64..1.0, b in -1.0f64..1.0, t in 0.01f64..2.0) {
            let (d, op) = setup(1, 1, 16);
            let k = HeatKernel::new(&op, &d);
            let g1 = k.eval(t, &[a], &[b]).unwrap().value;
            let g2 = k.eval(t, &[b], &[a]).unwrap().value;
            prop_assert!((g1 - g2).abs() <= 1e-14 * g1.abs().max(1.0));
            let s = k.section(t, &[b], 0);
            let mass = d.quad.integrate(|z| d.eval(&s, z));
            prop_assert!((mass - 1.0).abs() < 1e-10);
        }
    }
}
