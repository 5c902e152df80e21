//! Orthonormal polynomial basis of `L²(μ_σ)` on the unit ball (dimension 1 or 2).
//!
//! Basis functions are `h_l(z) q_{l,k}(|z|²)`: a solid harmonic of degree `l` times a
//! radial polynomial orthonormal for the induced Jacobi weight. In dimension one the
//! "harmonics" are the even and odd monomials `1` and `z`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::jet::Jet;
use crate::quadrature::{BallQuadrature, JacobiRecurrence};

/// Angular part of a basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    /// `l = 0`.
    Radial,
    /// `Re (z₁ + i z₂)^l`, or the odd mode `z` in dimension one.
    Cos,
    /// `Im (z₁ + i z₂)^l`.
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Mode {
    pub l: usize,
    pub kind: ModeKind,
}

/// A function on the closed unit ball, given by its basis coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Field {
    pub coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(len: usize) -> Self {
        Field { coeffs: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, s: f64) -> Field {
        Field {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(-1.0, other)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        Field {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x + a * y).collect(),
        }
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `‖·‖_{L²(μ_σ)}`; the basis is orthonormal.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Basis layout, radial recurrences and the nodal quadrature.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub dim: usize,
    pub sigma: f64,
    pub l_max: usize,
    pub k_max: usize,
    pub modes: Vec<Mode>,
    pub quad: BallQuadrature,
    radial: Vec<JacobiRecurrence>,
    radial_scale: Vec<f64>,
    /// Basis values at the quadrature nodes, node-major.
    nodal: Vec<f64>,
}

impl Discretization {
    /// Default nodal rule: `K + L + 2` radial and `3L + 3` angular nodes.
    pub fn new(dim: usize, sigma: f64, l_max: usize, k_max: usize) -> Result<Self> {
        let l_eff = if dim == 1 { l_max.min(1) } else { l_max };
        Self::with_quadrature(dim, sigma, l_max, k_max, k_max + l_eff + 2, 3 * l_eff + 3)
    }

    pub fn with_quadrature(
        dim: usize,
        sigma: f64,
        l_max: usize,
        k_max: usize,
        n_radial: usize,
        n_angular: usize,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("the polynomial basis supports dimension 1 or 2, got {dim}"));
        }
        if !(sigma > -1.0) {
            return invalid(format!("weight exponent must exceed -1, got {sigma}"));
        }
        if k_max > 128 || l_max > 64 {
            return invalid(format!("discretization too large (K = {k_max}, L = {l_max})"));
        }
        // the dimension-one "sphere" carries only the even and odd modes
        let l_max = if dim == 1 { l_max.min(1) } else { l_max };
        let mut modes = vec![Mode {
            l: 0,
            kind: ModeKind::Radial,
        }];
        for l in 1..=l_max {
            modes.push(Mode { l, kind: ModeKind::Cos });
            if dim == 2 {
                modes.push(Mode { l, kind: ModeKind::Sin });
            }
        }
        let mut radial = Vec::new();
        let mut radial_scale = Vec::new();
        for l in 0..=l_max {
            let beta = l as f64 + dim as f64 / 2.0 - 1.0;
            radial.push(JacobiRecurrence::new(sigma, beta, k_max + 1)?);
            radial_scale.push(2f64.powf(1.0 + beta / 2.0 + sigma));
        }
        let quad = BallQuadrature::new(dim, sigma, n_radial, n_angular)?;
        let mut d = Discretization {
            dim,
            sigma,
            l_max,
            k_max,
            modes,
            quad,
            radial,
            radial_scale,
            nodal: Vec::new(),
        };
        let n = d.len();
        let mut nodal = Vec::with_capacity(n * d.quad.len());
        for z in &d.quad.nodes {
            nodal.extend(d.basis_values(&z[..dim]));
        }
        d.nodal = nodal;
        Ok(d)
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.modes.len() * (self.k_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, mode: usize, k: usize) -> usize {
        mode * (self.k_max + 1) + k
    }

    /// `(mode, k)` of a flat index.
    pub fn mode_of(&self, index: usize) -> (usize, usize) {
        (index / (self.k_max + 1), index % (self.k_max + 1))
    }

    /// Index of the constant function.
    pub fn constant_index(&self) -> usize {
        0
    }

    /// Total polynomial degree `l + 2k` of a basis function.
    pub fn degree(&self, index: usize) -> usize {
        let (m, k) = self.mode_of(index);
        self.modes[m].l + 2 * k
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.len())
    }

    pub fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.len() {
            return invalid(format!(
                "field has {} coefficients, discretization expects {}",
                f.len(),
                self.len()
            ));
        }
        Ok(())
    }

    /// Radial recurrence of angular degree `l` (Jacobi exponents `(σ, l + N/2 − 1)`).
    pub fn recurrence(&self, l: usize) -> &JacobiRecurrence {
        &self.radial[l]
    }

    /// `q_{l,k}(s) = c_l p_k(2s − 1)`: the scale `c_l`.
    pub fn radial_scale(&self, l: usize) -> f64 {
        self.radial_scale[l]
    }

    /// Harmonic `h(z)` of a mode, normalized on the unit sphere.
    fn harmonic(&self, mode: Mode, z: &[f64]) -> f64 {
        match (self.dim, mode.kind) {
            (1, ModeKind::Radial) => std::f64::consts::FRAC_1_SQRT_2,
            (1, _) => z[0] * std::f64::consts::FRAC_1_SQRT_2,
            (_, ModeKind::Radial) => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            (_, kind) => {
                let (mut re, mut im) = (1.0, 0.0);
                for _ in 0..mode.l {
                    let t = re * z[0] - im * z[1];
                    im = re * z[1] + im * z[0];
                    re = t;
                }
                let v = if kind == ModeKind::Cos { re } else { im };
                v / std::f64::consts::PI.sqrt()
            }
        }
    }

    /// Values of all basis functions at `z`.
    pub fn basis_values(&self, z: &[f64]) -> Vec<f64> {
        let s: f64 = z.iter().map(|v| v * v).sum();
        let t = 2.0 * s - 1.0;
        let radial: Vec<Vec<[f64; 5]>> = self.radial.iter().map(|r| r.eval(t, self.k_max, 0)).collect();
        let mut out = Vec::with_capacity(self.len());
        for &mode in &self.modes {
            let h = self.harmonic(mode, z);
            let c = self.radial_scale[mode.l];
            for k in 0..=self.k_max {
                out.push(h * c * radial[mode.l][k][0]);
            }
        }
        out
    }

    pub fn eval(&self, f: &Field, z: &[f64]) -> f64 {
        self.basis_values(z).iter().zip(&f.coeffs).map(|(b, c)| b * c).sum()
    }

    /// Harmonic jets `h_mode(z0 + dz)` for all modes.
    fn harmonic_jets(&self, z: &[f64], order: usize) -> Vec<Jet> {
        let dim = self.dim;
        let vars: Vec<Jet> = (0..dim).map(|i| Jet::variable(dim, order, i, z[i])).collect();
        if dim == 1 {
            let r2 = std::f64::consts::FRAC_1_SQRT_2;
            let mut v = vec![Jet::constant(1, order, r2)];
            if self.l_max >= 1 {
                v.push(vars[0].scale(r2));
            }
            return v;
        }
        let mut out = vec![Jet::constant(2, order, 1.0 / (2.0 * std::f64::consts::PI).sqrt())];
        let mut re = Jet::constant(2, order, 1.0);
        let mut im = Jet::zero(2, order);
        let norm = 1.0 / std::f64::consts::PI.sqrt();
        for _ in 1..=self.l_max {
            let nre = &(&re * &vars[0]) - &(&im * &vars[1]);
            let nim = &(&re * &vars[1]) + &(&im * &vars[0]);
            re = nre;
            im = nim;
            out.push(re.scale(norm));
            out.push(im.scale(norm));
        }
        out
    }

    /// Taylor jet of the field at `z` up to `order ≤ 4`.
    pub fn eval_jet(&self, f: &Field, z: &[f64], order: usize) -> Jet {
        let dim = self.dim;
        let s0: f64 = z.iter().map(|v| v * v).sum();
        let mut s = Jet::zero(dim, order);
        for i in 0..dim {
            let v = Jet::variable(dim, order, i, z[i]);
            s = &s + &(&v * &v);
        }
        let t = 2.0 * s0 - 1.0;
        let harm = self.harmonic_jets(z, order);
        let radial: Vec<Vec<[f64; 5]>> = self.radial.iter().map(|r| r.eval(t, self.k_max, order)).collect();
        let mut out = Jet::zero(dim, order);
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
        for (m, mode) in self.modes.iter().enumerate() {
            let block = &f.coeffs[self.index(m, 0)..self.index(m, 0) + self.k_max + 1];
            if block.iter().all(|c| *c == 0.0) {
                continue;
            }
            let c = self.radial_scale[mode.l];
            let mut series = vec![0.0; order + 1];
            for (j, ser) in series.iter_mut().enumerate() {
                let d: f64 = block.iter().zip(&radial[mode.l]).map(|(a, p)| a * p[j]).sum();
                *ser = c * d * 2f64.powi(j as i32) / fact[j];
            }
            let rj = s.map_series(&series);
            out = &out + &(&harm[m] * &rj);
        }
        out
    }

    /// Jets of every basis function at `z` (used to build kernel derivatives).
    pub fn basis_jets(&self, z: &[f64], order: usize) -> Vec<Jet> {
        let mut e = self.zeros();
        (0..self.len())
            .map(|i| {
                e.coeffs[i] = 1.0;
                let j = self.eval_jet(&e, z, order);
                e.coeffs[i] = 0.0;
                j
            })
            .collect()
    }

    /// Field values at the quadrature nodes.
    pub fn nodal_values(&self, f: &Field) -> Vec<f64> {
        let n = self.len();
        self.nodal
            .chunks(n)
            .map(|row| row.iter().zip(&f.coeffs).map(|(b, c)| b * c).sum())
            .collect()
    }

    /// Weighted `L²(μ_σ)` projection of nodal values.
    pub fn project_nodal(&self, values: &[f64]) -> Field {
        assert_eq!(values.len(), self.quad.len());
        let n = self.len();
        let mut c = vec![0.0; n];
        for ((row, v), w) in self.nodal.chunks(n).zip(values).zip(&self.quad.weights) {
            let a = v * w;
            for (ci, b) in c.iter_mut().zip(row) {
                *ci += a * b;
            }
        }
        Field { coeffs: c }
    }

    /// Projection of a function given pointwise; exact for polynomials of low enough degree.
    pub fn project(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        let values: Vec<f64> = self.quad.nodes.iter().map(|z| f(&z[..self.dim])).collect();
        self.project_nodal(&values)
    }

    /// `max |Φᵀ W Φ − I|` over the nodal rule.
    pub fn gram_error(&self) -> f64 {
        let n = self.len();
        let mut g = vec![0.0; n * n];
        for (row, w) in self.nodal.chunks(n).zip(&self.quad.weights) {
            for i in 0..n {
                let a = w * row[i];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    g[i * n + j] += a * row[j];
                }
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[i * n + j] - e).abs());
            }
        }
        err
    }

    /// Nodal points as owned vectors.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        self.quad.nodes.iter().map(|z| z[..self.dim].to_vec()).collect()
    }

    /// The coordinate function `z_i` as a field.
    pub fn coordinate(&self, i: usize) -> Field {
        self.project(|z| z[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gram_is_identity() {
        for (dim, l, k) in [(1, 1, 12), (2, 4, 6), (2, 8, 10)] {
            let d = Discretization::new(dim, 1.0, l, k).unwrap();
            assert!(d.gram_error() < 1e-12, "dim {dim}: {}", d.gram_error());
        }
        let d = Discretization::new(2, 0.5, 3, 5).unwrap();
        assert!(d.gram_error() < 1e-12);
    }

    #[test]
    fn coordinates_and_constants_round_trip() {
        let d = Discretization::new(2, 1.0, 3, 4).unwrap();
        let z1 = d.coordinate(0);
        let p = [0.3, -0.4];
        assert!((d.eval(&z1, &p) - 0.3).abs() < 1e-14);
        let q = d.project(|z| 1.0 + z[0] * z[1] - 2.0 * z[1].powi(3));
        assert!((d.eval(&q, &p) - (1.0 - 0.12 + 2.0 * 0.064)).abs() < 1e-13);
        // the constant lives in one coefficient
        let one = d.project(|_| 1.0);
        assert!(one.coeffs.iter().skip(1).all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn jets_match_polynomial_derivatives() {
        let d = Discretization::new(2, 1.0, 4, 4).unwrap();
        // f = z1^3 z2 + z2^2
        let f = d.project(|z| z[0].powi(3) * z[1] + z[1] * z[1]);
        let z = [0.2, 0.5];
        let j = d.eval_jet(&f, &z, 4);
        assert!((j.value() - (0.008 * 0.5 + 0.25)).abs() < 1e-13);
        assert!((j.derivative(&[1, 0]) - 3.0 * 0.04 * 0.5).abs() < 1e-12);
        assert!((j.derivative(&[0, 2]) - 2.0).abs() < 1e-12);
        assert!((j.derivative(&[3, 1]) - 6.0).abs() < 1e-11);
        assert!(j.derivative(&[2, 2]).abs() < 1e-11);
    }

    #[test]
    fn one_dimensional_basis() {
        let d = Discretization::new(1, 1.0, 5, 8).unwrap();
        assert_eq!(d.l_max, 1);
        assert_eq!(d.len(), 18);
        let f = d.project(|z| z[0].powi(5) - z[0]);
        let j = d.eval_jet(&f, &[0.7], 4);
        assert!((j.derivative(&[4]) - 120.0 * 0.7).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn nodal_projection_inverts_evaluation(seed in 0u64..1000) {
            let d = Discretization::new(2, 1.0, 3, 3).unwrap();
            let coeffs: Vec<f64> = (0..d.len()).map(|i| ((seed as f64 + 1.3) * (i as f64 + 0.7)).sin()).collect();
            let f = Field { coeffs };
            let g = d.project_nodal(&d.nodal_values(&f));
            prop_assert!(f.sub(&g).max_abs() < 1e-12);
        }
    }
}
