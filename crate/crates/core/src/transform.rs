//! The von Mises change of variables `(x, u) ↔ (z, w)` and the transformed equation.
//!
//! With `v = γ√u`, `1 + w = √(2v + |x|²)` and `x = (1 + w) z`, the stationary profile
//! `û_* = ρ²/γ²` corresponds to `w ≡ 0` and the free boundary is fixed at `|z| = 1`.
//! All chain rules are evaluated with truncated Taylor jets: a map is expanded around the
//! base point, inverted as a power series and composed, so every derivative up to
//! order four is exact up to rounding.

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{Discretization, Field};
use crate::error::{invalid, Error, Result};
use crate::geometry::check_point;
use crate::jet::{determinant, invert_map, jacobian, Jet};
use crate::profiles::ModelParams;
use crate::spectral::{Power, SpectralOperator};

/// Matched pair `((x, u), (z, w))`.
#[derive(Clone, Debug, Serialize)]
pub struct TransformSample {
    pub x: Vec<f64>,
    pub u: f64,
    pub v: f64,
    pub z: Vec<f64>,
    pub w: f64,
    pub w_tilde: f64,
}

impl TransformSample {
    /// Largest violation of `w̃ = √(2v + |x|²)`, `x = w̃ z`, `ρ w̃² = v`.
    pub fn consistency_defect(&self) -> f64 {
        let x2: f64 = self.x.iter().map(|v| v * v).sum();
        let z2: f64 = self.z.iter().map(|v| v * v).sum();
        let a = (self.w_tilde - (2.0 * self.v + x2).sqrt()).abs();
        let b = self
            .x
            .iter()
            .zip(&self.z)
            .map(|(x, z)| (x - self.w_tilde * z).abs())
            .fold(0.0, f64::max);
        let c = (0.5 * (1.0 - z2) * self.w_tilde * self.w_tilde - self.v).abs();
        a.max(b).max(c)
    }
}

/// Degeneracy thresholds of the transformed equation.
#[derive(Clone, Debug, Serialize)]
pub struct Thresholds {
    /// Reject when `min (1 + w + z·∇w)` falls below this value.
    pub min_denominator: f64,
    /// Warn when the nodal `‖w‖_{W^{1,∞}}` exceeds this value.
    pub max_lipschitz: f64,
    /// Reject forward transforms whose Jacobian determinant falls below this value.
    pub min_jacobian: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_denominator: 0.1,
            max_lipschitz: 0.2,
            min_jacobian: 0.1,
        }
    }
}

fn shift(j: &Jet, c: f64) -> Jet {
    j.add_const(-c)
}

/// Forward transform of a `u`-jet at `x` (variables `dx`) into a `w`-jet at `z` (variables `dz`).
pub fn forward(x: &[f64], u_jet: &Jet, p: &ModelParams, thr: &Thresholds) -> Result<(TransformSample, Jet)> {
    let dim = x.len();
    let order = u_jet.order();
    if u_jet.value() <= 0.0 {
        return Err(Error::Degenerate(format!("u = {} is not strictly inside the support", u_jet.value())));
    }
    let v = u_jet.sqrt()?.scale(p.gamma);
    let mut w2 = v.scale(2.0);
    let xs: Vec<Jet> = (0..dim).map(|i| Jet::variable(dim, order, i, x[i])).collect();
    for xi in &xs {
        w2 = &w2 + &(xi * xi);
    }
    let wt = w2.sqrt()?;
    let inv = wt.recip()?;
    let zmap: Vec<Jet> = xs.iter().map(|xi| xi * &inv).collect();
    let z: Vec<f64> = zmap.iter().map(|j| j.value()).collect();
    let centered: Vec<Jet> = zmap.iter().zip(&z).map(|(j, z)| shift(j, *z)).collect();
    let det = determinant(&jacobian(&centered));
    if !(det >= thr.min_jacobian) {
        return Err(Error::Degenerate(format!("Jacobian determinant {det} below {}", thr.min_jacobian)));
    }
    let dx = invert_map(&centered)?;
    let w_tilde = wt.compose(&dx);
    let sample = TransformSample {
        x: x.to_vec(),
        u: u_jet.value(),
        v: v.value(),
        z,
        w: w_tilde.value() - 1.0,
        w_tilde: w_tilde.value(),
    };
    Ok((sample, w_tilde.add_const(-1.0)))
}

/// Local chart of the inverse map at `z`: `(x0, dz(dx), w̃-jet)`.
fn inverse_chart(z: &[f64], w_jet: &Jet) -> Result<(Vec<f64>, Vec<Jet>, Jet)> {
    check_point(z)?;
    let dim = z.len();
    let order = w_jet.order();
    let wt = w_jet.add_const(1.0);
    let g = wt.gradient();
    let denom = wt.value() + z.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
    if !(denom > 0.0) {
        return Err(Error::Degenerate(format!("1 + w + z·∇w = {denom} is not positive")));
    }
    let zs: Vec<Jet> = (0..dim).map(|i| Jet::variable(dim, order, i, z[i])).collect();
    let xmap: Vec<Jet> = zs.iter().map(|zi| &wt * zi).collect();
    let x0: Vec<f64> = xmap.iter().map(|j| j.value()).collect();
    let centered: Vec<Jet> = xmap.iter().zip(&x0).map(|(j, x)| shift(j, *x)).collect();
    let dz = invert_map(&centered)?;
    Ok((x0, dz, wt))
}

fn rho_jet(z: &[f64], order: usize) -> Jet {
    let dim = z.len();
    let mut r = Jet::constant(dim, order, 0.5);
    for (i, zi) in z.iter().enumerate() {
        let v = Jet::variable(dim, order, i, *zi);
        r = &r - &(&v * &v).scale(0.5);
    }
    r
}

/// Inverse transform: `x = (1 + w) z`, `u = (ρ w̃²)²/γ²` as a jet in `dx`.
pub fn inverse(z: &[f64], w_jet: &Jet, p: &ModelParams) -> Result<(TransformSample, Jet)> {
    let (x0, dz, wt) = inverse_chart(z, w_jet)?;
    let rho = rho_jet(z, w_jet.order());
    let v = &rho * &(&wt * &wt);
    let u_z = (&v * &v).scale(1.0 / p.gamma_sq());
    let u = u_z.compose(&dz);
    let sample = TransformSample {
        x: x0,
        u: u.value(),
        v: v.value(),
        z: z.to_vec(),
        w: wt.value() - 1.0,
        w_tilde: wt.value(),
    };
    Ok((sample, u))
}

/// `det ∇Φ = (2v − x·∇v) / (2v + |x|²)^{N/2 + 1}` for `Φ: x ↦ z`.
pub fn jacobian_det(x: &[f64], v: f64, grad_v: &[f64]) -> Result<f64> {
    let x2: f64 = x.iter().map(|a| a * a).sum();
    let base = 2.0 * v + x2;
    if !(base > 0.0) {
        return invalid(format!("2v + |x|² = {base} must be positive"));
    }
    let xv: f64 = x.iter().zip(grad_v).map(|(a, b)| a * b).sum();
    Ok((2.0 * v - xv) / base.powf(x.len() as f64 / 2.0 + 1.0))
}

/// Jet of `f ∘ Φ` in `dx` from a jet of `f` in `dz` (both at matching base points).
pub fn pushforward_derivative(z: &[f64], f_jet: &Jet, w_jet: &Jet) -> Result<Jet> {
    if f_jet.order() > 4 || w_jet.order() > 4 {
        return invalid("pushforward supports derivative orders up to 4");
    }
    if f_jet.order() > w_jet.order() {
        return invalid("w jet must be at least as long as the pushed-forward jet");
    }
    let (_, dz, _) = inverse_chart(z, &w_jet.truncate(f_jet.order()))?;
    Ok(f_jet.compose(&dz))
}

/// First-order chain rule `∂_i(f∘Φ) = ∂_i f/w̃ − (z·∇f) ∂_i w̃ / (w̃ (w̃ + z·∇w̃))`.
pub fn pushforward_gradient(z: &[f64], grad_f: &[f64], w_tilde: f64, grad_w: &[f64]) -> Vec<f64> {
    let zf: f64 = z.iter().zip(grad_f).map(|(a, b)| a * b).sum();
    let d = w_tilde + z.iter().zip(grad_w).map(|(a, b)| a * b).sum::<f64>();
    grad_f
        .iter()
        .zip(grad_w)
        .map(|(f, g)| f / w_tilde - zf * g / (w_tilde * d))
        .collect()
}

/// `L w = −ρΔw + 2 z·∇w` as a jet (order reduced by two).
fn l_operator(z: &[f64], w: &Jet) -> Jet {
    let dim = z.len();
    let order = w.order() - 2;
    let rho = rho_jet(z, order);
    let mut out = -&(&rho * &w.laplacian());
    for i in 0..dim {
        let zi = Jet::variable(dim, order, i, z[i]);
        out = &out + &(&zi * &w.diff(i).truncate(order)).scale(2.0);
    }
    out
}

/// `w̃ + z·∇w̃` as a jet (order reduced by one).
fn denominator(z: &[f64], wt: &Jet) -> Jet {
    let dim = z.len();
    let order = wt.order() - 1;
    let mut d = wt.truncate(order);
    for i in 0..dim {
        let zi = Jet::variable(dim, order, i, z[i]);
        d = &d + &(&zi * &wt.diff(i));
    }
    d
}

/// `Δu` and its split `(γ²/2) Δu (w̃ + z·∇w̃)/w̃² = (1 − (N+2)ρ)(w̃ + z·∇w̃) − L w̃ + R`.
#[derive(Clone, Debug, Serialize)]
pub struct LaplacianSplit {
    pub laplacian: f64,
    pub scaled: f64,
    pub affine: f64,
    pub linear: f64,
    /// `scaled − affine − linear` through the jet route.
    pub remainder: f64,
    /// `R = (1 − ρ)|∇w̃|²/D − ρ z·∇(|∇w̃|²/D)` evaluated directly.
    pub remainder_explicit: f64,
}

pub fn laplacian_u(z: &[f64], w_jet: &Jet, p: &ModelParams) -> Result<LaplacianSplit> {
    if w_jet.order() < 2 {
        return invalid("Δu needs a w jet of order at least 2");
    }
    let wj = w_jet.truncate(2);
    let (_, u) = inverse(z, &wj, p)?;
    let lap = u.laplacian().value();
    let dim = z.len();
    let n = dim as f64;
    let wt = wj.add_const(1.0);
    let d = denominator(z, &wt);
    let dv = d.value();
    let rho = 0.5 * (1.0 - z.iter().map(|a| a * a).sum::<f64>());
    let scaled = 0.5 * p.gamma_sq() * lap * dv / (wt.value() * wt.value());
    let affine = (1.0 - (n + 2.0) * rho) * dv;
    let linear = -l_operator(z, &wt).value();
    // |∇w̃|²/D as an order-1 jet
    let mut g2 = Jet::zero(dim, 1);
    for i in 0..dim {
        let gi = wt.diff(i);
        g2 = &g2 + &(&gi * &gi);
    }
    let q = &g2 * &d.recip()?;
    let zq: f64 = (0..dim).map(|i| z[i] * q.diff(i).value()).sum();
    let remainder_explicit = (1.0 - rho) * q.value() - rho * zq;
    Ok(LaplacianSplit {
        laplacian: lap,
        scaled,
        affine,
        linear,
        remainder: scaled - affine - linear,
        remainder_explicit,
    })
}

/// `∇Δu` and the split `(γ²/2)(∂_iΔu − x_i)(w̃ + z·∇w̃)/w̃ = −N ∂_i w̃ − ∂_i L w̃ + R_i`.
#[derive(Clone, Debug, Serialize)]
pub struct GradLaplacianSplit {
    pub grad_laplacian: Vec<f64>,
    pub scaled: Vec<f64>,
    pub linear: Vec<f64>,
    pub remainder: Vec<f64>,
}

pub fn grad_laplacian_u(z: &[f64], w_jet: &Jet, p: &ModelParams) -> Result<GradLaplacianSplit> {
    if w_jet.order() < 3 {
        return invalid("∇Δu needs a w jet of order at least 3");
    }
    let wj = w_jet.truncate(3);
    let (s, u) = inverse(z, &wj, p)?;
    let lap = u.laplacian();
    let dim = z.len();
    let n = dim as f64;
    let wt = wj.add_const(1.0);
    let dv = denominator(z, &wt).value();
    let lw = l_operator(z, &wt);
    let mut gl = Vec::new();
    let mut scaled = Vec::new();
    let mut linear = Vec::new();
    let mut remainder = Vec::new();
    for i in 0..dim {
        let g = lap.diff(i).value();
        let sc = 0.5 * p.gamma_sq() * (g - s.x[i]) * dv / wt.value();
        let li = -n * wt.diff(i).value() - lw.diff(i).value();
        gl.push(g);
        scaled.push(sc);
        linear.push(li);
        remainder.push(sc - li);
    }
    Ok(GradLaplacianSplit {
        grad_laplacian: gl,
        scaled,
        linear,
        remainder,
    })
}

/// `div(u∇Δu − xu) = ∇u·∇Δu + uΔ²u − N u − x·∇u` from a `u`-jet of order 4 at `x`.
pub fn flux_divergence(x: &[f64], u: &Jet) -> f64 {
    let dim = x.len();
    let lap = u.laplacian();
    let bilap = lap.laplacian().value();
    let mut s = u.value() * bilap - dim as f64 * u.value();
    for i in 0..dim {
        let ui = u.diff(i).value();
        s += ui * lap.diff(i).value() - x[i] * ui;
    }
    s
}

/// `T[w] = (γ⁴/2) (w̃ + z·∇w̃)/(ρ w̃⁴) div(u∇Δu − xu)` at an interior point.
///
/// In the rescaled time `τ = t/γ²` the transformed equation reads `∂_τ w = −T[w]`.
pub fn transformed_operator(z: &[f64], w_jet: &Jet, p: &ModelParams) -> Result<f64> {
    if w_jet.order() < 4 {
        return invalid("T[w] needs a w jet of order 4");
    }
    let rho = 0.5 * (1.0 - z.iter().map(|a| a * a).sum::<f64>());
    if !(rho > 0.0) {
        return invalid("T[w] is evaluated at interior points only");
    }
    let (s, u) = inverse(z, w_jet, p)?;
    let wt = w_jet.add_const(1.0);
    let dv = denominator(z, &wt).value();
    let g4 = p.gamma_sq() * p.gamma_sq();
    Ok(0.5 * g4 * dv / (rho * s.w_tilde.powi(4)) * flux_divergence(&s.x, &u))
}

/// `∂_t w` from `∂_t u` in confined time: `(γ²/2) ∂_t u = ρ w̃⁴/(w̃ + z·∇w̃) ∂_t w`.
pub fn dw_dt_from_du_dt(du_dt: f64, z: &[f64], w_jet: &Jet, p: &ModelParams) -> f64 {
    let rho = 0.5 * (1.0 - z.iter().map(|a| a * a).sum::<f64>());
    let wt = w_jet.add_const(1.0);
    let dv = denominator(z, &wt).value();
    0.5 * p.gamma_sq() * dv / (rho * wt.value().powi(4)) * du_dt
}

/// Confined time corresponding to rescaled time `τ`: `t = γ² τ`.
pub fn confined_time(tau: f64, p: &ModelParams) -> f64 {
    p.gamma_sq() * tau
}

/// Result of a nonlinearity evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct Nonlinearity {
    pub field: Field,
    /// `f[w]` at the quadrature nodes.
    pub nodal: Vec<f64>,
    /// `min (1 + w + z·∇w)` over the nodes.
    pub min_denominator: f64,
    /// `max (|w| + |∇w|)` over the nodes.
    pub lipschitz: f64,
    /// Set when `lipschitz` exceeds the configured threshold.
    pub warning: bool,
}

fn check_thin_film(p: &ModelParams, op: &SpectralOperator, disc: &Discretization) -> Result<()> {
    if !p.is_thin_film() || disc.sigma != 1.0 || op.n != p.n || disc.dim != p.dim {
        return invalid(format!(
            "the transformed nonlinearity requires σ = 1 and n = N (got σ = {}, n = {}, N = {})",
            p.sigma, p.n, p.dim
        ));
    }
    Ok(())
}

/// `f[w] = (L² + nL) w − T[w]`, projected onto the basis.
pub fn nonlinearity(
    w: &Field,
    disc: &Discretization,
    op: &SpectralOperator,
    p: &ModelParams,
    thr: &Thresholds,
) -> Result<Nonlinearity> {
    check_thin_film(p, op, disc)?;
    disc.check(w)?;
    if w.max_abs() == 0.0 {
        return Ok(Nonlinearity {
            field: disc.zeros(),
            nodal: vec![0.0; disc.quad.len()],
            min_denominator: 1.0,
            lipschitz: 0.0,
            warning: false,
        });
    }
    let lin = op.apply(w, Power::FourthOrder)?;
    let lin_nodal = disc.nodal_values(&lin);
    let nodes = disc.nodes();
    let evals: Vec<Result<(f64, f64, f64)>> = nodes
        .par_iter()
        .map(|z| {
            let j = disc.eval_jet(w, z, 4);
            let g = j.gradient();
            let d = 1.0 + j.value() + z.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let lip = j.value().abs() + g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if d < thr.min_denominator {
                return Err(Error::Degenerate(format!(
                    "1 + w + z·∇w = {d} below {} at z = {z:?}",
                    thr.min_denominator
                )));
            }
            Ok((transformed_operator(z, &j, p)?, d, lip))
        })
        .collect();
    let mut nodal = Vec::with_capacity(nodes.len());
    let mut min_d = f64::INFINITY;
    let mut lipschitz: f64 = 0.0;
    for (e, l) in evals.into_iter().zip(&lin_nodal) {
        let (t, d, lip) = e?;
        nodal.push(l - t);
        min_d = min_d.min(d);
        lipschitz = lipschitz.max(lip);
    }
    let field = disc.project_nodal(&nodal);
    Ok(Nonlinearity {
        field,
        nodal,
        min_denominator: min_d,
        lipschitz,
        warning: lipschitz > thr.max_lipschitz,
    })
}

/// `u(x)` for the field `w`, solving `x = (1 + w(z)) z` along the ray through `x`.
/// Returns `None` outside the support.
pub fn u_at(disc: &Discretization, w: &Field, x: &[f64], p: &ModelParams) -> Result<Option<f64>> {
    let r: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dim = x.len();
    let wt_at = |s: f64, om: &[f64]| -> (f64, f64) {
        let z: Vec<f64> = om.iter().map(|o| s * o).collect();
        let j = disc.eval_jet(w, &z, 1);
        let g = j.gradient();
        (1.0 + j.value(), om.iter().zip(&g).map(|(a, b)| a * b).sum())
    };
    let u_of = |z: &[f64], wt: f64| {
        let rho = 0.5 * (1.0 - z.iter().map(|a| a * a).sum::<f64>());
        (rho * wt * wt).powi(2) / p.gamma_sq()
    };
    if r == 0.0 {
        let z = vec![0.0; dim];
        let wt = 1.0 + disc.eval(w, &z);
        return Ok(Some(u_of(&z, wt)));
    }
    let om: Vec<f64> = x.iter().map(|a| a / r).collect();
    let (w1, _) = wt_at(1.0, &om);
    if w1 <= r {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut s = r / (1.0 + disc.eval(w, &vec![0.0; dim]));
    s = s.clamp(0.0, 1.0);
    for _ in 0..100 {
        let (wt, dw) = wt_at(s, &om);
        let g = s * wt - r;
        if g > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let d = wt + s * dw;
        if d <= 0.0 {
            return Err(Error::Degenerate(format!("ray map not monotone at s = {s}")));
        }
        let next = s - g / d;
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-16 * (1.0 + s) {
            s = next;
            break;
        }
        s = next;
    }
    let z: Vec<f64> = om.iter().map(|o| s * o).collect();
    let wt = 1.0 + disc.eval(w, &z);
    Ok(Some(u_of(&z, wt)))
}

// fourth-order central stencils on offsets −3..=3
const FD: [[f64; 7]; 5] = [
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0, 0.0],
    [0.0, -1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0, 0.0],
    [1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0],
    [-1.0 / 6.0, 2.0, -13.0 / 2.0, 28.0 / 3.0, -13.0 / 2.0, 2.0, -1.0 / 6.0],
];

/// Partial derivatives of a gridded function by tensor-product stencils.
fn fd_derivative(grid: &[f64], dim: usize, alpha: &[u8], h: f64) -> f64 {
    let mut s = 0.0;
    if dim == 1 {
        for i in 0..7 {
            s += FD[alpha[0] as usize][i] * grid[i];
        }
    } else {
        for i in 0..7 {
            let a = FD[alpha[0] as usize][i];
            if a == 0.0 {
                continue;
            }
            for j in 0..7 {
                s += a * FD[alpha[1] as usize][j] * grid[i * 7 + j];
            }
        }
    }
    s / h.powi(alpha.iter().map(|a| *a as i32).sum())
}

/// Finite-difference oracle for `T[w]` at `z`: `u` is reconstructed on an `x`-stencil of
/// spacing `h` around `x = (1 + w(z)) z`, differentiated with fourth-order stencils and
/// pulled back through the time relation.
pub fn fd_transformed_operator(
    disc: &Discretization,
    w: &Field,
    z: &[f64],
    h: f64,
    p: &ModelParams,
) -> Result<f64> {
    let dim = z.len();
    let wj = disc.eval_jet(w, z, 1);
    let x0: Vec<f64> = z.iter().map(|zi| (1.0 + wj.value()) * zi).collect();
    let npts = 7usize.pow(dim as u32);
    let mut grid = Vec::with_capacity(npts);
    for idx in 0..npts {
        let offs = if dim == 1 { [idx, 0] } else { [idx / 7, idx % 7] };
        let x: Vec<f64> = (0..dim).map(|d| x0[d] + h * (offs[d] as f64 - 3.0)).collect();
        let u = u_at(disc, w, &x, p)?
            .ok_or_else(|| Error::Invalid(format!("stencil point {x:?} leaves the support")))?;
        grid.push(u);
    }
    let e = |v: &[u8]| fd_derivative(&grid, dim, v, h);
    let (u, grad, grad_lap, bilap) = if dim == 1 {
        (e(&[0]), vec![e(&[1])], vec![e(&[3])], e(&[4]))
    } else {
        (
            e(&[0, 0]),
            vec![e(&[1, 0]), e(&[0, 1])],
            vec![e(&[3, 0]) + e(&[1, 2]), e(&[2, 1]) + e(&[0, 3])],
            e(&[4, 0]) + 2.0 * e(&[2, 2]) + e(&[0, 4]),
        )
    };
    let mut div = u * bilap - dim as f64 * u;
    for i in 0..dim {
        div += grad[i] * grad_lap[i] - x0[i] * grad[i];
    }
    // ∂_t u = −div in confined time; ∂_τ w = γ² ∂_t w = −T[w]
    let dwdt = dw_dt_from_du_dt(-div, z, &disc.eval_jet(w, z, 1), p);
    Ok(-p.gamma_sq() * dwdt)
}

/// `w` for the translated profile `û_*(x − δe₁)`: `1 + w = δz₁ + √(δ²z₁² + 1 − δ²)`.
pub fn translated_w(z: &[f64], delta: f64) -> f64 {
    delta * z[0] + (delta * delta * z[0] * z[0] + 1.0 - delta * delta).sqrt() - 1.0
}

/// Forward transform of a height function `u(x)` onto the basis: at every node `z` the
/// ray equation `s / √(2γ√u(sω) + s²) = |z|` is solved by bisection.
pub fn forward_field(
    u: impl Fn(&[f64]) -> f64 + Sync,
    disc: &Discretization,
    p: &ModelParams,
    support_bound: f64,
) -> Result<Field> {
    let nodes = disc.nodes();
    let big_w = |x: &[f64]| -> f64 {
        let x2: f64 = x.iter().map(|a| a * a).sum();
        (2.0 * p.gamma * u(x).max(0.0).sqrt() + x2).sqrt()
    };
    let vals: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|z| {
            let r: f64 = z.iter().map(|a| a * a).sum::<f64>().sqrt();
            if r == 0.0 {
                return Ok(big_w(z) - 1.0);
            }
            let om: Vec<f64> = z.iter().map(|a| a / r).collect();
            let at = |s: f64| -> Vec<f64> { om.iter().map(|o| s * o).collect() };
            if u(&at(support_bound)) > 0.0 {
                return Err(Error::Invalid(format!("support extends beyond {support_bound}")));
            }
            let g = |s: f64| s - r * big_w(&at(s));
            let (mut lo, mut hi) = (0.0, support_bound);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if g(m) < 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
                if hi - lo <= 1e-16 * hi {
                    break;
                }
            }
            let s = 0.5 * (lo + hi);
            Ok(big_w(&at(s)) - 1.0)
        })
        .collect();
    let vals: Result<Vec<f64>> = vals.into_iter().collect();
    Ok(disc.project_nodal(&vals?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::confined_stationary;

    fn params(dim: usize) -> ModelParams {
        ModelParams::thin_film(dim, 1.0).unwrap()
    }

    fn w_jet_from(f: impl Fn(&[f64]) -> f64, z: &[f64], d: &Discretization) -> Jet {
        let field = d.project(f);
        d.eval_jet(&field, z, 4)
    }

    #[test]
    fn stationary_profile_maps_to_zero() {
        let p = params(2);
        let x = [0.3, -0.1];
        // u = ρ(x)²/γ² as a jet
        let r = rho_jet(&x, 4);
        let u = (&r * &r).scale(1.0 / p.gamma_sq());
        let (s, w) = forward(&x, &u, &p, &Thresholds::default()).unwrap();
        assert!((s.z[0] - 0.3).abs() < 1e-15 && (s.z[1] + 0.1).abs() < 1e-15);
        assert!(w.coeffs().iter().all(|c| c.abs() < 1e-13), "{:?}", w.coeffs());
        assert!((u.value() - confined_stationary(&x, &p)).abs() < 1e-16);
    }

    #[test]
    fn round_trip_jets() {
        let p = params(2);
        let d = Discretization::new(2, 1.0, 3, 3).unwrap();
        let z = [0.25, 0.4];
        let w = w_jet_from(|z| 0.03 * z[0] * z[1] - 0.02 * z[0] + 0.01 * z[1].powi(3), &z, &d);
        let (s, u) = inverse(&z, &w, &p).unwrap();
        assert!(s.consistency_defect() < 1e-14);
        let (s2, w2) = forward(&s.x, &u, &p, &Thresholds::default()).unwrap();
        assert!(s2.consistency_defect() < 1e-14);
        assert!((s2.z[0] - z[0]).abs() < 1e-14 && (s2.z[1] - z[1]).abs() < 1e-14);
        for (a, b) in w.derivatives().iter().zip(w2.derivatives()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_w_dilates() {
        let p = params(1);
        let w = Jet::constant(1, 4, 0.1);
        let (s, u) = inverse(&[1.0], &w, &p).unwrap();
        assert!((s.x[0] - 1.1).abs() < 1e-15);
        assert!(u.value().abs() < 1e-16);
        // linear f pushes forward with gradient scaled by 1/(1 + c)
        let f = Jet::variable(1, 4, 0, 0.5);
        let pf = pushforward_derivative(&[0.5], &f, &w).unwrap();
        assert!((pf.gradient()[0] - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn derivative_consistency_of_v() {
        // ∂_i v + x_i = w̃ ∂_i w / (w̃ + z·∇w)
        let p = params(2);
        let d = Discretization::new(2, 1.0, 3, 3).unwrap();
        let z = [-0.3, 0.5];
        let w = w_jet_from(|z| 0.04 * z[0] * z[0] + 0.02 * z[1], &z, &d);
        let (s, u) = inverse(&z, &w, &p).unwrap();
        let v = u.sqrt().unwrap().scale(p.gamma);
        let g = w.gradient();
        let den = s.w_tilde + z[0] * g[0] + z[1] * g[1];
        for i in 0..2 {
            let lhs = v.gradient()[i] + s.x[i];
            let rhs = s.w_tilde * g[i] / den;
            assert!((lhs - rhs).abs() < 1e-13, "{lhs} {rhs}");
        }
    }

    #[test]
    fn jacobian_formula_matches_map() {
        let p = params(2);
        let d = Discretization::new(2, 1.0, 3, 3).unwrap();
        let z = [0.1, 0.6];
        let w = w_jet_from(|z| 0.05 * z[0] - 0.03 * z[1] * z[1], &z, &d);
        let (s, u) = inverse(&z, &w, &p).unwrap();
        let v = u.sqrt().unwrap().scale(p.gamma);
        let det = jacobian_det(&s.x, s.v, &v.gradient()).unwrap();
        // finite differences of Φ(x) = x/√(2v + |x|²)
        let h = 1e-6;
        let phi = |x: &[f64]| -> Vec<f64> {
            let vv = v.eval(&[x[0] - s.x[0], x[1] - s.x[1]]);
            let n = (2.0 * vv + x[0] * x[0] + x[1] * x[1]).sqrt();
            vec![x[0] / n, x[1] / n]
        };
        let mut jm = vec![vec![0.0; 2]; 2];
        for j in 0..2 {
            let mut xp = s.x.clone();
            let mut xm = s.x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (a, b) = (phi(&xp), phi(&xm));
            for i in 0..2 {
                jm[i][j] = (a[i] - b[i]) / (2.0 * h);
            }
        }
        let fd = jm[0][0] * jm[1][1] - jm[0][1] * jm[1][0];
        assert!((det - fd).abs() < 1e-6, "{det} {fd}");
        // w = 0 gives the identity
        let r = rho_jet(&[0.2, 0.3], 1);
        let det0 = jacobian_det(&[0.2, 0.3], r.value(), &r.gradient()).unwrap();
        assert!((det0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_chain_rule_agrees_with_jets() {
        let d = Discretization::new(2, 1.0, 3, 3).unwrap();
        let z = [0.4, -0.35];
        let w = w_jet_from(|z| 0.05 * z[0] * z[1] + 0.02, &z, &d);
        let f = w_jet_from(|z| z[0] * z[0] + z[1] * z[1], &z, &d);
        let pf = pushforward_derivative(&z, &f, &w).unwrap();
        let g = pushforward_gradient(&z, &f.gradient(), 1.0 + w.value(), &w.gradient());
        for i in 0..2 {
            assert!((pf.gradient()[i] - g[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_at_zero_matches_stationary_profile() {
        for dim in 1..=2 {
            let p = params(dim);
            let z = vec![0.3; dim];
            let s = laplacian_u(&z, &Jet::zero(dim, 4), &p).unwrap();
            let rho = 0.5 * (1.0 - z.iter().map(|a| a * a).sum::<f64>());
            // Δ(ρ²) = 2|z|² − 2Nρ
            let direct = (2.0 * (1.0 - 2.0 * rho) - 2.0 * dim as f64 * rho) / p.gamma_sq();
            assert!((s.laplacian - direct).abs() < 1e-14);
            let g = grad_laplacian_u(&z, &Jet::zero(dim, 4), &p).unwrap();
            for i in 0..dim {
                assert!((g.grad_laplacian[i] - z[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn laplacian_split_identity() {
        let p = params(2);
        let d = Discretization::new(2, 1.0, 3, 3).unwrap();
        let z = [0.2, -0.45];
        let w = w_jet_from(|z| 0.08 * z[0] * z[1] - 0.05 * z[0] + 0.03 * z[1].powi(2), &z, &d);
        let s = laplacian_u(&z, &w, &p).unwrap();
        assert!((s.remainder - s.remainder_explicit).abs() < 1e-13, "{s:?}");
    }

    #[test]
    fn remainders_are_quadratic() {
        let p = params(2);
        let d = Discretization::new(2, 1.0, 3, 3).unwrap();
        let z = [0.3, 0.2];
        let base = d.project(|z| z[0] * z[1] + 0.5 * z[0] - z[1].powi(3));
        let mut prev: Option<(f64, f64)> = None;
        for eps in [1e-2, 5e-3, 2.5e-3] {
            let j = d.eval_jet(&base.scale(eps), &z, 4);
            let r1 = laplacian_u(&z, &j, &p).unwrap().remainder.abs();
            let r2 = grad_laplacian_u(&z, &j, &p).unwrap().remainder[0].abs();
            if let Some((a, b)) = prev {
                assert!((a / r1 - 4.0).abs() < 0.2, "{a} {r1}");
                assert!((b / r2 - 4.0).abs() < 0.2, "{b} {r2}");
            }
            prev = Some((r1, r2));
        }
    }

    #[test]
    fn transformed_operator_linearizes_to_fourth_order_operator() {
        for dim in 1..=2 {
            let p = params(dim);
            let d = Discretization::new(dim, 1.0, 2, 3).unwrap();
            let op = SpectralOperator::build(&d, dim as f64).unwrap();
            let phi = d.project(|z| z[0] * z[0] - 0.3 * z[0] + 0.1);
            let lin = op.apply(&phi, Power::FourthOrder).unwrap();
            let z = vec![0.35; dim];
            let eps = 1e-6;
            let t = transformed_operator(&z, &d.eval_jet(&phi.scale(eps), &z, 4), &p).unwrap();
            assert!((t / eps - d.eval(&lin, &z)).abs() < 1e-4 * d.eval(&lin, &z).abs().max(1.0));
        }
    }

    #[test]
    fn nonlinearity_vanishes_at_zero() {
        let p = params(2);
        let d = Discretization::new(2, 1.0, 4, 6).unwrap();
        let op = SpectralOperator::build(&d, 2.0).unwrap();
        let f = nonlinearity(&d.zeros(), &d, &op, &p, &Thresholds::default()).unwrap();
        assert!(f.field.max_abs() < 1e-12);
        let bad = ModelParams::new(2, 0.5, 2.0, 1.0).unwrap();
        assert!(nonlinearity(&d.zeros(), &d, &op, &bad, &Thresholds::default()).is_err());
    }

    #[test]
    fn degenerate_w_is_rejected() {
        let p = params(1);
        let d = Discretization::new(1, 1.0, 1, 4).unwrap();
        let op = SpectralOperator::build(&d, 1.0).unwrap();
        let w = d.project(|z| -0.95 * z[0] * z[0]);
        let r = nonlinearity(&w, &d, &op, &p, &Thresholds::default());
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn fd_stencils_are_exact_on_sextics() {
        let h = 0.1;
        let f = |x: f64| x.powi(5) - 2.0 * x.powi(3) + x;
        let x0 = 0.3;
        let grid: Vec<f64> = (0..7).map(|i| f(x0 + h * (i as f64 - 3.0))).collect();
        let d4 = fd_derivative(&grid, 1, &[4], h);
        assert!((d4 - 120.0 * x0).abs() < 1e-8);
        let d3 = fd_derivative(&grid, 1, &[3], h);
        assert!((d3 - (60.0 * x0 * x0 - 12.0)).abs() < 1e-8);
    }

    #[test]
    fn fd_oracle_matches_chain_rule() {
        let p = params(2);
        let d = Discretization::new(2, 1.0, 2, 2).unwrap();
        let w = d.project(|z| 0.02 * z[0] * z[1] - 0.01 * z[0] + 0.015 * z[1] * z[1]);
        let z = [0.3, 0.2];
        let t = transformed_operator(&z, &d.eval_jet(&w, &z, 4), &p).unwrap();
        let fd = fd_transformed_operator(&d, &w, &z, 1e-2, &p).unwrap();
        assert!((t - fd).abs() < 1e-5 * t.abs().max(1e-3), "{t} {fd}");
    }

    #[test]
    fn translated_profile_forward_transform() {
        let p = params(1);
        let d = Discretization::new(1, 1.0, 1, 12).unwrap();
        let delta = 0.05;
        let u = |x: &[f64]| {
            let y = [x[0] - delta];
            confined_stationary(&y, &p)
        };
        let w = forward_field(u, &d, &p, 3.0).unwrap();
        for z in [-0.9, -0.2, 0.0, 0.4, 0.95] {
            let exact = translated_w(&[z], delta);
            assert!((d.eval(&w, &[z]) - exact).abs() < 1e-9, "{z}");
        }
        assert!(u_at(&d, &w, &[2.0], &p).unwrap().is_none());
        let back = u_at(&d, &w, &[0.3], &p).unwrap().unwrap();
        assert!((back - u(&[0.3])).abs() < 1e-10);
    }
}
