//! Intrinsic geometry of the unit ball: weight `ρ`, semi-distance `d`, scale `θ`,
//! intrinsic balls and their weighted volumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gauss_legendre, BallQuadrature};

/// Absolute tolerance of the `|z| ≤ 1` domain check.
pub const DOMAIN_TOL: f64 = 1e-12;

fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn check_point(z: &[f64]) -> Result<()> {
    let r = norm_sq(z).sqrt();
    if !r.is_finite() || r > 1.0 + DOMAIN_TOL {
        return invalid(format!("point {z:?} lies outside the closed unit ball (|z| = {r})"));
    }
    Ok(())
}

pub(crate) fn rho_unchecked(z: &[f64]) -> f64 {
    0.5 * (1.0 - norm_sq(z))
}

/// `ρ(z) = (1 − |z|²)/2`, clamped at zero inside the rounding tolerance.
pub fn rho(z: &[f64]) -> Result<f64> {
    check_point(z)?;
    Ok(rho_unchecked(z).max(0.0))
}

pub(crate) fn distance_unchecked(z: &[f64], z2: &[f64]) -> f64 {
    let e = dist(z, z2);
    if e == 0.0 {
        return 0.0;
    }
    e / (rho_unchecked(z).max(0.0).sqrt() + rho_unchecked(z2).max(0.0).sqrt() + e.sqrt())
}

/// `d(z, z') = |z − z'| / (√ρ(z) + √ρ(z') + √|z − z'|)`.
pub fn intrinsic_distance(z: &[f64], z2: &[f64]) -> Result<f64> {
    check_point(z)?;
    check_point(z2)?;
    if z.len() != z2.len() {
        return invalid("points of different dimension");
    }
    Ok(distance_unchecked(z, z2))
}

/// `θ(r, z) = max(r, √ρ(z))`.
pub fn theta(r: f64, z: &[f64]) -> Result<f64> {
    if !(r > 0.0) {
        return invalid(format!("radius must be positive, got {r}"));
    }
    Ok(r.max(rho(z)?.sqrt()))
}

/// `B_r^d(z) = {z' ∈ closed unit ball : d(z, z') < r}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntrinsicBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl IntrinsicBall {
    pub fn new(center: &[f64], radius: f64) -> Result<Self> {
        check_point(center)?;
        if !(1..=2).contains(&center.len()) {
            return invalid(format!("intrinsic balls supported in dimension 1 or 2, got {}", center.len()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return invalid(format!("radius must be positive, got {radius}"));
        }
        // project rounding excursions back onto the sphere
        let r = norm_sq(center).sqrt();
        let center = if r > 1.0 { center.iter().map(|v| v / r).collect() } else { center.to_vec() };
        Ok(IntrinsicBall { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        norm_sq(p) <= 1.0 + DOMAIN_TOL && distance_unchecked(&self.center, p) < self.radius
    }

    pub fn theta(&self) -> f64 {
        self.radius.max(rho_unchecked(&self.center).max(0.0).sqrt())
    }

    fn point(&self, dir: &[f64], s: f64) -> Vec<f64> {
        self.center.iter().zip(dir).map(|(c, d)| c + s * d).collect()
    }

    /// Exit parameter of the ray `center + s·dir` from the closed unit ball.
    fn sphere_exit(&self, dir: &[f64]) -> f64 {
        let cd: f64 = self.center.iter().zip(dir).map(|(c, d)| c * d).sum();
        let disc = cd * cd - norm_sq(&self.center) + 1.0;
        (-cd + disc.max(0.0).sqrt()).max(0.0)
    }

    /// Inside segments `[s0, s1]` of the ray and whether the last one was clipped by the sphere.
    fn ray_segments(&self, dir: &[f64], n_scan: usize) -> Vec<(f64, f64, bool)> {
        let s_max = self.sphere_exit(dir);
        let g = |s: f64| distance_unchecked(&self.center, &self.point(dir, s)) - self.radius;
        let mut segs = Vec::new();
        if s_max <= 0.0 {
            return segs;
        }
        let mut start = Some(0.0);
        let mut prev_s = 0.0;
        let mut prev_in = true;
        for i in 1..=n_scan {
            let s = s_max * (i as f64 / n_scan as f64).powi(3);
            let inside = g(s) < 0.0;
            if inside != prev_in {
                let (mut a, mut b) = (prev_s, s);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if (g(m) < 0.0) == prev_in {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let root = 0.5 * (a + b);
                if prev_in {
                    segs.push((start.take().unwrap(), root, false));
                } else {
                    start = Some(root);
                }
            }
            prev_in = inside;
            prev_s = s;
        }
        if let Some(s0) = start {
            segs.push((s0, s_max, true));
        }
        segs
    }

    fn directions(&self, n_angular: usize) -> Vec<(Vec<f64>, f64)> {
        if self.dim() == 1 {
            vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]
        } else {
            let dphi = 2.0 * std::f64::consts::PI / n_angular as f64;
            (0..n_angular)
                .map(|j| {
                    let phi = j as f64 * dphi;
                    (vec![phi.cos(), phi.sin()], dphi)
                })
                .collect()
        }
    }

    /// Quadrature points and weights for `∫_{B} F ρ^σ dz` in polar coordinates around the center.
    pub fn quadrature(&self, sigma: f64, res: &Resolution) -> Vec<(Vec<f64>, f64)> {
        let (gx, gw) = gauss_legendre(res.n_gauss, 0.0, 1.0);
        let mut out = Vec::new();
        for (dir, wa) in self.directions(res.n_angular) {
            for (s0, s1, _) in self.ray_segments(&dir, res.n_scan) {
                let len = s1 - s0;
                for (x, w) in gx.iter().zip(&gw) {
                    let s = s0 + len * x;
                    let p = self.point(&dir, s);
                    let jac = s.powi(self.dim() as i32 - 1);
                    let weight = rho_unchecked(&p).max(0.0).powf(sigma);
                    out.push((p, wa * w * len * jac * weight));
                }
            }
        }
        out
    }

    fn volume_at(&self, sigma: f64, res: &Resolution) -> f64 {
        self.quadrature(sigma, res).iter().map(|(_, w)| w).sum()
    }
}

/// Ray-quadrature resolution for intrinsic balls.
#[derive(Clone, Debug, Serialize)]
pub struct Resolution {
    pub n_angular: usize,
    pub n_scan: usize,
    pub n_gauss: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            n_angular: 64,
            n_scan: 48,
            n_gauss: 8,
        }
    }
}

impl Resolution {
    pub fn refined(&self) -> Self {
        Resolution {
            n_angular: 2 * self.n_angular,
            n_scan: 2 * self.n_scan,
            n_gauss: self.n_gauss,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum VolumeBackend {
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Quadrature: difference to the refined rule. Monte Carlo: 3σ confidence half-width.
    pub error: f64,
    pub backend: VolumeBackend,
}

/// `μ_σ(B)` by ray quadrature, refining until the estimated relative error is below `rel_tol`.
pub fn ball_volume(ball: &IntrinsicBall, sigma: f64, res: &Resolution, rel_tol: f64) -> Result<VolumeEstimate> {
    if sigma <= -1.0 {
        return invalid(format!("weight exponent must exceed -1, got {sigma}"));
    }
    let mut r = res.clone();
    let mut coarse = ball.volume_at(sigma, &r);
    for _ in 0..6 {
        let fine_res = r.refined();
        let fine = ball.volume_at(sigma, &fine_res);
        let err = (fine - coarse).abs();
        if err <= rel_tol * fine.abs() || ball.dim() == 1 {
            return Ok(VolumeEstimate {
                value: fine,
                error: err,
                backend: VolumeBackend::Quadrature,
            });
        }
        r = fine_res;
        coarse = fine;
    }
    Err(Error::Quadrature(format!(
        "ball volume did not reach relative tolerance {rel_tol} (last value {coarse})"
    )))
}

/// `μ_σ(B)` by Monte Carlo on the bounding box of the ball, with a 3σ error bound.
pub fn ball_volume_mc(ball: &IntrinsicBall, sigma: f64, samples: usize, seed: u64) -> VolumeEstimate {
    let s = sandwich(ball, &Resolution::default());
    let half = s.outer.min(2.0);
    let dim = ball.dim();
    let lo: Vec<f64> = ball.center.iter().map(|c| (c - half).max(-1.0)).collect();
    let hi: Vec<f64> = ball.center.iter().map(|c| (c + half).min(1.0)).collect();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut p = vec![0.0; dim];
    for _ in 0..samples {
        for d in 0..dim {
            p[d] = rng.random_range(lo[d]..hi[d]);
        }
        let v = if norm_sq(&p) <= 1.0 && ball.contains(&p) {
            rho_unchecked(&p).max(0.0).powf(sigma)
        } else {
            0.0
        };
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    VolumeEstimate {
        value: mean * box_vol,
        error: 3.0 * (var / n).sqrt() * box_vol,
        backend: VolumeBackend::MonteCarlo,
    }
}

/// Euclidean extents of an intrinsic ball and the resulting equivalence constants.
#[derive(Clone, Debug, Serialize)]
pub struct Sandwich {
    /// Distance to the nearest boundary point of `B_r^d` inside the unit ball (`∞` if none).
    pub inner: f64,
    /// Largest distance from the center to a point of `B_r^d`.
    pub outer: f64,
    /// `rθ / inner`: smallest `C` with `B_{rθ/C}(z) ∩ B_1 ⊆ B_r^d(z)`.
    pub c_low: f64,
    /// `outer / (rθ)`: smallest `C` with `B_r^d(z) ⊆ B_{Crθ}(z)`.
    pub c_high: f64,
}

pub fn sandwich(ball: &IntrinsicBall, res: &Resolution) -> Sandwich {
    let first_exit = |dir: &[f64]| -> f64 {
        match ball.ray_segments(dir, res.n_scan).first() {
            Some(&(_, s1, false)) => s1,
            _ => f64::INFINITY,
        }
    };
    let last_exit = |dir: &[f64]| -> f64 { ball.ray_segments(dir, res.n_scan).last().map_or(0.0, |s| s.1) };
    let dirs = ball.directions(res.n_angular);
    let inner_samples: Vec<f64> = dirs.iter().map(|(d, _)| first_exit(d)).collect();
    let outer_samples: Vec<f64> = dirs.iter().map(|(d, _)| last_exit(d)).collect();
    let mut inner = inner_samples.iter().copied().fold(f64::INFINITY, f64::min);
    let mut outer = outer_samples.iter().copied().fold(0.0, f64::max);
    if ball.dim() == 2 {
        let dphi = 2.0 * std::f64::consts::PI / res.n_angular as f64;
        let unit = |phi: f64| [phi.cos(), phi.sin()];
        if inner.is_finite() {
            let j = inner_samples.iter().position(|v| *v == inner).unwrap_or(0);
            let phi = j as f64 * dphi;
            let (_, v) = golden_min(|a| first_exit(&unit(a)), phi - dphi, phi + dphi, 40);
            inner = inner.min(v);
        }
        let j = outer_samples.iter().position(|v| *v == outer).unwrap_or(0);
        let phi = j as f64 * dphi;
        let (_, v) = golden_min(|a| -last_exit(&unit(a)), phi - dphi, phi + dphi, 40);
        outer = outer.max(-v);
    }
    let rt = ball.radius * ball.theta();
    Sandwich {
        inner,
        outer,
        c_low: if inner.is_finite() { rt / inner } else { 0.0 },
        c_high: outer / rt,
    }
}

/// Cap constants for balls centered near the sphere: with `p = z/|z|`,
/// returns `(r² / min dist(p, ∂B_r^d), max dist(p, B_r^d) / r²)`.
pub fn cap_constants(ball: &IntrinsicBall, res: &Resolution) -> Result<(f64, f64)> {
    let r = norm_sq(&ball.center).sqrt();
    if r == 0.0 {
        return invalid("cap constants need a center away from the origin");
    }
    let pole: Vec<f64> = ball.center.iter().map(|c| c / r).collect();
    let (mut inner, mut outer) = (f64::INFINITY, 0.0f64);
    for (dir, _) in ball.directions(res.n_angular) {
        for (_, s1, clipped) in ball.ray_segments(&dir, res.n_scan) {
            let d = dist(&ball.point(&dir, s1), &pole);
            outer = outer.max(d);
            if !clipped {
                inner = inner.min(d);
            }
        }
    }
    let r2 = ball.radius * ball.radius;
    Ok((if inner.is_finite() { r2 / inner } else { 0.0 }, outer / r2))
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

/// `|B_r^d(z)|_σ / (r^N θ(r,z)^{N+2σ})`, the normalized intrinsic volume.
pub fn volume_ratio(ball: &IntrinsicBall, sigma: f64, res: &Resolution) -> Result<f64> {
    let v = ball_volume(ball, sigma, res, 1e-3)?.value;
    let n = ball.dim() as f64;
    Ok(v / (ball.radius.powf(n) * ball.theta().powf(n + 2.0 * sigma)))
}

/// `|B_r^d(z)|_σ / |B_r^d(z')|_σ` divided by `(1 + d(z,z')/r)^{2N+2σ}`.
pub fn doubling_ratio(z: &[f64], z2: &[f64], r: f64, sigma: f64, res: &Resolution) -> Result<f64> {
    let b1 = IntrinsicBall::new(z, r)?;
    let b2 = IntrinsicBall::new(z2, r)?;
    let v1 = ball_volume(&b1, sigma, res, 1e-3)?.value;
    let v2 = ball_volume(&b2, sigma, res, 1e-3)?.value;
    let d = intrinsic_distance(z, z2)?;
    let n = z.len() as f64;
    Ok(v1 / v2 / (1.0 + d / r).powf(2.0 * n + 2.0 * sigma))
}

/// Largest `d(z,z'') / (d(z,z') + d(z',z''))` over the given triples.
pub fn quasi_triangle_constant(triples: &[[Vec<f64>; 3]]) -> f64 {
    triples
        .iter()
        .map(|[a, b, c]| {
            let lhs = distance_unchecked(a, c);
            let rhs = distance_unchecked(a, b) + distance_unchecked(b, c);
            if rhs > 0.0 {
                lhs / rhs
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Largest `max(θ(r,z)/θ(r,z₀), θ(r,z₀)/θ(r,z))` over the ray-quadrature points of the ball.
pub fn theta_comparability(ball: &IntrinsicBall, res: &Resolution) -> f64 {
    let t0 = ball.theta();
    ball.quadrature(0.0, res)
        .iter()
        .map(|(p, _)| {
            let t = ball.radius.max(rho_unchecked(p).max(0.0).sqrt());
            (t / t0).max(t0 / t)
        })
        .fold(1.0, f64::max)
}

/// Dyadic radii `2^{-j}`, `0 ≤ j ≤ J`.
pub fn dyadic_radii(j_max: usize) -> Vec<f64> {
    (0..=j_max).map(|j| 2f64.powi(-(j as i32))).collect()
}

/// Deterministic center lattice: Gauss–Jacobi nodes of the ball plus points on the sphere.
pub fn center_lattice(dim: usize, n_radial: usize, n_angular: usize, n_boundary: usize) -> Result<Vec<Vec<f64>>> {
    let q = BallQuadrature::new(dim, 1.0, n_radial, n_angular)?;
    let mut pts: Vec<Vec<f64>> = q.nodes.iter().map(|p| p[..dim].to_vec()).collect();
    if dim == 1 {
        pts.push(vec![1.0]);
        pts.push(vec![-1.0]);
    } else {
        for j in 0..n_boundary {
            let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.25) / n_boundary as f64;
            pts.push(vec![phi.cos(), phi.sin()]);
        }
    }
    Ok(pts)
}
