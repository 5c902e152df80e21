//! Smyth–Hill self-similar solutions, the mass constraint and the similarity rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::rho_unchecked;
use crate::quadrature::{gauss_legendre, sphere_area};

/// Model constants. `gamma`, `alpha_n` and `sigma_m` are derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    pub sigma: f64,
    pub n: f64,
    pub mass: f64,
    pub gamma: f64,
    pub alpha_n: f64,
    pub sigma_m: f64,
}

impl ModelParams {
    pub fn new(dim: usize, sigma: f64, n: f64, mass: f64) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return invalid(format!("weight exponent must be positive, got {sigma}"));
        }
        if !(n >= 0.0) || !n.is_finite() {
            return invalid(format!("zeroth-order coefficient must be nonnegative, got {n}"));
        }
        let sigma_m = sigma_from_mass(mass, dim)?;
        Ok(ModelParams {
            dim,
            sigma,
            n,
            mass,
            gamma: gamma(dim),
            alpha_n: alpha_n(dim),
            sigma_m,
        })
    }

    /// The thin film case `σ = 1`, `n = N`.
    pub fn thin_film(dim: usize, mass: f64) -> Result<Self> {
        Self::new(dim, 1.0, dim as f64, mass)
    }

    pub fn gamma_sq(&self) -> f64 {
        2.0 * (self.dim as f64 + 2.0)
    }

    /// Whether the parameters describe the thin film equation itself.
    pub fn is_thin_film(&self) -> bool {
        self.sigma == 1.0 && self.n == self.dim as f64
    }
}

pub fn gamma(dim: usize) -> f64 {
    (2.0 * (dim as f64 + 2.0)).sqrt()
}

pub fn alpha_n(dim: usize) -> f64 {
    let n = dim as f64;
    1.0 / (8.0 * (n + 4.0) * (n + 2.0))
}

/// `∫_{B_1} (1 − |y|²)² dy` by radial Gauss–Legendre (exact: the integrand is polynomial in r).
pub fn reference_integral(dim: usize) -> f64 {
    let (r, w) = gauss_legendre(dim / 2 + 4, 0.0, 1.0);
    let radial: f64 = r
        .iter()
        .zip(&w)
        .map(|(r, w)| w * (1.0 - r * r).powi(2) * r.powi(dim as i32 - 1))
        .sum();
    sphere_area(dim) * radial
}

/// Mass of `u_*` for a given `σ_M` (time independent).
pub fn mass_for_sigma(sigma_m: f64, dim: usize) -> f64 {
    alpha_n(dim) * sigma_m.powf((dim as f64 + 4.0) / 2.0) * reference_integral(dim)
}

/// Solve the mass constraint `∫ u_*(1, ·) = M` for `σ_M`.
pub fn sigma_from_mass(mass: f64, dim: usize) -> Result<f64> {
    if !(mass > 0.0) || !mass.is_finite() {
        return invalid(format!("mass must be positive, got {mass}"));
    }
    let e = (dim as f64 + 4.0) / 2.0;
    let f = |s: f64| mass_for_sigma(s, dim) - mass;
    let df = |s: f64| e * mass_for_sigma(s, dim) / s;
    let (mut lo, mut hi) = (1e-3, 1.0);
    while f(lo) > 0.0 {
        lo *= 1e-3;
        if lo < 1e-300 {
            return Err(Error::NoConvergence("mass bracket underflow".into()));
        }
    }
    while f(hi) < 0.0 {
        hi *= 10.0;
        if hi > 1e300 {
            return Err(Error::NoConvergence("mass bracket overflow".into()));
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fs = f(s);
        if fs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if fs.abs() <= 1e-14 * mass {
            return Ok(s);
        }
        let newton = s - fs / df(s);
        s = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence(format!("sigma_M root for mass {mass}")))
}

/// `u_*(t, x) = α_N t^{−N/(N+4)} (σ_M − |x|² t^{−2/(N+4)})₊²`.
pub fn smyth_hill(t: f64, x: &[f64], p: &ModelParams) -> Result<f64> {
    if !(t > 0.0) {
        return invalid(format!("time must be positive, got {t}"));
    }
    let n = p.dim as f64;
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let inner = p.sigma_m - x2 * t.powf(-2.0 / (n + 4.0));
    Ok(p.alpha_n * t.powf(-n / (n + 4.0)) * inner.max(0.0).powi(2))
}

/// Support radius `√σ_M t^{1/(N+4)}` of `u_*(t, ·)`.
pub fn support_radius(t: f64, p: &ModelParams) -> f64 {
    p.sigma_m.sqrt() * t.powf(1.0 / (p.dim as f64 + 4.0))
}

/// Mass of `u_*(t, ·)` by quadrature on the rescaled support (dimension 1 or 2).
pub fn smyth_hill_mass(t: f64, p: &ModelParams, n_quad: usize) -> Result<f64> {
    let radius = support_radius(t, p);
    let (r, w) = gauss_legendre(n_quad, 0.0, 1.0);
    let mut total = 0.0;
    match p.dim {
        1 => {
            for (ri, wi) in r.iter().zip(&w) {
                for sgn in [-1.0, 1.0] {
                    total += wi * radius * smyth_hill(t, &[sgn * ri * radius], p)?;
                }
            }
        }
        2 => {
            let na = 16;
            for (ri, wi) in r.iter().zip(&w) {
                for j in 0..na {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / na as f64;
                    let x = [ri * radius * phi.cos(), ri * radius * phi.sin()];
                    total += wi * radius * radius * ri * smyth_hill(t, &x, p)? * 2.0 * std::f64::consts::PI
                        / na as f64;
                }
            }
        }
        d => return invalid(format!("mass quadrature supports dimension 1 or 2, got {d}")),
    }
    Ok(total)
}

/// Similarity variables `(t̂, x̂, û)` of the confined equation.
pub fn to_confined(t: f64, x: &[f64], u: f64, p: &ModelParams) -> Result<(f64, Vec<f64>, f64)> {
    if !(t > 0.0) {
        return invalid(format!("time must be positive, got {t}"));
    }
    let n = p.dim as f64;
    let scale = 1.0 / (p.sigma_m.sqrt() * t.powf(1.0 / (n + 4.0)));
    let th = t.ln() / (n + 4.0);
    let xh = x.iter().map(|v| v * scale).collect();
    let uh = (n + 4.0) / (p.sigma_m * p.sigma_m) * t.powf(n / (n + 4.0)) * u;
    Ok((th, xh, uh))
}

pub fn from_confined(th: f64, xh: &[f64], uh: f64, p: &ModelParams) -> (f64, Vec<f64>, f64) {
    let n = p.dim as f64;
    let t = ((n + 4.0) * th).exp();
    let scale = p.sigma_m.sqrt() * t.powf(1.0 / (n + 4.0));
    let x = xh.iter().map(|v| v * scale).collect();
    let u = uh * p.sigma_m * p.sigma_m / ((n + 4.0) * t.powf(n / (n + 4.0)));
    (t, x, u)
}

/// Stationary profile `û_* = ρ(z)²/γ²` of the confined equation (zero outside the ball).
pub fn confined_stationary(z: &[f64], p: &ModelParams) -> f64 {
    let r = rho_unchecked(z).max(0.0);
    r * r / p.gamma_sq()
}

/// Sample `u_*(t, ·)` along the first axis for plotting: rows `(x, u)`.
pub fn sample_profile(t: f64, p: &ModelParams, n: usize) -> Result<Vec<(f64, f64)>> {
    let radius = support_radius(t, p) * 1.1;
    (0..n)
        .map(|i| {
            let x = -radius + 2.0 * radius * i as f64 / (n.max(2) - 1) as f64;
            let mut pt = vec![0.0; p.dim];
            pt[0] = x;
            Ok((x, smyth_hill(t, &pt, p)?))
        })
        .collect()
}
