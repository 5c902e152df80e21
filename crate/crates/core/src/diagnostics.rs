//! Sampled verification of kernel bounds, decay rates, analyticity, level sets and the free boundary.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::basis::{Discretization, Field};
use crate::error::{invalid, Result};
use crate::geometry::{ball_volume, intrinsic_distance, theta, IntrinsicBall, Resolution};
use crate::norms::{polar_lattice, SpaceTimeField};
use crate::profiles::ModelParams;
use crate::spectral::{HeatKernel, SpectralOperator};

/// Outcome of a sampled check.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub quantity: String,
    pub sample_spec: Value,
    pub constants: BTreeMap<String, f64>,
    pub worst_case: Value,
    pub passed: bool,
    pub ceiling: Option<f64>,
    /// Samples excluded (e.g. truncation tail too large).
    pub flagged: usize,
    pub sequence: Vec<f64>,
}

impl FitReport {
    pub fn new(quantity: &str, sample_spec: Value) -> Self {
        FitReport {
            quantity: quantity.into(),
            sample_spec,
            constants: BTreeMap::new(),
            worst_case: Value::Null,
            passed: false,
            ceiling: None,
            flagged: 0,
            sequence: Vec::new(),
        }
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }
}

/// Sample points of the ball: `n` per radius on a symmetric lattice.
pub fn sample_points(dim: usize, n: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        (0..=2 * n).map(|i| vec![-1.0 + i as f64 / n as f64]).collect()
    } else {
        polar_lattice(2, n)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussianSampleSpec {
    pub times: Vec<f64>,
    /// Lattice density for `z` and `z'`.
    pub n_points: usize,
    pub k_max: usize,
    pub beta_max: usize,
    pub res: Resolution,
}

impl GaussianSampleSpec {
    pub fn new(n_points: usize) -> Self {
        GaussianSampleSpec {
            times: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0],
            n_points,
            k_max: 1,
            beta_max: 2,
            res: Resolution::default(),
        }
    }

    pub fn refined(&self) -> Self {
        GaussianSampleSpec {
            n_points: 2 * self.n_points,
            ..self.clone()
        }
    }
}

/// Fit of `|∂_t^k ∂^β G| · t^{k+|β|/4} θ^{|β|} |B|^{1/2}|B'|^{1/2} ≤ A e^{−C (d/t^{1/4})^{4/3}}`.
///
/// `A` is `e` times the largest normalized value in the class (one e-fold of headroom);
/// `C` is the largest constant for which every sample obeys the bound with that `A`.
/// Passes when `C > 0` in every `(k, |β|)` class.
pub fn verify_gaussian_bound(kernel: &HeatKernel, spec: &GaussianSampleSpec) -> Result<FitReport> {
    if spec.times.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return invalid("kernel sample times must lie in (0, 1]");
    }
    let dim = kernel.disc.dim;
    let sigma = kernel.disc.sigma;
    let pts = sample_points(dim, spec.n_points);
    // memoized volumes |B_{t^{1/4}}(z)|_σ per (time, point)
    let volumes: Vec<Vec<f64>> = spec
        .times
        .iter()
        .map(|t| {
            pts.par_iter()
                .map(|z| {
                    let b = IntrinsicBall::new(z, t.powf(0.25))?;
                    Ok(ball_volume(&b, sigma, &spec.res, 1e-3)?.value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let classes: Vec<(usize, usize)> = (0..=spec.k_max)
        .flat_map(|k| (0..=spec.beta_max).map(move |b| (k, b)))
        .collect();
    // per class: (x, R, location)
    let mut samples: Vec<Vec<(f64, f64, Value)>> = vec![Vec::new(); classes.len()];
    let mut flagged = 0;
    for (ti, t) in spec.times.iter().enumerate() {
        let tail = kernel.tail_bound(*t);
        if tail > kernel.tail_tol {
            flagged += pts.len() * pts.len();
            continue;
        }
        let t4 = t.powf(0.25);
        let rows: Vec<Vec<(usize, f64, f64, Value)>> = pts
            .par_iter()
            .enumerate()
            .map(|(j2, z2)| {
                let mut out = Vec::new();
                for k in 0..=spec.k_max {
                    let sec = kernel.section(*t, z2, k);
                    for (j1, z1) in pts.iter().enumerate() {
                        let jet = kernel.disc.eval_jet(&sec, z1, spec.beta_max);
                        let d = intrinsic_distance(z1, z2).unwrap_or(0.0);
                        let th = theta(t4, z1).unwrap_or(1.0);
                        let x = (d / t4).powf(4.0 / 3.0);
                        let vol = (volumes[ti][j1] * volumes[ti][j2]).sqrt();
                        for b in 0..=spec.beta_max {
                            let g = jet.multi_index_sum(b);
                            let r = g * t.powf(k as f64 + b as f64 / 4.0) * th.powi(b as i32) * vol;
                            let ci = k * (spec.beta_max + 1) + b;
                            out.push((ci, x, r, json!({"t": t, "z": z1, "z2": z2, "k": k, "beta": b})));
                        }
                    }
                }
                out
            })
            .collect();
        for row in rows {
            for (ci, x, r, v) in row {
                samples[ci].push((x, r.abs(), v));
            }
        }
    }
    let mut report = FitReport::new(
        "gaussian_bound",
        json!({"times": spec.times, "n_points": spec.n_points, "points": pts.len(), "k_max": spec.k_max,
               "beta_max": spec.beta_max, "res": spec.res, "dim": dim, "sigma": sigma}),
    );
    report.flagged = flagged;
    let mut c_min = f64::INFINITY;
    let mut worst = Value::Null;
    for ((k, b), class) in classes.iter().zip(&samples) {
        let a = std::f64::consts::E * class.iter().map(|s| s.1).fold(0.0, f64::max);
        let mut c = f64::INFINITY;
        let mut arg = Value::Null;
        for (x, r, v) in class {
            if *r <= 0.0 || *x <= 0.0 {
                continue;
            }
            let ci = (a / r).ln() / x;
            if ci < c {
                c = ci;
                arg = v.clone();
            }
        }
        report.constants.insert(format!("A_k{k}_b{b}"), a);
        report.constants.insert(format!("C_k{k}_b{b}"), c);
        if c < c_min {
            c_min = c;
            worst = arg;
        }
    }
    report.constants.insert("C".into(), c_min);
    report.worst_case = worst;
    report.passed = c_min > 0.0 && c_min.is_finite();
    Ok(report)
}

/// Least-squares fit `ln v ≈ a − r t`; returns `(r, a)`.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return invalid("at least two positive samples are needed for an exponential fit");
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return invalid("samples must span more than one time");
    }
    let slope = sxy / sxx;
    Ok((-slope, ml - slope * mt))
}

/// Linear regression `y ≈ a x + b`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// `‖w(t) − ⨍w dμ_σ‖_σ` for every stored time (basis is orthonormal, the mean is the constant mode).
pub fn mean_deviation(disc: &Discretization, states: &[Field]) -> Vec<f64> {
    let c = disc.constant_index();
    states
        .iter()
        .map(|s| {
            s.coeffs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != c)
                .map(|(_, v)| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Log-linear fit of the mean-zero norm over `t ≥ t_start`.
///
/// Passes when the rate is at least `λ₁ − tol`; reports `λ₁` and `μ₁ = λ₁² + nλ₁` alongside.
pub fn measure_decay_rate(
    times: &[f64],
    states: &[Field],
    disc: &Discretization,
    op: &SpectralOperator,
    t_start: f64,
    tol: f64,
) -> Result<FitReport> {
    let lambda1 = op.lambda_1();
    let horizon = times.last().copied().unwrap_or(0.0);
    if horizon < 3.0 / lambda1 {
        return invalid(format!(
            "trajectory horizon {horizon} shorter than 3/λ₁ = {}",
            3.0 / lambda1
        ));
    }
    let dev = mean_deviation(disc, states);
    let mut report = FitReport::new(
        "decay_rate",
        json!({"t_start": t_start, "horizon": horizon, "samples": times.len()}),
    );
    report.constants.insert("lambda_1".into(), lambda1);
    report.constants.insert("mu_1".into(), op.mu_1());
    let scale = dev.iter().copied().fold(0.0, f64::max);
    let size = states.iter().map(|s| s.norm()).fold(0.0, f64::max);
    if scale <= 1e-13 * size || scale == 0.0 {
        report.passed = true;
        report.worst_case = json!("exact equilibrium");
        return Ok(report);
    }
    let (t, v): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&dev)
        .filter(|(t, v)| **t >= t_start && **v > 1e-13 * scale)
        .map(|(t, v)| (*t, *v))
        .unzip();
    let (rate, intercept) = fit_exponential(&t, &v)?;
    report.constants.insert("rate".into(), rate);
    report.constants.insert("intercept".into(), intercept);
    report.sequence = v;
    report.passed = rate >= lambda1 - tol;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CzSampleSpec {
    pub time_gaps: Vec<f64>,
    pub n_points: usize,
    /// `ρ(z)` below this value counts as near-boundary.
    pub boundary_rho: f64,
    pub res: Resolution,
}

impl CzSampleSpec {
    pub fn new(n_points: usize) -> Self {
        CzSampleSpec {
            time_gaps: vec![1e-3, 4e-3, 1.6e-2, 6.4e-2, 0.256, 1.0],
            n_points,
            boundary_rho: 0.05,
            res: Resolution {
                n_angular: 32,
                n_scan: 32,
                n_gauss: 6,
            },
        }
    }

    pub fn refined(&self) -> Self {
        CzSampleSpec {
            n_points: 2 * self.n_points,
            ..self.clone()
        }
    }
}

/// `K_{ℓ,k,β}((t, z), (t', z')) = χ_{t' < t} ρ(z)^ℓ ∂_t^k ∂_z^β G(t − t', z, z')`, aggregated over `|β|`.
pub fn cz_kernel(kernel: &HeatKernel, exponent: (usize, usize, usize), t: f64, z: &[f64], t2: f64, z2: &[f64]) -> f64 {
    if t2 >= t {
        return 0.0;
    }
    let (l, k, b) = exponent;
    let rho = (0.5 * (1.0 - z.iter().map(|v| v * v).sum::<f64>())).max(0.0);
    let jet = kernel.jet(t - t2, z, z2, k, b);
    rho.powi(l as i32) * jet.multi_index_sum(b)
}

/// Sampled supremum of `V |K_{ℓ,k,β}|` with `V = D⁴ |B_D((z+z')/2)|_σ`, `D = (|t−t'| + d⁴)^{1/4}`,
/// stratified into near-boundary and interior `z`.
pub fn verify_cz_kernel_bound(
    kernel: &HeatKernel,
    exponent: (usize, usize, usize),
    spec: &CzSampleSpec,
    ceiling: f64,
) -> Result<FitReport> {
    if !crate::norms::EXPONENTS.contains(&exponent) {
        return invalid(format!("{exponent:?} is not a Calderón–Zygmund exponent"));
    }
    let dim = kernel.disc.dim;
    let sigma = kernel.disc.sigma;
    let pts = sample_points(dim, spec.n_points);
    let pairs: Vec<(&Vec<f64>, &Vec<f64>, f64)> = pts
        .iter()
        .flat_map(|z| pts.iter().flat_map(move |z2| spec.time_gaps.iter().map(move |s| (z, z2, *s))))
        .collect();
    let vals: Vec<Result<(f64, bool, f64, Value)>> = pairs
        .par_iter()
        .map(|(z, z2, s)| {
            let d = intrinsic_distance(z, z2)?;
            let big_d = (s + d.powi(4)).powf(0.25);
            let mid: Vec<f64> = z.iter().zip(z2.iter()).map(|(a, b)| 0.5 * (a + b)).collect();
            let ball = IntrinsicBall::new(&mid, big_d)?;
            let vol = ball_volume(&ball, sigma, &spec.res, 1e-2)?.value;
            let kv = cz_kernel(kernel, exponent, *s, z, 0.0, z2);
            let rho = 0.5 * (1.0 - z.iter().map(|v| v * v).sum::<f64>());
            let flagged = kernel.tail_bound(*s) > kernel.tail_tol;
            Ok((
                big_d.powi(4) * vol * kv.abs(),
                rho < spec.boundary_rho,
                if flagged { 1.0 } else { 0.0 },
                json!({"gap": s, "z": z, "z2": z2}),
            ))
        })
        .collect();
    let mut near: f64 = 0.0;
    let mut interior: f64 = 0.0;
    let mut worst = Value::Null;
    let mut best = -1.0;
    let mut flagged = 0;
    for v in vals {
        let (val, is_near, fl, spec_v) = v?;
        if fl > 0.0 {
            flagged += 1;
            continue;
        }
        if is_near {
            near = near.max(val);
        } else {
            interior = interior.max(val);
        }
        if val > best {
            best = val;
            worst = spec_v;
        }
    }
    // causality: the kernel vanishes for t' ≥ t
    let causal = cz_kernel(kernel, exponent, 0.5, &pts[0], 0.5, &pts[0]) == 0.0
        && cz_kernel(kernel, exponent, 0.5, &pts[0], 0.7, &pts[0]) == 0.0;
    let sup = near.max(interior);
    let mut report = FitReport::new(
        "cz_kernel",
        json!({"exponent": exponent, "time_gaps": spec.time_gaps, "n_points": spec.n_points,
               "points": pts.len(), "boundary_rho": spec.boundary_rho, "dim": dim, "sigma": sigma}),
    );
    report.constants.insert("sup".into(), sup);
    report.constants.insert("sup_near_boundary".into(), near);
    report.constants.insert("sup_interior".into(), interior);
    report.constants.insert("causal".into(), if causal { 1.0 } else { 0.0 });
    report.worst_case = worst;
    report.flagged = flagged;
    report.ceiling = Some(ceiling);
    report.passed = sup.is_finite() && sup <= ceiling && causal;
    Ok(report)
}

/// `a_k = sup_z t^k |∂_t^k w(t, z)| / k!` for `k = 0..=k_max`; the sequence holds `(a_k/a_0)^{1/k}`.
pub fn analyticity_ratios<F: SpaceTimeField + ?Sized>(
    w: &F,
    disc: &Discretization,
    t: f64,
    k_max: usize,
    n_lattice: usize,
    ceiling: f64,
) -> Result<FitReport> {
    if k_max > 5 {
        return invalid("analyticity ratios are limited to k ≤ 5");
    }
    if !(t > 0.0 && t <= w.horizon()) {
        return invalid(format!("t = {t} outside (0, {}]", w.horizon()));
    }
    let pts = polar_lattice(disc.dim, n_lattice);
    let mut a = Vec::new();
    let mut fact = 1.0;
    for k in 0..=k_max {
        if k > 0 {
            fact *= k as f64;
        }
        let f = w.derivative_at(t, k)?;
        let sup = pts.iter().map(|z| disc.eval(&f, z).abs()).fold(0.0, f64::max);
        a.push(t.powi(k as i32) * sup / fact);
    }
    let mut report = FitReport::new(
        "analyticity",
        json!({"t": t, "k_max": k_max, "lattice": n_lattice}),
    );
    report.ceiling = Some(ceiling);
    for (k, v) in a.iter().enumerate() {
        report.constants.insert(format!("a_{k}"), *v);
    }
    if a[0] == 0.0 {
        report.sequence = vec![0.0; k_max];
        report.constants.insert("inverse_radius".into(), 0.0);
        report.passed = true;
        return Ok(report);
    }
    // stop at the rounding floor
    let floor = 1e-13 * a[0];
    let seq: Vec<f64> = a[1..]
        .iter()
        .enumerate()
        .take_while(|(_, v)| **v > floor)
        .map(|(k, v)| (v / a[0]).powf(1.0 / (k + 1) as f64))
        .collect();
    if seq.len() < k_max {
        report.worst_case = json!({"truncated_at": seq.len() + 1});
    }
    let inv = seq.iter().copied().fold(0.0, f64::max);
    report.constants.insert("inverse_radius".into(), inv);
    report.sequence = seq;
    report.passed = inv.is_finite() && inv <= ceiling;
    Ok(report)
}

/// Points of a level set `{u = λ}` in `x`, one entry per ray (`None` when the ray misses the set).
#[derive(Clone, Debug, Serialize)]
pub struct LevelSet {
    pub height: f64,
    pub directions: Vec<Vec<f64>>,
    /// Radial parameter `s` of the root in `z`.
    pub radii: Vec<Option<f64>>,
    pub points: Vec<Option<Vec<f64>>>,
}

pub fn directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        (0..n)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![phi.cos(), phi.sin()]
            })
            .collect()
    }
}

/// Level set of `u` at height `λ ≥ 0`: along each ray `z = sω` the outermost root of
/// `(1 − s²)(1 + w(sω))² = 2γ√λ`, mapped to `x = (1 + w(z)) z`.
pub fn level_set(disc: &Discretization, w: &Field, lambda: f64, p: &ModelParams, n_dirs: usize) -> Result<LevelSet> {
    if !(lambda >= 0.0) {
        return invalid(format!("height must be non-negative, got {lambda}"));
    }
    disc.check(w)?;
    let dirs = directions(disc.dim, n_dirs);
    let target = 2.0 * p.gamma * lambda.sqrt();
    let scan = 400;
    let roots: Vec<Option<f64>> = dirs
        .par_iter()
        .map(|om| {
            let at = |s: f64| -> Vec<f64> { om.iter().map(|o| s * o).collect() };
            let f = |s: f64| (1.0 - s * s) * (1.0 + disc.eval(w, &at(s))).powi(2) - target;
            if lambda == 0.0 {
                return Some(1.0);
            }
            let mut prev = f(1.0);
            for j in (0..scan).rev() {
                let s = j as f64 / scan as f64;
                let v = f(s);
                let hit = if j == 0 { v >= -1e-13 } else { v >= 0.0 };
                if hit && prev < 0.0 {
                    let (mut lo, mut hi) = (s, (j + 1) as f64 / scan as f64);
                    if v.abs() <= 1e-13 {
                        return Some(s);
                    }
                    for _ in 0..80 {
                        let m = 0.5 * (lo + hi);
                        if f(m) >= 0.0 {
                            lo = m;
                        } else {
                            hi = m;
                        }
                    }
                    return Some(0.5 * (lo + hi));
                }
                prev = v;
            }
            None
        })
        .collect();
    let points = dirs
        .iter()
        .zip(&roots)
        .map(|(om, r)| {
            r.map(|s| {
                let z: Vec<f64> = om.iter().map(|o| s * o).collect();
                let wt = 1.0 + disc.eval(w, &z);
                z.iter().map(|v| wt * v).collect()
            })
        })
        .collect();
    Ok(LevelSet {
        height: lambda,
        directions: dirs,
        radii: roots,
        points,
    })
}

/// Free boundary `{x = (1 + w(z)) z : |z| = 1}`.
pub fn free_boundary(disc: &Discretization, w: &Field, p: &ModelParams, n_dirs: usize) -> Result<LevelSet> {
    level_set(disc, w, 0.0, p, n_dirs)
}

/// `max_{|z|=1} |w(z)|`, the largest radial deviation of the free boundary from the unit sphere.
pub fn free_boundary_deviation(disc: &Discretization, w: &Field, n_dirs: usize) -> f64 {
    directions(disc.dim, n_dirs)
        .iter()
        .map(|om| disc.eval(w, om).abs())
        .fold(0.0, f64::max)
}
