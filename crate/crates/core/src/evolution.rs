//! Time integration of `∂_t w + (L_σ² + nL_σ) w = f`: exact eigen-expansion with Duhamel
//! forcing, implicit Euler, the weak-form residual, and the nonlinear solvers.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Discretization, Field};
use crate::error::{invalid, Error, Result};
use crate::jet::Jet;
use crate::norms::{lipschitz_norm, surrogate_norm, WhitneyNormConfig};
use crate::profiles::{confined_stationary, ModelParams};
use crate::quadrature::{chebyshev_lobatto_unit, gauss_legendre};
use crate::spectral::SpectralOperator;
use crate::transform::{forward_field, nonlinearity, Thresholds};

/// Windows `[t_j, t_{j+1}]` with `p + 1` Chebyshev–Lobatto nodes each (shared endpoints).
#[derive(Clone, Debug, Serialize)]
pub struct TimeGrid {
    pub edges: Vec<f64>,
    pub p: usize,
    pub times: Vec<f64>,
}

impl TimeGrid {
    pub fn from_edges(edges: Vec<f64>, p: usize) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 {
            return invalid("time grid needs at least one window starting at 0");
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || !edges.iter().all(|t| t.is_finite()) {
            return invalid("window edges must be finite and strictly increasing");
        }
        if p == 0 || p > 24 {
            return invalid(format!("nodes per window must be in 1..=24, got {p}"));
        }
        let x = chebyshev_lobatto_unit(p);
        let mut times = vec![0.0];
        for w in edges.windows(2) {
            let h = w[1] - w[0];
            for xi in &x[1..] {
                times.push(w[0] + h * xi);
            }
            *times.last_mut().unwrap() = w[1];
        }
        Ok(TimeGrid { edges, p, times })
    }

    /// `n` equal steps with linear interpolation in between.
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        Self::chebyshev(t_end, n, 1)
    }

    pub fn chebyshev(t_end: f64, n_windows: usize, p: usize) -> Result<Self> {
        if !(t_end > 0.0) || n_windows == 0 {
            return invalid("horizon and window count must be positive");
        }
        let edges = (0..=n_windows).map(|i| t_end * i as f64 / n_windows as f64).collect();
        Self::from_edges(edges, p)
    }

    /// Windows growing geometrically from `first` by `growth`, capped at `max_width`.
    pub fn graded(t_end: f64, first: f64, growth: f64, max_width: f64, p: usize) -> Result<Self> {
        if !(t_end > 0.0 && first > 0.0 && growth >= 1.0 && max_width >= first) {
            return invalid("graded grid needs positive horizon, first width ≤ max width and growth ≥ 1");
        }
        let mut edges = vec![0.0];
        let mut h = first;
        while *edges.last().unwrap() < t_end {
            let last = *edges.last().unwrap();
            let next = if t_end - last < 1.5 * h { t_end } else { last + h };
            edges.push(next);
            h = (h * growth).min(max_width);
        }
        Self::from_edges(edges, p)
    }

    pub fn horizon(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn n_windows(&self) -> usize {
        self.edges.len() - 1
    }

    /// Index of the window containing `t` (right-closed except for the first).
    pub fn window_of(&self, t: f64) -> usize {
        let n = self.n_windows();
        let i = self.edges.partition_point(|e| *e < t);
        i.saturating_sub(1).min(n - 1)
    }

    /// Indices into `times` of the nodes of window `w`.
    pub fn window_nodes(&self, w: usize) -> std::ops::RangeInclusive<usize> {
        w * self.p..=(w + 1) * self.p
    }
}

/// Chebyshev coefficients of values at the Lobatto nodes `x_i = (1 − cos(πi/p))/2`.
pub(crate) fn chebyshev_coeffs(vals: &[f64]) -> Vec<f64> {
    let p = vals.len() - 1;
    if p == 0 {
        return vec![vals[0]];
    }
    // value at ξ_j = cos(πj/p) is vals[p − j]
    let mut c = vec![0.0; p + 1];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..=p {
            let w = if j == 0 || j == p { 0.5 } else { 1.0 };
            s += w * vals[p - j] * (std::f64::consts::PI * (k * j) as f64 / p as f64).cos();
        }
        *ck = 2.0 * s / p as f64;
    }
    c[0] *= 0.5;
    c[p] *= 0.5;
    c
}

fn chebyshev_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n];
    for k in (1..n).rev() {
        d[k - 1] = d.get(k + 1).copied().unwrap_or(0.0) + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    d
}

fn chebyshev_eval(c: &[f64], xi: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * xi * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + xi * b1 - b2
}

/// Weights `ℓ_i^{(k)}(x)` of the degree-`p` interpolant on the Lobatto nodes of `[0, 1]`.
pub(crate) fn lagrange_weights(p: usize, x: f64, k: usize) -> Vec<f64> {
    let xi = 2.0 * x - 1.0;
    (0..=p)
        .map(|i| {
            let mut e = vec![0.0; p + 1];
            e[i] = 1.0;
            let mut c = chebyshev_coeffs(&e);
            for _ in 0..k {
                c = chebyshev_derivative(&c);
            }
            chebyshev_eval(&c, xi) * 2f64.powi(k as i32)
        })
        .collect()
}

/// `w(t)` at the nodes of a time grid, interpolated per window.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<Field>,
    pub scheme: String,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<Field>, scheme: impl Into<String>) -> Result<Self> {
        if states.len() != grid.times.len() {
            return invalid(format!("{} states for {} grid times", states.len(), grid.times.len()));
        }
        if states.iter().any(|s| s.len() != states[0].len()) {
            return invalid("trajectory states have inconsistent lengths");
        }
        Ok(Trajectory {
            grid,
            states,
            scheme: scheme.into(),
        })
    }

    /// Samples `f(t)` at the grid times.
    pub fn sample(grid: &TimeGrid, f: impl Fn(f64) -> Result<Field> + Sync) -> Result<Self> {
        let states: Result<Vec<Field>> = grid.times.par_iter().map(|t| f(*t)).collect();
        Self::new(grid.clone(), states?, "sampled")
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn times(&self) -> &[f64] {
        &self.grid.times
    }

    pub fn last(&self) -> &Field {
        self.states.last().unwrap()
    }

    /// `∂_t^k` of the interpolant at `t` (zero for `k > p`).
    pub fn derivative_at(&self, t: f64, k: usize) -> Result<Field> {
        if !(0.0..=self.horizon()).contains(&t) {
            return invalid(format!("t = {t} outside [0, {}]", self.horizon()));
        }
        let w = self.grid.window_of(t);
        let (a, b) = (self.grid.edges[w], self.grid.edges[w + 1]);
        let h = b - a;
        let weights = lagrange_weights(self.grid.p, (t - a) / h, k);
        let mut out = Field::zeros(self.states[0].len());
        for (wt, idx) in weights.iter().zip(self.grid.window_nodes(w)) {
            out = out.axpy(*wt / h.powi(k as i32), &self.states[idx]);
        }
        Ok(out)
    }

    pub fn at(&self, t: f64) -> Result<Field> {
        self.derivative_at(t, 0)
    }

    pub fn map(&self, f: impl Fn(&Field) -> Field) -> Trajectory {
        Trajectory {
            grid: self.grid.clone(),
            states: self.states.iter().map(f).collect(),
            scheme: self.scheme.clone(),
        }
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.grid.times != other.grid.times {
            return invalid("trajectories live on different time grids");
        }
        Ok(Trajectory {
            grid: self.grid.clone(),
            states: self.states.iter().zip(&other.states).map(|(a, b)| a.sub(b)).collect(),
            scheme: "difference".into(),
        })
    }
}

fn gl64() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(64, 0.0, 1.0))
}

/// `φ_0(z), …, φ_m(z)` with `φ_j(z) = Σ_i z^i/(i + j)!`.
pub fn phi_functions(z: f64, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m + 1];
    out[0] = z.exp();
    if z.abs() > 60.0 {
        let mut fact = 1.0;
        for j in 0..m {
            if j > 0 {
                fact *= j as f64;
            }
            out[j + 1] = (out[j] - 1.0 / fact) / z;
        }
        return out;
    }
    // φ_j(z) = ∫_0^1 e^{z(1−θ)} θ^{j−1} dθ / (j − 1)!
    let (x, w) = gl64();
    for (xi, wi) in x.iter().zip(w) {
        let e = wi * (z * (1.0 - xi)).exp();
        let mut pw = 1.0;
        let mut fact = 1.0;
        for j in 1..=m {
            if j > 1 {
                pw *= xi;
                fact *= (j - 1) as f64;
            }
            out[j] += e * pw / fact;
        }
    }
    out
}

/// Exact evolution per eigenmode: `w_k(t) = e^{−μ_k t} g_k + ∫_0^t e^{−μ_k(t−s)} f_k(s) ds`
/// with `f` given at the grid times and integrated through its window interpolant.
pub fn evolve_linear_exact(
    op: &SpectralOperator,
    g: &Field,
    forcing: Option<&Trajectory>,
    grid: &TimeGrid,
    forcing_tol: f64,
) -> Result<Trajectory> {
    if g.len() != op.len() {
        return invalid("initial datum does not match the operator");
    }
    let n = op.len();
    let p = grid.p;
    let ge = op.to_eigen(g);
    let fe: Option<Vec<Vec<f64>>> = match forcing {
        Some(f) => {
            if f.grid.times != grid.times {
                return invalid("forcing must be sampled on the evolution grid");
            }
            if f.states[0].len() != n {
                return invalid("forcing does not match the operator");
            }
            Some(f.states.par_iter().map(|s| op.to_eigen(s)).collect())
        }
        None => None,
    };
    let x = chebyshev_lobatto_unit(p);
    // monomial coefficients in s/h from Lobatto values
    let vinv = DMatrix::from_fn(p + 1, p + 1, |i, j| x[i].powi(j as i32))
        .try_inverse()
        .ok_or_else(|| Error::Quadrature("singular Vandermonde matrix".into()))?;
    if let (Some(fe), true) = (&fe, p >= 2) {
        let scale = fe.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            let worst = (0..grid.n_windows())
                .into_par_iter()
                .map(|w| {
                    let idx: Vec<usize> = grid.window_nodes(w).collect();
                    (0..n)
                        .map(|k| {
                            let vals: Vec<f64> = idx.iter().map(|i| fe[*i][k]).collect();
                            chebyshev_coeffs(&vals)[p].abs()
                        })
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            if worst > forcing_tol * scale {
                return Err(Error::Quadrature(format!(
                    "forcing under-resolved: trailing Chebyshev coefficient {:.3e} exceeds {:.1e} of max |f|",
                    worst / scale,
                    forcing_tol
                )));
            }
        }
    }
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mu = op.mu_at(k);
            let mut col = Vec::with_capacity(grid.times.len());
            let mut cur = ge[k];
            col.push(cur);
            for w in 0..grid.n_windows() {
                let h = grid.edges[w + 1] - grid.edges[w];
                let coef: Option<Vec<f64>> = fe.as_ref().map(|fe| {
                    let vals: Vec<f64> = grid.window_nodes(w).map(|i| fe[i][k]).collect();
                    (0..=p).map(|j| (0..=p).map(|i| vinv[(j, i)] * vals[i]).sum()).collect()
                });
                let start = cur;
                for xi in &x[1..] {
                    let tau = xi * h;
                    let mut v = (-mu * tau).exp() * start;
                    if let Some(c) = &coef {
                        let phi = phi_functions(-mu * tau, p + 1);
                        let mut fact = 1.0;
                        for (j, cj) in c.iter().enumerate() {
                            if j > 0 {
                                fact *= j as f64;
                            }
                            v += cj * h * xi.powi(j as i32 + 1) * fact * phi[j + 1];
                        }
                    }
                    col.push(v);
                }
                cur = *col.last().unwrap();
            }
            col
        })
        .collect();
    let states = (0..grid.times.len())
        .into_par_iter()
        .map(|ti| {
            let e: Vec<f64> = columns.iter().map(|c| c[ti]).collect();
            op.from_eigen(&e)
        })
        .collect();
    Trajectory::new(grid.clone(), states, "exact")
}

/// Implicit Euler `w^{j+1} = (1/h + L² + nL)^{−1}(w^j/h + f(t_{j+1}))` with `n` equal steps.
pub fn evolve_linear_euler(
    op: &SpectralOperator,
    g: &Field,
    forcing: Option<&(dyn Fn(f64) -> Result<Field> + Sync)>,
    t_end: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    let grid = TimeGrid::uniform(t_end, n_steps)?;
    let h = t_end / n_steps as f64;
    let mut states = vec![g.clone()];
    for j in 0..n_steps {
        let mut rhs = states[j].scale(1.0 / h);
        if let Some(f) = forcing {
            rhs = rhs.add(&f(grid.times[j + 1])?);
        }
        states.push(op.resolvent_solve(h, &rhs)?);
    }
    Trajectory::new(grid, states, "implicit-euler")
}

/// Energy ratio `(sup‖w‖²_σ + ∫‖∇w‖²_σ + ∫‖∇²w‖²_{σ+2}) / (∫‖f‖²_σ + ‖g‖²_σ)` on the grid.
pub fn energy_ratio(traj: &Trajectory, forcing: Option<&Trajectory>, disc: &Discretization) -> Result<f64> {
    let (x, w) = gauss_legendre(6, 0.0, 1.0);
    let grad = |f: &Field, m: usize| -> f64 {
        let s = disc.sigma + 2.0 * (m as f64 - 1.0).max(0.0);
        crate::norms::gradient_norm(disc, f, m, s).unwrap_or(f64::NAN)
    };
    let mut sup: f64 = 0.0;
    for s in &traj.states {
        sup = sup.max(s.dot(s));
    }
    let mut integral = 0.0;
    let mut f_int = 0.0;
    for win in traj.grid.edges.windows(2) {
        let h = win[1] - win[0];
        for (xi, wi) in x.iter().zip(&w) {
            let t = win[0] + h * xi;
            let s = traj.at(t)?;
            integral += h * wi * (grad(&s, 1).powi(2) + grad(&s, 2).powi(2));
            if let Some(f) = forcing {
                let fv = f.at(t)?;
                f_int += h * wi * fv.dot(&fv);
            }
        }
    }
    let g = &traj.states[0];
    let den = f_int + g.dot(g);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((sup + integral) / den)
}

/// Spatial test functionals for the weak form: `a_i = ⟨ψ, φ_i⟩_σ` and
/// `b_i = ⟨Lψ, Lφ_i⟩_σ + n⟨∇ψ, ∇φ_i⟩_{σ+1}`, by nodal quadrature.
fn weak_functionals(disc: &Discretization, n: f64, psi: &Field) -> (Vec<f64>, Vec<f64>) {
    let nodes = disc.nodes();
    let len = disc.len();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = nodes
        .par_iter()
        .zip(&disc.quad.weights)
        .map(|(z, qw)| {
            let rho = 0.5 * (1.0 - z.iter().map(|a| a * a).sum::<f64>());
            let l_of = |j: &Jet| {
                let g = j.gradient();
                -rho * j.laplacian().value()
                    + (disc.sigma + 1.0) * z.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
            };
            let pj = disc.eval_jet(psi, z, 2);
            let lpsi = l_of(&pj);
            let gpsi = pj.gradient();
            let mut a = vec![0.0; len];
            let mut b = vec![0.0; len];
            for (i, bj) in disc.basis_jets(z, 2).iter().enumerate() {
                let gb = bj.gradient();
                let dot: f64 = gpsi.iter().zip(&gb).map(|(x, y)| x * y).sum();
                a[i] = qw * pj.value() * bj.value();
                b[i] = qw * (lpsi * l_of(bj) + n * rho * dot);
            }
            (a, b)
        })
        .collect();
    let mut a = vec![0.0; len];
    let mut b = vec![0.0; len];
    for (pa, pb) in parts {
        for i in 0..len {
            a[i] += pa[i];
            b[i] += pb[i];
        }
    }
    (a, b)
}

/// Left minus right side of the weak formulation with test function `ζ = (1 − t/T)³ ψ(z)`:
/// `∫∫ −∂_tζ w + ⟨Lζ, Lw⟩_σ + n⟨∇ζ, ∇w⟩_{σ+1} − ζ f  −  ⟨ζ(0), g⟩_σ`.
pub fn weak_residual(
    traj: &Trajectory,
    forcing: Option<&Trajectory>,
    psi: &Field,
    disc: &Discretization,
    n: f64,
) -> Result<f64> {
    disc.check(psi)?;
    disc.check(&traj.states[0])?;
    let t_end = traj.horizon();
    let eta = |t: f64| (1.0 - t / t_end).powi(3);
    let deta = |t: f64| -3.0 * (1.0 - t / t_end).powi(2) / t_end;
    let (a, b) = weak_functionals(disc, n, psi);
    let dot = |v: &[f64], f: &Field| v.iter().zip(&f.coeffs).map(|(x, y)| x * y).sum::<f64>();
    let (x, w) = gauss_legendre(traj.grid.p + 6, 0.0, 1.0);
    let mut res = 0.0;
    for win in traj.grid.edges.windows(2) {
        let h = win[1] - win[0];
        for (xi, wi) in x.iter().zip(&w) {
            let t = win[0] + h * xi;
            let s = traj.at(t)?;
            let mut v = -deta(t) * dot(&a, &s) + eta(t) * dot(&b, &s);
            if let Some(f) = forcing {
                v -= eta(t) * dot(&a, &f.at(t)?);
            }
            res += h * wi * v;
        }
    }
    res -= eta(0.0) * dot(&a, &traj.states[0]);
    Ok(res)
}

/// Picard iteration settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Stop when the update is below `tol` times the iterate, in the surrogate norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Admissible size of the initial datum in `W^{1,∞}`.
    pub eps0: f64,
    pub forcing_tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            tol: 1e-10,
            max_iter: 20,
            eps0: 1e-2,
            forcing_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `‖w^{(m+1)} − w^{(m)}‖` in the surrogate norm.
    pub update_norms: Vec<f64>,
    /// Consecutive update ratios.
    pub ratios: Vec<f64>,
    pub converged: bool,
    /// Surrogate norm of the solution over `‖g‖_{W^{1,∞}}`.
    pub fitted_constant: f64,
    pub horizon: f64,
    pub lipschitz_g: f64,
    pub warnings: usize,
}

impl FixedPointReport {
    /// The first contraction ratio (the one least affected by rounding).
    pub fn contraction(&self) -> Option<f64> {
        self.ratios.first().copied()
    }
}

/// Context shared by the nonlinear solvers.
pub struct NonlinearProblem<'a> {
    pub disc: &'a Discretization,
    pub op: &'a SpectralOperator,
    pub params: &'a ModelParams,
    pub thresholds: Thresholds,
    pub norm: WhitneyNormConfig,
}

impl<'a> NonlinearProblem<'a> {
    pub fn new(disc: &'a Discretization, op: &'a SpectralOperator, params: &'a ModelParams) -> Self {
        NonlinearProblem {
            disc,
            op,
            params,
            thresholds: Thresholds::default(),
            norm: WhitneyNormConfig::coarse(params.dim),
        }
    }

    fn forcing(&self, w: &Trajectory) -> Result<(Trajectory, usize)> {
        let res: Result<Vec<(Field, bool)>> = w
            .states
            .par_iter()
            .map(|s| {
                let nl = nonlinearity(s, self.disc, self.op, self.params, &self.thresholds)?;
                Ok((nl.field, nl.warning))
            })
            .collect();
        let res = res?;
        let warnings = res.iter().filter(|r| r.1).count();
        let states = res.into_iter().map(|r| r.0).collect();
        Ok((Trajectory::new(w.grid.clone(), states, "forcing")?, warnings))
    }

    /// Surrogate of the `X(p) ∩ L^∞(W^{1,∞})` norm used inside the iteration.
    pub fn norm_of(&self, w: &Trajectory) -> Result<f64> {
        surrogate_norm(w, self.disc, &self.norm)
    }
}

/// Banach iteration `w^{(m+1)} = I(w^{(m)}, g)`: exact linear evolution with forcing `f[w^{(m)}]`.
pub fn solve_nonlinear_picard(
    prob: &NonlinearProblem,
    g: &Field,
    grid: &TimeGrid,
    cfg: &PicardConfig,
    initial: Option<&Trajectory>,
) -> Result<(Trajectory, FixedPointReport)> {
    let lip_g = lipschitz_norm(prob.disc, g, 64).0;
    if lip_g > cfg.eps0 {
        return invalid(format!(
            "‖g‖_W1∞ = {lip_g:.3e} exceeds the admissible size {:.1e}",
            cfg.eps0
        ));
    }
    let mut w = match initial {
        Some(t) => {
            if t.grid.times != grid.times {
                return invalid("initial iterate must live on the solver grid");
            }
            t.clone()
        }
        None => Trajectory::new(grid.clone(), vec![prob.disc.zeros(); grid.times.len()], "picard")?,
    };
    let mut report = FixedPointReport {
        iterations: 0,
        update_norms: Vec::new(),
        ratios: Vec::new(),
        converged: false,
        fitted_constant: 0.0,
        horizon: grid.horizon(),
        lipschitz_g: lip_g,
        warnings: 0,
    };
    let mut first_norm = None;
    for _ in 0..cfg.max_iter {
        let (f, warnings) = prob.forcing(&w)?;
        report.warnings += warnings;
        let next = evolve_linear_exact(prob.op, g, Some(&f), grid, cfg.forcing_tol)?;
        let delta = prob.norm_of(&next.sub(&w)?)?;
        let size = prob.norm_of(&next)?;
        report.iterations += 1;
        if let Some(prev) = report.update_norms.last() {
            if *prev > 0.0 {
                report.ratios.push(delta / prev);
            }
        }
        report.update_norms.push(delta);
        let first = *first_norm.get_or_insert(size);
        w = next;
        w.scheme = "picard".into();
        if size > 10.0 * first && first > 0.0 {
            return Err(Error::Divergence(format!(
                "iterate norm {size:.3e} exceeds ten times the first iterate {first:.3e}; report: {}",
                serde_json::to_string(&report).unwrap_or_default()
            )));
        }
        if delta <= cfg.tol * size || delta == 0.0 {
            report.converged = true;
            break;
        }
        if let Some(r) = report.ratios.last() {
            if *r >= 1.0 && delta > 1e3 * f64::EPSILON * size {
                return Err(Error::Divergence(format!(
                    "contraction ratio {r:.3} ≥ 1; report: {}",
                    serde_json::to_string(&report).unwrap_or_default()
                )));
            }
        }
    }
    report.fitted_constant = if lip_g > 0.0 { prob.norm_of(&w)? / lip_g } else { 0.0 };
    if !report.converged {
        return Err(Error::NoConvergence(format!(
            "Picard iteration stalled after {} iterations; report: {}",
            report.iterations,
            serde_json::to_string(&report).unwrap_or_default()
        )));
    }
    Ok((w, report))
}

/// IMEX stepping: linear part through the resolvent, `f[w]` explicit.
pub fn solve_nonlinear_semiimplicit(prob: &NonlinearProblem, g: &Field, t_end: f64, n_steps: usize) -> Result<Trajectory> {
    let grid = TimeGrid::uniform(t_end, n_steps)?;
    let h = t_end / n_steps as f64;
    let g_norm = g.norm();
    let mut states = vec![g.clone()];
    for j in 0..n_steps {
        let cur = &states[j];
        let f = nonlinearity(cur, prob.disc, prob.op, prob.params, &prob.thresholds)?;
        let next = prob.op.resolvent_solve(h, &cur.scale(1.0 / h).add(&f.field))?;
        let nn = next.norm();
        if !nn.is_finite() || nn > 10.0 * g_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence(format!(
                "semi-implicit norm {nn:.3e} exceeds ten times the initial norm at t = {}",
                grid.times[j + 1]
            )));
        }
        states.push(next);
    }
    Trajectory::new(grid, states, "semi-implicit")
}

/// Initial data for experiments.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    /// Eigenfunction of the given rank in the sorted spectrum (rank 1 is `φ₁`).
    Eigen { rank: usize, amplitude: f64 },
    /// `amplitude · z_axis`.
    Linear { axis: usize, amplitude: f64 },
    /// Transform of the stationary profile translated by `delta` along the first axis.
    Translated { delta: f64 },
    /// Random low-order polynomial scaled to `‖g‖_{W^{1,∞}} = amplitude`.
    Random {
        seed: u64,
        amplitude: f64,
        l_cap: usize,
        k_cap: usize,
        mean_zero: bool,
    },
}

impl InitialData {
    pub fn build(&self, disc: &Discretization, op: &SpectralOperator, p: &ModelParams) -> Result<Field> {
        match self {
            InitialData::Zero => Ok(disc.zeros()),
            InitialData::Eigen { rank, amplitude } => {
                let spec = op.spectrum();
                let e = spec
                    .get(*rank)
                    .ok_or_else(|| Error::Invalid(format!("rank {rank} beyond the spectrum")))?;
                let mut v = op.eigenfunction(e.index);
                // normalize the sign so that the eigenfunction is positive somewhere near z = e₁/2
                let mut probe = vec![0.0; disc.dim];
                probe[0] = 0.5;
                if disc.eval(&v, &probe) < 0.0 {
                    v = v.scale(-1.0);
                }
                Ok(v.scale(*amplitude))
            }
            InitialData::Linear { axis, amplitude } => {
                if *axis >= disc.dim {
                    return invalid(format!("axis {axis} out of range"));
                }
                Ok(disc.coordinate(*axis).scale(*amplitude))
            }
            InitialData::Translated { delta } => {
                if !(delta.abs() < 0.5) {
                    return invalid(format!("translation {delta} too large"));
                }
                let q = p.clone();
                forward_field(
                    move |x: &[f64]| {
                        let mut y = x.to_vec();
                        y[0] -= delta;
                        let r2: f64 = y.iter().map(|a| a * a).sum();
                        if r2 >= 1.0 {
                            0.0
                        } else {
                            confined_stationary(&y, &q)
                        }
                    },
                    disc,
                    p,
                    2.0,
                )
            }
            InitialData::Random {
                seed,
                amplitude,
                l_cap,
                k_cap,
                mean_zero,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut f = disc.zeros();
                for (m, mode) in disc.modes.iter().enumerate() {
                    if mode.l > *l_cap {
                        continue;
                    }
                    for k in 0..=(*k_cap).min(disc.k_max) {
                        f.coeffs[disc.index(m, k)] = rng.random_range(-1.0..1.0);
                    }
                }
                if *mean_zero {
                    f.coeffs[disc.constant_index()] = 0.0;
                }
                let lip = lipschitz_norm(disc, &f, 64).0;
                if lip == 0.0 {
                    return Ok(f);
                }
                Ok(f.scale(amplitude / lip))
            }
        }
    }
}
