//! Weighted Lebesgue and Sobolev norms, the Lipschitz norm, and the Whitney-measure norms
//! `X(p)` and `Y(p)` sampled over intrinsic parabolic cylinders.

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{Discretization, Field};
use crate::error::{invalid, Result};
use crate::evolution::Trajectory;
use crate::geometry::{center_lattice, dyadic_radii, theta, IntrinsicBall, Resolution};
use crate::jet::Jet;
use crate::quadrature::{gauss_legendre, BallQuadrature};
use crate::spectral::SpectralOperator;

/// A time-dependent field with time derivatives.
pub trait SpaceTimeField: Sync {
    fn horizon(&self) -> f64;
    /// Coefficients of `∂_t^k w(t)`.
    fn derivative_at(&self, t: f64, k: usize) -> Result<Field>;
}

impl SpaceTimeField for Trajectory {
    fn horizon(&self) -> f64 {
        Trajectory::horizon(self)
    }

    fn derivative_at(&self, t: f64, k: usize) -> Result<Field> {
        Trajectory::derivative_at(self, t, k)
    }
}

/// Homogeneous linear flow `e^{−t(L² + nL)} g` with exact time derivatives.
pub struct ExactFlow<'a> {
    pub op: &'a SpectralOperator,
    pub g_eigen: Vec<f64>,
    pub horizon: f64,
}

impl<'a> ExactFlow<'a> {
    pub fn new(op: &'a SpectralOperator, g: &Field, horizon: f64) -> Self {
        ExactFlow {
            op,
            g_eigen: op.to_eigen(g),
            horizon,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        ExactFlow {
            op: self.op,
            g_eigen: self.g_eigen.iter().map(|v| c * v).collect(),
            horizon: self.horizon,
        }
    }
}

impl SpaceTimeField for ExactFlow<'_> {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn derivative_at(&self, t: f64, k: usize) -> Result<Field> {
        let e: Vec<f64> = self
            .g_eigen
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mu = self.op.mu_at(i);
                (-mu).powi(k as i32) * (-mu * t).exp() * g
            })
            .collect();
        Ok(self.op.from_eigen(&e))
    }
}

/// Space-time field given by a closure `(t, k) ↦ ∂_t^k w(t)`.
pub struct FnField<F> {
    pub horizon: f64,
    pub f: F,
}

impl<F: Fn(f64, usize) -> Field + Sync> SpaceTimeField for FnField<F> {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn derivative_at(&self, t: f64, k: usize) -> Result<Field> {
        Ok((self.f)(t, k))
    }
}

fn rule_for(disc: &Discretization, weight: f64, extra: usize) -> Result<BallQuadrature> {
    if !(weight > -1.0) {
        return invalid(format!("weight exponent {weight} is not integrable (must exceed −1)"));
    }
    let l = if disc.dim == 1 { 1 } else { disc.l_max };
    BallQuadrature::new(disc.dim, weight, disc.k_max + l + 2 + extra, 3 * l + 3 + 2 * extra)
}

/// `‖f‖_{σ'} = (∫ f² ρ^{σ'} dz)^{1/2}`.
pub fn l2_sigma_norm(disc: &Discretization, f: &Field, sigma_prime: f64) -> Result<f64> {
    disc.check(f)?;
    let q = rule_for(disc, sigma_prime, 2)?;
    Ok(q.integrate(|z| disc.eval(f, z).powi(2)).sqrt())
}

/// `‖∇^m f‖_{a} = (∫ |∇^m f|² ρ^a dz)^{1/2}` with the Frobenius norm of the derivative tensor.
pub fn gradient_norm(disc: &Discretization, f: &Field, m: usize, weight: f64) -> Result<f64> {
    disc.check(f)?;
    if m > 4 {
        return invalid("derivative order above 4");
    }
    let q = rule_for(disc, weight, 2)?;
    Ok(q.integrate(|z| disc.eval_jet(f, z, m).tensor_norm(m).powi(2)).sqrt())
}

/// `(‖∇w‖_σ, ‖∇²w‖_{σ+2}, ‖∇³w‖_{σ+4}, ‖∇⁴w‖_{σ+6})`.
pub fn sobolev_seminorms(disc: &Discretization, f: &Field) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (m, o) in out.iter_mut().enumerate() {
        *o = gradient_norm(disc, f, m + 1, disc.sigma + 2.0 * m as f64)?;
    }
    Ok(out)
}

/// Polar evaluation lattice with `n` radial steps, including the origin and the boundary.
pub fn polar_lattice(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let n = n.max(1);
    if dim == 1 {
        return (-(n as i64)..=n as i64).map(|i| vec![i as f64 / n as f64]).collect();
    }
    let mut pts = vec![vec![0.0, 0.0]];
    for i in 1..=n {
        let r = i as f64 / n as f64;
        let na = 8 * i;
        for j in 0..na {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / na as f64;
            pts.push(vec![r * phi.cos(), r * phi.sin()]);
        }
    }
    pts
}

/// `(sup|f|, sup|∇f|)` over a polar lattice with `n` radial steps.
pub fn sup_norms(disc: &Discretization, f: &Field, n: usize) -> (f64, f64) {
    polar_lattice(disc.dim, n)
        .par_iter()
        .map(|z| {
            let j = disc.eval_jet(f, z, 1);
            let g: f64 = j.gradient().iter().map(|v| v * v).sum::<f64>().sqrt();
            (j.value().abs(), g)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)))
}

/// `‖f‖_{W^{1,∞}} = sup|f| + sup|∇f|` over a polar lattice; returns the value and the lattice spacing.
pub fn lipschitz_norm(disc: &Discretization, f: &Field, n: usize) -> (f64, f64) {
    let (a, b) = sup_norms(disc, f, n);
    (a + b, 1.0 / n.max(1) as f64)
}

/// `max|f| + max|∇f|` over the quadrature nodes.
pub fn nodal_lipschitz(disc: &Discretization, f: &Field) -> f64 {
    let (a, b) = disc
        .nodes()
        .iter()
        .map(|z| {
            let j = disc.eval_jet(f, z, 1);
            let g: f64 = j.gradient().iter().map(|v| v * v).sum::<f64>().sqrt();
            (j.value().abs(), g)
        })
        .fold((0.0f64, 0.0f64), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    a + b
}

/// Exponent triples `(ℓ, k, |β|)` of the solution norm.
pub const EXPONENTS: [(usize, usize, usize); 4] = [(0, 1, 0), (0, 0, 2), (1, 0, 3), (2, 0, 4)];

/// Sample sets for the Whitney norms.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyNormConfig {
    pub p: f64,
    pub radii: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    /// Window starts `T ≥ 1` of `Q(T) = (T, T+1) × B₁`.
    pub t_windows: Vec<f64>,
    /// Gauss–Legendre points per cylinder in time.
    pub n_time: usize,
    pub res: Resolution,
}

impl WhitneyNormConfig {
    pub fn default_for(dim: usize) -> Self {
        WhitneyNormConfig {
            p: if dim == 1 { 6.0 } else { 8.0 },
            radii: dyadic_radii(4),
            centers: center_lattice(dim, 4, 6, 8).unwrap_or_default(),
            t_windows: vec![1.0, 2.0, 4.0, 8.0],
            n_time: 4,
            res: Resolution {
                n_angular: 32,
                n_scan: 32,
                n_gauss: 6,
            },
        }
    }

    /// Cheap sampling for use inside iterations.
    pub fn coarse(dim: usize) -> Self {
        WhitneyNormConfig {
            p: if dim == 1 { 6.0 } else { 8.0 },
            radii: dyadic_radii(2),
            centers: center_lattice(dim, 2, 3, 4).unwrap_or_default(),
            t_windows: vec![1.0, 2.0],
            n_time: 3,
            res: Resolution {
                n_angular: 12,
                n_scan: 12,
                n_gauss: 4,
            },
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.p > 1.0) {
            return invalid(format!("integrability exponent must exceed 1, got {}", self.p));
        }
        if self.radii.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return invalid("radii must lie in (0, 1]");
        }
        if self.centers.iter().any(|c| c.len() != dim || c.iter().map(|v| v * v).sum::<f64>() > 1.0 + 1e-12) {
            return invalid("centers must be points of the closed unit ball");
        }
        if self.t_windows.iter().any(|t| !(*t >= 1.0)) {
            return invalid("window starts must be at least 1");
        }
        if self.n_time == 0 {
            return invalid("at least one time point per cylinder");
        }
        Ok(())
    }
}

/// Supremum of one term together with its maximizer.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyTerm {
    /// `(ℓ, k, |β|)`, or `None` for the forcing norm.
    pub exponent: Option<(usize, usize, usize)>,
    pub local_sup: f64,
    pub local_argmax: Option<(f64, Vec<f64>)>,
    pub window_sup: f64,
    pub window_argmax: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyNorm {
    pub total: f64,
    pub terms: Vec<WhitneyTerm>,
    pub p: f64,
    pub skipped_cylinders: usize,
    pub skipped_windows: usize,
    /// Aggregation over `|β|`: pointwise sum of `|∂^β w|` over distinct multi-indices.
    pub beta_aggregation: &'static str,
}

/// Space points and Lebesgue weights of a set, with basis jets precomputed.
struct SpatialRule {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    jets: Vec<Vec<Jet>>,
    volume: f64,
}

impl SpatialRule {
    fn new(disc: &Discretization, rule: Vec<(Vec<f64>, f64)>, order: usize) -> Self {
        let volume = rule.iter().map(|(_, w)| w).sum();
        let jets = rule.iter().map(|(z, _)| disc.basis_jets(z, order)).collect();
        let (points, weights) = rule.into_iter().unzip();
        SpatialRule {
            points,
            weights,
            jets,
            volume,
        }
    }

    fn combine(&self, q: usize, f: &Field) -> Jet {
        let mut it = self.jets[q].iter().zip(&f.coeffs);
        let (j0, c0) = it.next().unwrap();
        let mut out = j0.scale(*c0);
        for (j, c) in it {
            if *c != 0.0 {
                out = &out + &j.scale(*c);
            }
        }
        out
    }
}

/// Integrals `∫∫ |ρ^ℓ ∂_t^k ∂^β w|^p` of all requested terms over `(a, b) × rule`.
fn cylinder_integrals<F: SpaceTimeField + ?Sized>(
    w: &F,
    rule: &SpatialRule,
    a: f64,
    b: f64,
    n_time: usize,
    p: f64,
    terms: &[(usize, usize, usize)],
) -> Result<Vec<f64>> {
    let (tx, tw) = gauss_legendre(n_time, a, b);
    let mut acc = vec![0.0; terms.len()];
    for (t, wt) in tx.iter().zip(&tw) {
        let fields: Vec<Field> = (0..=1).map(|k| w.derivative_at(*t, k)).collect::<Result<_>>()?;
        for q in 0..rule.points.len() {
            let z = &rule.points[q];
            let rho = (0.5 * (1.0 - z.iter().map(|v| v * v).sum::<f64>())).max(0.0);
            let jets = [rule.combine(q, &fields[0]), rule.combine(q, &fields[1])];
            for (i, (l, k, beta)) in terms.iter().enumerate() {
                let d = jets[*k].multi_index_sum(*beta);
                acc[i] += wt * rule.weights[q] * (rho.powi(*l as i32) * d).powf(p);
            }
        }
    }
    Ok(acc)
}

fn whitney<F: SpaceTimeField + ?Sized>(
    w: &F,
    disc: &Discretization,
    cfg: &WhitneyNormConfig,
    terms: &[(usize, usize, usize)],
    weight: impl Fn(&(usize, usize, usize), f64, f64) -> f64 + Sync,
) -> Result<(Vec<WhitneyTerm>, usize, usize)> {
    cfg.validate(disc.dim)?;
    let horizon = w.horizon();
    let p = cfg.p;
    let samples: Vec<(f64, &Vec<f64>)> = cfg
        .radii
        .iter()
        .flat_map(|r| cfg.centers.iter().map(move |z| (*r, z)))
        .collect();
    let usable: Vec<&(f64, &Vec<f64>)> = samples.iter().filter(|(r, _)| r.powi(4) <= horizon).collect();
    let skipped_cylinders = samples.len() - usable.len();
    let local: Vec<Result<Vec<f64>>> = usable
        .par_iter()
        .map(|(r, z)| {
            let ball = IntrinsicBall::new(z, *r)?;
            let rule = SpatialRule::new(disc, ball.quadrature(0.0, &cfg.res), 4);
            let (a, b) = (r.powi(4) / 2.0, r.powi(4));
            let ints = cylinder_integrals(w, &rule, a, b, cfg.n_time, p, terms)?;
            let q_vol = (b - a) * rule.volume;
            let th = theta(*r, z)?;
            Ok(ints
                .iter()
                .zip(terms)
                .map(|(v, e)| weight(e, *r, th) * (v / q_vol).powf(1.0 / p))
                .collect())
        })
        .collect();
    let usable_windows: Vec<f64> = cfg.t_windows.iter().copied().filter(|t| t + 1.0 <= horizon).collect();
    let skipped_windows = cfg.t_windows.len() - usable_windows.len();
    let window: Vec<Result<Vec<f64>>> = if usable_windows.is_empty() {
        Vec::new()
    } else {
        let l = if disc.dim == 1 { 1 } else { disc.l_max };
        let q = BallQuadrature::new(disc.dim, 0.0, 2 * (disc.k_max + l) + 8, 4 * l + 16)?;
        let rule = SpatialRule::new(
            disc,
            q.nodes.iter().zip(&q.weights).map(|(z, w)| (z[..disc.dim].to_vec(), *w)).collect(),
            4,
        );
        usable_windows
            .par_iter()
            .map(|t| {
                let ints = cylinder_integrals(w, &rule, *t, t + 1.0, cfg.n_time, p, terms)?;
                Ok(ints.iter().map(|v| t * v.powf(1.0 / p)).collect())
            })
            .collect()
    };
    let mut out: Vec<WhitneyTerm> = terms
        .iter()
        .map(|e| WhitneyTerm {
            exponent: Some(*e),
            local_sup: 0.0,
            local_argmax: None,
            window_sup: 0.0,
            window_argmax: None,
        })
        .collect();
    for (vals, (r, z)) in local.into_iter().zip(&usable) {
        for (term, v) in out.iter_mut().zip(vals?) {
            if v > term.local_sup || term.local_argmax.is_none() {
                term.local_sup = v;
                term.local_argmax = Some((*r, (*z).clone()));
            }
        }
    }
    for (vals, t) in window.into_iter().zip(&usable_windows) {
        for (term, v) in out.iter_mut().zip(vals?) {
            if v > term.window_sup || term.window_argmax.is_none() {
                term.window_sup = v;
                term.window_argmax = Some(*t);
            }
        }
    }
    Ok((out, skipped_cylinders, skipped_windows))
}

/// Sampled `X(p)` norm with per-term breakdown.
pub fn x_norm<F: SpaceTimeField + ?Sized>(w: &F, disc: &Discretization, cfg: &WhitneyNormConfig) -> Result<WhitneyNorm> {
    let (terms, sc, sw) = whitney(w, disc, cfg, &EXPONENTS, |(l, k, b), r, th| {
        r.powi(4 * *k as i32 + *b as i32 - 1) / th.powi(2 * *l as i32 - *b as i32 + 1)
    })?;
    let total = terms.iter().map(|t| t.local_sup + t.window_sup).sum();
    Ok(WhitneyNorm {
        total,
        terms,
        p: cfg.p,
        skipped_cylinders: sc,
        skipped_windows: sw,
        beta_aggregation: "sum",
    })
}

/// Sampled `Y(p)` norm of a forcing.
pub fn y_norm<F: SpaceTimeField + ?Sized>(f: &F, disc: &Discretization, cfg: &WhitneyNormConfig) -> Result<WhitneyNorm> {
    let (mut terms, sc, sw) = whitney(f, disc, cfg, &[(0, 0, 0)], |_, r, th| r.powi(3) / th)?;
    terms[0].exponent = None;
    let total = terms[0].local_sup + terms[0].window_sup;
    Ok(WhitneyNorm {
        total,
        terms,
        p: cfg.p,
        skipped_cylinders: sc,
        skipped_windows: sw,
        beta_aggregation: "sum",
    })
}

/// Max over stored time slices of the nodal `W^{1,∞}` norm plus the sampled `X(p)` norm.
pub fn surrogate_norm(traj: &Trajectory, disc: &Discretization, cfg: &WhitneyNormConfig) -> Result<f64> {
    let lip = traj
        .states
        .par_iter()
        .map(|s| nodal_lipschitz(disc, s))
        .reduce(|| 0.0, f64::max);
    if lip == 0.0 {
        return Ok(0.0);
    }
    Ok(lip + x_norm(traj, disc, cfg)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::TimeGrid;
    use crate::spectral::Power;

    #[test]
    fn gradient_of_coordinate() {
        let d = Discretization::new(1, 1.0, 1, 4).unwrap();
        let z = d.coordinate(0);
        let s = sobolev_seminorms(&d, &z).unwrap();
        assert!((s[0] * s[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!(s[1..].iter().all(|v| v.abs() < 1e-13));
        let c = d.project(|_| 2.0);
        assert!(sobolev_seminorms(&d, &c).unwrap().iter().all(|v| v.abs() < 1e-13));
        assert!(l2_sigma_norm(&d, &z, -1.0).is_err());
        // ‖z‖²_σ' = ∫ z² ρ^{σ'}; σ' = 0: 2/3
        assert!((l2_sigma_norm(&d, &z, 0.0).unwrap().powi(2) - 2.0 / 3.0).abs() < 1e-14);
        assert!((l2_sigma_norm(&d, &z, 1.0).unwrap() - z.norm()).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_examples() {
        let d = Discretization::new(2, 1.0, 2, 3).unwrap();
        let c = d.project(|_| -0.7);
        assert!((lipschitz_norm(&d, &c, 16).0 - 0.7).abs() < 1e-13);
        let z = d.coordinate(0);
        assert!((lipschitz_norm(&d, &z, 16).0 - 2.0).abs() < 1e-13);
        let rho = d.project(|z| 0.5 * (1.0 - z[0] * z[0] - z[1] * z[1]));
        assert!((lipschitz_norm(&d, &rho, 16).0 - 1.5).abs() < 1e-13);
    }

    #[test]
    fn maximal_regularity_ratio_is_bounded() {
        let d = Discretization::new(2, 1.0, 3, 4).unwrap();
        let op = SpectralOperator::build(&d, 2.0).unwrap();
        let mut worst: f64 = 0.0;
        for s in 0..10u64 {
            let mut f = d.zeros();
            for (i, c) in f.coeffs.iter_mut().enumerate() {
                *c = ((i as f64 + 1.3) * (s as f64 + 0.7)).sin();
            }
            f.coeffs[d.constant_index()] = 0.0;
            let sn = sobolev_seminorms(&d, &f).unwrap();
            let lf = op.apply(&f, Power::First).unwrap().norm();
            worst = worst.max((sn[0] + sn[1]) / lf);
        }
        assert!(worst.is_finite() && worst < 10.0, "{worst}");
    }

    #[test]
    fn x_norm_of_constant_is_zero_and_homogeneous() {
        let d = Discretization::new(1, 1.0, 1, 6).unwrap();
        let op = SpectralOperator::build(&d, 1.0).unwrap();
        let cfg = WhitneyNormConfig::coarse(1);
        let c = ExactFlow::new(&op, &d.project(|_| 1.0), 3.5);
        assert!(x_norm(&c, &d, &cfg).unwrap().total < 1e-12);
        let g = d.project(|z| z[0] - 0.2 * z[0].powi(3));
        let flow = ExactFlow::new(&op, &g, 3.5);
        let a = x_norm(&flow, &d, &cfg).unwrap();
        let b = x_norm(&flow.scaled(-3.0), &d, &cfg).unwrap();
        assert!((b.total - 3.0 * a.total).abs() <= 1e-12 * b.total);
        assert_eq!(a.skipped_windows, 0);
        assert!(a.terms.iter().all(|t| t.local_argmax.is_some()));
    }

    #[test]
    fn skipped_samples_are_reported() {
        let d = Discretization::new(1, 1.0, 1, 4).unwrap();
        let op = SpectralOperator::build(&d, 1.0).unwrap();
        let flow = ExactFlow::new(&op, &d.coordinate(0), 0.01);
        let r = x_norm(&flow, &d, &WhitneyNormConfig::coarse(1)).unwrap();
        assert!(r.skipped_cylinders > 0);
        assert_eq!(r.skipped_windows, 2);
    }

    #[test]
    fn trajectory_and_exact_flow_agree() {
        let d = Discretization::new(1, 1.0, 1, 6).unwrap();
        let op = SpectralOperator::build(&d, 1.0).unwrap();
        let g = d.project(|z| z[0] * z[0] - 0.1 * z[0]);
        let grid = TimeGrid::chebyshev(3.5, 40, 8).unwrap();
        let tr = crate::evolution::evolve_linear_exact(&op, &g, None, &grid, 1e-4).unwrap();
        let flow = ExactFlow::new(&op, &g, 3.5);
        let cfg = WhitneyNormConfig::coarse(1);
        let a = x_norm(&tr, &d, &cfg).unwrap().total;
        let b = x_norm(&flow, &d, &cfg).unwrap().total;
        assert!((a - b).abs() < 1e-4 * b, "{a} {b}");
    }

    #[test]
    fn y_norm_of_zero_forcing() {
        let d = Discretization::new(1, 1.0, 1, 4).unwrap();
        let f = FnField {
            horizon: 3.0,
            f: |_: f64, _: usize| d.zeros(),
        };
        assert_eq!(y_norm(&f, &d, &WhitneyNormConfig::coarse(1)).unwrap().total, 0.0);
    }
}
