use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use thinfilm::basis::{Discretization, Field};
use thinfilm::diagnostics::{
    analyticity_ratios, fit_exponential, free_boundary, free_boundary_deviation, mean_deviation, measure_decay_rate,
    verify_cz_kernel_bound, verify_gaussian_bound, CzSampleSpec, FitReport, GaussianSampleSpec,
};
use thinfilm::evolution::{
    evolve_linear_euler, evolve_linear_exact, solve_nonlinear_picard, solve_nonlinear_semiimplicit, NonlinearProblem,
    TimeGrid, Trajectory,
};
use thinfilm::geometry::{doubling_ratio, sandwich, volume_ratio, IntrinsicBall, Resolution};
use thinfilm::norms::{
    lipschitz_norm, polar_lattice, sobolev_seminorms, x_norm, y_norm, ExactFlow, WhitneyNorm, EXPONENTS,
};
use thinfilm::spectral::{exact_eigenvalue, HeatKernel, SpectralOperator};
use thinfilm::transform::{inverse, nonlinearity, transformed_operator, Thresholds};

use crate::config::{RunConfig, Scheme};
use crate::output::Output;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Geometry,
    Kernel,
    Decay,
    Cz,
    Analyticity,
    Boundary,
}

fn coord_names(dim: usize, prefix: &str) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

fn profile_points(dim: usize, n: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        (0..=2 * n).map(|i| vec![-1.0 + i as f64 / n as f64]).collect()
    } else {
        polar_lattice(2, n)
    }
}

pub fn spectrum(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (d, op, _) = out.time("build", || cfg.discretization())?;
    let spec = op.spectrum();
    let rows: Vec<Vec<f64>> = spec
        .iter()
        .map(|e| {
            vec![
                e.index as f64,
                e.l as f64,
                e.k as f64,
                e.lambda,
                e.mu,
                exact_eigenvalue(d.dim, d.sigma, e.l, e.k),
            ]
        })
        .collect();
    let cols = ["index", "l", "k", "lambda", "mu", "lambda_exact"].map(String::from);
    out.csv("spectrum.csv", "spectrum", &cols, &rows)?;
    let (res_l, res_g) = op.eigen_residuals();
    out.json(
        "summary.json",
        &json!({"lambda_1": op.lambda_1(), "mu_1": op.mu_1(), "size": op.len(),
                "eigen_residual": res_l, "gram_residual": res_g}),
    )
}

fn write_trajectory(out: &mut Output, d: &Discretization, cfg: &RunConfig, tr: &Trajectory) -> Result<(), CliError> {
    let dev = mean_deviation(d, &tr.states);
    let rows: Vec<Vec<f64>> = tr
        .grid
        .times
        .iter()
        .zip(&tr.states)
        .zip(&dev)
        .map(|((t, s), m)| vec![*t, s.norm(), *m, s.max_abs()])
        .collect();
    let cols = ["t", "coeff_norm", "mean_deviation", "coeff_max"].map(String::from);
    out.csv("trajectory.csv", "trajectory", &cols, &rows)?;
    let mut cols = vec!["t".to_string()];
    cols.extend((0..d.len()).map(|i| format!("c{i}")));
    let rows: Vec<Vec<f64>> = tr
        .grid
        .times
        .iter()
        .zip(&tr.states)
        .map(|(t, s)| std::iter::once(*t).chain(s.coeffs.iter().copied()).collect())
        .collect();
    out.csv("coefficients.csv", "coefficients", &cols, &rows)?;
    write_profile(out, d, cfg, tr.last(), "profile.csv")
}

fn write_profile(out: &mut Output, d: &Discretization, cfg: &RunConfig, w: &Field, name: &str) -> Result<(), CliError> {
    let p = cfg.params()?;
    let mut cols = coord_names(d.dim, "z");
    cols.push("w".into());
    cols.extend(coord_names(d.dim, "x"));
    cols.push("u".into());
    let mut rows = Vec::new();
    for z in profile_points(d.dim, cfg.output.profile_points) {
        let jet = d.eval_jet(w, &z, 1);
        let (s, _) = inverse(&z, &jet, &p)?;
        let mut row = z.clone();
        row.push(s.w);
        row.extend(&s.x);
        row.push(s.u);
        rows.push(row);
    }
    out.csv(name, "profile", &cols, &rows)
}

pub fn evolve_linear(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (d, op, p) = cfg.discretization()?;
    let g = cfg.initial.build(&d, &op, &p)?;
    let e = &cfg.evolution;
    let tr = match e.scheme.unwrap_or(Scheme::Exact) {
        Scheme::Exact => {
            let grid = cfg.time_grid(e.horizon)?;
            out.time("evolve", || evolve_linear_exact(&op, &g, None, &grid, e.forcing_tol))?
        }
        Scheme::Euler => out.time("evolve", || evolve_linear_euler(&op, &g, None, e.horizon, e.steps))?,
        s => return Err(CliError::Invalid(format!("scheme {s:?} is not a linear scheme (use exact or euler)"))),
    };
    write_trajectory(out, &d, cfg, &tr)?;
    out.json(
        "summary.json",
        &json!({"scheme": tr.scheme, "horizon": tr.horizon(), "final_norm": tr.last().norm(),
                "lambda_1": op.lambda_1(), "mu_1": op.mu_1()}),
    )
}

pub fn evolve_nonlinear(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (d, op, p) = cfg.discretization()?;
    let g = cfg.initial.build(&d, &op, &p)?;
    let prob = NonlinearProblem::new(&d, &op, &p);
    let e = &cfg.evolution;
    let tr = match e.scheme.unwrap_or(Scheme::Picard) {
        Scheme::Picard => {
            let grid = cfg.time_grid(e.horizon)?;
            let (tr, rep) = out.time("evolve", || solve_nonlinear_picard(&prob, &g, &grid, &cfg.picard(), None))?;
            let rows: Vec<Vec<f64>> = rep
                .update_norms
                .iter()
                .enumerate()
                .map(|(i, u)| vec![(i + 1) as f64, *u, if i == 0 { f64::NAN } else { rep.ratios[i - 1] }])
                .collect();
            let cols = ["iteration", "update_norm", "ratio"].map(String::from);
            out.csv("picard.csv", "picard", &cols, &rows)?;
            out.json("picard.json", &rep)?;
            tr
        }
        Scheme::SemiImplicit => out.time("evolve", || solve_nonlinear_semiimplicit(&prob, &g, e.horizon, e.steps))?,
        s => {
            return Err(CliError::Invalid(format!(
                "scheme {s:?} is not a nonlinear scheme (use picard or semi-implicit)"
            )))
        }
    };
    write_trajectory(out, &d, cfg, &tr)?;
    let rows: Vec<Vec<f64>> = tr
        .grid
        .times
        .iter()
        .zip(&tr.states)
        .map(|(t, s)| vec![*t, free_boundary_deviation(&d, s, cfg.verify.n_dirs)])
        .collect();
    out.csv("free_boundary.csv", "free_boundary_deviation", &["t".into(), "deviation".into()], &rows)?;
    out.json(
        "summary.json",
        &json!({"scheme": tr.scheme, "horizon": tr.horizon(), "final_norm": tr.last().norm()}),
    )
}

pub fn transform(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (d, op, p) = cfg.discretization()?;
    let w = cfg.initial.build(&d, &op, &p)?;
    let nl = out.time("nonlinearity", || nonlinearity(&w, &d, &op, &p, &Thresholds::default()))?;
    let mut cols = coord_names(d.dim, "z");
    cols.extend(["w", "T", "f"].map(String::from));
    let mut rows = Vec::new();
    for (z, f) in d.nodes().iter().zip(&nl.nodal) {
        let jet = d.eval_jet(&w, z, 4);
        let mut row = z.clone();
        row.push(jet.value());
        row.push(transformed_operator(z, &jet, &p)?);
        row.push(*f);
        rows.push(row);
    }
    out.csv("nodes.csv", "transform_nodes", &cols, &rows)?;
    write_profile(out, &d, cfg, &w, "profile.csv")?;
    let fb = free_boundary(&d, &w, &p, cfg.verify.n_dirs)?;
    let cols = coord_names(d.dim, "x");
    let rows: Vec<Vec<f64>> = fb.points.iter().flatten().cloned().collect();
    out.csv("free_boundary.csv", "free_boundary", &cols, &rows)?;
    out.json(
        "summary.json",
        &json!({"min_denominator": nl.min_denominator, "lipschitz": nl.lipschitz, "warning": nl.warning,
                "f_norm": nl.field.norm(), "free_boundary_deviation": free_boundary_deviation(&d, &w, cfg.verify.n_dirs)}),
    )
}

fn norm_rows(n: &WhitneyNorm) -> Vec<Vec<f64>> {
    n.terms
        .iter()
        .map(|t| {
            let (l, k, b) = t.exponent.map_or((f64::NAN, f64::NAN, f64::NAN), |(l, k, b)| {
                (l as f64, k as f64, b as f64)
            });
            vec![l, k, b, t.local_sup, t.window_sup]
        })
        .collect()
}

pub fn norms(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (d, op, p) = cfg.discretization()?;
    let g = cfg.initial.build(&d, &op, &p)?;
    let wcfg = cfg.whitney();
    let flow = ExactFlow::new(&op, &g, cfg.norms.horizon);
    let x = out.time("x_norm", || x_norm(&flow, &d, &wcfg))?;
    let cols = ["l", "k", "beta", "local_sup", "window_sup"].map(String::from);
    out.csv("x_terms.csv", "whitney_terms", &cols, &norm_rows(&x))?;
    let mut summary = json!({
        "x_norm": x,
        "lipschitz_g": lipschitz_norm(&d, &g, 64).0,
        "sobolev_seminorms_g": sobolev_seminorms(&d, &g)?,
    });
    if p.is_thin_film() {
        // forcing along the linear flow, sampled on a time grid covering the windows
        let grid = TimeGrid::chebyshev(cfg.norms.horizon, (4.0 * cfg.norms.horizon).ceil() as usize, 8)?;
        let thr = Thresholds::default();
        let forcing = out.time("forcing", || {
            Trajectory::sample(&grid, |t| Ok(nonlinearity(&op.semigroup(t, &g), &d, &op, &p, &thr)?.field))
        })?;
        let y = out.time("y_norm", || y_norm(&forcing, &d, &wcfg))?;
        out.csv("y_terms.csv", "whitney_terms", &cols, &norm_rows(&y))?;
        summary["y_norm_forcing"] = serde_json::to_value(&y).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    out.json("norms.json", &summary)
}

pub fn verify(cfg: &RunConfig, out: &mut Output, suite: Suite) -> Result<bool, CliError> {
    match suite {
        Suite::Geometry => verify_geometry(cfg, out),
        Suite::Kernel => verify_kernel(cfg, out),
        Suite::Decay => verify_decay(cfg, out),
        Suite::Cz => verify_cz(cfg, out),
        Suite::Analyticity => verify_analyticity(cfg, out),
        Suite::Boundary => verify_boundary(cfg, out),
    }
}

fn report(out: &mut Output, r: &FitReport) -> Result<bool, CliError> {
    out.json("report.json", r)?;
    Ok(r.passed)
}

fn verify_geometry(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let dim = cfg.model.dim;
    let sigma = cfg.model.sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verify.seed);
    let coarse = Resolution::default();
    let fine = coarse.refined();
    let mut rows = Vec::new();
    for _ in 0..cfg.verify.n_balls {
        let z: Vec<f64> = if dim == 1 {
            vec![rng.random_range(-1.0..1.0)]
        } else {
            let r0: f64 = rng.random_range(0.0..1.0f64).sqrt();
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            vec![r0 * phi.cos(), r0 * phi.sin()]
        };
        let r = 10f64.powf(rng.random_range(-3.0..0.0));
        let shrink: f64 = rng.random_range(0.0..0.5);
        let z2: Vec<f64> = z.iter().map(|v| v * (1.0 - shrink)).collect();
        let ball = IntrinsicBall::new(&z, r)?;
        let mut row = z.clone();
        row.push(r);
        for res in [&coarse, &fine] {
            let s = sandwich(&ball, res);
            row.extend([
                volume_ratio(&ball, sigma, res)?,
                s.c_low,
                s.c_high,
                doubling_ratio(&z, &z2, r, sigma, res)?,
            ]);
        }
        rows.push(row);
    }
    let mut cols = coord_names(dim, "z");
    cols.push("r".into());
    for tag in ["", "_refined"] {
        cols.extend(["volume_ratio", "c_low", "c_high", "doubling"].map(|c| format!("{c}{tag}")));
    }
    out.csv("balls.csv", "geometry", &cols, &rows)?;
    let base = dim + 1;
    let mut r = FitReport::new("geometry", json!({"n_balls": cfg.verify.n_balls, "seed": cfg.verify.seed}));
    let mut ok = true;
    for (i, name) in ["volume_ratio", "c_low", "c_high", "doubling"].iter().enumerate() {
        let col = |j: usize| -> (f64, f64) {
            let vals = rows.iter().map(|row| row[j]);
            let max = vals.clone().fold(0.0, f64::max);
            let min = vals.fold(f64::INFINITY, f64::min);
            (min, max)
        };
        let (lo, a) = col(base + i);
        let (_, b) = col(base + 4 + i);
        let drift = if b > 0.0 { (a - b).abs() / b } else { 0.0 };
        ok &= a.is_finite() && b.is_finite() && drift < 0.1;
        r.constants.insert(format!("{name}_min"), lo);
        r.constants.insert(format!("{name}_max"), a);
        r.constants.insert(format!("{name}_max_refined"), b);
        r.constants.insert(format!("{name}_drift"), drift);
    }
    r.passed = ok;
    report(out, &r)
}

fn verify_kernel(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let (d, op, _) = cfg.discretization()?;
    let k = HeatKernel::new(&op, &d);
    let spec = GaussianSampleSpec::new(cfg.verify.n_points);
    let a = out.time("gaussian", || verify_gaussian_bound(&k, &spec))?;
    let b = out.time("gaussian_refined", || verify_gaussian_bound(&k, &spec.refined()))?;
    let pts = profile_points(d.dim, 4);
    let mut sym: f64 = 0.0;
    let mut mass: f64 = 0.0;
    for t in [1e-2, 1e-1, 1.0] {
        for z in &pts {
            for z2 in &pts {
                sym = sym.max((k.eval(t, z, z2)?.value - k.eval(t, z2, z)?.value).abs());
            }
            let sec = k.section(t, z, 0);
            let m: f64 = d.nodal_values(&sec).iter().zip(&d.quad.weights).map(|(v, w)| v * w).sum();
            mass = mass.max((m - 1.0).abs());
        }
    }
    let (c0, c1) = (a.constant("C").unwrap_or(f64::NAN), b.constant("C").unwrap_or(f64::NAN));
    let drift = (c1 - c0).abs() / c0.abs();
    let mut r = b.clone();
    r.quantity = "heat_kernel".into();
    r.constants.insert("C_coarse".into(), c0);
    r.constants.insert("C_drift".into(), drift);
    r.constants.insert("symmetry_defect".into(), sym);
    r.constants.insert("mass_defect".into(), mass);
    r.passed = a.passed && b.passed && drift < 0.1 && mass <= 1e-10;
    report(out, &r)
}

fn linear_run(cfg: &RunConfig, op: &SpectralOperator, g: &Field) -> Result<Trajectory, CliError> {
    let grid = cfg.time_grid(cfg.verify.horizon)?;
    Ok(evolve_linear_exact(op, g, None, &grid, cfg.evolution.forcing_tol)?)
}

fn verify_decay(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let (d, op, p) = cfg.discretization()?;
    let g = cfg.initial.build(&d, &op, &p)?;
    let tr = out.time("evolve", || linear_run(cfg, &op, &g))?;
    let dev = mean_deviation(&d, &tr.states);
    let rows: Vec<Vec<f64>> = tr.grid.times.iter().zip(&dev).map(|(t, v)| vec![*t, *v]).collect();
    out.csv("deviation.csv", "mean_deviation", &["t".into(), "deviation".into()], &rows)?;
    let mut r = measure_decay_rate(&tr.grid.times, &tr.states, &d, &op, cfg.verify.t_start, 1e-3)?;
    if let Some(rate) = r.constant("rate") {
        r.constants.insert("rate_over_mu_1".into(), rate / op.mu_1());
    }
    report(out, &r)
}

fn verify_cz(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let (d, op, _) = cfg.discretization()?;
    let k = HeatKernel::new(&op, &d);
    let spec = CzSampleSpec::new(cfg.verify.n_points);
    let mut all = FitReport::new("cz_kernel", json!({"n_points": spec.n_points, "time_gaps": spec.time_gaps}));
    let mut ok = true;
    let mut rows = Vec::new();
    for e in EXPONENTS {
        let a = verify_cz_kernel_bound(&k, e, &spec, cfg.verify.ceiling)?;
        let b = verify_cz_kernel_bound(&k, e, &spec.refined(), cfg.verify.ceiling)?;
        let (sa, sb) = (a.constant("sup").unwrap_or(f64::NAN), b.constant("sup").unwrap_or(f64::NAN));
        let drift = (sb - sa).abs() / sb;
        ok &= a.passed && b.passed && drift < 0.1;
        let tag = format!("l{}_k{}_b{}", e.0, e.1, e.2);
        all.constants.insert(format!("sup_{tag}"), sb);
        all.constants.insert(format!("drift_{tag}"), drift);
        rows.push(vec![
            e.0 as f64,
            e.1 as f64,
            e.2 as f64,
            sa,
            sb,
            b.constant("sup_near_boundary").unwrap_or(f64::NAN),
            b.constant("sup_interior").unwrap_or(f64::NAN),
        ]);
    }
    let cols = ["l", "k", "beta", "sup", "sup_refined", "sup_near_boundary", "sup_interior"].map(String::from);
    out.csv("cz.csv", "cz_kernel", &cols, &rows)?;
    all.ceiling = Some(cfg.verify.ceiling);
    all.passed = ok;
    report(out, &all)
}

fn verify_analyticity(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let (d, op, p) = cfg.discretization()?;
    let g = cfg.initial.build(&d, &op, &p)?;
    let flow = ExactFlow::new(&op, &g, cfg.verify.horizon);
    let r = analyticity_ratios(&flow, &d, cfg.verify.t_analytic, 5, cfg.output.profile_points, cfg.verify.ceiling)?;
    let rows: Vec<Vec<f64>> = r.sequence.iter().enumerate().map(|(k, v)| vec![(k + 1) as f64, *v]).collect();
    out.csv("ratios.csv", "analyticity", &["k".into(), "ratio".into()], &rows)?;
    report(out, &r)
}

fn verify_boundary(cfg: &RunConfig, out: &mut Output) -> Result<bool, CliError> {
    let (d, op, p) = cfg.discretization()?;
    let g = cfg.initial.build(&d, &op, &p)?;
    let prob = NonlinearProblem::new(&d, &op, &p);
    let h = cfg.verify.horizon;
    let grid = cfg.time_grid(h)?;
    let (tr, rep) = out.time("evolve", || solve_nonlinear_picard(&prob, &g, &grid, &cfg.picard(), None))?;
    let n_dirs = cfg.verify.n_dirs;
    let (t, dev): (Vec<f64>, Vec<f64>) = tr
        .grid
        .times
        .iter()
        .zip(&tr.states)
        .map(|(t, s)| (*t, free_boundary_deviation(&d, s, n_dirs)))
        .unzip();
    let rows: Vec<Vec<f64>> = t.iter().zip(&dev).map(|(a, b)| vec![*a, *b]).collect();
    out.csv("free_boundary.csv", "free_boundary_deviation", &["t".into(), "deviation".into()], &rows)?;
    let (tf, df): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(&dev)
        .filter(|(t, d)| **t >= cfg.verify.t_start && **d > 0.0)
        .map(|(a, b)| (*a, *b))
        .unzip();
    let mut r = FitReport::new("free_boundary", json!({"horizon": h, "n_dirs": n_dirs, "t_start": cfg.verify.t_start}));
    r.constants.insert("mu_1".into(), op.mu_1());
    r.constants.insert("picard_iterations".into(), rep.iterations as f64);
    r.sequence = dev.clone();
    match fit_exponential(&tf, &df) {
        Ok((rate, icpt)) => {
            r.constants.insert("rate".into(), rate);
            r.constants.insert("intercept".into(), icpt);
            r.passed = rep.converged && ((rate - op.mu_1()) / op.mu_1()).abs() < 0.1;
        }
        Err(_) => r.passed = rep.converged && dev.iter().all(|v| *v == 0.0),
    }
    let fb = free_boundary(&d, tr.last(), &p, n_dirs)?;
    let rows: Vec<Vec<f64>> = fb.points.iter().flatten().cloned().collect();
    out.csv("free_boundary_final.csv", "free_boundary", &coord_names(d.dim, "x"), &rows)?;
    report(out, &r)
}
