//! Browser demo: spectrum table, a spreading 1D droplet, and level sets of a perturbed 2D droplet.
//! Every export returns a JSON string; errors become `{"error": ...}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use thinfilm::basis::Discretization;
use thinfilm::diagnostics::{free_boundary_deviation, level_set};
use thinfilm::evolution::{solve_nonlinear_picard, InitialData, NonlinearProblem, PicardConfig, TimeGrid};
use thinfilm::profiles::ModelParams;
use thinfilm::spectral::SpectralOperator;
use thinfilm::transform::inverse;

fn wrap(r: thinfilm::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({"error": e.to_string()}).to_string(),
    }
}

pub fn spectrum_value(dim: usize, sigma: f64, l_max: usize, k_max: usize, rows: usize) -> thinfilm::Result<Value> {
    let d = Discretization::new(dim, sigma, l_max.min(6), k_max.min(30))?;
    let op = SpectralOperator::build(&d, dim as f64)?;
    let entries: Vec<Value> = op
        .spectrum()
        .iter()
        .take(rows)
        .map(|e| json!({"l": e.l, "k": e.k, "lambda": e.lambda, "mu": e.mu}))
        .collect();
    Ok(json!({"lambda_1": op.lambda_1(), "mu_1": op.mu_1(), "modes": entries}))
}

/// Eigenvalues `λ` and `μ = λ² + nλ`, sorted by `λ`.
#[wasm_bindgen]
pub fn spectrum(dim: usize, sigma: f64, l_max: usize, k_max: usize, rows: usize) -> String {
    wrap(spectrum_value(dim, sigma, l_max, k_max, rows))
}

pub fn droplet_value(kind: &str, size: f64, t_end: f64, frames: usize) -> thinfilm::Result<Value> {
    let p = ModelParams::thin_film(1, 1.0)?;
    let d = Discretization::new(1, 1.0, 1, 14)?;
    let op = SpectralOperator::build(&d, 1.0)?;
    let data = match kind {
        "translated" => InitialData::Translated { delta: size },
        "mode" => InitialData::Eigen {
            rank: 2,
            amplitude: size,
        },
        _ => InitialData::Linear {
            axis: 0,
            amplitude: size,
        },
    };
    let g = data.build(&d, &op, &p)?;
    let prob = NonlinearProblem::new(&d, &op, &p);
    let grid = TimeGrid::graded(t_end, 1e-3, 1.6, 0.05, 8)?;
    let cfg = PicardConfig {
        eps0: 5e-2,
        max_iter: 30,
        ..PicardConfig::default()
    };
    let (tr, rep) = solve_nonlinear_picard(&prob, &g, &grid, &cfg, None)?;
    let frames = frames.max(2);
    let mut out = Vec::new();
    for i in 0..frames {
        let t = t_end * i as f64 / (frames - 1) as f64;
        let w = tr.at(t)?;
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for j in 0..=80 {
            let z = [-1.0 + j as f64 / 40.0];
            let (s, _) = inverse(&z, &d.eval_jet(&w, &z, 1), &p)?;
            xs.push(s.x[0]);
            us.push(s.u);
        }
        let left = -(1.0 + d.eval(&w, &[-1.0]));
        let right = 1.0 + d.eval(&w, &[1.0]);
        out.push(json!({"t": t, "x": xs, "u": us, "edges": [left, right],
                        "deviation": free_boundary_deviation(&d, &w, 2)}));
    }
    Ok(json!({"frames": out, "iterations": rep.iterations, "mu_1": op.mu_1()}))
}

/// Nonlinear evolution of a 1D droplet; `kind` is `translated`, `mode` or `tilt`.
#[wasm_bindgen]
pub fn droplet(kind: &str, size: f64, t_end: f64, frames: usize) -> String {
    wrap(droplet_value(kind, size, t_end, frames))
}

pub fn level_sets_value(seed: u64, amplitude: f64, heights: &[f64], n_dirs: usize) -> thinfilm::Result<Value> {
    let p = ModelParams::thin_film(2, 1.0)?;
    let d = Discretization::new(2, 1.0, 4, 4)?;
    let op = SpectralOperator::build(&d, 2.0)?;
    let w = InitialData::Random {
        seed,
        amplitude,
        l_cap: 4,
        k_cap: 2,
        mean_zero: false,
    }
    .build(&d, &op, &p)?;
    let mut curves = Vec::new();
    for &h in heights {
        let ls = level_set(&d, &w, h, &p, n_dirs)?;
        let pts: Vec<[f64; 2]> = ls.points.iter().flatten().map(|x| [x[0], x[1]]).collect();
        curves.push(json!({"height": h, "points": pts}));
    }
    Ok(json!({"curves": curves}))
}

/// Level sets `{u = h}` of a randomly perturbed 2D droplet; `heights` is comma separated.
#[wasm_bindgen]
pub fn level_sets(seed: u64, amplitude: f64, heights: &str, n_dirs: usize) -> String {
    let hs: Result<Vec<f64>, _> = heights.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match hs {
        Ok(hs) => wrap(level_sets_value(seed, amplitude, &hs, n_dirs.clamp(8, 720))),
        Err(e) => json!({"error": format!("bad heights: {e}")}).to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_starts_at_zero_then_gap() {
        let v: Value = serde_json::from_str(&spectrum(1, 1.0, 1, 10, 5)).unwrap();
        assert!((v["lambda_1"].as_f64().unwrap() - 2.0).abs() < 1e-10);
        assert_eq!(v["modes"].as_array().unwrap().len(), 5);
        assert!(v["modes"][0]["lambda"].as_f64().unwrap().abs() < 1e-10);
    }

    #[test]
    fn translated_droplet_relaxes() {
        let v: Value = serde_json::from_str(&droplet("translated", 0.01, 0.5, 4)).unwrap();
        let frames = v["frames"].as_array().unwrap();
        let d0 = frames[0]["deviation"].as_f64().unwrap();
        let d1 = frames[3]["deviation"].as_f64().unwrap();
        assert!((d0 - 0.01).abs() < 1e-9);
        assert!((d1 / d0 - (-3.0f64).exp()).abs() < 1e-4, "{}", d1 / d0);
    }

    #[test]
    fn level_sets_shrink_with_height() {
        let v: Value = serde_json::from_str(&level_sets(1, 0.02, "0.0, 0.02", 24)).unwrap();
        let c = v["curves"].as_array().unwrap();
        let r = |i: usize| -> f64 {
            c[i]["points"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| p[0].as_f64().unwrap().hypot(p[1].as_f64().unwrap()))
                .fold(0.0, f64::max)
        };
        assert!(r(1) < r(0));
    }

    #[test]
    fn errors_are_reported_as_json() {
        let v: Value = serde_json::from_str(&droplet("tilt", 0.5, 1.0, 3)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("admissible"));
        let v: Value = serde_json::from_str(&level_sets(1, 0.02, "a", 24)).unwrap();
        assert!(v["error"].is_string());
    }
}
