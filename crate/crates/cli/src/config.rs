//! Run configuration: a TOML file with one table per module, plus `--section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thinfilm::basis::Discretization;
use thinfilm::evolution::{InitialData, PicardConfig, TimeGrid};
use thinfilm::norms::WhitneyNormConfig;
use thinfilm::spectral::SpectralOperator;
use thinfilm::ModelParams;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Space dimension N (1 or 2).
    pub dim: usize,
    /// Weight exponent σ of the measure ρ^σ dz.
    pub sigma: f64,
    /// Zeroth-order coefficient n of L² + nL; defaults to N.
    pub n: Option<f64>,
    /// Droplet mass.
    pub mass: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            dim: 1,
            sigma: 1.0,
            n: None,
            mass: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiscSection {
    /// Largest angular degree.
    pub l_max: usize,
    /// Largest radial degree.
    pub k_max: usize,
}

impl Default for DiscSection {
    fn default() -> Self {
        DiscSection { l_max: 1, k_max: 12 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Exact,
    Euler,
    Picard,
    SemiImplicit,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    /// `exact` or `euler` for linear runs; `picard` or `semi-implicit` for nonlinear runs.
    pub scheme: Option<Scheme>,
    pub horizon: f64,
    /// Chebyshev windows and nodes per window for the exact and Picard schemes;
    /// `windows` fixes the widest window at `horizon / windows`.
    pub windows: usize,
    pub order: usize,
    /// Width of the first window; windows then grow by `growth` up to the widest.
    /// Setting it to `horizon / windows` gives a uniform grid.
    pub first_window: f64,
    pub growth: f64,
    /// Step count for the Euler and semi-implicit schemes.
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub eps0: f64,
    pub forcing_tol: f64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let p = PicardConfig::default();
        EvolutionSection {
            scheme: None,
            horizon: 1.0,
            windows: 20,
            order: 8,
            first_window: 1e-3,
            growth: 1.6,
            steps: 1000,
            tol: p.tol,
            max_iter: p.max_iter,
            eps0: p.eps0,
            forcing_tol: p.forcing_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum NormPreset {
    Coarse,
    Default,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NormsSection {
    pub preset: NormPreset,
    /// Overrides the preset integrability exponent.
    pub p: Option<f64>,
    /// Time horizon of the sampled flow; must cover the last window.
    pub horizon: f64,
}

impl Default for NormsSection {
    fn default() -> Self {
        NormsSection {
            preset: NormPreset::Default,
            p: None,
            horizon: 9.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub seed: u64,
    /// Sample lattice density for kernel and CZ checks.
    pub n_points: usize,
    /// Number of sampled balls in the geometry suite.
    pub n_balls: usize,
    pub ceiling: f64,
    /// Fit window start for decay and free-boundary rates.
    pub t_start: f64,
    pub n_dirs: usize,
    /// Time at which analyticity ratios are taken.
    pub t_analytic: f64,
    /// Horizon of the decay, analyticity and boundary runs.
    pub horizon: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            seed: 0,
            n_points: 8,
            n_balls: 200,
            ceiling: 1e6,
            t_start: 0.5,
            n_dirs: 32,
            t_analytic: 0.5,
            horizon: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; relative paths resolve against `TFE_OUTPUT_ROOT` when set.
    pub dir: String,
    /// Lattice density for plot-ready profile files.
    pub profile_points: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            profile_points: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub disc: DiscSection,
    pub evolution: EvolutionSection,
    pub norms: NormsSection,
    pub verify: VerifySection,
    pub output: OutputSection,
    pub initial: InitialData,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSection::default(),
            disc: DiscSection::default(),
            evolution: EvolutionSection::default(),
            norms: NormsSection::default(),
            verify: VerifySection::default(),
            output: OutputSection::default(),
            initial: InitialData::Linear {
                axis: 0,
                amplitude: 1e-3,
            },
        }
    }
}

pub const ENV_OUTPUT_ROOT: &str = "TFE_OUTPUT_ROOT";

impl RunConfig {
    /// Loads `path` (or the defaults) and applies overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = toml::Value::try_from(RunConfig::default()).map_err(|e| CliError::Invalid(e.to_string()))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
            let file: toml::Value = toml::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
            merge(&mut table, file);
        }
        for (key, value) in overrides {
            set_key(&mut table, key, value)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Invalid(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Invalid(m));
        if !(1..=2).contains(&self.model.dim) {
            return bad(format!("model.dim must be 1 or 2, got {}", self.model.dim));
        }
        if self.disc.k_max == 0 {
            return bad("disc.k_max must be at least 1".into());
        }
        let e = &self.evolution;
        if !(e.horizon > 0.0 && e.horizon.is_finite()) {
            return bad(format!("evolution.horizon must be positive, got {}", e.horizon));
        }
        if e.windows == 0 || e.order < 1 || e.steps == 0 || e.max_iter == 0 {
            return bad("evolution.windows, order, steps and max_iter must be positive".into());
        }
        if !(e.first_window > 0.0 && e.first_window <= e.horizon / e.windows as f64 && e.growth >= 1.0) {
            return bad("evolution.first_window must lie in (0, horizon / windows] and growth must be at least 1".into());
        }
        if !(e.tol > 0.0 && e.eps0 > 0.0 && e.forcing_tol > 0.0) {
            return bad("evolution tolerances must be positive".into());
        }
        if !(self.norms.horizon > 0.0) {
            return bad("norms.horizon must be positive".into());
        }
        let v = &self.verify;
        if v.n_points == 0 || v.n_balls == 0 || v.n_dirs == 0 || !(v.ceiling > 0.0) || !(v.t_analytic > 0.0) || !(v.horizon >= v.t_analytic) {
            return bad("verify sample sizes, ceiling, t_analytic and horizon must be positive, with t_analytic ≤ horizon".into());
        }
        if self.output.profile_points == 0 {
            return bad("output.profile_points must be positive".into());
        }
        self.params()?;
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.model;
        Ok(ModelParams::new(m.dim, m.sigma, m.n.unwrap_or(m.dim as f64), m.mass)?)
    }

    pub fn discretization(&self) -> Result<(Discretization, SpectralOperator, ModelParams), CliError> {
        let p = self.params()?;
        let d = Discretization::new(p.dim, p.sigma, self.disc.l_max, self.disc.k_max)?;
        let op = SpectralOperator::build(&d, p.n)?;
        Ok((d, op, p))
    }

    /// Window grid over `[0, horizon]` with the configured grading.
    pub fn time_grid(&self, horizon: f64) -> Result<TimeGrid, CliError> {
        let e = &self.evolution;
        let widest = self.evolution.horizon / e.windows as f64;
        Ok(TimeGrid::graded(horizon, e.first_window.min(widest), e.growth, widest, e.order)?)
    }

    pub fn picard(&self) -> PicardConfig {
        let e = &self.evolution;
        PicardConfig {
            tol: e.tol,
            max_iter: e.max_iter,
            eps0: e.eps0,
            forcing_tol: e.forcing_tol,
        }
    }

    pub fn whitney(&self) -> WhitneyNormConfig {
        let mut c = match self.norms.preset {
            NormPreset::Coarse => WhitneyNormConfig::coarse(self.model.dim),
            NormPreset::Default => WhitneyNormConfig::default_for(self.model.dim),
        };
        if let Some(p) = self.norms.p {
            c.p = p;
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical JSON form, excluding the output location.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output.dir = String::new();
        let json = serde_json::to_string(&canon).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn output_dir(&self) -> PathBuf {
        let dir = PathBuf::from(&self.output.dir);
        match std::env::var_os(ENV_OUTPUT_ROOT) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // `initial` is a tagged union: a new kind replaces the whole table
                    Some(slot) if k != "initial" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parses an override value as a TOML scalar or array, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn set_key(table: &mut toml::Value, key: &str, raw: &str) -> Result<(), CliError> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| CliError::Invalid(format!("override `{key}` must have the form section.key")))?;
    let root = table.as_table_mut().expect("config is a table");
    let sec = root
        .get_mut(section)
        .and_then(|s| s.as_table_mut())
        .ok_or_else(|| CliError::Invalid(format!("unknown config section `{section}`")))?;
    if section == "initial" && field == "kind" {
        sec.clear();
    }
    sec.insert(field.to_string(), parse_value(raw));
    Ok(())
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Invalid(format!("expected key=value, got `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::load(None, &ov(&[("model.dim", "2"), ("disc.l_max", "3"), ("evolution.scheme", "euler")]))
            .unwrap();
        assert_eq!(cfg.model.dim, 2);
        assert_eq!(cfg.disc.l_max, 3);
        assert_eq!(cfg.evolution.scheme, Some(Scheme::Euler));
    }

    #[test]
    fn initial_kind_switch_resets_fields() {
        let cfg = RunConfig::load(None, &ov(&[("initial.kind", "translated"), ("initial.delta", "0.01")])).unwrap();
        assert_eq!(cfg.initial, InitialData::Translated { delta: 0.01 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::load(None, &ov(&[("model.dimension", "2")])).unwrap_err();
        assert!(e.to_string().contains("dimension"), "{e}");
        let e = RunConfig::load(None, &ov(&[("modle.dim", "2")])).unwrap_err();
        assert!(e.to_string().contains("modle"), "{e}");
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.disc.k_max += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::load(None, &ov(&[("model.dim", "3")])).is_err());
        assert!(RunConfig::load(None, &ov(&[("model.sigma", "-1")])).is_err());
        assert!(RunConfig::load(None, &ov(&[("evolution.horizon", "0")])).is_err());
    }
}
