//! Artifact directory: CSV/JSON files stamped with the config hash, plus `metadata.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const METADATA: &str = "metadata.json";

pub struct Output {
    pub dir: PathBuf,
    hash: String,
    files: Vec<String>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Output {
    /// Opens `dir`, refusing it when it already holds artifacts of a different configuration.
    pub fn open(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        let hash = cfg.hash();
        let meta = dir.join(METADATA);
        if meta.exists() {
            let text = fs::read_to_string(&meta).map_err(io(&meta))?;
            let old: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", meta.display())))?;
            let old_hash = old["config_hash"].as_str().unwrap_or("");
            if old_hash != hash {
                return Err(CliError::Invalid(format!(
                    "{} holds results of config {old_hash}, refusing to mix with {hash}",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(io(dir))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            hash,
            files: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push((label.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    pub fn csv(&mut self, name: &str, schema: &str, columns: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut s = format!("# schema={schema} version=1 config_hash={}\n", self.hash);
        s.push_str(&columns.join(","));
        s.push('\n');
        for row in rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v:.16e}");
            }
            s.push('\n');
        }
        self.write(name, &s)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let body = json!({"config_hash": self.hash, "data": value});
        let text = serde_json::to_string_pretty(&body).map_err(|e| CliError::Invalid(e.to_string()))?;
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(io(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, command: &str, cfg: &RunConfig, status: &str) -> Result<(), CliError> {
        let timings: serde_json::Map<String, Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let meta = json!({
            "config_hash": self.hash,
            "command": command,
            "status": status,
            "config": cfg,
            "files": self.files,
            "versions": {"tfe": env!("CARGO_PKG_VERSION"), "thinfilm": thinfilm::VERSION},
            "timings_s": timings,
            "wall_s": self.started.elapsed().as_secs_f64(),
        });
        let path = self.dir.join(METADATA);
        let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Invalid(e.to_string()))?;
        fs::write(&path, text).map_err(io(&path))
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Invalid(format!("{}: {e}", path.display()))
}

#[cfg(test)]
fn csv_hash(text: &str) -> Option<&str> {
    text.lines().next()?.split_whitespace().find_map(|w| w.strip_prefix("config_hash="))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let mut out = Output::open(dir.path(), &cfg).unwrap();
        let v = [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE];
        out.csv("a.csv", "test", &["x".into()], &v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(csv_hash(&text), Some(cfg.hash().as_str()));
        let back: Vec<f64> = text.lines().skip(2).map(|l| l.parse().unwrap()).collect();
        assert_eq!(back, v);
    }

    #[test]
    fn mixed_configs_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        Output::open(dir.path(), &cfg).unwrap().finish("x", &cfg, "ok").unwrap();
        assert!(Output::open(dir.path(), &cfg).is_ok());
        let mut other = cfg.clone();
        other.disc.k_max = 5;
        assert!(Output::open(dir.path(), &other).is_err());
    }
}
