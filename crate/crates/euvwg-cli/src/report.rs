//! Run metrics: one JSON document per run with per-seed entries and
//! cross-seed statistics. Every wall-clock field ends in `_seconds`; the
//! determinism key is the document with those subtrees removed, so two
//! runs of the same configuration and seed must agree bit for bit on it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use euvwg::{Error, Result};

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Sample standard deviation (n - 1); a single sample reports 0.
pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len();
    assert!(n > 0, "statistics need at least one sample");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_rel_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inference_seconds: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedStats {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_residual: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_rel_l2: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<MeanStd>,
}

/// Statistics over whichever metrics every seed reported.
pub fn seed_stats(seeds: &[SeedMetrics]) -> Option<SeedStats> {
    if seeds.is_empty() {
        return None;
    }
    fn collect(seeds: &[SeedMetrics], get: impl Fn(&SeedMetrics) -> Option<f64>) -> Option<MeanStd> {
        let xs: Vec<f64> = seeds.iter().filter_map(&get).collect();
        (xs.len() == seeds.len()).then(|| mean_std(&xs))
    }
    Some(SeedStats {
        n: seeds.len(),
        rel_residual: collect(seeds, |s| s.rel_residual),
        field_rel_l2: collect(seeds, |s| s.field_rel_l2),
        final_loss: collect(seeds, |s| s.final_loss),
        train_seconds: collect(seeds, |s| s.train_seconds),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub solver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub n_x: usize,
    pub n_y: usize,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_rel_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_reflectance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_transmittance: Option<f64>,
    pub seed_metrics: Vec<SeedMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_stats: Option<SeedStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_seconds: Option<f64>,
    pub artifacts: Vec<String>,
    pub config: RunConfig,
}

impl MetricsReport {
    pub fn new(mode: &str, solver: &str, config: RunConfig) -> Self {
        MetricsReport {
            mode: mode.to_string(),
            solver: solver.to_string(),
            preset: None,
            n_x: 0,
            n_y: 0,
            notes: Vec::new(),
            rel_residual: None,
            field_rel_l2: None,
            total_reflectance: None,
            total_transmittance: None,
            seed_metrics: Vec::new(),
            seed_stats: None,
            solve_seconds: None,
            artifacts: Vec::new(),
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("metrics serialization: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// The document minus every `*_seconds` subtree, canonically printed.
    /// Equal keys mean equal runs up to wall-clock noise.
    pub fn determinism_key(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)
            .map_err(|e| Error::Config(format!("metrics serialization: {e}")))?;
        strip_timings(&mut value);
        Ok(value.to_string())
    }
}

fn strip_timings(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_seconds"));
            for v in map.values_mut() {
                strip_timings(v);
            }
        }
        Value::Array(items) => {
            for v in items {
                strip_timings(v);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;

    fn report_with_times(t1: f64, t2: f64) -> MetricsReport {
        let mut report = MetricsReport::new(
            "solve",
            "wg",
            RunConfig::for_preset("test1", Mode::Solve),
        );
        report.rel_residual = Some(3.25e-13);
        report.solve_seconds = Some(t1);
        report.seed_metrics.push(SeedMetrics {
            seed: 7,
            rel_residual: Some(3.25e-13),
            field_rel_l2: Some(1.5e-5),
            final_loss: None,
            train_seconds: Some(t2),
            inference_seconds: None,
        });
        report.seed_stats = seed_stats(&report.seed_metrics);
        report
    }

    #[test]
    fn determinism_key_ignores_wall_clock_fields() {
        let a = report_with_times(1.0, 2.0);
        let b = report_with_times(9.9, 0.1);
        assert_eq!(a.determinism_key().unwrap(), b.determinism_key().unwrap());
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());

        let mut c = report_with_times(1.0, 2.0);
        c.seed_metrics[0].field_rel_l2 = Some(1.6e-5);
        assert_ne!(a.determinism_key().unwrap(), c.determinism_key().unwrap());
    }

    #[test]
    fn stats_use_the_sample_deviation() {
        let s = mean_std(&[1.0, 2.0, 3.0]);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]).std, 0.0);
    }

    #[test]
    fn partial_metrics_drop_out_of_the_stats() {
        let seeds = vec![
            SeedMetrics {
                seed: 0,
                rel_residual: Some(1e-13),
                field_rel_l2: Some(1e-4),
                final_loss: None,
                train_seconds: Some(3.0),
                inference_seconds: None,
            },
            SeedMetrics {
                seed: 1,
                rel_residual: None,
                field_rel_l2: Some(3e-4),
                final_loss: None,
                train_seconds: Some(5.0),
                inference_seconds: None,
            },
        ];
        let stats = seed_stats(&seeds).unwrap();
        assert_eq!(stats.n, 2);
        assert!(stats.rel_residual.is_none(), "one seed lacks the metric");
        let l2 = stats.field_rel_l2.unwrap();
        assert!((l2.mean - 2e-4).abs() < 1e-18);
        assert!(seed_stats(&[]).is_none());
    }

    #[test]
    fn saved_metrics_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.json");
        let report = report_with_times(1.0, 2.0);
        report.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(
            back.determinism_key().unwrap(),
            report.determinism_key().unwrap()
        );
    }
}
