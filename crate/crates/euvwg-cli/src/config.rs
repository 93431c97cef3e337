//! Run configuration: one JSON document per run. Unknown keys are rejected
//! everywhere so a typo fails loudly instead of silently using a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use euvwg::geometry::{MaskStack, PlaneWaveSource};
use euvwg::pinn::PinnConfig;
use euvwg::wgno::{FamilySpec, WgnoConfig};
use euvwg::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    TrainWgno,
    InferWgno,
    TrainPinn,
    Eval,
    Validate,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::TrainWgno => "train-wgno",
            Mode::InferWgno => "infer-wgno",
            Mode::TrainPinn => "train-pinn",
            Mode::Eval => "eval",
            Mode::Validate => "validate",
        }
    }
}

/// A preset name or a full inline stack description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Preset(String),
    Inline(Box<MaskStack>),
}

/// Field sampling resolution for exports and error metrics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub nz: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 101, nz: 101 }
    }
}

fn default_seeds() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional here; the command line picks the mode and they must agree
    /// when both are given.
    #[serde(default)]
    pub mode: Option<Mode>,
    pub mask: MaskSpec,
    /// Required for inline masks; presets carry their own source.
    #[serde(default)]
    pub source: Option<PlaneWaveSource>,
    /// Truncation overrides; presets carry defaults.
    #[serde(default)]
    pub n_x: Option<usize>,
    #[serde(default)]
    pub n_y: Option<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Strategy name for solve/eval; "wg" when omitted.
    #[serde(default)]
    pub solver: Option<String>,
    #[serde(default)]
    pub wgno: WgnoConfig,
    #[serde(default)]
    pub pinn: PinnConfig,
    /// Pool training over a sampled geometry family instead of the single
    /// configured instance.
    #[serde(default)]
    pub family: Option<FamilySpec>,
    /// Model file for infer-wgno and for eval of trained models.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Materials table override; the built-in placeholder table otherwise.
    #[serde(default)]
    pub materials: Option<PathBuf>,
    /// Number of seeds for training statistics; seed i of K is
    /// `base_seed + i` with the base from the trainer config.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Snap the incidence angle to the nearest grid harmonic instead of
    /// rejecting incommensurate sources.
    #[serde(default)]
    pub snap_incidence: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Validate mode: skip the training gates and report them as SKIP.
    #[serde(default)]
    pub quick: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let MaskSpec::Inline(stack) = &self.mask {
            stack.validate()?;
            if self.source.is_none() {
                return Err(Error::Config(
                    "an inline mask needs an explicit source".into(),
                ));
            }
        }
        if let Some(src) = &self.source {
            src.validate()?;
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        self.wgno.validate()?;
        self.pinn.validate()?;
        if let Some(name) = &self.solver {
            if !matches!(name.as_str(), "wg" | "wgno" | "pinn") {
                return Err(Error::Config(format!(
                    "unknown solver {name:?}; expected wg, wgno, or pinn"
                )));
            }
        }
        Ok(())
    }

    /// Minimal config for a preset, used by `validate` without a file.
    pub fn for_preset(name: &str, mode: Mode) -> RunConfig {
        RunConfig {
            mode: Some(mode),
            mask: MaskSpec::Preset(name.into()),
            source: None,
            n_x: None,
            n_y: None,
            grid: GridSpec::default(),
            solver: None,
            wgno: WgnoConfig::default(),
            pinn: PinnConfig::default(),
            family: None,
            checkpoint: None,
            materials: None,
            seeds: 1,
            snap_incidence: false,
            out_dir: None,
            quick: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_preset_config_parses() {
        let cfg = RunConfig::parse(r#"{"mask": "test1"}"#).unwrap();
        assert!(matches!(&cfg.mask, MaskSpec::Preset(p) if p == "test1"));
        assert_eq!(cfg.seeds, 1);
        assert!(cfg.mode.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(r#"{"mask": "test1", "nx": 10}"#).unwrap_err();
        assert!(err.to_string().contains("nx"), "{err}");
        // Nested configs reject typos too.
        let err = RunConfig::parse(r#"{"mask": "test1", "wgno": {"epochs": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn inline_masks_need_a_source() {
        let text = r#"{
            "mask": {"layers": [{"thickness": 1.0, "pattern": {"uniform": {"eps": [4.0, 0.0]}}}],
                     "l_x": 8.0, "l_y": null, "eps_substrate": [1.0, 0.0]},
            "n_x": 3
        }"#;
        let err = RunConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("source"), "{err}");
    }

    #[test]
    fn inline_mask_with_source_parses_and_echoes() {
        let text = r#"{
            "mask": {"layers": [{"thickness": 1.0, "pattern": {"uniform": {"eps": [4.0, 0.0]}}}],
                     "l_x": 8.0, "l_y": null, "eps_substrate": [1.0, 0.0]},
            "source": {"wavelength_nm": 6.283185307179586, "theta_deg": 45.0,
                       "phi_deg": 0.0, "polarization": "te"},
            "mode": "solve",
            "seeds": 3
        }"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.mode, Some(Mode::Solve));
        assert_eq!(cfg.seeds, 3);
        // Echo round trip: serialize and reparse to the same document.
        let echo = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&echo).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), echo);
    }

    #[test]
    fn bad_solver_name_is_rejected() {
        let err = RunConfig::parse(r#"{"mask": "test1", "solver": "fem"}"#).unwrap_err();
        assert!(err.to_string().contains("fem"), "{err}");
    }
}
