//! JSON run configuration. See `docs/schema/config.schema.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqznb_core::ifo::{cavity_pole_from_finesse, finesse_from_bounces, PHASE_QUADRATURE};
use sqznb_core::squeeze::LossElement;
use sqznb_core::{
    AnglePolicy, FrequencyGrid, InterferometerConfig, LossChain, PhaseAveraging, PhaseNoise,
    SqueezerSetup,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub interferometer: InterferometerSection,
    pub squeezer: SqueezerSection,
    pub grid: GridSection,
    #[serde(default)]
    pub components: Vec<ComponentRef>,
    #[serde(default = "default_band")]
    pub band: [f64; 2],
    #[serde(default = "default_secondary_band")]
    pub secondary_band: Option<[f64; 2]>,
}

fn default_band() -> [f64; 2] {
    [400.0, 3000.0]
}

fn default_secondary_band() -> Option<[f64; 2]> {
    Some([150.0, 300.0])
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerSection {
    pub label: String,
    pub arm_length_m: f64,
    pub mirror_mass_kg: f64,
    pub arm_power_w: f64,
    pub wavelength_m: f64,
    /// Exactly one of the three cavity descriptions must be given.
    pub cavity_pole_hz: Option<f64>,
    pub finesse: Option<f64>,
    pub bounces: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezerSection {
    pub inject_db: f64,
    #[serde(default)]
    pub losses: Vec<LossElement>,
    #[serde(default)]
    pub phase_noise_mrad: f64,
    #[serde(default)]
    pub phase_averaging: PhaseAveraging,
    pub angle_policy: AnglePolicySection,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnglePolicySection {
    None,
    Fixed {
        #[serde(default = "phase_quadrature")]
        angle_rad: f64,
    },
    FdOptimal,
}

fn phase_quadrature() -> f64 {
    PHASE_QUADRATURE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRef {
    pub label: String,
    /// Relative paths resolve against the config file's directory.
    pub file: PathBuf,
}

/// A validated configuration with every model object built.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: RunConfig,
    pub interferometer: InterferometerConfig,
    pub squeezer: SqueezerSetup,
    pub grid: FrequencyGrid,
    /// `(label, resolved path)`
    pub components: Vec<(String, PathBuf)>,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {msg}", path.display()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Loaded, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(path, format_args!("cannot read config: {e}")))?;
        let raw: RunConfig = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        raw.build(base).map_err(|e| match e {
            CliError::Usage(m) => config_err(path, m),
            other => other,
        })
    }

    pub fn build(self, base: &Path) -> Result<Loaded, CliError> {
        let ifo = &self.interferometer;
        let pole = match (ifo.cavity_pole_hz, ifo.finesse, ifo.bounces) {
            (Some(p), None, None) => p,
            (None, Some(f), None) => cavity_pole_from_finesse(f, ifo.arm_length_m),
            (None, None, Some(b)) => {
                cavity_pole_from_finesse(finesse_from_bounces(b), ifo.arm_length_m)
            }
            _ => {
                return Err(CliError::Usage(
                    "interferometer needs exactly one of cavity_pole_hz, finesse, bounces".into(),
                ))
            }
        };
        let interferometer = InterferometerConfig::new(
            ifo.label.clone(),
            ifo.arm_length_m,
            ifo.mirror_mass_kg,
            ifo.arm_power_w,
            ifo.wavelength_m,
            pole,
        )?;

        let sq = &self.squeezer;
        let chain = LossChain::try_from(sq.losses.clone())?;
        let noise = PhaseNoise::with_averaging(sq.phase_noise_mrad * 1e-3, sq.phase_averaging)?;
        let policy = match sq.angle_policy {
            AnglePolicySection::None => AnglePolicy::None,
            AnglePolicySection::Fixed { angle_rad } => AnglePolicy::Fixed { angle: angle_rad },
            AnglePolicySection::FdOptimal => AnglePolicy::FdOptimal,
        };
        let squeezer = SqueezerSetup::new(sq.inject_db, chain, noise, policy)?;

        let g = &self.grid;
        let grid = match g.spacing {
            Spacing::Log => FrequencyGrid::log(g.f_min_hz, g.f_max_hz, g.points)?,
            Spacing::Linear => FrequencyGrid::linear(g.f_min_hz, g.f_max_hz, g.points)?,
        };

        for band in std::iter::once(&self.band).chain(self.secondary_band.as_ref()) {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(band[0] < band[1]) {
                return Err(CliError::Usage(format!(
                    "band [{}, {}] must have f_lo < f_hi",
                    band[0], band[1]
                )));
            }
        }

        let mut components = Vec::new();
        for c in &self.components {
            if components.iter().any(|(l, _): &(String, PathBuf)| *l == c.label) {
                return Err(CliError::Usage(format!("duplicate component '{}'", c.label)));
            }
            let path = if c.file.is_absolute() {
                c.file.clone()
            } else {
                base.join(&c.file)
            };
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "component '{}' file {} does not exist",
                    c.label,
                    path.display()
                )));
            }
            components.push((c.label.clone(), path));
        }

        Ok(Loaded {
            raw: self,
            interferometer,
            squeezer,
            grid,
            components,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "interferometer": {
                "label": "t", "arm_length_m": 4000.0, "mirror_mass_kg": 10.0,
                "arm_power_w": 4e4, "wavelength_m": 1.064e-6, "bounces": 130.0
            },
            "squeezer": {
                "inject_db": 10.3,
                "losses": [{"label": "total", "efficiency": 0.44}],
                "phase_noise_mrad": 37.0,
                "angle_policy": {"kind": "fixed"}
            },
            "grid": {"f_min_hz": 40.0, "f_max_hz": 7000.0, "points": 100}
        })
    }

    fn build(v: serde_json::Value) -> Result<Loaded, CliError> {
        let raw: RunConfig = serde_json::from_value(v).map_err(|e| CliError::Usage(e.to_string()))?;
        raw.build(Path::new("."))
    }

    #[test]
    fn minimal_config_builds_with_defaults() {
        let l = build(minimal()).unwrap();
        assert!((l.interferometer.cavity_pole - 91.756_637_677_633_5).abs() < 1e-9);
        assert_eq!(l.squeezer.angle_policy, AnglePolicy::phase_quadrature());
        assert_eq!(l.raw.band, [400.0, 3000.0]);
        assert_eq!(l.grid.len(), 100);
    }

    #[test]
    fn rejects_ambiguous_cavity() {
        let mut v = minimal();
        v["interferometer"]["finesse"] = serde_json::json!(200.0);
        assert!(build(v).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut v = minimal();
        v["grid"]["points"] = serde_json::json!(1);
        assert!(build(v).is_err());
        let mut v = minimal();
        v["squeezer"]["losses"][0]["efficiency"] = serde_json::json!(1.5);
        assert!(build(v).is_err());
        let mut v = minimal();
        v["squeezer"]["unknown"] = serde_json::json!(1);
        assert!(build(v).is_err());
        let mut v = minimal();
        v["components"] = serde_json::json!([{"label": "x", "file": "/nonexistent.csv"}]);
        assert!(build(v).is_err());
    }
}
