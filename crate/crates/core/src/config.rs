//! Tool configuration: one JSON document carrying the physical rod,
//! the surface, the planning grid, the controller settings, and the
//! roll direction. Grid resolutions may be written as fractions of the
//! rod length (e.g. `"0.05 L"`); they are resolved to absolute meters
//! at load time and echoed back resolved.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characterize::Weights;
use crate::controller::{ControllerConfig, FaultSpec};
use crate::elastica::StiffnessSpec;
use crate::error::{Error, Result};
use crate::placement::{RollDirection, SurfaceSpec};
use crate::planner::GridSpec;

/// Fully resolved configuration (all lengths absolute meters).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolConfig {
    pub stiffness: StiffnessSpec,
    pub surface: SurfaceSpec,
    pub grid: GridSpec,
    pub controller: ControllerConfig,
    pub direction: RollDirection,
}

/// A grid resolution: absolute meters, or a fraction of L such as
/// `"0.05 L"` (angular resolutions take the numeric form only).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawLength {
    Absolute(f64),
    FractionOfL(String),
}

impl RawLength {
    fn resolve(&self, length: f64, field: &str) -> Result<f64> {
        match self {
            RawLength::Absolute(v) => Ok(*v),
            RawLength::FractionOfL(s) => {
                let trimmed = s.trim();
                let frac = trimmed
                    .strip_suffix('L')
                    .map(str::trim)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "grid.{field}: expected a number or \"<fraction> L\", got {s:?}"
                        ))
                    })?;
                Ok(frac * length)
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dx: Option<RawLength>,
    dy: Option<RawLength>,
    dz: Option<RawLength>,
    dphi: Option<f64>,
    dtheta: Option<f64>,
    #[serde(rename = "dLtilde")]
    d_full_period: Option<RawLength>,
    dk: Option<f64>,
    dl: Option<RawLength>,
}

impl RawGrid {
    fn resolve(&self, length: f64) -> Result<GridSpec> {
        let mut grid = GridSpec::defaults_for(length);
        if let Some(v) = &self.dx {
            grid.dx = v.resolve(length, "dx")?;
        }
        if let Some(v) = &self.dy {
            grid.dy = v.resolve(length, "dy")?;
        }
        if let Some(v) = &self.dz {
            grid.dz = v.resolve(length, "dz")?;
        }
        if let Some(v) = self.dphi {
            grid.dphi = v;
        }
        if let Some(v) = self.dtheta {
            grid.dtheta = v;
        }
        if let Some(v) = &self.d_full_period {
            grid.d_full_period = v.resolve(length, "dLtilde")?;
        }
        if let Some(v) = self.dk {
            grid.dk = v;
        }
        if let Some(v) = &self.dl {
            grid.dl = v.resolve(length, "dl")?;
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    epsilon: Option<f64>,
    weights: Option<Weights>,
    noise_sigma: Option<RawLength>,
    fps: Option<f64>,
    seed: Option<u64>,
    max_replans: Option<usize>,
    fault: Option<FaultSpec>,
}

impl RawController {
    fn resolve(&self, length: f64) -> Result<ControllerConfig> {
        let mut cfg = ControllerConfig::defaults_for(length);
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.weights {
            cfg.weights = v;
        }
        if let Some(v) = &self.noise_sigma {
            cfg.noise_sigma = v.resolve(length, "noise_sigma")?;
        }
        if let Some(v) = self.fps {
            cfg.fps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_replans {
            cfg.max_replans = v;
        }
        cfg.fault = self.fault;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    stiffness: StiffnessSpec,
    surface: SurfaceSpec,
    #[serde(default)]
    grid: Option<RawGrid>,
    #[serde(default)]
    controller: Option<RawController>,
    #[serde(default)]
    direction: Option<RollDirection>,
}

impl ToolConfig {
    /// Sensible defaults for a rod of the given stiffness on the given
    /// surface.
    pub fn defaults(stiffness: StiffnessSpec, surface: SurfaceSpec) -> Self {
        let length = stiffness.length;
        ToolConfig {
            stiffness,
            surface,
            grid: GridSpec::defaults_for(length),
            controller: ControllerConfig::defaults_for(length),
            direction: RollDirection::Leftward,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)?;
        // re-validate fields that deserialization bypasses
        let stiffness = StiffnessSpec::new(raw.stiffness.ei, raw.stiffness.length)?;
        let surface =
            SurfaceSpec::new(raw.surface.y0, raw.surface.alpha, raw.surface.mu1, raw.surface.mu2)?;
        let length = stiffness.length;
        let grid = raw.grid.unwrap_or_default().resolve(length)?;
        grid.validate()?;
        let controller = raw.controller.unwrap_or_default().resolve(length)?;
        controller.validate()?;
        let cfg = ToolConfig {
            stiffness,
            surface,
            grid,
            controller,
            direction: raw.direction.unwrap_or(RollDirection::Leftward),
        };
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
