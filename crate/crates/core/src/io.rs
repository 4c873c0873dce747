//! File formats: CSV with a JSON header line for bulk numeric streams
//! (shapes, observed points, frames) and JSON for structured documents
//! (plans, candidate sets, summaries). All floats are written in Rust's
//! shortest round-trip form, so load(save(x)) == x bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{Decision, FrameRecord, SimResult, SimStats};
use crate::elastica::{DloShape, DloState, ElasticaParams, Pose, StiffnessSpec};
use crate::error::{Error, Result};
use crate::planner::PlanPath;

/// JSON header line of a shape CSV, carrying k, s0, Ltilde, EI, L, and
/// the base pose as one flat object.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShapeHeader {
    #[serde(flatten)]
    params: ElasticaParams,
    base: Pose,
    #[serde(flatten)]
    stiffness: StiffnessSpec,
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line}: bad number {field:?}: {e}")))
}

/// Serialize a shape as `# {json}` header, a column header, and one
/// `s,x,y,phi,kappa` row per sample.
pub fn shape_to_csv(shape: &DloShape) -> Result<String> {
    let header = ShapeHeader {
        params: shape.params,
        base: shape.base,
        stiffness: shape.stiffness,
    };
    let mut out = String::new();
    writeln!(out, "# {}", serde_json::to_string(&header)?).expect("string write");
    out.push_str("s,x,y,phi,kappa\n");
    for st in shape.samples() {
        writeln!(out, "{},{},{},{},{}", st.s, st.x, st.y, st.phi, st.kappa)
            .expect("string write");
    }
    Ok(out)
}

pub fn shape_from_csv(text: &str) -> Result<DloShape> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty shape CSV".into()))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse("missing `# {json}` header line".into()))?;
    let header: ShapeHeader = serde_json::from_str(json)?;
    let mut samples = Vec::new();
    for (i, line) in lines {
        if i == 1 {
            if line.trim() != "s,x,y,phi,kappa" {
                return Err(Error::Parse(format!("line 2: bad column header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 columns", i + 1)));
        }
        samples.push(DloState {
            s: parse_f64(cols[0], i + 1)?,
            x: parse_f64(cols[1], i + 1)?,
            y: parse_f64(cols[2], i + 1)?,
            phi: parse_f64(cols[3], i + 1)?,
            kappa: parse_f64(cols[4], i + 1)?,
        });
    }
    DloShape::from_samples(samples, header.params, header.base, header.stiffness)
}

pub fn write_shape_csv(path: &Path, shape: &DloShape) -> Result<()> {
    std::fs::write(path, shape_to_csv(shape)?)?;
    Ok(())
}

pub fn read_shape_csv(path: &Path) -> Result<DloShape> {
    shape_from_csv(&std::fs::read_to_string(path)?)
}

/// JSON header line of an observed-points CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointsHeader {
    base: Pose,
    #[serde(rename = "L")]
    length: f64,
}

/// Serialize observed points as `# {json}` header plus `x,y` rows.
pub fn points_to_csv(points: &[(f64, f64)], base: &Pose, length: f64) -> Result<String> {
    let header = PointsHeader { base: *base, length };
    let mut out = String::new();
    writeln!(out, "# {}", serde_json::to_string(&header)?).expect("string write");
    out.push_str("x,y\n");
    for p in points {
        writeln!(out, "{},{}", p.0, p.1).expect("string write");
    }
    Ok(out)
}

pub fn points_from_csv(text: &str) -> Result<(Vec<(f64, f64)>, Pose, f64)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty points CSV".into()))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse("missing `# {json}` header line".into()))?;
    let header: PointsHeader = serde_json::from_str(json)?;
    let mut points = Vec::new();
    for (i, line) in lines {
        if i == 1 {
            if line.trim() != "x,y" {
                return Err(Error::Parse(format!("line 2: bad column header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected 2 columns", i + 1)));
        }
        points.push((parse_f64(cols[0], i + 1)?, parse_f64(cols[1], i + 1)?));
    }
    Ok((points, header.base, header.length))
}

pub fn write_points_csv(
    path: &Path,
    points: &[(f64, f64)],
    base: &Pose,
    length: f64,
) -> Result<()> {
    std::fs::write(path, points_to_csv(points, base, length)?)?;
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<(Vec<(f64, f64)>, Pose, f64)> {
    points_from_csv(&std::fs::read_to_string(path)?)
}

pub fn write_plan_json(path: &Path, plan: &PlanPath) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(plan)?)?;
    Ok(())
}

pub fn read_plan_json(path: &Path) -> Result<PlanPath> {
    let plan: PlanPath = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    plan.validate()?;
    Ok(plan)
}

/// One row per frame: index, stage, three error components, weighted
/// error, decision.
pub fn frames_to_csv(frames: &[FrameRecord]) -> String {
    let mut out = String::from("index,stage,shape_err,elastica_err,tangent_err,weighted,decision\n");
    for f in frames {
        let decision = match f.decision {
            Decision::Continue => "Continue",
            Decision::Recovery => "Recovery",
        };
        writeln!(
            out,
            "{},{:?},{},{},{},{},{}",
            f.index, f.node.stage, f.error.shape_err, f.error.elastica_err,
            f.error.tangent_err, f.error.weighted, decision
        )
        .expect("string write");
    }
    out
}

pub fn write_frames_csv(path: &Path, frames: &[FrameRecord]) -> Result<()> {
    std::fs::write(path, frames_to_csv(frames))?;
    Ok(())
}

/// JSON summary of a simulation run: per-metric statistics, frame and
/// replan counts, the under-epsilon rate, and the success flag.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimSummary {
    pub stats: SimStats,
    pub frames: usize,
    pub replans: usize,
    pub under_epsilon_rate: f64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl SimSummary {
    pub fn from_result(res: &SimResult) -> Self {
        let under = res
            .frames
            .iter()
            .filter(|f| f.decision == Decision::Continue)
            .count();
        SimSummary {
            stats: res.stats,
            frames: res.frames.len(),
            replans: res.replans,
            under_epsilon_rate: under as f64 / res.frames.len().max(1) as f64,
            success: res.success,
            failure_reason: res.failure_reason.clone(),
        }
    }
}

pub fn write_summary_json(path: &Path, summary: &SimSummary) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(summary)?)?;
    Ok(())
}
