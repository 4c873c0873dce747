//! Surface-contact shapes and feasibility predicates.
//!
//! Stage II holds the DLO tip on the surface with zero curvature while
//! the tip tangent rolls toward the surface; stage III grows a straight
//! surface-aligned segment with a contact-free elastica tail. The exit
//! point of the contacting segment always carries zero bending moment,
//! hence zero curvature, which is what makes both composites closed-form.

use serde::{Deserialize, Serialize};

use crate::elastica::{
    branch_for_phase, elastica_axis_angle, eval_shape, wrap_angle, ClosedForm, DloShape,
    DloState, ElasticaParams, Pose, StiffnessSpec,
};
#[cfg(test)]
use crate::elastica::angular_frequency;
use crate::elliptic::Modulus;
use crate::error::{Error, Result};

/// Placement surface: height, world-frame normal angle, and the two
/// friction coefficients (DLO-tray and tray-table).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub y0: f64,
    /// Angle α(n̂) of the surface normal in the world frame.
    pub alpha: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl SurfaceSpec {
    pub fn new(y0: f64, alpha: f64, mu1: f64, mu2: f64) -> Result<Self> {
        if mu1 < 0.0 || mu2 < 0.0 || !mu1.is_finite() || !mu2.is_finite() {
            return Err(Error::InvalidArgument("friction coefficients must be >= 0".into()));
        }
        Ok(SurfaceSpec { y0, alpha, mu1, mu2 })
    }

    /// Lumped coefficient μ = min{μ1, μ2}.
    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu1.min(self.mu2)
    }
}

/// Rolling direction of the placement; fixes the inflection phase of the
/// surface-contact point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollDirection {
    /// s0 = Ltilde/4
    Rightward,
    /// s0 = 3 Ltilde/4
    Leftward,
}

impl RollDirection {
    /// Phase of the contact point as a fraction of the full period.
    #[inline]
    pub fn phase_fraction(self) -> f64 {
        match self {
            RollDirection::Rightward => 0.25,
            RollDirection::Leftward => 0.75,
        }
    }

    /// Elastica parameters of a free portion whose start sits at this
    /// direction's inflection phase.
    pub fn contact_params(self, k: Modulus, full_period: f64) -> Result<ElasticaParams> {
        ElasticaParams::new(k, self.phase_fraction() * full_period, full_period)
    }
}

/// Stage II configuration space C2 = (phi_tip, k, Ltilde).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageIiConfig {
    pub phi_tip: f64,
    pub k: Modulus,
    #[serde(rename = "Ltilde")]
    pub full_period: f64,
}

/// Stage III configuration space C3 = (l, k, Ltilde).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageIiiConfig {
    pub l: f64,
    pub k: Modulus,
    #[serde(rename = "Ltilde")]
    pub full_period: f64,
}

/// Stage I configuration: base pose (planar triple; semi-spatial fields
/// carried but not planned over) plus free elastica parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageIConfig {
    pub base: Pose,
    pub params: ElasticaParams,
}

/// Outcome of a feasibility predicate, with the signed margin to the
/// constraint boundary (positive = feasible with slack).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub feasible: bool,
    pub margin: f64,
}

/// Stage II shape: full-length free elastica anchored at the fixed tip
/// with zero curvature there, tip tangent `cfg.phi_tip`, gripper at s = L.
pub fn stage2_shape(
    cfg: &StageIiConfig,
    tip: &Pose,
    dir: RollDirection,
    stiffness: &StiffnessSpec,
    n: usize,
) -> Result<DloShape> {
    let params = dir.contact_params(cfg.k, cfg.full_period)?;
    let base = Pose::planar(tip.x, tip.y, cfg.phi_tip);
    eval_shape(base, &params, stiffness, n)
}

/// Stage III composite: straight surface-aligned segment over [0, l],
/// contact-free elastica of length L - l after it, position/tangent
/// continuous with zero curvature at the junction.
pub fn stage3_shape(
    cfg: &StageIiiConfig,
    anchor: &Pose,
    dir: RollDirection,
    stiffness: &StiffnessSpec,
    n: usize,
) -> Result<DloShape> {
    let length = stiffness.length;
    if !(0.0..=length * (1.0 + 1e-12)).contains(&cfg.l) {
        return Err(Error::InvalidArgument(format!(
            "contact length {} outside [0, {length}]",
            cfg.l
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if wrap_angle(anchor.phi).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "stage III anchor tangent must be aligned with the surface".into(),
        ));
    }
    let l = cfg.l.min(length);
    let params = dir.contact_params(cfg.k, cfg.full_period)?;
    let free_len = length - l;
    if !params.is_degenerate() && free_len > cfg.full_period * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "free portion {free_len} exceeds full-period length {}",
            cfg.full_period
        )));
    }
    let junction = Pose::planar(anchor.x + l, anchor.y, 0.0);
    let cf = ClosedForm::new(junction, &params);
    let ds = length / (n - 1) as f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i + 1 == n { length } else { i as f64 * ds };
        if s <= l {
            samples.push(DloState { s, x: anchor.x + s, y: anchor.y, phi: 0.0, kappa: 0.0 });
        } else {
            let mut st = cf.state_at(s - l);
            st.s = s;
            samples.push(st);
        }
    }
    DloShape::from_samples(samples, params, *anchor, *stiffness)
}

/// Non-slip check: the tip contact force direction (the elastica axis
/// angle φ0) must lie inside the friction cone of half-angle arctan(μ)
/// around the surface normal. Strict inequality at the boundary.
pub fn friction_check(
    params: &ElasticaParams,
    phi_contact: f64,
    dir: RollDirection,
    surface: &SurfaceSpec,
) -> Result<Verdict> {
    let frac = dir.phase_fraction();
    let oriented =
        ElasticaParams::new(params.k(), frac * params.full_period(), params.full_period())?;
    let branch = branch_for_phase(oriented.s0(), oriented.full_period());
    let phi0 = elastica_axis_angle(&oriented, phi_contact, branch)?;
    let deviation = wrap_angle(phi0 - surface.alpha).abs();
    let margin = surface.mu().atan() - deviation;
    Ok(Verdict { feasible: margin > 0.0, margin })
}

/// Non-penetration: every sample must satisfy y(s) >= y0, with a
/// 1e-9 · L slack for closed-form round-off at the contact point.
pub fn penetration_check(shape: &DloShape, surface: &SurfaceSpec) -> Verdict {
    let margin = shape
        .samples()
        .iter()
        .map(|st| st.y - surface.y0)
        .fold(f64::INFINITY, f64::min);
    Verdict { feasible: margin >= -1e-9 * shape.stiffness.length, margin }
}

/// Discretized self-intersection test: no two non-adjacent sample
/// segments may intersect (exclusion window of one neighbor).
pub fn self_intersection_check(shape: &DloShape) -> Verdict {
    let pts: Vec<(f64, f64)> = shape.samples().iter().map(|st| (st.x, st.y)).collect();
    let feasible = !polyline_self_intersects(&pts);
    Verdict { feasible, margin: if feasible { 0.0 } else { -1.0 } }
}

pub(crate) fn polyline_self_intersects(pts: &[(f64, f64)]) -> bool {
    let nseg = pts.len().saturating_sub(1);
    for i in 0..nseg {
        for j in (i + 2)..nseg {
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return true;
            }
        }
    }
    false
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    // bounding-box reject
    if a.0.max(b.0) < c.0.min(d.0)
        || c.0.max(d.0) < a.0.min(b.0)
        || a.1.max(b.1) < c.1.min(d.1)
        || c.1.max(d.1) < a.1.min(b.1)
    {
        return false;
    }
    let scale = (b.0 - a.0).hypot(b.1 - a.1) * (d.0 - c.0).hypot(d.1 - c.1);
    let eps = 1e-12 * scale;
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| -> f64 {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    };
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    if d1.abs() <= eps && d2.abs() <= eps {
        // collinear: overlap test on the dominant axis
        let (alo, ahi) = (a.0.min(b.0), a.0.max(b.0));
        let (clo, chi) = (c.0.min(d.0), c.0.max(d.0));
        let (ylo, yhi) = (a.1.min(b.1), a.1.max(b.1));
        let (zlo, zhi) = (c.1.min(d.1), c.1.max(d.1));
        if (ahi - alo).max(chi - clo) >= (yhi - ylo).max(zhi - zlo) {
            return ahi > clo && chi > alo;
        }
        return yhi > zlo && zhi > ylo;
    }
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

/// Gripper command pose for a shape: the state at s = L, angle wrapped.
pub fn grasp_pose(shape: &DloShape) -> Pose {
    let st = shape.grasp_state();
    Pose::planar(st.x, st.y, st.phi)
}
