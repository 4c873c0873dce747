//! Free-space equilibrium shapes of a deformable linear object (DLO).
//!
//! A shape is determined modulo rigid placement by the triple
//! (k, s0, Ltilde): elliptic modulus, arclength phase of the rod start
//! inside the periodic solution, and full-period length. Curvature along
//! an inflectional elastica is
//!
//! ```text
//! kappa(s) = 2 k w cn(w (s + s0), k),   w = 4 K(k) / Ltilde
//! ```
//!
//! The position closed form integrates the tangent analytically through
//! the incomplete elliptic integral of the second kind. The curvature
//! closed form is not taken on faith: `hamiltonian_residual` and
//! `integrate_adjoint` verify the first integral of the energy functional
//! and the Euler-Bernoulli bending law on every shape the tests produce.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elliptic::{complete_k, incomplete_e, jacobi_am, Modulus};
use crate::error::{Error, Result};

/// Below this modulus the shape is treated as a straight segment and the
/// full-period length is unidentifiable.
pub const DEGENERATE_K: f64 = 1e-6;

/// Wrap an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// DLO base-frame position and tangent direction. `z` and `theta` carry
/// the semi-spatial pose; planning only uses the planar triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl Pose {
    pub fn planar(x: f64, y: f64, phi: f64) -> Self {
        Pose { x, y, phi: wrap_angle(phi), z: None, theta: None }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    k: f64,
    s0: f64,
    #[serde(rename = "Ltilde")]
    full_period: f64,
}

/// The elastica parameter triple (k, s0, Ltilde).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ElasticaParams {
    k: Modulus,
    s0: f64,
    full_period: f64,
}

impl ElasticaParams {
    /// `s0` is stored modulo the full period.
    pub fn new(k: Modulus, s0: f64, full_period: f64) -> Result<Self> {
        if !(full_period.is_finite() && full_period > 0.0) {
            return Err(Error::InvalidParams(format!(
                "full-period length must be positive, got {full_period}"
            )));
        }
        if !s0.is_finite() {
            return Err(Error::InvalidParams(format!("phase s0 must be finite, got {s0}")));
        }
        Ok(ElasticaParams { k, s0: s0.rem_euclid(full_period), full_period })
    }

    #[inline]
    pub fn k(&self) -> Modulus {
        self.k
    }

    #[inline]
    pub fn s0(&self) -> f64 {
        self.s0
    }

    #[inline]
    pub fn full_period(&self) -> f64 {
        self.full_period
    }

    /// Straight-line limit; the full period carries no shape information here.
    #[inline]
    pub fn is_degenerate(&self) -> bool {
        self.k.get() < DEGENERATE_K
    }
}

impl TryFrom<ParamsRepr> for ElasticaParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        ElasticaParams::new(Modulus::new(r.k)?, r.s0, r.full_period)
    }
}

impl From<ElasticaParams> for ParamsRepr {
    fn from(p: ElasticaParams) -> ParamsRepr {
        ParamsRepr { k: p.k.get(), s0: p.s0, full_period: p.full_period }
    }
}

/// Known bending stiffness EI and physical rod length L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessSpec {
    #[serde(rename = "EI")]
    pub ei: f64,
    #[serde(rename = "L")]
    pub length: f64,
}

impl StiffnessSpec {
    pub fn new(ei: f64, length: f64) -> Result<Self> {
        if !(ei.is_finite() && ei > 0.0) {
            return Err(Error::InvalidParams(format!("stiffness EI must be positive, got {ei}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParams(format!("DLO length must be positive, got {length}")));
        }
        Ok(StiffnessSpec { ei, length })
    }
}

/// One arclength sample of the DLO state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DloState {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub kappa: f64,
}

/// Arclength-sampled shape plus everything that generated it.
///
/// `phi` along the samples is continuous (not wrapped); only poses carry
/// normalized angles. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DloShape {
    samples: Vec<DloState>,
    pub params: ElasticaParams,
    pub base: Pose,
    pub stiffness: StiffnessSpec,
}

impl DloShape {
    /// Wrap externally produced samples; `s` must be strictly increasing
    /// starting at 0.
    pub fn from_samples(
        samples: Vec<DloState>,
        params: ElasticaParams,
        base: Pose,
        stiffness: StiffnessSpec,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("a shape needs at least 2 samples".into()));
        }
        if samples[0].s != 0.0 {
            return Err(Error::InvalidArgument("shape samples must start at s = 0".into()));
        }
        if samples.windows(2).any(|w| w[1].s <= w[0].s) {
            return Err(Error::InvalidArgument("shape samples must be strictly increasing in s".into()));
        }
        Ok(DloShape { samples, params, base, stiffness })
    }

    #[inline]
    pub fn samples(&self) -> &[DloState] {
        &self.samples
    }

    pub fn grasp_state(&self) -> &DloState {
        self.samples.last().expect("shape has samples")
    }
}

/// Spatial frequency of the curvature wave: w = 4 K(k) / Ltilde, so the
/// curvature completes one full cn period over the full-period length.
pub fn angular_frequency(params: &ElasticaParams) -> f64 {
    4.0 * complete_k(params.k()) / params.full_period()
}

/// Curvature of the inflectional elastica at arclength s.
pub fn curvature_at(params: &ElasticaParams, s: f64) -> f64 {
    if params.is_degenerate() {
        return 0.0;
    }
    let w = angular_frequency(params);
    let k = params.k().get();
    let u = w * (s + params.s0());
    2.0 * k * w * jacobi_am(u, params.k()).cos()
}

/// Precomputed closed-form evaluator for one (base, params) pair.
pub(crate) struct ClosedForm {
    base: Pose,
    k: f64,
    modulus: Modulus,
    w: f64,
    u0: f64,
    e0: f64,
    cn0: f64,
    phi_axis: f64,
    degenerate: bool,
}

impl ClosedForm {
    pub(crate) fn new(base: Pose, params: &ElasticaParams) -> Self {
        if params.is_degenerate() {
            return ClosedForm {
                base,
                k: 0.0,
                modulus: params.k(),
                w: 0.0,
                u0: 0.0,
                e0: 0.0,
                cn0: 1.0,
                phi_axis: base.phi,
                degenerate: true,
            };
        }
        let k = params.k().get();
        let w = angular_frequency(params);
        let u0 = w * params.s0();
        let am0 = jacobi_am(u0, params.k());
        let e0 = incomplete_e(am0, params.k());
        let cn0 = am0.cos();
        let theta0 = 2.0 * (k * am0.sin()).asin();
        ClosedForm {
            base,
            k,
            modulus: params.k(),
            w,
            u0,
            e0,
            cn0,
            phi_axis: base.phi - theta0,
            degenerate: false,
        }
    }

    /// Elastica-axis angle of this embedding.
    pub(crate) fn axis_angle(&self) -> f64 {
        self.phi_axis
    }

    pub(crate) fn state_at(&self, s: f64) -> DloState {
        if self.degenerate {
            return DloState {
                s,
                x: self.base.x + s * self.base.phi.cos(),
                y: self.base.y + s * self.base.phi.sin(),
                phi: self.base.phi,
                kappa: 0.0,
            };
        }
        let u = self.u0 + self.w * s;
        let am = jacobi_am(u, self.modulus);
        let sn = am.sin();
        let cn = am.cos();
        let e_u = incomplete_e(am, self.modulus);
        let theta = 2.0 * (self.k * sn).asin();
        // Along-axis / cross-axis displacement of the inflectional elastica.
        let a = (2.0 * (e_u - self.e0) - (u - self.u0)) / self.w;
        let b = -(2.0 * self.k / self.w) * (cn - self.cn0);
        let (sin_ax, cos_ax) = self.phi_axis.sin_cos();
        DloState {
            s,
            x: self.base.x + cos_ax * a - sin_ax * b,
            y: self.base.y + sin_ax * a + cos_ax * b,
            phi: self.phi_axis + theta,
            kappa: 2.0 * self.k * self.w * cn,
        }
    }
}

/// Evaluate the equilibrium shape at `n` uniformly spaced arclength
/// samples over [0, L]. Sample 0 coincides exactly with the base pose.
pub fn eval_shape(
    base: Pose,
    params: &ElasticaParams,
    stiffness: &StiffnessSpec,
    n: usize,
) -> Result<DloShape> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    if !params.is_degenerate() && stiffness.length > params.full_period() * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "physical length {} exceeds full-period length {}",
            stiffness.length,
            params.full_period()
        )));
    }
    let cf = ClosedForm::new(base, params);
    let ds = stiffness.length / (n - 1) as f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i + 1 == n { stiffness.length } else { i as f64 * ds };
        samples.push(cf.state_at(s));
    }
    // exact anchoring at the base
    samples[0] = DloState { s: 0.0, x: base.x, y: base.y, phi: base.phi, kappa: samples[0].kappa };
    DloShape::from_samples(samples, *params, base, *stiffness)
}

/// Total elastic bending energy (EI/2) ∫ κ² ds by composite trapezoid
/// over the shape samples.
pub fn elastic_energy(shape: &DloShape) -> f64 {
    let s = shape.samples();
    let mut acc = 0.0;
    for w in s.windows(2) {
        acc += 0.5 * (w[0].kappa * w[0].kappa + w[1].kappa * w[1].kappa) * (w[1].s - w[0].s);
    }
    0.5 * shape.stiffness.ei * acc
}

/// Magnitude of the opposing endpoint forces of the embedding periodic
/// elastica, λr = EI w².
pub fn lambda_r(params: &ElasticaParams, stiffness: &StiffnessSpec) -> Result<f64> {
    if params.is_degenerate() {
        return Err(Error::Degenerate("force direction undefined for a straight line".into()));
    }
    let w = angular_frequency(params);
    Ok(stiffness.ei * w * w)
}

/// Which of the two elastica-axis solutions to take in
/// [`elastica_axis_angle`]. `Minus` is the branch consistent with the
/// first-integral constancy test at phase s0 = Ltilde/4, `Plus` at
/// s0 = 3 Ltilde/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// Angle of the elastica axis given the tangent at an inflection point:
/// cos(phi_at_inflection - phi0) = 1 - 2k², i.e. phi0 differs from the
/// inflection tangent by ±2 asin(k).
pub fn elastica_axis_angle(
    params: &ElasticaParams,
    phi_at_inflection: f64,
    branch: Branch,
) -> Result<f64> {
    if params.is_degenerate() {
        return Err(Error::Degenerate("elastica axis undefined for a straight line".into()));
    }
    let delta = 2.0 * params.k().get().asin();
    Ok(match branch {
        Branch::Plus => phi_at_inflection + delta,
        Branch::Minus => phi_at_inflection - delta,
    })
}

/// Branch consistent with a given phase fraction (s0 / Ltilde).
pub(crate) fn branch_for_phase(s0: f64, full_period: f64) -> Branch {
    // Phase Ltilde/4 sits where sn = +1, 3 Ltilde/4 where sn = -1.
    let frac = (s0 / full_period).rem_euclid(1.0);
    if (frac - 0.25).abs() <= (frac - 0.75).abs() {
        Branch::Minus
    } else {
        Branch::Plus
    }
}

/// Max-normalized residual of the first integral
/// λr cos(φ(s) − φ0) − ½ EI κ²(s) = H* along the shape samples.
pub fn hamiltonian_residual(shape: &DloShape) -> Result<f64> {
    if shape.params.is_degenerate() {
        return Err(Error::Degenerate("Hamiltonian residual undefined for a straight line".into()));
    }
    if shape.samples().len() < 10 {
        return Err(Error::InvalidArgument("need at least 10 samples".into()));
    }
    let lr = lambda_r(&shape.params, &shape.stiffness)?;
    let phi0 = ClosedForm::new(shape.base, &shape.params).axis_angle();
    let ei = shape.stiffness.ei;
    let h = |st: &DloState| lr * (st.phi - phi0).cos() - 0.5 * ei * st.kappa * st.kappa;
    let h_star = h(&shape.samples()[0]);
    let mut worst = 0.0_f64;
    for st in shape.samples() {
        worst = worst.max((h(st) - h_star).abs());
    }
    Ok(worst / lr)
}

/// Costates along a shape: λx, λy are constants of the adjoint system;
/// λφ is sampled along s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostateRecord {
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// (s, λφ(s)) at the shape's sample arclengths.
    pub lambda_phi: Vec<(f64, f64)>,
}

/// Integrate the adjoint equation λφ' = λx sin φ − λy cos φ from
/// λφ(0) = −EI κ(0), with λx = λr cos φ0 and λy = λr sin φ0.
///
/// The tangent φ(s) is taken from the position closed form, so the
/// integration is an independent route that the Euler-Bernoulli law
/// λφ(s) + EI κ(s) = 0 can be checked against.
pub fn integrate_adjoint(shape: &DloShape) -> Result<CostateRecord> {
    if shape.params.is_degenerate() {
        return Err(Error::Degenerate("adjoint undefined for a straight line".into()));
    }
    let lr = lambda_r(&shape.params, &shape.stiffness)?;
    let cf = ClosedForm::new(shape.base, &shape.params);
    let phi0 = cf.axis_angle();
    let (lx, ly) = (lr * phi0.cos(), lr * phi0.sin());
    let rhs = |s: f64| {
        let phi = cf.state_at(s).phi;
        lx * phi.sin() - ly * phi.cos()
    };

    let n = shape.samples().len();
    let substeps = (4000 / (n - 1)).max(4);
    let mut lam = -shape.stiffness.ei * shape.samples()[0].kappa;
    let mut record = Vec::with_capacity(n);
    record.push((0.0, lam));
    for w in shape.samples().windows(2) {
        let h = (w[1].s - w[0].s) / substeps as f64;
        let mut s = w[0].s;
        for _ in 0..substeps {
            let k1 = rhs(s);
            let k2 = rhs(s + 0.5 * h);
            let k4 = rhs(s + h);
            lam += h / 6.0 * (k1 + 4.0 * k2 + k4);
            s += h;
        }
        record.push((w[1].s, lam));
    }
    Ok(CostateRecord { lambda_x: lx, lambda_y: ly, lambda_phi: record })
}
