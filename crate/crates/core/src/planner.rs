//! Three-stage placement planning.
//!
//! Stage I transports the free DLO until its tip touches the surface
//! (shortest grid path, A* with an admissible tip-height heuristic —
//! same costs as uniform-cost search, far fewer expansions). Stage II
//! rolls the tip tangent to zero without slipping; stage III grows the
//! placed straight segment until the whole DLO lies on the surface.
//! Stages II and III move through local minima of the elastic energy:
//! at each step the (k, Ltilde) pair is chosen greedily among the 3x3
//! grid neighbors of its predecessor, feasibility-filtered, tie-broken
//! toward smaller k then smaller Ltilde.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::elastica::{
    elastic_energy, eval_shape, wrap_angle, DloShape, ElasticaParams, Pose, StiffnessSpec,
};
use crate::elliptic::{Modulus, MODULUS_MAX};
use crate::error::{Error, Result};
use crate::placement::{
    friction_check, grasp_pose, penetration_check, self_intersection_check, stage2_shape,
    stage3_shape, RollDirection, StageIConfig, StageIiConfig, StageIiiConfig, SurfaceSpec,
};

/// Samples used for planner-internal shape evaluation and checks.
const PLAN_SAMPLES: usize = 96;

/// Stage I node-expansion budget.
const STAGE1_BUDGET: usize = 1_000_000;

/// Grid resolutions of the configuration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dphi: f64,
    pub dtheta: f64,
    #[serde(rename = "dLtilde")]
    pub d_full_period: f64,
    pub dk: f64,
    pub dl: f64,
}

impl GridSpec {
    /// Default resolutions as fractions of the DLO length: position
    /// 0.01 L, angles 2 degrees, dLtilde 0.02 L, dk 0.005, dl 0.05 L.
    pub fn defaults_for(length: f64) -> Self {
        let deg2 = 2.0_f64.to_radians();
        GridSpec {
            dx: 0.01 * length,
            dy: 0.01 * length,
            dz: 0.01 * length,
            dphi: deg2,
            dtheta: deg2,
            d_full_period: 0.02 * length,
            dk: 0.005,
            dl: 0.05 * length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.dx, self.dy, self.dz, self.dphi, self.dtheta, self.d_full_period, self.dk,
            self.dl,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(
                "all grid resolutions must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Placement stage of a plan node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
    III,
}

/// One waypoint of the plan: gripper pose, elastica parameters, placed
/// length, and the feasibility margins it was admitted with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub stage: Stage,
    pub grasp: Pose,
    pub params: ElasticaParams,
    /// Placed (surface-contact) length; 0 outside stage III.
    pub l: f64,
    /// Friction-cone margin; absent where no surface contact exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_margin: Option<f64>,
    pub penetration_margin: f64,
}

/// A full gripper trajectory: header (everything needed to re-validate
/// and simulate it) plus the ordered node list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPath {
    pub grid: GridSpec,
    pub surface: SurfaceSpec,
    pub stiffness: StiffnessSpec,
    pub direction: RollDirection,
    pub nodes: Vec<PlanNode>,
    /// Indices where the stage changes (first node of each later stage).
    pub stage_boundaries: Vec<usize>,
}

impl PlanPath {
    /// Nodes belonging to one stage.
    pub fn stage_nodes(&self, stage: Stage) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(move |n| n.stage == stage)
    }

    /// Structural invariants: monotone stage sequence consistent with
    /// the recorded boundaries, strictly increasing l ending at L, and
    /// grid-step-bounded consecutive grasp poses.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("empty plan".into()));
        }
        let mut boundaries = Vec::new();
        for (i, w) in self.nodes.windows(2).enumerate() {
            if w[1].stage < w[0].stage {
                return Err(Error::InvalidArgument(format!(
                    "stage order violated at node {}",
                    i + 1
                )));
            }
            if w[1].stage != w[0].stage {
                boundaries.push(i + 1);
            }
            if w[0].stage == Stage::III && w[1].l <= w[0].l {
                return Err(Error::InvalidArgument(format!(
                    "placed length not increasing at node {}",
                    i + 1
                )));
            }
            // Stage III transitions additionally slide the grasp along the
            // free curve by dl, translating it by up to 2 dl and rotating it
            // by up to dl times the curvature amplitude 2 k w.
            let kappa_max = if w[1].params.is_degenerate() {
                0.0
            } else {
                2.0 * w[1].params.k().get()
                    * crate::elastica::angular_frequency(&w[1].params)
            };
            let roll = if w[1].stage == Stage::III { self.grid.dl } else { 0.0 };
            let dpos = (w[1].grasp.x - w[0].grasp.x).hypot(w[1].grasp.y - w[0].grasp.y);
            let step_bound = self.grid.dx.hypot(self.grid.dy)
                + self.stiffness.length * self.grid.dphi
                + 2.0 * roll;
            if dpos > step_bound + 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "grasp position jump {dpos} exceeds grid step bound {step_bound} at node {}",
                    i + 1
                )));
            }
            // One (k, Ltilde) grid-cell move changes the rod's total tangent
            // turn by at most 4 dk / k' (endpoint slopes of 2 asin(k sn))
            // plus kappa_max L dLtilde / Ltilde (frequency shift).
            let param_turn = if w[1].params.is_degenerate() {
                0.0
            } else {
                let kp = w[1].params.k().complement().max(1e-6);
                4.0 * self.grid.dk / kp
                    + kappa_max * self.stiffness.length * self.grid.d_full_period
                        / w[1].params.full_period()
            };
            let dang = wrap_angle(w[1].grasp.phi - w[0].grasp.phi).abs();
            if dang > self.grid.dphi + self.grid.dtheta + roll * kappa_max + param_turn + 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "grasp angle jump {dang} exceeds grid step bound at node {}",
                    i + 1
                )));
            }
        }
        if boundaries != self.stage_boundaries {
            return Err(Error::InvalidArgument("stage boundary indices inconsistent".into()));
        }
        let last = self.nodes.last().expect("nonempty");
        if last.stage == Stage::III
            && (last.l - self.stiffness.length).abs() > 1e-9 * self.stiffness.length
        {
            return Err(Error::InvalidArgument(
                "stage III must terminate fully placed (l = L)".into(),
            ));
        }
        Ok(())
    }
}

/// Reconstruct the full sampled shape a plan node stands for. Stage I/II
/// nodes re-anchor the free elastica so its gripper end coincides with
/// the stored grasp pose; stage III nodes rebuild the straight-plus-free
/// composite the same way.
pub fn node_shape(node: &PlanNode, stiffness: &StiffnessSpec, n: usize) -> Result<DloShape> {
    if node.stage == Stage::III {
        let frac = node.params.s0() / node.params.full_period();
        let dir = if (frac - 0.25).abs() <= (frac - 0.75).abs() {
            RollDirection::Rightward
        } else {
            RollDirection::Leftward
        };
        let cfg = StageIiiConfig {
            l: node.l,
            k: node.params.k(),
            full_period: node.params.full_period(),
        };
        let rel = stage3_shape(&cfg, &Pose::planar(0.0, 0.0, 0.0), dir, stiffness, n)?;
        let g = rel.grasp_state();
        let anchor = Pose::planar(node.grasp.x - g.x, node.grasp.y - g.y, 0.0);
        return stage3_shape(&cfg, &anchor, dir, stiffness, n);
    }
    // total tangent turn over the rod depends only on the parameters
    let probe = eval_shape(Pose::planar(0.0, 0.0, 0.0), &node.params, stiffness, 2)?;
    let turn = probe.grasp_state().phi;
    let phi_base = wrap_angle(node.grasp.phi - turn);
    let rel = eval_shape(Pose::planar(0.0, 0.0, phi_base), &node.params, stiffness, n)?;
    let g = rel.grasp_state();
    let base = Pose::planar(node.grasp.x - g.x, node.grasp.y - g.y, phi_base);
    eval_shape(base, &node.params, stiffness, n)
}

fn free_node(stage: Stage, shape: &DloShape, surface: &SurfaceSpec) -> PlanNode {
    PlanNode {
        stage,
        grasp: grasp_pose(shape),
        params: shape.params,
        l: 0.0,
        friction_margin: None,
        penetration_margin: penetration_check(shape, surface).margin,
    }
}

fn shape_ok(shape: &DloShape, surface: &SurfaceSpec) -> bool {
    penetration_check(shape, surface).feasible && self_intersection_check(shape).feasible
}

// ---------------------------------------------------------------------
// Stage I: A* over the 5-D grid (x, y, phi, k, Ltilde); the tip phase s0
// stays pinned to the roll direction's inflection fraction so the tip
// curvature is identically zero and touchdown is always branch-ready.
// ---------------------------------------------------------------------

type Key = [i64; 5];

struct Stage1Grid<'a> {
    x0: f64,
    surface: &'a SurfaceSpec,
    grid: &'a GridSpec,
    stiffness: &'a StiffnessSpec,
    frac: f64,
    k_max: i64,
    lt_min: i64,
    lt_max: i64,
}

impl Stage1Grid<'_> {
    fn in_bounds(&self, key: Key) -> bool {
        key[1] >= 0
            && (0..=self.k_max).contains(&key[3])
            && (self.lt_min..=self.lt_max).contains(&key[4])
    }

    fn config(&self, key: Key) -> Result<(Pose, ElasticaParams)> {
        let base = Pose::planar(
            self.x0 + key[0] as f64 * self.grid.dx,
            self.surface.y0 + key[1] as f64 * self.grid.dy,
            key[2] as f64 * self.grid.dphi,
        );
        let lt = key[4] as f64 * self.grid.d_full_period;
        let k = Modulus::new(key[3] as f64 * self.grid.dk)?;
        Ok((base, ElasticaParams::new(k, self.frac * lt, lt)?))
    }

    fn shape(&self, key: Key) -> Option<DloShape> {
        let (base, params) = self.config(key).ok()?;
        let shape = eval_shape(base, &params, self.stiffness, PLAN_SAMPLES).ok()?;
        shape_ok(&shape, self.surface).then_some(shape)
    }
}

/// Shortest grid path until the DLO tip touches the surface (tip height
/// within dy/2) with zero tip curvature. The start configuration is
/// snapped to the grid (tip height to surface-aligned dy layers, angle
/// and elastica parameters to resolution multiples, tip phase to the
/// nearest inflection).
pub fn plan_stage1(
    start: &StageIConfig,
    surface: &SurfaceSpec,
    grid: &GridSpec,
    stiffness: &StiffnessSpec,
) -> Result<Vec<PlanNode>> {
    grid.validate()?;
    let shape0 = eval_shape(start.base, &start.params, stiffness, PLAN_SAMPLES)?;
    if !shape_ok(&shape0, surface) {
        return Err(Error::PlanningFailed {
            stage: "I",
            reason: "start shape penetrates the surface or self-intersects".into(),
        });
    }
    if start.base.y - surface.y0 <= 0.5 * grid.dy {
        return Ok(vec![free_node(Stage::I, &shape0, surface)]);
    }

    let frac_raw = start.params.s0() / start.params.full_period();
    let frac = if (frac_raw - 0.25).abs() <= (frac_raw - 0.75).abs() { 0.25 } else { 0.75 };
    let prob = Stage1Grid {
        x0: start.base.x,
        surface,
        grid,
        stiffness,
        frac,
        k_max: (MODULUS_MAX / grid.dk).floor() as i64,
        lt_min: ((stiffness.length - 1e-12) / grid.d_full_period).ceil() as i64,
        lt_max: ((6.0 * stiffness.length) / grid.d_full_period).ceil() as i64,
    };
    let start_key: Key = [
        0,
        ((start.base.y - surface.y0) / grid.dy).round().max(1.0) as i64,
        (start.base.phi / grid.dphi).round() as i64,
        (start.params.k().get() / grid.dk).round().clamp(0.0, prob.k_max as f64) as i64,
        ((start.params.full_period() / grid.d_full_period).round() as i64)
            .clamp(prob.lt_min, prob.lt_max),
    ];
    if prob.shape(start_key).is_none() {
        return Err(Error::PlanningFailed {
            stage: "I",
            reason: "grid-snapped start shape is infeasible".into(),
        });
    }

    const DELTAS: [(usize, i64); 10] = [
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (2, 1),
        (2, -1),
        (3, 1),
        (3, -1),
        (4, 1),
        (4, -1),
    ];
    let h = |key: Key| key[1].max(0);
    let mut best: HashMap<Key, (i64, Option<Key>)> = HashMap::new();
    let mut feasible: HashMap<Key, bool> = HashMap::new();
    let mut open: BinaryHeap<Reverse<(i64, Key)>> = BinaryHeap::new();
    best.insert(start_key, (0, None));
    feasible.insert(start_key, true);
    open.push(Reverse((h(start_key), start_key)));
    let mut expanded = 0usize;

    while let Some(Reverse((f, key))) = open.pop() {
        let (g, _) = best[&key];
        if f > g + h(key) {
            continue; // superseded queue entry
        }
        if key[1] == 0 {
            // reconstruct
            let mut rev = vec![key];
            let mut cur = key;
            while let Some((_, Some(p))) = best.get(&cur) {
                rev.push(*p);
                cur = *p;
            }
            rev.reverse();
            let mut nodes = Vec::with_capacity(rev.len());
            for k in rev {
                let shape = prob.shape(k).expect("expanded nodes are feasible");
                nodes.push(free_node(Stage::I, &shape, surface));
            }
            return Ok(nodes);
        }
        expanded += 1;
        if expanded > STAGE1_BUDGET {
            return Err(Error::PlanningFailed {
                stage: "I",
                reason: format!("node budget {STAGE1_BUDGET} exhausted before touchdown"),
            });
        }
        for (dim, step) in DELTAS {
            let mut nk = key;
            nk[dim] += step;
            if !prob.in_bounds(nk) {
                continue;
            }
            let ok = *feasible.entry(nk).or_insert_with(|| prob.shape(nk).is_some());
            if !ok {
                continue;
            }
            let ng = g + 1;
            if let Some((old, _)) = best.get(&nk) {
                if *old <= ng {
                    continue;
                }
            }
            best.insert(nk, (ng, Some(key)));
            open.push(Reverse((ng + h(nk), nk)));
        }
    }
    Err(Error::PlanningFailed {
        stage: "I",
        reason: "search space exhausted without reaching the surface".into(),
    })
}

// ---------------------------------------------------------------------
// Stages II and III: monotone parameter traversal with greedy
// energy-descent neighbor selection.
// ---------------------------------------------------------------------

struct Selected {
    node: PlanNode,
    k: f64,
    lt: f64,
}

/// Evaluate all 3x3 (k, Ltilde) neighbors of (k, lt), keep the feasible
/// one with minimal elastic energy; candidates are visited in (k, lt)
/// ascending order so ties resolve toward smaller k, then smaller lt.
fn select_neighbor<F>(
    k: f64,
    lt: f64,
    grid: &GridSpec,
    mut eval: F,
) -> std::result::Result<Selected, String>
where
    F: FnMut(f64, f64) -> std::result::Result<(PlanNode, f64), String>,
{
    let mut best: Option<(f64, Selected)> = None;
    let mut stay_reason = String::from("candidate out of range");
    for ik in [-1.0, 0.0, 1.0] {
        for il in [-1.0, 0.0, 1.0] {
            let ck = k + ik * grid.dk;
            let clt = lt + il * grid.d_full_period;
            if !(grid.dk * 0.5..=MODULUS_MAX).contains(&ck) || clt <= 0.0 {
                continue;
            }
            match eval(ck, clt) {
                Ok((node, energy)) => {
                    let better = match &best {
                        None => true,
                        Some((be, _)) => energy < be - 1e-12 * (1.0 + be.abs()),
                    };
                    if better {
                        best = Some((energy, Selected { node, k: ck, lt: clt }));
                    }
                }
                Err(reason) => {
                    if ik == 0.0 && il == 0.0 {
                        stay_reason = reason;
                    }
                }
            }
        }
    }
    best.map(|(_, s)| s).ok_or(stay_reason)
}

/// Roll the tip tangent from `entry.phi_tip` to zero in dphi steps while
/// the tip pose and inflection phase stay fixed. Returns the nodes after
/// the entry configuration (empty when the tangent is already zero).
pub fn plan_stage2(
    touch: &Pose,
    entry: &StageIiConfig,
    dir: RollDirection,
    surface: &SurfaceSpec,
    grid: &GridSpec,
    stiffness: &StiffnessSpec,
) -> Result<Vec<PlanNode>> {
    grid.validate()?;
    let total = entry.phi_tip.abs();
    if total <= 1e-12 {
        return Ok(Vec::new());
    }
    let sign = entry.phi_tip.signum();
    let steps = ((total / grid.dphi) - 1e-9).ceil().max(1.0) as usize;
    let (mut k, mut lt) = (entry.k.get(), entry.full_period);
    let mut nodes = Vec::with_capacity(steps);
    for i in 1..=steps {
        let phi_i = if i == steps { 0.0 } else { sign * (total - i as f64 * grid.dphi) };
        let sel = select_neighbor(k, lt, grid, |ck, clt| {
            let km = Modulus::new(ck).map_err(|e| e.to_string())?;
            let params = dir.contact_params(km, clt).map_err(|e| e.to_string())?;
            let fr = friction_check(&params, phi_i, dir, surface).map_err(|e| e.to_string())?;
            if !fr.feasible {
                return Err(format!("friction cone violated (margin {:.3e})", fr.margin));
            }
            let cfg = StageIiConfig { phi_tip: phi_i, k: km, full_period: clt };
            let shape = stage2_shape(&cfg, touch, dir, stiffness, PLAN_SAMPLES)
                .map_err(|e| e.to_string())?;
            let pen = penetration_check(&shape, surface);
            if !pen.feasible {
                return Err(format!("surface penetration (margin {:.3e})", pen.margin));
            }
            if !self_intersection_check(&shape).feasible {
                return Err("self-intersection".into());
            }
            let node = PlanNode {
                stage: Stage::II,
                grasp: grasp_pose(&shape),
                params: shape.params,
                l: 0.0,
                friction_margin: Some(fr.margin),
                penetration_margin: pen.margin,
            };
            Ok((node, elastic_energy(&shape)))
        })
        .map_err(|why| Error::PlanningFailed {
            stage: "II",
            reason: format!("no feasible neighbor at phi_tip = {phi_i:.6} rad (step {i}): {why}"),
        })?;
        k = sel.k;
        lt = sel.lt;
        nodes.push(sel.node);
    }
    Ok(nodes)
}

/// Advance the placed length from `entry.l` to L in dl steps. The entry
/// configuration itself is the first node.
pub fn plan_stage3(
    anchor: &Pose,
    entry: &StageIiiConfig,
    dir: RollDirection,
    surface: &SurfaceSpec,
    grid: &GridSpec,
    stiffness: &StiffnessSpec,
) -> Result<Vec<PlanNode>> {
    grid.validate()?;
    let length = stiffness.length;
    let eval_at = |l: f64, ck: f64, clt: f64| -> std::result::Result<(PlanNode, f64), String> {
        let km = Modulus::new(ck).map_err(|e| e.to_string())?;
        let params = dir.contact_params(km, clt).map_err(|e| e.to_string())?;
        let fr = friction_check(&params, 0.0, dir, surface).map_err(|e| e.to_string())?;
        if !fr.feasible {
            return Err(format!("friction cone violated (margin {:.3e})", fr.margin));
        }
        let cfg = StageIiiConfig { l, k: km, full_period: clt };
        let shape = stage3_shape(&cfg, anchor, dir, stiffness, PLAN_SAMPLES)
            .map_err(|e| e.to_string())?;
        let pen = penetration_check(&shape, surface);
        if !pen.feasible {
            return Err(format!("surface penetration (margin {:.3e})", pen.margin));
        }
        if !self_intersection_check(&shape).feasible {
            return Err("self-intersection".into());
        }
        let node = PlanNode {
            stage: Stage::III,
            grasp: grasp_pose(&shape),
            params: shape.params,
            l,
            friction_margin: Some(fr.margin),
            penetration_margin: pen.margin,
        };
        Ok((node, elastic_energy(&shape)))
    };

    let (mut k, mut lt) = (entry.k.get(), entry.full_period);
    let (first, _) = eval_at(entry.l, k, lt).map_err(|why| Error::PlanningFailed {
        stage: "III",
        reason: format!("entry configuration infeasible at l = {}: {why}", entry.l),
    })?;
    let mut nodes = vec![first];
    let mut l = entry.l;
    while l < length - 1e-12 * length {
        l = (l + grid.dl).min(length);
        let sel = select_neighbor(k, lt, grid, |ck, clt| eval_at(l, ck, clt)).map_err(|why| {
            Error::PlanningFailed {
                stage: "III",
                reason: format!("no feasible neighbor at l = {l:.6}: {why}"),
            }
        })?;
        k = sel.k;
        lt = sel.lt;
        nodes.push(sel.node);
    }
    Ok(nodes)
}

/// Full three-stage plan: free transport, tip rolling, full rolling.
/// Shared boundary configurations appear once.
pub fn plan_full(
    start: &StageIConfig,
    surface: &SurfaceSpec,
    dir: RollDirection,
    grid: &GridSpec,
    stiffness: &StiffnessSpec,
) -> Result<PlanPath> {
    grid.validate()?;
    let length = stiffness.length;
    let path = |nodes: Vec<PlanNode>| {
        let stage_boundaries = nodes
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].stage != w[0].stage)
            .map(|(i, _)| i + 1)
            .collect();
        PlanPath {
            grid: *grid,
            surface: *surface,
            stiffness: *stiffness,
            direction: dir,
            nodes,
            stage_boundaries,
        }
    };

    // already fully placed: a single terminal node
    if start.params.is_degenerate()
        && wrap_angle(start.base.phi).abs() <= 1e-9
        && (start.base.y - surface.y0).abs() <= 1e-9 * length
    {
        let cfg = StageIiiConfig {
            l: length,
            k: start.params.k(),
            full_period: start.params.full_period(),
        };
        let anchor = Pose::planar(start.base.x, surface.y0, 0.0);
        let shape = stage3_shape(&cfg, &anchor, dir, stiffness, PLAN_SAMPLES)?;
        let node = PlanNode {
            stage: Stage::III,
            grasp: grasp_pose(&shape),
            params: shape.params,
            l: length,
            friction_margin: None,
            penetration_margin: penetration_check(&shape, surface).margin,
        };
        return Ok(path(vec![node]));
    }

    let snapped = snap_start(start, surface, dir, grid, stiffness)?;
    let mut nodes = plan_stage1(&snapped, surface, grid, stiffness)?;

    // recover the touchdown tip pose from the stage I terminal node
    let term = *nodes.last().expect("stage I returns at least one node");
    let term_shape = node_shape(&term, stiffness, PLAN_SAMPLES)?;
    let tip = term_shape.samples()[0];
    let touch = Pose::planar(tip.x, surface.y0, tip.phi);

    let entry2 = StageIiConfig {
        phi_tip: touch.phi,
        k: term.params.k(),
        full_period: term.params.full_period(),
    };
    let s2 = plan_stage2(&touch, &entry2, dir, surface, grid, stiffness)?;
    let (k2, lt2) = s2
        .last()
        .map(|n| (n.params.k(), n.params.full_period()))
        .unwrap_or((entry2.k, entry2.full_period));
    nodes.extend(s2);

    let anchor = Pose::planar(touch.x, surface.y0, 0.0);
    let entry3 = StageIiiConfig { l: 0.0, k: k2, full_period: lt2 };
    let s3 = plan_stage3(&anchor, &entry3, dir, surface, grid, stiffness)?;
    // the l = 0 node repeats the previous stage's terminal configuration
    nodes.extend(s3.into_iter().skip(1));

    Ok(path(nodes))
}

/// Snap a stage I start onto the planning grid: tip height to
/// surface-aligned dy layers, tangent/modulus/full-period to resolution
/// multiples, tip phase to the roll direction's inflection.
fn snap_start(
    start: &StageIConfig,
    surface: &SurfaceSpec,
    dir: RollDirection,
    grid: &GridSpec,
    stiffness: &StiffnessSpec,
) -> Result<StageIConfig> {
    let gap = start.base.y - surface.y0;
    let m = if gap <= 0.5 * grid.dy { 0.0 } else { (gap / grid.dy).round().max(1.0) };
    let k_max = (MODULUS_MAX / grid.dk).floor();
    let lt_min = ((stiffness.length - 1e-12) / grid.d_full_period).ceil();
    let lt = (start.params.full_period() / grid.d_full_period).round().max(lt_min)
        * grid.d_full_period;
    let k = Modulus::new(
        (start.params.k().get() / grid.dk).round().clamp(0.0, k_max) * grid.dk,
    )?;
    let base = Pose::planar(
        start.base.x,
        surface.y0 + m * grid.dy,
        (start.base.phi / grid.dphi).round() * grid.dphi,
    );
    Ok(StageIConfig { base, params: ElasticaParams::new(k, dir.phase_fraction() * lt, lt)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::{HashSet, VecDeque};
    use std::f64::consts::FRAC_PI_2;

    const L: f64 = 0.3;

    fn stiffness() -> StiffnessSpec {
        StiffnessSpec::new(1e-3, L).unwrap()
    }

    fn surface(mu: f64) -> SurfaceSpec {
        SurfaceSpec::new(0.0, FRAC_PI_2, mu, mu).unwrap()
    }

    fn start(gap: f64, phi: f64, k: f64, lt: f64) -> StageIConfig {
        let params = ElasticaParams::new(Modulus::new(k).unwrap(), 0.75 * lt, lt).unwrap();
        StageIConfig { base: Pose::planar(0.0, gap, phi), params }
    }

    #[test]
    fn grid_defaults_and_validation() {
        let g = GridSpec::defaults_for(L);
        assert_relative_eq!(g.dx, 0.003, epsilon = 1e-15);
        assert_relative_eq!(g.dy, 0.003, epsilon = 1e-15);
        assert_relative_eq!(g.dphi, 2.0_f64.to_radians(), epsilon = 1e-15);
        assert_relative_eq!(g.d_full_period, 0.006, epsilon = 1e-15);
        assert_eq!(g.dk, 0.005);
        assert_relative_eq!(g.dl, 0.015, epsilon = 1e-15);
        assert!(g.validate().is_ok());
        let mut bad = g;
        bad.dk = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stage1_touching_start_is_single_node() {
        let grid = GridSpec::defaults_for(L);
        // straight vertical DLO, tip exactly on the surface
        let s = start(0.0, FRAC_PI_2, 0.0, 0.9);
        let nodes = plan_stage1(&s, &surface(0.5), &grid, &stiffness()).unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].stage, Stage::I);
    }

    #[test]
    fn stage1_pure_descent() {
        let grid = GridSpec::defaults_for(L);
        let gap = 10.0 * grid.dy;
        let s = start(gap, FRAC_PI_2, 0.0, 0.9);
        let nodes = plan_stage1(&s, &surface(0.5), &grid, &stiffness()).unwrap();
        assert_eq!(nodes.len(), 11);
        for (i, n) in nodes.iter().enumerate() {
            // straight vertical rod: grasp sits L above the tip
            assert_relative_eq!(n.grasp.x, 0.0, epsilon = 1e-12);
            assert_relative_eq!(n.grasp.y, gap - i as f64 * grid.dy + L, epsilon = 1e-12);
            assert_relative_eq!(n.grasp.phi, FRAC_PI_2, epsilon = 1e-12);
            assert_eq!(n.params.k().get(), 0.0);
        }
    }

    #[test]
    fn stage1_matches_bfs_oracle_on_coarse_grid() {
        // coarser grid keeps the brute-force uniform-cost ball small
        let mut grid = GridSpec::defaults_for(L);
        grid.dx = 0.0125;
        grid.dy = 0.0125;
        grid.dphi = 10.0_f64.to_radians();
        grid.d_full_period = 0.1;
        grid.dk = 0.05;
        let st = stiffness();
        let surf = surface(0.5);
        for (phi_deg, k) in [(10.0, 0.7), (20.0, 0.65), (0.0, 0.75)] {
            let s = start(0.05, (phi_deg as f64).to_radians(), k, 0.9);
            let nodes = plan_stage1(&s, &surf, &grid, &st).unwrap();
            let astar_cost = nodes.len() - 1;

            // independent breadth-first oracle over the same grid
            let frac = 0.75;
            let key0 = [
                0i64,
                (s.base.y / grid.dy).round() as i64,
                (s.base.phi / grid.dphi).round() as i64,
                (k / grid.dk).round() as i64,
                (0.9 / grid.d_full_period).round() as i64,
            ];
            let feasible = |key: [i64; 5]| -> bool {
                if key[1] < 0 || key[3] < 0 || key[3] as f64 * grid.dk > MODULUS_MAX {
                    return false;
                }
                let lt = key[4] as f64 * grid.d_full_period;
                if lt < L {
                    return false;
                }
                let km = match Modulus::new(key[3] as f64 * grid.dk) {
                    Ok(m) => m,
                    Err(_) => return false,
                };
                let p = ElasticaParams::new(km, frac * lt, lt).unwrap();
                let base = Pose::planar(
                    key[0] as f64 * grid.dx,
                    key[1] as f64 * grid.dy,
                    key[2] as f64 * grid.dphi,
                );
                match eval_shape(base, &p, &st, PLAN_SAMPLES) {
                    Ok(sh) => shape_ok(&sh, &surf),
                    Err(_) => false,
                }
            };
            let mut seen: HashSet<[i64; 5]> = HashSet::from([key0]);
            let mut q = VecDeque::from([(key0, 0usize)]);
            let mut bfs_cost = None;
            while let Some((key, d)) = q.pop_front() {
                if key[1] == 0 {
                    bfs_cost = Some(d);
                    break;
                }
                for dim in 0..5 {
                    for step in [-1i64, 1] {
                        let mut nk = key;
                        nk[dim] += step;
                        if seen.contains(&nk) || !feasible(nk) {
                            continue;
                        }
                        seen.insert(nk);
                        q.push_back((nk, d + 1));
                    }
                }
            }
            assert_eq!(Some(astar_cost), bfs_cost, "phi={phi_deg} k={k}");
        }
    }

    #[test]
    fn stage2_trivial_and_step_count() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let touch = Pose::planar(0.0, 0.0, 0.0);
        let k = Modulus::new(0.7).unwrap();
        let entry = StageIiConfig { phi_tip: 0.0, k, full_period: 0.9 };
        assert!(plan_stage2(&touch, &entry, RollDirection::Leftward, &surf, &grid, &st)
            .unwrap()
            .is_empty());

        let touch = Pose::planar(0.0, 0.0, 10.0_f64.to_radians());
        let entry = StageIiConfig { phi_tip: 10.0_f64.to_radians(), k, full_period: 0.9 };
        let nodes =
            plan_stage2(&touch, &entry, RollDirection::Leftward, &surf, &grid, &st).unwrap();
        assert_eq!(nodes.len(), 5);
        let last = nodes.last().unwrap();
        assert_eq!(last.stage, Stage::II);
        // terminal tip tangent is exactly zero: the node's shape starts flat
        let sh = node_shape(last, &st, 50).unwrap();
        assert!(sh.samples()[0].phi.abs() <= 1e-9);
        // tip position and phase constant across the stage
        for n in &nodes {
            let sh = node_shape(n, &st, 50).unwrap();
            assert!((sh.samples()[0].x - touch.x).abs() <= 1e-8 * L);
            assert!((sh.samples()[0].y - touch.y).abs() <= 1e-8 * L);
            assert_relative_eq!(
                n.params.s0() / n.params.full_period(),
                0.75,
                epsilon = 1e-12
            );
            assert!(n.friction_margin.unwrap() > 0.0);
        }
    }

    #[test]
    fn stage2_low_friction_fails_at_first_violation() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        // k = 0.707 puts the force axis along the normal at phi_tip = 0;
        // mu = tan(5 deg) blocks every node with |deviation| > 5 deg.
        let mu = 5.0_f64.to_radians().tan();
        let surf = surface(mu);
        let k = Modulus::new((FRAC_PI_2 / 2.0).sin()).unwrap();
        let phi = 10.0_f64.to_radians();
        let touch = Pose::planar(0.0, 0.0, phi);
        let entry = StageIiConfig { phi_tip: phi, k, full_period: 0.9 };
        let err = plan_stage2(&touch, &entry, RollDirection::Leftward, &surf, &grid, &st)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("step 1"), "{msg}");
        assert!(msg.contains("friction"), "{msg}");
        // per-node exhaustive oracle: every 3x3 neighbor is infeasible at step 1
        let phi_1 = phi - grid.dphi;
        for ik in [-1.0, 0.0, 1.0] {
            for il in [-1.0, 0.0, 1.0] {
                let km = Modulus::new(k.get() + ik * grid.dk).unwrap();
                let p = RollDirection::Leftward
                    .contact_params(km, 0.9 + il * grid.d_full_period)
                    .unwrap();
                let v = friction_check(&p, phi_1, RollDirection::Leftward, &surf).unwrap();
                assert!(!v.feasible);
            }
        }
    }

    #[test]
    fn stage3_node_count_and_terminal() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let anchor = Pose::planar(0.1, 0.0, 0.0);
        let entry = StageIiiConfig { l: 0.0, k: Modulus::new(0.7).unwrap(), full_period: 0.9 };
        let nodes =
            plan_stage3(&anchor, &entry, RollDirection::Leftward, &surf, &grid, &st).unwrap();
        assert_eq!(nodes.len(), 21);
        assert_relative_eq!(nodes[1].l - nodes[0].l, grid.dl, epsilon = 1e-15);
        let last = nodes.last().unwrap();
        assert_relative_eq!(last.l, L, epsilon = 1e-15);
        assert_relative_eq!(last.grasp.x, anchor.x + L, epsilon = 1e-9);
        assert!(last.grasp.y.abs() <= 1e-12);
        assert!(last.grasp.phi.abs() <= 1e-12);
        let sh = node_shape(last, &st, 50).unwrap();
        for s in sh.samples() {
            assert_eq!(s.kappa, 0.0);
        }
        // l strictly increasing
        assert!(nodes.windows(2).all(|w| w[1].l > w[0].l));
    }

    #[test]
    fn stage3_selected_energy_is_neighbor_minimum() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let anchor = Pose::planar(0.0, 0.0, 0.0);
        let dir = RollDirection::Leftward;
        let entry = StageIiiConfig { l: 0.0, k: Modulus::new(0.7).unwrap(), full_period: 0.9 };
        let nodes = plan_stage3(&anchor, &entry, dir, &surf, &grid, &st).unwrap();
        for w in nodes.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            let sel_energy =
                elastic_energy(&node_shape(cur, &st, PLAN_SAMPLES).unwrap());
            // enumeration oracle over the predecessor's 3x3 neighborhood
            let mut min_feasible = f64::INFINITY;
            for ik in [-1.0, 0.0, 1.0] {
                for il in [-1.0, 0.0, 1.0] {
                    let ck = prev.params.k().get() + ik * grid.dk;
                    let clt = prev.params.full_period() + il * grid.d_full_period;
                    if !(grid.dk * 0.5..=MODULUS_MAX).contains(&ck) {
                        continue;
                    }
                    let km = Modulus::new(ck).unwrap();
                    let p = match dir.contact_params(km, clt) {
                        Ok(p) => p,
                        Err(_) => continue,
                    };
                    match friction_check(&p, 0.0, dir, &surf) {
                        Ok(v) if v.feasible => {}
                        _ => continue,
                    }
                    let cfg = StageIiiConfig { l: cur.l, k: km, full_period: clt };
                    let sh = match stage3_shape(&cfg, &anchor, dir, &st, PLAN_SAMPLES) {
                        Ok(sh) => sh,
                        Err(_) => continue,
                    };
                    if !shape_ok(&sh, &surf) {
                        continue;
                    }
                    min_feasible = min_feasible.min(elastic_energy(&sh));
                }
            }
            assert!(sel_energy <= min_feasible + 1e-12 * (1.0 + min_feasible));
        }
    }

    #[test]
    fn plan_full_nominal_instance_revalidates() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let s = start(0.1, 10.0_f64.to_radians(), 0.7, 0.9);
        let path = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        path.validate().unwrap();
        // revalidation oracle: every node passes all checks independently
        for n in &path.nodes {
            let sh = node_shape(n, &st, 300).unwrap();
            assert!(penetration_check(&sh, &surf).feasible, "node l={} stage {:?}", n.l, n.stage);
            assert!(self_intersection_check(&sh).feasible);
            if n.stage != Stage::I && !n.params.is_degenerate() {
                let v = friction_check(&n.params, sh.samples()[0].phi, path.direction, &surf)
                    .unwrap();
                assert!(v.feasible || n.l >= L - 1e-9);
            }
        }
        let last = path.nodes.last().unwrap();
        assert_eq!(last.stage, Stage::III);
        assert_relative_eq!(last.l, L, epsilon = 1e-12);
    }

    #[test]
    fn plan_full_node_count_bookkeeping() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let s = start(0.05, 10.0_f64.to_radians(), 0.7, 0.9);
        let path = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();

        let snapped = snap_start(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        let s1 = plan_stage1(&snapped, &surf, &grid, &st).unwrap();
        let term = s1.last().unwrap();
        let tip = node_shape(term, &st, PLAN_SAMPLES).unwrap().samples()[0];
        let touch = Pose::planar(tip.x, 0.0, tip.phi);
        let e2 = StageIiConfig {
            phi_tip: touch.phi,
            k: term.params.k(),
            full_period: term.params.full_period(),
        };
        let s2 = plan_stage2(&touch, &e2, RollDirection::Leftward, &surf, &grid, &st).unwrap();
        let t2 = s2.last().unwrap();
        let e3 = StageIiiConfig { l: 0.0, k: t2.params.k(), full_period: t2.params.full_period() };
        let anchor = Pose::planar(touch.x, 0.0, 0.0);
        let s3 = plan_stage3(&anchor, &e3, RollDirection::Leftward, &surf, &grid, &st).unwrap();
        // one shared boundary node (stage II terminal == stage III entry)
        assert_eq!(path.nodes.len(), s1.len() + s2.len() + s3.len() - 1);
        assert_eq!(path.stage_boundaries.len(), 2);
    }

    #[test]
    fn plan_full_fully_placed_shortcut() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let params = ElasticaParams::new(Modulus::new(0.0).unwrap(), 0.0, 0.9).unwrap();
        let s = StageIConfig { base: Pose::planar(0.2, 0.0, 0.0), params };
        let path = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        assert_eq!(path.nodes.len(), 1);
        assert_eq!(path.nodes[0].stage, Stage::III);
        assert_relative_eq!(path.nodes[0].l, L, epsilon = 1e-15);
        assert!(path.stage_boundaries.is_empty());
    }

    #[test]
    fn planning_is_deterministic() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let s = start(0.06, 6.0_f64.to_radians(), 0.7, 0.9);
        let a = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        let b = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn higher_friction_keeps_existing_path() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let s = start(0.05, 8.0_f64.to_radians(), 0.7, 0.9);
        let path = plan_full(&s, &surface(0.5), RollDirection::Leftward, &grid, &st).unwrap();
        let surf_hi = surface(0.7);
        for n in &path.nodes {
            if n.stage == Stage::I || n.params.is_degenerate() {
                continue;
            }
            let sh = node_shape(n, &st, PLAN_SAMPLES).unwrap();
            let v = friction_check(&n.params, sh.samples()[0].phi, path.direction, &surf_hi)
                .unwrap();
            assert!(v.feasible || n.l >= L - 1e-9);
            if let Some(m) = n.friction_margin {
                assert!(v.margin >= m - 1e-12);
            }
        }
    }

    #[test]
    fn consecutive_shapes_stay_close() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let s = start(0.08, 10.0_f64.to_radians(), 0.7, 0.9);
        let path = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        let bound = 5.0 * (grid.dx + L * grid.dphi + grid.d_full_period + grid.dk * L);
        let shapes: Vec<DloShape> =
            path.nodes.iter().map(|n| node_shape(n, &st, 100).unwrap()).collect();
        for w in shapes.windows(2) {
            let mean: f64 = w[0]
                .samples()
                .iter()
                .zip(w[1].samples())
                .map(|(a, b)| (a.x - b.x).hypot(a.y - b.y))
                .sum::<f64>()
                / w[0].samples().len() as f64;
            assert!(mean <= bound, "mean step distance {mean} > {bound}");
        }
    }

    #[test]
    fn plan_path_serde_roundtrip() {
        let grid = GridSpec::defaults_for(L);
        let st = stiffness();
        let surf = surface(0.5);
        let s = start(0.05, 4.0_f64.to_radians(), 0.7, 0.9);
        let path = plan_full(&s, &surf, RollDirection::Leftward, &grid, &st).unwrap();
        let json = serde_json::to_string_pretty(&path).unwrap();
        assert!(json.contains("\"direction\""));
        assert!(json.contains("\"dLtilde\""));
        let back: PlanPath = serde_json::from_str(&json).unwrap();
        assert_eq!(path, back);
    }
}
