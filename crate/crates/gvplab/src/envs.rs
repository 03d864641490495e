//! Ground-truth toy environments: WallNav and PushToy.
//!
//! Both live in the unit arena `[0,1]^2` with exact, deterministic step
//! dynamics. WallNav is point navigation around a thin vertical wall with a
//! gap; PushToy is disc-on-disc pushing without rotation. Experts produce
//! demonstration rollouts whose action replay reproduces the observation
//! sequence bitwise (they are generated by calling `env_step` itself).

use nalgebra::{DVector, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Action, ActionBounds, Observation};

/// Vertical wall `x = x_pos`, thickness `2*half_thickness`, with a gap of
/// half-width `gap_half_width` centered at `gap_center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallGeometry {
    pub x_pos: f64,
    pub gap_center: f64,
    pub gap_half_width: f64,
    pub half_thickness: f64,
}

impl WallGeometry {
    /// Point strictly inside the solid wall material.
    pub fn blocks(&self, p: Vector2<f64>) -> bool {
        (p.x - self.x_pos).abs() < self.half_thickness
            && (p.y - self.gap_center).abs() > self.gap_half_width
    }
}

/// Which environment, plus its kind-specific geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvKind {
    WallNav { wall: WallGeometry },
    PushToy { agent_radius: f64, block_radius: f64 },
}

/// Full environment specification: geometry, action box, success threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub bounds: ActionBounds,
    pub success_eps: f64,
}

impl EnvSpec {
    /// Default navigation task: wall at x = 0.5, gap centered at y = 0.6.
    pub fn wallnav() -> Self {
        EnvSpec {
            kind: EnvKind::WallNav {
                wall: WallGeometry {
                    x_pos: 0.5,
                    gap_center: 0.6,
                    gap_half_width: 0.1,
                    half_thickness: 0.01,
                },
            },
            bounds: ActionBounds::symmetric(2, 0.1),
            success_eps: 0.05,
        }
    }

    /// Default pushing task: agent disc r=0.05 pushes block disc r=0.06.
    pub fn pushtoy() -> Self {
        EnvSpec {
            kind: EnvKind::PushToy {
                agent_radius: 0.05,
                block_radius: 0.06,
            },
            bounds: ActionBounds::symmetric(2, 0.1),
            success_eps: 0.06,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.success_eps <= 0.0 {
            return Err(Error::InvalidConfig("success_eps must be > 0".into()));
        }
        let a_hi = self.bounds.max.amax();
        match self.kind {
            EnvKind::WallNav { wall } => {
                if wall.half_thickness <= 0.0 || wall.gap_half_width <= 0.0 {
                    return Err(Error::InvalidConfig("wall geometry must be positive".into()));
                }
                // >= rather than >: the default geometry sits exactly at the
                // traversability limit and remains crossable at gap center.
                if wall.gap_half_width < a_hi {
                    return Err(Error::InvalidConfig(
                        "gap half-width must be at least the max action step".into(),
                    ));
                }
            }
            EnvKind::PushToy {
                agent_radius,
                block_radius,
            } => {
                if agent_radius <= 0.0 || block_radius <= 0.0 {
                    return Err(Error::InvalidConfig("disc radii must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        match self.kind {
            EnvKind::WallNav { .. } => 2,
            EnvKind::PushToy { .. } => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }
}

/// Environment state: agent position, plus the block for PushToy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent: Vector2<f64>,
    pub block: Option<Vector2<f64>>,
}

/// A target observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub target: Observation,
}

impl Goal {
    pub fn agent_target(&self) -> Vector2<f64> {
        Vector2::new(self.target.0[0], self.target.0[1])
    }

    /// Block target for PushToy goals (components 2..4).
    pub fn block_target(&self) -> Vector2<f64> {
        Vector2::new(self.target.0[2], self.target.0[3])
    }
}

fn clamp_arena(p: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0))
}

/// Where to snap the position when motion is truncated at a boundary.
#[derive(Clone, Copy)]
enum Crossing {
    Start,
    XFace(f64),
    YEdge(f64),
    End,
}

/// Truncate the motion `p -> p + disp` at the wall surface.
///
/// The solid region is open: points exactly on a face or gap edge are legal,
/// which lets the agent rest against the wall without ever being inside it.
fn wall_truncate(wall: &WallGeometry, p: Vector2<f64>, disp: Vector2<f64>) -> Vector2<f64> {
    let q = p + disp;
    let mut events: Vec<(f64, Crossing)> = vec![(0.0, Crossing::Start), (1.0, Crossing::End)];
    let faces = [
        wall.x_pos - wall.half_thickness,
        wall.x_pos + wall.half_thickness,
    ];
    if disp.x != 0.0 {
        for &fx in &faces {
            let t = (fx - p.x) / disp.x;
            if t > 0.0 && t < 1.0 {
                events.push((t, Crossing::XFace(fx)));
            }
        }
    }
    let edges = [
        wall.gap_center - wall.gap_half_width,
        wall.gap_center + wall.gap_half_width,
    ];
    if disp.y != 0.0 {
        for &ey in &edges {
            let t = (ey - p.y) / disp.y;
            if t > 0.0 && t < 1.0 {
                events.push((t, Crossing::YEdge(ey)));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    for w in events.windows(2) {
        let (t0, cross) = w[0];
        let t1 = w[1].0;
        let mid = 0.5 * (t0 + t1);
        if wall.blocks(p + disp * mid) {
            return match cross {
                Crossing::Start => p,
                Crossing::XFace(fx) => Vector2::new(fx, p.y + disp.y * t0),
                Crossing::YEdge(ey) => Vector2::new(p.x + disp.x * t0, ey),
                Crossing::End => q,
            };
        }
    }
    q
}

/// True iff the open segment `p -> q` passes through solid wall.
fn segment_blocked(wall: &WallGeometry, p: Vector2<f64>, q: Vector2<f64>) -> bool {
    let disp = q - p;
    let mut ts = vec![0.0, 1.0];
    if disp.x != 0.0 {
        for fx in [
            wall.x_pos - wall.half_thickness,
            wall.x_pos + wall.half_thickness,
        ] {
            let t = (fx - p.x) / disp.x;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    if disp.y != 0.0 {
        for ey in [
            wall.gap_center - wall.gap_half_width,
            wall.gap_center + wall.gap_half_width,
        ] {
            let t = (ey - p.y) / disp.y;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.windows(2)
        .any(|w| wall.blocks(p + disp * (0.5 * (w[0] + w[1]))))
}

/// Sample a state uniformly from the feasible region.
pub fn env_reset(spec: &EnvSpec, stream: &RngStream) -> EnvState {
    let mut rng = stream.rng();
    match spec.kind {
        EnvKind::WallNav { wall } => loop {
            let p = Vector2::new(rng.gen::<f64>(), rng.gen::<f64>());
            if !wall.blocks(p) {
                return EnvState {
                    agent: p,
                    block: None,
                };
            }
        },
        EnvKind::PushToy {
            agent_radius,
            block_radius,
        } => loop {
            let agent = Vector2::new(rng.gen::<f64>(), rng.gen::<f64>());
            let block = Vector2::new(rng.gen::<f64>(), rng.gen::<f64>());
            if (agent - block).norm() >= agent_radius + block_radius {
                return EnvState {
                    agent,
                    block: Some(block),
                };
            }
        },
    }
}

/// One deterministic environment step. Actions are clipped to bounds first.
pub fn env_step(spec: &EnvSpec, s: &EnvState, a: &Action) -> EnvState {
    let a = spec.bounds.clip(&a.0);
    let disp = Vector2::new(a[0], a[1]);
    match spec.kind {
        EnvKind::WallNav { wall } => {
            let moved = wall_truncate(&wall, s.agent, disp);
            EnvState {
                agent: clamp_arena(moved),
                block: None,
            }
        }
        EnvKind::PushToy {
            agent_radius,
            block_radius,
        } => {
            let rsum = agent_radius + block_radius;
            let mut agent = clamp_arena(s.agent + disp);
            let block0 = s.block.expect("pushtoy state has a block");
            let mut block = block0;
            let delta = block0 - agent;
            let dist = delta.norm();
            if dist < rsum {
                let normal = if dist > 1e-12 {
                    delta / dist
                } else if disp.norm() > 1e-12 {
                    disp / disp.norm()
                } else {
                    Vector2::new(1.0, 0.0)
                };
                block = clamp_arena(block0 + normal * (rsum - dist));
                // if arena clamping pinned the block, retreat the agent to contact
                if (block - agent).norm() < rsum - 1e-12 {
                    agent = clamp_arena(block - normal * rsum);
                }
            }
            EnvState {
                agent,
                block: Some(block),
            }
        }
    }
}

/// Reconstruct a state from its observation (the projection is lossless for
/// both environments).
pub fn state_from_observation(spec: &EnvSpec, o: &Observation) -> EnvState {
    match spec.kind {
        EnvKind::WallNav { .. } => EnvState {
            agent: Vector2::new(o.0[0], o.0[1]),
            block: None,
        },
        EnvKind::PushToy { .. } => EnvState {
            agent: Vector2::new(o.0[0], o.0[1]),
            block: Some(Vector2::new(o.0[2], o.0[3])),
        },
    }
}

/// Project a state to its observation.
pub fn env_observe(s: &EnvState) -> Observation {
    match s.block {
        None => Observation(DVector::from_column_slice(&[s.agent.x, s.agent.y])),
        Some(b) => Observation(DVector::from_column_slice(&[
            s.agent.x, s.agent.y, b.x, b.y,
        ])),
    }
}

/// Success predicate plus the relevant distance (agent for WallNav, block
/// for PushToy). Strict inequality: distance exactly at threshold fails.
pub fn env_success(spec: &EnvSpec, s: &EnvState, g: &Goal) -> (bool, f64) {
    let dist = match spec.kind {
        EnvKind::WallNav { .. } => (s.agent - g.agent_target()).norm(),
        EnvKind::PushToy { .. } => {
            (s.block.expect("pushtoy state has a block") - g.block_target()).norm()
        }
    };
    (dist < spec.success_eps, dist)
}

/// Greedy waypoint walker used by both experts: step componentwise-clipped
/// toward the active waypoint, advancing when reached.
struct WaypointWalker {
    waypoints: Vec<Vector2<f64>>,
    next: usize,
}

impl WaypointWalker {
    fn new(waypoints: Vec<Vector2<f64>>) -> Self {
        WaypointWalker { waypoints, next: 0 }
    }

    fn desired(&mut self, pos: Vector2<f64>) -> Vector2<f64> {
        while self.next < self.waypoints.len() && (self.waypoints[self.next] - pos).norm() <= 1e-12
        {
            self.next += 1;
        }
        if self.next >= self.waypoints.len() {
            Vector2::zeros()
        } else {
            self.waypoints[self.next] - pos
        }
    }
}

fn path_length(start: Vector2<f64>, waypoints: &[Vector2<f64>]) -> f64 {
    let mut len = 0.0;
    let mut prev = start;
    for &w in waypoints {
        len += (w - prev).norm();
        prev = w;
    }
    len
}

fn wallnav_waypoints(wall: &WallGeometry, start: Vector2<f64>, goal: Vector2<f64>) -> Vec<Vector2<f64>> {
    if !segment_blocked(wall, start, goal) {
        return vec![goal];
    }
    let left = Vector2::new(wall.x_pos - wall.half_thickness, wall.gap_center);
    let right = Vector2::new(wall.x_pos + wall.half_thickness, wall.gap_center);
    if start.x <= wall.x_pos {
        vec![left, right, goal]
    } else {
        vec![right, left, goal]
    }
}

/// Expert demonstration: `T` actions whose replay through `env_step`
/// reproduces the returned observations bitwise and ends in success.
///
/// Zero actions pad the tail after arrival, so plans are fixed-length.
pub fn expert_plan(
    spec: &EnvSpec,
    s0: &EnvState,
    g: &Goal,
    horizon: usize,
) -> Result<(Vec<Observation>, Vec<Action>)> {
    if horizon < 1 {
        return Err(Error::InvalidConfig("horizon must be >= 1".into()));
    }
    let step_norm = spec.bounds.max.norm();
    match spec.kind {
        EnvKind::WallNav { wall } => {
            let waypoints = wallnav_waypoints(&wall, s0.agent, g.agent_target());
            let plen = path_length(s0.agent, &waypoints);
            if plen > horizon as f64 * step_norm {
                return Err(Error::UnreachableWithinHorizon(format!(
                    "path length {plen:.3} exceeds {horizon} * {step_norm:.3}"
                )));
            }
            let mut walker = WaypointWalker::new(waypoints);
            rollout_expert(spec, s0, g, horizon, |s, _| walker.desired(s.agent))
        }
        EnvKind::PushToy {
            agent_radius,
            block_radius,
        } => {
            let rsum = agent_radius + block_radius;
            let margin = 0.03;
            let block0 = s0.block.expect("pushtoy state has a block");
            let goal_block = g.block_target();
            let push_dist = (goal_block - block0).norm();
            let approach = if push_dist > 1e-12 {
                pushtoy_approach(s0.agent, block0, goal_block, rsum, margin)
            } else {
                Vec::new()
            };
            let plen = path_length(s0.agent, &approach) + push_dist + margin;
            if plen > horizon as f64 * step_norm {
                return Err(Error::UnreachableWithinHorizon(format!(
                    "path length {plen:.3} exceeds {horizon} * {step_norm:.3}"
                )));
            }
            let mut walker = WaypointWalker::new(approach);
            let mut approaching = push_dist > 1e-12;
            rollout_expert(spec, s0, g, horizon, move |s, spec| {
                let block = s.block.expect("pushtoy state has a block");
                if approaching {
                    let d = walker.desired(s.agent);
                    if d.norm() > 1e-12 {
                        return d;
                    }
                    approaching = false;
                }
                pushtoy_push_step(s, spec, block, goal_block, rsum)
            })
        }
    }
}

/// Waypoints that bring the agent behind the block (relative to the goal)
/// without bumping it: orbit on a clearance circle if the direct line to the
/// standoff point passes too close to the block.
fn pushtoy_approach(
    agent: Vector2<f64>,
    block: Vector2<f64>,
    goal_block: Vector2<f64>,
    rsum: f64,
    margin: f64,
) -> Vec<Vector2<f64>> {
    let u = (goal_block - block).normalize();
    let standoff = block - u * (rsum + margin);
    let clear = |a: Vector2<f64>, b: Vector2<f64>| segment_clearance(a, b, block) > rsum + 0.005;
    if clear(agent, standoff) {
        return vec![standoff];
    }
    let r_nav = rsum + 2.0 * margin;
    let theta_a = (agent - block).y.atan2((agent - block).x);
    let theta_t = (standoff - block).y.atan2((standoff - block).x);
    let mut diff = theta_t - theta_a;
    while diff > std::f64::consts::PI {
        diff -= 2.0 * std::f64::consts::PI;
    }
    while diff < -std::f64::consts::PI {
        diff += 2.0 * std::f64::consts::PI;
    }
    let hops = (diff.abs() / (std::f64::consts::PI / 6.0)).ceil().max(1.0) as usize;
    let mut pts = Vec::with_capacity(hops + 2);
    pts.push(block + Vector2::new(theta_a.cos(), theta_a.sin()) * r_nav);
    for i in 1..=hops {
        let th = theta_a + diff * i as f64 / hops as f64;
        pts.push(block + Vector2::new(th.cos(), th.sin()) * r_nav);
    }
    pts.push(standoff);
    pts
}

/// Minimum distance from segment `a -> b` to point `c`.
fn segment_clearance(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= 1e-18 {
        return (c - a).norm();
    }
    let t = ((c - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (c - (a + ab * t)).norm()
}

/// One push-phase displacement: stay in contact behind the block and drive
/// it along the block-to-goal axis, capped so the agent never crosses the
/// block center in a single step.
fn pushtoy_push_step(
    s: &EnvState,
    spec: &EnvSpec,
    block: Vector2<f64>,
    goal_block: Vector2<f64>,
    rsum: f64,
) -> Vector2<f64> {
    let remaining = goal_block - block;
    let dist = remaining.norm();
    if dist <= 1e-9 {
        return Vector2::zeros();
    }
    let u = remaining / dist;
    let contact = block - u * rsum;
    if (s.agent - contact).norm() > 1e-9 {
        return contact - s.agent;
    }
    let mut s_max = f64::INFINITY;
    for i in 0..2 {
        if u[i].abs() > 1e-12 {
            s_max = s_max.min(spec.bounds.max[i] / u[i].abs());
        }
    }
    let step = dist.min(s_max).min(0.9 * rsum);
    u * step
}

fn rollout_expert<F>(
    spec: &EnvSpec,
    s0: &EnvState,
    g: &Goal,
    horizon: usize,
    mut policy: F,
) -> Result<(Vec<Observation>, Vec<Action>)>
where
    F: FnMut(&EnvState, &EnvSpec) -> Vector2<f64>,
{
    let mut state = *s0;
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    observations.push(env_observe(&state));
    for _ in 0..horizon {
        let desired = policy(&state, spec);
        let a = Action(spec.bounds.clip(&DVector::from_column_slice(&[
            desired.x, desired.y,
        ])));
        state = env_step(spec, &state, &a);
        observations.push(env_observe(&state));
        actions.push(a);
    }
    let (ok, dist) = env_success(spec, &state, g);
    if !ok {
        return Err(Error::UnreachableWithinHorizon(format!(
            "expert ended {dist:.4} from goal after {horizon} steps"
        )));
    }
    Ok((observations, actions))
}

const FRAME_SIZE: usize = 32;

/// ASCII rendering of a state on a fixed grid. Diagnostic only.
pub fn render_frame(spec: &EnvSpec, s: &EnvState, g: &Goal) -> String {
    let grid = rasterize(spec, s, g);
    let mut out = String::with_capacity(FRAME_SIZE * (FRAME_SIZE + 1));
    for row in grid.chunks(FRAME_SIZE) {
        for &cell in row {
            out.push(match cell {
                0 => '#',
                64 => 'A',
                128 => 'B',
                200 => 'G',
                _ => '.',
            });
        }
        out.push('\n');
    }
    out
}

/// Binary PGM (P5) rendering of a state.
pub fn render_pgm(spec: &EnvSpec, s: &EnvState, g: &Goal) -> Vec<u8> {
    let grid = rasterize(spec, s, g);
    let mut out = format!("P5 {FRAME_SIZE} {FRAME_SIZE} 255\n").into_bytes();
    out.extend_from_slice(&grid);
    out
}

fn cell_of(p: Vector2<f64>) -> (usize, usize) {
    let n = FRAME_SIZE as f64 - 1.0;
    let col = (p.x.clamp(0.0, 1.0) * n).round() as usize;
    let row = ((1.0 - p.y.clamp(0.0, 1.0)) * n).round() as usize;
    (row, col)
}

fn rasterize(spec: &EnvSpec, s: &EnvState, g: &Goal) -> Vec<u8> {
    let mut grid = vec![255u8; FRAME_SIZE * FRAME_SIZE];
    if let EnvKind::WallNav { wall } = spec.kind {
        for row in 0..FRAME_SIZE {
            for col in 0..FRAME_SIZE {
                let x = col as f64 / (FRAME_SIZE as f64 - 1.0);
                let y = 1.0 - row as f64 / (FRAME_SIZE as f64 - 1.0);
                if wall.blocks(Vector2::new(x, y)) {
                    grid[row * FRAME_SIZE + col] = 0;
                }
            }
        }
    }
    let goal_pos = match spec.kind {
        EnvKind::WallNav { .. } => g.agent_target(),
        EnvKind::PushToy { .. } => g.block_target(),
    };
    let (gr, gc) = cell_of(goal_pos);
    grid[gr * FRAME_SIZE + gc] = 200;
    if let Some(b) = s.block {
        let (br, bc) = cell_of(b);
        grid[br * FRAME_SIZE + bc] = 128;
    }
    let (ar, ac) = cell_of(s.agent);
    grid[ar * FRAME_SIZE + ac] = 64;
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn wall_of(spec: &EnvSpec) -> WallGeometry {
        match spec.kind {
            EnvKind::WallNav { wall } => wall,
            _ => panic!("not wallnav"),
        }
    }

    #[test]
    fn free_space_translation() {
        // no wall anywhere near [0.2, 0.3] in x when the gap covers the path
        let spec = EnvSpec::wallnav();
        let s = EnvState {
            agent: Vector2::new(0.2, 0.5),
            block: None,
        };
        let next = env_step(&spec, &s, &Action::from_slice(&[0.1, 0.0]));
        assert!((next.agent - Vector2::new(0.3, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn wall_stops_agent_at_face() {
        // gap far away so the straight path at y = 0.5 is solid wall
        let mut spec = EnvSpec::wallnav();
        if let EnvKind::WallNav { ref mut wall } = spec.kind {
            wall.gap_center = 0.9;
        }
        let s = EnvState {
            agent: Vector2::new(0.45, 0.5),
            block: None,
        };
        // bounds clip 0.2 -> 0.1, still enough to hit the wall at 0.49
        let next = env_step(&spec, &s, &Action::from_slice(&[0.2, 0.0]));
        assert_eq!(next.agent.x, 0.49);
        assert_eq!(next.agent.y, 0.5);
    }

    #[test]
    fn gap_is_traversable() {
        let spec = EnvSpec::wallnav();
        let s = EnvState {
            agent: Vector2::new(0.45, 0.6),
            block: None,
        };
        let next = env_step(&spec, &s, &Action::from_slice(&[0.1, 0.0]));
        assert!((next.agent - Vector2::new(0.55, 0.6)).norm() < 1e-15);
    }

    #[test]
    fn corner_cut_is_blocked_at_gap_edge() {
        // crossing into the slab through the gap, then drifting out of the
        // gap while still inside: must stop exactly on the gap edge
        let spec = EnvSpec::wallnav();
        let wall = wall_of(&spec);
        let s = EnvState {
            agent: Vector2::new(0.495, 0.52),
            block: None,
        };
        let next = env_step(&spec, &s, &Action::from_slice(&[0.0, -0.1]));
        assert_eq!(next.agent.y, wall.gap_center - wall.gap_half_width);
        assert_eq!(next.agent.x, 0.495);
    }

    #[test]
    fn agent_never_inside_wall_property() {
        let spec = EnvSpec::wallnav();
        let wall = wall_of(&spec);
        let stream = RngStream::new(314);
        let mut rng = stream.rng();
        let mut s = env_reset(&spec, &stream.fork(0));
        for _ in 0..2000 {
            let a = Action::from_slice(&[rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]);
            s = env_step(&spec, &s, &a);
            let dx = (s.agent.x - wall.x_pos).abs();
            let dy = (s.agent.y - wall.gap_center).abs();
            assert!(
                dx >= wall.half_thickness - 1e-9 || dy <= wall.gap_half_width + 1e-9,
                "agent inside wall at {:?}",
                s.agent
            );
            assert!(s.agent.x >= 0.0 && s.agent.x <= 1.0);
            assert!(s.agent.y >= 0.0 && s.agent.y <= 1.0);
        }
    }

    #[test]
    fn pushtoy_no_contact_leaves_block() {
        let spec = EnvSpec::pushtoy();
        let s = EnvState {
            agent: Vector2::new(0.2, 0.2),
            block: Some(Vector2::new(0.8, 0.8)),
        };
        let next = env_step(&spec, &s, &Action::from_slice(&[0.1, 0.0]));
        assert_eq!(next.block, s.block);
    }

    #[test]
    fn pushtoy_contact_pushes_block_by_overlap() {
        let spec = EnvSpec::pushtoy();
        // agent exactly at contact distance, pushing along +x
        let s = EnvState {
            agent: Vector2::new(0.39, 0.5),
            block: Some(Vector2::new(0.5, 0.5)),
        };
        let next = env_step(&spec, &s, &Action::from_slice(&[0.05, 0.0]));
        let b = next.block.unwrap();
        assert!((b - Vector2::new(0.55, 0.5)).norm() < 1e-12);
        assert!(((b - next.agent).norm() - 0.11).abs() < 1e-12);
    }

    #[test]
    fn pushtoy_overlap_bounded_property() {
        let spec = EnvSpec::pushtoy();
        let stream = RngStream::new(99);
        let mut rng = stream.rng();
        let mut s = env_reset(&spec, &stream.fork(0));
        for _ in 0..2000 {
            let a = Action::from_slice(&[rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]);
            let prev_block = s.block.unwrap();
            s = env_step(&spec, &s, &a);
            let block = s.block.unwrap();
            let gap = (block - s.agent).norm();
            assert!(gap >= 0.11 - 1e-9, "overlap {}", 0.11 - gap);
            if block != prev_block {
                // block only moves on contact: new gap must be exactly contact
                assert!(gap <= 0.11 + 1e-9);
            }
        }
    }

    #[test]
    fn reset_is_deterministic_and_feasible() {
        let spec = EnvSpec::wallnav();
        let wall = wall_of(&spec);
        let stream = RngStream::new(5).fork(3);
        let a = env_reset(&spec, &stream);
        let b = env_reset(&spec, &stream);
        assert_eq!(a, b);
        assert!(!wall.blocks(a.agent));

        let pspec = EnvSpec::pushtoy();
        let p = env_reset(&pspec, &stream);
        assert!((p.agent - p.block.unwrap()).norm() >= 0.11);
    }

    #[test]
    fn observe_projects_positions() {
        let s = EnvState {
            agent: Vector2::new(0.1, 0.9),
            block: None,
        };
        assert_eq!(env_observe(&s).0, dvector![0.1, 0.9]);
        let s = EnvState {
            agent: Vector2::new(0.1, 0.2),
            block: Some(Vector2::new(0.5, 0.6)),
        };
        assert_eq!(env_observe(&s).0, dvector![0.1, 0.2, 0.5, 0.6]);
    }

    #[test]
    fn success_examples() {
        let spec = EnvSpec::wallnav();
        let g = Goal {
            target: Observation::from_slice(&[0.3, 0.4]),
        };
        let at_goal = EnvState {
            agent: Vector2::new(0.3, 0.4),
            block: None,
        };
        assert_eq!(env_success(&spec, &at_goal, &g), (true, 0.0));

        let mut spec_eps = spec.clone();
        spec_eps.success_eps = 0.5;
        let origin = EnvState {
            agent: Vector2::new(0.0, 0.0),
            block: None,
        };
        // distance exactly at threshold: strict inequality fails
        let (ok, d) = env_success(&spec_eps, &origin, &g);
        assert!(!ok);
        assert_eq!(d, 0.5);

        let spec_tight = EnvSpec {
            success_eps: 0.1,
            ..spec
        };
        let (ok, d) = env_success(&spec_tight, &origin, &g);
        assert!(!ok);
        assert_eq!(d, 0.5);
    }

    #[test]
    fn expert_straight_line_with_padding() {
        // vertical run of length 1.0 at x = 0.3: never touches the wall
        let spec = EnvSpec::wallnav();
        let s0 = EnvState {
            agent: Vector2::new(0.3, 0.0),
            block: None,
        };
        let g = Goal {
            target: Observation::from_slice(&[0.3, 1.0]),
        };
        let (obs, acts) = expert_plan(&spec, &s0, &g, 25).unwrap();
        assert_eq!(obs.len(), 26);
        assert_eq!(acts.len(), 25);
        let arrival = acts.iter().take_while(|a| a.0.norm() > 0.0).count();
        assert!((10..=15).contains(&arrival), "arrived at step {arrival}");
        assert!(acts[arrival..].iter().all(|a| a.0.norm() == 0.0));
        // replay reproduces observations bitwise
        let mut s = s0;
        for (t, a) in acts.iter().enumerate() {
            s = env_step(&spec, &s, a);
            assert_eq!(env_observe(&s).0, obs[t + 1].0);
        }
        assert!(env_success(&spec, &s, &g).0);
    }

    #[test]
    fn expert_already_at_goal() {
        let spec = EnvSpec::wallnav();
        let s0 = EnvState {
            agent: Vector2::new(0.2, 0.2),
            block: None,
        };
        let g = Goal {
            target: Observation::from_slice(&[0.2, 0.2]),
        };
        let (obs, acts) = expert_plan(&spec, &s0, &g, 10).unwrap();
        assert!(acts.iter().all(|a| a.0.norm() == 0.0));
        assert!(obs.iter().all(|o| o.0 == obs[0].0));
    }

    #[test]
    fn expert_unreachable_horizon_errors() {
        let spec = EnvSpec::wallnav();
        let s0 = EnvState {
            agent: Vector2::new(0.05, 0.05),
            block: None,
        };
        let g = Goal {
            target: Observation::from_slice(&[0.95, 0.95]),
        };
        assert!(matches!(
            expert_plan(&spec, &s0, &g, 3),
            Err(Error::UnreachableWithinHorizon(_))
        ));
    }

    #[test]
    fn expert_crosses_wall_through_gap() {
        let spec = EnvSpec::wallnav();
        let s0 = EnvState {
            agent: Vector2::new(0.2, 0.2),
            block: None,
        };
        let g = Goal {
            target: Observation::from_slice(&[0.8, 0.3]),
        };
        let (obs, _) = expert_plan(&spec, &s0, &g, 25).unwrap();
        // the path must pass near the gap center (0.5, 0.6)
        let near_gap = obs
            .iter()
            .any(|o| (o.0[0] - 0.5).abs() < 0.02 && (o.0[1] - 0.6).abs() < 0.02);
        assert!(near_gap);
    }

    #[test]
    fn expert_pushes_block_to_goal() {
        let spec = EnvSpec::pushtoy();
        let s0 = EnvState {
            agent: Vector2::new(0.2, 0.7),
            block: Some(Vector2::new(0.4, 0.4)),
        };
        let g = Goal {
            target: Observation::from_slice(&[0.0, 0.0, 0.7, 0.5]),
        };
        let (obs, acts) = expert_plan(&spec, &s0, &g, 25).unwrap();
        // bitwise replay
        let mut s = s0;
        for (t, a) in acts.iter().enumerate() {
            s = env_step(&spec, &s, a);
            assert_eq!(env_observe(&s).0, obs[t + 1].0);
        }
        let (ok, dist) = env_success(&spec, &s, &g);
        assert!(ok, "final block distance {dist}");
    }

    #[test]
    fn render_marks_corner_and_is_deterministic() {
        let spec = EnvSpec::wallnav();
        let s = EnvState {
            agent: Vector2::new(0.0, 0.0),
            block: None,
        };
        let g = Goal {
            target: Observation::from_slice(&[1.0, 1.0]),
        };
        let text = render_frame(&spec, &s, &g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 32);
        // agent at (0,0) -> bottom-left cell
        assert_eq!(lines[31].chars().next().unwrap(), 'A');
        // goal at (1,1) -> top-right cell
        assert_eq!(lines[0].chars().last().unwrap(), 'G');
        assert_eq!(text, render_frame(&spec, &s, &g));

        let pgm = render_pgm(&spec, &s, &g);
        assert!(pgm.starts_with(b"P5 32 32 255"));
        assert_eq!(pgm, render_pgm(&spec, &s, &g));
    }
}
