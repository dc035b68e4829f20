//! Mission-level state machine: confirm the guide line after takeoff, follow
//! it between nodes, dwell on each planned node in order, execute L-turns
//! into the next row, recover briefly when every line is lost, and finish at
//! the endpoint.

use crate::error::{Error, Result};
use crate::sim::{World, WorldNode};
use crate::tracking::{LineTrack, TrackedNode, TurnFlag};
use serde::{Deserialize, Serialize};

/// Mission flavour: `Scan` dwells on every node for the configured time,
/// `Traverse` only touches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Scan,
    Traverse,
}

/// Mission request as loaded from JSON:
/// `{"task":"scan","dwell_s":2.0,"rows":[0,1]}`. Omitting `rows` selects
/// every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub task: Task,
    pub dwell_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<u32>>,
}

impl Default for MissionSpec {
    fn default() -> Self {
        MissionSpec { task: Task::Scan, dwell_s: 2.0, rows: None }
    }
}

/// Ordered node targets plus dwell behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    /// Global node ids in visit order.
    pub targets: Vec<usize>,
    pub dwell_time: f64,
    pub task: Task,
}

impl MissionPlan {
    pub fn effective_dwell(&self) -> f64 {
        match self.task {
            Task::Scan => self.dwell_time,
            Task::Traverse => 0.0,
        }
    }
}

/// Boustrophedon plan over the requested rows: the first row's nodes in
/// order, the next row reversed, and so on. Rows must be consecutive so the
/// inter-row transit is always between adjacent guide lines.
pub fn plan_mission(world: &World, spec: &MissionSpec) -> Result<MissionPlan> {
    if world.nodes.is_empty() {
        return Err(Error::invalid("world has no nodes to plan over"));
    }
    let rows: Vec<u32> = match &spec.rows {
        Some(rows) => rows.clone(),
        None => (0..world.spec.shelf_rows).collect(),
    };
    if rows.is_empty() {
        return Err(Error::invalid("mission selects no rows"));
    }
    for pair in rows.windows(2) {
        if pair[1] != pair[0] + 1 {
            return Err(Error::invalid("mission rows must be consecutive and ascending"));
        }
    }
    let mut targets = Vec::new();
    for (leg, &row) in rows.iter().enumerate() {
        let mut row_nodes: Vec<&WorldNode> =
            world.nodes.iter().filter(|n| n.row == row).collect();
        if row_nodes.is_empty() {
            return Err(Error::invalid(format!("row {row} does not exist")));
        }
        row_nodes.sort_by_key(|n| n.index_in_row);
        if leg % 2 == 1 {
            row_nodes.reverse();
        }
        targets.extend(row_nodes.iter().map(|n| n.id));
    }
    Ok(MissionPlan { targets, dwell_time: spec.dwell_s, task: spec.task })
}

/// Strategy tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Node capture radius around frame centre, pixels.
    pub capture_radius_px: f64,
    /// Dwell time accrues only while the node estimate holds within this
    /// radius of centre; leaving it resets the dwell.
    pub hover_radius_px: f64,
    /// Virtual forward line offset as a fraction of frame height.
    pub forward_bias_frac: f64,
    /// Horizontal tracks closer than this behind centre still count as
    /// "ahead" (hysteresis for the line currently being hovered).
    pub ahead_slack_px: f64,
    /// Turn flags are honoured only while laterally centred within this.
    pub centered_gate_px: f64,
    /// Consecutive flagged frames required before a turn starts.
    pub turn_confirm_frames: u32,
    /// A transit junction this close to centre forces the turn even without
    /// a confirmed flag (balanced T-junctions).
    pub junction_force_px: f64,
    /// Frames with a confirmed vertical required to leave Takeoff.
    pub takeoff_confirm_frames: u32,
    /// Yaw slew rate during a turn, degrees per second of commanded rate.
    pub yaw_slew_dps: f64,
    /// Recovery budget before the mission fails, seconds.
    pub recover_budget_s: f64,
    /// Maximum climb while recovering, metres.
    pub recover_climb_m: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            capture_radius_px: 40.0,
            hover_radius_px: 8.0,
            forward_bias_frac: 0.15,
            ahead_slack_px: 20.0,
            centered_gate_px: 20.0,
            turn_confirm_frames: 3,
            junction_force_px: 15.0,
            takeoff_confirm_frames: 2,
            yaw_slew_dps: 1.0,
            recover_budget_s: 3.0,
            recover_climb_m: 0.5,
        }
    }
}

/// Mission phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Takeoff,
    FollowLine,
    HoverNode,
    Turning { side: TurnSide, turned_deg: f64 },
    Recover,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnSide {
    Left,
    Right,
}

/// What the controller should do this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMode {
    /// Servo both axes onto a node.
    TrackNode(TrackedNode),
    /// Follow the vertical line, pushed forward by the virtual line bias;
    /// capture bookkeeping stays internal to the strategy.
    TrackLine { forward_bias_px: f64 },
    Hold,
    Ascend,
}

/// Everything the strategy sees in one frame.
pub struct FrameInfo<'a> {
    pub verticals: &'a [&'a LineTrack],
    pub horizontals: &'a [&'a LineTrack],
    pub nodes: &'a [TrackedNode],
    pub turn: TurnFlag,
    pub frame_w: u32,
    pub frame_h: u32,
    /// |w/2 − ρ| of the principal vertical, if any.
    pub lateral_error_px: Option<f64>,
}

/// Per-mission mutable strategy state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyState {
    pub phase: Phase,
    /// Index into the plan's target list.
    pub target_idx: usize,
    pub goal_line: Option<u32>,
    /// The horizontal line just dwelled on; ignored for goal selection until
    /// it falls behind.
    pub last_node_line: Option<u32>,
    /// The vertical track currently being followed. Sticky while the track
    /// lives, so parallel lines entering the view cannot steal the loop.
    pub followed_line: Option<u32>,
    /// Where (signed lateral pixels) the post-turn line is expected: an
    /// in-place ±90° turn maps the trigger junction's forward offset onto a
    /// lateral one, so the first bind after a turn aims there.
    pub post_turn_expected_px: Option<f64>,
    /// After a turn the line just turned off shows up as a horizontal near
    /// centre; it must be tagged as excluded before goal selection can trust
    /// the view again.
    pub pending_turn_exclusion: bool,
    pub dwell_elapsed: f64,
    pub recover_elapsed: f64,
    pub takeoff_frames: u32,
    pub takeoff_elapsed: f64,
    pub turn_streak: u32,
    /// Transit turns stay disarmed until the view has been clear of nearby
    /// junctions for a few frames (the node or corner just handled sits at
    /// centre when a transit leg starts).
    pub transit_armed: bool,
    pub rearm_streak: u32,
    /// Row the drone is currently operating on.
    pub current_row: u32,
    /// Turns remaining to reach the target's row (2 per adjacent-row hop).
    pub transit_turns_left: u32,
    pub visited: Vec<usize>,
}

impl StrategyState {
    pub fn new() -> Self {
        StrategyState {
            phase: Phase::Takeoff,
            target_idx: 0,
            goal_line: None,
            last_node_line: None,
            followed_line: None,
            post_turn_expected_px: None,
            pending_turn_exclusion: false,
            dwell_elapsed: 0.0,
            recover_elapsed: 0.0,
            takeoff_frames: 0,
            takeoff_elapsed: 0.0,
            turn_streak: 0,
            transit_armed: true,
            rearm_streak: 0,
            current_row: 0,
            transit_turns_left: 0,
            visited: Vec::new(),
        }
    }

    pub fn target_node(&self, plan: &MissionPlan) -> Option<usize> {
        plan.targets.get(self.target_idx).copied()
    }
}

impl Default for StrategyState {
    fn default() -> Self {
        Self::new()
    }
}

/// Keeps or rebinds the goal horizontal line.
///
/// A live goal is kept. After an altitude change the goal re-binds to the
/// track nearest the previous estimate scaled about the frame centre by
/// `H_prev / H_new` (image offsets scale with 1/H). A dead goal re-binds to
/// the nearest track ahead of centre, skipping `exclude`.
pub fn select_goal_line(
    horizontals: &[&LineTrack],
    current: Option<u32>,
    altitude_change: Option<(f64, f64)>, // (H_prev / H_new, previous goal rho)
    exclude: Option<u32>,
    frame_h: u32,
    ahead_slack_px: f64,
) -> Option<u32> {
    let cy = frame_h as f64 / 2.0;
    if let Some((ratio, prev_rho)) = altitude_change {
        let expected = cy + (prev_rho - cy) * ratio;
        return horizontals
            .iter()
            .filter(|t| Some(t.id) != exclude)
            .min_by(|a, b| {
                let da = (a.line().rho - expected).abs();
                let db = (b.line().rho - expected).abs();
                da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
            })
            .map(|t| t.id);
    }
    if let Some(id) = current {
        if horizontals.iter().any(|t| t.id == id) {
            return Some(id);
        }
    }
    horizontals
        .iter()
        .filter(|t| Some(t.id) != exclude && t.line().rho >= cy - ahead_slack_px)
        .min_by(|a, b| {
            a.line().rho.partial_cmp(&b.line().rho).unwrap().then(a.id.cmp(&b.id))
        })
        .map(|t| t.id)
}

/// Signed lateral position (pixels, positive right of centre) of the
/// track's line where it crosses the centre row.
pub fn signed_center_offset_px(track: &LineTrack, frame_w: u32, frame_h: u32) -> f64 {
    let (rho, theta) = track.line().vertical_form();
    let t = theta.to_radians();
    let x = (rho - frame_h as f64 / 2.0 * t.sin()) / t.cos();
    x - frame_w as f64 / 2.0
}

/// Lateral distance (pixels) between frame centre and where the track's
/// line crosses the centre row.
pub fn center_offset_px(track: &LineTrack, frame_w: u32, frame_h: u32) -> f64 {
    signed_center_offset_px(track, frame_w, frame_h).abs()
}

/// Keeps the currently followed vertical while it lives; otherwise binds to
/// the strongest-support track near the centre (falling back to the nearest
/// one). Support proxies visible length, so the guide line wins over stubs.
pub fn bind_followed_line(
    verticals: &[&LineTrack],
    current: Option<u32>,
    expected_lateral_px: Option<f64>,
    frame_w: u32,
    frame_h: u32,
) -> Option<u32> {
    if let Some(id) = current {
        if verticals.iter().any(|t| t.id == id) {
            return Some(id);
        }
    }
    // Fresh from a turn: the line we rotated onto has a predicted lateral
    // position; bind to whatever sits closest to it.
    if let Some(expect) = expected_lateral_px {
        let best = verticals
            .iter()
            .map(|t| (t, (signed_center_offset_px(t, frame_w, frame_h) - expect).abs()))
            .filter(|(_, d)| *d <= 60.0)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.id.cmp(&b.0.id)));
        if let Some((t, _)) = best {
            return Some(t.id);
        }
    }
    let offset = |t: &LineTrack| center_offset_px(t, frame_w, frame_h);
    let near: Vec<&&LineTrack> =
        verticals.iter().filter(|t| offset(t) <= 60.0).collect();
    if near.is_empty() {
        return verticals
            .iter()
            .min_by(|a, b| {
                offset(a).partial_cmp(&offset(b)).unwrap().then(a.id.cmp(&b.id))
            })
            .map(|t| t.id);
    }
    near.iter()
        .min_by(|a, b| {
            b.support
                .cmp(&a.support)
                .then(offset(a).partial_cmp(&offset(b)).unwrap())
                .then(a.id.cmp(&b.id))
        })
        .map(|t| t.id)
}

/// One strategy transition. Pure in (state, frame info) so recorded traces
/// replay exactly.
pub fn strategy_step(
    state: &StrategyState,
    info: &FrameInfo,
    dt: f64,
    plan: &MissionPlan,
    world: &World,
    cfg: &StrategyConfig,
) -> (StrategyState, ControlMode) {
    let mut st = state.clone();
    let forward_bias = cfg.forward_bias_frac * info.frame_h as f64;

    match st.phase {
        Phase::Done | Phase::Failed => (st, ControlMode::Hold),

        Phase::Takeoff => {
            if info.verticals.is_empty() {
                st.takeoff_frames = 0;
            } else {
                st.takeoff_frames += 1;
            }
            if st.takeoff_frames >= cfg.takeoff_confirm_frames {
                st.phase = Phase::FollowLine;
            } else {
                st.takeoff_elapsed += dt;
                if st.takeoff_elapsed > cfg.recover_budget_s {
                    st.phase = Phase::Recover;
                    st.recover_elapsed = 0.0;
                }
            }
            (st, ControlMode::Hold)
        }

        Phase::Recover => {
            if !info.verticals.is_empty() {
                st.recover_elapsed = 0.0;
                st.phase = Phase::FollowLine;
                st.goal_line = None;
                return (st, ControlMode::TrackLine { forward_bias_px: forward_bias });
            }
            st.recover_elapsed += dt;
            if st.recover_elapsed > cfg.recover_budget_s {
                st.phase = Phase::Failed;
                return (st, ControlMode::Hold);
            }
            (st, ControlMode::Ascend)
        }

        Phase::Turning { side, turned_deg } => {
            let turned = turned_deg + cfg.yaw_slew_dps * dt;
            if turned >= 90.0 {
                st.transit_turns_left = st.transit_turns_left.saturating_sub(1);
                if st.transit_turns_left == 0 {
                    if let Some(node) = st.target_node(plan) {
                        st.current_row = world.nodes[node].row;
                    }
                }
                st.goal_line = None;
                st.last_node_line = None;
                st.followed_line = None;
                st.pending_turn_exclusion = true;
                st.transit_armed = false;
                st.rearm_streak = 0;
                st.phase = Phase::FollowLine;
            } else {
                st.phase = Phase::Turning { side, turned_deg: turned };
            }
            (st, ControlMode::Hold)
        }

        Phase::FollowLine => {
            if info.verticals.is_empty() {
                st.phase = Phase::Recover;
                st.recover_elapsed = 0.0;
                st.followed_line = None;
                return (st, ControlMode::Hold);
            }
            let expected = st.post_turn_expected_px.take();
            st.followed_line = bind_followed_line(
                info.verticals,
                st.followed_line,
                expected,
                info.frame_w,
                info.frame_h,
            );

            // Fresh from a turn: the line just turned off appears as a
            // horizontal near centre; exclude it like a departed node line.
            if st.pending_turn_exclusion {
                let cy = info.frame_h as f64 / 2.0;
                if let Some(h) = info
                    .horizontals
                    .iter()
                    .filter(|t| (t.line().rho - cy).abs() <= 35.0)
                    .min_by(|a, b| {
                        let da = (a.line().rho - cy).abs();
                        let db = (b.line().rho - cy).abs();
                        da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
                    })
                {
                    st.last_node_line = Some(h.id);
                    st.pending_turn_exclusion = false;
                }
            }

            // Drop the departed node's line once it has fallen behind.
            if let Some(last) = st.last_node_line {
                let cy = info.frame_h as f64 / 2.0;
                let behind = info
                    .horizontals
                    .iter()
                    .find(|t| t.id == last)
                    .map_or(true, |t| t.line().rho < cy - cfg.ahead_slack_px);
                if behind {
                    st.last_node_line = None;
                }
            }

            st.goal_line = select_goal_line(
                info.horizontals,
                st.goal_line.filter(|id| Some(*id) != st.last_node_line),
                None,
                st.last_node_line,
                info.frame_h,
                cfg.ahead_slack_px,
            );

            // An L outranks node capture: an L mistaken for a node would
            // park the drone on the corner, so a confirmed flag vetoes
            // capture outright. The flag alone is not trusted to *start* a
            // turn, though: stubs of adjacent rows poke into view long
            // before any corner. A transit turn needs the corner junction
            // itself — an ahead-of-centre line intersection inside the
            // capture radius — with the flag (held over consecutive frames
            // while centred) naming the side.
            let flag_ok = info.turn != TurnFlag::None
                && info.lateral_error_px.is_some_and(|e| e <= cfg.centered_gate_px);
            st.turn_streak = if flag_ok { st.turn_streak + 1 } else { 0 };
            let flag_confirmed = flag_ok && st.turn_streak >= cfg.turn_confirm_frames;

            // Junction latch, shared by transit turns and node capture: after
            // handling a junction (node dwell or turn) the view must go
            // junction-free before the next one can trigger.
            let (cx, cy) = (info.frame_w as f64 / 2.0, info.frame_h as f64 / 2.0);
            let junction = info
                .nodes
                .iter()
                .filter(|n| n.y >= cy - 5.0)
                .map(|n| ((n.x - cx).powi(2) + (n.y - cy).powi(2)).sqrt())
                .min_by(|a, b| a.partial_cmp(b).unwrap());
            if !st.transit_armed {
                if junction.is_none_or(|d| d > cfg.capture_radius_px) {
                    st.rearm_streak += 1;
                    if st.rearm_streak >= 5 {
                        st.transit_armed = true;
                    }
                } else {
                    st.rearm_streak = 0;
                }
            }

            if st.transit_turns_left > 0 {
                let junction_node = info
                    .nodes
                    .iter()
                    .filter(|n| n.y >= cy - 5.0)
                    .min_by(|a, b| {
                        let da = (a.x - cx).powi(2) + (a.y - cy).powi(2);
                        let db = (b.x - cx).powi(2) + (b.y - cy).powi(2);
                        da.partial_cmp(&db).unwrap()
                    });
                let trigger = st.transit_armed
                    && junction.is_some_and(|d| {
                        d <= cfg.capture_radius_px
                            && (flag_confirmed || d <= cfg.junction_force_px)
                    });
                if trigger {
                    // Boustrophedon fallback: even rows travel up and exit
                    // right, odd rows down and exit left.
                    let side = match info.turn {
                        TurnFlag::Left => TurnSide::Left,
                        TurnFlag::Right => TurnSide::Right,
                        TurnFlag::None if st.current_row % 2 == 0 => TurnSide::Right,
                        TurnFlag::None => TurnSide::Left,
                    };
                    // An in-place turn maps the junction's forward offset
                    // into lateral: left of centre after a right turn.
                    let dv = junction_node.map_or(0.0, |n| n.y - cy);
                    st.post_turn_expected_px = Some(match side {
                        TurnSide::Right => -dv,
                        TurnSide::Left => dv,
                    });
                    st.turn_streak = 0;
                    st.phase = Phase::Turning { side, turned_deg: 0.0 };
                    st.goal_line = None;
                    st.followed_line = None;
                    return (st, ControlMode::Hold);
                }
            }

            // Node capture only applies on the target's own row, and never
            // while a confirmed L flag stands.
            let on_target_row = st
                .target_node(plan)
                .is_some_and(|node| world.nodes[node].row == st.current_row)
                && st.transit_turns_left == 0;
            if on_target_row && !flag_confirmed && st.transit_armed {
                if let Some(goal) = st.goal_line {
                    let on_followed = |n: &&TrackedNode| {
                        n.horizontal_track == goal
                            && st.followed_line.is_none_or(|f| n.vertical_track == f)
                    };
                    let captured = info.nodes.iter().filter(on_followed).any(|n| {
                        ((n.x - cx).powi(2) + (n.y - cy).powi(2)).sqrt() <= cfg.capture_radius_px
                    });
                    if captured {
                        st.phase = Phase::HoverNode;
                        st.dwell_elapsed = 0.0;
                        let node = info
                            .nodes
                            .iter()
                            .find(on_followed)
                            .copied()
                            .expect("captured node exists");
                        return (st, ControlMode::TrackNode(node));
                    }
                }
            }

            (st, ControlMode::TrackLine { forward_bias_px: forward_bias })
        }

        Phase::HoverNode => {
            if info.verticals.is_empty() {
                st.phase = Phase::Recover;
                st.recover_elapsed = 0.0;
                st.followed_line = None;
                return (st, ControlMode::Hold);
            }
            st.followed_line = bind_followed_line(
                info.verticals,
                st.followed_line,
                None,
                info.frame_w,
                info.frame_h,
            );
            let goal = st.goal_line;
            let node = goal.and_then(|g| {
                info.nodes
                    .iter()
                    .find(|n| {
                        n.horizontal_track == g
                            && st.followed_line.is_none_or(|f| n.vertical_track == f)
                    })
                    .copied()
            });
            let Some(node) = node else {
                // Lost the node's horizontal: fall back to line following.
                st.phase = Phase::FollowLine;
                return (st, ControlMode::TrackLine { forward_bias_px: forward_bias });
            };

            let (cx, cy) = (info.frame_w as f64 / 2.0, info.frame_h as f64 / 2.0);
            let settled =
                ((node.x - cx).powi(2) + (node.y - cy).powi(2)).sqrt() <= cfg.hover_radius_px;
            if settled {
                st.dwell_elapsed += dt;
            } else {
                // Not over the node yet (or drifted off): dwell restarts.
                st.dwell_elapsed = 0.0;
            }
            if settled && st.dwell_elapsed >= plan.effective_dwell() {
                let target = st.target_node(plan).expect("hovering implies a target");
                st.visited.push(target);
                st.last_node_line = st.goal_line;
                st.goal_line = None;
                st.dwell_elapsed = 0.0;
                st.target_idx += 1;
                match st.target_node(plan) {
                    None => {
                        st.phase = Phase::Done;
                        return (st, ControlMode::Hold);
                    }
                    Some(next) => {
                        let next_row = world.nodes[next].row;
                        if next_row != st.current_row {
                            let hops = next_row.abs_diff(st.current_row);
                            st.transit_turns_left = 2 * hops;
                        }
                        st.transit_armed = false;
                        st.rearm_streak = 0;
                        st.phase = Phase::FollowLine;
                        return (st, ControlMode::TrackLine { forward_bias_px: forward_bias });
                    }
                }
            }
            (st, ControlMode::TrackNode(node))
        }
    }
}
