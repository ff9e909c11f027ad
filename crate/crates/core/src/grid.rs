//! Grid navigation domain: map, A* path planning, candidate-pool generation,
//! deterministic transitions, events, and world stepping.

use crate::error::{Error, Result};
use crate::inference::{Policy, PolicyKind, Predicate};
use crate::model::{Matrix, ModalityModel};
use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

pub const GRID_ACTIONS: [GridAction; 5] = [
    GridAction::Up,
    GridAction::Down,
    GridAction::Left,
    GridAction::Right,
    GridAction::Wait,
];

/// Row-major rectangular map with obstacles, labeled goals, chargers and
/// per-robot waypoint queues.
#[derive(Debug, Clone)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub obstacles: BTreeSet<usize>,
    /// `(label, cell)` in declaration order.
    pub goals: Vec<(String, usize)>,
}

impl GridMap {
    pub fn new(width: usize, height: usize) -> Self {
        GridMap {
            width,
            height,
            obstacles: BTreeSet::new(),
            goals: Vec::new(),
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, cell: usize) -> bool {
        cell < self.cells()
    }

    pub fn is_free(&self, cell: usize) -> bool {
        self.in_bounds(cell) && !self.obstacles.contains(&cell)
    }

    pub fn goal_cells(&self) -> BTreeSet<usize> {
        self.goals.iter().map(|(_, c)| *c).collect()
    }

    pub fn goal_cell(&self, label: &str) -> Option<usize> {
        self.goals
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, c)| *c)
    }

    /// Target cell of `action` from `cell`; walls and obstacles keep the
    /// robot in place.
    pub fn step_cell(&self, cell: usize, action: GridAction) -> usize {
        let (r, c) = (cell / self.width, cell % self.width);
        let target = match action {
            GridAction::Up => (r > 0).then(|| cell - self.width),
            GridAction::Down => (r + 1 < self.height).then(|| cell + self.width),
            GridAction::Left => (c > 0).then(|| cell - 1),
            GridAction::Right => (c + 1 < self.width).then(|| cell + 1),
            GridAction::Wait => Some(cell),
        };
        match target {
            Some(t) if self.is_free(t) || action == GridAction::Wait => t,
            _ => cell,
        }
    }

    fn neighbors(&self, cell: usize) -> Vec<(GridAction, usize)> {
        GRID_ACTIONS[..4]
            .iter()
            .filter_map(|&a| {
                let t = self.step_cell(cell, a);
                (t != cell).then_some((a, t))
            })
            .collect()
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ar, ac) = (a / self.width, a % self.width);
        let (br, bc) = (b / self.width, b % self.width);
        ar.abs_diff(br) + ac.abs_diff(bc)
    }
}

/// Shortest 4-connected path avoiding obstacles, start and goal inclusive.
/// Ties on f-score resolve toward the lower cell index.
pub fn astar(map: &GridMap, start: usize, goal: usize) -> Result<Vec<usize>> {
    astar_weighted(map, start, goal, &BTreeMap::new())
}

/// A* with additive per-cell entry penalties, used for alternate-route
/// generation.
pub fn astar_weighted(
    map: &GridMap,
    start: usize,
    goal: usize,
    penalty: &BTreeMap<usize, usize>,
) -> Result<Vec<usize>> {
    if !map.in_bounds(start) || !map.in_bounds(goal) {
        return Err(Error::Config(format!("cell out of bounds: {start}->{goal}")));
    }
    if !map.is_free(goal) {
        return Err(Error::NoPath { from: start, to: goal });
    }
    if start == goal {
        return Ok(vec![start]);
    }

    // Reverse ordering on (f, cell) pops the lowest f-score, lower cell first.
    let mut open: BinaryHeap<std::cmp::Reverse<(usize, usize)>> = BinaryHeap::new();
    let mut g: BTreeMap<usize, usize> = BTreeMap::new();
    let mut came: BTreeMap<usize, usize> = BTreeMap::new();
    g.insert(start, 0);
    open.push(std::cmp::Reverse((map.manhattan(start, goal), start)));

    while let Some(std::cmp::Reverse((_, cell))) = open.pop() {
        if cell == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(&prev) = came.get(&cur) {
                path.push(prev);
                cur = prev;
            }
            path.reverse();
            return Ok(path);
        }
        let g_cell = g[&cell];
        for (_, next) in map.neighbors(cell) {
            let cost = 1 + penalty.get(&next).copied().unwrap_or(0);
            let cand = g_cell + cost;
            if g.get(&next).map_or(true, |&old| cand < old) {
                g.insert(next, cand);
                came.insert(next, cell);
                open.push(std::cmp::Reverse((cand + map.manhattan(next, goal), next)));
            }
        }
    }
    Err(Error::NoPath { from: start, to: goal })
}

pub fn path_to_actions(map: &GridMap, path: &[usize]) -> Result<Vec<GridAction>> {
    let mut actions = Vec::with_capacity(path.len().saturating_sub(1));
    for w in path.windows(2) {
        let (from, to) = (w[0], w[1]);
        let action = if to == from {
            GridAction::Wait
        } else {
            *GRID_ACTIONS[..4]
                .iter()
                .find(|&&a| map.step_cell(from, a) == to)
                .ok_or_else(|| {
                    Error::Config(format!("cells {from} and {to} are not adjacent"))
                })?
        };
        actions.push(action);
    }
    Ok(actions)
}

/// A candidate policy together with the cell path realizing it.
#[derive(Debug, Clone)]
pub struct GridCandidate {
    pub policy: Policy<GridAction>,
    pub path: Vec<usize>,
}

/// Build a robot's candidate pool: up to `k` loop-free routes per goal in
/// goal declaration order (shortest first, alternates via cell-penalty
/// re-planning), waypoint detour routes when waypoints are pending, then the
/// standalone wait policy and the stop policy.
pub fn build_candidates(
    map: &GridMap,
    start: usize,
    k: usize,
    pending_waypoints: &[usize],
) -> Result<Vec<GridCandidate>> {
    if map.goals.is_empty() {
        return Err(Error::EmptyPool("map declares no goals".into()));
    }
    let mut pool: Vec<GridCandidate> = Vec::new();
    let mut reachable = 0usize;

    for (label, goal_cell) in &map.goals {
        let mut found: Vec<Vec<usize>> = Vec::new();
        let mut penalty: BTreeMap<usize, usize> = BTreeMap::new();
        for _ in 0..k.max(1) {
            let Ok(path) = astar_weighted(map, start, *goal_cell, &penalty) else {
                break;
            };
            if found.contains(&path) {
                break;
            }
            for &cell in &path[1..path.len().saturating_sub(1)] {
                *penalty.entry(cell).or_insert(0) += map.cells();
            }
            found.push(path);
        }
        if !found.is_empty() {
            reachable += 1;
        }
        for path in found {
            pool.push(make_route_candidate(
                map,
                &path,
                label,
                PolicyKind::Goal,
                pending_waypoints,
            )?);
        }
    }
    if reachable == 0 {
        return Err(Error::EmptyPool(format!("no goal reachable from {start}")));
    }

    // Waypoint detours take priority over direct goal routes once pending.
    if let Some(&wp) = pending_waypoints.first() {
        for (label, goal_cell) in &map.goals {
            let (Ok(leg_a), Ok(leg_b)) = (astar(map, start, wp), astar(map, wp, *goal_cell))
            else {
                continue;
            };
            let mut path = leg_a;
            path.extend_from_slice(&leg_b[1..]);
            let mut cand =
                make_route_candidate(map, &path, label, PolicyKind::Waypoint, &[])?;
            cand.policy
                .postconditions
                .push(Predicate::atom(waypoint_atom(wp)));
            pool.push(cand);
        }
    }

    pool.push(GridCandidate {
        policy: Policy {
            id: 0,
            label: "wait".into(),
            kind: PolicyKind::Wait,
            steps: vec![vec![GridAction::Wait]],
            preconditions: vec![],
            postconditions: vec![],
            goal: None,
            components: vec![],
        },
        path: vec![start],
    });
    pool.push(GridCandidate {
        policy: Policy {
            id: 0,
            label: "stop".into(),
            kind: PolicyKind::Stop,
            steps: vec![],
            preconditions: vec![Predicate::atom(ARRIVED_ATOM)],
            postconditions: vec![Predicate::atom(ARRIVED_ATOM)],
            goal: None,
            components: vec![],
        },
        path: vec![start],
    });

    for (id, cand) in pool.iter_mut().enumerate() {
        cand.policy.id = id;
    }
    Ok(pool)
}

fn make_route_candidate(
    map: &GridMap,
    path: &[usize],
    goal_label: &str,
    kind: PolicyKind,
    pending_waypoints: &[usize],
) -> Result<GridCandidate> {
    let actions = path_to_actions(map, path)?;
    let mut preconditions: Vec<Predicate> = path[1..]
        .iter()
        .map(|&c| Predicate::not(Predicate::atom(obstacle_atom(c))))
        .collect();
    if kind == PolicyKind::Goal {
        preconditions.push(Predicate::not(Predicate::atom(ARRIVED_ATOM)));
        for &wp in pending_waypoints {
            preconditions.push(Predicate::atom(waypoint_atom(wp)));
        }
    }
    Ok(GridCandidate {
        policy: Policy {
            id: 0,
            label: format!("{goal_label}:{}", path.last().unwrap()),
            kind,
            steps: actions.into_iter().map(|a| vec![a]).collect(),
            preconditions,
            postconditions: vec![Predicate::atom(ARRIVED_ATOM)],
            goal: Some(goal_label.to_string()),
            components: vec![],
        },
        path: path.to_vec(),
    })
}

pub const ARRIVED_ATOM: &str = "IsArrived(goal)";

pub fn obstacle_atom(cell: usize) -> String {
    format!("Exist(obstacle@p{cell})")
}

pub fn waypoint_atom(cell: usize) -> String {
    format!("IsArrived(waypoint@p{cell})")
}

/// Deterministic column-stochastic transition matrices for every action;
/// moves into walls or obstacles stay in place.
pub fn build_transition(map: &GridMap) -> Vec<(GridAction, Matrix<Scalar>)> {
    GRID_ACTIONS
        .iter()
        .map(|&a| {
            let n = map.cells();
            let mut m = Matrix::from_fn(n, n, |_, _| 0.0);
            for cur in 0..n {
                m.set(map.step_cell(cur, a), cur, 1.0);
            }
            (a, m)
        })
        .collect()
}

/// Position likelihood: `accuracy` on the diagonal, residual mass spread
/// uniformly over the remaining cells.
pub fn position_likelihood(cells: usize, accuracy: Scalar) -> Matrix<Scalar> {
    Matrix::diagonal_with_spread(cells, accuracy)
}

/// Task-result outcome order for the grid domain.
pub const RESULT_NULL: usize = 0;
pub const RESULT_SUCCESS: usize = 1;
pub const RESULT_FAILURE: usize = 2;

/// Classify the joint outcome of a set of robot positions: success when every
/// position sits on a goal cell and the cells are pairwise distinct, failure
/// when any robot touches a goal without that holding, null otherwise.
pub fn classify_result(goal_cells: &BTreeSet<usize>, positions: &[usize]) -> usize {
    let at_goal: Vec<bool> = positions.iter().map(|p| goal_cells.contains(p)).collect();
    let any = at_goal.iter().any(|b| *b);
    if !any {
        return RESULT_NULL;
    }
    let all = at_goal.iter().all(|b| *b);
    let mut seen = BTreeSet::new();
    let distinct = positions.iter().all(|p| seen.insert(*p));
    if all && distinct {
        RESULT_SUCCESS
    } else {
        RESULT_FAILURE
    }
}

/// Result modality over the (own, peer) position product. `extra_claims` are
/// goal cells other robots have declared through fresh intentions; they enter
/// the classification alongside the modeled pair.
pub fn result_modality(
    map: &GridMap,
    extra_claims: &[usize],
) -> ModalityModel<Scalar> {
    let n = map.cells();
    let goal_cells = map.goal_cells();
    let mut m = Matrix::from_fn(3, n * n, |_, _| 0.0);
    for own in 0..n {
        for peer in 0..n {
            let mut positions = vec![own, peer];
            positions.extend_from_slice(extra_claims);
            let class = classify_result(&goal_cells, &positions);
            m.set(class, own * n + peer, 1.0);
        }
    }
    ModalityModel {
        matrix: m,
        factors: vec![0, 1],
    }
}

// ---------------------------------------------------------------------------
// World state and events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Active,
    Charging,
    Waiting,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobotAgentState {
    pub id: usize,
    pub position: usize,
    pub battery: f64,
    pub status: RobotStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    AddObstacle { cell: usize },
    RemoveObstacle { cell: usize },
    AddWaypoint { robot: usize, cell: usize },
    BatterySet { robot: usize, level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    pub map: GridMap,
    pub robots: Vec<RobotAgentState>,
    /// Per-robot pending waypoint cells, visited in order.
    pub waypoints: Vec<Vec<usize>>,
    /// Per-robot charger cells.
    pub chargers: Vec<Option<usize>>,
}

impl GridWorld {
    pub fn apply_event(&mut self, event: &ScenarioEvent) -> Result<()> {
        match event.kind {
            EventKind::AddObstacle { cell } => {
                if !self.map.in_bounds(cell) {
                    return Err(Error::EventRejected(format!("cell {cell} out of bounds")));
                }
                if self.robots.iter().any(|r| r.position == cell) {
                    return Err(Error::EventRejected(format!(
                        "obstacle on occupied cell {cell}"
                    )));
                }
                self.map.obstacles.insert(cell);
            }
            EventKind::RemoveObstacle { cell } => {
                self.map.obstacles.remove(&cell); // no-op when absent
            }
            EventKind::AddWaypoint { robot, cell } => {
                if robot >= self.robots.len() || !self.map.is_free(cell) {
                    return Err(Error::EventRejected(format!(
                        "waypoint {cell} for robot {robot} invalid"
                    )));
                }
                self.waypoints[robot].push(cell);
            }
            EventKind::BatterySet { robot, level } => {
                if robot >= self.robots.len() || !(0.0..=100.0).contains(&level) {
                    return Err(Error::EventRejected(format!(
                        "battery level {level} for robot {robot} invalid"
                    )));
                }
                self.robots[robot].battery = level;
            }
        }
        Ok(())
    }

    /// Advance every active robot by its action; waypoints are consumed on
    /// arrival. Returns the ground-truth result outcome.
    pub fn step(&mut self, actions: &[(usize, GridAction)]) -> usize {
        for &(robot, action) in actions {
            let r = &mut self.robots[robot];
            r.position = self.map.step_cell(r.position, action);
            if let Some(pos) = self.waypoints[robot].first().copied() {
                if r.position == pos {
                    self.waypoints[robot].remove(0);
                }
            }
        }
        let positions: Vec<usize> = self.robots.iter().map(|r| r.position).collect();
        classify_result(&self.map.goal_cells(), &positions)
    }
}
