//! Scenario execution: lockstep agent rounds over the intention bus, world
//! stepping, events, battery handling, and structured trace emission for
//! both simulation domains.

use crate::bt::{self, BTNode, NodeStatus};
use crate::coord::{DetachReason, IntentionMessage, MessageBus};
use crate::error::{Error, Result};
use crate::grid::{
    astar, build_candidates, build_transition, classify_result, obstacle_atom, position_likelihood,
    result_modality, waypoint_atom, EventKind, GridAction, GridMap, GridWorld, RobotAgentState,
    RobotStatus, ScenarioEvent, RESULT_SUCCESS,
};
use crate::iibt::{Claim, ClaimMap, IibtNode, IibtOutcome, TaskModel};
use crate::inference::{
    stretch_policy, HorizonMode, InferenceConfig, LogicState, Policy, PolicyKind, Predicate,
};
use crate::manip::{
    enumerate_joint_policies, holding_atom, manip_likelihood, manip_result_modality,
    manip_transition_model, placed_atom, reached_atom, ManipAction, Phase, MANIP_NULL,
    MANIP_SUCCESS, PHASE_DIM,
};
use crate::model::{
    bayesian_update, Belief, GenerativeModel, LikelihoodModel, Matrix, ModalityModel, Observation,
    PreferenceMatrix, PriorState, TransitionModel,
};
use crate::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

pub const TASK_SUCCESS_ATOM: &str = "TaskSuccess";

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Event {
        tick: u64,
        event: ScenarioEvent,
    },
    Decision {
        tick: u64,
        decision: usize,
        robot: usize,
        node: String,
        status: NodeStatus,
        selected_joint: Option<usize>,
        selected_own: Option<usize>,
        label: Option<String>,
        policy_ids: Vec<usize>,
        policy_labels: Vec<String>,
        posterior: Vec<Scalar>,
        c_digest: String,
        dispatched: bool,
        boost_adds: usize,
        boost_removes: usize,
    },
    Message {
        tick: u64,
        sender: usize,
        recipient: usize,
        policy_id: usize,
    },
    World {
        tick: u64,
        positions: Vec<usize>,
        result: usize,
        batteries: Vec<f64>,
        detached: Vec<usize>,
    },
    Status {
        tick: u64,
        robot: usize,
        root: NodeStatus,
    },
    Summary {
        ticks: u64,
        outcome: SimOutcome,
        final_positions: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimOutcome {
    Success,
    TaskFailure,
    TickCapReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn outcome(&self) -> Option<SimOutcome> {
        self.records.iter().rev().find_map(|r| match r {
            TraceRecord::Summary { outcome, .. } => Some(*outcome),
            _ => None,
        })
    }

    pub fn decisions(&self) -> Vec<&TraceRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r, TraceRecord::Decision { .. }))
            .collect()
    }

    /// Decision records from dispatching ticks only.
    pub fn dispatched_decisions(&self) -> Vec<&TraceRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r, TraceRecord::Decision { dispatched: true, .. }))
            .collect()
    }
}

fn prefs_digest(prefs: &PreferenceMatrix<Scalar>) -> String {
    let mut hasher = Sha256::new();
    for block in &prefs.blocks {
        for v in block {
            hasher.update(v.to_bits().to_be_bytes());
        }
    }
    let out = hasher.finalize();
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Shared simulation configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub gamma: Scalar,
    pub horizon: HorizonMode,
    pub seed: u64,
    pub noiseless: bool,
    pub timeout_ticks: u64,
    pub tick_cap: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gamma: 1.0,
            horizon: HorizonMode::FullSequence,
            seed: 0,
            noiseless: true,
            timeout_ticks: 100,
            tick_cap: 400,
        }
    }
}

impl SimConfig {
    pub fn inference(&self) -> InferenceConfig<Scalar> {
        InferenceConfig {
            gamma: self.gamma,
            horizon: self.horizon,
            ..InferenceConfig::default()
        }
    }
}

fn sample_outcome(rng: &mut ChaCha8Rng, dist: &[Scalar]) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += *p;
        if x < acc {
            return i;
        }
    }
    dist.len() - 1
}

// ---------------------------------------------------------------------------
// Grid scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PinnedPath {
    pub goal: String,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GridRobotSpec {
    pub start: usize,
    pub charger: Option<usize>,
    pub battery: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BatteryConfig {
    pub drain_per_tick: f64,
    pub threshold: f64,
    pub recharge_ticks: u64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            drain_per_tick: 0.0,
            threshold: 20.0,
            recharge_ticks: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridScenario {
    pub map: GridMap,
    pub robots: Vec<GridRobotSpec>,
    /// Tick-0 candidate pools; later decisions always re-plan.
    pub pinned_pools: Option<Vec<Vec<PinnedPath>>>,
    pub events: Vec<ScenarioEvent>,
    pub own_accuracy: Scalar,
    pub peer_accuracy: Scalar,
    pub goal_preference: Scalar,
    /// Result-block preferences over [null, success, failure].
    pub result_preferences: [Scalar; 3],
    pub paths_per_goal: usize,
    pub battery: BatteryConfig,
    pub cfg: SimConfig,
}

impl GridScenario {
    pub fn validate(&self) -> Result<()> {
        if self.robots.is_empty() {
            return Err(Error::Config("scenario declares no robots".into()));
        }
        for (i, r) in self.robots.iter().enumerate() {
            if !self.map.is_free(r.start) {
                return Err(Error::Config(format!("robot {i} starts on a blocked cell")));
            }
        }
        if self.map.goals.is_empty() {
            return Err(Error::Config("scenario declares no goals".into()));
        }
        for (label, cell) in &self.map.goals {
            if !self.map.is_free(*cell) {
                return Err(Error::Config(format!("goal {label} on a blocked cell")));
            }
        }
        if let Some(pools) = &self.pinned_pools {
            if pools.len() != self.robots.len() {
                return Err(Error::Config("pinned pools must cover every robot".into()));
            }
            for (r, pool) in pools.iter().enumerate() {
                for p in pool {
                    if p.cells.first() != Some(&self.robots[r].start) {
                        return Err(Error::Config(format!(
                            "pinned path for robot {r} does not start at its start cell"
                        )));
                    }
                    if self.map.goal_cell(&p.goal) != p.cells.last().copied() {
                        return Err(Error::Config(format!(
                            "pinned path for robot {r} does not end at {}",
                            p.goal
                        )));
                    }
                    crate::grid::path_to_actions(&self.map, &p.cells)?;
                }
            }
        }
        let mut ticks: Vec<u64> = self.events.iter().map(|e| e.tick).collect();
        let sorted = {
            let mut s = ticks.clone();
            s.sort_unstable();
            s
        };
        if ticks != sorted {
            ticks.sort_unstable();
            return Err(Error::Config("events must be time-ordered".into()));
        }
        Ok(())
    }

    fn preferences(&self, pair: &[usize]) -> PreferenceMatrix<Scalar> {
        // One position block per modeled robot (lower index first), then the
        // result block.
        let n = self.map.cells();
        let mut blocks = Vec::new();
        for _ in pair {
            let mut b = vec![0.0; n];
            for (_, cell) in &self.map.goals {
                b[*cell] = self.goal_preference;
            }
            blocks.push(b);
        }
        blocks.push(self.result_preferences.to_vec());
        PreferenceMatrix { blocks }
    }
}

#[derive(Debug, Clone)]
enum ChargeState {
    Inactive,
    ToCharger { path: Vec<usize>, next: usize },
    Charging { remaining: u64 },
    Returning { path: Vec<usize>, next: usize },
}

/// View of the world one grid node sees during its tick.
struct GridView<'a> {
    map: &'a GridMap,
    positions: &'a [usize],
    waypoints: &'a [Vec<usize>],
    transitions: &'a [(GridAction, Matrix<Scalar>)],
    pinned: Option<&'a [Vec<PinnedPath>]>,
    scenario: &'a GridScenario,
    claims: &'a ClaimMap,
    observations: &'a [Observation],
    result_truth: usize,
    n: usize,
}

impl<'a> GridView<'a> {
    fn raw_pool(&self, robot: usize) -> Result<Vec<Policy<GridAction>>> {
        if let Some(pinned) = self.pinned {
            let mut pool = Vec::new();
            for (id, path) in pinned[robot].iter().enumerate() {
                let actions = crate::grid::path_to_actions(self.map, &path.cells)?;
                let mut preconditions: Vec<Predicate> = path.cells[1..]
                    .iter()
                    .map(|&c| Predicate::not(Predicate::atom(obstacle_atom(c))))
                    .collect();
                preconditions.push(Predicate::not(Predicate::atom(TASK_SUCCESS_ATOM)));
                pool.push(Policy {
                    id,
                    label: format!("{}:{}", path.goal, path.cells.last().unwrap()),
                    kind: PolicyKind::Goal,
                    steps: actions.into_iter().map(|a| vec![a]).collect(),
                    preconditions,
                    postconditions: vec![Predicate::atom(TASK_SUCCESS_ATOM)],
                    goal: Some(path.goal.clone()),
                    components: vec![],
                });
            }
            return Ok(pool);
        }
        let cands = build_candidates(
            self.map,
            self.positions[robot],
            self.scenario.paths_per_goal,
            &self.waypoints[robot],
        )?;
        Ok(cands
            .into_iter()
            .map(|mut c| {
                // Route preconditions reference the task, not cell arrival.
                if c.policy.kind == PolicyKind::Goal || c.policy.kind == PolicyKind::Waypoint {
                    c.policy
                        .preconditions
                        .retain(|p| !references_atom(p, crate::grid::ARRIVED_ATOM));
                    if c.policy.kind == PolicyKind::Goal {
                        c.policy
                            .preconditions
                            .push(Predicate::not(Predicate::atom(TASK_SUCCESS_ATOM)));
                    }
                    c.policy.postconditions = vec![Predicate::atom(TASK_SUCCESS_ATOM)];
                }
                if c.policy.kind == PolicyKind::Stop {
                    c.policy.preconditions = vec![Predicate::atom(TASK_SUCCESS_ATOM)];
                    c.policy.postconditions = vec![Predicate::atom(TASK_SUCCESS_ATOM)];
                }
                c.policy
            })
            .collect())
    }

    fn pair(&self, robot: usize) -> Vec<usize> {
        match self.partner(robot) {
            Some(p) => {
                let lo = robot.min(p);
                let hi = robot.max(p);
                vec![lo, hi]
            }
            None => vec![robot],
        }
    }

    fn extra_claims(&self, robot: usize) -> Vec<usize> {
        let partner = self.partner(robot);
        self.claims
            .iter()
            .filter(|(sender, _)| **sender != robot && Some(**sender) != partner)
            .filter_map(|(_, claim)| claim.goal_cell)
            .collect()
    }
}

fn references_atom(p: &Predicate, atom: &str) -> bool {
    match p {
        Predicate::Atom(a) => a == atom,
        Predicate::Not(inner) => references_atom(inner, atom),
        Predicate::And(ps) => ps.iter().any(|p| references_atom(p, atom)),
    }
}

impl<'a> TaskModel for GridView<'a> {
    type Action = GridAction;

    fn pad_action(&self) -> GridAction {
        GridAction::Wait
    }

    fn partner(&self, robot: usize) -> Option<usize> {
        if self.n < 2 {
            None
        } else if robot == 0 {
            Some(1)
        } else {
            Some(0)
        }
    }

    fn own_component_pos(&self, robot: usize) -> usize {
        match self.partner(robot) {
            Some(p) if robot > p => 1,
            _ => 0,
        }
    }

    fn joint_pool(&self, robot: usize) -> Result<Vec<Policy<GridAction>>> {
        let own = self.raw_pool(robot)?;
        let Some(partner) = self.partner(robot) else {
            let h = own.iter().map(|p| p.horizon()).max().unwrap_or(1).max(1);
            return Ok(own
                .iter()
                .map(|p| stretch_policy(p, h, GridAction::Wait))
                .collect());
        };
        let other = self.raw_pool(partner)?;
        let h = own
            .iter()
            .chain(&other)
            .map(|p| p.horizon())
            .max()
            .unwrap_or(1)
            .max(1);
        let own_s: Vec<_> = own
            .iter()
            .map(|p| stretch_policy(p, h, GridAction::Wait))
            .collect();
        let other_s: Vec<_> = other
            .iter()
            .map(|p| stretch_policy(p, h, GridAction::Wait))
            .collect();
        let (lo, hi) = if robot < partner {
            (&own_s, &other_s)
        } else {
            (&other_s, &own_s)
        };
        crate::inference::compose_joint_policies(&[lo.as_slice(), hi.as_slice()], GridAction::Wait)
    }

    fn model(
        &self,
        robot: usize,
        prefs: &PreferenceMatrix<Scalar>,
        _claims: &ClaimMap,
    ) -> Result<GenerativeModel<GridAction>> {
        let n = self.map.cells();
        let pair = self.pair(robot);
        let mut modalities = Vec::new();
        for (f, &r) in pair.iter().enumerate() {
            let acc = if r == robot {
                self.scenario.own_accuracy
            } else {
                self.scenario.peer_accuracy
            };
            modalities.push(ModalityModel {
                matrix: position_likelihood(n, acc),
                factors: vec![f],
            });
        }
        if pair.len() == 2 {
            modalities.push(result_modality(self.map, &self.extra_claims(robot)));
        } else {
            // Single robot: success when it stands on any goal cell.
            let goal_cells = self.map.goal_cells();
            let mut m = Matrix::from_fn(3, n, |_, _| 0.0);
            for cell in 0..n {
                let class = classify_result(&goal_cells, &[cell]);
                m.set(class, cell, 1.0);
            }
            modalities.push(ModalityModel {
                matrix: m,
                factors: vec![0],
            });
        }
        let model = GenerativeModel {
            factor_dims: vec![n; pair.len()],
            likelihood: LikelihoodModel { modalities },
            transitions: TransitionModel {
                factors: vec![self.transitions.to_vec(); pair.len()],
            },
            preferences: prefs.clone(),
            prior: PriorState {
                factors: vec![vec![1.0 / n as f64; n]; pair.len()],
            },
        };
        model.validate()?;
        Ok(model)
    }

    fn observation(&self, robot: usize) -> Result<Observation> {
        Ok(self.observations[robot].clone())
    }

    fn belief(
        &self,
        _robot: usize,
        model: &GenerativeModel<GridAction>,
        obs: &Observation,
    ) -> Result<Belief<Scalar>> {
        bayesian_update(
            &Belief::uniform(&model.factor_dims),
            &model.likelihood,
            obs,
        )
    }

    fn logic_state(&self, _robot: usize) -> LogicState {
        let mut truths = LogicState::new();
        for &cell in &self.map.obstacles {
            truths.insert(obstacle_atom(cell));
        }
        if self.result_truth == RESULT_SUCCESS {
            truths.insert(TASK_SUCCESS_ATOM.to_string());
        }
        truths
    }

    fn vocabulary(&self, _robot: usize) -> BTreeSet<String> {
        let mut v = BTreeSet::new();
        for cell in 0..self.map.cells() {
            v.insert(obstacle_atom(cell));
            v.insert(waypoint_atom(cell));
        }
        v.insert(TASK_SUCCESS_ATOM.to_string());
        v
    }

    fn predicate_map(&self, robot: usize) -> bt::PredicateOutcomeMap {
        let own_block = self.own_component_pos(robot);
        let mut map = bt::PredicateOutcomeMap::new();
        for cell in 0..self.map.cells() {
            map.bind(obstacle_atom(cell), own_block, cell);
            map.bind(waypoint_atom(cell), own_block, cell);
        }
        map
    }
}

pub struct GridSim {
    scenario: GridScenario,
    world: GridWorld,
    bus: MessageBus,
    nodes: Vec<Option<IibtNode>>,
    trees: Vec<BTNode>,
    charge: Vec<ChargeState>,
    known_claims: Vec<ClaimMap>,
    transitions: Vec<(GridAction, Matrix<Scalar>)>,
    map_obstacle_version: BTreeSet<usize>,
    rng: ChaCha8Rng,
    tick: u64,
    decision_counter: usize,
    records: Vec<TraceRecord>,
    roots: Vec<NodeStatus>,
}

impl GridSim {
    pub fn new(scenario: GridScenario) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.robots.len();
        let world = GridWorld {
            map: scenario.map.clone(),
            robots: scenario
                .robots
                .iter()
                .enumerate()
                .map(|(id, r)| RobotAgentState {
                    id,
                    position: r.start,
                    battery: r.battery,
                    status: RobotStatus::Active,
                })
                .collect(),
            waypoints: vec![vec![]; n],
            chargers: scenario.robots.iter().map(|r| r.charger).collect(),
        };
        let transitions = build_transition(&world.map);
        let mut nodes = Vec::new();
        let mut trees = Vec::new();
        for (i, spec) in scenario.robots.iter().enumerate() {
            let pair: Vec<usize> = if n < 2 {
                vec![i]
            } else if i == 0 {
                vec![0, 1]
            } else {
                vec![0.min(i), i]
            };
            let mut node = IibtNode::new(
                i,
                "move_to_goal",
                scenario.preferences(&pair),
                scenario.cfg.inference(),
                scenario.cfg.timeout_ticks,
            );
            node.stop_preconditions = vec![Predicate::atom(TASK_SUCCESS_ATOM)];
            nodes.push(Some(node));
            let goal_leaf = BTNode::Iibt {
                task: "move_to_goal".into(),
            };
            trees.push(match spec.charger {
                Some(_) => BTNode::Fallback {
                    children: vec![
                        BTNode::Sequence {
                            children: vec![
                                BTNode::Condition {
                                    id: "battery_enough".into(),
                                },
                                goal_leaf,
                            ],
                        },
                        BTNode::Action {
                            id: "move_to_charger".into(),
                        },
                    ],
                },
                None => goal_leaf,
            });
        }
        let rng = ChaCha8Rng::seed_from_u64(scenario.cfg.seed);
        let obstacles = world.map.obstacles.clone();
        Ok(GridSim {
            bus: MessageBus::new(n),
            nodes,
            trees,
            charge: vec![ChargeState::Inactive; n],
            known_claims: vec![ClaimMap::new(); n],
            transitions,
            map_obstacle_version: obstacles,
            rng,
            tick: 0,
            decision_counter: 0,
            records: Vec::new(),
            roots: vec![NodeStatus::Running; n],
            world,
            scenario,
        })
    }

    pub fn node(&self, robot: usize) -> &IibtNode {
        self.nodes[robot].as_ref().expect("node present")
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    fn observations(&mut self) -> Vec<Observation> {
        let n = self.world.robots.len();
        let cells = self.world.map.cells();
        let positions: Vec<usize> = self.world.robots.iter().map(|r| r.position).collect();
        let result = classify_result(&self.world.map.goal_cells(), &positions);
        let mut out = Vec::with_capacity(n);
        for robot in 0..n {
            let pair: Vec<usize> = if n < 2 {
                vec![robot]
            } else if robot == 0 {
                vec![0, 1]
            } else {
                vec![0, robot]
            };
            let mut outcomes = Vec::new();
            for &r in &pair {
                if self.scenario.cfg.noiseless {
                    outcomes.push(positions[r]);
                } else {
                    let acc = if r == robot {
                        self.scenario.own_accuracy
                    } else {
                        self.scenario.peer_accuracy
                    };
                    let col = position_likelihood(cells, acc).column(positions[r]);
                    outcomes.push(sample_outcome(&mut self.rng, &col));
                }
            }
            outcomes.push(result);
            out.push(Observation::new(outcomes));
        }
        out
    }

    /// Run one lockstep tick. Returns the outcome once the run terminates.
    pub fn step(&mut self) -> Result<Option<SimOutcome>> {
        let n = self.world.robots.len();
        self.bus.barrier_round(self.tick);

        // Scenario events scheduled for this tick land before the round.
        let events: Vec<ScenarioEvent> = self
            .scenario
            .events
            .iter()
            .filter(|e| e.tick == self.tick)
            .copied()
            .collect();
        for event in events {
            self.world.apply_event(&event)?;
            self.records.push(TraceRecord::Event {
                tick: self.tick,
                event,
            });
        }
        if self.world.map.obstacles != self.map_obstacle_version {
            self.transitions = build_transition(&self.world.map);
            self.map_obstacle_version = self.world.map.obstacles.clone();
        }

        let observations = self.observations();
        let positions: Vec<usize> = self.world.robots.iter().map(|r| r.position).collect();
        let result_truth = classify_result(&self.world.map.goal_cells(), &positions);

        let mut actions: Vec<(usize, GridAction)> = Vec::new();
        for robot in 0..n {
            if self.roots[robot] != NodeStatus::Running {
                continue;
            }
            for msg in self.bus.collect_intentions(robot, self.tick) {
                self.records.push(TraceRecord::Message {
                    tick: self.tick,
                    sender: msg.sender,
                    recipient: robot,
                    policy_id: msg.policy_id,
                });
                let goal_cell = msg.goal.as_deref().and_then(|g| self.world.map.goal_cell(g));
                self.known_claims[robot].insert(
                    msg.sender,
                    Claim {
                        policy_id: msg.policy_id,
                        goal_cell,
                        tick: msg.tick,
                    },
                );
            }
            if self.scenario.battery.drain_per_tick > 0.0
                && matches!(self.charge[robot], ChargeState::Inactive)
            {
                let b = &mut self.world.robots[robot].battery;
                *b = (*b - self.scenario.battery.drain_per_tick).max(0.0);
            }

            let status = self.tick_robot(robot, &observations, result_truth, &mut actions)?;
            self.roots[robot] = status;
            self.records.push(TraceRecord::Status {
                tick: self.tick,
                robot,
                root: status,
            });
        }

        let result = self.world.step(&actions);
        self.records.push(TraceRecord::World {
            tick: self.tick,
            positions: self.world.robots.iter().map(|r| r.position).collect(),
            result,
            batteries: self.world.robots.iter().map(|r| r.battery).collect(),
            detached: (0..n)
                .filter(|&r| self.bus.detach_reason(r) != DetachReason::None)
                .collect(),
        });

        self.tick += 1;
        if self.roots.iter().all(|s| *s == NodeStatus::Success) {
            return Ok(Some(SimOutcome::Success));
        }
        if self.roots.iter().any(|s| *s == NodeStatus::Failure) {
            return Ok(Some(SimOutcome::TaskFailure));
        }
        if self.tick >= self.scenario.cfg.tick_cap {
            return Ok(Some(SimOutcome::TickCapReached));
        }
        Ok(None)
    }

    fn tick_robot(
        &mut self,
        robot: usize,
        observations: &[Observation],
        result_truth: usize,
        actions: &mut Vec<(usize, GridAction)>,
    ) -> Result<NodeStatus> {
        let tree = self.trees[robot].clone();
        let mut node = self.nodes[robot].take().expect("node present");
        let mut delegate = GridLeafDelegate {
            sim: self,
            robot,
            node: &mut node,
            observations,
            result_truth,
            action: None,
            error: None,
        };
        let status = bt::tick(&tree, &mut delegate);
        let action = delegate.action;
        let error = delegate.error.take();
        self.nodes[robot] = Some(node);
        if let Some(err) = error {
            return Err(err);
        }
        if let Some(a) = action {
            actions.push((robot, a));
        }
        Ok(status)
    }

    pub fn run(&mut self) -> Result<Trace> {
        loop {
            if let Some(outcome) = self.step()? {
                self.records.push(TraceRecord::Summary {
                    ticks: self.tick,
                    outcome,
                    final_positions: self.world.robots.iter().map(|r| r.position).collect(),
                });
                return Ok(Trace {
                    records: std::mem::take(&mut self.records),
                });
            }
        }
    }
}

struct GridLeafDelegate<'a> {
    sim: &'a mut GridSim,
    robot: usize,
    node: &'a mut IibtNode,
    observations: &'a [Observation],
    result_truth: usize,
    action: Option<GridAction>,
    error: Option<Error>,
}

impl<'a> GridLeafDelegate<'a> {
    fn run_iibt(&mut self) -> Result<NodeStatus> {
        let robot = self.robot;
        let sim = &mut *self.sim;
        let positions: Vec<usize> = sim.world.robots.iter().map(|r| r.position).collect();
        let pinned_active = sim.tick == 0;
        let view = GridView {
            map: &sim.world.map,
            positions: &positions,
            waypoints: &sim.world.waypoints,
            transitions: &sim.transitions,
            pinned: if pinned_active {
                sim.scenario.pinned_pools.as_deref()
            } else {
                None
            },
            scenario: &sim.scenario,
            claims: &sim.known_claims[robot],
            observations: self.observations,
            result_truth: self.result_truth,
            n: sim.world.robots.len(),
        };
        let peers = sim.world.robots.len() - 1;
        let connected = sim.bus.count_connected(robot);
        let claims = sim.known_claims[robot].clone();
        let outcome: IibtOutcome<GridAction> =
            self.node.tick(&view, &claims, connected, peers)?;
        drop(view);

        let pool_meta = {
            // Re-derive pool labels for the trace; the pool build is
            // deterministic within a tick.
            let view = GridView {
                map: &sim.world.map,
                positions: &positions,
                waypoints: &sim.world.waypoints,
                transitions: &sim.transitions,
                pinned: if pinned_active {
                    sim.scenario.pinned_pools.as_deref()
                } else {
                    None
                },
                scenario: &sim.scenario,
                claims: &sim.known_claims[robot],
                observations: self.observations,
                result_truth: self.result_truth,
                n: sim.world.robots.len(),
            };
            view.joint_pool(robot)
                .map(|pool| {
                    pool.iter()
                        .map(|p| (p.id, p.label.clone(), p.goal.clone()))
                        .collect::<Vec<_>>()
                })
                .unwrap_or_default()
        };

        let (policy_ids, posterior): (Vec<usize>, Vec<Scalar>) = outcome
            .posterior
            .as_ref()
            .map(|p| p.probs.iter().map(|(id, pr)| (*id, *pr)).unzip())
            .unwrap_or_default();
        sim.records.push(TraceRecord::Decision {
            tick: sim.tick,
            decision: sim.decision_counter,
            robot,
            node: self.node.task.clone(),
            status: outcome.status,
            selected_joint: outcome.selected_joint,
            selected_own: outcome.selected_own,
            label: outcome.selected_label.clone(),
            policy_ids,
            policy_labels: pool_meta.iter().map(|(_, l, _)| l.clone()).collect(),
            posterior,
            c_digest: prefs_digest(self.node.preferences()),
            dispatched: outcome.dispatched,
            boost_adds: outcome.boost_adds,
            boost_removes: outcome.boost_removes,
        });
        sim.decision_counter += 1;

        if outcome.status == NodeStatus::Running {
            self.action = outcome.action;
            // Broadcast the own component of the selection.
            if let Some(own) = outcome.selected_own {
                let goal = if outcome.dispatched {
                    // goal label of the own raw pool entry
                    let own_pos = if sim.world.robots.len() < 2 || robot == 0 {
                        0
                    } else {
                        1
                    };
                    outcome
                        .selected_joint
                        .and_then(|j| pool_meta.get(j).map(|(_, _, g)| g.clone()))
                        .flatten()
                        .filter(|_| own_pos <= 1)
                } else {
                    None
                };
                let msg = IntentionMessage {
                    sender: robot,
                    tick: sim.tick,
                    policy_id: own,
                    actions: vec![],
                    goal,
                };
                sim.bus.broadcast_intention(msg)?;
            }
        }
        Ok(outcome.status)
    }

    fn run_charger(&mut self) -> NodeStatus {
        let robot = self.robot;
        let sim = &mut *self.sim;
        let charger = match sim.world.chargers[robot] {
            Some(c) => c,
            None => return NodeStatus::Failure,
        };
        loop {
            match std::mem::replace(&mut sim.charge[robot], ChargeState::Inactive) {
                ChargeState::Inactive => {
                    sim.bus.detach(robot, DetachReason::Battery);
                    sim.world.robots[robot].status = RobotStatus::Charging;
                    let from = sim.world.robots[robot].position;
                    match astar(&sim.world.map, from, charger) {
                        Ok(path) => {
                            sim.charge[robot] = ChargeState::ToCharger { path, next: 1 };
                            continue;
                        }
                        Err(_) => return NodeStatus::Failure,
                    }
                }
                ChargeState::ToCharger { path, next } => {
                    if next < path.len() {
                        sim.world.robots[robot].position = path[next];
                        sim.charge[robot] = ChargeState::ToCharger {
                            path,
                            next: next + 1,
                        };
                    } else {
                        sim.charge[robot] = ChargeState::Charging {
                            remaining: sim.scenario.battery.recharge_ticks,
                        };
                    }
                    return NodeStatus::Running;
                }
                ChargeState::Charging { remaining } => {
                    if remaining > 1 {
                        sim.charge[robot] = ChargeState::Charging {
                            remaining: remaining - 1,
                        };
                        return NodeStatus::Running;
                    }
                    sim.world.robots[robot].battery = 100.0;
                    let from = sim.world.robots[robot].position;
                    // return to where the detour began
                    let back = sim.detach_origin(robot);
                    match astar(&sim.world.map, from, back) {
                        Ok(path) => {
                            sim.charge[robot] = ChargeState::Returning { path, next: 1 };
                            return NodeStatus::Running;
                        }
                        Err(_) => return NodeStatus::Failure,
                    }
                }
                ChargeState::Returning { path, next } => {
                    if next < path.len() {
                        sim.world.robots[robot].position = path[next];
                        sim.charge[robot] = ChargeState::Returning {
                            path,
                            next: next + 1,
                        };
                        return NodeStatus::Running;
                    }
                    sim.world.robots[robot].status = RobotStatus::Active;
                    sim.bus.reconnect(robot);
                    return NodeStatus::Running;
                }
            }
        }
    }
}

impl GridSim {
    fn detach_origin(&self, robot: usize) -> usize {
        self.detach_origins
            .get(&robot)
            .copied()
            .unwrap_or(self.world.robots[robot].position)
    }
}

impl<'a> bt::TickContext for GridLeafDelegate<'a> {
    fn condition(&mut self, id: &str) -> NodeStatus {
        match id {
            "battery_enough" => {
                let r = &self.sim.world.robots[self.robot];
                let engaged = !matches!(self.sim.charge[self.robot], ChargeState::Inactive);
                if !engaged && r.battery > self.sim.scenario.battery.threshold {
                    NodeStatus::Success
                } else {
                    NodeStatus::Failure
                }
            }
            _ => NodeStatus::Failure,
        }
    }

    fn action(&mut self, id: &str) -> NodeStatus {
        match id {
            "move_to_charger" => self.run_charger(),
            _ => NodeStatus::Failure,
        }
    }

    fn iibt(&mut self, _task: &str) -> NodeStatus {
        match self.run_iibt() {
            Ok(status) => status,
            Err(e) => {
                self.error = Some(e);
                NodeStatus::Failure
            }
        }
    }
}
