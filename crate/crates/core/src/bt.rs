//! Reactive behavior-tree runtime: standard composites, leaf dispatch through
//! a tick context, structural metrics, and the logic-to-preference adapter.

use crate::error::{Error, Result};
use crate::inference::{LogicState, Policy, PolicyKind, Predicate};
use crate::model::{LogicalEvidence, PreferenceMatrix};
use crate::num::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Status returned by every tick of every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Success,
    Failure,
    Running,
}

/// Tree structure. Composites hold at least one child; conditions, actions
/// and interactive-inference nodes are leaves bound to ids resolved by the
/// domain at tick time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BTNode {
    Sequence { children: Vec<BTNode> },
    Fallback { children: Vec<BTNode> },
    Condition { id: String },
    Action { id: String },
    Iibt { task: String },
}

impl BTNode {
    /// Structural validation; malformed trees fail at load time, never at
    /// tick time.
    pub fn validate(&self) -> Result<()> {
        match self {
            BTNode::Sequence { children } | BTNode::Fallback { children } => {
                if children.is_empty() {
                    return Err(Error::Config("composite node with no children".into()));
                }
                children.iter().try_for_each(|c| c.validate())
            }
            _ => Ok(()),
        }
    }
}

/// Resolves leaves against the domain during a tick.
pub trait TickContext {
    fn condition(&mut self, id: &str) -> NodeStatus;
    fn action(&mut self, id: &str) -> NodeStatus;
    fn iibt(&mut self, task: &str) -> NodeStatus;
}

/// Standard reactive semantics; composites hold no cross-tick memory.
pub fn tick(tree: &BTNode, ctx: &mut dyn TickContext) -> NodeStatus {
    match tree {
        BTNode::Sequence { children } => {
            for child in children {
                match tick(child, ctx) {
                    NodeStatus::Success => continue,
                    other => return other,
                }
            }
            NodeStatus::Success
        }
        BTNode::Fallback { children } => {
            for child in children {
                match tick(child, ctx) {
                    NodeStatus::Failure => continue,
                    other => return other,
                }
            }
            NodeStatus::Failure
        }
        BTNode::Condition { id } => ctx.condition(id),
        BTNode::Action { id } => ctx.action(id),
        BTNode::Iibt { task } => ctx.iibt(task),
    }
}

/// Structural counts; interactive-inference leaves count as action nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeMetrics {
    pub sequences: usize,
    pub fallbacks: usize,
    pub conditions: usize,
    pub actions: usize,
    pub total: usize,
    /// Nodes on the longest root-to-leaf path; a single leaf has depth 1.
    pub depth: usize,
}

pub fn node_metrics(tree: &BTNode) -> NodeMetrics {
    fn walk(node: &BTNode, m: &mut NodeMetrics) -> usize {
        m.total += 1;
        match node {
            BTNode::Sequence { children } => {
                m.sequences += 1;
                1 + children.iter().map(|c| walk(c, m)).max().unwrap_or(0)
            }
            BTNode::Fallback { children } => {
                m.fallbacks += 1;
                1 + children.iter().map(|c| walk(c, m)).max().unwrap_or(0)
            }
            BTNode::Condition { .. } => {
                m.conditions += 1;
                1
            }
            BTNode::Action { .. } | BTNode::Iibt { .. } => {
                m.actions += 1;
                1
            }
        }
    }
    let mut m = NodeMetrics {
        sequences: 0,
        fallbacks: 0,
        conditions: 0,
        actions: 0,
        total: 0,
        depth: 0,
    };
    m.depth = walk(tree, &mut m);
    m
}

// ---------------------------------------------------------------------------
// Logic-to-preference shaping
// ---------------------------------------------------------------------------

/// Binds predicate atoms to the `(modality, outcome)` their satisfaction
/// corresponds to. Built per decision by the domain (obstacle and waypoint
/// atoms come and go with events).
#[derive(Debug, Clone, Default)]
pub struct PredicateOutcomeMap {
    bindings: BTreeMap<String, (usize, usize)>,
}

impl PredicateOutcomeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, atom: impl Into<String>, modality: usize, outcome: usize) {
        self.bindings.insert(atom.into(), (modality, outcome));
    }

    pub fn lookup(&self, atom: &str) -> Option<(usize, usize)> {
        self.bindings.get(atom).copied()
    }
}

/// True iff every precondition of the policy holds under the current logic
/// state. Atoms outside the registered vocabulary are a configuration error.
pub fn check_preconditions<A>(
    policy: &Policy<A>,
    truths: &LogicState,
    vocabulary: &std::collections::BTreeSet<String>,
) -> Result<bool> {
    fn check_known(p: &Predicate, vocab: &std::collections::BTreeSet<String>) -> Result<()> {
        match p {
            Predicate::Atom(a) => {
                if vocab.contains(a) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("unknown predicate {a}")))
                }
            }
            Predicate::Not(inner) => check_known(inner, vocab),
            Predicate::And(ps) => ps.iter().try_for_each(|p| check_known(p, vocab)),
        }
    }
    for p in &policy.preconditions {
        check_known(p, vocabulary)?;
    }
    Ok(policy.preconditions.iter().all(|p| p.holds(truths)))
}

/// The f_L mapping: minimal logical evidence making the unmet preconditions
/// true. Unmet positive atoms get `+(max(C_block)+1)` on the outcome that
/// satisfies them; violated negated atoms (obstacle-type) get
/// `−(max(C_block)+1)` on the blocked outcome.
pub fn logic_to_preference<S: Real, A>(
    policy: &Policy<A>,
    truths: &LogicState,
    prefs: &PreferenceMatrix<S>,
    map: &PredicateOutcomeMap,
) -> Result<LogicalEvidence<S>> {
    let dims: Vec<usize> = prefs.blocks.iter().map(|b| b.len()).collect();
    let mut evidence = LogicalEvidence::zeros(&dims, policy.label.clone());
    let mut tags: Vec<String> = Vec::new();

    for pred in &policy.preconditions {
        if pred.holds(truths) {
            continue;
        }
        let mut positives = Vec::new();
        pred.positive_atoms(&mut positives);
        for atom in positives {
            if truths.contains(&atom) {
                continue;
            }
            let (modality, outcome) = map
                .lookup(&atom)
                .ok_or_else(|| Error::Config(format!("predicate {atom} has no mapped outcome")))?;
            let boost = prefs.block_max(modality) + S::one();
            evidence.deltas[modality][outcome] = evidence.deltas[modality][outcome] + boost;
            tags.push(atom);
        }
        let mut negated = Vec::new();
        pred.negated_atoms(&mut negated);
        for atom in negated {
            if !truths.contains(&atom) {
                continue;
            }
            let (modality, outcome) = map
                .lookup(&atom)
                .ok_or_else(|| Error::Config(format!("predicate {atom} has no mapped outcome")))?;
            let boost = prefs.block_max(modality) + S::one();
            evidence.deltas[modality][outcome] = evidence.deltas[modality][outcome] - boost;
            tags.push(atom);
        }
    }
    if !tags.is_empty() {
        evidence.provenance = tags.join(",");
    }
    Ok(evidence)
}

/// Promote the selection to the stop policy when its completion satisfies the
/// stop preconditions.
pub fn promote_stop<'a, A>(selected: &'a Policy<A>, stop: &'a Policy<A>) -> &'a Policy<A> {
    if selected.kind == PolicyKind::Stop {
        return stop;
    }
    let mut post: Vec<String> = Vec::new();
    for p in &selected.postconditions {
        p.positive_atoms(&mut post);
    }
    let satisfied: LogicState = post.into_iter().collect();
    let stop_met = stop
        .preconditions
        .iter()
        .all(|p| match p {
            // only positive structure can be discharged by postconditions
            Predicate::Atom(_) | Predicate::And(_) => p.holds(&satisfied),
            Predicate::Not(_) => true,
        });
    if !stop.preconditions.is_empty() && stop_met {
        stop
    } else {
        selected
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Static {
        conditions: BTreeMap<String, NodeStatus>,
        actions: BTreeMap<String, NodeStatus>,
    }

    impl TickContext for Static {
        fn condition(&mut self, id: &str) -> NodeStatus {
            self.conditions[id]
        }
        fn action(&mut self, id: &str) -> NodeStatus {
            self.actions[id]
        }
        fn iibt(&mut self, _task: &str) -> NodeStatus {
            NodeStatus::Running
        }
    }

    fn leaf_a(id: &str) -> BTNode {
        BTNode::Action { id: id.into() }
    }

    #[test]
    fn sequence_and_fallback_semantics() {
        let mut ctx = Static {
            conditions: BTreeMap::new(),
            actions: [
                ("ok".to_string(), NodeStatus::Success),
                ("ok2".to_string(), NodeStatus::Success),
                ("fail".to_string(), NodeStatus::Failure),
                ("run".to_string(), NodeStatus::Running),
            ]
            .into(),
        };
        let seq = BTNode::Sequence {
            children: vec![leaf_a("ok"), leaf_a("ok2")],
        };
        assert_eq!(tick(&seq, &mut ctx), NodeStatus::Success);
        let seq2 = BTNode::Sequence {
            children: vec![leaf_a("ok"), leaf_a("fail"), leaf_a("ok2")],
        };
        assert_eq!(tick(&seq2, &mut ctx), NodeStatus::Failure);
        let fb = BTNode::Fallback {
            children: vec![leaf_a("fail"), leaf_a("run")],
        };
        assert_eq!(tick(&fb, &mut ctx), NodeStatus::Running);
        // re-ticking an unchanged world yields the same status
        assert_eq!(tick(&fb, &mut ctx), NodeStatus::Running);
    }

    #[test]
    fn malformed_tree_rejected_at_load() {
        let bad = BTNode::Sequence { children: vec![] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn metrics_single_leaf() {
        let m = node_metrics(&leaf_a("x"));
        assert_eq!(m.total, 1);
        assert_eq!(m.depth, 1);
        assert_eq!(m.actions, 1);
    }

    #[test]
    fn metrics_counts_and_depth() {
        let tree = BTNode::Fallback {
            children: vec![
                BTNode::Sequence {
                    children: vec![
                        BTNode::Condition {
                            id: "BatteryEnough".into(),
                        },
                        BTNode::Iibt {
                            task: "MoveToGoal".into(),
                        },
                    ],
                },
                leaf_a("MoveToCharger"),
            ],
        };
        let m = node_metrics(&tree);
        assert_eq!(m.total, 5);
        assert_eq!(m.sequences, 1);
        assert_eq!(m.fallbacks, 1);
        assert_eq!(m.conditions, 1);
        assert_eq!(m.actions, 2); // IIBT counts as an action
        assert_eq!(m.depth, 3);
    }

    fn vocab(atoms: &[&str]) -> std::collections::BTreeSet<String> {
        atoms.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preconditions_conjunction() {
        let mut p: Policy<usize> = Policy::new(0, "pick", vec![vec![0]]);
        p.preconditions = vec![
            Predicate::atom("IsReached(loc)"),
            Predicate::not(Predicate::atom("IsHolding(obj)")),
        ];
        let v = vocab(&["IsReached(loc)", "IsHolding(obj)"]);
        let mut truths = LogicState::new();
        truths.insert("IsReached(loc)".into());
        assert!(check_preconditions(&p, &truths, &v).unwrap());
        truths.insert("IsHolding(obj)".into());
        assert!(!check_preconditions(&p, &truths, &v).unwrap());
        let empty: Policy<usize> = Policy::new(1, "idle", vec![vec![0]]);
        assert!(check_preconditions(&empty, &truths, &v).unwrap());
    }

    #[test]
    fn unknown_predicate_is_config_error() {
        let mut p: Policy<usize> = Policy::new(0, "x", vec![vec![0]]);
        p.preconditions = vec![Predicate::atom("Bogus(thing)")];
        let v = vocab(&["IsReached(loc)"]);
        let err = check_preconditions(&p, &LogicState::new(), &v);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn f_l_boosts_unmet_positive() {
        // unmet IsReached with block max 1 emits +2 on the bound outcome
        let prefs = PreferenceMatrix {
            blocks: vec![vec![0.0, 1.0, 0.0, 0.0]],
        };
        let mut map = PredicateOutcomeMap::new();
        map.bind("IsReached(loc)", 0, 0);
        let mut p: Policy<usize> = Policy::new(0, "pick", vec![vec![0]]);
        p.preconditions = vec![Predicate::atom("IsReached(loc)")];
        let ev = logic_to_preference(&p, &LogicState::new(), &prefs, &map).unwrap();
        assert_eq!(ev.deltas[0], vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn f_l_obstacle_negative() {
        // Exist(obstacle) violated with block max 0 emits −1 on the cell
        let prefs = PreferenceMatrix {
            blocks: vec![vec![0.0; 49]],
        };
        let mut map = PredicateOutcomeMap::new();
        map.bind("Exist(obstacle@p30)", 0, 30);
        let mut p: Policy<usize> = Policy::new(0, "goal", vec![vec![0]]);
        p.preconditions = vec![Predicate::not(Predicate::atom("Exist(obstacle@p30)"))];
        let mut truths = LogicState::new();
        truths.insert("Exist(obstacle@p30)".into());
        let ev = logic_to_preference(&p, &truths, &prefs, &map).unwrap();
        assert_eq!(ev.deltas[0][30], -1.0);
    }

    #[test]
    fn f_l_no_unmet_is_zero() {
        let prefs = PreferenceMatrix {
            blocks: vec![vec![0.0; 4]],
        };
        let map = PredicateOutcomeMap::new();
        let p: Policy<usize> = Policy::new(0, "idle", vec![vec![0]]);
        let ev = logic_to_preference(&p, &LogicState::new(), &prefs, &map).unwrap();
        assert!(ev.is_zero());
    }

    #[test]
    fn promote_stop_cases() {
        let mut goal: Policy<usize> = Policy::new(0, "goal", vec![vec![0]]);
        goal.postconditions = vec![Predicate::atom("IsArrived(goal)")];
        let mut stop: Policy<usize> = Policy::new(9, "stop", vec![]);
        stop.kind = PolicyKind::Stop;
        stop.preconditions = vec![Predicate::atom("IsArrived(goal)")];

        assert_eq!(promote_stop(&goal, &stop).id, 9);
        let unrelated: Policy<usize> = Policy::new(1, "wander", vec![vec![0]]);
        assert_eq!(promote_stop(&unrelated, &stop).id, 1);
        assert_eq!(promote_stop(&stop, &stop).id, 9);
    }

    #[test]
    fn tree_json_round_trip() {
        let tree = BTNode::Fallback {
            children: vec![
                BTNode::Sequence {
                    children: vec![
                        BTNode::Condition {
                            id: "BatteryEnough".into(),
                        },
                        BTNode::Iibt {
                            task: "MoveToGoal".into(),
                        },
                    ],
                },
                BTNode::Action {
                    id: "MoveToCharger".into(),
                },
            ],
        };
        let json = serde_json::to_string(&tree).unwrap();
        let back: BTNode = serde_json::from_str(&json).unwrap();
        assert_eq!(tree, back);
        assert!(serde_json::from_str::<BTNode>("{\"type\":\"sequence\",\"bogus\":1}").is_err());
    }
}
