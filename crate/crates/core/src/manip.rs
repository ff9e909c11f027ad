//! Two-robot pick/place domain: four-phase task states per robot, the 16
//! joint action pairs, the published likelihood structure, and action
//! pre/postcondition law.

use crate::error::Result;
use crate::inference::{Policy, PolicyKind, Predicate};
use crate::model::{Matrix, ModalityModel};
use crate::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipAction {
    MoveTo,
    Pick,
    Place,
    Idle,
}

pub const MANIP_ACTIONS: [ManipAction; 4] = [
    ManipAction::MoveTo,
    ManipAction::Pick,
    ManipAction::Place,
    ManipAction::Idle,
];

/// Task-phase latent state per robot, in observation-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Loc = 0,
    Hold = 1,
    Place = 2,
    Free = 3,
}

pub const PHASE_DIM: usize = 4;

/// Task-result outcome order for this domain.
pub const MANIP_SUCCESS: usize = 0;
pub const MANIP_FAILURE: usize = 1;
pub const MANIP_NULL: usize = 2;

pub fn reached_atom(robot: usize) -> String {
    format!("IsReached(r{})", robot + 1)
}

pub fn holding_atom(robot: usize) -> String {
    format!("IsHolding(r{})", robot + 1)
}

pub fn placed_atom(robot: usize) -> String {
    format!("IsPlaced(r{})", robot + 1)
}

/// Table of action preconditions: moveTo needs the location unreached, pick
/// needs presence without holding, place needs presence and holding without
/// placement, idle is always admissible.
pub fn action_preconditions(action: ManipAction, robot: usize) -> Vec<Predicate> {
    match action {
        ManipAction::MoveTo => vec![Predicate::not(Predicate::atom(reached_atom(robot)))],
        ManipAction::Pick => vec![
            Predicate::atom(reached_atom(robot)),
            Predicate::not(Predicate::atom(holding_atom(robot))),
        ],
        ManipAction::Place => vec![
            Predicate::atom(reached_atom(robot)),
            Predicate::atom(holding_atom(robot)),
            Predicate::not(Predicate::atom(placed_atom(robot))),
        ],
        ManipAction::Idle => vec![],
    }
}

/// Convenience check over a logic state, the direct reading of the table.
pub fn manip_preconditions(
    action: ManipAction,
    robot: usize,
    truths: &crate::inference::LogicState,
) -> bool {
    action_preconditions(action, robot)
        .iter()
        .all(|p| p.holds(truths))
}

/// The 16 joint policies in the published order: robot-1 action major over
/// `[moveTo, pick, place, idle]`. Preconditions carry the deciding robot's
/// own component; `extra_preconditions` inject cross-robot dependencies
/// (e.g. the bottle placement waiting on the plate).
pub fn enumerate_joint_policies(
    deciding_robot: usize,
    extra_preconditions: &dyn Fn(usize, ManipAction) -> Vec<Predicate>,
) -> Vec<Policy<ManipAction>> {
    let mut pool = Vec::with_capacity(16);
    for (i, &a1) in MANIP_ACTIONS.iter().enumerate() {
        for (j, &a2) in MANIP_ACTIONS.iter().enumerate() {
            let id = i * 4 + j;
            let own = if deciding_robot == 0 { a1 } else { a2 };
            let mut preconditions = action_preconditions(own, deciding_robot);
            preconditions.extend(extra_preconditions(deciding_robot, own));
            pool.push(Policy {
                id,
                label: format!("({a1:?},{a2:?})").to_lowercase(),
                kind: PolicyKind::Plain,
                steps: vec![vec![a1, a2]],
                preconditions,
                postconditions: vec![],
                goal: None,
                components: vec![i, j],
            });
        }
    }
    pool
}

/// Phase-observation likelihood per robot: 0.9 on the diagonal, the residual
/// mass spread over the other three outcomes.
pub fn manip_likelihood() -> Matrix<Scalar> {
    Matrix::diagonal_with_spread(PHASE_DIM, 0.9)
}

/// Per-action phase transitions: each action concentrates `success_prob`
/// mass on its target phase and leaves the rest where it was; idle is the
/// identity.
pub fn manip_transitions(success_prob: Scalar) -> Vec<(ManipAction, Matrix<Scalar>)> {
    MANIP_ACTIONS
        .iter()
        .map(|&a| {
            let target = match a {
                ManipAction::MoveTo => Some(Phase::Loc as usize),
                ManipAction::Pick => Some(Phase::Hold as usize),
                ManipAction::Place => Some(Phase::Place as usize),
                ManipAction::Idle => None,
            };
            let m = match target {
                None => Matrix::identity(PHASE_DIM),
                Some(t) => Matrix::from_fn(PHASE_DIM, PHASE_DIM, |r, c| {
                    if c == t {
                        if r == t {
                            1.0
                        } else {
                            0.0
                        }
                    } else if r == t {
                        success_prob
                    } else if r == c {
                        1.0 - success_prob
                    } else {
                        0.0
                    }
                }),
            };
            (a, m)
        })
        .collect()
}

/// Result modality over the two phase factors: success once both robots have
/// completed placement, otherwise pending.
pub fn manip_result_modality() -> ModalityModel<Scalar> {
    let mut m = Matrix::from_fn(3, PHASE_DIM * PHASE_DIM, |_, _| 0.0);
    for p1 in 0..PHASE_DIM {
        for p2 in 0..PHASE_DIM {
            let class = if p1 == Phase::Place as usize && p2 == Phase::Place as usize {
                MANIP_SUCCESS
            } else {
                MANIP_NULL
            };
            m.set(class, p1 * PHASE_DIM + p2, 1.0);
        }
    }
    ModalityModel {
        matrix: m,
        factors: vec![0, 1],
    }
}

/// Joint phase transition model over both robots' factors.
pub fn manip_transition_model(
    success_prob: Scalar,
) -> crate::model::TransitionModel<Scalar, ManipAction> {
    crate::model::TransitionModel {
        factors: vec![manip_transitions(success_prob), manip_transitions(success_prob)],
    }
}

pub fn validate_pool(pool: &[Policy<ManipAction>]) -> Result<()> {
    debug_assert_eq!(pool.len(), 16);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::LogicState;

    #[test]
    fn enumeration_matches_published_order() {
        let pool = enumerate_joint_policies(0, &|_, _| vec![]);
        assert_eq!(pool.len(), 16);
        assert_eq!(pool[3].steps[0], vec![ManipAction::MoveTo, ManipAction::Idle]);
        assert_eq!(pool[15].steps[0], vec![ManipAction::Idle, ManipAction::Idle]);
        assert_eq!(pool[12].steps[0], vec![ManipAction::Idle, ManipAction::MoveTo]);
        let mut labels: Vec<_> = pool.iter().map(|p| p.label.clone()).collect();
        labels.dedup();
        assert_eq!(labels.len(), 16);
        for (i, p) in pool.iter().enumerate() {
            assert_eq!(p.id, i);
            assert_eq!(p.components, vec![i / 4, i % 4]);
        }
    }

    #[test]
    fn likelihood_diagonal_and_stochastic() {
        let a = manip_likelihood();
        for i in 0..4 {
            assert!((a.at(i, i) - 0.9).abs() < 1e-12);
        }
        assert!(a.is_column_stochastic(1e-9));
        // entropy of a column, direct summation oracle
        let h = crate::model::entropy(&a.column(2));
        assert!((h - 0.43494370919976).abs() < 1e-10);
    }

    #[test]
    fn transitions_concentrate_on_target() {
        let ts = manip_transitions(0.95);
        for (_, m) in &ts {
            assert!(m.is_column_stochastic(1e-9));
        }
        let idle = &ts.iter().find(|(a, _)| *a == ManipAction::Idle).unwrap().1;
        assert_eq!(*idle, Matrix::identity(4));
        let pick = &ts.iter().find(|(a, _)| *a == ManipAction::Pick).unwrap().1;
        // from "not holding" (free) the hold mass rises to 0.95
        let free = Phase::Free as usize;
        let hold = Phase::Hold as usize;
        assert!((pick.at(hold, free) - 0.95).abs() < 1e-12);
        assert!((pick.at(free, free) - 0.05).abs() < 1e-12);
        assert!((pick.at(hold, hold) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precondition_table() {
        let mut truths = LogicState::new();
        truths.insert(reached_atom(0));
        assert!(manip_preconditions(ManipAction::Pick, 0, &truths));
        assert!(!manip_preconditions(ManipAction::Place, 0, &truths));
        truths.insert(holding_atom(0));
        assert!(manip_preconditions(ManipAction::Place, 0, &truths));
        assert!(!manip_preconditions(ManipAction::Pick, 0, &truths));
        assert!(manip_preconditions(ManipAction::Idle, 0, &truths));
        // moveTo only before arrival
        assert!(!manip_preconditions(ManipAction::MoveTo, 0, &truths));
    }

    #[test]
    fn result_modality_success_cell() {
        let m = manip_result_modality();
        let place = Phase::Place as usize;
        assert_eq!(m.matrix.at(MANIP_SUCCESS, place * 4 + place), 1.0);
        assert_eq!(m.matrix.at(MANIP_NULL, 0), 1.0);
        assert!(m.matrix.is_column_stochastic(1e-12));
    }
}
