//! The interactive-inference execution node: the full per-tick cycle of
//! belief update, intention merging, free-energy policy selection,
//! precondition repair through preference shaping, and connectivity-gated
//! dispatch.

use crate::bt::{check_preconditions, logic_to_preference, promote_stop, NodeStatus};
use crate::error::{Error, Result};
use crate::inference::{
    conditioned_prior, interactive_infer, InferenceConfig, Policy, PolicyKind, PolicyPosterior,
};
use crate::model::{add_evidence, remove_evidence, LogicalEvidence, PolicyPrior, PreferenceMatrix};
use crate::Scalar;
use std::collections::BTreeMap;

/// Latest known intention of a peer robot, as seen by one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Claim {
    /// Id of the peer's selected policy within its own candidate pool.
    pub policy_id: usize,
    /// Goal cell (grid) or claimed target the intention commits to.
    pub goal_cell: Option<usize>,
    pub tick: u64,
}

pub type ClaimMap = BTreeMap<usize, Claim>;

/// Domain services one IIBT node needs each tick. The registry hands the
/// node its generative model, candidate pools and symbolic state; pools for
/// peers are simulated locally from the shared world view, which keeps their
/// policy ids aligned with the peers' own pools (both sides run the same
/// deterministic builder).
pub trait TaskModel {
    type Action: Copy + PartialEq + std::fmt::Debug;

    fn pad_action(&self) -> Self::Action;
    /// Pair partner whose pool enters the joint product, if any.
    fn partner(&self, robot: usize) -> Option<usize>;
    /// Joint candidate pool for this robot's decision, ids in pool order.
    fn joint_pool(&self, robot: usize) -> Result<Vec<Policy<Self::Action>>>;
    /// Index of this robot's component within a joint policy.
    fn own_component_pos(&self, robot: usize) -> usize;
    /// Generative model with the node's current preferences and the known
    /// peer claims baked into the task-outcome modality.
    fn model(
        &self,
        robot: usize,
        prefs: &PreferenceMatrix<Scalar>,
        claims: &ClaimMap,
    ) -> Result<crate::GenerativeModel<Self::Action>>;
    fn observation(&self, robot: usize) -> Result<crate::Observation>;
    fn belief(
        &self,
        robot: usize,
        model: &crate::GenerativeModel<Self::Action>,
        obs: &crate::Observation,
    ) -> Result<crate::Belief>;
    fn logic_state(&self, robot: usize) -> crate::inference::LogicState;
    fn vocabulary(&self, robot: usize) -> std::collections::BTreeSet<String>;
    fn predicate_map(&self, robot: usize) -> crate::bt::PredicateOutcomeMap;
}

/// What one IIBT tick decided, for the simulator to enact and log.
#[derive(Debug, Clone)]
pub struct IibtOutcome<A> {
    pub status: NodeStatus,
    /// Action to enact this tick (absent on Success/Failure).
    pub action: Option<A>,
    /// Joint pool id of the selection and this robot's component policy id.
    pub selected_joint: Option<usize>,
    pub selected_own: Option<usize>,
    pub selected_label: Option<String>,
    pub posterior: Option<PolicyPosterior<Scalar>>,
    /// True when the selected policy was dispatched under full connectivity.
    pub dispatched: bool,
    /// The dispatched policy's completion satisfies the stop preconditions.
    pub promoted_to_stop: bool,
    pub boost_adds: usize,
    pub boost_removes: usize,
}

/// Per-node state carried across ticks.
#[derive(Debug, Clone)]
pub struct IibtNode {
    pub robot: usize,
    pub task: String,
    prefs: PreferenceMatrix<Scalar>,
    boost_stack: Vec<LogicalEvidence<Scalar>>,
    pub cfg: InferenceConfig<Scalar>,
    pub timeout_budget: u64,
    repair_ticks: u64,
}

impl IibtNode {
    pub fn new(
        robot: usize,
        task: impl Into<String>,
        prefs: PreferenceMatrix<Scalar>,
        cfg: InferenceConfig<Scalar>,
        timeout_budget: u64,
    ) -> Self {
        IibtNode {
            robot,
            task: task.into(),
            prefs,
            boost_stack: Vec::new(),
            cfg,
            timeout_budget,
            repair_ticks: 0,
        }
    }

    pub fn preferences(&self) -> &PreferenceMatrix<Scalar> {
        &self.prefs
    }

    pub fn boost_depth(&self) -> usize {
        self.boost_stack.len()
    }

    /// One full tick of the strategy-selection cycle. `connected` is the
    /// number of peers currently reachable; dispatch is gated on
    /// `connected == peers`.
    pub fn tick<T: TaskModel>(
        &mut self,
        domain: &T,
        claims: &ClaimMap,
        connected: usize,
        peers: usize,
    ) -> Result<IibtOutcome<T::Action>> {
        let mut adds = 0usize;

        let obs = domain.observation(self.robot)?;
        let truths = domain.logic_state(self.robot);
        let vocabulary = domain.vocabulary(self.robot);
        let map = domain.predicate_map(self.robot);

        // Candidate pool merged with peer intentions (the conditioning prior
        // realizes the pool augmentation), scored under current preferences.
        let pool = domain.joint_pool(self.robot)?;
        let own_pos = domain.own_component_pos(self.robot);
        let prior = self.conditioning_prior(domain, &pool, claims)?;
        let model = domain.model(self.robot, &self.prefs, claims)?;
        let belief = domain.belief(self.robot, &model, &obs)?;

        let (idx, posterior) =
            interactive_infer(&pool, &belief, &model, &obs, &prior, &self.cfg)?;

        // Terminal policy selected: report success without executing.
        if pool[idx].kind == PolicyKind::Stop {
            self.repair_ticks = 0;
            return Ok(outcome_no_action(
                NodeStatus::Success,
                &pool[idx],
                own_pos,
                posterior,
                adds,
                0,
            ));
        }

        // Precondition repair: one boost / re-infer iteration per tick; the
        // loop carries across ticks via Running and fails on timeout.
        if !check_preconditions(&pool[idx], &truths, &vocabulary)? {
            if self.repair_ticks >= self.timeout_budget {
                self.repair_ticks = 0;
                return Ok(outcome_no_action(
                    NodeStatus::Failure,
                    &pool[idx],
                    own_pos,
                    posterior,
                    adds,
                    0,
                ));
            }
            let evidence = logic_to_preference(&pool[idx], &truths, &self.prefs, &map)?;
            if !evidence.is_zero() {
                self.prefs = add_evidence(&self.prefs, &evidence)?;
                self.boost_stack.push(evidence);
                adds += 1;
            }
            // Reconstruct the pool and merge intentions again under the
            // boosted preferences.
            let pool2 = domain.joint_pool(self.robot)?;
            let prior2 = self.conditioning_prior(domain, &pool2, claims)?;
            let model2 = domain.model(self.robot, &self.prefs, claims)?;
            let belief2 = domain.belief(self.robot, &model2, &obs)?;
            let (idx2, post2) =
                interactive_infer(&pool2, &belief2, &model2, &obs, &prior2, &self.cfg)?;
            if pool2[idx2].kind == PolicyKind::Stop {
                self.repair_ticks = 0;
                return Ok(outcome_no_action(
                    NodeStatus::Success,
                    &pool2[idx2],
                    own_pos,
                    post2,
                    adds,
                    0,
                ));
            }
            if !check_preconditions(&pool2[idx2], &truths, &vocabulary)? {
                self.repair_ticks += 1;
                return Ok(outcome_no_action(
                    NodeStatus::Running,
                    &pool2[idx2],
                    own_pos,
                    post2,
                    adds,
                    0,
                ));
            }
            return self.dispatch(domain, &pool2, idx2, post2, own_pos, connected, peers, adds);
        }

        self.dispatch(domain, &pool, idx, posterior, own_pos, connected, peers, adds)
    }

    #[allow(clippy::too_many_arguments)]
    fn dispatch<T: TaskModel>(
        &mut self,
        domain: &T,
        pool: &[Policy<T::Action>],
        idx: usize,
        posterior: PolicyPosterior<Scalar>,
        own_pos: usize,
        connected: usize,
        peers: usize,
        adds: usize,
    ) -> Result<IibtOutcome<T::Action>> {
        let selected = &pool[idx];
        self.repair_ticks = 0;

        if connected < peers {
            // Degraded connectivity: execute the wait policy, keep boosts.
            return Ok(IibtOutcome {
                status: NodeStatus::Running,
                action: Some(domain.pad_action()),
                selected_joint: Some(selected.id),
                selected_own: own_id(selected, own_pos),
                selected_label: Some("wait".to_string()),
                posterior: Some(posterior),
                dispatched: false,
                promoted_to_stop: false,
                boost_adds: adds,
                boost_removes: 0,
            });
        }

        // Execute the first own action of the selection and roll the
        // temporary preference boosts back in reverse order of application.
        let action = selected
            .steps
            .first()
            .map(|step| step[own_pos.min(step.len() - 1)])
            .unwrap_or_else(|| domain.pad_action());
        let mut removes = 0usize;
        while let Some(evidence) = self.boost_stack.pop() {
            self.prefs = remove_evidence(&self.prefs, &evidence)?;
            removes += 1;
        }
        let promoted_to_stop = pool
            .iter()
            .find(|p| p.kind == PolicyKind::Stop)
            .map(|stop| promote_stop(selected, stop).kind == PolicyKind::Stop)
            .unwrap_or(false);
        Ok(IibtOutcome {
            status: NodeStatus::Running,
            action: Some(action),
            selected_joint: Some(selected.id),
            selected_own: own_id(selected, own_pos),
            selected_label: Some(selected.label.clone()),
            posterior: Some(posterior),
            dispatched: true,
            promoted_to_stop,
            boost_adds: adds,
            boost_removes: removes,
        })
    }

    fn conditioning_prior<T: TaskModel>(
        &self,
        domain: &T,
        pool: &[Policy<T::Action>],
        claims: &ClaimMap,
    ) -> Result<PolicyPrior<Scalar>> {
        if pool.is_empty() {
            return Err(Error::NoCandidates);
        }
        let Some(partner) = domain.partner(self.robot) else {
            return Ok(PolicyPrior::uniform(pool.len()));
        };
        let Some(claim) = claims.get(&partner) else {
            return Ok(PolicyPrior::uniform(pool.len()));
        };
        if pool.iter().all(|p| p.components.is_empty()) {
            return Ok(PolicyPrior::uniform(pool.len()));
        }
        let partner_pos = 1 - domain.own_component_pos(self.robot);
        // A claim that no longer matches the rebuilt partner pool cannot pin
        // anything; fall back to the uniform prior.
        if !pool
            .iter()
            .any(|p| p.components.get(partner_pos) == Some(&claim.policy_id))
        {
            return Ok(PolicyPrior::uniform(pool.len()));
        }
        conditioned_prior(pool, partner_pos, claim.policy_id)
    }
}

fn outcome_no_action<A>(
    status: NodeStatus,
    policy: &Policy<A>,
    own_pos: usize,
    posterior: PolicyPosterior<Scalar>,
    adds: usize,
    removes: usize,
) -> IibtOutcome<A> {
    IibtOutcome {
        status,
        action: None,
        selected_joint: Some(policy.id),
        selected_own: own_id(policy, own_pos),
        selected_label: Some(policy.label.clone()),
        posterior: Some(posterior),
        dispatched: false,
        promoted_to_stop: false,
        boost_adds: adds,
        boost_removes: removes,
    }
}

fn own_id<A>(policy: &Policy<A>, own_pos: usize) -> Option<usize> {
    policy.components.get(own_pos).copied().or(Some(policy.id))
}
