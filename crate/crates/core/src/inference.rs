//! Free-energy policy scoring and selection.
//!
//! A candidate policy is a fixed sequence of per-factor action tuples. Scoring
//! rolls the belief forward through the sequence, accumulates extrinsic value
//! (KL between predicted outcomes and the preference-induced outcome prior)
//! minus intrinsic value (expected observation entropy), and combines the
//! result with the policy prior and the current-evidence term into
//! `ln E − F − γ·G`. The posterior over candidates is the softmax of those
//! scores.

use crate::error::{Error, Result};
use crate::model::{
    apply_transition, entropy, kl_divergence, softmax, Belief, GenerativeModel, LogicalEvidence,
    Observation, PolicyPrior, PreferenceMatrix, LOG_FLOOR,
};
use crate::num::{real, Real};

// ---------------------------------------------------------------------------
// Policies and predicates
// ---------------------------------------------------------------------------

/// Symbolic precondition/postcondition grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    /// A named atom such as `IsArrived(goal_1)` or `Exist(obstacle)`.
    Atom(String),
    Not(Box<Predicate>),
    And(Vec<Predicate>),
}

impl Predicate {
    pub fn atom(s: impl Into<String>) -> Self {
        Predicate::Atom(s.into())
    }

    pub fn not(p: Predicate) -> Self {
        Predicate::Not(Box::new(p))
    }

    pub fn holds(&self, truths: &std::collections::BTreeSet<String>) -> bool {
        match self {
            Predicate::Atom(a) => truths.contains(a),
            Predicate::Not(p) => !p.holds(truths),
            Predicate::And(ps) => ps.iter().all(|p| p.holds(truths)),
        }
    }

    /// Positive atoms this predicate requires to be true.
    pub fn positive_atoms(&self, out: &mut Vec<String>) {
        match self {
            Predicate::Atom(a) => out.push(a.clone()),
            Predicate::Not(_) => {}
            Predicate::And(ps) => {
                for p in ps {
                    p.positive_atoms(out);
                }
            }
        }
    }

    /// Atoms appearing under negation (must be false).
    pub fn negated_atoms(&self, out: &mut Vec<String>) {
        match self {
            Predicate::Atom(_) => {}
            Predicate::Not(p) => {
                if let Predicate::Atom(a) = &**p {
                    out.push(a.clone());
                }
            }
            Predicate::And(ps) => {
                for p in ps {
                    p.negated_atoms(out);
                }
            }
        }
    }
}

/// Set of atoms currently true, derived from ground-truth world predicates.
pub type LogicState = std::collections::BTreeSet<String>;

/// Role a candidate plays in the node's pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Plain,
    Goal,
    Waypoint,
    Wait,
    Stop,
}

/// An identified action sequence with symbolic pre/postconditions. `steps[t]`
/// holds one action per latent factor of the model it is scored against.
#[derive(Debug, Clone)]
pub struct Policy<A> {
    pub id: usize,
    pub label: String,
    pub kind: PolicyKind,
    pub steps: Vec<Vec<A>>,
    pub preconditions: Vec<Predicate>,
    pub postconditions: Vec<Predicate>,
    /// Goal label this policy pursues, when applicable.
    pub goal: Option<String>,
    /// For joint policies: per-robot source policy ids, lower index first.
    pub components: Vec<usize>,
}

impl<A> Policy<A> {
    pub fn new(id: usize, label: impl Into<String>, steps: Vec<Vec<A>>) -> Self {
        Policy {
            id,
            label: label.into(),
            kind: PolicyKind::Plain,
            steps,
            preconditions: Vec::new(),
            postconditions: Vec::new(),
            goal: None,
            components: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

// ---------------------------------------------------------------------------
// Scores and posteriors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScore<S> {
    pub policy_id: usize,
    /// Variational free energy of the current belief/observation pair.
    pub f: S,
    /// Expected free energy of the rollout.
    pub g: S,
    pub extrinsic: S,
    pub intrinsic: S,
    /// `ln E − F − γ·G`.
    pub score: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPosterior<S> {
    /// `(policy id, posterior probability)` in pool order.
    pub probs: Vec<(usize, S)>,
    /// Argmax policy id, ties broken toward the lowest id at 1e-9 score
    /// granularity.
    pub selected: usize,
    /// Index of the selected policy within the pool.
    pub selected_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonMode {
    /// Roll the belief through the whole action sequence (default).
    FullSequence,
    /// Evaluate only the first step.
    OneStep,
}

#[derive(Debug, Clone, Copy)]
pub struct InferenceConfig<S> {
    /// Precision weighting the expected free energy in the score.
    pub gamma: S,
    pub horizon: HorizonMode,
    pub log_floor: S,
    /// Scores closer than this are treated as tied.
    pub tie_tolerance: S,
}

impl<S: Real> Default for InferenceConfig<S> {
    fn default() -> Self {
        InferenceConfig {
            gamma: S::one(),
            horizon: HorizonMode::FullSequence,
            log_floor: real(LOG_FLOOR),
            tie_tolerance: real(1e-9),
        }
    }
}

impl<S: Real> InferenceConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > S::zero()) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Preference-induced outcome prior: softmax applied independently per
/// modality block.
pub fn outcome_prior<S: Real>(prefs: &PreferenceMatrix<S>) -> Result<Vec<Vec<S>>> {
    prefs.blocks.iter().map(|b| softmax(b)).collect()
}

/// `F = −Σ_m Σ_s b(s) · ln A_m(o_m | s)`, log-floored. Depends only on the
/// current belief and observation, so it is constant across candidates and
/// cancels in the posterior; it is reported per policy for diagnostics.
pub fn variational_free_energy<S: Real, A: Copy + PartialEq + std::fmt::Debug>(
    belief: &Belief<S>,
    model: &GenerativeModel<S, A>,
    obs: &Observation,
) -> Result<S> {
    if obs.outcomes.len() != model.likelihood.modalities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes for {} modalities",
            obs.outcomes.len(),
            model.likelihood.modalities.len()
        )));
    }
    let floor = real::<S>(LOG_FLOOR);
    let mut f = S::zero();
    for (m, modality) in model.likelihood.modalities.iter().enumerate() {
        let state = belief.factor_product(&modality.factors);
        let row = modality.matrix.row(obs.outcomes[m]);
        for (b, a) in state.iter().zip(row) {
            if *b > S::zero() {
                let a = if *a > floor { *a } else { floor };
                f = f - *b * a.ln();
            }
        }
    }
    Ok(f)
}

/// Expected free energy of one candidate: `(G, extrinsic, intrinsic)`.
///
/// Single-factor modalities are scored at every rollout step; modalities that
/// bind several factors report joint task outcomes and are scored at the
/// final step only (task success is terminal in both domains).
pub fn expected_free_energy<S: Real, A: Copy + PartialEq + std::fmt::Debug>(
    policy: &Policy<A>,
    belief: &Belief<S>,
    model: &GenerativeModel<S, A>,
    cfg: &InferenceConfig<S>,
) -> Result<(S, S, S)> {
    let priors = outcome_prior(&model.preferences)?;
    let steps: &[Vec<A>] = match cfg.horizon {
        HorizonMode::FullSequence => &policy.steps,
        HorizonMode::OneStep => &policy.steps[..policy.steps.len().min(1)],
    };
    let mut extrinsic = S::zero();
    let mut intrinsic = S::zero();
    let mut b = belief.clone();
    let last = steps.len().saturating_sub(1);
    for (t, step) in steps.iter().enumerate() {
        b = apply_transition(&model.transitions, step, &b)?;
        for (m, modality) in model.likelihood.modalities.iter().enumerate() {
            let terminal_only = modality.factors.len() > 1;
            if terminal_only && t != last {
                continue;
            }
            let state = b.factor_product(&modality.factors);
            let predicted = modality.matrix.mul_vec(&state)?;
            extrinsic = extrinsic + kl_divergence(&predicted, &priors[m])?;
            let mut h = S::zero();
            for (s, w) in state.iter().enumerate() {
                if *w > S::zero() {
                    h = h + *w * entropy(&modality.matrix.column(s));
                }
            }
            intrinsic = intrinsic + h;
        }
    }
    Ok((extrinsic - intrinsic, extrinsic, intrinsic))
}

/// Score every candidate: `ln E(π) − F(π) − γ·G(π)`.
pub fn score_policies<S: Real, A: Copy + PartialEq + std::fmt::Debug>(
    candidates: &[Policy<A>],
    belief: &Belief<S>,
    model: &GenerativeModel<S, A>,
    obs: &Observation,
    prior: &PolicyPrior<S>,
    cfg: &InferenceConfig<S>,
) -> Result<Vec<PolicyScore<S>>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if prior.len() != candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "policy prior over {} entries for {} candidates",
            prior.len(),
            candidates.len()
        )));
    }
    cfg.validate()?;
    let f = variational_free_energy(belief, model, obs)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for (k, policy) in candidates.iter().enumerate() {
        let (g, extrinsic, intrinsic) = expected_free_energy(policy, belief, model, cfg)?;
        let score = prior.probs()[k].ln() - f - cfg.gamma * g;
        scores.push(PolicyScore {
            policy_id: policy.id,
            f,
            g,
            extrinsic,
            intrinsic,
            score,
        });
    }
    Ok(scores)
}

/// Softmax the scores into a posterior and pick the argmax. Scores within the
/// tie tolerance of the maximum resolve to the lowest policy id, which keeps
/// selections stable when candidates are exactly tied in real arithmetic and
/// differ only in float summation order.
pub fn policy_posterior<S: Real>(
    scores: &[PolicyScore<S>],
    cfg: &InferenceConfig<S>,
) -> Result<PolicyPosterior<S>> {
    if scores.is_empty() {
        return Err(Error::NoCandidates);
    }
    let raw: Vec<S> = scores.iter().map(|s| s.score).collect();
    let probs = softmax(&raw)?;
    let max = raw
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut selected_index = 0;
    let mut selected = usize::MAX;
    for (i, s) in scores.iter().enumerate() {
        if (max - raw[i]) <= cfg.tie_tolerance && s.policy_id < selected {
            selected = s.policy_id;
            selected_index = i;
        }
    }
    Ok(PolicyPosterior {
        probs: scores
            .iter()
            .zip(&probs)
            .map(|(s, p)| (s.policy_id, *p))
            .collect(),
        selected,
        selected_index,
    })
}

/// One full inference call: score the pool, softmax, select.
pub fn interactive_infer<S: Real, A: Copy + PartialEq + std::fmt::Debug>(
    candidates: &[Policy<A>],
    belief: &Belief<S>,
    model: &GenerativeModel<S, A>,
    obs: &Observation,
    prior: &PolicyPrior<S>,
    cfg: &InferenceConfig<S>,
) -> Result<(usize, PolicyPosterior<S>)> {
    let scores = score_policies(candidates, belief, model, obs, prior, cfg)?;
    let posterior = policy_posterior(&scores, cfg)?;
    Ok((posterior.selected_index, posterior))
}

/// Cartesian product of per-robot pools, lower robot index major. Each joint
/// step is the tuple of per-robot actions; shorter components are stretched
/// to the common horizon by inserting `pad` before their final action, so
/// every component arrives on the last step.
pub fn compose_joint_policies<A: Copy + PartialEq + std::fmt::Debug>(
    pools: &[&[Policy<A>]],
    pad: A,
) -> Result<Vec<Policy<A>>> {
    if pools.len() < 2 {
        return Err(Error::EmptyPool("joint product needs at least 2 pools".into()));
    }
    for (i, p) in pools.iter().enumerate() {
        if p.is_empty() {
            return Err(Error::EmptyPool(format!("pool {i} is empty")));
        }
    }
    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for pool in pools {
        let mut next = Vec::with_capacity(combos.len() * pool.len());
        for combo in &combos {
            for k in 0..pool.len() {
                let mut c = combo.clone();
                c.push(k);
                next.push(c);
            }
        }
        combos = next;
    }

    let mut joint = Vec::with_capacity(combos.len());
    for (id, combo) in combos.iter().enumerate() {
        let parts: Vec<&Policy<A>> = combo
            .iter()
            .enumerate()
            .map(|(r, &k)| &pools[r][k])
            .collect();
        let horizon = parts.iter().map(|p| p.horizon()).max().unwrap_or(0);
        let mut steps = vec![Vec::with_capacity(parts.len()); horizon];
        for part in &parts {
            let seq = stretch_actions(part, horizon, pad);
            for (t, a) in seq.into_iter().enumerate() {
                steps[t].push(a);
            }
        }
        let label = parts
            .iter()
            .map(|p| p.label.as_str())
            .collect::<Vec<_>>()
            .join(" | ");
        let mut preconditions = Vec::new();
        let mut postconditions = Vec::new();
        for part in &parts {
            preconditions.extend(part.preconditions.iter().cloned());
            postconditions.extend(part.postconditions.iter().cloned());
        }
        joint.push(Policy {
            id,
            label,
            kind: parts[0].kind,
            steps,
            preconditions,
            postconditions,
            goal: parts[0].goal.clone(),
            components: parts.iter().map(|p| p.id).collect(),
        });
    }
    Ok(joint)
}

/// Flatten a (single-factor) policy to `horizon` actions, inserting `pad`
/// before the final action. Empty sequences become all-pad.
fn stretch_actions<A: Copy>(policy: &Policy<A>, horizon: usize, pad: A) -> Vec<A> {
    let own: Vec<A> = policy.steps.iter().map(|s| s[0]).collect();
    if own.is_empty() {
        return vec![pad; horizon];
    }
    if own.len() >= horizon {
        return own;
    }
    let mut out = Vec::with_capacity(horizon);
    out.extend_from_slice(&own[..own.len() - 1]);
    out.extend(std::iter::repeat(pad).take(horizon - own.len()));
    out.push(own[own.len() - 1]);
    out
}

/// Policy prior concentrated on joint entries whose component for `robot_pos`
/// equals the broadcast policy id; everything else gets the floor.
pub fn conditioned_prior<S: Real, A>(
    joint: &[Policy<A>],
    robot_pos: usize,
    broadcast_id: usize,
) -> Result<PolicyPrior<S>> {
    let weights: Vec<S> = joint
        .iter()
        .map(|p| {
            if p.components.get(robot_pos) == Some(&broadcast_id) {
                S::one()
            } else {
                S::zero()
            }
        })
        .collect();
    PolicyPrior::from_weights(&weights)
}

/// Index-ordered coordination round: robot `k` infers after robots `0..k`
/// and sees their fresh selections. Returns the per-robot selections.
pub fn pairwise_infer_chain<T, F>(robots: usize, mut infer_one: F) -> Result<Vec<T>>
where
    F: FnMut(usize, &[T]) -> Result<T>,
{
    let mut selections = Vec::with_capacity(robots);
    for i in 0..robots {
        let s = infer_one(i, &selections)?;
        selections.push(s);
    }
    Ok(selections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LikelihoodModel, Matrix, ModalityModel, PriorState, TransitionModel};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a}");
    }

    #[test]
    fn outcome_prior_blocks() {
        let prefs = PreferenceMatrix {
            blocks: vec![vec![0.0; 4], vec![2.0, 1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        };
        let priors = outcome_prior(&prefs).unwrap();
        for v in &priors[0] {
            assert_close(*v, 0.25, 1e-12);
        }
        // direct softmax oracle
        assert_close(priors[1][0], 0.6102956854136232, 1e-12);
        assert_close(priors[1][1], 0.22451523569930606, 1e-12);
        assert_close(priors[1][2], 0.08259453944353537, 1e-12);
        // success most preferred when its preference is 1
        assert!(priors[2][1] > priors[2][0] && priors[2][1] > priors[2][2]);
    }

    fn tiny_model(diag: f64) -> GenerativeModel<f64, usize> {
        GenerativeModel {
            factor_dims: vec![4],
            likelihood: LikelihoodModel {
                modalities: vec![ModalityModel {
                    matrix: Matrix::diagonal_with_spread(4, diag),
                    factors: vec![0],
                }],
            },
            transitions: TransitionModel {
                factors: vec![vec![(0usize, Matrix::identity(4))]],
            },
            preferences: PreferenceMatrix {
                blocks: vec![vec![0.0, 1.0, 0.0, 0.0]],
            },
            prior: PriorState {
                factors: vec![vec![0.25; 4]],
            },
        }
    }

    #[test]
    fn vfe_single_term() {
        // one-hot belief on the observed state with diagonal 0.9: F = −ln 0.9
        let model = tiny_model(0.9);
        let b = Belief::one_hot(&[4], &[2]);
        let f = variational_free_energy(&b, &model, &Observation::new(vec![2])).unwrap();
        assert_close(f, 0.10536051565782628, 1e-12);
    }

    #[test]
    fn vfe_perfect_likelihood_zero() {
        let mut model = tiny_model(0.9);
        model.likelihood.modalities[0].matrix = Matrix::identity(4);
        let b = Belief::one_hot(&[4], &[1]);
        let f = variational_free_energy(&b, &model, &Observation::new(vec![1])).unwrap();
        assert_close(f, 0.0, 1e-12);
    }

    #[test]
    fn vfe_uniform_belief_direct_sum() {
        let model = tiny_model(0.9);
        let b = Belief::uniform(&[4]);
        let f = variational_free_energy(&b, &model, &Observation::new(vec![0])).unwrap();
        // direct summation oracle over the column-normalized likelihood
        assert_close(f, -(0.25 * 0.9f64.ln() + 0.75 * (0.1f64 / 3.0).ln()), 1e-12);
        assert_close(f, 2.577238165161073, 1e-12);
    }

    fn idle_policy(id: usize, steps: usize) -> Policy<usize> {
        Policy::new(id, format!("idle{id}"), vec![vec![0usize]; steps])
    }

    #[test]
    fn efe_decomposition_and_stationary_idle() {
        let model = tiny_model(0.9);
        let cfg = InferenceConfig::default();
        // belief already at the preferred outcome's state
        let b = Belief::one_hot(&[4], &[1]);
        let p = idle_policy(0, 1);
        let (g, ext, int) = expected_free_energy(&p, &b, &model, &cfg).unwrap();
        assert_close(g, ext - int, 0.0);
        // extrinsic equals KL(A·b || prior) computed directly
        let priors = outcome_prior(&model.preferences).unwrap();
        let pred = model.likelihood.modalities[0]
            .matrix
            .mul_vec(&b.factors[0])
            .unwrap();
        let want = kl_divergence(&pred, &priors[0]).unwrap();
        assert_close(ext, want, 1e-12);
    }

    #[test]
    fn one_step_mode_truncates() {
        let model = tiny_model(0.9);
        let full = InferenceConfig::default();
        let one = InferenceConfig {
            horizon: HorizonMode::OneStep,
            ..InferenceConfig::default()
        };
        let b = Belief::uniform(&[4]);
        let p = idle_policy(0, 5);
        let (g5, ..) = expected_free_energy(&p, &b, &model, &full).unwrap();
        let (g1, ..) = expected_free_energy(&p, &b, &model, &one).unwrap();
        assert_close(g5, 5.0 * g1, 1e-9);
    }

    #[test]
    fn single_candidate_posterior_is_one() {
        let model = tiny_model(0.9);
        let cfg = InferenceConfig::default();
        let b = Belief::uniform(&[4]);
        let pool = vec![idle_policy(0, 1)];
        let prior = PolicyPrior::uniform(1);
        let (idx, post) =
            interactive_infer(&pool, &b, &model, &Observation::new(vec![0]), &prior, &cfg)
                .unwrap();
        assert_eq!(idx, 0);
        assert_close(post.probs[0].1, 1.0, 1e-12);
    }

    #[test]
    fn symmetric_candidates_tie_to_lowest_id() {
        let model = tiny_model(0.9);
        let cfg = InferenceConfig::default();
        let b = Belief::uniform(&[4]);
        let pool = vec![idle_policy(0, 2), idle_policy(1, 2)];
        let prior = PolicyPrior::uniform(2);
        let (_, post) =
            interactive_infer(&pool, &b, &model, &Observation::new(vec![0]), &prior, &cfg)
                .unwrap();
        assert_eq!(post.selected, 0);
        assert_close(post.probs[0].1, 0.5, 1e-12);
        let sum: f64 = post.probs.iter().map(|(_, p)| p).sum();
        assert_close(sum, 1.0, 1e-12);
    }

    #[test]
    fn gamma_zero_rejected_and_precision_weighting() {
        let cfg = InferenceConfig::<f64> {
            gamma: 0.0,
            ..InferenceConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_pool_is_error() {
        let model = tiny_model(0.9);
        let cfg = InferenceConfig::default();
        let b = Belief::uniform(&[4]);
        let pool: Vec<Policy<usize>> = vec![];
        let prior = PolicyPrior::uniform(1);
        let err = score_policies(&pool, &b, &model, &Observation::new(vec![0]), &prior, &cfg);
        assert!(matches!(err, Err(Error::NoCandidates)));
    }

    #[test]
    fn compose_product_order_and_padding() {
        let mk = |id: usize, n: usize| Policy::new(id, format!("p{id}"), vec![vec![1usize]; n]);
        let a = vec![mk(0, 1), mk(1, 3)];
        let b = vec![mk(0, 3), mk(1, 3)];
        let joint = compose_joint_policies(&[&a, &b], 9usize).unwrap();
        assert_eq!(joint.len(), 4);
        // row-major by the first pool
        assert_eq!(joint[0].components, vec![0, 0]);
        assert_eq!(joint[1].components, vec![0, 1]);
        assert_eq!(joint[2].components, vec![1, 0]);
        // short component stretched: pads inserted before the final action
        let first: Vec<usize> = joint[0].steps.iter().map(|s| s[0]).collect();
        assert_eq!(first, vec![9, 9, 1]);
        let second: Vec<usize> = joint[0].steps.iter().map(|s| s[1]).collect();
        assert_eq!(second, vec![1, 1, 1]);

        let single = compose_joint_policies(&[&a[..1], &b[..1]], 9usize).unwrap();
        assert_eq!(single.len(), 1);
        assert!(compose_joint_policies::<usize>(&[&[]], 9).is_err());
    }

    #[test]
    fn sixteen_joint_policies_from_four_by_four() {
        let mk = |id: usize| Policy::new(id, format!("p{id}"), vec![vec![0usize]]);
        let a: Vec<_> = (0..4).map(mk).collect();
        let b: Vec<_> = (0..4).map(mk).collect();
        let joint = compose_joint_policies(&[&a, &b], 0usize).unwrap();
        assert_eq!(joint.len(), 16);
        assert_eq!(joint[3].components, vec![0, 3]);
        assert_eq!(joint[15].components, vec![3, 3]);
    }

    #[test]
    fn conditioned_prior_concentrates() {
        let mk = |id: usize| Policy::new(id, format!("p{id}"), vec![vec![0usize]]);
        let a: Vec<_> = (0..3).map(mk).collect();
        let b: Vec<_> = (0..3).map(mk).collect();
        let joint = compose_joint_policies(&[&a, &b], 0usize).unwrap();
        let prior: PolicyPrior<f64> = conditioned_prior(&joint, 0, 1).unwrap();
        let consistent: f64 = prior
            .probs()
            .iter()
            .zip(&joint)
            .filter(|(_, p)| p.components[0] == 1)
            .map(|(w, _)| *w)
            .sum();
        assert!(consistent > 0.999_999);
    }

    #[test]
    fn chain_base_case_two_robots() {
        // with two robots the chain is one plain inference followed by a
        // conditioned one; the driver just folds selections in index order
        let out = pairwise_infer_chain(2, |i, prior: &[usize]| {
            assert_eq!(prior.len(), i);
            Ok(i * 10)
        })
        .unwrap();
        assert_eq!(out, vec![0, 10]);
    }

    #[test]
    fn shift_invariance_of_argmax() {
        let cfg = InferenceConfig::<f64>::default();
        let mk = |id: usize, score: f64| PolicyScore {
            policy_id: id,
            f: 0.0,
            g: 0.0,
            extrinsic: 0.0,
            intrinsic: 0.0,
            score,
        };
        let scores: Vec<_> = [(0, 1.0), (1, 3.0), (2, 2.0)]
            .iter()
            .map(|&(i, s)| mk(i, s))
            .collect();
        let shifted: Vec<_> = [(0, 101.0), (1, 103.0), (2, 102.0)]
            .iter()
            .map(|&(i, s)| mk(i, s))
            .collect();
        let a = policy_posterior(&scores, &cfg).unwrap();
        let b = policy_posterior(&shifted, &cfg).unwrap();
        assert_eq!(a.selected, b.selected);
        for ((_, x), (_, y)) in a.probs.iter().zip(&b.probs) {
            assert_close(*x, *y, 1e-9);
        }
    }
}
