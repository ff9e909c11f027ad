//! Categorical probability primitives and the generative-model containers the
//! inference engine operates on.
//!
//! All operations have value semantics: nothing mutates its inputs, which is
//! what makes the preference boost/rollback contract of the IIBT node exact.

use crate::error::{Error, Result};
use crate::num::{real, Real};

/// Floor applied to every logarithm argument so free energies stay finite
/// when likelihoods contain exact zeros.
pub const LOG_FLOOR: f64 = 1e-12;

/// Tolerance for distribution normalization checks.
pub const NORM_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Dense matrix, row-major. Columns are conditional distributions.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Matrix<S> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { S::one() } else { S::zero() })
    }

    /// Square matrix with `diag` on the diagonal and the residual mass spread
    /// uniformly over the remaining entries of each column.
    pub fn diagonal_with_spread(n: usize, diag: S) -> Self {
        let spread = (S::one() - diag) / real::<S>((n - 1) as f64);
        Self::from_fn(n, n, |r, c| if r == c { diag } else { spread })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<S> {
        (0..self.rows).map(|r| self.at(r, c)).collect()
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `M · v` where `v` is indexed by columns.
    pub fn mul_vec(&self, v: &[S]) -> Result<Vec<S>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![S::zero(); self.rows];
        for r in 0..self.rows {
            let mut acc = S::zero();
            let row = self.row(r);
            for (a, b) in row.iter().zip(v) {
                acc = acc + *a * *b;
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// Every column sums to one within `tol` and has no negative entries.
    pub fn is_column_stochastic(&self, tol: S) -> bool {
        (0..self.cols).all(|c| {
            let mut sum = S::zero();
            for r in 0..self.rows {
                let v = self.at(r, c);
                if v < S::zero() {
                    return false;
                }
                sum = sum + v;
            }
            (sum - S::one()).abs() <= tol
        })
    }
}

// ---------------------------------------------------------------------------
// Vector operations
// ---------------------------------------------------------------------------

/// Rescale a nonnegative vector into a probability vector.
pub fn normalize<S: Real>(v: &[S]) -> Result<Vec<S>> {
    if v.iter().any(|x| *x < S::zero()) {
        return Err(Error::DegenerateDistribution(
            "negative entry in nonnegative vector".into(),
        ));
    }
    let sum: S = v.iter().copied().sum();
    if !(sum > S::zero()) {
        return Err(Error::DegenerateDistribution("all-zero vector".into()));
    }
    Ok(v.iter().map(|x| *x / sum).collect())
}

/// Numerically stable softmax (max subtraction).
pub fn softmax<S: Real>(scores: &[S]) -> Result<Vec<S>> {
    if scores.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidScore("NaN in score vector".into()));
    }
    let max = scores
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<S> = scores.iter().map(|s| (*s - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    Ok(exps.iter().map(|e| *e / sum).collect())
}

/// KL divergence `Σ p ln(p/q)` with the denominator floored at [`LOG_FLOOR`].
pub fn kl_divergence<S: Real>(p: &[S], q: &[S]) -> Result<S> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "kl over vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let floor = real::<S>(LOG_FLOOR);
    let mut acc = S::zero();
    for (pi, qi) in p.iter().zip(q) {
        if *pi > S::zero() {
            let q = if *qi > floor { *qi } else { floor };
            acc = acc + *pi * (*pi / q).ln();
        }
    }
    Ok(acc)
}

/// Shannon entropy in nats; `0 ln 0` terms contribute zero.
pub fn entropy<S: Real>(p: &[S]) -> S {
    let mut acc = S::zero();
    for pi in p {
        if *pi > S::zero() {
            acc = acc - *pi * pi.ln();
        }
    }
    acc
}

fn is_distribution<S: Real>(v: &[S]) -> bool {
    let sum: S = v.iter().copied().sum();
    v.iter().all(|x| *x >= S::zero()) && (sum - S::one()).abs() <= real::<S>(NORM_TOL)
}

// ---------------------------------------------------------------------------
// Beliefs and observations
// ---------------------------------------------------------------------------

/// Per-factor categorical distributions over the latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<S> {
    pub factors: Vec<Vec<S>>,
}

impl<S: Real> Belief<S> {
    pub fn new(factors: Vec<Vec<S>>) -> Result<Self> {
        for (i, f) in factors.iter().enumerate() {
            if !is_distribution(f) {
                return Err(Error::DegenerateDistribution(format!(
                    "belief factor {i} is not a distribution"
                )));
            }
        }
        Ok(Belief { factors })
    }

    /// One-hot factor beliefs at the given state indices.
    pub fn one_hot(dims: &[usize], states: &[usize]) -> Self {
        let factors = dims
            .iter()
            .zip(states)
            .map(|(&d, &s)| {
                let mut v = vec![S::zero(); d];
                v[s] = S::one();
                v
            })
            .collect();
        Belief { factors }
    }

    pub fn uniform(dims: &[usize]) -> Self {
        let factors = dims
            .iter()
            .map(|&d| vec![S::one() / real::<S>(d as f64); d])
            .collect();
        Belief { factors }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.len()).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.factors.iter().all(|f| is_distribution(f))
    }

    /// Row-major product distribution over the listed factors.
    pub fn factor_product(&self, factors: &[usize]) -> Vec<S> {
        let mut out = vec![S::one()];
        for &f in factors {
            let fac = &self.factors[f];
            let mut next = Vec::with_capacity(out.len() * fac.len());
            for o in &out {
                for v in fac {
                    next.push(*o * *v);
                }
            }
            out = next;
        }
        out
    }
}

/// One observed outcome index per modality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub outcomes: Vec<usize>,
}

impl Observation {
    pub fn new(outcomes: Vec<usize>) -> Self {
        Observation { outcomes }
    }
}

// ---------------------------------------------------------------------------
// Generative model containers
// ---------------------------------------------------------------------------

/// One observation modality: a likelihood matrix whose columns are indexed by
/// the row-major product of the bound latent factors.
#[derive(Debug, Clone)]
pub struct ModalityModel<S> {
    pub matrix: Matrix<S>,
    /// Latent factors this modality observes. Single-factor for position and
    /// phase modalities; the result modality binds all of them.
    pub factors: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LikelihoodModel<S> {
    pub modalities: Vec<ModalityModel<S>>,
}

impl<S: Real> LikelihoodModel<S> {
    pub fn validate(&self, factor_dims: &[usize]) -> Result<()> {
        for (m, modality) in self.modalities.iter().enumerate() {
            let want: usize = modality.factors.iter().map(|&f| factor_dims[f]).product();
            if modality.matrix.cols() != want {
                return Err(Error::DimensionMismatch(format!(
                    "modality {m}: matrix has {} columns, bound factors give {want}",
                    modality.matrix.cols()
                )));
            }
            if !modality.matrix.is_column_stochastic(real(NORM_TOL)) {
                return Err(Error::DegenerateDistribution(format!(
                    "modality {m}: likelihood columns are not distributions"
                )));
            }
        }
        Ok(())
    }

    pub fn outcome_dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.matrix.rows()).collect()
    }
}

/// Per-action transition matrices for every latent factor. Actions are looked
/// up linearly; pools are small.
#[derive(Debug, Clone)]
pub struct TransitionModel<S, A> {
    /// `factors[f]` lists `(action, matrix)` pairs for factor `f`.
    pub factors: Vec<Vec<(A, Matrix<S>)>>,
}

impl<S: Real, A: Copy + PartialEq + std::fmt::Debug> TransitionModel<S, A> {
    pub fn matrix(&self, factor: usize, action: A) -> Result<&Matrix<S>> {
        self.factors[factor]
            .iter()
            .find(|(a, _)| *a == action)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::MissingAction(format!("{action:?} on factor {factor}")))
    }

    pub fn validate(&self, factor_dims: &[usize]) -> Result<()> {
        for (f, actions) in self.factors.iter().enumerate() {
            for (a, m) in actions {
                if m.rows() != factor_dims[f] || m.cols() != factor_dims[f] {
                    return Err(Error::DimensionMismatch(format!(
                        "transition {a:?} on factor {f} is {}x{}, factor dim {}",
                        m.rows(),
                        m.cols(),
                        factor_dims[f]
                    )));
                }
                if !m.is_column_stochastic(real(NORM_TOL)) {
                    return Err(Error::DegenerateDistribution(format!(
                        "transition {a:?} on factor {f} not column-stochastic"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Unnormalized log-preferences over outcomes, one block per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix<S> {
    pub blocks: Vec<Vec<S>>,
}

impl<S: Real> PreferenceMatrix<S> {
    pub fn zeros(dims: &[usize]) -> Self {
        PreferenceMatrix {
            blocks: dims.iter().map(|&d| vec![S::zero(); d]).collect(),
        }
    }

    pub fn validate(&self, outcome_dims: &[usize]) -> Result<()> {
        if self.blocks.len() != outcome_dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} preference blocks for {} modalities",
                self.blocks.len(),
                outcome_dims.len()
            )));
        }
        for (m, block) in self.blocks.iter().enumerate() {
            if block.len() != outcome_dims[m] {
                return Err(Error::DimensionMismatch(format!(
                    "preference block {m} has {} entries, modality has {}",
                    block.len(),
                    outcome_dims[m]
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidScore(format!(
                    "non-finite preference in block {m}"
                )));
            }
        }
        Ok(())
    }

    /// Largest preference within one modality block.
    pub fn block_max(&self, modality: usize) -> S {
        self.blocks[modality]
            .iter()
            .copied()
            .fold(S::neg_infinity(), |a, b| if b > a { b } else { a })
    }
}

/// Additive delta on a preference matrix, tagged with the predicate that
/// produced it. Adding then removing restores the original bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalEvidence<S> {
    pub deltas: Vec<Vec<S>>,
    pub provenance: String,
}

impl<S: Real> LogicalEvidence<S> {
    pub fn zeros(dims: &[usize], provenance: impl Into<String>) -> Self {
        LogicalEvidence {
            deltas: dims.iter().map(|&d| vec![S::zero(); d]).collect(),
            provenance: provenance.into(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.deltas.iter().all(|d| d.iter().all(|v| *v == S::zero()))
    }
}

/// Initial per-factor state prior.
#[derive(Debug, Clone)]
pub struct PriorState<S> {
    pub factors: Vec<Vec<S>>,
}

impl<S: Real> PriorState<S> {
    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.factors.iter().enumerate() {
            if !is_distribution(f) {
                return Err(Error::DegenerateDistribution(format!(
                    "prior factor {i} is not a distribution"
                )));
            }
        }
        Ok(())
    }

    pub fn belief(&self) -> Belief<S> {
        Belief {
            factors: self.factors.clone(),
        }
    }
}

/// Prior over the current candidate pool, floored so `ln E` stays finite.
#[derive(Debug, Clone)]
pub struct PolicyPrior<S> {
    probs: Vec<S>,
}

impl<S: Real> PolicyPrior<S> {
    pub const FLOOR: f64 = 1e-9;

    pub fn uniform(n: usize) -> Self {
        PolicyPrior {
            probs: vec![S::one() / real::<S>(n as f64); n],
        }
    }

    /// Build from nonnegative weights, flooring and renormalizing.
    pub fn from_weights(weights: &[S]) -> Result<Self> {
        let floor = real::<S>(Self::FLOOR);
        let floored: Vec<S> = weights
            .iter()
            .map(|w| if *w > floor { *w } else { floor })
            .collect();
        Ok(PolicyPrior {
            probs: normalize(&floored)?,
        })
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// The complete generative model of one inference problem.
#[derive(Debug, Clone)]
pub struct GenerativeModel<S, A> {
    pub factor_dims: Vec<usize>,
    pub likelihood: LikelihoodModel<S>,
    pub transitions: TransitionModel<S, A>,
    pub preferences: PreferenceMatrix<S>,
    pub prior: PriorState<S>,
}

impl<S: Real, A: Copy + PartialEq + std::fmt::Debug> GenerativeModel<S, A> {
    pub fn validate(&self) -> Result<()> {
        self.likelihood.validate(&self.factor_dims)?;
        self.transitions.validate(&self.factor_dims)?;
        self.preferences.validate(&self.likelihood.outcome_dims())?;
        self.prior.validate()
    }
}

// ---------------------------------------------------------------------------
// Model operations
// ---------------------------------------------------------------------------

/// One-step rollout: advance every factor by its transition matrix for the
/// per-factor action tuple. Output renormalized only to absorb rounding.
pub fn apply_transition<S: Real, A: Copy + PartialEq + std::fmt::Debug>(
    transitions: &TransitionModel<S, A>,
    step: &[A],
    belief: &Belief<S>,
) -> Result<Belief<S>> {
    if step.len() != belief.factors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} actions for {} belief factors",
            step.len(),
            belief.factors.len()
        )));
    }
    let mut factors = Vec::with_capacity(belief.factors.len());
    for (f, action) in step.iter().enumerate() {
        let m = transitions.matrix(f, *action)?;
        let next = m.mul_vec(&belief.factors[f])?;
        factors.push(normalize(&next)?);
    }
    Ok(Belief { factors })
}

/// Predicted outcome distribution per modality: `A_m ·` (product of the bound
/// factor marginals).
pub fn apply_likelihood<S: Real>(
    likelihood: &LikelihoodModel<S>,
    belief: &Belief<S>,
) -> Result<Vec<Vec<S>>> {
    likelihood
        .modalities
        .iter()
        .map(|m| {
            let state = belief.factor_product(&m.factors);
            m.matrix.mul_vec(&state)
        })
        .collect()
}

/// Posterior belief after observing one outcome per modality.
///
/// Mean-field update: each factor's likelihood multiplies in every modality
/// that binds it, with the other bound factors marginalized under the current
/// belief.
pub fn bayesian_update<S: Real>(
    belief: &Belief<S>,
    likelihood: &LikelihoodModel<S>,
    obs: &Observation,
) -> Result<Belief<S>> {
    if obs.outcomes.len() != likelihood.modalities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed outcomes for {} modalities",
            obs.outcomes.len(),
            likelihood.modalities.len()
        )));
    }
    for (m, modality) in likelihood.modalities.iter().enumerate() {
        if obs.outcomes[m] >= modality.matrix.rows() {
            return Err(Error::DimensionMismatch(format!(
                "outcome {} out of range for modality {m}",
                obs.outcomes[m]
            )));
        }
    }

    let mut factors = Vec::with_capacity(belief.factors.len());
    for f in 0..belief.factors.len() {
        let dim = belief.factors[f].len();
        let mut lik = vec![S::one(); dim];
        for (m, modality) in likelihood.modalities.iter().enumerate() {
            let Some(pos) = modality.factors.iter().position(|&b| b == f) else {
                continue;
            };
            let row = modality.matrix.row(obs.outcomes[m]);
            // Marginalize the other bound factors under the current belief.
            let dims: Vec<usize> = modality
                .factors
                .iter()
                .map(|&b| belief.factors[b].len())
                .collect();
            let mut marginal = vec![S::zero(); dim];
            for (col, &val) in row.iter().enumerate() {
                let mut rest = col;
                let mut weight = S::one();
                let mut own_idx = 0;
                for (j, &d) in dims.iter().enumerate().rev() {
                    let idx = rest % d;
                    rest /= d;
                    if j == pos {
                        own_idx = idx;
                    } else {
                        weight = weight * belief.factors[modality.factors[j]][idx];
                    }
                }
                marginal[own_idx] = marginal[own_idx] + val * weight;
            }
            for (l, m) in lik.iter_mut().zip(&marginal) {
                *l = *l * *m;
            }
        }
        let joint: Vec<S> = belief.factors[f]
            .iter()
            .zip(&lik)
            .map(|(p, l)| *p * *l)
            .collect();
        let sum: S = joint.iter().copied().sum();
        if !(sum > S::zero()) {
            return Err(Error::Contradiction(format!(
                "observation has zero posterior mass on factor {f}"
            )));
        }
        factors.push(normalize(&joint)?);
    }
    Ok(Belief { factors })
}

/// `C + L`, returning a new preference matrix.
pub fn add_evidence<S: Real>(
    prefs: &PreferenceMatrix<S>,
    evidence: &LogicalEvidence<S>,
) -> Result<PreferenceMatrix<S>> {
    combine(prefs, evidence, |c, l| c + l)
}

/// Exact inverse of [`add_evidence`]; add then remove is bit-identical.
pub fn remove_evidence<S: Real>(
    prefs: &PreferenceMatrix<S>,
    evidence: &LogicalEvidence<S>,
) -> Result<PreferenceMatrix<S>> {
    combine(prefs, evidence, |c, l| c - l)
}

fn combine<S: Real>(
    prefs: &PreferenceMatrix<S>,
    evidence: &LogicalEvidence<S>,
    op: impl Fn(S, S) -> S,
) -> Result<PreferenceMatrix<S>> {
    if prefs.blocks.len() != evidence.deltas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} preference blocks, {} evidence blocks",
            prefs.blocks.len(),
            evidence.deltas.len()
        )));
    }
    let mut blocks = Vec::with_capacity(prefs.blocks.len());
    for (m, (c, l)) in prefs.blocks.iter().zip(&evidence.deltas).enumerate() {
        if c.len() != l.len() {
            return Err(Error::DimensionMismatch(format!(
                "evidence block {m} has {} entries, preference block has {}",
                l.len(),
                c.len()
            )));
        }
        blocks.push(c.iter().zip(l).map(|(c, l)| op(*c, *l)).collect());
    }
    Ok(PreferenceMatrix { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a}");
    }

    #[test]
    fn normalize_symmetry_and_identity() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_grid_likelihood_column() {
        // Column of the own-position likelihood: diagonal 0.9952, residual
        // spread over the other 48 cells.
        let mut col = vec![0.0048 / 48.0; 49];
        col[7] = 0.9952;
        let n = normalize(&col).unwrap();
        assert_close(n[7], 0.9952, 1e-12);
        assert_close(n.iter().sum::<f64>(), 1.0, 1e-12);
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert!(normalize(&[0.0, 0.0]).is_err());
        assert!(normalize(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn softmax_uniform_and_shift_invariance() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &u {
            assert_close(*v, 1.0 / 3.0, 1e-12);
        }
        let a = softmax(&[1.0, 2.5, -0.3]).unwrap();
        let b = softmax(&[1.0 + 17.0, 2.5 + 17.0, -0.3 + 17.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_close(*x, *y, 1e-12);
        }
    }

    #[test]
    fn softmax_large_scores_no_overflow() {
        // Oracle: with max subtraction the exact values are
        // 1/(1+e^10) and e^10/(1+e^10).
        let p = softmax(&[700.0, 710.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        let e10 = 10f64.exp();
        assert_close(p[0], 1.0 / (1.0 + e10), 1e-15);
        assert_close(p[1], e10 / (1.0 + e10), 1e-15);
        assert_close(p[0], 4.5397868702434395e-5, 1e-12);
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn kl_identity_and_analytic() {
        let p = vec![0.3, 0.7];
        assert_close(kl_divergence(&p, &p).unwrap(), 0.0, 1e-15);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_close(v, std::f64::consts::LN_2, 1e-12);
        assert!(kl_divergence(&[1.0, 0.0], &[0.5, 0.25, 0.25]).is_err());
    }

    #[test]
    fn entropy_one_hot_and_uniform() {
        assert_close(entropy(&[0.0, 1.0, 0.0]), 0.0, 1e-15);
        assert_close(entropy(&[0.25; 4]), 4f64.ln(), 1e-12);
    }

    #[test]
    fn entropy_manip_column() {
        // Column of the pick/place likelihood: diagonal 0.9, residual spread
        // 0.1/3. Expected value computed by direct summation.
        let m = Matrix::<f64>::diagonal_with_spread(4, 0.9);
        let col = m.column(0);
        let direct: f64 = -col
            .iter()
            .filter(|v| **v > 0.0)
            .map(|v| v * v.ln())
            .sum::<f64>();
        assert_close(entropy(&col), direct, 1e-15);
        assert_close(direct, 0.43494370919976, 1e-10);
    }

    #[test]
    fn transition_identity_and_one_hot_move() {
        let dims = [3];
        let idle = Matrix::<f64>::identity(3);
        let mut shift = Matrix::from_fn(3, 3, |_, _| 0.0);
        // deterministic cyclic move
        shift.set(1, 0, 1.0);
        shift.set(2, 1, 1.0);
        shift.set(0, 2, 1.0);
        let t = TransitionModel {
            factors: vec![vec![(0usize, idle), (1usize, shift)]],
        };
        let b = Belief::<f64>::one_hot(&dims, &[0]);
        let same = apply_transition(&t, &[0], &b).unwrap();
        assert_eq!(same.factors[0], vec![1.0, 0.0, 0.0]);
        let moved = apply_transition(&t, &[1], &b).unwrap();
        assert_eq!(moved.factors[0], vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            apply_transition(&t, &[9], &b),
            Err(Error::MissingAction(_))
        ));
    }

    #[test]
    fn transition_matches_hand_product() {
        // Mixed belief through a stochastic matrix, against an exact-rational
        // hand computation: columns [1/2,1/2,0], [0,1/4,3/4], [1/3,1/3,1/3];
        // belief [1/2, 1/3, 1/6] -> [1/4+1/18, 1/4+1/12+1/18, 1/4+1/18].
        let m = Matrix::from_fn(3, 3, |r, c| {
            [[0.5, 0.0, 1.0 / 3.0], [0.5, 0.25, 1.0 / 3.0], [0.0, 0.75, 1.0 / 3.0]][r][c]
        });
        let t = TransitionModel {
            factors: vec![vec![(0usize, m)]],
        };
        let b = Belief::new(vec![vec![0.5, 1.0 / 3.0, 1.0 / 6.0]]).unwrap();
        let out = apply_transition(&t, &[0], &b).unwrap();
        assert_close(out.factors[0][0], 1.0 / 4.0 + 1.0 / 18.0, 1e-12);
        assert_close(out.factors[0][1], 1.0 / 4.0 + 1.0 / 12.0 + 1.0 / 18.0, 1e-12);
        assert_close(out.factors[0][2], 1.0 / 4.0 + 1.0 / 18.0, 1e-12);
    }

    fn single_modality(matrix: Matrix<f64>) -> LikelihoodModel<f64> {
        LikelihoodModel {
            modalities: vec![ModalityModel {
                matrix,
                factors: vec![0],
            }],
        }
    }

    #[test]
    fn likelihood_identity_and_one_hot() {
        let lik = single_modality(Matrix::identity(4));
        let b = Belief::new(vec![vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let out = apply_likelihood(&lik, &b).unwrap();
        assert_eq!(out[0], b.factors[0]);

        let manip = single_modality(Matrix::diagonal_with_spread(4, 0.9));
        let one = Belief::<f64>::one_hot(&[4], &[0]);
        let out = apply_likelihood(&manip, &one).unwrap();
        assert_close(out[0][0], 0.9, 1e-12);
        for v in &out[0][1..] {
            assert_close(*v, 0.1 / 3.0, 1e-12);
        }
    }

    #[test]
    fn likelihood_uniform_belief_column_average() {
        let m = Matrix::from_fn(2, 3, |r, c| [[0.9, 0.5, 0.2], [0.1, 0.5, 0.8]][r][c]);
        let lik = single_modality(m);
        let b = Belief::<f64>::uniform(&[3]);
        let out = apply_likelihood(&lik, &b).unwrap();
        assert_close(out[0][0], (0.9 + 0.5 + 0.2) / 3.0, 1e-12);
        assert_close(out[0][1], (0.1 + 0.5 + 0.8) / 3.0, 1e-12);
    }

    #[test]
    fn bayes_one_hot_likelihood() {
        let lik = single_modality(Matrix::identity(3));
        let prior = Belief::<f64>::uniform(&[3]);
        let post = bayesian_update(&prior, &lik, &Observation::new(vec![2])).unwrap();
        assert_eq!(post.factors[0], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn bayes_uniform_prior_manip_likelihood() {
        // Hand Bayes oracle: uniform prior, observe the "free" outcome under
        // the 0.9-diagonal likelihood: posterior(free) = 0.9/(0.9 + 3*(0.1/3)).
        let lik = single_modality(Matrix::diagonal_with_spread(4, 0.9));
        let prior = Belief::<f64>::uniform(&[4]);
        let post = bayesian_update(&prior, &lik, &Observation::new(vec![3])).unwrap();
        assert_close(post.factors[0][3], 0.9 / (0.9 + 0.1), 1e-12);
    }

    #[test]
    fn bayes_uninformative_row_keeps_prior() {
        let m = Matrix::from_fn(2, 3, |r, c| [[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]][r][c]);
        let lik = single_modality(m);
        let prior = Belief::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let post = bayesian_update(&prior, &lik, &Observation::new(vec![0])).unwrap();
        for (a, b) in post.factors[0].iter().zip(&prior.factors[0]) {
            assert_close(*a, *b, 1e-12);
        }
    }

    #[test]
    fn bayes_zero_mass_is_contradiction() {
        let lik = single_modality(Matrix::identity(2));
        let prior = Belief::new(vec![vec![1.0, 0.0]]).unwrap();
        let err = bayesian_update(&prior, &lik, &Observation::new(vec![1]));
        assert!(matches!(err, Err(Error::Contradiction(_))));
    }

    #[test]
    fn evidence_add_remove_paper_rows() {
        let c = PreferenceMatrix {
            blocks: vec![vec![0.0, 1.0, 0.0, 0.0]],
        };
        let l = LogicalEvidence {
            deltas: vec![vec![2.0, 0.0, 0.0, 0.0]],
            provenance: "IsReached".into(),
        };
        let boosted = add_evidence(&c, &l).unwrap();
        assert_eq!(boosted.blocks[0], vec![2.0, 1.0, 0.0, 0.0]);
        let restored = remove_evidence(&boosted, &l).unwrap();
        assert_eq!(restored, c);

        let zero = LogicalEvidence::zeros(&[4], "none");
        assert_eq!(add_evidence(&c, &zero).unwrap(), c);
    }

    #[test]
    fn evidence_obstacle_negative() {
        let mut blocks = vec![vec![0.0; 49]];
        blocks[0][24] = 1.0;
        let c = PreferenceMatrix { blocks };
        let mut l = LogicalEvidence::zeros(&[49], "Exist(obstacle)");
        l.deltas[0][30] = -1.0;
        let boosted = add_evidence(&c, &l).unwrap();
        assert_eq!(boosted.blocks[0][30], -1.0);
    }

    #[test]
    fn policy_prior_floor() {
        let prior = PolicyPrior::<f64>::from_weights(&[1.0, 0.0, 1.0]).unwrap();
        assert!(prior.probs()[1] > 0.0);
        assert_close(prior.probs().iter().sum::<f64>(), 1.0, 1e-12);
    }

    #[test]
    fn generic_core_runs_in_f32() {
        let p = softmax(&[0.0f32, 1.0, 2.0]).unwrap();
        assert!((p.iter().copied().sum::<f32>() - 1.0).abs() < 1e-6);
        let k = kl_divergence(&[1.0f32, 0.0], &[0.5, 0.5]).unwrap();
        assert!((k - std::f32::consts::LN_2).abs() < 1e-6);
        let b = Belief::<f32>::uniform(&[4]);
        assert!(b.is_valid());
    }
}
