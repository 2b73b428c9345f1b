//! Sample collection, LSTDQ evaluation, representational policy iteration and
//! potential-based reward shaping.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::PotentialFunction;
use crate::mdp::{greedy_policy, Policy, PolicyKind, QFunction, TabularMdp};
use crate::scalar::Scalar;
use crate::spectral::{lift_to_state_action, BasisSet, FeatureMap};

/// Condition number above which LSTDQ falls back to the ridge solve.
pub const MAX_CONDITION: f64 = 1e12;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_ITERATIONS: usize = 20;

/// One observed transition `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T: Scalar> {
    pub s: usize,
    pub a: usize,
    pub r: T,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T: Scalar> {
    pub samples: Vec<Sample<T>>,
    pub seed: u64,
    pub behavior: String,
}

impl<T: Scalar> SampleSet<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of distinct `(s, a)` pairs present.
    pub fn coverage(&self, n_states: usize, n_actions: usize) -> usize {
        let mut seen = vec![false; n_states * n_actions];
        for x in &self.samples {
            seen[x.s * n_actions + x.a] = true;
        }
        seen.into_iter().filter(|&v| v).count()
    }
}

/// Solver and loop settings shared by [`lstdq`] and [`rpi`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig<T: Scalar> {
    pub alpha: T,
    /// Basis size per action block.
    pub k: usize,
    /// Policy-iteration cap.
    pub t: usize,
    /// Samples used per LSTDQ pass; `None` means the whole set.
    pub big_t: Option<usize>,
    /// Ridge added when `A` is numerically singular.
    pub ridge: T,
    pub seed: u64,
}

impl<T: Scalar> LearnerConfig<T> {
    pub fn new(alpha: T, k: usize) -> Self {
        Self {
            alpha,
            k,
            t: DEFAULT_ITERATIONS,
            big_t: None,
            ridge: T::lit(DEFAULT_RIDGE),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidArgument(
                "RPI needs at least one iteration".into(),
            ));
        }
        if !(self.ridge >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "ridge {} must be ≥ 0",
                self.ridge
            )));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "discount {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Learned weights over `φ(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Scalar> {
    pub w: DVector<T>,
}

/// Runs `n_episodes` episodes of `horizon` steps under `behavior`. Episodes
/// start uniformly over the non-absorbing states (all states if every state
/// is absorbing).
pub fn collect_samples<T: Scalar>(
    mdp: &TabularMdp<T>,
    behavior: &Policy<T>,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<SampleSet<T>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be ≥ 1".into()));
    }
    if behavior.n_states() != mdp.n_states() || behavior.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidPolicy(
            "behavior policy does not match the MDP".into(),
        ));
    }
    let absorbing = mdp.absorbing_states();
    let mut starts: Vec<usize> = (0..mdp.n_states())
        .filter(|s| absorbing.binary_search(s).is_err())
        .collect();
    if starts.is_empty() {
        starts = (0..mdp.n_states()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_episodes * horizon);
    for _ in 0..n_episodes {
        let mut s = starts[rng.gen_range(0..starts.len())];
        for _ in 0..horizon {
            let a = match behavior.kind() {
                PolicyKind::Deterministic(actions) => actions[s],
                PolicyKind::Randomized(p) => draw(&mut rng, p.row(s).iter().copied().enumerate()),
            };
            let successors = mdp.successors(s, a);
            let s_next = match successors {
                [(only, _)] => *only,
                _ => draw(&mut rng, successors.iter().copied()),
            };
            samples.push(Sample {
                s,
                a,
                r: mdp.reward(s, a),
                s_next,
            });
            s = s_next;
        }
    }
    Ok(SampleSet {
        samples,
        seed,
        behavior: describe(behavior),
    })
}

fn draw<T: Scalar>(rng: &mut ChaCha8Rng, weighted: impl Iterator<Item = (usize, T)>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in weighted {
        let p = p.as_f64();
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn describe<T: Scalar>(policy: &Policy<T>) -> String {
    match policy.kind() {
        PolicyKind::Deterministic(_) => "deterministic".into(),
        PolicyKind::Randomized(p) => {
            let u = T::one() / T::from_usize_lossy(p.ncols());
            if p.iter().all(|&x| x == u) {
                "uniform-random".into()
            } else {
                "randomized".into()
            }
        }
    }
}

/// Adds the potential-based shaping term `α ψ(s') − ψ(s)` to every reward.
pub fn shape_samples<T: Scalar>(
    samples: &SampleSet<T>,
    psi: &PotentialFunction<T>,
    alpha: T,
) -> Result<SampleSet<T>> {
    let n = psi.psi.len();
    if let Some(x) = samples.samples.iter().find(|x| x.s >= n || x.s_next >= n) {
        return Err(Error::InvalidArgument(format!(
            "potential undefined for state {}",
            x.s.max(x.s_next)
        )));
    }
    let shaped = samples
        .samples
        .iter()
        .map(|x| Sample {
            r: x.r + alpha * psi.psi[x.s_next] - psi.psi[x.s],
            ..*x
        })
        .collect();
    Ok(SampleSet {
        samples: shaped,
        seed: samples.seed,
        behavior: samples.behavior.clone(),
    })
}

/// MDP with rewards `r_a(s) + α Σ_{s'} p_a(s, s') ψ(s') − ψ(s)`.
pub fn shape_mdp<T: Scalar>(
    mdp: &TabularMdp<T>,
    psi: &PotentialFunction<T>,
) -> Result<TabularMdp<T>> {
    if psi.psi.len() != mdp.n_states() {
        return Err(Error::InvalidArgument(
            "potential length does not match the MDP".into(),
        ));
    }
    let alpha = mdp.discount();
    let rewards = DMatrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        let expected = mdp
            .successors(s, a)
            .iter()
            .fold(T::zero(), |acc, &(next, p)| acc + p * psi.psi[next]);
        mdp.reward(s, a) + alpha * expected - psi.psi[s]
    });
    mdp.with_rewards(rewards)
}

/// Replaces each sample's reward with `state_rewards[s]`, the reward of the
/// state being left rather than the one entered.
pub fn reindex_rewards_by_departure<T: Scalar>(
    samples: &SampleSet<T>,
    state_rewards: &[T],
) -> SampleSet<T> {
    SampleSet {
        samples: samples
            .samples
            .iter()
            .map(|x| Sample {
                r: state_rewards[x.s],
                ..*x
            })
            .collect(),
        seed: samples.seed,
        behavior: samples.behavior.clone(),
    }
}

/// Running `A` and `b` sums of LSTDQ.
#[derive(Debug, Clone, PartialEq)]
pub struct LstdqAccumulator<T: Scalar> {
    pub a_matrix: DMatrix<T>,
    pub b_vector: DVector<T>,
}

impl<T: Scalar> LstdqAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            a_matrix: DMatrix::zeros(dim, dim),
            b_vector: DVector::zeros(dim),
        }
    }

    /// `A += φ(s,a)(φ(s,a) − α φ̄(s'))ᵀ`, `b += φ(s,a) r`, where `φ̄(s')` is
    /// the policy-weighted successor feature (a single block for
    /// deterministic policies).
    pub fn add(&mut self, x: &Sample<T>, features: &FeatureMap<T>, policy: &Policy<T>, alpha: T) {
        let k = features.k();
        let row0 = x.a * k;
        let here = features.state_features(x.s);
        let next = features.state_features(x.s_next);
        for (i, &fi) in here.iter().enumerate() {
            if fi == T::zero() {
                continue;
            }
            let row = row0 + i;
            for (j, &fj) in here.iter().enumerate() {
                self.a_matrix[(row, row0 + j)] += fi * fj;
            }
            for b in 0..features.n_actions() {
                let p = policy.prob(x.s_next, b);
                if p == T::zero() {
                    continue;
                }
                let scale = alpha * p * fi;
                for (j, &fj) in next.iter().enumerate() {
                    self.a_matrix[(row, b * k + j)] -= scale * fj;
                }
            }
            self.b_vector[row] += fi * x.r;
        }
    }

    /// Solves `A w = b`, retrying with `(A + δI) w = b` when `A` is singular
    /// or its condition estimate exceeds `1e12`.
    pub fn solve(&self, ridge: T) -> Result<WeightVector<T>> {
        let condition = condition_number(&self.a_matrix);
        if condition <= MAX_CONDITION {
            if let Some(w) = self.a_matrix.clone().lu().solve(&self.b_vector) {
                if w.iter().all(|v| v.is_finite()) {
                    return Ok(WeightVector { w });
                }
            }
        }
        let dim = self.a_matrix.nrows();
        if ridge > T::zero() {
            let ridged = &self.a_matrix + DMatrix::identity(dim, dim) * ridge;
            if let Some(w) = ridged.lu().solve(&self.b_vector) {
                if w.iter().all(|v| v.is_finite()) {
                    return Ok(WeightVector { w });
                }
            }
        }
        Err(Error::Singular {
            condition,
            ridge: ridge.as_f64(),
        })
    }
}

/// Ratio of extreme singular values, infinite when the smallest is zero.
pub fn condition_number<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |acc, v| acc.max(v.as_f64()));
    let min = sv.iter().fold(f64::INFINITY, |acc, v| acc.min(v.as_f64()));
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Least-squares fixed point of the projected Bellman equation for `policy`
/// over one pass of the samples (the first `config.big_t` of them, if set).
pub fn lstdq<T: Scalar>(
    samples: &SampleSet<T>,
    features: &FeatureMap<T>,
    policy: &Policy<T>,
    config: &LearnerConfig<T>,
) -> Result<WeightVector<T>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "LSTDQ needs at least one sample".into(),
        ));
    }
    check_samples(samples, features)?;
    if policy.n_actions() != features.n_actions() || policy.n_states() != features.n_states() {
        return Err(Error::InvalidPolicy(
            "policy does not match the feature map".into(),
        ));
    }
    let used = config.big_t.unwrap_or(samples.len()).min(samples.len());
    let mut acc = LstdqAccumulator::new(features.dim());
    for x in &samples.samples[..used] {
        acc.add(x, features, policy, config.alpha);
    }
    acc.solve(config.ridge)
}

fn check_samples<T: Scalar>(samples: &SampleSet<T>, features: &FeatureMap<T>) -> Result<()> {
    let n = features.n_states();
    match samples
        .samples
        .iter()
        .find(|x| x.s >= n || x.s_next >= n || x.a >= features.n_actions() || !x.r.is_finite())
    {
        Some(x) => Err(Error::InvalidArgument(format!("sample {x:?} out of range"))),
        None => Ok(()),
    }
}

/// `Q̂(s, a) = φ(s, a)ᵀ w` for every pair.
pub fn q_from_weights<T: Scalar>(
    features: &FeatureMap<T>,
    weights: &WeightVector<T>,
) -> QFunction<T> {
    QFunction::new(DMatrix::from_fn(
        features.n_states(),
        features.n_actions(),
        |s, a| features.value(s, a, &weights.w),
    ))
}

/// Result of [`rpi`].
#[derive(Debug, Clone, PartialEq)]
pub struct RpiOutcome<T: Scalar> {
    pub policy: Policy<T>,
    pub weights: WeightVector<T>,
    /// Number of states whose action changed at each improvement step.
    pub trace: Vec<usize>,
    /// True when the last improvement left the policy unchanged.
    pub converged: bool,
}

impl<T: Scalar> RpiOutcome<T> {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Representational policy iteration over the eigenvector basis.
pub fn rpi<T: Scalar>(
    samples: &SampleSet<T>,
    basis: &BasisSet<T>,
    pi0: &Policy<T>,
    config: &LearnerConfig<T>,
) -> Result<RpiOutcome<T>> {
    if basis.k() != config.k {
        return Err(Error::InvalidArgument(format!(
            "basis has {} functions, config expects {}",
            basis.k(),
            config.k
        )));
    }
    let features = lift_to_state_action(basis, pi0.n_actions())?;
    rpi_with_features(samples, &features, pi0, config)
}

/// Policy iteration with LSTDQ evaluation over arbitrary features. A
/// randomized `pi0` is replaced by its mode action in every state.
pub fn rpi_with_features<T: Scalar>(
    samples: &SampleSet<T>,
    features: &FeatureMap<T>,
    pi0: &Policy<T>,
    config: &LearnerConfig<T>,
) -> Result<RpiOutcome<T>> {
    config.validate()?;
    let mut policy = pi0.to_deterministic();
    let mut trace = Vec::with_capacity(config.t);
    let mut weights = None;
    for _ in 0..config.t {
        let w = lstdq(samples, features, &policy, config)?;
        let improved = greedy_policy(&q_from_weights(features, &w));
        let changes = improved.count_differences(&policy);
        trace.push(changes);
        policy = improved;
        weights = Some(w);
        if changes == 0 {
            break;
        }
    }
    let converged = trace.last() == Some(&0);
    Ok(RpiOutcome {
        policy,
        weights: weights.expect("at least one iteration"),
        trace,
        converged,
    })
}
