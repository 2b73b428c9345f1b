//! Exact tabular MDP machinery: the reference solutions that learned
//! policies are scored against.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{max_abs, Scalar};

/// Default tolerance for [`value_iteration`].
pub const VI_TOLERANCE: f64 = 1e-10;
/// Default iteration cap for [`value_iteration`].
pub const VI_MAX_ITER: usize = 100_000;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Sparse successor list of one (state, action) pair.
pub type Successors<T> = Vec<(usize, T)>;

/// Finite MDP with a discounted criterion.
///
/// Transitions are kept as sparse successor lists indexed `[action][state]`;
/// gridworlds have one successor per pair, so dense storage would waste
/// several hundred megabytes on the larger domains.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T: Scalar> {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<Successors<T>>>,
    rewards: DMatrix<T>,
    discount: T,
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds an MDP from sparse successor lists, `transitions[a][s]`, and
    /// an `n_states × n_actions` expected-reward table.
    pub fn new(
        transitions: Vec<Vec<Successors<T>>>,
        rewards: DMatrix<T>,
        discount: T,
    ) -> Result<Self> {
        let n_actions = transitions.len();
        if n_actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        let n_states = transitions[0].len();
        if n_states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        if !(discount > T::zero() && discount < T::one()) {
            return Err(Error::InvalidMdp(format!(
                "discount {discount} outside (0, 1)"
            )));
        }
        if rewards.shape() != (n_states, n_actions) {
            return Err(Error::InvalidMdp(format!(
                "reward table is {:?}, expected ({n_states}, {n_actions})",
                rewards.shape()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("reward {r}")));
        }
        let tol = T::lit(STOCHASTIC_TOL);
        for (a, rows) in transitions.iter().enumerate() {
            if rows.len() != n_states {
                return Err(Error::InvalidMdp(format!(
                    "action {a} has {} rows, expected {n_states}",
                    rows.len()
                )));
            }
            for (s, row) in rows.iter().enumerate() {
                let mut total = T::zero();
                for &(next, p) in row {
                    if next >= n_states {
                        return Err(Error::InvalidMdp(format!(
                            "successor {next} of ({s}, {a}) out of range"
                        )));
                    }
                    if !(p >= T::zero()) {
                        return Err(Error::InvalidMdp(format!(
                            "negative probability {p} at ({s}, {a}, {next})"
                        )));
                    }
                    total += p;
                }
                if (total - T::one()).abs() > tol {
                    return Err(Error::InvalidMdp(format!("row ({s}, {a}) sums to {total}")));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            discount,
        })
    }

    /// Builds an MDP from one dense `n × n` transition matrix per action.
    pub fn from_dense(p: &[DMatrix<T>], rewards: DMatrix<T>, discount: T) -> Result<Self> {
        let transitions = p
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|s| {
                        (0..m.ncols())
                            .filter(|&j| m[(s, j)] != T::zero())
                            .map(|j| (j, m[(s, j)]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(transitions, rewards, discount)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    /// Expected immediate reward table, `n_states × n_actions`.
    pub fn rewards(&self) -> &DMatrix<T> {
        &self.rewards
    }

    pub fn reward(&self, s: usize, a: usize) -> T {
        self.rewards[(s, a)]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, T)] {
        &self.transitions[a][s]
    }

    /// Same dynamics and discount with a different reward table.
    pub fn with_rewards(&self, rewards: DMatrix<T>) -> Result<Self> {
        Self::new(self.transitions.clone(), rewards, self.discount)
    }

    /// Same dynamics and rewards with a different discount.
    pub fn with_discount(&self, discount: T) -> Result<Self> {
        Self::new(self.transitions.clone(), self.rewards.clone(), discount)
    }

    /// States in which every action self-loops with probability one.
    pub fn absorbing_states(&self) -> Vec<usize> {
        (0..self.n_states)
            .filter(|&s| {
                (0..self.n_actions).all(|a| {
                    self.successors(s, a)
                        .iter()
                        .all(|&(next, p)| next == s || p == T::zero())
                })
            })
            .collect()
    }

    /// Dense transition matrix of the Markov chain induced by `policy`.
    pub fn policy_transition_matrix(&self, policy: &Policy<T>) -> DMatrix<T> {
        let mut p = DMatrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = policy.prob(s, a);
                if w == T::zero() {
                    continue;
                }
                for &(next, q) in self.successors(s, a) {
                    p[(s, next)] += w * q;
                }
            }
        }
        p
    }

    /// Expected one-step reward under `policy`.
    pub fn policy_rewards(&self, policy: &Policy<T>) -> DVector<T> {
        DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions).fold(T::zero(), |acc, a| {
                acc + policy.prob(s, a) * self.rewards[(s, a)]
            })
        })
    }

    /// `Q(s, a) = r_a(s) + α Σ_{s'} p_a(s, s') J(s')`.
    pub fn q_from_values(&self, values: &ValueFunction<T>) -> QFunction<T> {
        let q = DMatrix::from_fn(self.n_states, self.n_actions, |s, a| {
            let future = self
                .successors(s, a)
                .iter()
                .fold(T::zero(), |acc, &(next, p)| acc + p * values.values[next]);
            self.rewards[(s, a)] + self.discount * future
        });
        QFunction { values: q }
    }

    /// One application of the Bellman optimality operator to `q`.
    pub fn bellman_backup(&self, q: &QFunction<T>) -> QFunction<T> {
        self.q_from_values(&q.max_values())
    }

    fn check_policy(&self, policy: &Policy<T>) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::InvalidPolicy(format!(
                "policy is {}×{}, MDP is {}×{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind<T: Scalar> {
    /// One action index per state.
    Deterministic(Vec<usize>),
    /// `n_states × n_actions` matrix of action probabilities.
    Randomized(DMatrix<T>),
}

/// Stationary policy, deterministic or randomized.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T: Scalar> {
    n_actions: usize,
    kind: PolicyKind<T>,
}

impl<T: Scalar> Policy<T> {
    pub fn deterministic(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidPolicy("no actions".into()));
        }
        if let Some((s, a)) = actions.iter().enumerate().find(|(_, &a)| a >= n_actions) {
            return Err(Error::InvalidPolicy(format!(
                "state {s} selects action {a} of {n_actions}"
            )));
        }
        Ok(Self {
            n_actions,
            kind: PolicyKind::Deterministic(actions),
        })
    }

    pub fn randomized(probs: DMatrix<T>) -> Result<Self> {
        let n_actions = probs.ncols();
        if n_actions == 0 {
            return Err(Error::InvalidPolicy("no actions".into()));
        }
        let tol = T::lit(STOCHASTIC_TOL);
        for (s, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= T::zero())) {
                return Err(Error::InvalidPolicy(format!(
                    "negative probability in state {s}"
                )));
            }
            let total = row.sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} row sums to {total}"
                )));
            }
        }
        Ok(Self {
            n_actions,
            kind: PolicyKind::Randomized(probs),
        })
    }

    /// Uniform-random policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(n_actions);
        Self {
            n_actions,
            kind: PolicyKind::Randomized(DMatrix::from_element(n_states, n_actions, p)),
        }
    }

    /// Deterministic policy with each state's action drawn uniformly from a
    /// generator seeded with `seed`.
    pub fn random_deterministic(n_states: usize, n_actions: usize, seed: u64) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidPolicy("no actions".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions = (0..n_states).map(|_| rng.gen_range(0..n_actions)).collect();
        Self::deterministic(actions, n_actions)
    }

    pub fn kind(&self) -> &PolicyKind<T> {
        &self.kind
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        match &self.kind {
            PolicyKind::Deterministic(a) => a.len(),
            PolicyKind::Randomized(p) => p.nrows(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, PolicyKind::Deterministic(_))
    }

    /// Probability of choosing `a` in `s`.
    pub fn prob(&self, s: usize, a: usize) -> T {
        match &self.kind {
            PolicyKind::Deterministic(actions) => {
                if actions[s] == a {
                    T::one()
                } else {
                    T::zero()
                }
            }
            PolicyKind::Randomized(p) => p[(s, a)],
        }
    }

    /// Most probable action in `s`, lowest index on ties.
    pub fn mode_action(&self, s: usize) -> usize {
        match &self.kind {
            PolicyKind::Deterministic(actions) => actions[s],
            PolicyKind::Randomized(p) => argmax_lowest(p.row(s).iter().copied()),
        }
    }

    /// Deterministic policy taking the mode action everywhere.
    pub fn to_deterministic(&self) -> Self {
        let actions = (0..self.n_states()).map(|s| self.mode_action(s)).collect();
        Self {
            n_actions: self.n_actions,
            kind: PolicyKind::Deterministic(actions),
        }
    }

    /// Action table of a deterministic policy.
    pub fn actions(&self) -> Option<&[usize]> {
        match &self.kind {
            PolicyKind::Deterministic(a) => Some(a),
            PolicyKind::Randomized(_) => None,
        }
    }

    /// Number of states whose mode action differs between the two policies.
    pub fn count_differences(&self, other: &Self) -> usize {
        (0..self.n_states().min(other.n_states()))
            .filter(|&s| self.mode_action(s) != other.mode_action(s))
            .count()
    }
}

/// State values, one entry per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction<T: Scalar> {
    pub values: DVector<T>,
}

impl<T: Scalar> ValueFunction<T> {
    pub fn new(values: DVector<T>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ_s J(s)`, the score used to compare learned policies.
    pub fn total(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs(
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| a - b),
        )
    }
}

/// State-action values, `n_states × n_actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction<T: Scalar> {
    pub values: DMatrix<T>,
}

impl<T: Scalar> QFunction<T> {
    pub fn new(values: DMatrix<T>) -> Self {
        Self { values }
    }

    /// `J(s) = max_a Q(s, a)`.
    pub fn max_values(&self) -> ValueFunction<T> {
        ValueFunction::new(DVector::from_fn(self.values.nrows(), |s, _| {
            self.values
                .row(s)
                .iter()
                .copied()
                .fold(T::min_value().unwrap(), |m, v| if v > m { v } else { m })
        }))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs(
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| a - b),
        )
    }
}

fn argmax_lowest<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_value: Option<T> = None;
    for (i, v) in values.enumerate() {
        if best_value.is_none_or(|b| v > b) {
            best = i;
            best_value = Some(v);
        }
    }
    best
}

/// Greedy deterministic policy of `q`; ties go to the lowest action index.
pub fn greedy_policy<T: Scalar>(q: &QFunction<T>) -> Policy<T> {
    let actions = q
        .values
        .row_iter()
        .map(|row| argmax_lowest(row.iter().copied()))
        .collect();
    Policy {
        n_actions: q.values.ncols(),
        kind: PolicyKind::Deterministic(actions),
    }
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ViSolution<T: Scalar> {
    pub values: ValueFunction<T>,
    pub q: QFunction<T>,
    pub policy: Policy<T>,
    /// `max |Q_{t+1} − Q_t|` for every sweep, in order.
    pub residuals: Vec<T>,
}

impl<T: Scalar> ViSolution<T> {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

/// Q-value iteration from `Q = 0` until the sup-norm change drops to `tol`.
pub fn value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    tol: T,
    max_iter: usize,
) -> Result<ViSolution<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let mut q = QFunction::new(DMatrix::zeros(mdp.n_states(), mdp.n_actions()));
    let mut residuals = Vec::new();
    for _ in 0..max_iter {
        let next = mdp.bellman_backup(&q);
        let residual = next.max_abs_diff(&q);
        q = next;
        residuals.push(residual);
        if residual <= tol {
            let policy = greedy_policy(&q);
            return Ok(ViSolution {
                values: q.max_values(),
                q,
                policy,
                residuals,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: residuals.last().map_or(f64::INFINITY, |r| r.as_f64()),
    })
}

/// Solves `(I − α P_π) J = R_π` directly.
pub fn exact_policy_evaluation<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &Policy<T>,
) -> Result<ValueFunction<T>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let system = DMatrix::identity(n, n) - mdp.policy_transition_matrix(policy) * mdp.discount();
    let r = mdp.policy_rewards(policy);
    let j = system.clone().lu().solve(&r).ok_or(Error::Singular {
        condition: f64::INFINITY,
        ridge: 0.0,
    })?;
    let residual = max_abs((&system * &j - &r).iter().copied());
    let scale = T::one() + max_abs(j.iter().copied());
    let allowed = T::lit(1e-10).max(T::lit(1e3) * T::eps() * scale);
    if !(residual <= allowed) {
        return Err(Error::Singular {
            condition: f64::NAN,
            ridge: 0.0,
        });
    }
    Ok(ValueFunction::new(j))
}

/// Truncated eigen-expansion of `J = (I − α P)^{-1} R` for a symmetric
/// transition matrix, keeping the `k` largest eigenvalues:
/// `Σ_{i ≤ k} φ_i φ_iᵀ R / (1 − α λ_i)`.
pub fn spectral_value_expansion<T: Scalar>(
    p_pi: &DMatrix<T>,
    rewards: &DVector<T>,
    alpha: T,
    k: usize,
) -> Result<ValueFunction<T>> {
    let n = p_pi.nrows();
    if p_pi.ncols() != n || rewards.len() != n {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    let asym = max_abs(
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| p_pi[(i, j)] - p_pi[(j, i)]),
    );
    if asym > T::lit(1e-12) * (T::one() + max_abs(p_pi.iter().copied())) {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    let eig = p_pi.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let mut j = DVector::zeros(n);
    for &i in order.iter().take(k) {
        let phi = eig.eigenvectors.column(i);
        let coeff = phi.dot(rewards) / (T::one() - alpha * eig.eigenvalues[i]);
        j.axpy(coeff, &phi, T::one());
    }
    Ok(ValueFunction::new(j))
}
