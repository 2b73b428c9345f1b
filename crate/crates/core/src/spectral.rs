//! Similarity and diffusion matrices over state graphs, and the eigenvector
//! bases extracted from them.
//!
//! Supported operators: adjacency `A`, combinatorial Laplacian `L = D − A`,
//! normalised Laplacian `D^{-1/2} L D^{-1/2}`, random walk `W = D^{-1} A`,
//! the reward-weighted diffusion `W_R` (a softmax over neighbour rewards), and
//! a Gaussian kernel over scalar data.

use std::cmp::Ordering;
use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::scalar::{max_abs, Scalar};

const SYMMETRY_TOL: f64 = 1e-12;
const DETAILED_BALANCE_TOL: f64 = 1e-10;
const EIGEN_CLUSTER_TOL: f64 = 1e-10;
const COMPLEX_WARN_TOL: f64 = 1e-8;
const SIGN_TIE_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-9;

/// Undirected graph over states with a reward per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph<T: Scalar> {
    neighbours: Vec<Vec<usize>>,
    rewards: DVector<T>,
}

impl<T: Scalar> StateGraph<T> {
    /// Builds a graph from adjacency lists. Lists are sorted; the relation
    /// must be symmetric and free of self-loops.
    pub fn from_neighbours(mut neighbours: Vec<Vec<usize>>, rewards: DVector<T>) -> Result<Self> {
        let n = neighbours.len();
        if rewards.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} rewards for {n} nodes",
                rewards.len()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("node reward {r}")));
        }
        for (i, list) in neighbours.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if list.iter().any(|&j| j >= n || j == i) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} has an out-of-range neighbour or a self-loop"
                )));
            }
        }
        for (i, list) in neighbours.iter().enumerate() {
            if let Some(&j) = list
                .iter()
                .find(|&&j| neighbours[j].binary_search(&i).is_err())
            {
                return Err(Error::InvalidArgument(format!(
                    "edge {i}→{j} has no reverse"
                )));
            }
        }
        Ok(Self {
            neighbours,
            rewards,
        })
    }

    /// Builds a graph from a 0/1 adjacency matrix.
    pub fn from_adjacency(adjacency: &DMatrix<T>, rewards: DVector<T>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::InvalidArgument("adjacency must be square".into()));
        }
        let lists = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[(i, j)] != T::zero()).collect())
            .collect();
        Self::from_neighbours(lists, rewards)
    }

    pub fn n(&self) -> usize {
        self.neighbours.len()
    }

    pub fn neighbours(&self) -> &[Vec<usize>] {
        &self.neighbours
    }

    pub fn rewards(&self) -> &DVector<T> {
        &self.rewards
    }

    /// Same topology with different node rewards.
    pub fn with_rewards(&self, rewards: DVector<T>) -> Result<Self> {
        Self::from_neighbours(self.neighbours.clone(), rewards)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbours.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn adjacency_matrix(&self) -> DMatrix<T> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, list) in self.neighbours.iter().enumerate() {
            for &j in list {
                a[(i, j)] = T::one();
            }
        }
        a
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return true;
        }
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbours[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n()
    }

    fn require_positive_degrees(&self) -> Result<()> {
        match self.neighbours.iter().position(Vec::is_empty) {
            Some(i) => Err(Error::IsolatedNode(i)),
            None => Ok(()),
        }
    }
}

/// Which operator a [`SimilarityMatrix`] holds, with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimilarityKind<T: Scalar> {
    Adjacency,
    CombinatorialLaplacian,
    NormalizedLaplacian,
    RandomWalk,
    /// Row-wise softmax of `β·R(s')` over the neighbours `s'` of `s`.
    RewardDiffusion {
        beta: T,
    },
    /// Symmetric weights `A(s,s')·exp(β(R(s) + R(s'))/2)`; row-normalising
    /// them gives back `RewardDiffusion`.
    SymmetricRewardDiffusion {
        beta: T,
    },
    GaussianKernel {
        sigma: T,
        distance: KernelDistance,
    },
}

/// Distance used inside the Gaussian kernel exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDistance {
    /// `exp(−|x_i − x_j| / 2σ²)`.
    Absolute,
    /// `exp(−|x_i − x_j|² / 2σ²)`.
    Squared,
}

/// Order in which eigenpairs are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    Descending,
    Ascending,
}

impl<T: Scalar> SimilarityKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            SimilarityKind::Adjacency => "adjacency",
            SimilarityKind::CombinatorialLaplacian => "combinatorial-laplacian",
            SimilarityKind::NormalizedLaplacian => "normalized-laplacian",
            SimilarityKind::RandomWalk => "random-walk",
            SimilarityKind::RewardDiffusion { .. } => "reward-diffusion",
            SimilarityKind::SymmetricRewardDiffusion { .. } => "symmetric-reward-diffusion",
            SimilarityKind::GaussianKernel { .. } => "gaussian-kernel",
        }
    }

    /// Laplacians keep their smallest eigenvalues, everything else its largest.
    pub fn ordering(&self) -> EigenOrder {
        match self {
            SimilarityKind::CombinatorialLaplacian | SimilarityKind::NormalizedLaplacian => {
                EigenOrder::Ascending
            }
            _ => EigenOrder::Descending,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T: Scalar> {
    pub kind: SimilarityKind<T>,
    pub data: DMatrix<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Largest `|Σ_j M(i, j) − 1|` over all rows.
    pub fn row_sum_error(&self) -> T {
        max_abs(self.data.row_iter().map(|r| r.sum() - T::one()))
    }
}

/// Builds a graph operator. Gaussian kernels are built from data with
/// [`gaussian_kernel_from_values`] instead.
pub fn build_matrix<T: Scalar>(
    graph: &StateGraph<T>,
    kind: SimilarityKind<T>,
) -> Result<SimilarityMatrix<T>> {
    let n = graph.n();
    let data = match kind {
        SimilarityKind::Adjacency => graph.adjacency_matrix(),
        SimilarityKind::CombinatorialLaplacian => {
            let mut l = -graph.adjacency_matrix();
            for i in 0..n {
                l[(i, i)] = T::from_usize_lossy(graph.degree(i));
            }
            l
        }
        SimilarityKind::NormalizedLaplacian => {
            graph.require_positive_degrees()?;
            let inv_sqrt: Vec<T> = (0..n)
                .map(|i| T::one() / T::from_usize_lossy(graph.degree(i)).sqrt())
                .collect();
            let mut m = DMatrix::identity(n, n);
            for (i, list) in graph.neighbours.iter().enumerate() {
                for &j in list {
                    m[(i, j)] = -(inv_sqrt[i] * inv_sqrt[j]);
                }
            }
            m
        }
        SimilarityKind::RandomWalk => {
            graph.require_positive_degrees()?;
            let mut w = DMatrix::zeros(n, n);
            for (i, list) in graph.neighbours.iter().enumerate() {
                let p = T::one() / T::from_usize_lossy(list.len());
                for &j in list {
                    w[(i, j)] = p;
                }
            }
            w
        }
        SimilarityKind::RewardDiffusion { beta } => return reward_diffusion_matrix(graph, beta),
        SimilarityKind::SymmetricRewardDiffusion { beta } => {
            check_beta(beta)?;
            let r = &graph.rewards;
            let half = T::lit(0.5);
            // Shift by the global maximum so the largest weight is exp(0).
            let shift = r
                .iter()
                .copied()
                .fold(T::min_value().unwrap(), |m, v| m.max(v));
            let mut m = DMatrix::zeros(n, n);
            for (i, list) in graph.neighbours.iter().enumerate() {
                for &j in list {
                    m[(i, j)] = (beta * ((r[i] + r[j]) * half - shift)).exp();
                }
            }
            m
        }
        SimilarityKind::GaussianKernel { .. } => {
            return Err(Error::InvalidArgument(
                "Gaussian kernels are built from data values, not from a graph".into(),
            ))
        }
    };
    Ok(SimilarityMatrix { kind, data })
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if !(beta >= T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "beta {beta} must be finite and ≥ 0"
        )));
    }
    Ok(())
}

/// `W_R(s, s') = exp(β R(s')) / Σ_{s'' ~ s} exp(β R(s''))` for neighbours
/// `s'` of `s`. Each row is shifted by its maximum before exponentiating.
pub fn reward_diffusion_matrix<T: Scalar>(
    graph: &StateGraph<T>,
    beta: T,
) -> Result<SimilarityMatrix<T>> {
    check_beta(beta)?;
    graph.require_positive_degrees()?;
    let n = graph.n();
    let r = &graph.rewards;
    let mut w = DMatrix::zeros(n, n);
    let mut weights = Vec::new();
    for (i, list) in graph.neighbours.iter().enumerate() {
        let shift = list
            .iter()
            .map(|&j| beta * r[j])
            .fold(T::min_value().unwrap(), |m, v| m.max(v));
        weights.clear();
        weights.extend(list.iter().map(|&j| (beta * r[j] - shift).exp()));
        let total = weights.iter().fold(T::zero(), |acc, &x| acc + x);
        for (&j, &x) in list.iter().zip(&weights) {
            w[(i, j)] = x / total;
        }
    }
    Ok(SimilarityMatrix {
        kind: SimilarityKind::RewardDiffusion { beta },
        data: w,
    })
}

/// Gaussian kernel `K(i, j) = exp(−|v_i − v_j| / 2σ²)` over scalar data.
pub fn gaussian_kernel_from_values<T: Scalar>(
    values: &[T],
    sigma: T,
) -> Result<SimilarityMatrix<T>> {
    gaussian_kernel_with(values, sigma, KernelDistance::Absolute)
}

pub fn gaussian_kernel_with<T: Scalar>(
    values: &[T],
    sigma: T,
    distance: KernelDistance,
) -> Result<SimilarityMatrix<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "sigma {sigma} must be positive"
        )));
    }
    let denom = T::lit(2.0) * sigma * sigma;
    let n = values.len();
    let data = DMatrix::from_fn(n, n, |i, j| {
        let d = (values[i] - values[j]).abs();
        let d = match distance {
            KernelDistance::Absolute => d,
            KernelDistance::Squared => d * d,
        };
        (-(d / denom)).exp()
    });
    Ok(SimilarityMatrix {
        kind: SimilarityKind::GaussianKernel { sigma, distance },
        data,
    })
}

/// Eigen decomposition path taken by [`top_k_eigenbasis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenRoute {
    /// Symmetric input, symmetric QR solver.
    Symmetric,
    /// Non-symmetric but reversible (detailed balance holds): solved through
    /// the similar symmetric matrix `Π^{1/2} M Π^{-1/2}`.
    Reversible,
    /// Real Schur form for eigenvalues, complex inverse iteration for vectors.
    General,
}

/// Solver selection for [`top_k_eigenbasis_via`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSolver {
    /// Cheapest exact route for the matrix at hand.
    Auto,
    /// Always use the general dense route.
    General,
}

/// `n × k` eigenvector basis with its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet<T: Scalar> {
    /// Columns are basis functions of unit Euclidean norm.
    pub phi: DMatrix<T>,
    pub eigenvalues: DVector<T>,
    pub source: SimilarityKind<T>,
    pub ordering: EigenOrder,
    pub route: EigenRoute,
    /// Non-fatal diagnostics, e.g. complex eigenvalues projected to reals.
    pub warnings: Vec<String>,
}

impl<T: Scalar> BasisSet<T> {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k(&self) -> usize {
        self.phi.ncols()
    }
}

/// Top-`k` eigenbasis of a similarity matrix (bottom-`k` for Laplacians).
///
/// Columns are normalised to unit length, the first entry of largest
/// magnitude is made positive, and equal eigenvalues are ordered by
/// lexicographic comparison of their sign-fixed vectors.
pub fn top_k_eigenbasis<T: Scalar>(matrix: &SimilarityMatrix<T>, k: usize) -> Result<BasisSet<T>> {
    top_k_eigenbasis_via(matrix, k, EigenSolver::Auto)
}

pub fn top_k_eigenbasis_via<T: Scalar>(
    matrix: &SimilarityMatrix<T>,
    k: usize,
    solver: EigenSolver,
) -> Result<BasisSet<T>> {
    let n = matrix.n();
    if matrix.data.ncols() != n {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    if let Some(v) = matrix.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("matrix entry {v}")));
    }
    let ordering = matrix.kind.ordering();
    let mut warnings = Vec::new();

    let (route, pairs) = match solver {
        EigenSolver::General => (
            EigenRoute::General,
            general_pairs(&matrix.data, k, ordering, &mut warnings)?,
        ),
        EigenSolver::Auto if is_symmetric(&matrix.data) => (
            EigenRoute::Symmetric,
            symmetric_pairs(&matrix.data, None, k, ordering),
        ),
        EigenSolver::Auto => {
            let reversible = stationary_weights(&matrix.data)
                .map(|pi| symmetric_pairs(&matrix.data, Some(&pi), k, ordering));
            match reversible {
                Some(pairs) if max_residual(&matrix.data, &pairs) <= T::lit(RESIDUAL_TOL) => {
                    (EigenRoute::Reversible, pairs)
                }
                Some(pairs) => {
                    // Widely spread stationary weights make Π^{-1/2} amplify
                    // rounding error in the back-transformed vectors.
                    warnings.push(format!(
                        "reversible route residual {:.3e}; used the general solver",
                        max_residual(&matrix.data, &pairs).as_f64()
                    ));
                    (
                        EigenRoute::General,
                        general_pairs(&matrix.data, k, ordering, &mut warnings)?,
                    )
                }
                None => (
                    EigenRoute::General,
                    general_pairs(&matrix.data, k, ordering, &mut warnings)?,
                ),
            }
        }
    };

    let mut phi = DMatrix::zeros(n, k);
    let mut eigenvalues = DVector::zeros(k);
    for (c, (value, vector)) in pairs.into_iter().enumerate() {
        eigenvalues[c] = value;
        phi.set_column(c, &vector);
    }
    Ok(BasisSet {
        phi,
        eigenvalues,
        source: matrix.kind,
        ordering,
        route,
        warnings,
    })
}

/// Largest `‖M v − λ v‖_∞` over unit-norm pairs, relative to `max(1, ‖M‖_∞)`.
fn max_residual<T: Scalar>(m: &DMatrix<T>, pairs: &[(T, DVector<T>)]) -> T {
    let scale = m
        .row_iter()
        .map(|r| r.iter().fold(T::zero(), |acc, x| acc + x.abs()))
        .fold(T::one(), |a, b| a.max(b));
    pairs
        .iter()
        .map(|(lambda, v)| (m * v - v * *lambda).amax() / scale)
        .fold(T::zero(), |a, b| a.max(b))
}

fn is_symmetric<T: Scalar>(m: &DMatrix<T>) -> bool {
    let n = m.nrows();
    let scale = T::one().max(max_abs(m.iter().copied()));
    let tol = T::lit(SYMMETRY_TOL) * scale;
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Weights `π` with `π_i M_ij = π_j M_ji` for every pair, found by walking
/// the support graph; `None` when the entries are not all non-negative, the
/// support is not symmetric, or detailed balance fails.
fn stationary_weights<T: Scalar>(m: &DMatrix<T>) -> Option<Vec<T>> {
    let n = m.nrows();
    if m.iter().any(|&v| v < T::zero()) {
        return None;
    }
    let mut pi: Vec<Option<T>> = vec![None; n];
    for root in 0..n {
        if pi[root].is_some() {
            continue;
        }
        pi[root] = Some(T::one());
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            let pi_i = pi[i].unwrap();
            for j in 0..n {
                if j == i || m[(i, j)] == T::zero() {
                    continue;
                }
                if m[(j, i)] == T::zero() {
                    return None;
                }
                if pi[j].is_none() {
                    pi[j] = Some(pi_i * m[(i, j)] / m[(j, i)]);
                    queue.push_back(j);
                }
            }
        }
    }
    let pi: Vec<T> = pi.into_iter().map(Option::unwrap).collect();
    let tol = T::lit(DETAILED_BALANCE_TOL);
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (pi[i] * m[(i, j)], pi[j] * m[(j, i)]);
            if (a - b).abs() > tol * a.max(b) {
                return None;
            }
        }
    }
    pi.iter()
        .all(|p| p.is_finite() && *p > T::zero())
        .then_some(pi)
}

/// Eigenpairs through the symmetric solver. With weights `π`, decomposes
/// `S = Π^{1/2} M Π^{-1/2}` and maps eigenvectors back with `Π^{-1/2}`.
fn symmetric_pairs<T: Scalar>(
    m: &DMatrix<T>,
    pi: Option<&[T]>,
    k: usize,
    ordering: EigenOrder,
) -> Vec<(T, DVector<T>)> {
    let n = m.nrows();
    let half = T::lit(0.5);
    let sym = match pi {
        None => (m + m.transpose()) * half,
        Some(pi) => {
            let root: Vec<T> = pi.iter().map(|p| p.sqrt()).collect();
            let s = DMatrix::from_fn(n, n, |i, j| root[i] * m[(i, j)] / root[j]);
            (&s + s.transpose()) * half
        }
    };
    let eig = sym.symmetric_eigen();
    let candidates = (0..n)
        .map(|c| {
            let mut v = eig.eigenvectors.column(c).into_owned();
            if let Some(pi) = pi {
                for (x, p) in v.iter_mut().zip(pi) {
                    *x /= p.sqrt();
                }
            }
            (eig.eigenvalues[c], v, ())
        })
        .collect();
    select_pairs(candidates, k, ordering)
        .into_iter()
        .map(|(value, v, ())| (value, v))
        .collect()
}

/// Orders candidate eigenpairs, fixes signs, breaks ties and keeps `k`.
fn select_pairs<T: Scalar, X>(
    mut candidates: Vec<(T, DVector<T>, X)>,
    k: usize,
    ordering: EigenOrder,
) -> Vec<(T, DVector<T>, X)> {
    let by_value = |a: &T, b: &T| {
        let o = a.partial_cmp(b).unwrap_or(Ordering::Equal);
        match ordering {
            EigenOrder::Descending => o.reverse(),
            EigenOrder::Ascending => o,
        }
    };
    candidates.sort_by(|a, b| by_value(&a.0, &b.0));
    // Extend the cut past `k` so a degenerate cluster at the boundary is
    // ordered as a whole before truncating.
    let mut end = k;
    while end < candidates.len() && same_eigenvalue(candidates[end - 1].0, candidates[end].0) {
        end += 1;
    }
    candidates.truncate(end);
    for (_, v, _) in candidates.iter_mut() {
        normalise_and_fix_sign(v);
    }
    let mut start = 0;
    while start < candidates.len() {
        let mut stop = start + 1;
        while stop < candidates.len() && same_eigenvalue(candidates[start].0, candidates[stop].0) {
            stop += 1;
        }
        candidates[start..stop].sort_by(|a, b| lexicographic(&a.1, &b.1));
        start = stop;
    }
    candidates.truncate(k);
    candidates
}

fn same_eigenvalue<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(EIGEN_CLUSTER_TOL) * T::one().max(a.abs()).max(b.abs())
}

fn lexicographic<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Unit Euclidean norm; the first entry within a relative `1e-8` of the
/// largest magnitude is made positive.
pub fn normalise_and_fix_sign<T: Scalar>(v: &mut DVector<T>) {
    let norm = v.norm();
    if norm > T::zero() {
        *v /= norm;
    }
    let peak = max_abs(v.iter().copied());
    let threshold = peak * (T::one() - T::lit(SIGN_TIE_TOL));
    if let Some(&lead) = v.iter().find(|x| x.abs() >= threshold) {
        if lead < T::zero() {
            v.neg_mut();
        }
    }
}

/// General dense route: eigenvalues from the real Schur form, eigenvectors by
/// inverse iteration in complex arithmetic. Selected eigenvalues with an
/// imaginary part above `1e-8` keep only the real part of their
/// phase-normalised eigenvector, and a warning is recorded.
fn general_pairs<T: Scalar>(
    m: &DMatrix<T>,
    k: usize,
    ordering: EigenOrder,
    warnings: &mut Vec<String>,
) -> Result<Vec<(T, DVector<T>)>> {
    let n = m.nrows();
    let mut values = schur_eigenvalues(m)?;
    values.sort_by(|a, b| {
        let o = a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal);
        let o = match ordering {
            EigenOrder::Descending => o.reverse(),
            EigenOrder::Ascending => o,
        };
        // Conjugate pairs: positive imaginary part first.
        o.then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
    });
    let mut end = k;
    while end < n && same_eigenvalue(values[end - 1].re, values[end].re) {
        end += 1;
    }
    let mc: DMatrix<Complex<T>> = m.map(|x| Complex::new(x, T::zero()));
    let mut found: Vec<(Complex<T>, DVector<Complex<T>>)> = Vec::with_capacity(end);
    let mut candidates = Vec::with_capacity(end);
    for &lambda in &values[..end] {
        let cluster: Vec<&DVector<Complex<T>>> = found
            .iter()
            .filter(|(mu, _)| modulus(*mu - lambda) <= T::lit(1e-6) * T::one().max(modulus(lambda)))
            .map(|(_, v)| v)
            .collect();
        let v = inverse_iteration(&mc, lambda, &cluster)?;
        let warning = (lambda.im.abs() > T::lit(COMPLEX_WARN_TOL)).then(|| {
            format!(
                "complex eigenvalue {:.6e}{:+.6e}i projected to its real part",
                lambda.re.as_f64(),
                lambda.im.as_f64()
            )
        });
        let real = phase_normalised_real_part(&v);
        found.push((lambda, v));
        candidates.push((lambda.re, real, warning));
    }
    Ok(select_pairs(candidates, k, ordering)
        .into_iter()
        .map(|(value, v, warning)| {
            warnings.extend(warning);
            (value, v)
        })
        .collect())
}

/// Eigenvalues from the real Schur form. Spectra symmetric about zero (e.g.
/// bipartite random walks) can stall the QR iteration, so a stalled attempt
/// is retried on `M + cI` for a few shifts `c`.
fn schur_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let n = m.nrows();
    for shift in [0.0, 0.3, -0.7, 1.9] {
        let c = T::lit(shift);
        let shifted = m + DMatrix::identity(n, n) * c;
        if let Some(schur) = Schur::try_new(shifted, T::eps(), 1000 * n.max(10)) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| Complex::new(z.re - c, z.im))
                .collect());
        }
    }
    Err(Error::Eigen(
        "real Schur decomposition did not converge".into(),
    ))
}

fn inverse_iteration<T: Scalar>(
    m: &DMatrix<Complex<T>>,
    lambda: Complex<T>,
    previous: &[&DVector<Complex<T>>],
) -> Result<DVector<Complex<T>>> {
    let n = m.nrows();
    let mut shift_scale = T::lit(1e-10);
    for _ in 0..6 {
        let mu = lambda + Complex::new(shift_scale * (T::one() + modulus(lambda)), T::zero());
        let shifted = m - DMatrix::<Complex<T>>::identity(n, n) * mu;
        let lu = shifted.lu();
        let mut x = DVector::from_fn(n, |i, _| {
            Complex::new(
                T::one() + T::from_usize_lossy(i % 7) / T::lit(7.0),
                T::zero(),
            )
        });
        let mut ok = true;
        for _ in 0..6 {
            project_out(&mut x, previous);
            match lu.solve(&x) {
                Some(y) if y.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                    let norm = y.norm();
                    if norm == T::zero() {
                        ok = false;
                        break;
                    }
                    x = y.unscale(norm);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            project_out(&mut x, previous);
            let norm = x.norm();
            if norm > T::zero() {
                return Ok(x.unscale(norm));
            }
        }
        shift_scale *= T::lit(100.0);
    }
    Err(Error::Eigen(format!(
        "inverse iteration failed near eigenvalue {:e}",
        lambda.re.as_f64()
    )))
}

fn project_out<T: Scalar>(x: &mut DVector<Complex<T>>, basis: &[&DVector<Complex<T>>]) {
    for b in basis {
        let coeff = b.dotc(x);
        x.axpy(-coeff, b, Complex::new(T::one(), T::zero()));
    }
}

fn modulus<T: Scalar>(c: Complex<T>) -> T {
    c.re.hypot(c.im)
}

fn phase_normalised_real_part<T: Scalar>(v: &DVector<Complex<T>>) -> DVector<T> {
    let peak = v
        .iter()
        .map(|&c| modulus(c))
        .fold(T::zero(), |m, x| m.max(x));
    let threshold = peak * (T::one() - T::lit(SIGN_TIE_TOL));
    let lead = v
        .iter()
        .find(|&&c| modulus(c) >= threshold)
        .copied()
        .unwrap_or(Complex::new(T::one(), T::zero()));
    let rotation = if modulus(lead) > T::zero() {
        lead.conj().unscale(modulus(lead))
    } else {
        Complex::new(T::one(), T::zero())
    };
    v.map(|c| (c * rotation).re)
}

/// State-action features built from a state basis: `φ(s, a)` holds the `k`
/// state features in block `a` of a `k · n_actions` vector, zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Scalar> {
    n_states: usize,
    k: usize,
    n_actions: usize,
    /// Row-major `n_states × k`.
    rows: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    /// Lifts an arbitrary `n × k` state feature matrix.
    pub fn from_state_features(phi: &DMatrix<T>, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidArgument("n_actions must be ≥ 1".into()));
        }
        let (n_states, k) = phi.shape();
        let rows = (0..n_states)
            .flat_map(|s| (0..k).map(move |i| phi[(s, i)]))
            .collect();
        Ok(Self {
            n_states,
            k,
            n_actions,
            rows,
        })
    }

    /// Indicator features: one basis function per state.
    pub fn tabular(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::from_state_features(&DMatrix::identity(n_states, n_states), n_actions)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Features per state.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of `φ(s, a)`.
    pub fn dim(&self) -> usize {
        self.k * self.n_actions
    }

    pub fn state_features(&self, s: usize) -> &[T] {
        &self.rows[s * self.k..(s + 1) * self.k]
    }

    pub fn features(&self, s: usize, a: usize) -> DVector<T> {
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(a * self.k, self.k)
            .copy_from_slice(self.state_features(s));
        v
    }

    /// `φ(s, a)ᵀ w`.
    pub fn value(&self, s: usize, a: usize, w: &DVector<T>) -> T {
        self.state_features(s)
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &f)| acc + f * w[a * self.k + i])
    }
}

/// Block one-hot lift of a basis to state-action features.
pub fn lift_to_state_action<T: Scalar>(
    basis: &BasisSet<T>,
    n_actions: usize,
) -> Result<FeatureMap<T>> {
    FeatureMap::from_state_features(&basis.phi, n_actions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> StateGraph<f64> {
        let lists = (0..n)
            .map(|i| {
                let mut l = Vec::new();
                if i > 0 {
                    l.push(i - 1);
                }
                if i + 1 < n {
                    l.push(i + 1);
                }
                l
            })
            .collect();
        StateGraph::from_neighbours(lists, DVector::zeros(n)).unwrap()
    }

    #[test]
    fn two_node_path_matrices() {
        let g = path(2);
        let w = build_matrix(&g, SimilarityKind::RandomWalk).unwrap();
        assert_eq!(w.data, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let l = build_matrix(&g, SimilarityKind::CombinatorialLaplacian).unwrap();
        assert_eq!(
            l.data,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn three_node_path_random_walk() {
        let w = build_matrix(&path(3), SimilarityKind::RandomWalk).unwrap();
        assert_eq!(
            w.data,
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0])
        );
        // det(W − λI) = −λ³ + λ  =>  {1, 0, −1}
        let basis = top_k_eigenbasis(&w, 3).unwrap();
        assert_eq!(basis.route, EigenRoute::Reversible);
        let expected = [1.0, 0.0, -1.0];
        for (got, want) in basis.eigenvalues.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let first = basis.phi.column(0);
        assert!(first
            .iter()
            .all(|&x| (x - first[0]).abs() < 1e-12 && x > 0.0));
    }

    #[test]
    fn softmax_row_by_hand() {
        // Centre node with neighbours rewarded 0 and −5.
        let g = StateGraph::from_neighbours(
            vec![vec![1, 2], vec![0], vec![0]],
            DVector::from_vec(vec![0.0, 0.0, -5.0]),
        )
        .unwrap();
        let w = reward_diffusion_matrix(&g, 0.1).unwrap();
        let e = (-0.5f64).exp();
        assert!((w.data[(0, 1)] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w.data[(0, 2)] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w.data[(0, 1)] - 0.6225).abs() < 5e-5);
        assert!((w.data[(0, 2)] - 0.3775).abs() < 5e-5);
    }

    #[test]
    fn zero_beta_and_constant_rewards_give_random_walk() {
        let g = path(5);
        let w = build_matrix(&g, SimilarityKind::RandomWalk).unwrap();
        assert_eq!(reward_diffusion_matrix(&g, 0.0).unwrap().data, w.data);
        let g7 = g.with_rewards(DVector::from_element(5, 7.0)).unwrap();
        assert_eq!(reward_diffusion_matrix(&g7, 3.0).unwrap().data, w.data);
    }

    #[test]
    fn reward_diffusion_rejects_bad_input() {
        let g = path(3);
        assert!(reward_diffusion_matrix(&g, -1.0).is_err());
        let lonely = StateGraph::from_neighbours(vec![vec![], vec![]], DVector::zeros(2)).unwrap();
        assert!(matches!(
            reward_diffusion_matrix(&lonely, 1.0),
            Err(Error::IsolatedNode(0))
        ));
        assert!(matches!(
            build_matrix(&lonely, SimilarityKind::RandomWalk),
            Err(Error::IsolatedNode(0))
        ));
        assert!(StateGraph::<f64>::from_neighbours(vec![vec![0]], DVector::zeros(1)).is_err());
        assert!(
            StateGraph::<f64>::from_neighbours(vec![vec![1], vec![]], DVector::zeros(2)).is_err()
        );
        assert!(
            StateGraph::from_neighbours(vec![vec![]], DVector::from_element(1, f64::NAN)).is_err()
        );
    }

    #[test]
    fn gaussian_kernel_entries() {
        let sigma = 0.3;
        let two_s2 = 2.0 * sigma * sigma;
        let k = gaussian_kernel_from_values(&[1.0, 1.0, 1.0 + two_s2], sigma).unwrap();
        assert_eq!(k.data[(0, 1)], 1.0);
        assert!((k.data[(0, 2)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((0..3).all(|i| k.data[(i, i)] == 1.0));
        let ones = gaussian_kernel_from_values(&[4.2; 6], 0.1).unwrap();
        assert_eq!(ones.data, DMatrix::from_element(6, 6, 1.0));
        assert!(gaussian_kernel_from_values(&[1.0], 0.0).is_err());
        let sq = gaussian_kernel_with(&[0.0, 2.0], 1.0, KernelDistance::Squared).unwrap();
        assert!((sq.data[(0, 1)] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn laplacian_basis_is_ascending() {
        let l = build_matrix(&path(4), SimilarityKind::CombinatorialLaplacian).unwrap();
        let b = top_k_eigenbasis(&l, 2).unwrap();
        assert_eq!(b.ordering, EigenOrder::Ascending);
        assert!(b.eigenvalues[0].abs() < 1e-12);
        assert!(b.eigenvalues[1] > b.eigenvalues[0]);
        let c = b.phi.column(0);
        assert!(c.iter().all(|&x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn sign_convention_and_norm() {
        let mut v = DVector::from_vec(vec![0.1f64, -3.0, 2.0]);
        normalise_and_fix_sign(&mut v);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert!(v[1] > 0.0);
        let mut tie = DVector::from_vec(vec![-1.0f64, 1.0]);
        normalise_and_fix_sign(&mut tie);
        assert!(tie[0] > 0.0);
    }

    #[test]
    fn general_route_on_rotation_like_matrix() {
        // Directed 3-cycle mixed with the identity: eigenvalues 1 and a complex pair.
        let m = DMatrix::from_row_slice(3, 3, &[0.5f64, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        let sm = SimilarityMatrix {
            kind: SimilarityKind::RandomWalk,
            data: m.clone(),
        };
        let b = top_k_eigenbasis(&sm, 2).unwrap();
        assert_eq!(b.route, EigenRoute::General);
        assert!((b.eigenvalues[0] - 1.0).abs() < 1e-10);
        assert!((b.eigenvalues[1] - 0.25).abs() < 1e-10);
        assert_eq!(b.warnings.len(), 1);
        let ones = DVector::from_element(3, 1.0 / 3f64.sqrt());
        assert!((b.phi.column(0) - ones).norm() < 1e-10);
    }

    #[test]
    fn general_route_matches_reversible_route() {
        let g = StateGraph::from_neighbours(
            vec![
                vec![1, 3],
                vec![0, 2, 4],
                vec![1, 5],
                vec![0, 4],
                vec![1, 3, 5],
                vec![2, 4],
            ],
            DVector::from_vec(vec![0.0, -3.0, 1.0, 0.5, 0.0, 2.0]),
        )
        .unwrap();
        let wr = reward_diffusion_matrix(&g, 0.7f64).unwrap();
        let fast = top_k_eigenbasis(&wr, 6).unwrap();
        let slow = top_k_eigenbasis_via(&wr, 6, EigenSolver::General).unwrap();
        assert_eq!(fast.route, EigenRoute::Reversible);
        assert!(slow.warnings.is_empty());
        for c in 0..6 {
            assert!((fast.eigenvalues[c] - slow.eigenvalues[c]).abs() < 1e-10);
            let diff = (fast.phi.column(c) - slow.phi.column(c)).norm();
            assert!(diff < 1e-8, "column {c}: {diff}");
            let resid =
                (&wr.data * fast.phi.column(c) - fast.phi.column(c) * fast.eigenvalues[c]).norm();
            assert!(resid < 1e-12);
        }
    }

    #[test]
    fn feature_blocks() {
        let phi = DMatrix::from_row_slice(1, 2, &[0.3, 0.7]);
        let f = FeatureMap::from_state_features(&phi, 4).unwrap();
        assert_eq!(
            f.features(0, 2).as_slice(),
            &[0.0, 0.0, 0.0, 0.0, 0.3, 0.7, 0.0, 0.0]
        );
        assert_eq!(f.features(0, 1).dot(&f.features(0, 3)), 0.0);
        let single = FeatureMap::from_state_features(&phi, 1).unwrap();
        assert_eq!(single.features(0, 0).as_slice(), &[0.3, 0.7]);
        assert!(FeatureMap::from_state_features(&phi, 0).is_err());
        let w = DVector::from_fn(8, |i, _| i as f64);
        assert!((f.value(0, 2, &w) - (0.3 * 4.0 + 0.7 * 5.0)).abs() < 1e-15);
    }
}
