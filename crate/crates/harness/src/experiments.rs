//! The four experiments. Each is a pure function of its configuration.

use rpvf::export::{grid_csv, matrix_csv, table_csv};
use rpvf::grid::{
    build_state_graph, grid_to_mdp, make_mine_grid, make_open_goal_grid, make_three_room,
    make_wall_penalty_grid, potential_psi, GridSpec, DEFAULT_GOAL_REWARD,
};
use rpvf::learner::{collect_samples, reindex_rewards_by_departure, rpi, shape_samples};
use rpvf::mdp::{exact_policy_evaluation, value_iteration, ViSolution, VI_MAX_ITER, VI_TOLERANCE};
use rpvf::scalar::pearson;
use rpvf::spectral::{
    build_matrix, gaussian_kernel_from_values, reward_diffusion_matrix, top_k_eigenbasis,
    SimilarityKind,
};
use rpvf::{
    BasisSet, LearnerConfig, Policy, PotentialFunction, Result, SampleSet, StateGraph, TabularMdp,
};

use crate::config::{ExperimentConfig, ExperimentId, RewardIndex};
use crate::report::{ExperimentReport, RunRow};

/// Published ΣJ figures on the 5×5 goal grid.
pub const PUBLISHED_GOAL_OPTIMAL: f64 = 1887.0;
pub const PUBLISHED_GOAL_PVF: f64 = 1132.0;
pub const PUBLISHED_GOAL_RPVF: f64 = 1660.0;
/// Published mine-grid bars (instance number, PVF, RPVF) and win count.
pub const PUBLISHED_MINE_BARS: [(usize, f64, f64); 2] = [(1, 1096.0, 1628.0), (9, 1014.0, 822.0)];
pub const PUBLISHED_MINE_WINS: f64 = 9.0;

const N_ACTIONS: usize = 4;

pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let report = match config.experiment {
        ExperimentId::KernelEig => run_kernel_eig(config)?,
        ExperimentId::ThreeroomBasis => run_threeroom_basis(config)?,
        ExperimentId::GoalgridCompare => run_goalgrid_compare(config)?,
        ExperimentId::MinegridBench => run_minegrid_bench(config)?,
    };
    report.check_dominance()?;
    Ok(report)
}

fn solve(spec: &GridSpec, alpha: f64) -> Result<(TabularMdp, ViSolution<f64>)> {
    let mdp: TabularMdp = grid_to_mdp(spec, alpha)?;
    let vi = value_iteration(&mdp, VI_TOLERANCE, VI_MAX_ITER)?;
    Ok((mdp, vi))
}

fn column(basis: &BasisSet, i: usize) -> Vec<f64> {
    basis.phi.column(i).iter().copied().collect()
}

/// Greedy actions laid out like [`grid_csv`], as action indices.
fn policy_csv(spec: &GridSpec, policy: &Policy) -> String {
    let actions: Vec<usize> = (0..policy.n_states())
        .map(|s| policy.mode_action(s))
        .collect();
    let mut out = String::new();
    for row in spec.layout(&actions) {
        let line: Vec<String> = row
            .into_iter()
            .map(|a| a.map(|a| a.to_string()).unwrap_or_default())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Sample set for one instance, with rewards indexed as configured.
fn instance_samples(
    config: &ExperimentConfig,
    spec: &GridSpec,
    mdp: &TabularMdp,
    seed: u64,
) -> Result<SampleSet> {
    let behavior = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let samples = collect_samples(mdp, &behavior, config.episodes, config.horizon, seed)?;
    Ok(match config.reward_index {
        RewardIndex::Entry => samples,
        RewardIndex::Departure => reindex_rewards_by_departure(&samples, &spec.state_rewards()),
    })
}

fn learner_config(config: &ExperimentConfig, seed: u64) -> LearnerConfig {
    let mut lc = LearnerConfig::new(config.alpha, config.k);
    lc.t = config.iterations;
    lc.ridge = config.ridge;
    lc.seed = seed;
    lc
}

/// Gaussian kernel over the optimal three-room values; compares its leading
/// eigenvectors with `J*`.
pub fn run_kernel_eig(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(ExperimentId::KernelEig);
    let spec = make_three_room();
    let (_, vi) = solve(&spec, config.alpha)?;
    let j: Vec<f64> = vi.values.values.iter().copied().collect();
    let kernel = gaussian_kernel_from_values(&j, config.sigma)?;
    let basis = top_k_eigenbasis(&kernel, 2)?;

    report.push_metric("states", spec.n_states() as f64, None);
    report.push_metric("sum_j_star", vi.values.total(), None);
    let mut best = 0.0f64;
    for i in 0..2 {
        let v = column(&basis, i);
        let r = pearson(&v, &j).abs();
        best = best.max(r);
        report.push_metric(format!("eigenvalue_{}", i + 1), basis.eigenvalues[i], None);
        report.push_metric(format!("abs_pearson_{}", i + 1), r, None);
        report.push_artifact(format!("eigenvector_{}.csv", i + 1), grid_csv(&spec, &v));
    }
    report.push_metric("best_abs_pearson", best, None);
    report.push_artifact("j_star.csv", grid_csv(&spec, &j));
    report.warnings.extend(basis.warnings);
    Ok(report)
}

/// Permutation of `0..n` maximising `Σ c[i][p[i]]`; ties keep the first
/// permutation found in lexicographic order.
fn best_assignment(c: &[Vec<f64>]) -> Vec<usize> {
    fn search(
        c: &[Vec<f64>],
        row: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        score: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if row == c.len() {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        for j in 0..c.len() {
            if !used[j] {
                used[j] = true;
                current.push(j);
                search(c, row + 1, used, current, score + c[row][j], best);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    search(
        c,
        0,
        &mut vec![false; c.len()],
        &mut Vec::new(),
        0.0,
        &mut best,
    );
    best.1
}

/// Random-walk eigenvectors of the walled three-room graph against
/// reward-diffusion eigenvectors of the open grid whose wall cells are
/// penalised.
pub fn run_threeroom_basis(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(ExperimentId::ThreeroomBasis);
    let k = config.k;
    let rooms = make_three_room();
    let penalised = make_wall_penalty_grid(config.penalty)?;
    let rooms_graph: StateGraph = build_state_graph(&rooms)?;
    let penalised_graph: StateGraph = build_state_graph(&penalised)?;
    // One extra vector on each side exposes the gap after the compared block.
    let w = top_k_eigenbasis(
        &build_matrix(&rooms_graph, SimilarityKind::RandomWalk)?,
        k + 1,
    )?;
    let wr = top_k_eigenbasis(
        &reward_diffusion_matrix(&penalised_graph, config.beta)?,
        k + 1,
    )?;

    // Correlations use only the cells open in both grids.
    let shared: Vec<usize> = rooms
        .state_coords()
        .iter()
        .map(|&(x, y)| {
            penalised
                .state_index(x, y)
                .expect("open cell of the open grid")
        })
        .collect();
    let restricted = |i: usize| -> Vec<f64> { shared.iter().map(|&s| wr.phi[(s, i)]).collect() };

    let c: Vec<Vec<f64>> = (1..k)
        .map(|i| {
            let a = column(&w, i);
            (1..k).map(|j| pearson(&a, &restricted(j)).abs()).collect()
        })
        .collect();
    let assignment = best_assignment(&c);
    let matched: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| c[i][j])
        .collect();

    report.push_metric(
        "beta_times_abs_penalty",
        config.beta * config.penalty.abs(),
        None,
    );
    for i in 0..=k {
        report.push_metric(format!("w_eigenvalue_{}", i + 1), w.eigenvalues[i], None);
    }
    for i in 0..=k {
        report.push_metric(format!("wr_eigenvalue_{}", i + 1), wr.eigenvalues[i], None);
    }
    for (i, (&j, &m)) in assignment.iter().zip(&matched).enumerate() {
        report.push_metric(format!("matched_{}_to_{}", i + 2, j + 2), m, None);
    }
    let min = matched.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = matched.iter().sum::<f64>() / matched.len() as f64;
    report.push_metric("matched_min", min, None);
    report.push_metric("matched_mean", mean, None);
    let spread = |v: Vec<f64>| {
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    report.push_metric("w_vector_1_spread", spread(column(&w, 0)), None);
    report.push_metric("wr_vector_1_spread", spread(column(&wr, 0)), None);

    for i in 0..k {
        report.push_artifact(
            format!("w_eigenvector_{}.csv", i + 1),
            grid_csv(&rooms, &column(&w, i)),
        );
        report.push_artifact(
            format!("wr_eigenvector_{}.csv", i + 1),
            grid_csv(&penalised, &column(&wr, i)),
        );
    }
    let header: Vec<String> = std::iter::once("w_vector".to_string())
        .chain((2..=k).map(|j| format!("wr_{j}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = c
        .iter()
        .enumerate()
        .map(|(i, row)| {
            std::iter::once((i + 2).to_string())
                .chain(row.iter().map(|&x| rpvf::export::format_number(x)))
                .collect()
        })
        .collect();
    report.push_artifact("correlations.csv", table_csv(&header, &rows));
    report.warnings.extend(w.warnings);
    report.warnings.extend(wr.warnings);
    Ok(report)
}

/// Outcome of one basis arm scored on the true MDP.
struct Arm {
    policy: Policy,
    sum_j: f64,
    values: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn learn(
    mdp: &TabularMdp,
    samples: &SampleSet,
    basis: &BasisSet,
    pi0: &Policy,
    lc: &LearnerConfig,
) -> Result<Arm> {
    let outcome = rpi(samples, basis, pi0, lc)?;
    let j = exact_policy_evaluation(mdp, &outcome.policy)?;
    Ok(Arm {
        sum_j: j.total(),
        values: j.values.iter().copied().collect(),
        iterations: outcome.iterations(),
        converged: outcome.converged,
        policy: outcome.policy,
    })
}

/// Oracle, PVF, PVF with shaped rewards and RPVF on the open goal grid.
pub fn run_goalgrid_compare(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(ExperimentId::GoalgridCompare);
    let spec = make_open_goal_grid(config.grid_size, DEFAULT_GOAL_REWARD)?;
    let (mdp, vi) = solve(&spec, config.alpha)?;
    let star = vi.values.total();
    let graph: StateGraph = build_state_graph(&spec)?;
    let samples = instance_samples(config, &spec, &mdp, config.seed)?;
    let psi: PotentialFunction = potential_psi(&spec)?;
    let shaped = shape_samples(&samples, &psi, config.alpha)?;
    let pvf = top_k_eigenbasis(&build_matrix(&graph, SimilarityKind::RandomWalk)?, config.k)?;
    let rpvf = top_k_eigenbasis(&reward_diffusion_matrix(&graph, config.beta)?, config.k)?;
    let pi0 = Policy::uniform(mdp.n_states(), N_ACTIONS);
    let lc = learner_config(config, config.seed);

    let arms = [
        ("pvf", learn(&mdp, &samples, &pvf, &pi0, &lc)?),
        ("pvf-shaped", learn(&mdp, &shaped, &pvf, &pi0, &lc)?),
        ("rpvf", learn(&mdp, &samples, &rpvf, &pi0, &lc)?),
    ];

    report.rows.push(RunRow {
        instance: config.seed,
        basis: "oracle".into(),
        policy_seed: None,
        sum_j: star,
        sum_j_star: star,
        iterations: vi.iterations(),
        converged: true,
    });
    report.push_metric("sum_j_star", star, Some(PUBLISHED_GOAL_OPTIMAL));
    report.push_metric(
        "sample_coverage",
        samples.coverage(mdp.n_states(), N_ACTIONS) as f64 / (mdp.n_states() * N_ACTIONS) as f64,
        None,
    );
    let j_star: Vec<f64> = vi.values.values.iter().copied().collect();
    report.push_artifact("value_oracle.csv", grid_csv(&spec, &j_star));
    report.push_artifact("policy_oracle.csv", policy_csv(&spec, &vi.policy));

    for (name, arm) in &arms {
        let published = match *name {
            "pvf" | "pvf-shaped" => Some(PUBLISHED_GOAL_PVF),
            _ => Some(PUBLISHED_GOAL_RPVF),
        };
        let key = name.replace('-', "_");
        report.push_metric(format!("sum_j_{key}"), arm.sum_j, published);
        report.push_metric(
            format!("ratio_{key}"),
            arm.sum_j / star,
            published.map(|p| p / PUBLISHED_GOAL_OPTIMAL),
        );
        report.rows.push(RunRow {
            instance: config.seed,
            basis: name.to_string(),
            policy_seed: None,
            sum_j: arm.sum_j,
            sum_j_star: star,
            iterations: arm.iterations,
            converged: arm.converged,
        });
        report.push_artifact(format!("value_{key}.csv"), grid_csv(&spec, &arm.values));
        report.push_artifact(format!("policy_{key}.csv"), policy_csv(&spec, &arm.policy));
    }
    report.push_artifact("basis_pvf.csv", matrix_csv(&pvf.phi));
    report.push_artifact("basis_rpvf.csv", matrix_csv(&rpvf.phi));
    report.warnings.extend(pvf.warnings);
    report.warnings.extend(rpvf.warnings);
    Ok(report)
}

/// PVF against RPVF on seeded mine grids, averaged over random initial
/// policies.
pub fn run_minegrid_bench(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(ExperimentId::MinegridBench);
    let policy_seeds = config.policy_seeds();
    let mut bars = Vec::new();
    let mut wins = 0usize;
    let (mut pvf_total, mut rpvf_total) = (0.0, 0.0);

    for (number, seed) in (1..).zip(config.instance_seeds()) {
        let spec = make_mine_grid(config.grid_size, config.mines, seed)?;
        let (mdp, vi) = solve(&spec, config.alpha)?;
        let star = vi.values.total();
        let graph: StateGraph = build_state_graph(&spec)?;
        let samples = instance_samples(config, &spec, &mdp, seed)?;
        let pvf = top_k_eigenbasis(&build_matrix(&graph, SimilarityKind::RandomWalk)?, config.k)?;
        let rpvf = top_k_eigenbasis(&reward_diffusion_matrix(&graph, config.beta)?, config.k)?;
        let lc = learner_config(config, seed);

        let mut means = [0.0f64; 2];
        for &ps in &policy_seeds {
            let pi0 = Policy::random_deterministic(mdp.n_states(), N_ACTIONS, ps)?;
            for (slot, (name, basis)) in [("pvf", &pvf), ("rpvf", &rpvf)].into_iter().enumerate() {
                let arm = learn(&mdp, &samples, basis, &pi0, &lc)?;
                means[slot] += arm.sum_j;
                report.rows.push(RunRow {
                    instance: seed,
                    basis: name.into(),
                    policy_seed: Some(ps),
                    sum_j: arm.sum_j,
                    sum_j_star: star,
                    iterations: arm.iterations,
                    converged: arm.converged,
                });
            }
        }
        let [pvf_mean, rpvf_mean] = means.map(|m| m / policy_seeds.len() as f64);
        if rpvf_mean > pvf_mean {
            wins += 1;
        }
        pvf_total += pvf_mean;
        rpvf_total += rpvf_mean;
        let published = PUBLISHED_MINE_BARS.iter().find(|b| b.0 == number);
        report.push_metric(
            format!("instance_{number}_pvf_mean"),
            pvf_mean,
            published.map(|b| b.1),
        );
        report.push_metric(
            format!("instance_{number}_rpvf_mean"),
            rpvf_mean,
            published.map(|b| b.2),
        );
        bars.push(vec![
            number.to_string(),
            seed.to_string(),
            rpvf::export::format_number(star),
            rpvf::export::format_number(pvf_mean),
            rpvf::export::format_number(rpvf_mean),
        ]);
        report.push_artifact(format!("instance_{number}_map.txt"), spec.to_map_string());
        report.warnings.extend(pvf.warnings);
        report.warnings.extend(rpvf.warnings);
    }
    let n = config.instances as f64;
    report.push_metric("instances", n, None);
    report.push_metric("rpvf_wins", wins as f64, Some(PUBLISHED_MINE_WINS));
    report.push_metric("pvf_mean", pvf_total / n, None);
    report.push_metric("rpvf_mean", rpvf_total / n, None);
    report.push_artifact(
        "bars.csv",
        table_csv(
            &["instance", "seed", "sum_j_star", "pvf_mean", "rpvf_mean"],
            &bars,
        ),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_picks_the_best_permutation() {
        let c = vec![
            vec![0.1, 0.9, 0.0],
            vec![0.8, 0.2, 0.0],
            vec![0.0, 0.0, 0.5],
        ];
        assert_eq!(best_assignment(&c), vec![1, 0, 2]);
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(best_assignment(&id), vec![0, 1]);
    }

    #[test]
    fn policy_grid_layout() {
        let spec = GridSpec::open(2, 2).unwrap();
        let p = Policy::deterministic(vec![0, 1, 2, 3], 4).unwrap();
        assert_eq!(policy_csv(&spec, &p), "2,3\n0,1\n");
    }
}
