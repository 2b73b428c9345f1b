//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rpvf::grid::{grid_to_mdp, make_open_goal_grid, DEFAULT_GOAL_REWARD};
use rpvf::learner::{lstdq, q_from_weights, shape_mdp, Sample};
use rpvf::mdp::{
    exact_policy_evaluation, spectral_value_expansion, value_iteration, QFunction, VI_MAX_ITER,
    VI_TOLERANCE,
};
use rpvf::spectral::{build_matrix, reward_diffusion_matrix, SimilarityKind};
use rpvf::{
    FeatureMap, LearnerConfig, Policy, PotentialFunction, SampleSet, StateGraph, TabularMdp,
};
use rpvf_harness::{run, ExperimentConfig, ExperimentId, ExperimentReport};

const ORACLE_TOL: f64 = 1e-8;
const ORACLE_BUDGET: Duration = Duration::from_secs(1);
const IDENTITY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const STOCHASTIC_TOL: f64 = 1e-12;
const BETA_ZERO_TOL: f64 = 1e-15;
const SPECTRAL_BUDGET: Duration = Duration::from_secs(1);
const EXPANSION_TOL: f64 = 1e-8;
const LSTDQ_TOL: f64 = 1e-6;
const ARGMAX_TOL: f64 = 1e-8;
const RPVF_MIN_RATIO: f64 = 0.85;
const PVF_MAX_RATIO: f64 = 0.75;
const GOALGRID_BUDGET: Duration = Duration::from_secs(30);
const MIN_RPVF_WINS: f64 = 8.0;
const MINEGRID_BUDGET: Duration = Duration::from_secs(300);
const KERNEL_MIN_CORRELATION: f64 = 0.9;
const MATCHED_MIN_CORRELATION: f64 = 0.8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_mdp(rng: &mut ChaCha8Rng) -> TabularMdp {
    let n = rng.gen_range(1..=10);
    let p: Vec<DMatrix<f64>> = (0..3)
        .map(|_| {
            let mut m = DMatrix::from_fn(n, n, |_, _| {
                if rng.gen_bool(0.4) {
                    0.0
                } else {
                    rng.gen_range(0.01..1.0)
                }
            });
            for mut row in m.row_iter_mut() {
                if row.sum() == 0.0 {
                    row[0] = 1.0;
                }
                let total = row.sum();
                row /= total;
            }
            m
        })
        .collect();
    let rewards = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
    TabularMdp::from_dense(&p, rewards, rng.gen_range(0.5..0.95)).unwrap()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut contraction_ok = true;
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng);
        let vi = value_iteration(&mdp, VI_TOLERANCE, VI_MAX_ITER).unwrap();
        let j = exact_policy_evaluation(&mdp, &vi.policy).unwrap();
        worst = worst.max(vi.values.max_abs_diff(&j));
        for _ in 0..5 {
            let (n, a) = (mdp.n_states(), mdp.n_actions());
            let q1 = QFunction::new(DMatrix::from_fn(n, a, |_, _| rng.gen_range(-10.0..10.0)));
            let q2 = QFunction::new(DMatrix::from_fn(n, a, |_, _| rng.gen_range(-10.0..10.0)));
            let before = q1.max_abs_diff(&q2);
            let after = mdp
                .bellman_backup(&q1)
                .max_abs_diff(&mdp.bellman_backup(&q2));
            contraction_ok &= after <= mdp.discount() * before + 1e-12;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= ORACLE_TOL && contraction_ok && elapsed < ORACLE_BUDGET,
        format!("max |VI − exact| = {worst:.2e}, contraction {contraction_ok}, {elapsed:.2?}"),
    )
}

fn random_connected_graph(rng: &mut ChaCha8Rng) -> StateGraph {
    let n = rng.gen_range(2..=50);
    let mut adj = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        adj[(i, j)] = 1.0;
        adj[(j, i)] = 1.0;
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
    }
    let rewards = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    StateGraph::from_adjacency(&adj, rewards).unwrap()
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut identity, mut min_eig, mut stochastic, mut beta_zero) =
        (0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let g = random_connected_graph(&mut rng);
        let n = g.n();
        let a = g.adjacency_matrix();
        let d_inv_sqrt = DVector::from_fn(n, |i, _| 1.0 / (g.degree(i) as f64).sqrt());
        let normalized = build_matrix(&g, SimilarityKind::NormalizedLaplacian)
            .unwrap()
            .data;
        let lhs = DMatrix::identity(n, n) - &normalized;
        let rhs = DMatrix::from_fn(n, n, |i, j| d_inv_sqrt[i] * a[(i, j)] * d_inv_sqrt[j]);
        identity = identity.max((lhs - rhs).amax());
        for kind in [
            SimilarityKind::CombinatorialLaplacian,
            SimilarityKind::NormalizedLaplacian,
        ] {
            let l = build_matrix(&g, kind).unwrap().data;
            min_eig = min_eig.min(l.symmetric_eigen().eigenvalues.min());
        }
        let w = build_matrix(&g, SimilarityKind::RandomWalk).unwrap();
        let wr = reward_diffusion_matrix(&g, rng.gen_range(0.0..2.0)).unwrap();
        stochastic = stochastic.max(w.row_sum_error()).max(wr.row_sum_error());
        let wr0 = reward_diffusion_matrix(&g, 0.0).unwrap();
        beta_zero = beta_zero.max((wr0.data - w.data).amax());
    }
    let elapsed = start.elapsed();
    verdict(
        identity <= IDENTITY_TOL
            && min_eig >= -PSD_TOL
            && stochastic <= STOCHASTIC_TOL
            && beta_zero <= BETA_ZERO_TOL
            && elapsed < SPECTRAL_BUDGET,
        format!(
            "identity {identity:.1e}, min Laplacian eigenvalue {min_eig:.1e}, row-sum {stochastic:.1e}, \
             β=0 gap {beta_zero:.1e}, {elapsed:.2?}"
        ),
    )
}

fn criterion_3() -> Verdict {
    let n = 10;
    let p = DMatrix::from_fn(n, n, |i, j| {
        if (i + 1) % n == j || (j + 1) % n == i {
            0.5
        } else {
            0.0
        }
    });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let alpha = 0.9;
    let exact = (DMatrix::identity(n, n) - &p * alpha)
        .lu()
        .solve(&r)
        .unwrap();
    let errors: Vec<f64> = (1..=n)
        .map(|k| (spectral_value_expansion(&p, &r, alpha, k).unwrap().values - &exact).norm())
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let full = errors[n - 1];
    verdict(
        full <= EXPANSION_TOL && monotone,
        format!(
            "full-rank error {full:.1e}, monotone {monotone}, k=1 error {:.3}",
            errors[0]
        ),
    )
}

fn criterion_4() -> Verdict {
    let spec = make_open_goal_grid(5, DEFAULT_GOAL_REWARD).unwrap();
    let mdp: TabularMdp = grid_to_mdp(&spec, 0.9).unwrap();
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let samples: SampleSet = SampleSet {
        samples: (0..n)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| Sample {
                s,
                a,
                r: mdp.reward(s, a),
                s_next: mdp.successors(s, a)[0].0,
            })
            .collect(),
        seed: 0,
        behavior: "exhaustive".into(),
    };
    let features = FeatureMap::tabular(n, na).unwrap();
    let config = LearnerConfig::new(0.9, n);
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let policy = Policy::random_deterministic(n, na, seed).unwrap();
        let w = lstdq(&samples, &features, &policy, &config).unwrap();
        let exact = mdp.q_from_values(&exact_policy_evaluation(&mdp, &policy).unwrap());
        worst = worst.max(q_from_weights(&features, &w).max_abs_diff(&exact));
    }
    verdict(
        worst <= LSTDQ_TOL,
        format!("max |Q̂ − Q^π| = {worst:.1e} over 5 policies"),
    )
}

fn optimal_action_sets(mdp: &TabularMdp) -> Vec<Vec<usize>> {
    let q = value_iteration(mdp, VI_TOLERANCE, VI_MAX_ITER)
        .unwrap()
        .q
        .values;
    q.row_iter()
        .map(|row| {
            let best = row.max();
            (0..row.len())
                .filter(|&a| row[a] >= best - ARGMAX_TOL)
                .collect()
        })
        .collect()
}

fn criterion_5() -> Verdict {
    let spec = make_open_goal_grid(5, DEFAULT_GOAL_REWARD).unwrap();
    let mdp: TabularMdp = grid_to_mdp(&spec, 0.9).unwrap();
    let original = optimal_action_sets(&mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatched = 0;
    for _ in 0..10 {
        let psi = PotentialFunction::new(DVector::from_fn(mdp.n_states(), |_, _| {
            rng.gen_range(-20.0..20.0)
        }))
        .unwrap();
        let shaped = shape_mdp(&mdp, &psi).unwrap();
        mismatched += optimal_action_sets(&shaped)
            .iter()
            .zip(&original)
            .filter(|(a, b)| a != b)
            .count();
    }
    verdict(
        mismatched == 0,
        format!("{mismatched} state(s) with a different optimal action set"),
    )
}

fn criterion_6(report: &ExperimentReport, elapsed: Duration) -> Verdict {
    let m = |k: &str| report.metric(k).unwrap();
    let (star, pvf, shaped, rpvf) = (
        m("sum_j_star"),
        m("sum_j_pvf"),
        m("sum_j_pvf_shaped"),
        m("sum_j_rpvf"),
    );
    let below = [pvf, shaped, rpvf].iter().all(|&x| x < star);
    let pass = rpvf > pvf
        && rpvf > shaped
        && below
        && rpvf / star >= RPVF_MIN_RATIO
        && pvf / star <= PVF_MAX_RATIO
        && elapsed < GOALGRID_BUDGET;
    verdict(
        pass,
        format!(
            "ΣJ* {star:.1}, PVF {pvf:.1} ({:.3}), PVF+shaping {shaped:.1} ({:.3}), RPVF {rpvf:.1} ({:.3}), {elapsed:.2?}",
            pvf / star,
            shaped / star,
            rpvf / star
        ),
    )
}

fn criterion_7(report: &ExperimentReport, elapsed: Duration) -> Verdict {
    let wins = report.metric("rpvf_wins").unwrap();
    verdict(
        wins >= MIN_RPVF_WINS && elapsed < MINEGRID_BUDGET,
        format!(
            "RPVF wins {wins} of {} (mean PVF {:.1}, mean RPVF {:.1}), {elapsed:.2?}",
            report.metric("instances").unwrap(),
            report.metric("pvf_mean").unwrap(),
            report.metric("rpvf_mean").unwrap()
        ),
    )
}

fn criterion_8(report: &ExperimentReport) -> Verdict {
    let best = report.metric("best_abs_pearson").unwrap();
    verdict(
        best >= KERNEL_MIN_CORRELATION,
        format!(
            "best |r| {best:.3} (vector 1 {:.3}, vector 2 {:.3})",
            report.metric("abs_pearson_1").unwrap(),
            report.metric("abs_pearson_2").unwrap()
        ),
    )
}

fn criterion_9(report: &ExperimentReport) -> Verdict {
    let matched: Vec<String> = report
        .metrics
        .iter()
        .filter(|m| m.name.starts_with("matched_") && m.name.contains("_to_"))
        .map(|m| format!("{} {:.3}", &m.name["matched_".len()..], m.value))
        .collect();
    let min = report.metric("matched_min").unwrap();
    verdict(
        min >= MATCHED_MIN_CORRELATION && report.metric("beta_times_abs_penalty").unwrap() >= 5.0,
        format!("matched |r|: {}; min {min:.3}", matched.join(", ")),
    )
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.txt")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn criterion_10(first: &[(ExperimentConfig, ExperimentReport)]) -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut differing = Vec::new();
    for (config, report) in first {
        let mut c1 = config.clone();
        c1.out = a.path().to_path_buf();
        report.write_to(&c1.output_dir(), &c1).unwrap();
        let mut c2 = config.clone();
        c2.out = b.path().to_path_buf();
        let again = run(&c2).unwrap();
        again.write_to(&c2.output_dir(), &c2).unwrap();
        let (x, y) = (
            read_outputs(&c1.output_dir()),
            read_outputs(&c2.output_dir()),
        );
        if x.is_empty() || x != y {
            differing.push(config.experiment.name());
        }
    }
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            "summary.tsv and CSVs byte-identical across reruns of all four experiments".to_string()
        } else {
            format!("outputs differ for {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let mut verdicts: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut record = |id: u8, name: &'static str, v: Verdict| {
        println!(
            "criterion {id:>2} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        verdicts.push((id, name, v));
    };
    record(1, "oracle suite", criterion_1());
    record(2, "spectral identities", criterion_2());
    record(3, "spectral expansion", criterion_3());
    record(4, "LSTDQ oracle equivalence", criterion_4());
    record(5, "shaping invariance", criterion_5());

    let mut runs = Vec::new();
    let mut timed = |id: ExperimentId| {
        let config = ExperimentConfig::defaults(id);
        let start = Instant::now();
        let report = run(&config).unwrap();
        let elapsed = start.elapsed();
        runs.push((config, report.clone()));
        (report, elapsed)
    };
    let (goal, goal_time) = timed(ExperimentId::GoalgridCompare);
    let (mine, mine_time) = timed(ExperimentId::MinegridBench);
    let (kernel, _) = timed(ExperimentId::KernelEig);
    let (rooms, _) = timed(ExperimentId::ThreeroomBasis);
    record(6, "goal-grid comparison", criterion_6(&goal, goal_time));
    record(7, "mine-grid benchmark", criterion_7(&mine, mine_time));
    record(8, "kernel eigenvector", criterion_8(&kernel));
    record(9, "wall-penalty equivalence", criterion_9(&rooms));
    record(10, "determinism", criterion_10(&runs));

    let failed: Vec<String> = verdicts
        .iter()
        .filter(|(_, _, v)| !v.pass)
        .map(|(id, _, _)| id.to_string())
        .collect();
    println!(
        "acceptance: {} of {} criteria passed",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
