use std::fs;
use std::process::Command;

use rpvf::grid::{build_state_graph, make_wall_penalty_grid};
use rpvf::spectral::{build_matrix, top_k_eigenbasis, SimilarityKind};
use rpvf::StateGraph;
use rpvf_harness::{parse_config_text, run, ExperimentConfig, ExperimentId, RewardIndex};

fn config(id: ExperimentId, pairs: &[(&str, &str)]) -> ExperimentConfig {
    let pairs: Vec<(String, String)> = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    ExperimentConfig::resolve(id, &pairs).unwrap()
}

#[test]
fn goalgrid_rows_and_profiles() {
    let report = run(&config(ExperimentId::GoalgridCompare, &[])).unwrap();
    let bases: Vec<&str> = report.rows.iter().map(|r| r.basis.as_str()).collect();
    assert_eq!(bases, ["oracle", "pvf", "pvf-shaped", "rpvf"]);
    let star = report.metric("sum_j_star").unwrap();
    assert_eq!(report.rows[0].sum_j, star);
    assert!(report.rows.iter().all(|r| r.sum_j <= star + 1e-6));
    assert_eq!(report.metric("sample_coverage"), Some(1.0));
    for name in [
        "value_oracle.csv",
        "value_pvf.csv",
        "value_pvf_shaped.csv",
        "value_rpvf.csv",
    ] {
        let csv = report.artifact(name).unwrap();
        assert_eq!(csv.lines().count(), 5, "{name}");
        assert!(csv.lines().all(|l| l.split(',').count() == 5));
    }
    // Top-right cell of the oracle profile is the goal: 10 / (1 − α).
    let top: f64 = report
        .artifact("value_oracle.csv")
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .split(',')
        .next_back()
        .unwrap()
        .parse()
        .unwrap();
    assert!((top - 100.0).abs() < 1e-6);
}

#[test]
fn minegrid_arms_coincide_without_reward_weighting() {
    let c = config(
        ExperimentId::MinegridBench,
        &[("beta", "0"), ("instances", "2"), ("policies", "3")],
    );
    let report = run(&c).unwrap();
    assert_eq!(report.rows.len(), 2 * 3 * 2);
    for pair in report.rows.chunks(2) {
        assert_eq!(pair[0].basis, "pvf");
        assert_eq!(pair[1].basis, "rpvf");
        assert_eq!(pair[0].sum_j, pair[1].sum_j);
    }
    assert_eq!(report.metric("rpvf_wins"), Some(0.0));
    let bars = report.artifact("bars.csv").unwrap();
    assert_eq!(bars.lines().count(), 3);
}

#[test]
fn departure_indexing_keeps_the_oracle() {
    let entry = run(&config(
        ExperimentId::MinegridBench,
        &[("instances", "2"), ("policies", "2")],
    ))
    .unwrap();
    let mut c = config(
        ExperimentId::MinegridBench,
        &[("instances", "2"), ("policies", "2")],
    );
    c.reward_index = RewardIndex::Departure;
    let departure = run(&c).unwrap();
    for (a, b) in entry.rows.iter().zip(&departure.rows) {
        assert_eq!(a.sum_j_star, b.sum_j_star);
    }
}

#[test]
fn threeroom_basis_without_reward_weighting_is_the_open_grid_basis() {
    let c = config(ExperimentId::ThreeroomBasis, &[("beta", "0")]);
    let report = run(&c).unwrap();
    let open: StateGraph = build_state_graph(&make_wall_penalty_grid(-1.0).unwrap()).unwrap();
    let basis =
        top_k_eigenbasis(&build_matrix(&open, SimilarityKind::RandomWalk).unwrap(), 5).unwrap();
    for i in 0..5 {
        let got = report.metric(&format!("wr_eigenvalue_{}", i + 1)).unwrap();
        assert!((got - basis.eigenvalues[i]).abs() < 1e-12);
    }
    let v1: Vec<f64> = report
        .artifact("wr_eigenvector_1.csv")
        .unwrap()
        .lines()
        .flat_map(|l| {
            l.split(',')
                .map(|x| x.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(v1.len(), 1260);
    let c0 = 1.0 / 1260f64.sqrt();
    assert!(v1.iter().all(|x| (x - c0).abs() < 1e-10));
    assert!(report.metric("w_vector_1_spread").unwrap() < 1e-10);
    assert_eq!(
        report.artifact("correlations.csv").unwrap().lines().count(),
        4
    );
}

#[test]
fn cli_merges_config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.cfg");
    fs::write(&config_path, "# goal grid\nalpha=0.8\nk=3\nseed=5\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_rpvf"))
        .arg("goalgrid-compare")
        .arg("--config")
        .arg(&config_path)
        .args(["--k", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let out = dir.path().join("goalgrid-compare");
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    let pairs = parse_config_text(&manifest).unwrap();
    let resolved = ExperimentConfig::resolve(ExperimentId::GoalgridCompare, &pairs).unwrap();
    assert_eq!((resolved.alpha, resolved.k, resolved.seed), (0.8, 5, 5));
    assert!(manifest.contains(&format!("version={}", rpvf::VERSION)));
    let summary = fs::read_to_string(out.join("summary.tsv")).unwrap();
    assert!(summary.starts_with("metric\tvalue\treference\n"));
    assert!(out.join("value_rpvf.csv").exists());
    assert!(String::from_utf8_lossy(&status.stdout).contains("goalgrid-compare"));
}

#[test]
fn cli_rejects_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_rpvf"))
        .args(["minegrid-bench", "--instances", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("at least 2 instances"));
}
