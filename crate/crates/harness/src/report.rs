//! Experiment results and their on-disk form.

use std::fs;
use std::io;
use std::path::Path;

use rpvf::export::format_number;
use rpvf::{Error, Result};

use crate::config::{ExperimentConfig, ExperimentId};

/// Slack allowed when checking a learned policy against the optimum.
pub const DOMINANCE_TOL: f64 = 1e-6;

/// One learned (or oracle) policy scored by exact evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub instance: u64,
    pub basis: String,
    pub policy_seed: Option<u64>,
    pub sum_j: f64,
    pub sum_j_star: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A named scalar, optionally paired with the published figure it mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub reference: Option<f64>,
}

/// A file written next to `summary.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub rows: Vec<RunRow>,
    pub metrics: Vec<Metric>,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn new(experiment: ExperimentId) -> Self {
        Self {
            experiment,
            rows: Vec::new(),
            metrics: Vec::new(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn push_metric(&mut self, name: impl Into<String>, value: f64, reference: Option<f64>) {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            reference,
        });
    }

    pub fn push_artifact(&mut self, name: impl Into<String>, contents: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents,
        });
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.value)
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.contents.as_str())
    }

    /// Checks that no row beats the optimum by more than [`DOMINANCE_TOL`].
    pub fn check_dominance(&self) -> Result<()> {
        match self
            .rows
            .iter()
            .find(|r| r.sum_j > r.sum_j_star + DOMINANCE_TOL)
        {
            Some(r) => Err(Error::InvalidArgument(format!(
                "instance {} basis {}: ΣJ {} exceeds ΣJ* {}",
                r.instance, r.basis, r.sum_j, r.sum_j_star
            ))),
            None => Ok(()),
        }
    }

    /// Metrics block, then run rows, then warnings; tab separated.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\treference\n");
        for m in &self.metrics {
            let reference = m.reference.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                m.name,
                format_number(m.value),
                reference
            ));
        }
        if !self.rows.is_empty() {
            out.push_str(
                "\ninstance\tbasis\tpolicy_seed\tsum_j\tsum_j_star\titerations\tconverged\n",
            );
            for r in &self.rows {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.instance,
                    r.basis,
                    r.policy_seed.map(|s| s.to_string()).unwrap_or_default(),
                    format_number(r.sum_j),
                    format_number(r.sum_j_star),
                    r.iterations,
                    r.converged
                ));
            }
        }
        if !self.warnings.is_empty() {
            out.push('\n');
            for w in &self.warnings {
                out.push_str(&format!("warning\t{w}\n"));
            }
        }
        out
    }

    /// Writes `summary.tsv`, `manifest.txt` and every artifact into `dir`.
    pub fn write_to(&self, dir: &Path, config: &ExperimentConfig) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.tsv"), self.summary_tsv())?;
        fs::write(dir.join("manifest.txt"), config.manifest())?;
        for a in &self.artifacts {
            fs::write(dir.join(&a.name), &a.contents)?;
        }
        Ok(())
    }

    /// Human-readable metric table for the terminal.
    pub fn render(&self) -> String {
        let width = self.metrics.iter().map(|m| m.name.len()).max().unwrap_or(0);
        let mut out = format!("== {} ==\n", self.experiment);
        for m in &self.metrics {
            out.push_str(&format!("{:width$}  {:>14.6}", m.name, m.value));
            match m.reference {
                Some(r) if r.fract() == 0.0 => out.push_str(&format!("   (published: {r})")),
                Some(r) => out.push_str(&format!("   (published: {r:.3})")),
                None => {}
            }
            out.push('\n');
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sum_j: f64) -> RunRow {
        RunRow {
            instance: 3,
            basis: "pvf".into(),
            policy_seed: Some(9),
            sum_j,
            sum_j_star: 100.0,
            iterations: 4,
            converged: true,
        }
    }

    #[test]
    fn dominance() {
        let mut r = ExperimentReport::new(ExperimentId::MinegridBench);
        r.rows.push(row(100.0 + 1e-7));
        r.check_dominance().unwrap();
        r.rows.push(row(100.1));
        assert!(r.check_dominance().is_err());
    }

    #[test]
    fn summary_layout() {
        let mut r = ExperimentReport::new(ExperimentId::GoalgridCompare);
        r.push_metric("sum_j_star", 1852.25, Some(1887.0));
        r.push_metric("ratio", 0.5, None);
        r.rows.push(row(50.0));
        r.warnings.push("something odd".into());
        let tsv = r.summary_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "metric\tvalue\treference");
        assert_eq!(lines[1], "sum_j_star\t1.8522500000000000e3\t1887");
        assert_eq!(lines[2], "ratio\t5.0000000000000000e-1\t");
        assert_eq!(lines[3], "");
        assert!(lines[4].starts_with("instance\tbasis"));
        assert_eq!(
            lines[5],
            "3\tpvf\t9\t5.0000000000000000e1\t1.0000000000000000e2\t4\ttrue"
        );
        assert_eq!(lines[7], "warning\tsomething odd");
        assert_eq!(r.metric("ratio"), Some(0.5));
        assert!(r.render().contains("(published: 1887)"));
    }
}
