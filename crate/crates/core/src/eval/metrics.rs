use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::normalize::normalize_answer;

/// Normalized equality against the gold answer or any alias.
pub fn match_answer<S: AsRef<str>>(predicted: &str, gold: &str, aliases: &[S]) -> bool {
    let p = normalize_answer(predicted);
    !p.is_empty()
        && std::iter::once(gold)
            .chain(aliases.iter().map(AsRef::as_ref))
            .any(|g| normalize_answer(g) == p)
}

/// Result of running one phrasing of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhrasingOutcome {
    pub final_correct: bool,
    /// Every hop answer matches the golden path, aliases allowed.
    pub hops_correct: bool,
    /// Every hop answer matches the golden path without aliases.
    pub hops_exact: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub hop_count: usize,
    pub edit_count: usize,
    pub multi_hop_correct: bool,
    pub hop_wise_correct: bool,
    pub hop_wise_exact: bool,
    /// Index of the first phrasing whose final answer was right.
    pub counted_phrasing: Option<usize>,
}

impl CaseOutcome {
    /// A case is right when any phrasing's final answer is right; its hop
    /// accuracy is judged on the first such phrasing only.
    pub fn from_phrasings(
        case_id: impl Into<String>,
        hop_count: usize,
        edit_count: usize,
        phrasings: &[PhrasingOutcome],
    ) -> Self {
        let counted = phrasings.iter().position(|p| p.final_correct && !p.failed);
        let chosen = counted.map(|i| phrasings[i]);
        Self {
            case_id: case_id.into(),
            hop_count,
            edit_count,
            multi_hop_correct: chosen.is_some(),
            hop_wise_correct: chosen.is_some_and(|p| p.hops_correct),
            hop_wise_exact: chosen.is_some_and(|p| p.hops_exact),
            counted_phrasing: counted,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub n_cases: usize,
    pub m_correct: usize,
    pub h_correct: usize,
    pub m_acc: f64,
    pub h_acc: f64,
}

impl Breakdown {
    fn add(&mut self, case: &CaseOutcome) {
        self.n_cases += 1;
        self.m_correct += usize::from(case.multi_hop_correct);
        self.h_correct += usize::from(case.hop_wise_correct);
    }

    fn finish(&mut self) {
        let ratio = |k: usize| {
            if self.n_cases == 0 {
                0.0
            } else {
                k as f64 / self.n_cases as f64
            }
        };
        self.m_acc = ratio(self.m_correct);
        self.h_acc = ratio(self.h_correct);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dataset: String,
    pub alpha: f64,
    pub k: String,
    pub conflict_mode: String,
    pub schedule: String,
    pub plan_source: String,
    pub retrieval_mode: String,
    pub oracle: Option<String>,
    pub relation_scorer: String,
    pub multi_phrasing_rule: String,
    pub answer_matching: String,
    pub n_batches: usize,
    pub facts_per_batch: Vec<usize>,
    pub skipped_aliases: usize,
    pub ingest_failures: usize,
    pub integrity_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub phrasing: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_cases: usize,
    pub m_acc: f64,
    pub h_acc: f64,
    pub h_acc_exact: f64,
    pub m_correct: usize,
    pub h_correct: usize,
    pub per_hop: BTreeMap<usize, Breakdown>,
    pub per_edit_count: BTreeMap<usize, Breakdown>,
    pub metadata: RunMetadata,
    pub failures: Vec<CaseFailure>,
    pub cases: Vec<CaseOutcome>,
}

#[derive(Debug, thiserror::Error)]
#[error("hop-wise accuracy {h_acc} exceeds multi-hop accuracy {m_acc}")]
pub struct MetricLawViolation {
    pub m_acc: f64,
    pub h_acc: f64,
}

impl MetricsReport {
    pub fn from_cases(
        cases: Vec<CaseOutcome>,
        failures: Vec<CaseFailure>,
        metadata: RunMetadata,
    ) -> Result<Self, MetricLawViolation> {
        let mut all = Breakdown::default();
        let mut exact = 0usize;
        let mut per_hop: BTreeMap<usize, Breakdown> = BTreeMap::new();
        let mut per_edit_count: BTreeMap<usize, Breakdown> = BTreeMap::new();
        for case in &cases {
            all.add(case);
            exact += usize::from(case.hop_wise_exact);
            per_hop.entry(case.hop_count).or_default().add(case);
            per_edit_count.entry(case.edit_count).or_default().add(case);
        }
        all.finish();
        per_hop.values_mut().for_each(Breakdown::finish);
        per_edit_count.values_mut().for_each(Breakdown::finish);
        let report = Self {
            n_cases: all.n_cases,
            m_acc: all.m_acc,
            h_acc: all.h_acc,
            h_acc_exact: if all.n_cases == 0 {
                0.0
            } else {
                exact as f64 / all.n_cases as f64
            },
            m_correct: all.m_correct,
            h_correct: all.h_correct,
            per_hop,
            per_edit_count,
            metadata,
            failures,
            cases,
        };
        report.check_metric_law()?;
        Ok(report)
    }

    pub fn check_metric_law(&self) -> Result<(), MetricLawViolation> {
        let broken = self.h_correct > self.m_correct
            || self.h_acc > self.m_acc
            || self.h_acc_exact > self.m_acc
            || self
                .per_hop
                .values()
                .chain(self.per_edit_count.values())
                .any(|b| b.h_correct > b.m_correct);
        if broken {
            return Err(MetricLawViolation {
                m_acc: self.m_acc,
                h_acc: self.h_acc,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let pct = |x: f64| format!("{:6.2}", 100.0 * x);
        let mut out = String::new();
        let m = &self.metadata;
        let _ = writeln!(
            out,
            "dataset={} k={} alpha={} mode={} schedule={} plan={}",
            m.dataset, m.k, m.alpha, m.conflict_mode, m.schedule, m.plan_source
        );
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>8}",
            "split", "cases", "M-Acc", "H-Acc"
        );
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>8}",
            "all",
            self.n_cases,
            pct(self.m_acc),
            pct(self.h_acc)
        );
        for (hops, b) in &self.per_hop {
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>8} {:>8}",
                format!("{hops}-hop"),
                b.n_cases,
                pct(b.m_acc),
                pct(b.h_acc)
            );
        }
        for (edits, b) in &self.per_edit_count {
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>8} {:>8}",
                format!("{edits}-edit"),
                b.n_cases,
                pct(b.m_acc),
                pct(b.h_acc)
            );
        }
        let _ = writeln!(
            out,
            "H-Acc without aliases: {}",
            pct(self.h_acc_exact).trim()
        );
        if !self.failures.is_empty() {
            let _ = writeln!(out, "{} failed runs", self.failures.len());
        }
        out
    }
}
