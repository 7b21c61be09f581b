//! Homogeneity, completeness and V-measure against ground-truth labels.
//!
//! Entropies use the natural logarithm with `0 ln 0 = 0`. A labeling with a
//! single true class is perfectly homogeneous and a single predicted cluster
//! is perfectly complete.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::SecurityGroups;

pub const EVAL_REPORT_HEADER: &str =
    "dataset,asset_qty,group_qty,suggested_group_qty,runtime_s,homogeneity,completeness,v_measure";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable<C: Ord, K: Ord> {
    pub counts: BTreeMap<(C, K), usize>,
    pub n: usize,
    pub class_totals: BTreeMap<C, usize>,
    pub group_totals: BTreeMap<K, usize>,
}

pub fn contingency<C, K>(true_labels: &[C], predicted: &[K]) -> Result<ContingencyTable<C, K>>
where
    C: Ord + Clone,
    K: Ord + Clone,
{
    if true_labels.len() != predicted.len() {
        return Err(Error::Eval(format!(
            "label lists differ in length: {} vs {}",
            true_labels.len(),
            predicted.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::Eval("no labels to compare".into()));
    }
    let mut table = ContingencyTable {
        counts: BTreeMap::new(),
        n: true_labels.len(),
        class_totals: BTreeMap::new(),
        group_totals: BTreeMap::new(),
    };
    for (c, k) in true_labels.iter().zip(predicted) {
        *table.counts.entry((c.clone(), k.clone())).or_default() += 1;
        *table.class_totals.entry(c.clone()).or_default() += 1;
        *table.group_totals.entry(k.clone()).or_default() += 1;
    }
    Ok(table)
}

fn entropy<'a>(totals: impl Iterator<Item = &'a usize>, n: usize) -> f64 {
    let n = n as f64;
    -totals
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

impl<C: Ord + Clone, K: Ord + Clone> ContingencyTable<C, K> {
    /// H(C | K)
    fn class_given_group(&self) -> f64 {
        let n = self.n as f64;
        -self
            .counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|((_, k), &c)| {
                let nc = c as f64;
                (nc / n) * (nc / self.group_totals[k] as f64).ln()
            })
            .sum::<f64>()
    }

    /// H(K | C)
    fn group_given_class(&self) -> f64 {
        let n = self.n as f64;
        -self
            .counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|((cls, _), &c)| {
                let nc = c as f64;
                (nc / n) * (nc / self.class_totals[cls] as f64).ln()
            })
            .sum::<f64>()
    }

    pub fn class_entropy(&self) -> f64 {
        entropy(self.class_totals.values(), self.n)
    }

    pub fn group_entropy(&self) -> f64 {
        entropy(self.group_totals.values(), self.n)
    }
}

fn unit_clamp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn homogeneity<C: Ord + Clone, K: Ord + Clone>(table: &ContingencyTable<C, K>) -> f64 {
    let h_c = table.class_entropy();
    if h_c == 0.0 {
        return 1.0;
    }
    unit_clamp(1.0 - table.class_given_group() / h_c)
}

pub fn completeness<C: Ord + Clone, K: Ord + Clone>(table: &ContingencyTable<C, K>) -> f64 {
    let h_k = table.group_entropy();
    if h_k == 0.0 {
        return 1.0;
    }
    unit_clamp(1.0 - table.group_given_class() / h_k)
}

/// Harmonic mean of homogeneity and completeness.
pub fn v_measure(h: f64, c: f64) -> f64 {
    if h + c == 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    }
}

/// `(homogeneity, completeness, v_measure)` for two parallel labelings.
pub fn score_labels<C, K>(true_labels: &[C], predicted: &[K]) -> Result<(f64, f64, f64)>
where
    C: Ord + Clone,
    K: Ord + Clone,
{
    let table = contingency(true_labels, predicted)?;
    let h = homogeneity(&table);
    let c = completeness(&table);
    Ok((h, c, v_measure(h, c)))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub asset_qty: usize,
    pub true_group_qty: usize,
    pub suggested_group_qty: usize,
    pub run_time_seconds: f64,
}

impl EvalReport {
    /// One comma-separated row in [`EVAL_REPORT_HEADER`] column order.
    pub fn csv_row(&self, dataset: &str) -> String {
        format!(
            "{dataset},{},{},{},{:.3},{:?},{:?},{:?}",
            self.asset_qty,
            self.true_group_qty,
            self.suggested_group_qty,
            self.run_time_seconds,
            self.homogeneity,
            self.completeness,
            self.v_measure
        )
    }

    /// Metrics as percentages with two decimals, e.g. `98.24%`.
    pub fn percentages(&self) -> [String; 3] {
        [self.homogeneity, self.completeness, self.v_measure].map(format_percent)
    }
}

/// Percentage with two decimals, rounding half to even.
pub fn format_percent(fraction: f64) -> String {
    let hundredths = (fraction * 10_000.0).round_ties_even();
    format!("{:.2}%", hundredths / 100.0)
}

/// Score security groups against each endpoint's true class.
pub fn evaluate<L: Ord + Clone>(
    groups: &SecurityGroups,
    ground_truth: &BTreeMap<Ipv4Addr, L>,
    run_time_seconds: f64,
) -> Result<EvalReport> {
    let membership = groups.membership();
    let missing: Vec<String> = membership
        .keys()
        .filter(|e| !ground_truth.contains_key(e))
        .map(Ipv4Addr::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Eval(format!(
            "ground truth missing for {} endpoint(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let truth: Vec<L> = membership.keys().map(|e| ground_truth[e].clone()).collect();
    let predicted: Vec<usize> = membership.values().copied().collect();
    let table = contingency(&truth, &predicted)?;
    let h = homogeneity(&table);
    let c = completeness(&table);
    Ok(EvalReport {
        homogeneity: h,
        completeness: c,
        v_measure: v_measure(h, c),
        asset_qty: table.n,
        true_group_qty: table.class_totals.len(),
        suggested_group_qty: table.group_totals.len(),
        run_time_seconds,
    })
}
