use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::sweep::{sweep_curve, CurvePoint, SweepPoint};
use super::{pearson_correlation, Prediction};

pub const CORRELATION_CSV_HEADER: &str = "init_strategy,pearson_r";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Trained on target-domain data only.
    InDomain,
    /// Adapted from a model trained on the other domains.
    CrossDomain,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::InDomain => "in_domain",
            Setting::CrossDomain => "cross_domain",
        })
    }
}

/// Outcome of evaluating one trained model on one domain's test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: String,
    pub setting: Setting,
    pub init_strategy: String,
    /// Examples in the whole domain.
    pub domain_examples: usize,
    /// Distinct words in the domain.
    pub domain_vocab: usize,
    pub test_examples: usize,
    pub accuracy: f64,
    pub seed: u64,
    pub config_fingerprint: String,
    pub predictions: Vec<Prediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepPoint>,
}

impl EvalReport {
    /// Examples per vocabulary word.
    pub fn abundance(&self) -> f64 {
        self.domain_examples as f64 / self.domain_vocab as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub domain: String,
    pub init_strategy: String,
    pub abundance: f64,
    pub in_domain: f64,
    pub cross_domain: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub init_strategy: String,
    /// `None` when either series has zero variance or fewer than two domains.
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub domain: String,
    pub setting: Setting,
    pub init_strategy: String,
    pub point: CurvePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub correlations: Vec<Correlation>,
    pub curves: Vec<CurveRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pairs in-domain and cross-domain reports by (domain, init strategy),
/// averaging repeated runs, and correlates abundance with the improvement.
pub fn build_report(reports: &[EvalReport]) -> Result<Report> {
    type Key = (String, String);
    let mut acc: BTreeMap<Key, BTreeMap<Setting, Vec<f64>>> = BTreeMap::new();
    let mut abundance: BTreeMap<Key, f64> = BTreeMap::new();
    for r in reports {
        let key = (r.domain.clone(), r.init_strategy.clone());
        if r.setting == Setting::InDomain || !abundance.contains_key(&key) {
            abundance.insert(key.clone(), r.abundance());
        }
        acc.entry(key).or_default().entry(r.setting).or_default().push(r.accuracy);
    }

    let mut orphans = Vec::new();
    let mut rows = Vec::new();
    for ((domain, init), by_setting) in &acc {
        match (by_setting.get(&Setting::InDomain), by_setting.get(&Setting::CrossDomain)) {
            (Some(i), Some(x)) => {
                let (i, x) = (mean(i), mean(x));
                rows.push(ReportRow {
                    domain: domain.clone(),
                    init_strategy: init.clone(),
                    abundance: abundance[&(domain.clone(), init.clone())],
                    in_domain: i,
                    cross_domain: x,
                    improvement: x - i,
                });
            }
            (Some(_), None) => orphans.push(format!("{domain}/{init} (in_domain without cross_domain)")),
            (None, _) => orphans.push(format!("{domain}/{init} (cross_domain without in_domain)")),
        }
    }
    if !orphans.is_empty() {
        return Err(Error::Pairing(orphans));
    }
    rows.sort_by(|a, b| (&a.init_strategy, &a.domain).cmp(&(&b.init_strategy, &b.domain)));

    let mut correlations = Vec::new();
    let mut inits: Vec<&str> = rows.iter().map(|r| r.init_strategy.as_str()).collect();
    inits.dedup();
    for init in inits {
        let group: Vec<&ReportRow> = rows.iter().filter(|r| r.init_strategy == init).collect();
        let x: Vec<f64> = group.iter().map(|r| r.abundance).collect();
        let y: Vec<f64> = group.iter().map(|r| r.improvement).collect();
        correlations.push(Correlation {
            init_strategy: init.to_string(),
            pearson_r: pearson_correlation(&x, &y).ok(),
        });
    }

    let mut sweeps: BTreeMap<(String, Setting, String), Vec<SweepPoint>> = BTreeMap::new();
    for r in reports.iter().filter(|r| !r.sweep.is_empty()) {
        sweeps
            .entry((r.domain.clone(), r.setting, r.init_strategy.clone()))
            .or_default()
            .extend(r.sweep.iter().cloned());
    }
    let curves = sweeps
        .into_iter()
        .flat_map(|((domain, setting, init), pts)| {
            sweep_curve(&pts).into_iter().map(move |point| CurveRow {
                domain: domain.clone(),
                setting,
                init_strategy: init.clone(),
                point,
            })
        })
        .collect();

    Ok(Report {
        rows,
        correlations,
        curves,
    })
}

impl Report {
    pub fn correlation_csv(&self) -> String {
        let mut out = format!("{CORRELATION_CSV_HEADER}\n");
        for c in &self.correlations {
            let r = c.pearson_r.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{}", c.init_strategy, r);
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("domain,setting,init_strategy,rate,mean_accuracy,repeats\n");
        for c in &self.curves {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.domain, c.setting, c.init_strategy, c.point.rate, c.point.mean_accuracy, c.point.repeats
            );
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("# Cross-domain results\n\n");
        out.push_str("| init | domain | N/|V| | in-domain | cross-domain | improvement |\n");
        out.push_str("|---|---|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3} | {:.1} | {:.1} | {:+.1} |",
                r.init_strategy,
                r.domain,
                r.abundance,
                100.0 * r.in_domain,
                100.0 * r.cross_domain,
                100.0 * r.improvement
            );
        }
        out.push_str("\n## Correlation of abundance with improvement\n\n| init | pearson r |\n|---|---:|\n");
        for c in &self.correlations {
            match c.pearson_r {
                Some(r) => {
                    let _ = writeln!(out, "| {} | {:.3} |", c.init_strategy, r);
                }
                None => {
                    let _ = writeln!(out, "| {} | degenerate (zero variance) |", c.init_strategy);
                }
            }
        }
        out
    }
}
