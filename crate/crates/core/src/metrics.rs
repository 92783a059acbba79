//! DCG, nDCG under two ideal-DCG conventions, precision and recall at a cutoff.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::InteractionDataset;
use crate::recommend::{Preset, RecommendationList};

/// How many ideal positions enter the normaliser of nDCG@N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdcgMode {
    /// `min(N, relevant)` positions.
    Truncated,
    /// Always `N` positions, however few items are relevant.
    FixedK,
}

impl IdcgMode {
    pub fn name(self) -> &'static str {
        match self {
            IdcgMode::Truncated => "truncated",
            IdcgMode::FixedK => "fixed-k",
        }
    }
}

impl fmt::Display for IdcgMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdcgMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated" => Ok(IdcgMode::Truncated),
            "fixed-k" => Ok(IdcgMode::FixedK),
            other => Err(Error::Config(format!("unknown idcg mode `{other}`"))),
        }
    }
}

fn discount(position: usize) -> f64 {
    ((position + 1) as f64).log2()
}

/// `Σ (2^rel_i − 1) / log2(i + 1)` over 1-based positions.
pub fn dcg(gains: &[f64]) -> f64 {
    gains
        .iter()
        .enumerate()
        .map(|(i, &rel)| (rel.exp2() - 1.0) / discount(i + 1))
        .sum()
}

/// DCG of `m` leading binary hits.
pub fn ideal_dcg(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / discount(i)).sum()
}

/// nDCG@n for binary ideal gains.
pub fn ndcg_at_n(gains: &[f64], n_relevant: usize, n: usize, mode: IdcgMode) -> Result<f64> {
    if n_relevant == 0 {
        return Err(Error::Contract(
            "nDCG is undefined without relevant items".into(),
        ));
    }
    if gains.len() > n {
        return Err(Error::Contract(format!(
            "{} gains exceed the cutoff {n}",
            gains.len()
        )));
    }
    let ideal_positions = match mode {
        IdcgMode::Truncated => n.min(n_relevant),
        IdcgMode::FixedK => n,
    };
    Ok(dcg(gains) / ideal_dcg(ideal_positions))
}

fn hits(gains: &[f64]) -> usize {
    gains.iter().filter(|&&g| g > 0.0).count()
}

/// Hits divided by `n`, also when the list is shorter than `n`.
pub fn precision_at_n(gains: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    hits(gains) as f64 / n as f64
}

pub fn recall_at_n(gains: &[f64], n_relevant: usize) -> Result<f64> {
    if n_relevant == 0 {
        return Err(Error::Contract(
            "recall is undefined without relevant items".into(),
        ));
    }
    Ok((hits(gains) as f64 / n_relevant as f64).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: String,
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub users: usize,
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n: usize,
    pub idcg_mode: IdcgMode,
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: ReportConfig,
    pub means: MeanMetrics,
    /// Ordered by dense user index.
    pub per_user: Vec<UserMetrics>,
}

/// Order-fixed pairwise summation.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len => {
            let (left, right) = values.split_at(len / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}

/// Relevance of each recommended position (first `n` entries) for `relevant`.
pub fn relevance(list: &RecommendationList, relevant: &HashSet<usize>, n: usize) -> Vec<f64> {
    list.items()
        .take(n)
        .map(|item| if relevant.contains(&item) { 1.0 } else { 0.0 })
        .collect()
}

/// Scores every list against the user's test items and averages over the
/// evaluated users. Input order of `recs` does not affect the result.
pub fn evaluate(
    recs: &[RecommendationList],
    test: &InteractionDataset,
    n: usize,
    mode: IdcgMode,
) -> Result<MetricReport> {
    if n == 0 {
        return Err(Error::Contract("evaluation cutoff must be >= 1".into()));
    }
    let mut relevant: Vec<HashSet<usize>> = vec![HashSet::new(); test.n_users()];
    for &(u, i) in test.keys() {
        relevant[u].insert(i);
    }

    let mut order: Vec<&RecommendationList> = recs.iter().collect();
    order.sort_by_key(|l| l.user);
    if let Some(w) = order.windows(2).find(|w| w[0].user == w[1].user) {
        return Err(Error::Contract(format!("user {} has two lists", w[0].user)));
    }

    let per_user = order
        .into_iter()
        .map(|list| {
            let rel = relevant
                .get(list.user)
                .filter(|r| !r.is_empty())
                .ok_or_else(|| {
                    Error::Contract(format!("user {} has no test interactions", list.user))
                })?;
            let gains = relevance(list, rel, n);
            Ok(UserMetrics {
                user: test.users().id(list.user).to_owned(),
                ndcg: ndcg_at_n(&gains, rel.len(), n, mode)?,
                precision: precision_at_n(&gains, n),
                recall: recall_at_n(&gains, rel.len())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean = |f: fn(&UserMetrics) -> f64| {
        if per_user.is_empty() {
            return 0.0;
        }
        let values: Vec<f64> = per_user.iter().map(f).collect();
        pairwise_sum(&values) / values.len() as f64
    };
    let means = MeanMetrics {
        users: per_user.len(),
        ndcg: mean(|m| m.ndcg),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
    };
    Ok(MetricReport {
        config: ReportConfig {
            n,
            idcg_mode: mode,
            preset: None,
            seed: None,
        },
        means,
        per_user,
    })
}
