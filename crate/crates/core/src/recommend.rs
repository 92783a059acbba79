//! Candidate scoring and top-N list construction.

use std::borrow::Cow;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::IdIndex;
use crate::knn::{truncate_topk, SimilarityMatrix, Strategy};
use crate::split::SplitPair;

/// How the similarities between a candidate and a user's profile are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScoringMode {
    /// Sum of the `k` largest similarities to profile items.
    ProfileTopK { k: usize },
    /// Sum of all similarities to profile items (a sparse mat-vec product).
    SumAll,
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoringMode::ProfileTopK { k } => write!(f, "profile-topk(k={k})"),
            ScoringMode::SumAll => f.write_str("sum-all"),
        }
    }
}

/// Named (similarity strategy, scoring mode) pairs reproducing the two
/// reference ItemKNN implementations and the aligned variant.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full matrix, per-user top-k.
    LenskitOriginal,
    /// Truncated matrix, per-user top-k.
    LenskitAdjusted,
    /// Truncated matrix, plain sum.
    #[default]
    Recbole,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::LenskitOriginal,
        Preset::LenskitAdjusted,
        Preset::Recbole,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::LenskitOriginal => "lenskit-original",
            Preset::LenskitAdjusted => "lenskit-adjusted",
            Preset::Recbole => "recbole",
        }
    }

    pub fn strategy(self, k: usize) -> Strategy {
        match self {
            Preset::LenskitOriginal => Strategy::Full,
            Preset::LenskitAdjusted | Preset::Recbole => Strategy::TopK { k },
        }
    }

    pub fn scoring(self, k: usize) -> ScoringMode {
        match self {
            Preset::LenskitOriginal | Preset::LenskitAdjusted => ScoringMode::ProfileTopK { k },
            Preset::Recbole => ScoringMode::SumAll,
        }
    }

    /// The matrix this preset scores against, derived from a full matrix.
    pub fn matrix(self, full: &SimilarityMatrix, k: usize) -> Result<Cow<'_, SimilarityMatrix>> {
        if full.strategy() != Strategy::Full {
            return Err(Error::Contract(
                "preset matrices derive from a full matrix".into(),
            ));
        }
        match self.strategy(k) {
            Strategy::Full => Ok(Cow::Borrowed(full)),
            Strategy::TopK { k } => Ok(Cow::Owned(truncate_topk(full, k)?)),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub item: usize,
    pub score: f64,
}

/// Ranked unseen items for one user: scores non-increasing, ties by item index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user: usize,
    pub entries: Vec<Recommendation>,
}

impl RecommendationList {
    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.item)
    }
}

/// Scores every item against `profile`.
///
/// For candidate `i` the stored similarities `s[i, j]` for `j` in the profile
/// are gathered in ascending `j`. `SumAll` adds them all; `ProfileTopK`
/// keeps the `k` largest (ties to the smaller `j`) and adds those, again in
/// ascending `j`, so the two modes agree bit for bit whenever at most `k`
/// values were gathered.
pub fn score_user(s: &SimilarityMatrix, profile: &[usize], mode: ScoringMode) -> Result<Vec<f64>> {
    let n_items = s.n_items();
    if let Some(&bad) = profile.iter().find(|&&j| j >= n_items) {
        return Err(Error::Contract(format!(
            "profile item {bad} out of range for {n_items} items"
        )));
    }
    if let ScoringMode::ProfileTopK { k: 0 } = mode {
        return Err(Error::Contract("profile-topk scoring needs k >= 1".into()));
    }
    let mut profile: Vec<u32> = profile.iter().map(|&j| j as u32).collect();
    profile.sort_unstable();
    profile.dedup();
    let mut in_profile = vec![false; n_items];
    for &j in &profile {
        in_profile[j as usize] = true;
    }

    let mut gathered: Vec<(u32, f64)> = Vec::new();
    let scores = (0..n_items)
        .map(|i| {
            gathered.clear();
            let (cols, vals) = s.row(i);
            if cols.len() <= profile.len() * 8 {
                gathered.extend(
                    cols.iter()
                        .zip(vals)
                        .filter(|(&j, _)| in_profile[j as usize])
                        .map(|(&j, &v)| (j, v)),
                );
            } else {
                gathered.extend(
                    profile
                        .iter()
                        .filter_map(|j| cols.binary_search(j).ok().map(|pos| (*j, vals[pos]))),
                );
            }
            combine(&mut gathered, mode)
        })
        .collect();
    Ok(scores)
}

fn combine(gathered: &mut Vec<(u32, f64)>, mode: ScoringMode) -> f64 {
    if let ScoringMode::ProfileTopK { k } = mode {
        if gathered.len() > k {
            gathered.select_nth_unstable_by(k - 1, |a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            gathered.truncate(k);
            gathered.sort_unstable_by_key(|&(j, _)| j);
        }
    }
    gathered.iter().map(|&(_, v)| v).sum()
}

/// The `n` best positive-scored items not in `seen`, ordered by score
/// descending then item index ascending. May return fewer than `n`.
pub fn recommend_topn(
    user: usize,
    scores: &[f64],
    seen: &[usize],
    n: usize,
) -> Result<RecommendationList> {
    if n == 0 {
        return Err(Error::Contract("top-n needs n >= 1".into()));
    }
    let mut excluded = vec![false; scores.len()];
    for &j in seen {
        if let Some(flag) = excluded.get_mut(j) {
            *flag = true;
        }
    }
    let mut candidates: Vec<Recommendation> = scores
        .iter()
        .enumerate()
        .filter(|&(i, &score)| score > 0.0 && !excluded[i])
        .map(|(item, &score)| Recommendation { item, score })
        .collect();
    let order = |a: &Recommendation, b: &Recommendation| {
        b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
    };
    if candidates.len() > n {
        candidates.select_nth_unstable_by(n - 1, order);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(order);
    Ok(RecommendationList {
        user,
        entries: candidates,
    })
}

/// One list per user with at least one test interaction, in ascending user
/// index, each scored from the user's train profile with that profile excluded.
pub fn recommend_all(
    s: &SimilarityMatrix,
    split: &SplitPair,
    mode: ScoringMode,
    n: usize,
) -> Result<Vec<RecommendationList>> {
    if s.n_items() != split.train.n_items() {
        return Err(Error::Contract(format!(
            "similarity matrix has {} items but the split indexes {}",
            s.n_items(),
            split.train.n_items()
        )));
    }
    let mut profiles = split.train.items_by_user();
    for p in &mut profiles {
        p.sort_unstable();
        p.dedup();
    }
    let mut has_test = vec![false; split.test.n_users()];
    for &(u, _) in split.test.keys() {
        has_test[u] = true;
    }
    let users: Vec<usize> = (0..has_test.len()).filter(|&u| has_test[u]).collect();
    users
        .into_par_iter()
        .map(|u| {
            let profile = profiles.get(u).map(Vec::as_slice).unwrap_or(&[]);
            let scores = score_user(s, profile, mode)?;
            recommend_topn(u, &scores, profile, n)
        })
        .collect()
}

/// Writes `user<TAB>rank<TAB>item<TAB>score` lines with external ids and
/// 1-based ranks.
pub fn write_recommendations(
    path: impl AsRef<Path>,
    recs: &[RecommendationList],
    users: &IdIndex,
    items: &IdIndex,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for list in recs {
            for (rank, e) in list.entries.iter().enumerate() {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{:.16e}",
                    users.id(list.user),
                    rank + 1,
                    items.id(e.item),
                    e.score
                )?;
            }
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Reads a dump produced by [`write_recommendations`]. Users without any line
/// in the dump are absent from the result.
pub fn read_recommendations(
    path: impl AsRef<Path>,
    users: &IdIndex,
    items: &IdIndex,
) -> Result<Vec<RecommendationList>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists: Vec<RecommendationList> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [user, rank, item, score] = fields[..] else {
            return Err(err("expected user<TAB>rank<TAB>item<TAB>score".into()));
        };
        let user = users
            .get(user)
            .ok_or_else(|| err(format!("unknown user `{user}`")))?;
        let item = items
            .get(item)
            .ok_or_else(|| err(format!("unknown item `{item}`")))?;
        let rank: usize = rank
            .parse()
            .map_err(|_| err(format!("bad rank `{rank}`")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| err(format!("bad score `{score}`")))?;
        let list = match lists.last_mut() {
            Some(list) if list.user == user => list,
            _ => {
                lists.push(RecommendationList {
                    user,
                    entries: Vec::new(),
                });
                lists.last_mut().expect("just pushed")
            }
        };
        if rank != list.entries.len() + 1 {
            return Err(err(format!("rank {rank} out of sequence")));
        }
        list.entries.push(Recommendation { item, score });
    }
    Ok(lists)
}
