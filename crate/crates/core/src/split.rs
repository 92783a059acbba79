//! Seeded per-user holdout splitting.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, ColumnMap, Feedback, FileFormat, IdIndex, InteractionDataset};
use crate::rng::{shuffle, SplitMix64, GOLDEN_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_ratio: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(train_ratio: f64, seed: u64) -> Result<Self> {
        let cfg = Self { train_ratio, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_ratio > 0.0 && self.train_ratio <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "train ratio must lie in (0, 1], got {}",
                self.train_ratio
            )))
        }
    }

    /// Number of a user's `n` interactions that go to train: `ceil(ratio * n)`.
    ///
    /// The product is nudged down by 1e-9 before rounding up so that decimal
    /// ratios such as 0.7 × 10 are not pushed past the integer by binary
    /// representation error.
    pub fn train_count(&self, n: usize) -> usize {
        let raw = (self.train_ratio * n as f64 - 1e-9).ceil();
        (raw.max(0.0) as usize).min(n)
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            seed: 42,
        }
    }
}

/// Train and test halves of one dataset, sharing its dense index space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: InteractionDataset,
    pub test: InteractionDataset,
}

fn user_stream_seed(seed: u64, user: usize) -> u64 {
    seed ^ (user as u64).wrapping_mul(GOLDEN_GAMMA)
}

/// Splits each user's interactions into train and test.
///
/// A user's interactions are ordered by (timestamp, dense item index),
/// shuffled with Fisher–Yates driven by a per-user splitmix64 stream, and the
/// first `ceil(ratio * n)` go to train. Both halves keep source row order.
pub fn split_holdout(ds: &InteractionDataset, cfg: &SplitConfig) -> Result<SplitPair> {
    cfg.validate()?;
    if !ds.is_binary() {
        return Err(Error::Contract(
            "split_holdout requires an implicit dataset (all ratings equal 1)".into(),
        ));
    }

    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); ds.n_users()];
    for (pos, &(u, _)) in ds.keys().iter().enumerate() {
        by_user[u].push(pos);
    }

    let records = ds.interactions();
    let keys = ds.keys();
    let train_positions: Vec<Vec<usize>> = by_user
        .into_par_iter()
        .enumerate()
        .map(|(user, mut positions)| {
            positions.sort_by(|&a, &b| {
                records[a]
                    .timestamp
                    .total_cmp(&records[b].timestamp)
                    .then(keys[a].1.cmp(&keys[b].1))
            });
            let mut rng = SplitMix64::new(user_stream_seed(cfg.seed, user));
            shuffle(&mut positions, &mut rng);
            positions.truncate(cfg.train_count(positions.len()));
            positions
        })
        .collect();

    let mut in_train = vec![false; ds.len()];
    for pos in train_positions.into_iter().flatten() {
        in_train[pos] = true;
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &t) in records.iter().zip(&in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    let make = |rows| {
        InteractionDataset::with_indices(
            rows,
            Arc::clone(ds.users()),
            Arc::clone(ds.items()),
            ds.feedback(),
        )
    };
    Ok(SplitPair {
        train: make(train)?,
        test: make(test)?,
    })
}

impl SplitPair {
    /// Paths `<dir>/<stem>.train.inter` and `<dir>/<stem>.test.inter`.
    pub fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
        (
            dir.join(format!("{stem}.train.inter")),
            dir.join(format!("{stem}.test.inter")),
        )
    }

    /// Writes both halves as atomic files; returns the two paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let (train_path, test_path) = Self::paths(dir, stem);
        ingest::write_atomic(&self.train, &train_path)?;
        ingest::write_atomic(&self.test, &test_path)?;
        Ok((train_path, test_path))
    }

    /// Loads a persisted split. Dense indices are assigned over train rows
    /// first, then test rows, so both halves share one index space.
    pub fn load(train_path: &Path, test_path: &Path) -> Result<Self> {
        let columns = ColumnMap::default();
        let train = ingest::load_interactions(train_path, FileFormat::Atomic, &columns)?;
        let test = ingest::load_interactions(test_path, FileFormat::Atomic, &columns)?;
        Self::from_parts(train, test)
    }

    /// Re-indexes two independently loaded halves onto a shared index space.
    pub fn from_parts(train: InteractionDataset, test: InteractionDataset) -> Result<Self> {
        if !train.is_binary() || !test.is_binary() {
            return Err(Error::Contract(
                "persisted splits must hold implicit interactions (rating 1)".into(),
            ));
        }
        let mut users = IdIndex::new();
        let mut items = IdIndex::new();
        for r in train.interactions().iter().chain(test.interactions()) {
            users.insert(&r.user);
            items.insert(&r.item);
        }
        let (users, items) = (Arc::new(users), Arc::new(items));
        let rebuild = |ds: InteractionDataset| {
            InteractionDataset::with_indices(
                ds.interactions().to_vec(),
                Arc::clone(&users),
                Arc::clone(&items),
                Feedback::Implicit,
            )
        };
        Ok(Self {
            train: rebuild(train)?,
            test: rebuild(test)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Interaction;

    fn implicit(pairs: &[(&str, &str)]) -> InteractionDataset {
        InteractionDataset::from_interactions(
            pairs
                .iter()
                .enumerate()
                .map(|(t, (u, i))| Interaction {
                    user: u.to_string(),
                    item: i.to_string(),
                    rating: 1.0,
                    timestamp: t as f64,
                })
                .collect(),
            Feedback::Implicit,
        )
    }

    #[test]
    fn ceiling_rule() {
        let cfg = SplitConfig::default();
        assert_eq!(cfg.train_count(10), 8);
        assert_eq!(cfg.train_count(1), 1);
        assert_eq!(cfg.train_count(2), 2);
        assert_eq!(cfg.train_count(6), 5);
        let seventy = SplitConfig::new(0.7, 0).unwrap();
        assert_eq!(seventy.train_count(10), 7);
        assert_eq!(SplitConfig::new(1.0, 0).unwrap().train_count(9), 9);
    }

    #[test]
    fn ratio_bounds() {
        assert!(SplitConfig::new(0.0, 1).is_err());
        assert!(SplitConfig::new(1.5, 1).is_err());
        assert!(SplitConfig::new(f64::NAN, 1).is_err());
    }

    #[test]
    fn ten_interactions_give_eight_and_two() {
        let pairs: Vec<(String, String)> = (0..10).map(|i| ("u".into(), format!("i{i}"))).collect();
        let refs: Vec<(&str, &str)> = pairs
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let split = split_holdout(&implicit(&refs), &SplitConfig::default()).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.test.len(), 2);
    }

    #[test]
    fn single_interaction_user_is_train_only() {
        let split = split_holdout(&implicit(&[("u", "a")]), &SplitConfig::default()).unwrap();
        assert_eq!(split.train.len(), 1);
        assert!(split.test.is_empty());
    }

    #[test]
    fn rejects_explicit_ratings() {
        let ds = InteractionDataset::from_interactions(
            vec![Interaction {
                user: "u".into(),
                item: "i".into(),
                rating: 4.0,
                timestamp: 0.0,
            }],
            Feedback::Explicit,
        );
        assert!(matches!(
            split_holdout(&ds, &SplitConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn halves_share_the_source_index() {
        let ds = implicit(&[("a", "x"), ("a", "y"), ("a", "z"), ("b", "x"), ("b", "z")]);
        let split = split_holdout(&ds, &SplitConfig::new(0.5, 3).unwrap()).unwrap();
        assert!(Arc::ptr_eq(split.train.items(), ds.items()));
        assert!(Arc::ptr_eq(split.test.users(), ds.users()));
    }

    #[test]
    fn persisted_split_reloads_with_same_pairs() {
        let ds = implicit(&[
            ("a", "x"),
            ("a", "y"),
            ("a", "z"),
            ("b", "x"),
            ("b", "z"),
            ("b", "w"),
        ]);
        let split = split_holdout(&ds, &SplitConfig::new(0.6, 9).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (tr, te) = split.write(dir.path(), "toy").unwrap();
        assert!(tr.ends_with("toy.train.inter"));
        let back = SplitPair::load(&tr, &te).unwrap();
        assert_eq!(back.train.interactions(), split.train.interactions());
        assert_eq!(back.test.interactions(), split.test.interactions());
        for (r, &(u, i)) in back.test.interactions().iter().zip(back.test.keys()) {
            assert_eq!(back.train.users().id(u), r.user);
            assert_eq!(back.train.items().id(i), r.item);
        }
    }
}
