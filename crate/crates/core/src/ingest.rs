//! Loading interaction files, implicit-feedback conversion and dataset statistics.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One user–item record as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    /// Seconds; 0 when the source has no timestamp column.
    pub timestamp: f64,
}

/// Bijection between external string ids and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the dense index of `id`, assigning the next free one if unseen.
    pub fn insert(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feedback {
    Explicit,
    Implicit,
}

/// An ordered interaction list together with dense user and item indices.
///
/// Index maps are shared (`Arc`) so that train and test halves of a split
/// address the same dense id space as their source.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    interactions: Vec<Interaction>,
    keys: Vec<(usize, usize)>,
    users: Arc<IdIndex>,
    items: Arc<IdIndex>,
    feedback: Feedback,
}

impl InteractionDataset {
    /// Builds indices in first-appearance order.
    pub fn from_interactions(interactions: Vec<Interaction>, feedback: Feedback) -> Self {
        let mut users = IdIndex::new();
        let mut items = IdIndex::new();
        let keys = interactions
            .iter()
            .map(|r| (users.insert(&r.user), items.insert(&r.item)))
            .collect();
        Self {
            interactions,
            keys,
            users: Arc::new(users),
            items: Arc::new(items),
            feedback,
        }
    }

    /// Uses existing indices; every id must already be present in them.
    pub fn with_indices(
        interactions: Vec<Interaction>,
        users: Arc<IdIndex>,
        items: Arc<IdIndex>,
        feedback: Feedback,
    ) -> Result<Self> {
        let keys = interactions
            .iter()
            .map(|r| match (users.get(&r.user), items.get(&r.item)) {
                (Some(u), Some(i)) => Ok((u, i)),
                _ => Err(Error::Contract(format!(
                    "interaction ({}, {}) is not covered by the supplied indices",
                    r.user, r.item
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            interactions,
            keys,
            users,
            items,
            feedback,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Dense `(user, item)` index pairs, parallel to [`Self::interactions`].
    pub fn keys(&self) -> &[(usize, usize)] {
        &self.keys
    }

    pub fn users(&self) -> &Arc<IdIndex> {
        &self.users
    }

    pub fn items(&self) -> &Arc<IdIndex> {
        &self.items
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn feedback(&self) -> Feedback {
        self.feedback
    }

    /// True when every rating equals 1 (the implicit-feedback encoding).
    pub fn is_binary(&self) -> bool {
        self.interactions.iter().all(|r| r.rating == 1.0)
    }

    /// Per-user item lists in dense indices, in interaction order.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for &(u, i) in &self.keys {
            out[u].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    /// Tab-separated with typed headers such as `user_id:token`.
    Atomic,
    Csv,
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atomic" | "atomic-tsv" | "tsv" => Ok(FileFormat::Atomic),
            "csv" => Ok(FileFormat::Csv),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// Names of the source columns holding each field (after type-suffix stripping).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub user: String,
    pub item: String,
    pub rating: String,
    /// Read when present in the header; otherwise every timestamp is 0.
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            user: "user_id".into(),
            item: "item_id".into(),
            rating: "rating".into(),
            timestamp: "timestamp".into(),
        }
    }
}

fn base_name(header: &str, format: FileFormat) -> &str {
    let header = header.trim();
    match format {
        FileFormat::Atomic => header.split(':').next().unwrap_or(header),
        FileFormat::Csv => header,
    }
}

fn parse_number(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("cannot parse {field} `{raw}`"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{field} `{raw}` is not finite"),
        });
    }
    Ok(value)
}

/// Reads an interaction file. Row order is preserved and indices are built
/// in first-appearance order.
pub fn load_interactions(
    path: impl AsRef<Path>,
    format: FileFormat,
    columns: &ColumnMap,
) -> Result<InteractionDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = csv::ReaderBuilder::new();
    builder.has_headers(true);
    if format == FileFormat::Atomic {
        builder.delimiter(b'\t').quoting(false);
    }
    let mut reader = builder.from_reader(file);

    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| base_name(h, format) == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Schema {
            path: path.to_owned(),
            column: name.to_owned(),
        })
    };
    let user_col = require(&columns.user)?;
    let item_col = require(&columns.item)?;
    let rating_col = require(&columns.rating)?;
    let time_col = find(&columns.timestamp);

    let mut interactions = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize, name: &str| {
            record.get(col).ok_or_else(|| Error::Parse {
                path: path.to_owned(),
                line,
                message: format!("row has no `{name}` field"),
            })
        };
        let user = field(user_col, &columns.user)?.trim();
        let item = field(item_col, &columns.item)?.trim();
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                message: "empty user or item id".into(),
            });
        }
        let rating = parse_number(path, line, "rating", field(rating_col, &columns.rating)?)?;
        let timestamp = match time_col {
            Some(col) => parse_number(path, line, "timestamp", field(col, &columns.timestamp)?)?,
            None => 0.0,
        };
        interactions.push(Interaction {
            user: user.to_owned(),
            item: item.to_owned(),
            rating,
            timestamp,
        });
    }
    Ok(InteractionDataset::from_interactions(
        interactions,
        Feedback::Explicit,
    ))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes a dataset as an atomic TSV file readable by [`load_interactions`].
pub fn write_atomic(ds: &InteractionDataset, path: impl AsRef<Path>) -> Result<()> {
    use std::io::{BufWriter, Write};
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(
            out,
            "user_id:token\titem_id:token\trating:float\ttimestamp:float"
        )?;
        for r in &ds.interactions {
            writeln!(out, "{}\t{}\t{}\t{}", r.user, r.item, r.rating, r.timestamp)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    StrictlyGreater,
    GreaterOrEqual,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" | "strictly-greater" => Ok(ThresholdMode::StrictlyGreater),
            "ge" | "greater-or-equal" => Ok(ThresholdMode::GreaterOrEqual),
            other => Err(Error::Config(format!("unknown threshold mode `{other}`"))),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::StrictlyGreater => "gt",
            ThresholdMode::GreaterOrEqual => "ge",
        })
    }
}

/// Rule deciding which explicit ratings count as a positive interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitThreshold {
    pub cutoff: f64,
    pub mode: ThresholdMode,
}

impl ImplicitThreshold {
    /// MovieLens / ModCloth convention: ratings above 3.
    pub const MOVIELENS: Self = Self::greater_than(3.0);
    /// Anime convention: ratings of 6 or more (the -1 "watched" marker is dropped).
    pub const ANIME: Self = Self::at_least(6.0);

    pub const fn greater_than(cutoff: f64) -> Self {
        Self {
            cutoff,
            mode: ThresholdMode::StrictlyGreater,
        }
    }

    pub const fn at_least(cutoff: f64) -> Self {
        Self {
            cutoff,
            mode: ThresholdMode::GreaterOrEqual,
        }
    }

    pub fn passes(&self, rating: f64) -> bool {
        match self.mode {
            ThresholdMode::StrictlyGreater => rating > self.cutoff,
            ThresholdMode::GreaterOrEqual => rating >= self.cutoff,
        }
    }
}

/// Keeps only interactions passing `threshold`, rewrites their rating to 1,
/// collapses duplicate (user, item) pairs to the earliest timestamp and
/// rebuilds indices over the survivors.
///
/// An already implicit dataset is returned unchanged.
pub fn to_implicit(ds: &InteractionDataset, threshold: ImplicitThreshold) -> InteractionDataset {
    if ds.feedback == Feedback::Implicit {
        return ds.clone();
    }
    let mut kept: Vec<Interaction> = Vec::new();
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
    for (r, &key) in ds.interactions.iter().zip(&ds.keys) {
        if !threshold.passes(r.rating) {
            continue;
        }
        match slot.get(&key) {
            Some(&pos) => {
                let prev = &mut kept[pos];
                if r.timestamp < prev.timestamp {
                    prev.timestamp = r.timestamp;
                }
            }
            None => {
                slot.insert(key, kept.len());
                kept.push(Interaction {
                    rating: 1.0,
                    ..r.clone()
                });
            }
        }
    }
    InteractionDataset::from_interactions(kept, Feedback::Implicit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub avg_per_user: f64,
    pub avg_per_item: f64,
    pub sparsity: f64,
}

/// Counts distinct users and items that actually occur in the interaction list.
pub fn stats(ds: &InteractionDataset) -> DatasetStats {
    let mut seen_users = vec![false; ds.n_users()];
    let mut seen_items = vec![false; ds.n_items()];
    for &(u, i) in &ds.keys {
        seen_users[u] = true;
        seen_items[i] = true;
    }
    let n_users = seen_users.iter().filter(|&&b| b).count();
    let n_items = seen_items.iter().filter(|&&b| b).count();
    let n_interactions = ds.len();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let cells = n_users * n_items;
    DatasetStats {
        n_users,
        n_items,
        n_interactions,
        avg_per_user: ratio(n_interactions, n_users),
        avg_per_item: ratio(n_interactions, n_items),
        sparsity: if cells == 0 {
            0.0
        } else {
            (1.0 - n_interactions as f64 / cells as f64).clamp(0.0, 1.0)
        },
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn rec(user: &str, item: &str, rating: f64, timestamp: f64) -> Interaction {
        Interaction {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp,
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_atomic_file_with_typed_headers() {
        let f = write_tmp(
            "user_id:token\titem_id:token\trating:float\ttimestamp:float\n\
             1\t10\t4\t100\n2\t10\t5\t101\n1\t11\t2\t102\n",
        );
        let ds = load_interactions(f.path(), FileFormat::Atomic, &ColumnMap::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_users(), 2);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(ds.keys(), &[(0, 0), (1, 0), (0, 1)]);
        assert_eq!(ds.interactions()[2], rec("1", "11", 2.0, 102.0));
        assert_eq!(ds.feedback(), Feedback::Explicit);
    }

    #[test]
    fn empty_file_with_header() {
        let f = write_tmp("user_id:token\titem_id:token\trating:float\ttimestamp:float\n");
        let ds = load_interactions(f.path(), FileFormat::Atomic, &ColumnMap::default()).unwrap();
        assert_eq!((ds.len(), ds.n_users(), ds.n_items()), (0, 0, 0));
    }

    #[test]
    fn csv_with_column_map_and_no_timestamp() {
        let f = write_tmp("uid,movie,score\na,x,3.5\nb,y,1\n");
        let map = ColumnMap {
            user: "uid".into(),
            item: "movie".into(),
            rating: "score".into(),
            ..ColumnMap::default()
        };
        let ds = load_interactions(f.path(), FileFormat::Csv, &map).unwrap();
        assert_eq!(ds.interactions()[0], rec("a", "x", 3.5, 0.0));
        assert_eq!(ds.interactions()[1].timestamp, 0.0);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_interactions(
            "/nonexistent/x.inter",
            FileFormat::Atomic,
            &ColumnMap::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn missing_column_names_the_column() {
        let f = write_tmp("user_id:token\titem_id:token\n1\t2\n");
        let err =
            load_interactions(f.path(), FileFormat::Atomic, &ColumnMap::default()).unwrap_err();
        match err {
            Error::Schema { column, .. } => assert_eq!(column, "rating"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rating_reports_line_number() {
        let f = write_tmp("user_id:token\titem_id:token\trating:float\n1\t2\t4\n1\t3\tfour\n");
        let err =
            load_interactions(f.path(), FileFormat::Atomic, &ColumnMap::default()).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("four"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_rating_rejected() {
        let f = write_tmp("user_id:token\titem_id:token\trating:float\n1\t2\tNaN\n");
        assert!(load_interactions(f.path(), FileFormat::Atomic, &ColumnMap::default()).is_err());
    }

    #[test]
    fn threshold_rules() {
        let ml = ImplicitThreshold::MOVIELENS;
        assert!(ml.passes(4.0));
        assert!(!ml.passes(3.0));
        let anime = ImplicitThreshold::ANIME;
        assert!(!anime.passes(-1.0));
        assert!(anime.passes(6.0));
        assert!(!anime.passes(5.0));
    }

    #[test]
    fn to_implicit_filters_rewrites_and_reindexes() {
        let ds = InteractionDataset::from_interactions(
            vec![
                rec("u1", "a", 2.0, 1.0),
                rec("u2", "b", 5.0, 2.0),
                rec("u1", "c", 4.0, 3.0),
                rec("u3", "a", 1.0, 4.0),
            ],
            Feedback::Explicit,
        );
        let imp = to_implicit(&ds, ImplicitThreshold::MOVIELENS);
        assert_eq!(imp.len(), 2);
        assert!(imp.is_binary());
        assert_eq!(imp.users().ids(), &["u2".to_string(), "u1".to_string()]);
        assert_eq!(imp.items().ids(), &["b".to_string(), "c".to_string()]);
        assert_eq!(imp.keys(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn duplicates_collapse_to_earliest_timestamp() {
        let ds = InteractionDataset::from_interactions(
            vec![
                rec("u", "a", 5.0, 50.0),
                rec("u", "b", 5.0, 60.0),
                rec("u", "a", 4.0, 10.0),
                rec("u", "a", 2.0, 1.0),
            ],
            Feedback::Explicit,
        );
        let imp = to_implicit(&ds, ImplicitThreshold::MOVIELENS);
        assert_eq!(
            imp.interactions(),
            &[rec("u", "a", 1.0, 10.0), rec("u", "b", 1.0, 60.0)]
        );
    }

    #[test]
    fn stats_small_cases() {
        let one = InteractionDataset::from_interactions(
            vec![rec("u", "i", 1.0, 0.0)],
            Feedback::Implicit,
        );
        let s = stats(&one);
        assert_eq!(s.sparsity, 0.0);
        assert_eq!(s.avg_per_user, 1.0);

        let two = InteractionDataset::from_interactions(
            vec![rec("u1", "i1", 1.0, 0.0), rec("u2", "i2", 1.0, 0.0)],
            Feedback::Implicit,
        );
        assert_eq!(stats(&two).sparsity, 0.5);

        let empty = InteractionDataset::from_interactions(vec![], Feedback::Explicit);
        let s = stats(&empty);
        assert_eq!(
            (s.avg_per_user, s.avg_per_item, s.sparsity),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn write_then_load_preserves_records() {
        let ds = InteractionDataset::from_interactions(
            vec![rec("7", "x", 1.0, 12.5), rec("8", "y", 1.0, 0.0)],
            Feedback::Implicit,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.inter");
        write_atomic(&ds, &path).unwrap();
        let back = load_interactions(&path, FileFormat::Atomic, &ColumnMap::default()).unwrap();
        assert_eq!(back.interactions(), ds.interactions());
    }
}
