//! User–item matrix assembly and item–item cosine similarity in CSR form.
//!
//! Row `i` of a [`SimilarityMatrix`] holds the neighbours of candidate item
//! `i`; truncation and scoring both operate on rows.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::InteractionDataset;

/// Binary user × item matrix, one sorted item list per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserItemMatrix {
    pub n_users: usize,
    pub n_items: usize,
    pub rows: Vec<Vec<u32>>,
}

impl UserItemMatrix {
    /// Item-major view: for each item, the sorted users who interacted with it.
    pub fn transpose(&self) -> Vec<Vec<u32>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for (u, row) in self.rows.iter().enumerate() {
            for &i in row {
                cols[i as usize].push(u as u32);
            }
        }
        cols
    }
}

/// Assembles the binary matrix from an implicit training set. The matrix is
/// sized by the dataset's index, so items seen only in a test half get an
/// empty column.
pub fn build_matrix(train: &InteractionDataset) -> UserItemMatrix {
    let mut rows = vec![Vec::new(); train.n_users()];
    for &(u, i) in train.keys() {
        rows[u].push(i as u32);
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    UserItemMatrix {
        n_users: train.n_users(),
        n_items: train.n_items(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Strategy {
    /// Every non-zero similarity kept.
    Full,
    /// At most `k` largest similarities kept per row.
    TopK { k: usize },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Full => f.write_str("full"),
            Strategy::TopK { k } => write!(f, "topk(k={k})"),
        }
    }
}

/// Sparse non-negative item × item matrix with no diagonal and no stored zeros.
/// Column indices within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n_items: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    strategy: Strategy,
}

impl SimilarityMatrix {
    fn from_rows(n_items: usize, rows: Vec<Vec<(u32, f64)>>, strategy: Strategy) -> Self {
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(n_items + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n_items,
            indptr,
            indices,
            values,
            strategy,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (start, end) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[start..end], &self.values[start..end])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_items)
            .map(|i| {
                let mut dense = vec![0.0; self.n_items];
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    dense[j as usize] = v;
                }
                dense
            })
            .collect()
    }

    /// Writes the portable text form: a header line
    /// `items=<n> strategy=<full|topk> k=<k>` (k=0 for full) followed by one
    /// `row<TAB>col<TAB>value` line per stored entry.
    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let (name, k) = match self.strategy {
            Strategy::Full => ("full", 0),
            Strategy::TopK { k } => ("topk", k),
        };
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(out, "items={} strategy={} k={}", self.n_items, name, k)?;
            for i in 0..self.n_items {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    writeln!(out, "{i}\t{j}\t{v:.16e}")?;
                }
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut lines = BufReader::new(file).lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(parse_err(1, "missing header".into())),
        };
        let mut n_items = None;
        let mut strategy_name = None;
        let mut k = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("items", v)) => n_items = v.parse::<usize>().ok(),
                Some(("strategy", v)) => strategy_name = Some(v.to_owned()),
                Some(("k", v)) => k = v.parse::<usize>().ok(),
                _ => return Err(parse_err(1, format!("unexpected header field `{field}`"))),
            }
        }
        let n_items = n_items.ok_or_else(|| parse_err(1, "header lacks items=<n>".into()))?;
        let strategy = match (strategy_name.as_deref(), k) {
            (Some("full"), _) => Strategy::Full,
            (Some("topk"), Some(k)) if k >= 1 => Strategy::TopK { k },
            _ => return Err(parse_err(1, "header lacks a valid strategy/k".into())),
        };

        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_items];
        for (n, line) in lines.enumerate() {
            let line_no = n as u64 + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(r), Some(c), Some(v), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(parse_err(line_no, "expected row<TAB>col<TAB>value".into()));
            };
            let r: usize = r
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad row `{r}`")))?;
            let c: usize = c
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad col `{c}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad value `{v}`")))?;
            if r >= n_items || c >= n_items || r == c || !(v > 0.0 && v <= 1.0) {
                return Err(parse_err(line_no, format!("invalid entry ({r}, {c}, {v})")));
            }
            rows[r].push((c as u32, v));
        }
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(parse_err(0, format!("duplicate entry in row {r}")));
            }
            if let Strategy::TopK { k } = strategy {
                if row.len() > k {
                    return Err(parse_err(
                        0,
                        format!("row {r} holds more than k={k} entries"),
                    ));
                }
            }
        }
        Ok(Self::from_rows(n_items, rows, strategy))
    }
}

/// Binary cosine between item columns: `|U_i ∩ U_j| / √(|U_i| · |U_j|)`.
///
/// Rows are computed independently (in parallel) and the diagonal is never
/// stored. Items without users have an empty row and column.
pub fn cosine_similarity(m: &UserItemMatrix) -> SimilarityMatrix {
    let item_users = m.transpose();
    let degree: Vec<u64> = item_users.iter().map(|u| u.len() as u64).collect();

    let rows: Vec<Vec<(u32, f64)>> = (0..m.n_items)
        .into_par_iter()
        .map_init(
            || (vec![0u32; m.n_items], Vec::new()),
            |(counts, touched), i| {
                for &u in &item_users[i] {
                    for &j in &m.rows[u as usize] {
                        if j as usize == i {
                            continue;
                        }
                        let slot = &mut counts[j as usize];
                        if *slot == 0 {
                            touched.push(j);
                        }
                        *slot += 1;
                    }
                }
                touched.sort_unstable();
                let row = touched
                    .iter()
                    .map(|&j| {
                        let shared = counts[j as usize] as f64;
                        counts[j as usize] = 0;
                        // integer product keeps (i, j) and (j, i) bit-identical
                        let norm = ((degree[i] * degree[j as usize]) as f64).sqrt();
                        (j, (shared / norm).min(1.0))
                    })
                    .collect();
                touched.clear();
                row
            },
        )
        .collect();

    SimilarityMatrix::from_rows(m.n_items, rows, Strategy::Full)
}

/// Keeps the `k` largest entries of every row, ties broken towards the
/// smaller column index. Values are unchanged.
///
/// A matrix that is already truncated can be cut further, but not widened.
pub fn truncate_topk(s: &SimilarityMatrix, k: usize) -> Result<SimilarityMatrix> {
    if k == 0 {
        return Err(Error::Contract("truncation needs k >= 1".into()));
    }
    if let Strategy::TopK { k: current } = s.strategy {
        if k > current {
            return Err(Error::Contract(format!(
                "cannot widen a top-{current} matrix to top-{k}"
            )));
        }
    }
    let rows = (0..s.n_items)
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = s.row(i);
            let mut row: Vec<(u32, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            if row.len() > k {
                let by_rank =
                    |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
                row.select_nth_unstable_by(k - 1, by_rank);
                row.truncate(k);
                row.sort_unstable_by_key(|&(c, _)| c);
            }
            row
        })
        .collect();
    Ok(SimilarityMatrix::from_rows(
        s.n_items,
        rows,
        Strategy::TopK { k },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Feedback, Interaction};

    fn matrix(n_users: usize, n_items: usize, pairs: &[(usize, usize)]) -> UserItemMatrix {
        let mut rows = vec![Vec::new(); n_users];
        for &(u, i) in pairs {
            rows[u].push(i as u32);
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        UserItemMatrix {
            n_users,
            n_items,
            rows,
        }
    }

    fn single_row(values: &[(u32, f64)], n_items: usize) -> SimilarityMatrix {
        let mut rows = vec![Vec::new(); n_items];
        rows[0] = values.to_vec();
        SimilarityMatrix::from_rows(n_items, rows, Strategy::Full)
    }

    #[test]
    fn build_matrix_sorts_rows() {
        let ds = InteractionDataset::from_interactions(
            [("u0", "i0"), ("u1", "i1"), ("u0", "i2")]
                .iter()
                .map(|(u, i)| Interaction {
                    user: u.to_string(),
                    item: i.to_string(),
                    rating: 1.0,
                    timestamp: 0.0,
                })
                .collect(),
            Feedback::Implicit,
        );
        let m = build_matrix(&ds);
        assert_eq!(m.rows, vec![vec![0, 2], vec![1]]);
        assert_eq!((m.n_users, m.n_items), (2, 3));

        let empty = build_matrix(&InteractionDataset::from_interactions(
            vec![],
            Feedback::Implicit,
        ));
        assert_eq!((empty.n_users, empty.n_items), (0, 0));
        assert_eq!(cosine_similarity(&empty).nnz(), 0);
    }

    #[test]
    fn identical_single_user_vectors() {
        let s = cosine_similarity(&matrix(1, 2, &[(0, 0), (0, 1)]));
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn disjoint_items_store_nothing() {
        let s = cosine_similarity(&matrix(2, 2, &[(0, 0), (1, 1)]));
        assert_eq!(s.nnz(), 0);
    }

    #[test]
    fn half_overlap_is_one_half() {
        // U_0 = {u0, u1}, U_1 = {u1, u2}
        let s = cosine_similarity(&matrix(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)]));
        assert_eq!(s.get(0, 1), 0.5);
    }

    #[test]
    fn truncation_keeps_largest() {
        let s = single_row(&[(1, 0.9), (2, 0.5), (3, 0.2)], 4);
        let t = truncate_topk(&s, 2).unwrap();
        assert_eq!(t.row(0), (&[1u32, 2][..], &[0.9, 0.5][..]));
        assert_eq!(t.strategy(), Strategy::TopK { k: 2 });
    }

    #[test]
    fn truncation_breaks_ties_by_index() {
        let s = single_row(&[(1, 0.5), (2, 0.5), (3, 0.5)], 4);
        let t = truncate_topk(&s, 2).unwrap();
        assert_eq!(t.row(0).0, &[1, 2]);
    }

    #[test]
    fn large_k_is_identity_on_rows() {
        let s = cosine_similarity(&matrix(
            3,
            4,
            &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 0)],
        ));
        let t = truncate_topk(&s, 3).unwrap();
        assert_eq!(t.to_dense(), s.to_dense());
    }

    #[test]
    fn truncation_contract() {
        let s = single_row(&[(1, 0.9)], 2);
        assert!(truncate_topk(&s, 0).is_err());
        let t = truncate_topk(&s, 2).unwrap();
        assert!(truncate_topk(&t, 3).is_err());
        assert_eq!(truncate_topk(&t, 1).unwrap().row(0).0, &[1]);
    }

    #[test]
    fn text_round_trip() {
        let s = cosine_similarity(&matrix(
            3,
            3,
            &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 0), (2, 2)],
        ));
        let t = truncate_topk(&s, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for m in [&s, &t] {
            let path = dir.path().join("sim.txt");
            m.write_text(&path).unwrap();
            assert_eq!(&SimilarityMatrix::read_text(&path).unwrap(), m);
        }
        let text = std::fs::read_to_string(dir.path().join("sim.txt")).unwrap();
        assert!(text.starts_with("items=3 strategy=topk k=1\n"));
        assert!(text.contains("\t5.0000000000000000e-1"));
    }

    #[test]
    fn read_text_rejects_diagonal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "items=2 strategy=full k=0\n1\t1\t0.5\n").unwrap();
        assert!(matches!(
            SimilarityMatrix::read_text(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
