//! Random instances and dense brute-force oracles shared by the integration
//! tests. Nothing here calls into the sparse code paths it is compared with.
#![allow(dead_code)]

use std::collections::HashSet;

use itemknn::ingest::{Feedback, Interaction, InteractionDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Explicit dataset with up to `max_users` users and `max_items` items.
/// Ratings are 1..=5 so roughly 40% of rows survive the "> 3" threshold.
pub fn random_explicit(seed: u64, max_users: usize, max_items: usize) -> InteractionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.gen_range(2..=max_users);
    let n_items = rng.gen_range(2..=max_items);
    let density = rng.gen_range(0.2..0.9);
    let mut rows = Vec::new();
    for u in 0..n_users {
        for i in 0..n_items {
            if rng.gen_bool(density) {
                rows.push(Interaction {
                    user: format!("u{u}"),
                    item: format!("i{i}"),
                    rating: rng.gen_range(1..=5) as f64,
                    timestamp: rng.gen_range(0..1000) as f64,
                });
            }
        }
    }
    // shuffle row order so first-appearance indexing is non-trivial
    for idx in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=idx);
        rows.swap(idx, j);
    }
    InteractionDataset::from_interactions(rows, Feedback::Explicit)
}

/// Implicit dataset built directly (every generated pair kept).
pub fn random_implicit(seed: u64, max_users: usize, max_items: usize) -> InteractionDataset {
    let ds = random_explicit(seed, max_users, max_items);
    let rows = ds
        .interactions()
        .iter()
        .map(|r| Interaction {
            rating: 1.0,
            ..r.clone()
        })
        .collect();
    InteractionDataset::from_interactions(rows, Feedback::Implicit)
}

/// `sims[i][j] = |U_i ∩ U_j| / (sqrt|U_i| * sqrt|U_j|)`, zero diagonal.
pub fn dense_cosine(n_items: usize, pairs: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut users: Vec<HashSet<usize>> = vec![HashSet::new(); n_items];
    for &(u, i) in pairs {
        users[i].insert(u);
    }
    let mut sims = vec![vec![0.0; n_items]; n_items];
    for i in 0..n_items {
        for j in 0..n_items {
            if i == j || users[i].is_empty() || users[j].is_empty() {
                continue;
            }
            let shared = users[i].intersection(&users[j]).count() as f64;
            sims[i][j] = shared / ((users[i].len() as f64).sqrt() * (users[j].len() as f64).sqrt());
        }
    }
    sims
}

/// Keeps the k largest positive values per row; ties to the smaller column.
pub fn dense_topk(sims: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    sims.iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
            let mut out = vec![0.0; row.len()];
            for &j in order.iter().take(k) {
                out[j] = row[j];
            }
            out
        })
        .collect()
}

/// Candidate scores: all positive similarities to profile items summed, or
/// only the `k` largest of them.
pub fn dense_scores(sims: &[Vec<f64>], profile: &[usize], topk: Option<usize>) -> Vec<f64> {
    sims.iter()
        .map(|row| {
            let mut vals: Vec<f64> = profile
                .iter()
                .map(|&j| row[j])
                .filter(|&v| v > 0.0)
                .collect();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            match topk {
                Some(k) => vals.iter().take(k).sum(),
                None => vals.iter().sum(),
            }
        })
        .collect()
}

/// nDCG by literal summation of both series.
pub fn brute_ndcg(hits: &[bool], n_relevant: usize, n: usize, fixed_k: bool) -> f64 {
    let mut dcg = 0.0;
    for (p, &h) in hits.iter().enumerate() {
        if h {
            dcg += (2f64.powi(1) - 1.0) / ((p + 2) as f64).log2();
        }
    }
    let ideal_len = if fixed_k { n } else { n.min(n_relevant) };
    let mut idcg = 0.0;
    for p in 0..ideal_len {
        idcg += 1.0 / ((p + 2) as f64).log2();
    }
    dcg / idcg
}

pub fn brute_precision(hits: &[bool], n: usize) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / n as f64
}

pub fn brute_recall(hits: &[bool], n_relevant: usize) -> f64 {
    (hits.iter().filter(|&&h| h).count() as f64 / n_relevant as f64).min(1.0)
}

pub fn ml100k_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/ml-100k.inter")
}
