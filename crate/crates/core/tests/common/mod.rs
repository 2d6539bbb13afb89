#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpbench::ingest::{Dataset, DatasetBuilder, DedupPolicy, RawInteraction};

pub fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data")
}

pub fn sample_ratings() -> PathBuf {
    sample_dir().join("ratings.tsv")
}

/// Writes `body` below a `[dataset]` block pointing at the sample ratings.
pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let text = format!(
        "seed = 42\n\n[dataset]\npath = {:?}\ncolumns = [\"user\", \"item\", \"rating\", \"timestamp\"]\n\n{body}",
        sample_ratings()
    );
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Users in two halves, each interacting mostly with its own half of the catalog.
pub fn block_dataset(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n_items / 2;
    let mut records = Vec::new();
    for u in 0..n_users {
        let block = u % 2;
        let mut items = BTreeSet::new();
        while items.len() < per_user {
            let own = rng.random_bool(0.9);
            let b = if own { block } else { 1 - block };
            items.insert(b * half + rng.random_range(0..half));
        }
        for (t, i) in items.into_iter().enumerate() {
            records.push(RawInteraction {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                rating: 1.0,
                timestamp: Some(t as i64),
            });
        }
    }
    DatasetBuilder::new(DedupPolicy::Error)
        .with_item_catalog((0..n_items).map(|i| format!("i{i}")))
        .build(records)
        .unwrap()
}

// Reference metrics written straight from the textbook definitions, one user at a time.

pub fn naive_precision(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    list.iter().take(k).filter(|i| rel.contains(i)).count() as f64 / k as f64
}

pub fn naive_recall(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    list.iter().take(k).filter(|i| rel.contains(i)).count() as f64 / rel.len() as f64
}

pub fn naive_hit(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    if list.iter().take(k).any(|i| rel.contains(i)) {
        1.0
    } else {
        0.0
    }
}

pub fn naive_mrr(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    for (pos, i) in list.iter().take(k).enumerate() {
        if rel.contains(i) {
            return 1.0 / (pos as f64 + 1.0);
        }
    }
    0.0
}

pub fn naive_map(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    let mut sum = 0.0;
    for r in 1..=k.min(list.len()) {
        if rel.contains(&list[r - 1]) {
            sum += naive_precision(list, rel, r);
        }
    }
    sum / k.min(rel.len()) as f64
}

pub fn naive_ndcg(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, i) in list.iter().take(k).enumerate() {
        if rel.contains(i) {
            dcg += 1.0 / (pos as f64 + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..k.min(rel.len()) {
        idcg += 1.0 / (pos as f64 + 2.0).log2();
    }
    dcg / idcg
}

pub fn naive_f1(list: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
    let p = naive_precision(list, rel, k);
    let r = naive_recall(list, rel, k);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Catalog-level metrics over the first `k` slots of every list.
pub fn naive_system(lists: &[Vec<u32>], train_pop: &[usize], k: usize, share: f64) -> HashMap<&'static str, f64> {
    let n = train_pop.len();
    let mut counts = vec![0usize; n];
    for l in lists {
        for &i in l.iter().take(k) {
            counts[i as usize] += 1;
        }
    }
    let slots: usize = counts.iter().sum();
    let mut out = HashMap::new();
    out.insert(
        "ItemCoverage",
        counts.iter().filter(|&&c| c > 0).count() as f64 / n as f64,
    );
    out.insert(
        "UserCoverage",
        lists.iter().filter(|l| !l.is_empty()).count() as f64 / lists.len() as f64,
    );

    let mut asc = counts.clone();
    asc.sort();
    let mut g = 0.0;
    for (idx, &c) in asc.iter().enumerate() {
        let i = idx as f64 + 1.0;
        g += (2.0 * i - n as f64 - 1.0) * c as f64;
    }
    out.insert("Gini", g / (n as f64 * slots as f64));

    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / slots as f64;
            h -= p * p.log2();
        }
    }
    out.insert("ShannonEntropy", h);

    let max_pop = *train_pop.iter().max().unwrap() as f64;
    let mut epc = 0.0;
    let mut arp = 0.0;
    for l in lists {
        for &i in l.iter().take(k) {
            epc += 1.0 - train_pop[i as usize] as f64 / max_pop;
            arp += train_pop[i as usize] as f64;
        }
    }
    out.insert("EPC", epc / slots as f64);
    out.insert("ARP", arp / slots as f64);

    // short head: most popular items first (lower index wins ties) until `share` is reached
    let total: usize = train_pop.iter().sum();
    let mut by_pop: Vec<usize> = (0..n).collect();
    by_pop.sort_by_key(|&i| (std::cmp::Reverse(train_pop[i]), i));
    let mut head = BTreeSet::new();
    let mut covered = 0usize;
    for i in by_pop {
        if covered as f64 >= share * total as f64 {
            break;
        }
        head.insert(i as u32);
        covered += train_pop[i];
    }
    let mut tail = 0usize;
    for l in lists {
        tail += l.iter().take(k).filter(|i| !head.contains(i)).count();
    }
    out.insert("APLT", tail as f64 / slots as f64);
    out
}
