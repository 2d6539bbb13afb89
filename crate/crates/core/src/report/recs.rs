use std::fmt::Write as _;
use std::path::Path;

use super::{Num, ReportError};
use crate::ingest::IdMap;
use crate::models::{ItemScore, RecommendationList, UserRecommendations};

fn check_field(id: &str) -> Result<&str, ReportError> {
    if id.contains(['\t', '\n', '\r']) {
        return Err(ReportError::UnwritableId(id.to_owned()));
    }
    Ok(id)
}

/// TSV body `raw_user \t raw_item \t rank \t score`, ranks from 1, users in list order.
pub fn render_recommendations(recs: &RecommendationList, users: &IdMap, items: &IdMap) -> Result<String, ReportError> {
    let mut out = String::new();
    for l in &recs.lists {
        let u = users
            .raw(l.user)
            .ok_or_else(|| ReportError::UnknownId(format!("user #{}", l.user)))?;
        let u = check_field(u)?;
        for (r, s) in l.items.iter().enumerate() {
            let i = items
                .raw(s.item)
                .ok_or_else(|| ReportError::UnknownId(format!("item #{}", s.item)))?;
            // `{}` on f64 is the shortest string that parses back to the same value
            writeln!(out, "{u}\t{}\t{}\t{}", check_field(i)?, r + 1, Num(s.score)).expect("string write");
        }
    }
    Ok(out)
}

pub fn write_recommendations(
    recs: &RecommendationList,
    users: &IdMap,
    items: &IdMap,
    path: &Path,
) -> Result<(), ReportError> {
    let body = render_recommendations(recs, users, items)?;
    std::fs::write(path, body).map_err(|e| ReportError::Io(path.to_path_buf(), e))
}

/// Parses a recommendation TSV back to internal indices. Users whose list was empty
/// have no rows and therefore do not appear.
pub fn read_recommendations(
    path: &Path,
    users: &IdMap,
    items: &IdMap,
) -> Result<Vec<UserRecommendations>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(path.to_path_buf(), e))?;
    let bad = |line: usize, msg: &str| ReportError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_owned(),
    };
    let mut out: Vec<UserRecommendations> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(n, "expected 4 tab-separated fields"));
        }
        let user = users
            .internal(f[0])
            .ok_or_else(|| ReportError::UnknownId(f[0].to_owned()))?;
        let item = items
            .internal(f[1])
            .ok_or_else(|| ReportError::UnknownId(f[1].to_owned()))?;
        let rank: usize = f[2].parse().map_err(|_| bad(n, "rank is not an integer"))?;
        let score: f64 = f[3].parse().map_err(|_| bad(n, "score is not a number"))?;
        if out.last().is_none_or(|l| l.user != user) {
            out.push(UserRecommendations {
                user,
                items: Vec::new(),
            });
        }
        let l = out.last_mut().expect("pushed above");
        if rank != l.items.len() + 1 {
            return Err(bad(n, "ranks must run 1, 2, ... within a user"));
        }
        l.items.push(ItemScore { item, score });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, DedupPolicy, RawInteraction};
    use crate::models::{fit, recommend, Deadline, Family, ModelConfig, ParamValue};

    #[test]
    fn round_trip_and_shape() {
        let mut r = Vec::new();
        for u in 0..6 {
            for i in 0..8 {
                if (u * 3 + i) % 4 != 0 {
                    r.push(RawInteraction::implicit(format!("user {u}"), format!("m:{i}")));
                }
            }
        }
        let d = build_dataset(r, DedupPolicy::Error).unwrap();
        let params = [("neighbors".to_owned(), ParamValue::Int(5))].into();
        let cfg = ModelConfig::from_params(Family::ItemKnn, &params).unwrap();
        let m = fit(&cfg, &d, 1, &Deadline::none()).unwrap();
        let recs = recommend(&m, &[0, 1, 2, 3, 4, 5], 3, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.tsv");
        write_recommendations(&recs, d.user_map(), d.item_map(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let first: Vec<&str> = text.lines().take(3).collect();
        assert_eq!(first.len(), 3);
        for (r, line) in first.iter().enumerate() {
            assert!(line.starts_with("user 0\t"));
            assert_eq!(line.split('\t').nth(2).unwrap(), (r + 1).to_string());
        }
        let back = read_recommendations(&p, d.user_map(), d.item_map()).unwrap();
        assert_eq!(back, recs.lists);
    }

    #[test]
    fn tab_in_id_is_rejected() {
        let d = build_dataset(vec![RawInteraction::implicit("a\tb", "i")], DedupPolicy::Error).unwrap();
        let recs = RecommendationList {
            k: 1,
            filter_seen: false,
            lists: vec![UserRecommendations {
                user: 0,
                items: vec![ItemScore { item: 0, score: 1.0 }],
            }],
        };
        assert!(matches!(
            render_recommendations(&recs, d.user_map(), d.item_map()),
            Err(ReportError::UnwritableId(_))
        ));
    }
}
