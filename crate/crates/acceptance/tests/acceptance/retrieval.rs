use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::listing::Listing;
use realtor_core::surprisal::{
    percentile_rank, EmpiricalDistribution, GroupKind, ListingIndex, SimilarityWeights,
};
use realtor_core::synthetic;

use crate::Outcome;

const FIXTURE_SIZE: usize = 100;
const KS: [usize; 3] = [1, 5, 20];
/// Scores are recomputed in the same operation order, so they should agree
/// to the last bit; this allows for nothing more than reassociation.
const SCORE_TOLERANCE: f64 = 1e-9;
const PERCENTILE_DRAWS: usize = 1_000;

fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn text_of(l: &Listing) -> String {
    let mut t = l.description.clone().unwrap_or_default();
    for i in &l.home_insights {
        t.push(' ');
        t.push_str(i);
    }
    t
}

fn proximity(d: Option<f64>, q: Option<f64>) -> f64 {
    match (d, q) {
        (Some(d), Some(q)) => 1.0 / (1.0 + (d - q).abs() / q.abs().max(1.0)),
        _ => 0.0,
    }
}

/// Exhaustive BM25 plus numeric proximity, one document at a time.
fn oracle_scores(docs: &[Listing], query: &Listing, w: &SimilarityWeights) -> Vec<f64> {
    let doc_tokens: Vec<Vec<String>> = docs.iter().map(|d| tokens(&text_of(d))).collect();
    let avg = doc_tokens.iter().map(Vec::len).sum::<usize>() as f64 / docs.len() as f64;
    let n = docs.len() as f64;
    let terms: BTreeSet<String> = tokens(&text_of(query)).into_iter().collect();
    docs.iter()
        .zip(&doc_tokens)
        .map(|(doc, toks)| {
            let mut text = 0.0;
            for term in &terms {
                let tf = toks.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = doc_tokens.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let norm = toks.len() as f64 / avg;
                text += idf * tf * (w.bm25_k1 + 1.0)
                    / (tf + w.bm25_k1 * (1.0 - w.bm25_b + w.bm25_b * norm));
            }
            w.text * text
                + w.price * proximity(Some(doc.price), Some(query.price))
                + w.bedrooms * proximity(Some(doc.bedrooms), Some(query.bedrooms))
                + w.bathrooms * proximity(Some(doc.bathrooms), Some(query.bathrooms))
                + w.living_area * proximity(doc.living_area_value, query.living_area_value)
        })
        .collect()
}

pub fn check() -> Outcome {
    let docs = synthetic::listings(FIXTURE_SIZE, 5);
    let index = attempt!(ListingIndex::build(docs.clone()), "index");
    let w = SimilarityWeights::default();
    let mut compared = 0;
    for query in &docs {
        let scores = oracle_scores(&docs, query, &w);
        let mut ranked: Vec<(&str, f64)> = docs
            .iter()
            .zip(&scores)
            .filter(|(d, _)| d.id != query.id)
            .map(|(d, s)| (d.id.as_str(), *s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for k in KS {
            let got = attempt!(index.query_similar(query, k), query.id);
            let want = &ranked[..k];
            ensure!(
                got.peers.len() == k && !got.shortfall,
                "{} k={k}: {} peers",
                query.id,
                got.peers.len()
            );
            for ((gid, gs), (wid, ws)) in got.peers.iter().zip(want) {
                ensure!(gid == wid, "{} k={k}: got {gid}, oracle {wid}", query.id);
                ensure!(
                    (gs - ws).abs() <= SCORE_TOLERANCE,
                    "{} k={k}: score {gs} vs {ws}",
                    query.id
                );
            }
            compared += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x9E4);
    for draw in 0..PERCENTILE_DRAWS {
        let n = rng.random_range(1..=40);
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    f64::from(rng.random_range(0..=10u32)) / 10.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let p = if rng.random_bool(0.5) {
            samples[rng.random_range(0..n)]
        } else {
            f64::from(rng.random_range(0..=10u32)) / 10.0
        };
        let rows: Vec<Vec<f64>> = samples.iter().map(|v| vec![*v]).collect();
        let g = attempt!(
            EmpiricalDistribution::new(GroupKind::Similar, "draw", &rows),
            draw
        );
        let rank = attempt!(percentile_rank(&g, 0, p), draw);
        let above = samples.iter().filter(|v| **v > p).count();
        ensure!(
            rank == above as f64 / n as f64,
            "draw {draw}: rank {rank}, oracle {above}/{n}"
        );
    }
    Ok(format!("{compared} top-k queries on {FIXTURE_SIZE} listings and {PERCENTILE_DRAWS} percentile draws matched"))
}
