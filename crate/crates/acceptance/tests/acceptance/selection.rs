use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::grounding::{select_marketable, SelectionConfig};
use realtor_core::personalization::{adjusted_scores, select_personalized, PersonalizationConfig};
use realtor_core::surprisal::{
    select_surprising, EmpiricalDistribution, GroupKind, SurprisalConfig,
};

use crate::Outcome;

const INSTANCES: usize = 1_000;
const MAX_FEATURES: usize = 32;
const MAX_GROUPS: usize = 5;
const MAX_GROUP_SIZE: usize = 12;
/// Intensities sit on a 1/20 grid so that ties and boundary ranks are common.
const GRID_STEPS: u32 = 20;

fn grid_value(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.random_range(0..=GRID_STEPS)) / f64::from(GRID_STEPS)
}

/// Ranks each id by how many ids beat it (higher score, or equal score and
/// lower id) and keeps the `k` best, best first.
fn top_k_oracle(scores: &[f64], k: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, usize)> = (0..scores.len())
        .map(|j| {
            let beaten_by = (0..scores.len())
                .filter(|&i| scores[i] > scores[j] || (scores[i] == scores[j] && i < j))
                .count();
            (beaten_by, j)
        })
        .filter(|(beaten_by, _)| *beaten_by < k)
        .collect();
    ranked.sort();
    ranked.into_iter().map(|(_, j)| j).collect()
}

/// Surprising ids by exact integer arithmetic: `above / n <= pct / 100`.
fn surprising_oracle(
    s: &[f64],
    s1: &[usize],
    groups: &[Vec<Vec<f64>>],
    pct: usize,
    min_group: usize,
) -> Vec<usize> {
    s1.iter()
        .copied()
        .filter(|&j| {
            groups
                .iter()
                .filter(|rows| rows.len() >= min_group)
                .any(|rows| {
                    let n = rows.len();
                    let above = rows.iter().filter(|r| r[j] > s[j]).count();
                    let min = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                    above * 100 <= pct * n && s[j] > min
                })
        })
        .collect()
}

pub fn check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E1);
    let (mut s1_total, mut s3_total) = (0, 0);
    for inst in 0..INSTANCES {
        let m = rng.random_range(1..=MAX_FEATURES);
        let s: Vec<f64> = (0..m).map(|_| grid_value(&mut rng)).collect();

        let alpha = f64::from(rng.random_range(1..=9u32)) / 10.0;
        let s1 = select_marketable(&s, &attempt!(SelectionConfig::new(alpha), "alpha"));
        let oracle: Vec<usize> = (0..m).filter(|&j| s[j] >= alpha).collect();
        ensure!(
            s1 == oracle,
            "instance {inst}: S1 {s1:?} != oracle {oracle:?}"
        );
        s1_total += s1.len();

        let importance: Vec<Option<u8>> = (0..m)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(1..=5)))
            .collect();
        let pc = PersonalizationConfig {
            c: *[0.0, 0.01, 0.05, 0.2].choose(&mut rng).unwrap(),
            r0: f64::from(rng.random_range(1..=5u8)),
            top_k: rng.random_range(1..=12),
            ..Default::default()
        };
        let adjusted = attempt!(adjusted_scores(&s, &importance, &pc), "adjusted scores");
        for j in 0..m {
            let r = importance[j].map_or(pc.r0, f64::from);
            ensure!(
                adjusted[j] == s[j] + pc.c * (r - pc.r0),
                "instance {inst}: adjusted score {j}"
            );
        }
        let s2 = select_personalized(&adjusted, &pc);
        let oracle = top_k_oracle(&adjusted, pc.top_k);
        ensure!(
            s2 == oracle,
            "instance {inst}: S2 {s2:?} != oracle {oracle:?}"
        );
        ensure!(
            s2.len() == pc.top_k.min(m),
            "instance {inst}: |S2| = {}",
            s2.len()
        );

        let groups: Vec<Vec<Vec<f64>>> = (0..rng.random_range(0..=MAX_GROUPS))
            .map(|_| {
                (0..rng.random_range(1..=MAX_GROUP_SIZE))
                    .map(|_| (0..m).map(|_| grid_value(&mut rng)).collect())
                    .collect()
            })
            .collect();
        let dists: Vec<EmpiricalDistribution> = groups
            .iter()
            .enumerate()
            .map(|(g, rows)| EmpiricalDistribution::new(GroupKind::City, format!("g{g}"), rows))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let pct = rng.random_range(1..=5usize) * 10;
        let min_group = rng.random_range(1..=6);
        let cfg = SurprisalConfig {
            beta: pct as f64 / 100.0,
            similar_k: 20,
            min_group,
        };
        let out = attempt!(
            select_surprising(&s, &s1, &dists, &cfg),
            format!("instance {inst}")
        );
        let oracle = surprising_oracle(&s, &s1, &groups, pct, min_group);
        ensure!(
            out.features == oracle,
            "instance {inst}: S3 {:?} != oracle {oracle:?}",
            out.features
        );
        ensure!(
            out.features.iter().all(|j| s1.contains(j)),
            "instance {inst}: S3 not within S1"
        );
        s3_total += out.features.len();

        let wider = SurprisalConfig {
            beta: (pct + 20) as f64 / 100.0,
            ..cfg
        };
        let more = attempt!(
            select_surprising(&s, &s1, &dists, &wider),
            format!("instance {inst}")
        );
        ensure!(
            out.features.iter().all(|j| more.features.contains(j)),
            "instance {inst}: S3 shrank as beta grew"
        );
    }
    Ok(format!(
        "{INSTANCES} instances; {s1_total} marketable and {s3_total} surprising selections matched"
    ))
}
