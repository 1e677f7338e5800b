use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::arena::{
    simulate_buyer, simulation_accuracy, Choice, PairTask, Prediction, PredictionRecord,
    SimulationRun,
};
use realtor_core::llm::{RetryPolicy, ScriptedClient};

use crate::Outcome;

const BUYERS: usize = 20;
const SHOTS: usize = 10;
/// Each buyer has one more task than the largest shot count.
const TASKS: usize = SHOTS + 1;
const TIE_RATE: f64 = 0.15;

fn pick(rng: &mut ChaCha8Rng) -> Choice {
    if rng.random_bool(0.5) {
        Choice::A
    } else {
        Choice::B
    }
}

fn synthetic_runs() -> Vec<SimulationRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x55A);
    let mut runs = Vec::new();
    for b in 0..BUYERS {
        for k in 0..SHOTS {
            // buyer 3 at 4 shots sees nothing but ties
            let all_ties = b == 3 && k == 4;
            let predictions = (k..TASKS)
                .map(|t| {
                    let choice = (!all_ties && !rng.random_bool(TIE_RATE)).then(|| pick(&mut rng));
                    PredictionRecord {
                        target_seq: t as u64 + 1,
                        prediction: Prediction {
                            choice,
                            score_a_first: 50,
                            score_b_first: 50,
                        },
                        actual: pick(&mut rng),
                    }
                })
                .collect();
            runs.push(SimulationRun {
                buyer_id: format!("buyer-{b:02}"),
                shots: k,
                predictions,
            });
        }
    }
    runs
}

/// Correct and judged counts of buyer `b` at `k` shots, by direct scan.
fn counts(runs: &[SimulationRun], b: usize, k: usize) -> (usize, usize) {
    let run = &runs[b * SHOTS + k];
    let mut correct = 0;
    let mut judged = 0;
    for p in &run.predictions {
        if let Some(c) = p.prediction.choice {
            judged += 1;
            if c == p.actual {
                correct += 1;
            }
        }
    }
    (correct, judged)
}

fn metrics_check() -> Outcome {
    let runs = synthetic_runs();
    let m = attempt!(simulation_accuracy(&runs), "metrics");
    ensure!(m.ssa.len() == SHOTS, "{} shot rows", m.ssa.len());
    for k in 0..SHOTS {
        let mut accs = Vec::new();
        for b in 0..BUYERS {
            let (c, j) = counts(&runs, b, k);
            if j > 0 {
                accs.push(c as f64 / j as f64);
            }
        }
        let mut sum = 0.0;
        for a in &accs {
            sum += a;
        }
        let mean = sum / accs.len() as f64;
        let mut sq = 0.0;
        for a in &accs {
            sq += (a - mean) * (a - mean);
        }
        let row = &m.ssa[k];
        ensure!(
            row.shots == k && row.buyers == accs.len(),
            "shot {k}: {} buyers, oracle {}",
            row.buyers,
            accs.len()
        );
        ensure!(
            row.mean == mean,
            "shot {k}: SSA {} != oracle {mean}",
            row.mean
        );
        ensure!(
            row.variance == sq / accs.len() as f64,
            "shot {k}: variance {}",
            row.variance
        );
    }
    ensure!(
        m.ssa[4].buyers == BUYERS - 1,
        "an all-tie run still counted at 4 shots"
    );
    for b in 0..BUYERS {
        let mut sum = 0.0;
        let mut n = 0;
        for k in 0..SHOTS {
            let (c, j) = counts(&runs, b, k);
            if j > 0 {
                sum += c as f64 / j as f64;
                n += 1;
            }
        }
        let id = format!("buyer-{b:02}");
        let usa = m.usa.get(&id).copied();
        ensure!(
            usa == Some(sum / n as f64),
            "{id}: USA {usa:?} != oracle {}",
            sum / n as f64
        );
    }
    let ties = runs
        .iter()
        .flat_map(|r| &r.predictions)
        .filter(|p| p.prediction.choice.is_none())
        .count();
    ensure!(m.ties == ties, "ties {} != oracle {ties}", m.ties);
    let binned: usize = m.usa_histogram.iter().map(|h| h.count).sum();
    ensure!(binned == BUYERS, "histogram holds {binned} buyers");
    Ok(format!(
        "{BUYERS}x{SHOTS} matrix: SSA, variance and USA exact; {ties} ties excluded"
    ))
}

/// Two calls per prediction, the second with the descriptions swapped.
fn dual_order_check() -> Outcome {
    let llm = ScriptedClient::with_responder("scripted", |messages| {
        let last = &messages.last()?.content;
        let first = last.split("Description 0: ").nth(1)?;
        Some(
            if first.starts_with("Preferred") {
                "Score: 80"
            } else {
                "Score: 30"
            }
            .to_string(),
        )
    });
    let tasks: Vec<PairTask> = (0..6u64)
        .map(|i| {
            let preferred_first = i % 2 == 0;
            let (a, b) = ("Preferred text.".to_string(), "Other text.".to_string());
            PairTask {
                seq: i + 1,
                listing: "facts".into(),
                text_a: if preferred_first {
                    a.clone()
                } else {
                    b.clone()
                },
                text_b: if preferred_first { b } else { a },
                choice: if preferred_first {
                    Choice::A
                } else {
                    Choice::B
                },
                strength: 2,
                rationale: "clear".into(),
            }
        })
        .collect();
    let shots = 2;
    let run = attempt!(
        simulate_buyer(
            "b",
            "profile",
            &tasks,
            shots,
            &llm,
            &RetryPolicy::immediate(0)
        ),
        "simulate"
    );
    let targets = tasks.len() - shots;
    ensure!(
        run.predictions.len() == targets,
        "{} predictions",
        run.predictions.len()
    );
    ensure!(
        llm.call_count() == 2 * targets,
        "{} model calls for {targets} predictions",
        llm.call_count()
    );
    let calls = llm.calls();
    for (i, t) in tasks[shots..].iter().enumerate() {
        let ab = &calls[2 * i].last().expect("message").content;
        let ba = &calls[2 * i + 1].last().expect("message").content;
        ensure!(
            ab.contains(&format!("Description 0: {}", t.text_a)),
            "call {} is not in recorded order",
            2 * i
        );
        ensure!(
            ba.contains(&format!("Description 0: {}", t.text_b)),
            "call {} is not swapped",
            2 * i + 1
        );
        ensure!(
            calls[2 * i].len() == 2 * shots + 1,
            "history not replayed in call {}",
            2 * i
        );
    }
    ensure!(
        run.accuracy() == Some(1.0),
        "order-consistent scores should predict every choice"
    );
    Ok(format!(
        "{} calls for {targets} predictions",
        llm.call_count()
    ))
}

pub fn check() -> Outcome {
    Ok(format!(
        "{}; dual order: {}",
        metrics_check()?,
        dual_order_check()?
    ))
}
