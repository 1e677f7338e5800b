use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::arena::{
    elo_update, expected_win_rate, Choice, ComparisonEvent, EloConfig, EloTable,
};

use crate::Outcome;

const STRONG_TOLERANCE: f64 = 1e-12;
const HEADLINE_TOLERANCE: f64 = 1e-3;
const HEADLINE_EXPECTED: f64 = 0.894;
const SEQUENCES: usize = 10_000;
const MAX_SEQUENCE_LEN: u64 = 40;
const MODELS: [&str; 6] = [
    "AI_REALTOR",
    "NO_SURPRISAL",
    "ONLY_SIGNALING",
    "VANILLA",
    "HUMAN",
    "CONTROL_PLAIN",
];

pub fn check() -> Outcome {
    let cfg = EloConfig::default();
    let even = expected_win_rate(1000.0, 1000.0, &cfg);
    ensure!(even == 0.5, "E(1000, 1000) = {even}, want exactly 0.5");
    let strong = expected_win_rate(1400.0, 1000.0, &cfg);
    ensure!(
        (strong - 10.0 / 11.0).abs() <= STRONG_TOLERANCE,
        "E(1400, 1000) = {strong}, want 10/11"
    );
    let headline = expected_win_rate(1318.0, 947.0, &cfg);
    // evaluated through exp/ln rather than powf
    let independent = 1.0 / (1.0 + (std::f64::consts::LN_10 * (947.0 - 1318.0) / 400.0).exp());
    ensure!(
        (headline - independent).abs() <= HEADLINE_TOLERANCE,
        "E(1318, 947) = {headline}, formula gives {independent}"
    );
    ensure!(
        (independent - HEADLINE_EXPECTED).abs() <= HEADLINE_TOLERANCE,
        "formula gives {independent}, want about 0.894"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0xE10);
    let mut updates = 0usize;
    for sequence in 0..SEQUENCES {
        let config = EloConfig {
            scale_by_strength: rng.random_bool(0.25),
            ..cfg
        };
        let mut table = EloTable::default();
        for seq in 1..=rng.random_range(1..=MAX_SEQUENCE_LEN) {
            let a = rng.random_range(0..MODELS.len());
            let b = (a + rng.random_range(1..MODELS.len())) % MODELS.len();
            let event = ComparisonEvent {
                seq,
                buyer_id: "b".into(),
                listing_id: "l".into(),
                model_a: MODELS[a].into(),
                model_b: MODELS[b].into(),
                record_a: None,
                record_b: None,
                choice: if rng.random_bool(0.5) {
                    Choice::A
                } else {
                    Choice::B
                },
                strength: rng.random_range(1..=5),
                rationale: "r".into(),
                attention_check: rng.random_bool(0.1),
                control: rng.random_bool(0.1),
            };
            attempt!(
                elo_update(&mut table, &event, &config),
                format!("sequence {sequence}")
            );
            updates += 1;
            let expected = config.initial * table.ratings.len() as f64;
            ensure!(
                table.total() == expected,
                "sequence {sequence} seq {seq}: total {} != {expected}",
                table.total()
            );
        }
    }
    Ok(format!("E(1318,947) = {headline:.6}; zero-sum exact over {SEQUENCES} sequences ({updates} updates)"))
}
