use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::grounding::{
    evaluate_mapping, train_mapping, LabeledExample, MlpModel, SelectionConfig, TrainOptions,
};
use realtor_core::synthetic::separable_examples;

use crate::Outcome;

const GRADIENT_MODELS: usize = 100;
const FD_STEP: f64 = 1e-6;
/// Relative error `|analytic - numeric| / max(|analytic|, |numeric|, FLOOR)`.
const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_FLOOR: f64 = 1e-3;
const SEPARABLE_EPOCHS: usize = 500;
const SEPARABLE_MIN_ACCURACY: f64 = 0.95;

fn loss(model: &MlpModel, examples: &[&LabeledExample]) -> Result<f64, String> {
    model
        .loss_and_gradient(examples)
        .map(|(l, _)| l)
        .map_err(|e| e.to_string())
}

fn random_examples(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<LabeledExample> {
    loop {
        let ex: Vec<LabeledExample> = (0..rng.random_range(1..=5))
            .map(|i| LabeledExample {
                listing_id: format!("g{i}"),
                pooled: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                labels: (0..m)
                    .map(|_| rng.random_bool(0.8).then(|| rng.random_bool(0.5)))
                    .collect(),
            })
            .collect();
        if ex.iter().any(|e| e.labels.iter().any(Option::is_some)) {
            return ex;
        }
    }
}

/// Worst relative gradient error over every parameter of random small models.
fn gradient_check() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    let mut worst: f64 = 0.0;
    for t in 0..GRADIENT_MODELS {
        let d = 2 * rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let mut model = attempt!(MlpModel::init(d, m, rng.random_bool(0.5), t as u64), "init");
        if let Some(b) = model.hidden_bias.as_mut() {
            b.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
        }
        let examples = random_examples(&mut rng, d, m);
        let refs: Vec<&LabeledExample> = examples.iter().collect();
        let (_, grad) = attempt!(model.loss_and_gradient(&refs), "gradient");
        let analytic: Vec<f64> = grad
            .w
            .iter()
            .chain(&grad.o)
            .chain(grad.hidden_bias.iter().flatten())
            .copied()
            .collect();
        let (nw, no) = (model.w.len(), model.o.len());
        for (p, a) in analytic.iter().enumerate() {
            let nudge = |model: &mut MlpModel, delta: f64| {
                let slot = if p < nw {
                    &mut model.w[p]
                } else if p < nw + no {
                    &mut model.o[p - nw]
                } else {
                    &mut model
                        .hidden_bias
                        .as_mut()
                        .expect("bias gradient implies bias")[p - nw - no]
                };
                *slot += delta;
            };
            let mut plus = model.clone();
            nudge(&mut plus, FD_STEP);
            let mut minus = model.clone();
            nudge(&mut minus, -FD_STEP);
            let numeric = (loss(&plus, &refs)? - loss(&minus, &refs)?) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            ensure!(
                rel <= GRADIENT_TOLERANCE,
                "model {t} parameter {p}: analytic {a} vs numeric {numeric}"
            );
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// A one-feature model predicting present exactly when the first input is
/// not positive: `w = [1, 0]`, `o = [-1]`, so the logit is `-relu(x0)`.
fn confusion_check() -> Outcome {
    let model = MlpModel {
        input_dim: 2,
        hidden_dim: 1,
        features: 1,
        w: vec![1.0, 0.0],
        o: vec![-1.0],
        hidden_bias: None,
    };
    let cases = [
        (-1.0, true),
        (-1.0, true),
        (-1.0, false),
        (1.0, true),
        (1.0, false),
        (1.0, false),
        (1.0, false),
        (1.0, false),
        (1.0, false),
        (1.0, false),
    ];
    let examples: Vec<LabeledExample> = cases
        .iter()
        .enumerate()
        .map(|(i, (x, y))| LabeledExample {
            listing_id: format!("c{i}"),
            pooled: vec![*x, 0.5],
            labels: vec![Some(*y)],
        })
        .collect();
    let m = attempt!(
        evaluate_mapping(&model, &examples, &SelectionConfig::default()),
        "evaluate"
    );
    ensure!(
        (m.tp, m.fp, m.fn_, m.tn) == (2, 1, 1, 6),
        "confusion {:?}",
        (m.tp, m.fp, m.fn_, m.tn)
    );
    ensure!(m.accuracy == 0.8, "accuracy {}", m.accuracy);
    ensure!(m.f1 == 2.0 / 3.0, "F1 {}", m.f1);
    Ok("confusion (2,1,1,6): accuracy 0.8, F1 2/3".into())
}

pub fn check() -> Outcome {
    let worst = gradient_check()?;
    let examples = separable_examples(200, 16, 4, 7);
    let opts = TrainOptions {
        epochs: SEPARABLE_EPOCHS,
        seed: 7,
        test_fraction: 0.0,
        ..Default::default()
    };
    let (_, report) = attempt!(train_mapping(&examples, &opts), "training");
    let acc = report.train_metrics.accuracy;
    ensure!(
        acc >= SEPARABLE_MIN_ACCURACY,
        "separable fixture reached only {acc} train accuracy"
    );
    let confusion = confusion_check()?;
    Ok(format!("worst gradient error {worst:.2e} over {GRADIENT_MODELS} models; separable train accuracy {acc:.4}; {confusion}"))
}
