//! Attribute-to-feature mapping.
//!
//! Feature presence is labeled by a language model from human-written text,
//! attributes are embedded and mean-pooled, and a one-hidden-layer network
//! with independent sigmoid heads predicts per-feature intensities:
//! `s_i(x) = sigmoid(O_i · relu(W · e(x)))`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listing::{attribute_statements, AttributeStatement, Listing, EMBEDDING_ATTRIBUTES};
use crate::llm::{DecodeParams, EmbeddingClient, LanguageModelClient, Message, RetryPolicy};
use crate::prompts::{render, Bindings, PromptId};
use crate::schema::FeatureSchema;
use crate::util::sha256_hex;

/// Grid searched for the selection threshold.
pub const ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub alpha: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl SelectionConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::Precondition(format!("alpha {alpha} outside (0, 1)")))
        }
    }
}

/// Marketable features: ids with intensity at or above `alpha`, ascending.
pub fn select_marketable(intensities: &[f64], config: &SelectionConfig) -> Vec<usize> {
    intensities
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= config.alpha)
        .map(|(j, _)| j)
        .collect()
}

/// Tolerant YES/NO parse: case, surrounding punctuation and trailing text are ignored.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    let first = reply
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_lowercase();
    match first.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// One flag per schema leaf; `None` marks a feature the model could not
/// label after one reprompt. Those cells are masked out of training.
pub fn label_features(
    listing: &Listing,
    schema: &FeatureSchema,
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<Vec<Option<bool>>> {
    let description = listing
        .description
        .as_deref()
        .filter(|d| !d.trim().is_empty())
        .ok_or_else(|| Error::Precondition(format!("listing {} has no description", listing.id)))?;
    let params = DecodeParams::default();
    let mut labels = Vec::new();
    for leaf in schema.leaves() {
        let prompt = render(
            PromptId::FeatureLabeling,
            &Bindings::new()
                .set("feature_name", &leaf.name)
                .set("keywords", leaf.keywords.join(", "))
                .set("human_description", description),
        )?;
        let mut label = None;
        for _ in 0..2 {
            let reply = retry.run(|| llm.complete(&[Message::user(prompt.clone())], &params))?;
            label = parse_yes_no(&reply);
            if label.is_some() {
                break;
            }
        }
        labels.push(label);
    }
    Ok(labels)
}

/// Arithmetic mean of the statement embeddings.
pub fn pool_embeddings(
    statements: &[AttributeStatement],
    client: &dyn EmbeddingClient,
) -> Result<Vec<f64>> {
    if statements.is_empty() {
        return Err(Error::Precondition("cannot pool zero statements".into()));
    }
    let dim = client.dimension();
    let mut sum = vec![0.0; dim];
    for s in statements {
        let v = client.embed(&s.statement)?;
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite embedding for `{}`",
                s.statement
            )));
        }
        sum.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
    }
    let n = statements.len() as f64;
    Ok(sum.into_iter().map(|x| x / n).collect())
}

/// Pooled embedding of a listing's attribute statements.
pub fn embed_listing(listing: &Listing, client: &dyn EmbeddingClient) -> Result<Vec<f64>> {
    let statements = attribute_statements(listing, EMBEDDING_ATTRIBUTES).statements;
    pool_embeddings(&statements, client)
}

/// Labels and embeds every listing with a description. Listings without one
/// are returned by id instead.
pub fn prepare_examples(
    listings: &[&Listing],
    schema: &FeatureSchema,
    llm: &dyn LanguageModelClient,
    embedder: &dyn EmbeddingClient,
    retry: &RetryPolicy,
) -> Result<(Vec<LabeledExample>, Vec<String>)> {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for listing in listings {
        if listing
            .description
            .as_deref()
            .is_none_or(|d| d.trim().is_empty())
        {
            skipped.push(listing.id.clone());
            continue;
        }
        examples.push(LabeledExample {
            listing_id: listing.id.clone(),
            pooled: embed_listing(listing, embedder)?,
            labels: label_features(listing, schema, llm, retry)?,
        });
    }
    Ok((examples, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub listing_id: String,
    pub pooled: Vec<f64>,
    pub labels: Vec<Option<bool>>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log sigmoid(z)` for label 1, `-log(1 - sigmoid(z))` for label 0, computed stably.
fn logistic_loss(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if y {
        softplus - z
    } else {
        softplus
    }
}

/// Weights are stored row-major: `w` is hidden × input, `o` is features × hidden
/// (row `i` is the head of feature `i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub features: usize,
    pub w: Vec<f64>,
    pub o: Vec<f64>,
    /// Hidden-layer bias; absent by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<f64>,
    pub o: Vec<f64>,
    pub hidden_bias: Option<Vec<f64>>,
}

struct Forward {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl MlpModel {
    fn check_dims(input_dim: usize, features: usize) -> Result<usize> {
        if input_dim < 2 || !input_dim.is_multiple_of(2) {
            return Err(Error::Precondition(format!(
                "embedding dimension {input_dim} must be even and >= 2"
            )));
        }
        if features == 0 {
            return Err(Error::Precondition("feature count must be >= 1".into()));
        }
        Ok(input_dim / 2)
    }

    pub fn zeros(input_dim: usize, features: usize, with_bias: bool) -> Result<Self> {
        let hidden_dim = Self::check_dims(input_dim, features)?;
        Ok(Self {
            input_dim,
            hidden_dim,
            features,
            w: vec![0.0; hidden_dim * input_dim],
            o: vec![0.0; features * hidden_dim],
            hidden_bias: with_bias.then(|| vec![0.0; hidden_dim]),
        })
    }

    /// Uniform fan-in initialization: `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn init(input_dim: usize, features: usize, with_bias: bool, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(input_dim, features, with_bias)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bw = 1.0 / (input_dim as f64).sqrt();
        let bo = 1.0 / (m.hidden_dim as f64).sqrt();
        m.w.iter_mut().for_each(|x| *x = rng.random_range(-bw..=bw));
        m.o.iter_mut().for_each(|x| *x = rng.random_range(-bo..=bo));
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let hidden = Self::check_dims(self.input_dim, self.features)?;
        if hidden != self.hidden_dim
            || self.w.len() != hidden * self.input_dim
            || self.o.len() != self.features * hidden
            || self.hidden_bias.as_ref().is_some_and(|b| b.len() != hidden)
        {
            return Err(Error::Precondition(
                "weight shapes inconsistent with dimensions".into(),
            ));
        }
        let all = self
            .w
            .iter()
            .chain(&self.o)
            .chain(self.hidden_bias.iter().flatten());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("model holds non-finite weights".into()));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let pre: Vec<f64> = (0..self.hidden_dim)
            .map(|h| {
                let row = &self.w[h * self.input_dim..(h + 1) * self.input_dim];
                let b = self.hidden_bias.as_ref().map_or(0.0, |b| b[h]);
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b
            })
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
        let logits = (0..self.features)
            .map(|i| {
                let row = &self.o[i * self.hidden_dim..(i + 1) * self.hidden_dim];
                row.iter().zip(&hidden).map(|(a, b)| a * b).sum()
            })
            .collect();
        Forward {
            pre,
            hidden,
            logits,
        }
    }

    /// Feature intensities, each in (0, 1).
    pub fn predict(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        if pooled.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: pooled.len(),
            });
        }
        Ok(self
            .forward(pooled)
            .logits
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Mean logistic loss over labeled cells and its gradient.
    pub fn loss_and_gradient(&self, examples: &[&LabeledExample]) -> Result<(f64, Gradient)> {
        let mut grad = Gradient {
            w: vec![0.0; self.w.len()],
            o: vec![0.0; self.o.len()],
            hidden_bias: self.hidden_bias.as_ref().map(|b| vec![0.0; b.len()]),
        };
        let cells: usize = examples
            .iter()
            .map(|e| e.labels.iter().flatten().count())
            .sum();
        if cells == 0 {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / cells as f64;
        let mut loss = 0.0;
        for ex in examples {
            if ex.pooled.len() != self.input_dim {
                return Err(Error::Dimension {
                    expected: self.input_dim,
                    actual: ex.pooled.len(),
                });
            }
            if ex.labels.len() != self.features {
                return Err(Error::Dimension {
                    expected: self.features,
                    actual: ex.labels.len(),
                });
            }
            let fwd = self.forward(&ex.pooled);
            let mut d_hidden = vec![0.0; self.hidden_dim];
            for (i, label) in ex.labels.iter().enumerate() {
                let Some(y) = *label else { continue };
                let z = fwd.logits[i];
                loss += logistic_loss(z, y) * scale;
                let dz = (sigmoid(z) - if y { 1.0 } else { 0.0 }) * scale;
                let row = i * self.hidden_dim..(i + 1) * self.hidden_dim;
                for (((g, o), a), d) in grad.o[row.clone()]
                    .iter_mut()
                    .zip(&self.o[row])
                    .zip(&fwd.hidden)
                    .zip(&mut d_hidden)
                {
                    *g += dz * a;
                    *d += dz * o;
                }
            }
            for h in 0..self.hidden_dim {
                if fwd.pre[h] <= 0.0 {
                    continue;
                }
                let dp = d_hidden[h];
                let row = h * self.input_dim;
                for (k, xk) in ex.pooled.iter().enumerate() {
                    grad.w[row + k] += dp * xk;
                }
                if let Some(b) = grad.hidden_bias.as_mut() {
                    b[h] += dp;
                }
            }
        }
        Ok((loss, grad))
    }

    fn step(&mut self, grad: &Gradient, lr: f64, freeze_hidden: bool) {
        self.o
            .iter_mut()
            .zip(&grad.o)
            .for_each(|(p, g)| *p -= lr * g);
        if freeze_hidden {
            return;
        }
        self.w
            .iter_mut()
            .zip(&grad.w)
            .for_each(|(p, g)| *p -= lr * g);
        if let (Some(b), Some(g)) = (self.hidden_bias.as_mut(), grad.hidden_bias.as_ref()) {
            b.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        }
    }

    pub fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        for d in [self.input_dim, self.hidden_dim, self.features] {
            bytes.extend((d as u64).to_le_bytes());
        }
        for x in self
            .w
            .iter()
            .chain(&self.o)
            .chain(self.hidden_bias.iter().flatten())
        {
            bytes.extend(x.to_le_bytes());
        }
        sha256_hex(&bytes)
    }

    /// Versioned JSON document with an integrity checksum.
    pub fn to_document(&self) -> String {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            checksum: self.checksum(),
            model: self.clone(),
        };
        serde_json::to_string(&doc).expect("model serializes")
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Precondition(format!(
                "unsupported model format {}",
                doc.format_version
            )));
        }
        doc.model.validate()?;
        let actual = doc.model.checksum();
        if actual != doc.checksum {
            return Err(Error::Checksum {
                expected: doc.checksum,
                actual,
            });
        }
        Ok(doc.model)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    checksum: String,
    model: MlpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub test_fraction: f64,
    pub hidden_bias: bool,
    /// Trains the output heads only; the loss is then convex.
    pub freeze_hidden: bool,
    pub selection: SelectionConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            batch_size: Some(32),
            seed: 0,
            test_fraction: 0.2,
            hidden_bias: false,
            freeze_hidden: false,
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub f1: f64,
}

impl Metrics {
    /// Micro-averaged. F1 is 1 when there are neither positive labels nor positive predictions.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let total = tp + fp + fn_ + tn;
        let accuracy = if total == 0 {
            0.0
        } else {
            (tp + tn) as f64 / total as f64
        };
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 {
            1.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            accuracy,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train_metrics: Metrics,
    pub test_metrics: Option<Metrics>,
}

/// Seeded 4:1 split, then plain mini-batch gradient descent on the mean
/// logistic loss. Aborts on a non-finite loss.
pub fn train_mapping(
    examples: &[LabeledExample],
    options: &TrainOptions,
) -> Result<(MlpModel, TrainingReport)> {
    let first = examples
        .first()
        .ok_or_else(|| Error::Precondition("no training examples".into()))?;
    let (d, m) = (first.pooled.len(), first.labels.len());
    if let Some(bad) = examples
        .iter()
        .find(|e| e.pooled.len() != d || e.labels.len() != m)
    {
        return Err(Error::Precondition(format!(
            "example {} has inconsistent dimensions",
            bad.listing_id
        )));
    }
    let labeled = examples.iter().flat_map(|e| e.labels.iter().flatten());
    let (pos, neg) = labeled.fold((0, 0), |(p, n), y| if *y { (p + 1, n) } else { (p, n + 1) });
    if pos == 0 || neg == 0 {
        return Err(Error::Precondition(
            "labels need at least one positive and one negative".into(),
        ));
    }
    if !(0.0..1.0).contains(&options.test_fraction) {
        return Err(Error::Precondition(
            "test_fraction must be in [0, 1)".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let n_test =
        ((examples.len() as f64 * options.test_fraction).round() as usize).min(examples.len() - 1);
    let (test_idx, train_idx) = order.split_at(n_test);
    let train: Vec<&LabeledExample> = train_idx.iter().map(|&i| &examples[i]).collect();
    let test: Vec<&LabeledExample> = test_idx.iter().map(|&i| &examples[i]).collect();

    let mut model = MlpModel::init(d, m, options.hidden_bias, options.seed)?;
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    let mut batch_order = train.clone();
    for epoch in 0..options.epochs {
        batch_order.shuffle(&mut rng);
        let size = options.batch_size.unwrap_or(batch_order.len()).max(1);
        for batch in batch_order.chunks(size) {
            let (_, grad) = model.loss_and_gradient(batch)?;
            model.step(&grad, options.learning_rate, options.freeze_hidden);
        }
        let (loss, _) = model.loss_and_gradient(&train)?;
        if !loss.is_finite() || model.validate().is_err() {
            return Err(Error::Numerical(format!(
                "loss became {loss} at epoch {epoch}; lower the learning rate (currently {})",
                options.learning_rate
            )));
        }
        epoch_losses.push(loss);
    }

    let train_metrics = evaluate_refs(&model, &train, &options.selection)?;
    let test_metrics = if test.is_empty() {
        None
    } else {
        Some(evaluate_refs(&model, &test, &options.selection)?)
    };
    let report = TrainingReport {
        epoch_losses,
        train_ids: train.iter().map(|e| e.listing_id.clone()).collect(),
        test_ids: test.iter().map(|e| e.listing_id.clone()).collect(),
        train_metrics,
        test_metrics,
    };
    Ok((model, report))
}

fn evaluate_refs(
    model: &MlpModel,
    examples: &[&LabeledExample],
    config: &SelectionConfig,
) -> Result<Metrics> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for ex in examples {
        let s = model.predict(&ex.pooled)?;
        for (pred, label) in s.iter().map(|v| *v >= config.alpha).zip(&ex.labels) {
            match (pred, label) {
                (_, None) => {}
                (true, Some(true)) => tp += 1,
                (true, Some(false)) => fp += 1,
                (false, Some(true)) => fn_ += 1,
                (false, Some(false)) => tn += 1,
            }
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Cell-level accuracy and micro-F1 with prediction `s_j >= alpha`.
pub fn evaluate_mapping(
    model: &MlpModel,
    test: &[LabeledExample],
    config: &SelectionConfig,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Precondition("empty test set".into()));
    }
    evaluate_refs(model, &test.iter().collect::<Vec<_>>(), config)
}
