//! Browser demo over the core selection and rating math. Each export takes
//! plain numbers or a JSON document and returns JSON; the `*_json` functions
//! hold the logic so they can be tested natively.

use realtor_core::arena::{expected_win_rate, EloConfig};
use realtor_core::grounding::{select_marketable, SelectionConfig};
use realtor_core::personalization::{
    adjusted_scores, select_personalized, PersonalizationConfig, SelectionMode,
};
use realtor_core::surprisal::{
    percentile_rank, select_surprising, EmpiricalDistribution, GroupKind, SurprisalConfig,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct CurvePoint {
    pub opponent: f64,
    pub win_rate: f64,
}

/// Expected win rate of a `rating` player against opponents spread evenly
/// over `[from, to]`.
pub fn win_rate_points(
    rating: f64,
    from: f64,
    to: f64,
    steps: usize,
    c: f64,
) -> Result<Vec<CurvePoint>, String> {
    let cfg = EloConfig {
        c,
        ..Default::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    if steps < 2 || !(from.is_finite() && to.is_finite() && rating.is_finite()) {
        return Err("need at least 2 steps and finite ratings".into());
    }
    Ok((0..steps)
        .map(|i| {
            let opponent = from + (to - from) * i as f64 / (steps - 1) as f64;
            CurvePoint {
                opponent,
                win_rate: expected_win_rate(rating, opponent, &cfg),
            }
        })
        .collect())
}

#[derive(Debug, Deserialize)]
pub struct SelectionInput {
    pub names: Vec<String>,
    pub intensities: Vec<f64>,
    /// 1-5 importance per feature; `null` for unrated.
    pub importance: Vec<Option<u8>>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct SelectionOutput {
    pub marketable: Vec<String>,
    pub adjusted: Vec<f64>,
    pub personalized: Vec<String>,
}

pub fn select_features_json(input: &str) -> Result<String, String> {
    let input: SelectionInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if input.names.len() != input.intensities.len() {
        return Err(format!(
            "{} names for {} intensities",
            input.names.len(),
            input.intensities.len()
        ));
    }
    if let Some(r) = input
        .importance
        .iter()
        .flatten()
        .find(|r| !(1..=5).contains(*r))
    {
        return Err(format!("importance {r} outside 1-5"));
    }
    let alpha = input.alpha.unwrap_or(SelectionConfig::default().alpha);
    let mut cfg = PersonalizationConfig {
        mode: SelectionMode::TopK,
        ..Default::default()
    };
    if let Some(k) = input.top_k {
        cfg.top_k = k;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let adjusted =
        adjusted_scores(&input.intensities, &input.importance, &cfg).map_err(|e| e.to_string())?;
    let name = |j: usize| input.names[j].clone();
    let out = SelectionOutput {
        marketable: select_marketable(&input.intensities, &SelectionConfig { alpha })
            .into_iter()
            .map(name)
            .collect(),
        personalized: select_personalized(&adjusted, &cfg)
            .into_iter()
            .map(name)
            .collect(),
        adjusted,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct SurprisalInput {
    pub names: Vec<String>,
    pub intensities: Vec<f64>,
    /// One intensity vector per peer listing.
    pub peers: Vec<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FeatureRank {
    pub name: String,
    pub intensity: f64,
    /// Share of peers scoring strictly higher.
    pub rank: f64,
    pub marketable: bool,
    pub surprising: bool,
}

pub fn percentile_surprisal_json(input: &str) -> Result<String, String> {
    let input: SurprisalInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if input.names.len() != input.intensities.len() {
        return Err(format!(
            "{} names for {} intensities",
            input.names.len(),
            input.intensities.len()
        ));
    }
    let group = EmpiricalDistribution::new(GroupKind::Similar, "peers", &input.peers)
        .map_err(|e| e.to_string())?;
    let s1 = select_marketable(
        &input.intensities,
        &SelectionConfig {
            alpha: input.alpha.unwrap_or(0.5),
        },
    );
    let cfg = SurprisalConfig {
        beta: input.beta.unwrap_or(SurprisalConfig::default().beta),
        min_group: 1,
        ..Default::default()
    };
    let outcome = select_surprising(&input.intensities, &s1, std::slice::from_ref(&group), &cfg)
        .map_err(|e| e.to_string())?;
    let rows = (0..input.names.len())
        .map(|j| {
            Ok(FeatureRank {
                name: input.names[j].clone(),
                intensity: input.intensities[j],
                rank: percentile_rank(&group, j, input.intensities[j])
                    .map_err(|e| e.to_string())?,
                marketable: s1.contains(&j),
                surprising: outcome.features.contains(&j),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn win_rate_curve(rating: f64, from: f64, to: f64, steps: usize) -> Result<String, JsError> {
    let points = win_rate_points(rating, from, to, steps, EloConfig::default().c)
        .map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&points).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn select_features(input: &str) -> Result<String, JsError> {
    select_features_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn percentile_surprisal(input: &str) -> Result<String, JsError> {
    percentile_surprisal_json(input).map_err(|e| JsError::new(&e))
}
