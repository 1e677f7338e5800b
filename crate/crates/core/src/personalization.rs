//! Buyer preferences and the personalized feature set.
//!
//! Each feature score is shifted by the buyer's importance rating,
//! `s_j + c (r_j - r0)`, and the highest adjusted scores are kept.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listing::{render_number, Listing};
use crate::llm::{DecodeParams, LanguageModelClient, LlmError, Message, OutputSchema, RetryPolicy};
use crate::prompts::{render, Bindings, PromptId};
use crate::schema::FeatureSchema;

fn check_rating(field: &str, value: u8) -> Result<()> {
    if (1..=5).contains(&value) {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "{field} rating {value} outside 1..=5"
        )))
    }
}

/// Ratings of the five general categories, each 1–5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralRatings {
    pub price: u8,
    pub location: u8,
    pub features_amenities: u8,
    pub size: u8,
    pub investment: u8,
}

impl GeneralRatings {
    pub fn entries(&self) -> [(&'static str, u8); 5] {
        [
            ("price", self.price),
            ("location", self.location),
            ("features & amenities", self.features_amenities),
            ("size", self.size),
            ("investment", self.investment),
        ]
    }
}

/// Coarse listing filters. `min_bedrooms` is a lower bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceFilters {
    #[serde(default)]
    pub price_min: Option<f64>,
    #[serde(default)]
    pub price_max: Option<f64>,
    #[serde(default)]
    pub min_bedrooms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingRating {
    pub listing_id: String,
    pub rating: u8,
    pub reasoning: String,
}

pub const MAX_LISTING_RATINGS: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuyerProfile {
    pub buyer_id: String,
    #[serde(default)]
    pub general: Option<GeneralRatings>,
    #[serde(default)]
    pub filters: PreferenceFilters,
    #[serde(default)]
    pub listing_ratings: Vec<ListingRating>,
    /// Feature name → importance `r_j` in 1..=5.
    #[serde(default)]
    pub feature_importance: BTreeMap<String, u8>,
    #[serde(default)]
    pub rationales: BTreeMap<String, String>,
}

impl BuyerProfile {
    pub fn new(buyer_id: impl Into<String>) -> Self {
        Self {
            buyer_id: buyer_id.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buyer_id.trim().is_empty() {
            return Err(Error::Precondition("buyer_id is empty".into()));
        }
        if let Some(g) = &self.general {
            for (name, v) in g.entries() {
                check_rating(name, v)?;
            }
        }
        let f = &self.filters;
        if let (Some(lo), Some(hi)) = (f.price_min, f.price_max) {
            if lo > hi {
                return Err(Error::Precondition(format!(
                    "price range {lo}..{hi} is inverted"
                )));
            }
        }
        if self.listing_ratings.len() > MAX_LISTING_RATINGS {
            return Err(Error::Precondition(format!(
                "at most {MAX_LISTING_RATINGS} listing ratings"
            )));
        }
        for r in &self.listing_ratings {
            check_rating(&format!("listing {}", r.listing_id), r.rating)?;
        }
        for (name, v) in &self.feature_importance {
            check_rating(name, *v)?;
        }
        Ok(())
    }

    pub fn matches_filters(&self, listing: &Listing) -> bool {
        let f = &self.filters;
        f.price_min.is_none_or(|lo| listing.price >= lo)
            && f.price_max.is_none_or(|hi| listing.price <= hi)
            && f.min_bedrooms.is_none_or(|b| listing.bedrooms >= b)
    }

    /// General preferences and filters as prompt lines.
    pub fn general_preferences_text(&self) -> String {
        let mut out = String::new();
        if let Some(g) = &self.general {
            for (name, v) in g.entries() {
                let _ = writeln!(out, "    - {name}: {v}/5");
            }
        }
        let f = &self.filters;
        match (f.price_min, f.price_max) {
            (Some(lo), Some(hi)) => {
                let _ = writeln!(
                    out,
                    "    - price range: ${} to ${}",
                    render_number(lo),
                    render_number(hi)
                );
            }
            (Some(lo), None) => {
                let _ = writeln!(out, "    - price range: at least ${}", render_number(lo));
            }
            (None, Some(hi)) => {
                let _ = writeln!(out, "    - price range: at most ${}", render_number(hi));
            }
            (None, None) => {}
        }
        if let Some(b) = f.min_bedrooms {
            let _ = writeln!(out, "    - bedrooms: at least {}", render_number(b));
        }
        out.trim_end().to_string()
    }

    /// Feature importances (with rationales, when given) as prompt lines, in name order.
    pub fn feature_preferences_text(&self) -> String {
        self.feature_importance
            .iter()
            .map(
                |(name, r)| match self.rationales.get(name).filter(|t| !t.trim().is_empty()) {
                    Some(why) => format!("    - {name}: importance {r}/5 ({})", why.trim()),
                    None => format!("    - {name}: importance {r}/5"),
                },
            )
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn elicitation_text(&self) -> String {
        let mut out = self.general_preferences_text();
        for r in &self.listing_ratings {
            let _ = write!(
                out,
                "\n    - rated listing {} {}/5: {}",
                r.listing_id,
                r.rating,
                r.reasoning.trim()
            );
        }
        out
    }

    /// Importance per schema leaf, `None` where the buyer gave no rating.
    pub fn importance_vector(&self, schema: &FeatureSchema) -> Result<Vec<Option<u8>>> {
        let mut out = vec![None; schema.leaf_count()];
        for (name, r) in &self.feature_importance {
            let j = schema
                .feature_id(name)
                .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
            out[j] = Some(*r);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Keep the `top_k` highest adjusted scores.
    #[default]
    TopK,
    /// Keep every adjusted score at or above `alpha`.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonalizationConfig {
    pub c: f64,
    pub r0: f64,
    pub top_k: usize,
    pub alpha: f64,
    #[serde(default)]
    pub mode: SelectionMode,
}

impl Default for PersonalizationConfig {
    fn default() -> Self {
        Self {
            c: 0.01,
            r0: 2.0,
            top_k: 10,
            alpha: 0.5,
            mode: SelectionMode::TopK,
        }
    }
}

impl PersonalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Precondition(format!(
                "c = {} must be finite and >= 0",
                self.c
            )));
        }
        if !(1.0..=5.0).contains(&self.r0) {
            return Err(Error::Precondition(format!(
                "r0 = {} outside [1, 5]",
                self.r0
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Precondition("top_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// `s_j + c (r_j - r0)`; unrated features take `r0` and keep their raw score.
pub fn adjusted_scores(
    s: &[f64],
    importance: &[Option<u8>],
    config: &PersonalizationConfig,
) -> Result<Vec<f64>> {
    if s.len() != importance.len() {
        return Err(Error::Dimension {
            expected: s.len(),
            actual: importance.len(),
        });
    }
    Ok(s.iter()
        .zip(importance)
        .map(|(s, r)| s + config.c * (r.map_or(config.r0, f64::from) - config.r0))
        .collect())
}

pub fn personalized_scores(
    s: &[f64],
    profile: &BuyerProfile,
    schema: &FeatureSchema,
    config: &PersonalizationConfig,
) -> Result<Vec<f64>> {
    adjusted_scores(s, &profile.importance_vector(schema)?, config)
}

/// Feature ids ordered by adjusted score (descending, ties to the lower id),
/// cut by the configured mode.
pub fn select_personalized(scores: &[f64], config: &PersonalizationConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    match config.mode {
        SelectionMode::TopK => order.truncate(config.top_k),
        SelectionMode::Threshold => order.retain(|&j| scores[j] >= config.alpha),
    }
    order
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitedCandidates {
    /// Canonical schema leaf names, in the order the model gave them.
    pub features: Vec<String>,
    /// Names the model produced that are not schema leaves.
    pub dropped: Vec<String>,
}

#[derive(Deserialize)]
struct ElicitationReply {
    features: Vec<String>,
}

pub const DEFAULT_MAX_CANDIDATES: usize = 15;

/// Narrows the schema to features this buyer likely cares about, for the
/// buyer to rate. Names outside the schema are dropped and reported.
pub fn elicit_feature_candidates(
    profile: &BuyerProfile,
    schema: &FeatureSchema,
    llm: &dyn LanguageModelClient,
    max_features: usize,
    retry: &RetryPolicy,
) -> Result<ElicitedCandidates> {
    if profile.general.is_none() || profile.listing_ratings.is_empty() {
        return Err(Error::Precondition(
            "elicit general ratings and at least one listing rating before choosing features"
                .into(),
        ));
    }
    profile.validate()?;
    let features = schema
        .leaf_names()
        .iter()
        .map(|n| format!("- {n}"))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = render(
        PromptId::FeatureElicitation,
        &Bindings::new()
            .set("max_features", max_features)
            .set("buyer", profile.elicitation_text())
            .set("features", features),
    )?;
    let messages = [Message::user(prompt)];
    let schema_spec = OutputSchema {
        name: "feature_candidates".into(),
        schema: serde_json::json!({"type": "object", "properties": {"features": {"type": "array", "items": {"type": "string"}}}}),
    };
    let params = DecodeParams::default();
    let mut last = None;
    let mut reply = None;
    for _ in 0..2 {
        let value = retry.run(|| llm.structured(&messages, &schema_spec, &params));
        match value.and_then(|v| {
            serde_json::from_value::<ElicitationReply>(v.clone()).map_err(|e| {
                LlmError::Unparseable {
                    raw: v.to_string(),
                    reason: e.to_string(),
                }
            })
        }) {
            Ok(r) => {
                reply = Some(r);
                break;
            }
            Err(e @ LlmError::Unparseable { .. }) => last = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    let reply = match reply {
        Some(r) => r,
        None => return Err(last.expect("loop ran").into()),
    };
    let names = schema.leaf_names();
    let mut out = ElicitedCandidates::default();
    for raw in reply.features {
        match schema.feature_id(raw.trim()) {
            Some(j) if !out.features.contains(&names[j]) => out.features.push(names[j].clone()),
            Some(_) => {}
            None => out.dropped.push(raw),
        }
    }
    out.features.truncate(max_features);
    Ok(out)
}
