//! Comparison plans: which listings a buyer sees, which competitors are paired
//! on each, where the quality-assurance items go, and which side is which.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::agent::Agent;
use realtor_core::generation::{generate_description, DescriptionRecord, Variant};
use realtor_core::listing::Listing;
use realtor_core::llm::{DecodeParams, EmbeddingClient, LanguageModelClient, RetryPolicy};
use realtor_core::personalization::BuyerProfile;
use realtor_core::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const HUMAN_TAG: &str = "HUMAN";
pub const ATTENTION_CLEAN_TAG: &str = "ATTENTION_CLEAN";
pub const ATTENTION_DEGRADED_TAG: &str = "ATTENTION_DEGRADED";

/// A competitor in scored comparisons: a generation variant or the
/// listing's original, human-written description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Arm {
    Generated(Variant),
    Human,
}

impl Arm {
    pub fn tag(self) -> &'static str {
        match self {
            Arm::Generated(v) => v.as_str(),
            Arm::Human => HUMAN_TAG,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == HUMAN_TAG {
            return Some(Arm::Human);
        }
        match Variant::parse(s)? {
            Variant::ControlPlain => None,
            v => Some(Arm::Generated(v)),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl TryFrom<String> for Arm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        Arm::parse(&s).ok_or_else(|| format!("unknown competitor {s:?}"))
    }
}

impl From<Arm> for String {
    fn from(a: Arm) -> String {
        a.tag().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub scored_pairs: usize,
    pub arms: Vec<Arm>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            scored_pairs: 10,
            arms: vec![
                Arm::Generated(Variant::AiRealtor),
                Arm::Generated(Variant::NoSurprisal),
                Arm::Generated(Variant::OnlySignaling),
                Arm::Generated(Variant::Vanilla),
                Arm::Human,
            ],
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.scored_pairs == 0 {
            return Err("scored_pairs must be positive".into());
        }
        let mut seen = Vec::new();
        for a in &self.arms {
            if seen.contains(a) {
                return Err(format!("competitor {a} listed twice"));
            }
            seen.push(*a);
        }
        if seen.len() < 2 {
            return Err("at least two competitors are needed".into());
        }
        Ok(())
    }

    pub fn total_items(&self) -> usize {
        self.scored_pairs + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Scored,
    Attention,
    Control,
}

/// Plan item before any text exists. `swap` puts the second competitor on
/// side A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutItem {
    pub kind: ItemKind,
    pub listing_id: String,
    /// Competitors in canonical order; empty for attention items.
    pub pair: Vec<String>,
    pub swap: bool,
}

fn has_original(l: &Listing) -> bool {
    l.description
        .as_deref()
        .is_some_and(|d| !d.trim().is_empty())
}

/// Lays out a plan over `pool` (the buyer's filtered listings). `fallback`
/// supplies a control listing when no filtered listing has an original
/// description. Pure in `seed`.
pub fn plan_layout(
    pool: &[&Listing],
    fallback: &[Listing],
    config: &PlanConfig,
    seed: u64,
) -> Result<Vec<LayoutItem>, ApiError> {
    config.validate().map_err(ApiError::internal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = config.scored_pairs;
    if pool.len() < need {
        return Err(ApiError::shortfall(format!(
            "the price and bedroom filters match {} listings; {need} are needed",
            pool.len()
        )));
    }

    let mut all_pairs = Vec::new();
    for i in 0..config.arms.len() {
        for j in i + 1..config.arms.len() {
            all_pairs.push((config.arms[i], config.arms[j]));
        }
    }
    let mut pairs = Vec::with_capacity(need);
    while pairs.len() < need {
        let mut round = all_pairs.clone();
        round.shuffle(&mut rng);
        pairs.extend(round.into_iter().take(need - pairs.len()));
    }

    let mut order: Vec<&Listing> = pool.to_vec();
    order.shuffle(&mut rng);
    let mut used = vec![false; order.len()];
    let mut take = |want_original: bool| -> Option<String> {
        let i =
            (0..order.len()).find(|&i| !used[i] && (!want_original || has_original(order[i])))?;
        used[i] = true;
        Some(order[i].id.clone())
    };
    let human_pairs = pairs
        .iter()
        .filter(|(a, b)| *a == Arm::Human || *b == Arm::Human)
        .count();
    let mut listing_of = vec![String::new(); need];
    for (slot, (a, b)) in pairs.iter().enumerate() {
        if *a == Arm::Human || *b == Arm::Human {
            listing_of[slot] = take(true).ok_or_else(|| {
                ApiError::shortfall(format!(
                    "{human_pairs} comparisons need an original description but fewer filtered listings have one"
                ))
            })?;
        }
    }
    for (slot, (a, b)) in pairs.iter().enumerate() {
        if *a != Arm::Human && *b != Arm::Human {
            listing_of[slot] =
                take(false).expect("pool holds at least one listing per scored pair");
        }
    }

    let attention = pool.choose(&mut rng).expect("non-empty pool").id.clone();
    let with_original: Vec<&Listing> = pool.iter().copied().filter(|l| has_original(l)).collect();
    let control = match with_original.choose(&mut rng) {
        Some(l) => l.id.clone(),
        None => fallback
            .iter()
            .filter(|l| has_original(l))
            .collect::<Vec<_>>()
            .choose(&mut rng)
            .map(|l| l.id.clone())
            .ok_or_else(|| {
                ApiError::internal("no listing has an original description for the control pair")
            })?,
    };

    let mut items: Vec<LayoutItem> = pairs
        .iter()
        .zip(listing_of)
        .map(|((a, b), listing_id)| LayoutItem {
            kind: ItemKind::Scored,
            listing_id,
            pair: vec![a.tag().into(), b.tag().into()],
            swap: false,
        })
        .collect();
    let total = config.total_items();
    let attention_at = rng.random_range(0..total);
    let mut control_at = rng.random_range(0..total - 1);
    if control_at >= attention_at {
        control_at += 1;
    }
    let qa = [
        (
            attention_at,
            LayoutItem {
                kind: ItemKind::Attention,
                listing_id: attention,
                pair: vec![],
                swap: false,
            },
        ),
        (
            control_at,
            LayoutItem {
                kind: ItemKind::Control,
                listing_id: control,
                pair: vec![HUMAN_TAG.into(), Variant::ControlPlain.as_str().into()],
                swap: false,
            },
        ),
    ];
    let mut qa = qa.to_vec();
    qa.sort_by_key(|(at, _)| *at);
    for (at, item) in qa {
        items.insert(at, item);
    }
    for item in &mut items {
        item.swap = rng.random_bool(0.5);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("description has {0} sentence(s); at least 2 are needed")]
pub struct TooShort(pub usize);

const NOISE_SENTENCES: [&str; 6] = [
    "The sale includes a private airstrip for small aircraft.",
    "A family of alpacas lives in the backyard and conveys with the home.",
    "The basement holds a full-size bowling alley and a submarine dock.",
    "Every bedroom has a working fireplace made of solid gold.",
    "The roof doubles as a heliport with nightly fireworks.",
    "Residents receive a complimentary castle in Scotland at closing.",
];

/// Byte offsets where sentences start.
fn sentence_starts(text: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut at_start = true;
    let mut prev_terminal = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if prev_terminal {
                at_start = true;
            }
            prev_terminal = false;
            continue;
        }
        if at_start {
            starts.push(i);
            at_start = false;
        }
        prev_terminal = matches!(ch, '.' | '!' | '?');
    }
    starts
}

/// A clean description and a copy with one incongruous sentence inserted at
/// a seeded sentence boundary (never before the first sentence).
pub fn make_attention_pair(description: &str, seed: u64) -> Result<(String, String), TooShort> {
    let starts = sentence_starts(description);
    if starts.len() < 2 {
        return Err(TooShort(starts.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = NOISE_SENTENCES.choose(&mut rng).expect("non-empty bank");
    let slot = rng.random_range(1..=starts.len());
    let degraded = if slot < starts.len() {
        let at = starts[slot];
        format!("{}{noise} {}", &description[..at], &description[at..])
    } else {
        let end = description.trim_end().len();
        format!("{} {noise}{}", &description[..end], &description[end..])
    };
    Ok((description.to_string(), degraded))
}

/// Produces description records on demand for a buyer.
pub trait DescriptionSource: Send + Sync {
    /// Feature names a buyer may rate.
    fn feature_names(&self) -> Vec<String>;

    fn describe(
        &self,
        listing: &Listing,
        variant: Variant,
        profile: &BuyerProfile,
    ) -> realtor_core::Result<DescriptionRecord>;
}

/// Live generation through the grounded agent.
pub struct AgentSource {
    pub agent: Agent,
    pub llm: Arc<dyn LanguageModelClient>,
    pub embedder: Arc<dyn EmbeddingClient>,
    pub decode: DecodeParams,
    pub retry: RetryPolicy,
}

impl DescriptionSource for AgentSource {
    fn feature_names(&self) -> Vec<String> {
        self.agent.schema.leaf_names()
    }

    fn describe(
        &self,
        listing: &Listing,
        variant: Variant,
        profile: &BuyerProfile,
    ) -> realtor_core::Result<DescriptionRecord> {
        let req = self
            .agent
            .request(listing, variant, Some(profile), self.embedder.as_ref())?;
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        generate_description(&req, self.llm.as_ref(), &self.decode, &self.retry, &now)
    }
}

/// One side of a comparison as stored server-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Side {
    pub tag: String,
    pub record_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanItem {
    pub item_id: usize,
    pub kind: ItemKind,
    pub listing_id: String,
    pub a: Side,
    pub b: Side,
}

impl PlanItem {
    /// The side a diligent participant picks on a quality-assurance item.
    pub fn expected(&self) -> Option<realtor_core::arena::Choice> {
        use realtor_core::arena::Choice;
        let good = match self.kind {
            ItemKind::Scored => return None,
            ItemKind::Attention => ATTENTION_CLEAN_TAG,
            ItemKind::Control => HUMAN_TAG,
        };
        Some(if self.a.tag == good {
            Choice::A
        } else {
            Choice::B
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPlan {
    pub seed: u64,
    pub items: Vec<PlanItem>,
}

impl ComparisonPlan {
    pub fn scored(&self) -> usize {
        self.items
            .iter()
            .filter(|i| i.kind == ItemKind::Scored)
            .count()
    }
}

fn human_side(listing: &Listing) -> Result<Side, ApiError> {
    let text = listing
        .description
        .clone()
        .filter(|d| !d.trim().is_empty())
        .ok_or_else(|| {
            ApiError::internal(format!(
                "listing {} has no original description",
                listing.id
            ))
        })?;
    let record_id = sha256_hex(format!("{}|{HUMAN_TAG}", listing.id).as_bytes())[..16].to_string();
    Ok(Side {
        tag: HUMAN_TAG.into(),
        record_id,
        text,
    })
}

/// Turns a layout into a plan, generating every description for `profile`.
pub fn materialize(
    layout: &[LayoutItem],
    listings: &HashMap<String, Listing>,
    profile: &BuyerProfile,
    source: &dyn DescriptionSource,
    seed: u64,
) -> Result<ComparisonPlan, ApiError> {
    let lookup = |id: &str| {
        listings
            .get(id)
            .ok_or_else(|| ApiError::internal(format!("listing {id} vanished")))
    };
    let side = |listing: &Listing, tag: &str| -> Result<Side, ApiError> {
        if tag == HUMAN_TAG {
            return human_side(listing);
        }
        let variant = Variant::parse(tag)
            .ok_or_else(|| ApiError::internal(format!("unknown competitor {tag}")))?;
        let r = source.describe(listing, variant, profile)?;
        Ok(Side {
            tag: tag.to_string(),
            record_id: r.record_id,
            text: r.text,
        })
    };
    let mut items = Vec::with_capacity(layout.len());
    for (item_id, slot) in layout.iter().enumerate() {
        let listing = lookup(&slot.listing_id)?;
        let (first, second) = match slot.kind {
            ItemKind::Scored | ItemKind::Control => {
                (side(listing, &slot.pair[0])?, side(listing, &slot.pair[1])?)
            }
            ItemKind::Attention => {
                let base = match human_side(listing) {
                    Ok(s) if sentence_starts(&s.text).len() >= 2 => s,
                    _ => side(listing, Variant::Vanilla.as_str())?,
                };
                let (clean, degraded) = make_attention_pair(&base.text, seed ^ item_id as u64)
                    .map_err(|e| {
                        ApiError::internal(format!("attention item for {}: {e}", listing.id))
                    })?;
                let degraded_id = sha256_hex(format!("{}|{degraded}", base.record_id).as_bytes())
                    [..16]
                    .to_string();
                (
                    Side {
                        tag: ATTENTION_CLEAN_TAG.into(),
                        record_id: base.record_id,
                        text: clean,
                    },
                    Side {
                        tag: ATTENTION_DEGRADED_TAG.into(),
                        record_id: degraded_id,
                        text: degraded,
                    },
                )
            }
        };
        let (a, b) = if slot.swap {
            (second, first)
        } else {
            (first, second)
        };
        items.push(PlanItem {
            item_id,
            kind: slot.kind,
            listing_id: slot.listing_id.clone(),
            a,
            b,
        });
    }
    Ok(ComparisonPlan { seed, items })
}
