//! Prompt assembly and description generation for every variant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listing::{attribute_statements, Listing, EMBEDDING_ATTRIBUTES};
use crate::llm::{DecodeParams, LanguageModelClient, LlmError, Message, RetryPolicy};
use crate::personalization::BuyerProfile;
use crate::prompts::{render, Bindings, PromptId};
use crate::surprisal::{GroupKind, SurprisalOutcome};
use crate::util::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Personalized highlights followed by the surprisal block.
    AiRealtor,
    /// Ablation: personalized highlights only.
    NoSurprisal,
    /// Ablation: marketable features only.
    OnlySignaling,
    /// All attributes, no features.
    Vanilla,
    /// Deliberately plain text, used for control pairs.
    ControlPlain,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::AiRealtor,
        Variant::NoSurprisal,
        Variant::OnlySignaling,
        Variant::Vanilla,
        Variant::ControlPlain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::AiRealtor => "AI_REALTOR",
            Variant::NoSurprisal => "NO_SURPRISAL",
            Variant::OnlySignaling => "ONLY_SIGNALING",
            Variant::Vanilla => "VANILLA",
            Variant::ControlPlain => "CONTROL_PLAIN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    /// Percentile ranking `1 - F(p)` within the group.
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBlock {
    pub label: String,
    pub features: Vec<RankedFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisingFeature {
    pub name: String,
    pub groups: Vec<GroupKind>,
}

/// Surprisal features with the per-group evidence that justified them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalContext {
    /// Number of similar listings the comparison was made against.
    pub k: usize,
    pub features: Vec<SurprisingFeature>,
    pub similar: Option<GroupBlock>,
    pub city: Option<GroupBlock>,
    pub neighborhood: Option<GroupBlock>,
    pub zipcode: Option<GroupBlock>,
}

impl SurprisalContext {
    pub fn from_outcome(outcome: &SurprisalOutcome, feature_names: &[String]) -> Result<Self> {
        let name = |j: usize| {
            feature_names
                .get(j)
                .cloned()
                .ok_or_else(|| Error::UnknownFeature(j.to_string()))
        };
        let block = |kind: GroupKind| -> Result<Option<GroupBlock>> {
            let Some(g) = outcome.group(kind) else {
                return Ok(None);
            };
            let features = g
                .competitive
                .iter()
                .map(|c| {
                    Ok(RankedFeature {
                        name: name(c.feature)?,
                        rank: c.rank,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Some(GroupBlock {
                label: g.label.clone(),
                features,
            }))
        };
        let features = outcome
            .features
            .iter()
            .map(|&j| {
                let groups = outcome
                    .groups
                    .iter()
                    .filter(|g| g.competitive.iter().any(|c| c.feature == j))
                    .map(|g| g.kind)
                    .collect();
                Ok(SurprisingFeature {
                    name: name(j)?,
                    groups,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            k: outcome.group(GroupKind::Similar).map_or(0, |g| g.size),
            features,
            similar: block(GroupKind::Similar)?,
            city: block(GroupKind::City)?,
            neighborhood: block(GroupKind::Neighborhood)?,
            zipcode: block(GroupKind::Zipcode)?,
        })
    }

    fn block(&self, kind: GroupKind) -> Option<&GroupBlock> {
        match kind {
            GroupKind::Similar => self.similar.as_ref(),
            GroupKind::City => self.city.as_ref(),
            GroupKind::Neighborhood => self.neighborhood.as_ref(),
            GroupKind::Zipcode => self.zipcode.as_ref(),
        }
    }

    fn validate(&self) -> Result<()> {
        for f in &self.features {
            if let Some(kind) = f.groups.iter().find(|k| self.block(**k).is_none()) {
                return Err(Error::Precondition(format!(
                    "feature `{}` cites the {} group but no ranking block was provided",
                    f.name,
                    kind.as_str()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub listing: Listing,
    pub variant: Variant,
    #[serde(default)]
    pub buyer_profile: Option<BuyerProfile>,
    /// Marketable feature names.
    #[serde(default)]
    pub s1: Vec<String>,
    /// Personalized feature names, best first.
    #[serde(default)]
    pub s2: Vec<String>,
    #[serde(default)]
    pub s3: Option<SurprisalContext>,
}

impl GenerationRequest {
    pub fn new(listing: Listing, variant: Variant) -> Self {
        Self {
            listing,
            variant,
            buyer_profile: None,
            s1: Vec::new(),
            s2: Vec::new(),
            s3: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Precondition(format!(
                    "{} requires {what}",
                    self.variant
                )))
            }
        };
        match self.variant {
            Variant::AiRealtor => {
                need(!self.s1.is_empty(), "marketable features")?;
                need(
                    !self.s2.is_empty() && self.buyer_profile.is_some(),
                    "personalized features and a buyer profile",
                )?;
                need(self.s3.is_some(), "surprisal evidence")?;
            }
            Variant::NoSurprisal => need(
                !self.s2.is_empty() && self.buyer_profile.is_some(),
                "personalized features and a buyer profile",
            )?,
            Variant::OnlySignaling => need(!self.s1.is_empty(), "marketable features")?,
            Variant::Vanilla | Variant::ControlPlain => {}
        }
        Ok(())
    }
}

/// One `The attribute … is ….` line per present attribute.
pub fn attributes_block(listing: &Listing) -> String {
    attribute_statements(listing, EMBEDDING_ATTRIBUTES)
        .statements
        .iter()
        .map(|s| format!("        - {}", s.statement))
        .collect::<Vec<_>>()
        .join("\n")
}

fn bullet_list<S: AsRef<str>>(items: &[S]) -> String {
    if items.is_empty() {
        return "        - none".into();
    }
    items
        .iter()
        .map(|s| format!("        - {}", s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn ranked_list(block: Option<&GroupBlock>) -> String {
    let items: Vec<String> = block
        .map(|b| {
            b.features
                .iter()
                .map(|f| format!("{} (top {:.0}%)", f.name, f.rank * 100.0))
                .collect()
        })
        .unwrap_or_default();
    bullet_list(&items)
}

pub fn build_personalized_prompt(
    listing: &Listing,
    s2: &[String],
    profile: &BuyerProfile,
) -> Result<String> {
    if s2.is_empty() {
        return Err(Error::Precondition(
            "personalized prompt needs at least one feature".into(),
        ));
    }
    let general = profile.general_preferences_text();
    let specific = profile.feature_preferences_text();
    render(
        PromptId::PersonalizedGeneration,
        &Bindings::new()
            .set("attributes", attributes_block(listing))
            .set("highlight_features_reweighted", bullet_list(s2))
            .set(
                "user_preference",
                if general.is_empty() {
                    "    - none stated".into()
                } else {
                    general
                },
            )
            .set(
                "feature_preference",
                if specific.is_empty() {
                    "- none stated".into()
                } else {
                    specific.trim_start().to_string()
                },
            ),
    )
}

pub fn build_surprisal_prompt(listing: &Listing, context: &SurprisalContext) -> Result<String> {
    context.validate()?;
    let label = |b: Option<&GroupBlock>, fallback: &Option<String>| {
        b.map(|b| b.label.clone())
            .or_else(|| fallback.clone())
            .unwrap_or_else(|| "unknown".into())
    };
    render(
        PromptId::SurprisalGeneration,
        &Bindings::new()
            .set("attributes", attributes_block(listing))
            .set("K", context.k)
            .set(
                "surprisal_features",
                ranked_list(context.similar.as_ref()).trim_start(),
            )
            .set(
                "city_rankings",
                ranked_list(context.city.as_ref()).trim_start(),
            )
            .set(
                "neighbourhood",
                label(context.neighborhood.as_ref(), &listing.neighborhood_region),
            )
            .set(
                "neighourhood_rankings",
                ranked_list(context.neighborhood.as_ref()).trim_start(),
            )
            .set("zipcode", label(context.zipcode.as_ref(), &listing.zipcode))
            .set(
                "zipcode_rankings",
                ranked_list(context.zipcode.as_ref()).trim_start(),
            ),
    )
}

/// Assembles the prompt for the request's variant. Pure and deterministic.
pub fn build_prompt(request: &GenerationRequest) -> Result<String> {
    request.validate()?;
    let listing = &request.listing;
    let personalized = || {
        let profile = request.buyer_profile.as_ref().expect("validated");
        build_personalized_prompt(listing, &request.s2, profile)
    };
    match request.variant {
        Variant::AiRealtor => {
            let surprisal =
                build_surprisal_prompt(listing, request.s3.as_ref().expect("validated"))?;
            Ok(format!("{}\n\n{}", personalized()?, surprisal))
        }
        Variant::NoSurprisal => personalized(),
        Variant::OnlySignaling => render(
            PromptId::SignalingGeneration,
            &Bindings::new()
                .set("attributes", attributes_block(listing))
                .set("highlight_features", bullet_list(&request.s1)),
        ),
        Variant::Vanilla => render(
            PromptId::VanillaGeneration,
            &Bindings::new().set("attributes", attributes_block(listing)),
        ),
        Variant::ControlPlain => render(
            PromptId::ControlGeneration,
            &Bindings::new().set("attributes", attributes_block(listing)),
        ),
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub record_id: String,
    pub listing_id: String,
    pub text: String,
    pub variant: Variant,
    pub model_tag: String,
    pub prompt_hash: String,
    pub created_at: String,
    #[serde(default)]
    pub buyer_id: Option<String>,
    pub decode: DecodeParams,
}

/// Generates one description. `created_at` is supplied by the caller so that
/// mocked runs stay byte-reproducible.
pub fn generate_description(
    request: &GenerationRequest,
    llm: &dyn LanguageModelClient,
    decode: &DecodeParams,
    retry: &RetryPolicy,
    created_at: &str,
) -> Result<DescriptionRecord> {
    let prompt = build_prompt(request)?;
    let hash = prompt_hash(&prompt);
    let messages = [Message::user(prompt)];
    let text = retry.run(|| {
        let reply = llm.complete(&messages, decode)?;
        let reply = reply.trim();
        if reply.is_empty() {
            Err(LlmError::EmptyCompletion)
        } else {
            Ok(reply.to_string())
        }
    })?;
    // Vanilla and control prompts never see the buyer; keep the id for bookkeeping only.
    let buyer_id = request.buyer_profile.as_ref().map(|p| p.buyer_id.clone());
    let record_id = sha256_hex(
        format!(
            "{}|{}|{}|{}|{}",
            request.listing.id,
            request.variant,
            llm.model_tag(),
            hash,
            buyer_id.as_deref().unwrap_or("")
        )
        .as_bytes(),
    )[..16]
        .to_string();
    Ok(DescriptionRecord {
        record_id,
        listing_id: request.listing.id.clone(),
        text,
        variant: request.variant,
        model_tag: llm.model_tag().to_string(),
        prompt_hash: hash,
        created_at: created_at.to_string(),
        buyer_id,
        decode: decode.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{EchoClient, HeuristicMock, ScriptedClient};
    use crate::personalization::GeneralRatings;

    fn listing() -> Listing {
        let mut l = Listing::new("l1", 3.0, 2.0, 450000.0);
        l.city = Some("Chicago".into());
        l.zipcode = Some("60614".into());
        l.neighborhood_region = Some("Lincoln Park".into());
        l.living_area_value = Some(1828.0);
        l
    }

    fn profile() -> BuyerProfile {
        let mut p = BuyerProfile::new("b1");
        p.general = Some(GeneralRatings {
            price: 4,
            location: 5,
            features_amenities: 3,
            size: 2,
            investment: 1,
        });
        p.feature_importance.insert("Pool".into(), 5);
        p
    }

    fn context() -> SurprisalContext {
        let block = |label: &str, name: &str| GroupBlock {
            label: label.into(),
            features: vec![RankedFeature {
                name: name.into(),
                rank: 0.02,
            }],
        };
        SurprisalContext {
            k: 20,
            features: vec![SurprisingFeature {
                name: "Pool".into(),
                groups: vec![GroupKind::Similar, GroupKind::City],
            }],
            similar: Some(block("20 similar listings", "Pool")),
            city: Some(block("Chicago", "Pool")),
            neighborhood: None,
            zipcode: Some(block("60614", "Garage")),
        }
    }

    fn full_request(variant: Variant) -> GenerationRequest {
        GenerationRequest {
            listing: listing(),
            variant,
            buyer_profile: Some(profile()),
            s1: vec!["Pool".into(), "Garage".into()],
            s2: vec!["Pool".into()],
            s3: Some(context()),
        }
    }

    #[test]
    fn personalized_prompt_fills_every_slot() {
        let p =
            build_personalized_prompt(&listing(), &["Pool".into(), "Garage".into()], &profile())
                .unwrap();
        assert!(p.contains(
            "Make sure the description is persuasive while concise under one paragraph."
        ));
        assert!(p.contains("        - The attribute bedrooms is 3.\n"));
        assert!(p.contains("worth highlighting:\n        - Pool\n        - Garage\n"));
        assert!(p.contains("- Pool: importance 5/5"));
        assert!(!p.contains('{'));
        assert!(build_personalized_prompt(&listing(), &[], &profile()).is_err());
    }

    #[test]
    fn surprisal_prompt_states_peer_count_and_blocks() {
        let p = build_surprisal_prompt(&listing(), &context()).unwrap();
        assert!(p.contains("Compared with 20 similar listings"));
        assert!(p.contains("emphasize:\n    - Pool (top 2%)"));
        assert!(p.contains("neighborhood Lincoln Park, the following"));
        assert!(p.contains("zipcode 60614, the following features of this listing are competitive:\n\n    - Garage (top 2%)"));
        assert_eq!(p, build_surprisal_prompt(&listing(), &context()).unwrap());
        let mut bad = context();
        bad.features[0].groups.push(GroupKind::Neighborhood);
        assert!(build_surprisal_prompt(&listing(), &bad).is_err());
    }

    #[test]
    fn variant_routing() {
        let ai = build_prompt(&full_request(Variant::AiRealtor)).unwrap();
        let ns = build_prompt(&full_request(Variant::NoSurprisal)).unwrap();
        assert!(ai.starts_with(&format!("{ns}\n\n")));
        let sig = build_prompt(&full_request(Variant::OnlySignaling)).unwrap();
        assert!(
            sig.contains("- Pool\n        - Garage")
                && !sig.contains("preference")
                && !sig.contains("Compared with")
        );
        let vanilla = build_prompt(&full_request(Variant::Vanilla)).unwrap();
        let mut no_profile = full_request(Variant::Vanilla);
        no_profile.buyer_profile = None;
        assert_eq!(vanilla, build_prompt(&no_profile).unwrap());
        assert!(build_prompt(&full_request(Variant::ControlPlain))
            .unwrap()
            .contains("plain and unappealing"));
        let mut missing = full_request(Variant::AiRealtor);
        missing.s3 = None;
        assert!(build_prompt(&missing).is_err());
        assert!(build_prompt(&GenerationRequest::new(listing(), Variant::OnlySignaling)).is_err());
    }

    #[test]
    fn records_are_reproducible() {
        let req = full_request(Variant::AiRealtor);
        let echo = EchoClient;
        let r = generate_description(
            &req,
            &echo,
            &DecodeParams::default(),
            &RetryPolicy::immediate(0),
            "t0",
        )
        .unwrap();
        assert_eq!(
            r.text,
            "Make sure the description is persuasive while concise under one paragraph.\""
        );
        assert_eq!(r.prompt_hash, prompt_hash(&build_prompt(&req).unwrap()));
        let again = generate_description(
            &req,
            &echo,
            &DecodeParams::default(),
            &RetryPolicy::immediate(0),
            "t0",
        )
        .unwrap();
        assert_eq!(r, again);
        let mock = HeuristicMock::default();
        let text = generate_description(
            &req,
            &mock,
            &DecodeParams::default(),
            &RetryPolicy::immediate(0),
            "t0",
        )
        .unwrap()
        .text;
        assert!(text.contains("3 bedrooms"), "{text}");
    }

    #[test]
    fn empty_completion_is_retried_then_fails() {
        let req = full_request(Variant::Vanilla);
        let llm = ScriptedClient::with_replies("m", ["  ", "ok text"]);
        let r = generate_description(
            &req,
            &llm,
            &DecodeParams::default(),
            &RetryPolicy::immediate(2),
            "t",
        )
        .unwrap();
        assert_eq!(r.text, "ok text");
        let llm = ScriptedClient::with_replies("m", ["", "", ""]);
        assert!(generate_description(
            &req,
            &llm,
            &DecodeParams::default(),
            &RetryPolicy::immediate(2),
            "t"
        )
        .is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.as_str()), Some(v));
            assert_eq!(
                serde_json::to_string(&v).unwrap(),
                format!("\"{}\"", v.as_str())
            );
        }
    }
}
