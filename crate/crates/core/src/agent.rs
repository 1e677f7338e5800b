//! End-to-end assembly: from a listing and an optional buyer profile to a
//! generation request carrying the marketable, personalized and surprising
//! feature sets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::{GenerationRequest, SurprisalContext, Variant};
use crate::grounding::{embed_listing, select_marketable, MlpModel, SelectionConfig};
use crate::listing::Listing;
use crate::llm::EmbeddingClient;
use crate::personalization::{
    personalized_scores, select_personalized, BuyerProfile, PersonalizationConfig,
};
use crate::schema::FeatureSchema;
use crate::surprisal::{
    build_peer_groups, select_surprising, ListingIndex, SurprisalConfig, SurprisalOutcome,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub personalization: PersonalizationConfig,
    #[serde(default)]
    pub surprisal: SurprisalConfig,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        SelectionConfig::new(self.selection.alpha)?;
        self.personalization.validate()?;
        self.surprisal.validate()
    }
}

/// Feature sets of one listing, by schema leaf id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSets {
    pub intensities: Vec<f64>,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub surprisal: SurprisalOutcome,
}

/// A trained mapping with the listing index it ranks against. Intensities
/// of every indexed listing are computed once, up front.
#[derive(Debug, Clone)]
pub struct Agent {
    pub schema: FeatureSchema,
    pub model: MlpModel,
    pub index: ListingIndex,
    pub config: AgentConfig,
    intensities: HashMap<String, Vec<f64>>,
}

impl Agent {
    pub fn new(
        schema: FeatureSchema,
        model: MlpModel,
        index: ListingIndex,
        config: AgentConfig,
        embedder: &dyn EmbeddingClient,
    ) -> Result<Self> {
        config.validate()?;
        if model.features != schema.leaf_count() {
            return Err(Error::Dimension {
                expected: schema.leaf_count(),
                actual: model.features,
            });
        }
        let mut intensities = HashMap::with_capacity(index.len());
        for l in index.listings() {
            intensities.insert(l.id.clone(), model.predict(&embed_listing(l, embedder)?)?);
        }
        Ok(Self {
            schema,
            model,
            index,
            config,
            intensities,
        })
    }

    pub fn intensities(&self) -> &HashMap<String, Vec<f64>> {
        &self.intensities
    }

    fn intensities_of(
        &self,
        listing: &Listing,
        embedder: &dyn EmbeddingClient,
    ) -> Result<Vec<f64>> {
        match self.intensities.get(&listing.id) {
            Some(s) if self.index.get(&listing.id) == Some(listing) => Ok(s.clone()),
            _ => self.model.predict(&embed_listing(listing, embedder)?),
        }
    }

    pub fn feature_sets(
        &self,
        listing: &Listing,
        profile: Option<&BuyerProfile>,
        embedder: &dyn EmbeddingClient,
    ) -> Result<FeatureSets> {
        let s = self.intensities_of(listing, embedder)?;
        let s1 = select_marketable(&s, &self.config.selection);
        let s2 = match profile {
            Some(p) => {
                let cfg = PersonalizationConfig {
                    alpha: self.config.selection.alpha,
                    ..self.config.personalization
                };
                select_personalized(&personalized_scores(&s, p, &self.schema, &cfg)?, &cfg)
            }
            None => Vec::new(),
        };
        let groups = build_peer_groups(
            &self.index,
            listing,
            &self.intensities,
            &self.config.surprisal,
        )?;
        let surprisal = select_surprising(&s, &s1, &groups, &self.config.surprisal)?;
        Ok(FeatureSets {
            intensities: s,
            s1,
            s2,
            surprisal,
        })
    }

    /// Request for `variant`, with only the inputs that variant uses.
    pub fn request(
        &self,
        listing: &Listing,
        variant: Variant,
        profile: Option<&BuyerProfile>,
        embedder: &dyn EmbeddingClient,
    ) -> Result<GenerationRequest> {
        let mut req = GenerationRequest::new(listing.clone(), variant);
        if matches!(variant, Variant::Vanilla | Variant::ControlPlain) {
            return Ok(req);
        }
        let sets = self.feature_sets(listing, profile, embedder)?;
        let names = self.schema.leaf_names();
        let named = |ids: &[usize]| ids.iter().map(|&j| names[j].clone()).collect::<Vec<_>>();
        req.s1 = named(&sets.s1);
        if variant != Variant::OnlySignaling {
            req.buyer_profile = profile.cloned();
            req.s2 = named(&sets.s2);
        }
        if variant == Variant::AiRealtor {
            req.s3 = Some(SurprisalContext::from_outcome(&sets.surprisal, &names)?);
        }
        req.validate()?;
        Ok(req)
    }
}
