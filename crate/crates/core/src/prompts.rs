//! Versioned prompt templates.
//!
//! Each template is a resource file compiled into the crate together with its
//! SHA-256 checksum. `{name}` marks a slot, `{{` and `}}` are literal braces.
//! Slot names are trimmed, so `{ name }` and `{name}` bind the same value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sha256_hex;

pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptId {
    KeywordExtraction,
    KeywordNormalization,
    SchemaInduction,
    FeatureLabeling,
    PersonalizedGeneration,
    SurprisalGeneration,
    UserSimulation,
    FactcheckHardSystem,
    FactcheckSoftSystem,
    FactcheckSoftMatch,
    VanillaGeneration,
    SignalingGeneration,
    ControlGeneration,
    FeatureElicitation,
}

impl PromptId {
    pub const ALL: [PromptId; 14] = [
        PromptId::KeywordExtraction,
        PromptId::KeywordNormalization,
        PromptId::SchemaInduction,
        PromptId::FeatureLabeling,
        PromptId::PersonalizedGeneration,
        PromptId::SurprisalGeneration,
        PromptId::UserSimulation,
        PromptId::FactcheckHardSystem,
        PromptId::FactcheckSoftSystem,
        PromptId::FactcheckSoftMatch,
        PromptId::VanillaGeneration,
        PromptId::SignalingGeneration,
        PromptId::ControlGeneration,
        PromptId::FeatureElicitation,
    ];

    pub fn source(self) -> &'static str {
        match self {
            PromptId::KeywordExtraction => {
                include_str!("../resources/prompts/keyword_extraction.txt")
            }
            PromptId::KeywordNormalization => {
                include_str!("../resources/prompts/keyword_normalization.txt")
            }
            PromptId::SchemaInduction => include_str!("../resources/prompts/schema_induction.txt"),
            PromptId::FeatureLabeling => include_str!("../resources/prompts/feature_labeling.txt"),
            PromptId::PersonalizedGeneration => {
                include_str!("../resources/prompts/personalized_generation.txt")
            }
            PromptId::SurprisalGeneration => {
                include_str!("../resources/prompts/surprisal_generation.txt")
            }
            PromptId::UserSimulation => include_str!("../resources/prompts/user_simulation.txt"),
            PromptId::FactcheckHardSystem => {
                include_str!("../resources/prompts/factcheck_hard_system.txt")
            }
            PromptId::FactcheckSoftSystem => {
                include_str!("../resources/prompts/factcheck_soft_system.txt")
            }
            PromptId::FactcheckSoftMatch => {
                include_str!("../resources/prompts/factcheck_soft_match.txt")
            }
            PromptId::VanillaGeneration => {
                include_str!("../resources/prompts/vanilla_generation.txt")
            }
            PromptId::SignalingGeneration => {
                include_str!("../resources/prompts/signaling_generation.txt")
            }
            PromptId::ControlGeneration => {
                include_str!("../resources/prompts/control_generation.txt")
            }
            PromptId::FeatureElicitation => {
                include_str!("../resources/prompts/feature_elicitation.txt")
            }
        }
    }

    /// Pinned SHA-256 of the template source.
    pub fn checksum(self) -> &'static str {
        match self {
            PromptId::KeywordExtraction => {
                "0379daff8c1ebd84906552348193b2656c2ae238db6c793dabe15bd3b0bf946f"
            }
            PromptId::KeywordNormalization => {
                "f46b5f980a56691e649fc497e375f0e4c08f94edd95b7214ef5430c2d7014055"
            }
            PromptId::SchemaInduction => {
                "e7e218572afc271b119f597051f29e50773621b1fc0b1c8f06cf0ee9c6348c49"
            }
            PromptId::FeatureLabeling => {
                "1f36bcd3dee18d78b2290c5f138f0bfe561d37c570fb6d218d3e4e07f77b3f44"
            }
            PromptId::PersonalizedGeneration => {
                "5a0c0881b0400e362cfa95d3c389933fd578c2df12ddbe715467e51d1faffa20"
            }
            PromptId::SurprisalGeneration => {
                "acae0c3ba0e73878f706fcc22b97352477600c451df22c2e1021af40596b4db9"
            }
            PromptId::UserSimulation => {
                "acb7e501182d86f31434a0699904ff6a95ebde5d67302b87ba0b9a8da7661a74"
            }
            PromptId::FactcheckHardSystem => {
                "a2d5ae28745ff05fc7662d05c3c6c97ef231e4eaccfc2f9dab7d21d9877da972"
            }
            PromptId::FactcheckSoftSystem => {
                "4513270ab2065997e697e6dba830d366a1ae2ba149f1d9e20f5009bb0ec73c9c"
            }
            PromptId::FactcheckSoftMatch => {
                "5b9a951dea2ac8797df233f48fcbe8cdd831a1d5eb903bff16fd6ea584970d89"
            }
            PromptId::VanillaGeneration => {
                "0e1cde19a08482878a6896782a1e60d0d6f540a1267b76ffbaf7cc9afa32e1bc"
            }
            PromptId::SignalingGeneration => {
                "6a120988a353f9ce3bca346549c80bcf9d156ac98e32db4ae8d7690bc28acf04"
            }
            PromptId::ControlGeneration => {
                "1947ed56bce156126cc0a8ec96c668695b3dad43f9eafcd4ca026ead4cfa00f2"
            }
            PromptId::FeatureElicitation => {
                "5deb2d61a3d736d576e1e206b70300f759da5fbf849ba204b0804dca8a013090"
            }
        }
    }

    pub fn template(self) -> Template {
        Template::parse(self.source()).expect("shipped templates parse")
    }

    /// Recomputes the checksum of the compiled-in source.
    pub fn verify(self) -> Result<()> {
        let actual = sha256_hex(self.source().as_bytes());
        if actual == self.checksum() {
            Ok(())
        } else {
            Err(Error::Checksum {
                expected: self.checksum().into(),
                actual,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if matches!(chars.peek(), Some((_, '{'))) => {
                    chars.next();
                    literal.push('{');
                }
                '}' if matches!(chars.peek(), Some((_, '}'))) => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let rest = &source[i + 1..];
                    let end = rest
                        .find('}')
                        .ok_or_else(|| Error::Precondition(format!("unclosed slot at byte {i}")))?;
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(rest[..end].trim().to_string()));
                    for _ in 0..rest[..=end].chars().count() {
                        chars.next();
                    }
                }
                other => literal.push(other),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(name) => Some(name.as_str()),
            Segment::Literal(_) => None,
        })
    }

    pub fn literals(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Literal(text) => Some(text.as_str()),
            Segment::Slot(_) => None,
        })
    }

    /// Fills every slot; an unbound slot is an error naming it.
    pub fn fill(&self, bindings: &Bindings) -> Result<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(name) => out.push_str(
                    bindings
                        .get(name)
                        .ok_or_else(|| Error::Placeholder(name.clone()))?,
                ),
            }
        }
        Ok(out)
    }
}

/// Slot name to value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl fmt::Display) -> Self {
        self.0.insert(name.to_string(), value.to_string());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

pub fn render(id: PromptId, bindings: &Bindings) -> Result<String> {
    id.template().fill(bindings)
}
