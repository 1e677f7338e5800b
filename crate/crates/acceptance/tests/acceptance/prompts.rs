use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use realtor_core::agent::{Agent, AgentConfig};
use realtor_core::arena::{simulate_choice, Choice, PairTask};
use realtor_core::factcheck::{faithfulness_report, FactCheckSpec};
use realtor_core::generation::{generate_description, Variant};
use realtor_core::grounding::{prepare_examples, train_mapping, TrainOptions};
use realtor_core::listing::Listing;
use realtor_core::llm::{
    DecodeParams, FeatureHashEmbedder, HeuristicMock, LanguageModelClient, LlmError, Message,
    OutputSchema, RetryPolicy,
};
use realtor_core::normalize::RuleNormalizer;
use realtor_core::personalization::{
    elicit_feature_candidates, BuyerProfile, GeneralRatings, ListingRating,
};
use realtor_core::prompts::{render, Bindings, PromptId, Segment};
use realtor_core::schema::{build_keyword_base, induce_schema, FeatureSchema};
use realtor_core::surprisal::ListingIndex;
use realtor_core::synthetic;
use regex::Regex;
use sha2::{Digest, Sha256};

use crate::Outcome;

/// Records every message sent while answering with the offline mock.
struct Recorder {
    inner: HeuristicMock,
    seen: Mutex<Vec<String>>,
}

/// The mock never reports insights or an address, which would leave the
/// match stage unexercised; answer soft extraction the way a live model would.
const SOFT_EXTRACTION: &str = "Find the home insights";

impl Recorder {
    fn record(&self, messages: &[Message]) {
        self.seen
            .lock()
            .unwrap()
            .extend(messages.iter().map(|m| m.content.clone()));
    }

    fn soft_reply(&self, messages: &[Message]) -> Option<serde_json::Value> {
        messages
            .iter()
            .any(|m| m.content.contains(SOFT_EXTRACTION))
            .then(|| {
                serde_json::json!({
                    "home_insights_mentioned": true,
                    "home_insights": ["garden"],
                    "address_mentioned": true,
                    "address": "Springfield"
                })
            })
    }
}

impl LanguageModelClient for Recorder {
    fn model_tag(&self) -> &str {
        self.inner.model_tag()
    }

    fn complete(&self, messages: &[Message], params: &DecodeParams) -> Result<String, LlmError> {
        self.record(messages);
        match self.soft_reply(messages) {
            Some(v) => Ok(v.to_string()),
            None => self.inner.complete(messages, params),
        }
    }

    fn structured(
        &self,
        messages: &[Message],
        schema: &OutputSchema,
        params: &DecodeParams,
    ) -> Result<serde_json::Value, LlmError> {
        self.record(messages);
        match self.soft_reply(messages) {
            Some(v) => Ok(v),
            None => self.inner.structured(messages, schema, params),
        }
    }
}

fn file_name(id: PromptId) -> String {
    serde_json::to_value(id)
        .expect("ids serialize")
        .as_str()
        .expect("snake_case name")
        .to_string()
}

fn sentinel(i: usize) -> String {
    format!("\u{1}{i}\u{2}")
}

/// Renders with a sentinel in every slot and checks that the text between
/// sentinels is the golden source with its slots cut out, byte for byte.
fn literal_fidelity(id: PromptId, golden: &str) -> Result<(), String> {
    let template = id.template();
    let mut names: Vec<String> = Vec::new();
    for slot in template.slots() {
        if !names.iter().any(|n| n == slot) {
            names.push(slot.to_string());
        }
    }
    let mut bindings = Bindings::new();
    for (i, name) in names.iter().enumerate() {
        bindings = bindings.set(name, sentinel(i));
    }
    let rendered = attempt!(render(id, &bindings), file_name(id));

    // rebuild the source: literal text with braces re-escaped, slots as `{name}`
    let mut rebuilt = String::new();
    let mut cursor = rendered.as_str();
    for seg in template.segments() {
        match seg {
            Segment::Literal(text) => {
                ensure!(
                    cursor.starts_with(text.as_str()),
                    "{}: literal text diverges from the template",
                    file_name(id)
                );
                rebuilt.push_str(&text.replace('{', "{{").replace('}', "}}"));
                cursor = &cursor[text.len()..];
            }
            Segment::Slot(name) => {
                let i = names.iter().position(|n| n == name).expect("slot listed");
                let mark = sentinel(i);
                ensure!(
                    cursor.starts_with(&mark),
                    "{}: slot `{name}` not filled in place",
                    file_name(id)
                );
                rebuilt.push_str(&format!("{{{name}}}"));
                cursor = &cursor[mark.len()..];
            }
        }
    }
    ensure!(
        cursor.is_empty(),
        "{}: trailing text after the last segment",
        file_name(id)
    );
    // slot names may be padded with spaces in the source; the parser trims them
    let padded = Regex::new(r"(^|[^{])\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}").expect("valid pattern");
    let golden = padded.replace_all(golden, "${1}{${2}}");
    ensure!(
        rebuilt == golden,
        "{}: rebuilt template differs from the golden copy",
        file_name(id)
    );
    Ok(())
}

/// Anchored pattern: every literal in order, anything in the slots. A template
/// may also close a composed prompt, following a blank line.
fn pattern(id: PromptId) -> Regex {
    let body: String = id
        .template()
        .segments()
        .iter()
        .map(|s| match s {
            Segment::Literal(t) => regex::escape(t),
            Segment::Slot(_) => "(?s:.*)".to_string(),
        })
        .collect();
    Regex::new(&format!(r"^(?s:.*\n\n)?{body}$")).expect("escaped pattern compiles")
}

fn buyer(schema: &FeatureSchema, listing: &Listing) -> BuyerProfile {
    let mut p = BuyerProfile::new("buyer-1");
    p.general = Some(GeneralRatings {
        price: 4,
        location: 5,
        features_amenities: 4,
        size: 3,
        investment: 2,
    });
    p.listing_ratings.push(ListingRating {
        listing_id: listing.id.clone(),
        rating: 4,
        reasoning: "bright and close to transit".into(),
    });
    for name in schema.leaf_names().into_iter().take(3) {
        p.feature_importance.insert(name, 5);
    }
    p
}

/// Drives every prompt-building stage of the pipeline through the recorder.
fn exercise_pipeline(llm: &Recorder) -> Result<(), String> {
    let retry = RetryPolicy::immediate(0);
    let embedder = FeatureHashEmbedder::new(64, 3);
    let listings = synthetic::listings(60, 11);
    let descriptions: Vec<String> = listings
        .iter()
        .take(6)
        .filter_map(|l| l.description.clone())
        .collect();
    let base = attempt!(
        build_keyword_base(&descriptions, llm, &RuleNormalizer::default(), 1, &retry),
        "keyword base"
    );
    attempt!(
        induce_schema(&base.keywords, &FeatureSchema::induction_seed(), llm, 100),
        "induction"
    );

    let schema = FeatureSchema::builtin();
    let refs: Vec<&Listing> = listings.iter().collect();
    let (examples, _) = attempt!(
        prepare_examples(&refs, &schema, llm, &embedder, &retry),
        "labeling"
    );
    let (model, _) = attempt!(
        train_mapping(
            &examples,
            &TrainOptions {
                epochs: 60,
                seed: 5,
                ..Default::default()
            }
        ),
        "training"
    );
    let index = attempt!(ListingIndex::build(listings.clone()), "index");
    let agent = attempt!(
        Agent::new(
            schema.clone(),
            model,
            index,
            AgentConfig::default(),
            &embedder
        ),
        "agent"
    );
    let target = &listings[0];
    let profile = buyer(&schema, &listings[1]);
    for variant in Variant::ALL {
        let req = attempt!(
            agent.request(target, variant, Some(&profile), &embedder),
            variant
        );
        attempt!(
            generate_description(
                &req,
                llm,
                &DecodeParams::default(),
                &retry,
                "1970-01-01T00:00:00Z"
            ),
            variant
        );
    }
    let text = format!(
        "{} It has {} bedrooms and {} bathrooms, with {} and a {}.",
        target.full_address(),
        target.bedrooms,
        target.bathrooms,
        target.home_insights[0].to_lowercase(),
        target.home_insights[1].to_lowercase()
    );
    attempt!(
        faithfulness_report(&text, target, &FactCheckSpec::default(), llm, &retry),
        "fact-check"
    );
    let task = |seq: u64, choice: Choice| PairTask {
        seq,
        listing: "3 bedrooms".into(),
        text_a: format!("Version A of pair {seq}."),
        text_b: format!("Version B of pair {seq}."),
        choice,
        strength: 3,
        rationale: "clearer".into(),
    };
    attempt!(
        simulate_choice(
            "Wants quiet streets.",
            &[task(1, Choice::A)],
            &task(2, Choice::B),
            llm,
            &retry
        ),
        "simulation"
    );
    attempt!(
        elicit_feature_candidates(&profile, &schema, llm, 15, &retry),
        "elicitation"
    );
    Ok(())
}

pub fn check() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/resources/prompts");
    for id in PromptId::ALL {
        let path = dir.join(format!("{}.txt", file_name(id)));
        let golden = attempt!(std::fs::read_to_string(&path), path.display());
        ensure!(
            golden == id.source(),
            "{}: compiled template differs from the golden copy",
            file_name(id)
        );
        let digest = hex::encode(Sha256::digest(golden.as_bytes()));
        ensure!(
            digest == id.checksum(),
            "{}: golden checksum {digest} != pinned {}",
            file_name(id),
            id.checksum()
        );
        literal_fidelity(id, &golden)?;
    }

    let llm = Recorder {
        inner: HeuristicMock::default(),
        seen: Mutex::new(Vec::new()),
    };
    exercise_pipeline(&llm)?;
    let seen = llm.seen.into_inner().unwrap();
    let mut matched: BTreeMap<String, usize> = BTreeMap::new();
    for id in PromptId::ALL {
        let re = pattern(id);
        let n = seen.iter().filter(|m| re.is_match(m)).count();
        ensure!(
            n > 0,
            "{}: no assembled prompt matched the template",
            file_name(id)
        );
        matched.insert(file_name(id), n);
    }
    Ok(format!(
        "{} golden templates byte-identical; {} assembled messages, every template matched",
        PromptId::ALL.len(),
        seen.len()
    ))
}
