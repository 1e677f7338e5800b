#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use realtor_core::agent::{Agent, AgentConfig};
use realtor_core::grounding::MlpModel;
use realtor_core::listing::Listing;
use realtor_core::llm::{DecodeParams, FeatureHashEmbedder, HeuristicMock, RetryPolicy};
use realtor_core::personalization::{BuyerProfile, GeneralRatings, ListingRating};
use realtor_core::schema::FeatureSchema;
use realtor_core::surprisal::ListingIndex;
use realtor_core::synthetic;
use realtor_survey::plan::AgentSource;
use realtor_survey::{ServiceConfig, SurveyService};
use serde_json::Value;
use tower::ServiceExt;

pub fn listings() -> Vec<Listing> {
    synthetic::listings(40, 21)
}

pub fn source(listings: &[Listing]) -> AgentSource {
    let schema = FeatureSchema::builtin();
    let embedder = Arc::new(FeatureHashEmbedder::new(32, 7));
    let model = MlpModel::init(32, schema.leaf_count(), false, 3).unwrap();
    let index = ListingIndex::build(listings.to_vec()).unwrap();
    let agent = Agent::new(
        schema,
        model,
        index,
        AgentConfig::default(),
        embedder.as_ref(),
    )
    .unwrap();
    AgentSource {
        agent,
        llm: Arc::new(HeuristicMock::default()),
        embedder,
        decode: DecodeParams::default(),
        retry: RetryPolicy::immediate(0),
    }
}

pub fn open(dir: &Path, seed: u64) -> Arc<SurveyService> {
    let ls = listings();
    let cfg = ServiceConfig {
        data_dir: dir.to_path_buf(),
        seed: Some(seed),
        ..Default::default()
    };
    Arc::new(SurveyService::open(cfg, ls.clone(), Arc::new(source(&ls))).unwrap())
}

pub fn profile(features: &[String]) -> BuyerProfile {
    let mut p = BuyerProfile::new("ignored");
    p.general = Some(GeneralRatings {
        price: 5,
        location: 4,
        features_amenities: 3,
        size: 2,
        investment: 1,
    });
    p.listing_ratings.push(ListingRating {
        listing_id: "L0001".into(),
        rating: 4,
        reasoning: "bright".into(),
    });
    for f in features.iter().take(4) {
        p.feature_importance.insert(f.clone(), 5);
    }
    p
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX)
        .await
        .unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// Competitor tags that must never reach a participant.
pub const TAGS: [&str; 8] = [
    "AI_REALTOR",
    "NO_SURPRISAL",
    "ONLY_SIGNALING",
    "VANILLA",
    "HUMAN",
    "CONTROL_PLAIN",
    "ATTENTION_CLEAN",
    "ATTENTION_DEGRADED",
];
