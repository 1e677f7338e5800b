use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use realtor_core::agent::{Agent, AgentConfig};
use realtor_core::arena::leaderboard;
use realtor_core::grounding::MlpModel;
use realtor_core::listing::Listing;
use realtor_core::llm::{DecodeParams, FeatureHashEmbedder, HeuristicMock, RetryPolicy};
use realtor_core::personalization::{BuyerProfile, GeneralRatings, ListingRating};
use realtor_core::schema::FeatureSchema;
use realtor_core::surprisal::ListingIndex;
use realtor_core::synthetic;
use realtor_survey::http::router;
use realtor_survey::log::{read_comparison_events, read_log};
use realtor_survey::plan::AgentSource;
use realtor_survey::quiz::answer_key;
use realtor_survey::service::Ledger;
use realtor_survey::{ServiceConfig, SurveyService};
use serde_json::{json, Value};
use tower::ServiceExt;

use crate::Outcome;

const EXPECTED_ITEMS: usize = 12;
const EXPECTED_SCORED: usize = 10;
/// Strings that would unblind a participant if they reached a payload.
const HIDDEN: [&str; 16] = [
    "AI_REALTOR",
    "NO_SURPRISAL",
    "ONLY_SIGNALING",
    "VANILLA",
    "HUMAN",
    "CONTROL_PLAIN",
    "ATTENTION_CLEAN",
    "ATTENTION_DEGRADED",
    "\"model_a",
    "\"model_b",
    "\"record_a",
    "\"record_b",
    "\"variant",
    "\"model_tag",
    "\"attention",
    "\"control",
];

fn open(dir: &Path, listings: &[Listing]) -> Result<Arc<SurveyService>, String> {
    let schema = FeatureSchema::builtin();
    let embedder = Arc::new(FeatureHashEmbedder::new(32, 7));
    let model = attempt!(MlpModel::init(32, schema.leaf_count(), false, 3), "model");
    let index = attempt!(ListingIndex::build(listings.to_vec()), "index");
    let agent = attempt!(
        Agent::new(
            schema,
            model,
            index,
            AgentConfig::default(),
            embedder.as_ref()
        ),
        "agent"
    );
    let source = AgentSource {
        agent,
        llm: Arc::new(HeuristicMock::default()),
        embedder,
        decode: DecodeParams::default(),
        retry: RetryPolicy::immediate(0),
    };
    let cfg = ServiceConfig {
        data_dir: dir.to_path_buf(),
        seed: Some(17),
        ..Default::default()
    };
    Ok(Arc::new(attempt!(
        SurveyService::open(cfg, listings.to_vec(), Arc::new(source)),
        "open service"
    )))
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> Result<(StatusCode, Value), String> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .map_err(|e| e.to_string())?;
    let res = attempt!(app.clone().oneshot(req).await, uri);
    let status = res.status();
    let bytes = attempt!(axum::body::to_bytes(res.into_body(), usize::MAX).await, uri);
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        attempt!(serde_json::from_slice(&bytes), uri)
    };
    Ok((status, value))
}

fn blind(payload: &Value, record_ids: &[String]) -> Result<(), String> {
    let text = payload.to_string();
    for h in HIDDEN {
        ensure!(!text.contains(h), "payload leaks {h}");
    }
    for id in record_ids {
        ensure!(!text.contains(id.as_str()), "payload leaks record id {id}");
    }
    Ok(())
}

async fn scripted_session(dir: &Path) -> Outcome {
    let listings = synthetic::listings(40, 21);
    let svc = open(dir, &listings)?;
    let app = router(svc.clone());
    let (st, created) = call(
        &app,
        "POST",
        "/api/sessions",
        Some(json!({"buyer_id": "buyer-1"})),
    )
    .await?;
    ensure!(st == StatusCode::OK, "create: {st} {created}");
    let id = created["session_id"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let next = format!("/api/sessions/{id}/next");

    let (_, task) = call(&app, "GET", &next, None).await?;
    ensure!(task["kind"] == "screening", "first task {}", task["kind"]);
    ensure!(
        !task.to_string().contains("\"answer\""),
        "screening payload carries answers"
    );
    let key = answer_key(&attempt!(svc.session(&id), "session").quiz);
    let (st, _) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/screening"),
        Some(json!({ "answers": key })),
    )
    .await?;
    ensure!(st == StatusCode::OK, "screening: {st}");

    let (_, task) = call(&app, "GET", &next, None).await?;
    ensure!(
        task["kind"] == "preferences",
        "second task {}",
        task["kind"]
    );
    let mut profile = BuyerProfile::new("buyer-1");
    profile.general = Some(GeneralRatings {
        price: 5,
        location: 4,
        features_amenities: 3,
        size: 2,
        investment: 1,
    });
    let candidate = task["rating_candidates"][0]["id"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    profile.listing_ratings.push(ListingRating {
        listing_id: candidate,
        rating: 4,
        reasoning: "bright".into(),
    });
    for f in task["features"].as_array().into_iter().flatten().take(4) {
        profile
            .feature_importance
            .insert(f.as_str().unwrap_or_default().to_string(), 5);
    }
    let body = attempt!(serde_json::to_value(&profile), "profile");
    let (st, s) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/preferences"),
        Some(body),
    )
    .await?;
    ensure!(
        st == StatusCode::OK && s["total"] == EXPECTED_ITEMS,
        "preferences: {st} {s}"
    );

    let plan = attempt!(svc.session(&id), "session")
        .plan
        .ok_or("no plan after preferences")?;
    let record_ids: Vec<String> = plan
        .items
        .iter()
        .flat_map(|i| [i.a.record_id.clone(), i.b.record_id.clone()])
        .collect();
    for k in 0..EXPECTED_ITEMS {
        let (st, task) = call(&app, "GET", &next, None).await?;
        ensure!(
            st == StatusCode::OK && task["kind"] == "comparison",
            "item {k}: {st} {task}"
        );
        blind(&task, &record_ids)?;
        let choice = plan.items[k]
            .expected()
            .map(|c| format!("{c:?}"))
            .unwrap_or_else(|| ["A", "B"][k % 2].into());
        let submission =
            json!({"item_id": k, "choice": choice, "strength": 1 + k % 5, "rationale": "clearer"});
        let (st, receipt) = call(
            &app,
            "POST",
            &format!("/api/sessions/{id}/choices"),
            Some(submission),
        )
        .await?;
        ensure!(st == StatusCode::OK, "choice {k}: {st} {receipt}");
        blind(&receipt, &record_ids)?;
    }

    let events = attempt!(read_comparison_events(&svc.log_path()), "log");
    ensure!(events.len() == EXPECTED_ITEMS, "{} events", events.len());
    ensure!(
        events.iter().filter(|e| e.is_scored()).count() == EXPECTED_SCORED,
        "scored events"
    );
    ensure!(
        events.iter().filter(|e| e.attention_check).count() == 1,
        "attention events"
    );
    ensure!(
        events.iter().filter(|e| e.control).count() == 1,
        "control events"
    );

    let (_, served) = call(&app, "GET", "/api/leaderboard", None).await?;
    let offline = attempt!(leaderboard(&events, &svc.config().elo), "offline replay");
    ensure!(
        served == attempt!(serde_json::to_value(&offline), "serialize"),
        "served leaderboard differs from offline replay"
    );
    ensure!(
        svc.live_ratings() == offline.table,
        "live ratings differ from offline replay"
    );

    let before = svc.ledger();
    drop(app);
    drop(svc);
    let reopened = open(dir, &listings)?;
    ensure!(reopened.ledger() == before, "state after restart differs");
    let records = attempt!(read_log(&reopened.log_path()), "log");
    ensure!(
        attempt!(Ledger::replay(&records, reopened.config().elo), "replay") == before,
        "replayed ledger differs"
    );
    Ok(format!(
        "{} events ({EXPECTED_SCORED} scored), blinded, leaderboard = replay, restart identical",
        events.len()
    ))
}

pub fn check() -> Outcome {
    let dir = attempt!(tempfile::tempdir(), "tempdir");
    let runtime = attempt!(
        tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build(),
        "runtime"
    );
    runtime.block_on(scripted_session(dir.path()))
}
