//! Survey state machine. Every change is first appended to the event log and
//! then applied through [`Ledger::apply`], the same function replay uses, so
//! a restarted service reaches exactly the state it had before.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realtor_core::arena::{
    elo_update, leaderboard, Choice, ComparisonEvent, EloConfig, EloTable, Leaderboard,
};
use realtor_core::listing::Listing;
use realtor_core::personalization::{BuyerProfile, MAX_LISTING_RATINGS};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::log::{read_log, LogRecord, LogWriter, QualityRow, QualitySummary};
use crate::plan::{
    materialize, plan_layout, ComparisonPlan, DescriptionSource, ItemKind, PlanConfig,
};
use crate::quiz::{build_quiz, Quiz, QuizPayload};
use crate::view::ListingView;

pub const EVENT_LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    Screening,
    Preferences,
    Comparisons,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub buyer_id: String,
    pub seed: u64,
    pub state: SessionState,
    pub quiz: Quiz,
    pub screening_answers: Option<BTreeMap<String, usize>>,
    pub rejection: Option<String>,
    pub profile: Option<BuyerProfile>,
    pub plan: Option<ComparisonPlan>,
    pub cursor: usize,
    pub attention_passed: Option<bool>,
    pub control_passed: Option<bool>,
}

impl Session {
    pub fn low_quality(&self) -> bool {
        self.attention_passed == Some(false) || self.control_passed == Some(false)
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.session_id.clone(),
            buyer_id: self.buyer_id.clone(),
            state: self.state,
            cursor: self.cursor,
            total: self.plan.as_ref().map(|p| p.items.len()),
            rejection: self.rejection.clone(),
        }
    }
}

/// What the participant learns about their own session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub buyer_id: String,
    pub state: SessionState,
    pub cursor: usize,
    pub total: Option<usize>,
    pub rejection: Option<String>,
}

/// Everything derivable from the log.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub sessions: BTreeMap<String, Session>,
    pub events: Vec<ComparisonEvent>,
    pub elo: EloTable,
    pub elo_config: EloConfig,
    pub last_seq: u64,
}

impl Ledger {
    pub fn new(elo_config: EloConfig) -> Self {
        Self {
            sessions: BTreeMap::new(),
            events: Vec::new(),
            elo: EloTable::default(),
            elo_config,
            last_seq: 0,
        }
    }

    pub fn replay(records: &[LogRecord], elo_config: EloConfig) -> Result<Self, String> {
        let mut l = Self::new(elo_config);
        for r in records {
            l.apply(r)?;
        }
        Ok(l)
    }

    pub fn apply(&mut self, record: &LogRecord) -> Result<(), String> {
        let seq = record.seq();
        if seq <= self.last_seq {
            return Err(format!("seq {seq} does not follow {}", self.last_seq));
        }
        let sid = record.session_id();
        if let LogRecord::SessionCreated {
            session_id,
            buyer_id,
            seed,
            quiz,
            ..
        } = record
        {
            if self.sessions.contains_key(session_id) {
                return Err(format!("session {session_id} created twice"));
            }
            self.sessions.insert(
                session_id.clone(),
                Session {
                    session_id: session_id.clone(),
                    buyer_id: buyer_id.clone(),
                    seed: *seed,
                    state: SessionState::Screening,
                    quiz: quiz.clone(),
                    screening_answers: None,
                    rejection: None,
                    profile: None,
                    plan: None,
                    cursor: 0,
                    attention_passed: None,
                    control_passed: None,
                },
            );
            self.last_seq = seq;
            return Ok(());
        }
        let session = self
            .sessions
            .get_mut(sid)
            .ok_or_else(|| format!("unknown session {sid}"))?;
        let expect = |want: SessionState| {
            if session.state == want {
                Ok(())
            } else {
                Err(format!(
                    "session {sid} is {:?}, not {want:?}",
                    session.state
                ))
            }
        };
        match record {
            LogRecord::SessionCreated { .. } => unreachable!(),
            LogRecord::ScreeningSubmitted {
                answers,
                passed,
                reason,
                ..
            } => {
                expect(SessionState::Screening)?;
                session.screening_answers = Some(answers.clone());
                if *passed {
                    session.state = SessionState::Preferences;
                } else {
                    session.state = SessionState::Done;
                    session.rejection = reason.clone();
                }
            }
            LogRecord::PreferencesSubmitted { profile, plan, .. } => {
                expect(SessionState::Preferences)?;
                session.profile = Some(profile.clone());
                session.plan = Some(plan.clone());
                session.state = if plan.items.is_empty() {
                    SessionState::Done
                } else {
                    SessionState::Comparisons
                };
            }
            LogRecord::ChoiceRecorded { item_id, event, .. } => {
                expect(SessionState::Comparisons)?;
                if *item_id != session.cursor {
                    return Err(format!(
                        "item {item_id} is not current ({})",
                        session.cursor
                    ));
                }
                if event.seq != seq {
                    return Err(format!(
                        "event seq {} differs from record seq {seq}",
                        event.seq
                    ));
                }
                let plan = session.plan.as_ref().expect("plan exists in COMPARISONS");
                let item = &plan.items[*item_id];
                let passed = item.expected().map(|want| want == event.choice);
                match item.kind {
                    ItemKind::Attention => session.attention_passed = passed,
                    ItemKind::Control => session.control_passed = passed,
                    ItemKind::Scored => {}
                }
                session.cursor += 1;
                if session.cursor == plan.items.len() {
                    session.state = SessionState::Done;
                }
                elo_update(&mut self.elo, event, &self.elo_config).map_err(|e| e.to_string())?;
                self.events.push(event.clone());
            }
        }
        self.last_seq = seq;
        Ok(())
    }

    pub fn leaderboard(&self) -> realtor_core::Result<Leaderboard> {
        leaderboard(&self.events, &self.elo_config)
    }

    pub fn quality_summary(&self) -> QualitySummary {
        let rows: Vec<QualityRow> = self
            .sessions
            .values()
            .map(|s| QualityRow {
                session_id: s.session_id.clone(),
                buyer_id: s.buyer_id.clone(),
                completed: s.state == SessionState::Done && s.rejection.is_none(),
                rejected: s.rejection.is_some(),
                attention_passed: s.attention_passed,
                control_passed: s.control_passed,
                low_quality: s.low_quality(),
            })
            .collect();
        QualitySummary {
            sessions: rows.len(),
            rejected: rows.iter().filter(|r| r.rejected).count(),
            completed: rows.iter().filter(|r| r.completed).count(),
            low_quality: rows.iter().filter(|r| r.low_quality).count(),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Fixes session ids and seeds; `None` draws them from the OS.
    pub seed: Option<u64>,
    pub plan: PlanConfig,
    pub elo: EloConfig,
    /// Listings offered for rating during preference elicitation.
    pub rating_candidates: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/survey"),
            seed: None,
            plan: PlanConfig::default(),
            elo: EloConfig::default(),
            rating_candidates: MAX_LISTING_RATINGS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intake {
    #[serde(default)]
    pub buyer_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningSubmission {
    pub answers: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceSubmission {
    pub item_id: usize,
    pub choice: Choice,
    pub strength: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceReceipt {
    pub seq: u64,
    pub state: SessionState,
    pub cursor: usize,
    pub remaining: usize,
}

/// The current task. Comparison payloads carry text only: no competitor
/// tags, record ids or item kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPayload {
    Screening {
        session_id: String,
        quiz: QuizPayload,
    },
    Preferences {
        session_id: String,
        general_categories: Vec<String>,
        rating_candidates: Vec<ListingView>,
        max_listing_ratings: usize,
        features: Vec<String>,
    },
    Comparison {
        session_id: String,
        item_id: usize,
        position: usize,
        total: usize,
        listing: ListingView,
        description_a: String,
        description_b: String,
    },
}

pub const GENERAL_CATEGORIES: [&str; 5] = [
    "price",
    "location",
    "features_amenities",
    "size",
    "investment",
];

struct Inner {
    ledger: Ledger,
    writer: LogWriter,
    ids: Option<ChaCha8Rng>,
}

pub struct SurveyService {
    config: ServiceConfig,
    listings: Arc<Vec<Listing>>,
    by_id: Arc<HashMap<String, Listing>>,
    source: Arc<dyn DescriptionSource>,
    inner: Mutex<Inner>,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

fn hex_id(rng: &mut dyn RngCore) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl SurveyService {
    /// Opens the service, replaying any existing event log under
    /// `config.data_dir`.
    pub fn open(
        config: ServiceConfig,
        listings: Vec<Listing>,
        source: Arc<dyn DescriptionSource>,
    ) -> Result<Self, ApiError> {
        config.plan.validate().map_err(ApiError::internal)?;
        config.elo.validate()?;
        if listings.is_empty() {
            return Err(ApiError::internal("the survey needs at least one listing"));
        }
        let path = config.data_dir.join(EVENT_LOG_FILE);
        let ledger = if path.exists() {
            let records = read_log(&path).map_err(|e| ApiError::internal(e.to_string()))?;
            Ledger::replay(&records, config.elo)
                .map_err(|e| ApiError::internal(format!("replay: {e}")))?
        } else {
            Ledger::new(config.elo)
        };
        let ids = config.seed.map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            rng.set_stream(ledger.sessions.len() as u64);
            rng
        });
        let writer = LogWriter::open(&path)?;
        let by_id = listings.iter().map(|l| (l.id.clone(), l.clone())).collect();
        tracing::info!(
            sessions = ledger.sessions.len(),
            events = ledger.events.len(),
            "survey state restored"
        );
        Ok(Self {
            config,
            listings: Arc::new(listings),
            by_id: Arc::new(by_id),
            source,
            inner: Mutex::new(Inner {
                ledger,
                writer,
                ids,
            }),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn log_path(&self) -> PathBuf {
        self.lock().writer.path().to_path_buf()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Snapshot of the derived state.
    pub fn ledger(&self) -> Ledger {
        self.lock().ledger.clone()
    }

    pub fn session(&self, id: &str) -> Result<Session, ApiError> {
        self.lock()
            .ledger
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.session_locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Appends and applies under the writer lock; `build` receives the seq.
    fn commit(&self, build: impl FnOnce(u64) -> LogRecord) -> Result<u64, ApiError> {
        let mut inner = self.lock();
        let seq = inner.ledger.last_seq + 1;
        let record = build(seq);
        inner.writer.append(&record)?;
        inner
            .ledger
            .apply(&record)
            .map_err(|e| ApiError::internal(format!("log and state diverged: {e}")))?;
        Ok(seq)
    }

    pub async fn create_session(&self, intake: Intake) -> Result<SessionSummary, ApiError> {
        if let Some(b) = &intake.buyer_id {
            if b.trim().is_empty() {
                return Err(ApiError::invalid("buyer_id", "buyer_id is empty"));
            }
        }
        let (session_id, seed) = {
            let mut inner = self.lock();
            match inner.ids.as_mut() {
                Some(rng) => (hex_id(rng), rng.next_u64()),
                None => {
                    let mut os = rand::rng();
                    (hex_id(&mut os), os.next_u64())
                }
            }
        };
        let quiz = build_quiz(&self.listings, &mut ChaCha8Rng::seed_from_u64(seed))
            .expect("non-empty listings");
        let buyer_id = intake
            .buyer_id
            .unwrap_or_else(|| format!("buyer-{}", &session_id[..8]));
        let sid = session_id.clone();
        self.commit(|seq| LogRecord::SessionCreated {
            seq,
            session_id: sid,
            buyer_id,
            seed,
            quiz,
        })?;
        Ok(self.session(&session_id)?.summary())
    }

    pub async fn next_task(&self, id: &str) -> Result<TaskPayload, ApiError> {
        let s = self.session(id)?;
        let session_id = s.session_id.clone();
        match s.state {
            SessionState::Screening => {
                let listing = self.by_id.get(&s.quiz.listing_id).ok_or_else(|| {
                    ApiError::internal(format!("quiz listing {} is gone", s.quiz.listing_id))
                })?;
                Ok(TaskPayload::Screening {
                    session_id,
                    quiz: QuizPayload {
                        listing: listing.into(),
                        items: s.quiz.questions(),
                    },
                })
            }
            SessionState::Preferences => {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x9e37_79b9_7f4a_7c15);
                let n = self.config.rating_candidates.min(self.listings.len());
                let picks = rand::seq::index::sample(&mut rng, self.listings.len(), n);
                Ok(TaskPayload::Preferences {
                    session_id,
                    general_categories: GENERAL_CATEGORIES.iter().map(|c| c.to_string()).collect(),
                    rating_candidates: picks.iter().map(|i| (&self.listings[i]).into()).collect(),
                    max_listing_ratings: MAX_LISTING_RATINGS,
                    features: self.source.feature_names(),
                })
            }
            SessionState::Comparisons => {
                let plan = s.plan.as_ref().expect("plan exists in COMPARISONS");
                let item = &plan.items[s.cursor];
                let listing = self.by_id.get(&item.listing_id).ok_or_else(|| {
                    ApiError::internal(format!("listing {} is gone", item.listing_id))
                })?;
                Ok(TaskPayload::Comparison {
                    session_id,
                    item_id: item.item_id,
                    position: s.cursor + 1,
                    total: plan.items.len(),
                    listing: listing.into(),
                    description_a: item.a.text.clone(),
                    description_b: item.b.text.clone(),
                })
            }
            SessionState::Done => Err(ApiError::session_done()),
        }
    }

    fn require(s: &Session, want: SessionState) -> Result<(), ApiError> {
        match s.state {
            st if st == want => Ok(()),
            SessionState::Done => Err(ApiError::session_done()),
            st => Err(ApiError::wrong_state(format!(
                "session is {st:?}, not {want:?}"
            ))),
        }
    }

    pub async fn submit_screening(
        &self,
        id: &str,
        sub: ScreeningSubmission,
    ) -> Result<SessionSummary, ApiError> {
        let lock = self.session_lock(id);
        let _guard = lock.lock().await;
        let s = self.session(id)?;
        Self::require(&s, SessionState::Screening)?;
        let (passed, reason) = s.quiz.grade(&sub.answers)?;
        self.commit(|seq| LogRecord::ScreeningSubmitted {
            seq,
            session_id: id.to_string(),
            answers: sub.answers,
            passed,
            reason,
        })?;
        Ok(self.session(id)?.summary())
    }

    fn check_profile(
        &self,
        s: &Session,
        mut profile: BuyerProfile,
    ) -> Result<BuyerProfile, ApiError> {
        profile.buyer_id = s.buyer_id.clone();
        profile
            .validate()
            .map_err(|e| ApiError::invalid("profile", e.to_string()))?;
        if profile.general.is_none() {
            return Err(ApiError::invalid(
                "general",
                "general preference ratings are required",
            ));
        }
        for (i, r) in profile.listing_ratings.iter().enumerate() {
            if !self.by_id.contains_key(&r.listing_id) {
                return Err(ApiError::invalid(
                    &format!("listing_ratings[{i}].listing_id"),
                    "unknown listing",
                ));
            }
            if r.reasoning.trim().is_empty() {
                return Err(ApiError::invalid(
                    &format!("listing_ratings[{i}].reasoning"),
                    "a reason is required",
                ));
            }
        }
        let known = self.source.feature_names();
        for name in profile.feature_importance.keys() {
            if !known.iter().any(|k| k.eq_ignore_ascii_case(name)) {
                return Err(ApiError::invalid(
                    &format!("feature_importance.{name}"),
                    "unknown feature",
                ));
            }
        }
        Ok(profile)
    }

    pub async fn submit_preferences(
        &self,
        id: &str,
        profile: BuyerProfile,
    ) -> Result<SessionSummary, ApiError> {
        let lock = self.session_lock(id);
        let _guard = lock.lock().await;
        let s = self.session(id)?;
        Self::require(&s, SessionState::Preferences)?;
        let profile = self.check_profile(&s, profile)?;
        let pool: Vec<&Listing> = self
            .listings
            .iter()
            .filter(|l| profile.matches_filters(l))
            .collect();
        let layout = plan_layout(&pool, &self.listings, &self.config.plan, s.seed)?;

        let (by_id, source, seed, p) = (
            self.by_id.clone(),
            self.source.clone(),
            s.seed,
            profile.clone(),
        );
        let plan = tokio::task::spawn_blocking(move || {
            materialize(&layout, &by_id, &p, source.as_ref(), seed)
        })
        .await
        .map_err(|e| ApiError::internal(format!("generation task: {e}")))??;
        tracing::info!(
            session = id,
            items = plan.items.len(),
            "comparison plan ready"
        );
        self.commit(|seq| LogRecord::PreferencesSubmitted {
            seq,
            session_id: id.to_string(),
            profile,
            plan,
        })?;
        Ok(self.session(id)?.summary())
    }

    pub async fn record_choice(
        &self,
        id: &str,
        sub: ChoiceSubmission,
    ) -> Result<ChoiceReceipt, ApiError> {
        let lock = self.session_lock(id);
        let _guard = lock.lock().await;
        let s = self.session(id)?;
        Self::require(&s, SessionState::Comparisons)?;
        if sub.item_id != s.cursor {
            return Err(ApiError::stale_item(format!(
                "item {} is not current; item {} is",
                sub.item_id, s.cursor
            )));
        }
        if !(1..=5).contains(&sub.strength) {
            return Err(ApiError::invalid(
                "strength",
                "strength must be between 1 and 5",
            ));
        }
        if sub.rationale.trim().is_empty() {
            return Err(ApiError::invalid("rationale", "please explain your choice"));
        }
        let plan = s.plan.as_ref().expect("plan exists in COMPARISONS");
        let item = &plan.items[s.cursor];
        let seq = self.commit(|seq| LogRecord::ChoiceRecorded {
            seq,
            session_id: id.to_string(),
            item_id: item.item_id,
            event: ComparisonEvent {
                seq,
                buyer_id: s.buyer_id.clone(),
                listing_id: item.listing_id.clone(),
                model_a: item.a.tag.clone(),
                model_b: item.b.tag.clone(),
                record_a: Some(item.a.record_id.clone()),
                record_b: Some(item.b.record_id.clone()),
                choice: sub.choice,
                strength: sub.strength,
                rationale: sub.rationale.trim().to_string(),
                attention_check: item.kind == ItemKind::Attention,
                control: item.kind == ItemKind::Control,
            },
        })?;
        let after = self.session(id)?;
        Ok(ChoiceReceipt {
            seq,
            state: after.state,
            cursor: after.cursor,
            remaining: plan.items.len() - after.cursor,
        })
    }

    pub fn leaderboard(&self) -> Result<Leaderboard, ApiError> {
        Ok(self.lock().ledger.leaderboard()?)
    }

    pub fn live_ratings(&self) -> EloTable {
        self.lock().ledger.elo.clone()
    }

    pub fn listing(&self, id: &str) -> Result<ListingView, ApiError> {
        self.by_id
            .get(id)
            .map(Into::into)
            .ok_or_else(|| ApiError::not_found(format!("no listing {id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn service_is_shareable() {
        fn is<T: Send + Sync>() {}
        is::<SurveyService>();
    }
}
