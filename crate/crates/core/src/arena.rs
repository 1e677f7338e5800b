//! Pairwise evaluation: Elo ratings from buyer choices, empirical win rates,
//! and simulated buyer choices scored against the recorded ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{DecodeParams, LanguageModelClient, Message, RetryPolicy};
use crate::prompts::{render, Bindings, PromptId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EloConfig {
    pub initial: f64,
    pub c: f64,
    pub k: f64,
    /// Experimental: scale the step by `strength / 3`. Off by default.
    #[serde(default)]
    pub scale_by_strength: bool,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            initial: 1000.0,
            c: 400.0,
            k: 32.0,
            scale_by_strength: false,
        }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.k > 0.0 && self.initial.is_finite()) {
            return Err(Error::Precondition(
                "Elo needs c > 0, K > 0 and a finite initial rating".into(),
            ));
        }
        Ok(())
    }
}

/// Expected score of a player rated `e1` against one rated `e0`.
pub fn expected_win_rate(e1: f64, e0: f64, config: &EloConfig) -> f64 {
    1.0 / (1.0 + 10f64.powf((e0 - e1) / config.c))
}

/// Ratings live on a 2^-32 grid. With magnitudes below 2^20 every sum and
/// difference is then exact in f64, so each update is exactly zero-sum.
const GRID: f64 = 4_294_967_296.0;

fn quantize(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn other(self) -> Self {
        match self {
            Choice::A => Choice::B,
            Choice::B => Choice::A,
        }
    }
}

/// One recorded buyer choice between two descriptions of the same listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEvent {
    pub seq: u64,
    pub buyer_id: String,
    pub listing_id: String,
    /// Competitor tags; never shown to the buyer.
    pub model_a: String,
    pub model_b: String,
    #[serde(default)]
    pub record_a: Option<String>,
    #[serde(default)]
    pub record_b: Option<String>,
    pub choice: Choice,
    pub strength: u8,
    pub rationale: String,
    #[serde(default)]
    pub attention_check: bool,
    #[serde(default)]
    pub control: bool,
}

impl ComparisonEvent {
    pub fn is_scored(&self) -> bool {
        !self.attention_check && !self.control
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_a == self.model_b && self.record_a == self.record_b {
            return Err(Error::Precondition(format!(
                "event {} compares a description with itself",
                self.seq
            )));
        }
        if !(1..=5).contains(&self.strength) {
            return Err(Error::Precondition(format!(
                "event {} strength {} outside 1..=5",
                self.seq, self.strength
            )));
        }
        Ok(())
    }

    pub fn winner(&self) -> &str {
        match self.choice {
            Choice::A => &self.model_a,
            Choice::B => &self.model_b,
        }
    }

    pub fn loser(&self) -> &str {
        match self.choice {
            Choice::A => &self.model_b,
            Choice::B => &self.model_a,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EloTable {
    pub ratings: BTreeMap<String, f64>,
    pub games: BTreeMap<String, usize>,
    /// Seq of the last event applied; 0 before any.
    pub cursor: u64,
}

impl EloTable {
    /// Rating of `model`, or the initial rating for an unseen one.
    pub fn rating(&self, model: &str, config: &EloConfig) -> f64 {
        self.ratings
            .get(model)
            .copied()
            .unwrap_or_else(|| quantize(config.initial))
    }

    pub fn total(&self) -> f64 {
        self.ratings.values().sum()
    }
}

/// Applies one event. Attention-check and control events only advance the
/// cursor. The winner gains exactly what the loser gives up.
pub fn elo_update(table: &mut EloTable, event: &ComparisonEvent, config: &EloConfig) -> Result<()> {
    if event.seq <= table.cursor {
        return Err(Error::StaleEvent {
            seq: event.seq,
            cursor: table.cursor,
        });
    }
    event.validate()?;
    table.cursor = event.seq;
    if !event.is_scored() {
        return Ok(());
    }
    let (w, l) = (event.winner().to_string(), event.loser().to_string());
    let rw = table.rating(&w, config);
    let rl = table.rating(&l, config);
    let k = if config.scale_by_strength {
        config.k * f64::from(event.strength) / 3.0
    } else {
        config.k
    };
    let delta = quantize(k * (1.0 - expected_win_rate(rw, rl, config)));
    table.ratings.insert(w.clone(), rw + delta);
    table.ratings.insert(l.clone(), rl - delta);
    *table.games.entry(w).or_default() += 1;
    *table.games.entry(l).or_default() += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub model: String,
    pub opponent: String,
    pub wins: usize,
    pub losses: usize,
    pub win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub rating: f64,
    pub games: usize,
    pub wins: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub table: EloTable,
    /// Best rating first, ties by name.
    pub rows: Vec<LeaderboardRow>,
    /// `wins / (wins + losses)` for every ordered pair that met.
    pub win_rates: Vec<PairRecord>,
}

impl Leaderboard {
    pub fn win_rate(&self, model: &str, opponent: &str) -> Option<f64> {
        self.win_rates
            .iter()
            .find(|p| p.model == model && p.opponent == opponent)
            .map(|p| p.win_rate)
    }
}

/// Full replay of a seq-ordered event list.
pub fn leaderboard(events: &[ComparisonEvent], config: &EloConfig) -> Result<Leaderboard> {
    config.validate()?;
    let mut table = EloTable::default();
    let mut pairs: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    let mut previous = 0;
    for e in events {
        if e.seq <= previous {
            return Err(Error::OutOfOrder {
                seq: e.seq,
                previous,
            });
        }
        previous = e.seq;
        elo_update(&mut table, e, config)?;
        if e.is_scored() {
            pairs
                .entry((e.winner().into(), e.loser().into()))
                .or_default()
                .0 += 1;
            pairs
                .entry((e.loser().into(), e.winner().into()))
                .or_default()
                .1 += 1;
        }
    }
    let win_rates: Vec<PairRecord> = pairs
        .into_iter()
        .map(|((model, opponent), (wins, losses))| PairRecord {
            model,
            opponent,
            wins,
            losses,
            win_rate: wins as f64 / (wins + losses) as f64,
        })
        .collect();
    let mut rows: Vec<LeaderboardRow> = table
        .ratings
        .iter()
        .map(|(m, r)| {
            let (wins, losses) = win_rates
                .iter()
                .filter(|p| &p.model == m)
                .fold((0, 0), |(w, l), p| (w + p.wins, l + p.losses));
            LeaderboardRow {
                model: m.clone(),
                rating: *r,
                games: table.games[m],
                wins,
                losses,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.rating
            .total_cmp(&a.rating)
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(Leaderboard {
        table,
        rows,
        win_rates,
    })
}

/// A recorded comparison with the texts a simulator sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTask {
    pub seq: u64,
    /// Listing facts as shown to the buyer.
    pub listing: String,
    pub text_a: String,
    pub text_b: String,
    pub choice: Choice,
    pub strength: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    /// `None` when both orders gave equal scores.
    pub choice: Option<Choice>,
    /// Score of A when shown first.
    pub score_a_first: u8,
    /// Score of B when shown first.
    pub score_b_first: u8,
}

/// Last integer in the reply, which must lie in 0..=100.
pub fn parse_score(reply: &str) -> Option<u8> {
    let last = reply
        .split(|c: char| !c.is_ascii_digit())
        .rfind(|t| !t.is_empty())?;
    last.parse::<u32>()
        .ok()
        .filter(|v| *v <= 100)
        .map(|v| v as u8)
}

/// Score a history example would have received when shown in its recorded
/// order: the chosen side at `50 + 10 * strength`, otherwise mirrored.
fn history_score(task: &PairTask) -> u8 {
    let margin = 10 * task.strength.clamp(1, 5);
    match task.choice {
        Choice::A => 50 + margin,
        Choice::B => 50 - margin,
    }
}

fn fill(user_profile: &str, listing: &str, first: &str, second: &str) -> Result<String> {
    render(
        PromptId::UserSimulation,
        &Bindings::new()
            .set("user_profile", user_profile)
            .set("listing", listing)
            .set("description_0", first)
            .set("description_1", second),
    )
}

/// In-context history: each shot is the filled prompt followed by the
/// buyer's rationale and the implied score.
pub fn history_messages(user_profile: &str, history: &[PairTask]) -> Result<Vec<Message>> {
    let mut out = Vec::with_capacity(history.len() * 2);
    for h in history {
        out.push(Message::user(fill(
            user_profile,
            &h.listing,
            &h.text_a,
            &h.text_b,
        )?));
        out.push(Message::assistant(format!(
            "The user might prefer the first description because... {}\nThe score for the first description (an integer within [0, 100]): {}",
            h.rationale.trim(),
            history_score(h)
        )));
    }
    Ok(out)
}

fn ask_score(
    llm: &dyn LanguageModelClient,
    messages: &[Message],
    retry: &RetryPolicy,
) -> Result<u8> {
    let params = DecodeParams::default();
    let mut last = String::new();
    for _ in 0..2 {
        last = retry.run(|| llm.complete(messages, &params))?;
        if let Some(s) = parse_score(&last) {
            return Ok(s);
        }
    }
    Err(crate::llm::LlmError::Unparseable {
        raw: last,
        reason: "no score in [0, 100]".into(),
    }
    .into())
}

/// Prompts twice with the two descriptions in swapped order; the side with
/// the larger first-position score wins, equal scores are a tie.
pub fn simulate_choice(
    user_profile: &str,
    history: &[PairTask],
    target: &PairTask,
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<Prediction> {
    if history.iter().any(|h| h.seq == target.seq) {
        return Err(Error::Precondition(format!(
            "target {} is part of the history",
            target.seq
        )));
    }
    let shots = history_messages(user_profile, history)?;
    let mut ab = shots.clone();
    ab.push(Message::user(fill(
        user_profile,
        &target.listing,
        &target.text_a,
        &target.text_b,
    )?));
    let mut ba = shots;
    ba.push(Message::user(fill(
        user_profile,
        &target.listing,
        &target.text_b,
        &target.text_a,
    )?));
    let score_a_first = ask_score(llm, &ab, retry)?;
    let score_b_first = ask_score(llm, &ba, retry)?;
    let choice = match score_a_first.cmp(&score_b_first) {
        std::cmp::Ordering::Greater => Some(Choice::A),
        std::cmp::Ordering::Less => Some(Choice::B),
        std::cmp::Ordering::Equal => None,
    };
    Ok(Prediction {
        choice,
        score_a_first,
        score_b_first,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub target_seq: u64,
    pub prediction: Prediction,
    pub actual: Choice,
}

impl PredictionRecord {
    /// `None` for ties.
    pub fn correct(&self) -> Option<bool> {
        self.prediction.choice.map(|c| c == self.actual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub buyer_id: String,
    pub shots: usize,
    pub predictions: Vec<PredictionRecord>,
}

impl SimulationRun {
    /// Accuracy over non-tie predictions; `None` if all were ties.
    pub fn accuracy(&self) -> Option<f64> {
        let judged: Vec<bool> = self
            .predictions
            .iter()
            .filter_map(PredictionRecord::correct)
            .collect();
        (!judged.is_empty())
            .then(|| judged.iter().filter(|c| **c).count() as f64 / judged.len() as f64)
    }
}

/// Uses the buyer's first `shots` tasks as history and predicts the rest.
pub fn simulate_buyer(
    buyer_id: &str,
    user_profile: &str,
    tasks: &[PairTask],
    shots: usize,
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<SimulationRun> {
    if shots >= tasks.len() {
        return Err(Error::Precondition(format!(
            "{shots} shots leave no target among {} tasks",
            tasks.len()
        )));
    }
    let (history, targets) = tasks.split_at(shots);
    let predictions = targets
        .iter()
        .map(|t| {
            Ok(PredictionRecord {
                target_seq: t.seq,
                prediction: simulate_choice(user_profile, history, t, llm, retry)?,
                actual: t.choice,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimulationRun {
        buyer_id: buyer_id.into(),
        shots,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotAccuracy {
    pub shots: usize,
    pub mean: f64,
    /// Population variance across buyers.
    pub variance: f64,
    pub buyers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetrics {
    /// Shot-wise accuracy: mean over buyers of each buyer's accuracy at that shot count.
    pub ssa: Vec<ShotAccuracy>,
    /// User-wise accuracy: mean over shot counts of that buyer's accuracy.
    pub usa: BTreeMap<String, f64>,
    pub usa_histogram: Vec<HistogramBin>,
    pub ties: usize,
}

pub const USA_HISTOGRAM_BINS: usize = 10;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn simulation_accuracy(runs: &[SimulationRun]) -> Result<SimulationMetrics> {
    if runs.is_empty() {
        return Err(Error::Precondition("no simulation runs".into()));
    }
    let mut by_shot: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut by_buyer: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut ties = 0;
    for run in runs {
        ties += run
            .predictions
            .iter()
            .filter(|p| p.correct().is_none())
            .count();
        if let Some(acc) = run.accuracy() {
            by_shot.entry(run.shots).or_default().push(acc);
            by_buyer.entry(run.buyer_id.clone()).or_default().push(acc);
        }
    }
    if by_buyer.is_empty() {
        return Err(Error::Precondition("every prediction was a tie".into()));
    }
    let ssa = by_shot
        .into_iter()
        .map(|(shots, accs)| {
            let m = mean(&accs);
            let variance = accs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / accs.len() as f64;
            ShotAccuracy {
                shots,
                mean: m,
                variance,
                buyers: accs.len(),
            }
        })
        .collect();
    let usa: BTreeMap<String, f64> = by_buyer
        .into_iter()
        .map(|(b, accs)| (b, mean(&accs)))
        .collect();
    let mut usa_histogram: Vec<HistogramBin> = (0..USA_HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: i as f64 / USA_HISTOGRAM_BINS as f64,
            hi: (i + 1) as f64 / USA_HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    for v in usa.values() {
        let bin = ((v * USA_HISTOGRAM_BINS as f64) as usize).min(USA_HISTOGRAM_BINS - 1);
        usa_histogram[bin].count += 1;
    }
    Ok(SimulationMetrics {
        ssa,
        usa,
        usa_histogram,
        ties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedClient;

    pub(crate) fn event(seq: u64, a: &str, b: &str, choice: Choice) -> ComparisonEvent {
        ComparisonEvent {
            seq,
            buyer_id: "u".into(),
            listing_id: "l".into(),
            model_a: a.into(),
            model_b: b.into(),
            record_a: None,
            record_b: None,
            choice,
            strength: 3,
            rationale: "r".into(),
            attention_check: false,
            control: false,
        }
    }

    #[test]
    fn expected_rates() {
        let cfg = EloConfig::default();
        assert_eq!(expected_win_rate(1000.0, 1000.0, &cfg), 0.5);
        assert!((expected_win_rate(1400.0, 1000.0, &cfg) - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn first_updates() {
        let cfg = EloConfig::default();
        let mut t = EloTable::default();
        elo_update(&mut t, &event(1, "x", "y", Choice::A), &cfg).unwrap();
        assert_eq!(t.ratings["x"], 1016.0);
        assert_eq!(t.ratings["y"], 984.0);
        elo_update(&mut t, &event(2, "x", "y", Choice::A), &cfg).unwrap();
        let expected = 1016.0 + 32.0 * (1.0 - 1.0 / (1.0 + 10f64.powf(-32.0 / 400.0)));
        assert!((t.ratings["x"] - expected).abs() < 1e-9);
        assert!((t.ratings["x"] - 1030.5).abs() < 0.1);
        assert_eq!(t.total(), 2000.0);
        assert!(matches!(
            elo_update(&mut t, &event(2, "x", "y", Choice::B), &cfg),
            Err(Error::StaleEvent { .. })
        ));
    }

    #[test]
    fn flagged_events_do_not_move_ratings() {
        let cfg = EloConfig::default();
        let mut e = event(1, "x", "y", Choice::A);
        e.attention_check = true;
        let mut c = event(2, "x", "human", Choice::B);
        c.control = true;
        let lb = leaderboard(&[e, c], &cfg).unwrap();
        assert!(lb.table.ratings.is_empty() && lb.win_rates.is_empty());
        assert_eq!(lb.table.cursor, 2);
        assert_eq!(lb.table.rating("anything", &cfg), 1000.0);
    }

    #[test]
    fn leaderboard_order_guard_and_win_rates() {
        let cfg = EloConfig::default();
        let evs = [
            event(1, "x", "y", Choice::A),
            event(2, "y", "x", Choice::B),
            event(3, "x", "z", Choice::B),
        ];
        let lb = leaderboard(&evs, &cfg).unwrap();
        assert_eq!(lb.win_rate("x", "y"), Some(1.0));
        assert_eq!(lb.win_rate("y", "x"), Some(0.0));
        assert_eq!(lb.win_rate("z", "x"), Some(1.0));
        assert_eq!(lb.rows.iter().find(|r| r.model == "x").unwrap().games, 3);
        let swapped = [evs[1].clone(), evs[0].clone()];
        assert!(matches!(
            leaderboard(&swapped, &cfg),
            Err(Error::OutOfOrder { .. })
        ));
    }

    #[test]
    fn score_parsing() {
        assert_eq!(
            parse_score("because... 3 reasons.\nThe score ...: 70"),
            Some(70)
        );
        assert_eq!(parse_score("Score: 101"), None);
        assert_eq!(parse_score("no digits"), None);
    }

    fn task(seq: u64, choice: Choice) -> PairTask {
        PairTask {
            seq,
            listing: "3 bed".into(),
            text_a: format!("A{seq}"),
            text_b: format!("B{seq}"),
            choice,
            strength: 4,
            rationale: "liked it".into(),
        }
    }

    #[test]
    fn dual_order_prompting() {
        let llm = ScriptedClient::with_replies("m", ["Score: 70", "Score: 40"]);
        let p = simulate_choice(
            "profile",
            &[],
            &task(1, Choice::A),
            &llm,
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        assert_eq!(p.choice, Some(Choice::A));
        assert_eq!(llm.call_count(), 2);
        let calls = llm.calls();
        assert!(calls[0][0].content.contains("Description 0: A1\n"));
        assert!(calls[1][0].content.contains("Description 0: B1\n"));
        let tie = ScriptedClient::with_replies("m", ["55", "55"]);
        assert_eq!(
            simulate_choice(
                "p",
                &[],
                &task(1, Choice::A),
                &tie,
                &RetryPolicy::immediate(0)
            )
            .unwrap()
            .choice,
            None
        );
        let retry = ScriptedClient::with_replies("m", ["??", "20", "90"]);
        let p = simulate_choice(
            "p",
            &[],
            &task(1, Choice::A),
            &retry,
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        assert_eq!(
            (p.score_a_first, p.score_b_first, p.choice),
            (20, 90, Some(Choice::B))
        );
        assert!(simulate_choice(
            "p",
            &[task(1, Choice::A)],
            &task(1, Choice::A),
            &retry,
            &RetryPolicy::immediate(0)
        )
        .is_err());
    }

    #[test]
    fn history_becomes_chat_turns() {
        let llm = ScriptedClient::with_replies("m", ["60", "10"]);
        let run = simulate_buyer(
            "u",
            "p",
            &[task(1, Choice::B), task(2, Choice::A)],
            1,
            &llm,
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        assert_eq!(run.accuracy(), Some(1.0));
        let first = &llm.calls()[0];
        assert_eq!(first.len(), 3);
        assert!(first[1].content.ends_with(
            "liked it\nThe score for the first description (an integer within [0, 100]): 10"
        ));
    }

    #[test]
    fn metrics_by_hand() {
        let rec = |c: Option<Choice>| PredictionRecord {
            target_seq: 0,
            prediction: Prediction {
                choice: c,
                score_a_first: 0,
                score_b_first: 0,
            },
            actual: Choice::A,
        };
        let run = |b: &str, k: usize, preds: Vec<Option<Choice>>| SimulationRun {
            buyer_id: b.into(),
            shots: k,
            predictions: preds.into_iter().map(rec).collect(),
        };
        let runs = vec![
            run("u1", 0, vec![Some(Choice::A)]),
            run("u2", 0, vec![Some(Choice::A)]),
            run("u3", 0, vec![Some(Choice::B)]),
            run("u1", 1, vec![None]),
        ];
        let m = simulation_accuracy(&runs).unwrap();
        assert_eq!(m.ssa.len(), 1);
        assert_eq!(m.ssa[0].mean, 2.0 / 3.0);
        assert_eq!(m.ties, 1);
        assert_eq!(m.usa["u3"], 0.0);
        assert_eq!(m.usa_histogram[9].count, 2);
        let four_of_five = run(
            "u",
            0,
            vec![
                Some(Choice::A),
                Some(Choice::A),
                Some(Choice::A),
                Some(Choice::A),
                Some(Choice::B),
            ],
        );
        assert_eq!(simulation_accuracy(&[four_of_five]).unwrap().usa["u"], 0.8);
        assert!(simulation_accuracy(&[]).is_err());
        assert!(simulation_accuracy(&[run("u", 0, vec![None])]).is_err());
    }
}
