//! Screening quiz: short questions about one listing that a participant must
//! read correctly before taking part.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use realtor_core::listing::{render_number, Listing};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::view::ListingView;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizItem {
    pub id: String,
    pub prompt: String,
    pub options: Vec<String>,
    /// Index of the correct option; `None` for opinion questions.
    pub answer: Option<usize>,
    pub must_pass: bool,
}

/// What the participant sees: the listing and the questions, never the answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizPayload {
    pub listing: ListingView,
    pub items: Vec<QuizQuestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizQuestion {
    pub id: String,
    pub prompt: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quiz {
    pub listing_id: String,
    pub items: Vec<QuizItem>,
}

impl Quiz {
    pub fn questions(&self) -> Vec<QuizQuestion> {
        self.items
            .iter()
            .map(|q| QuizQuestion {
                id: q.id.clone(),
                prompt: q.prompt.clone(),
                options: q.options.clone(),
            })
            .collect()
    }

    /// Grades a complete answer sheet. `Ok((passed, reason))`; malformed
    /// sheets are rejected without grading.
    pub fn grade(
        &self,
        answers: &BTreeMap<String, usize>,
    ) -> Result<(bool, Option<String>), ApiError> {
        for id in answers.keys() {
            if !self.items.iter().any(|q| &q.id == id) {
                return Err(ApiError::invalid(
                    &format!("answers.{id}"),
                    format!("unknown question {id}"),
                ));
            }
        }
        let mut failed = Vec::new();
        for q in &self.items {
            let field = format!("answers.{}", q.id);
            let Some(&a) = answers.get(&q.id) else {
                return Err(ApiError::invalid(
                    &field,
                    format!("question {} is unanswered", q.id),
                ));
            };
            if a >= q.options.len() {
                return Err(ApiError::invalid(
                    &field,
                    format!("option {a} out of range"),
                ));
            }
            if q.must_pass && q.answer != Some(a) {
                failed.push(q.id.clone());
            }
        }
        if failed.is_empty() {
            Ok((true, None))
        } else {
            Ok((
                false,
                Some(format!(
                    "incorrect screening answers: {}",
                    failed.join(", ")
                )),
            ))
        }
    }
}

/// Shuffles `correct` in among `distractors`, returning options and the
/// index of the correct one.
fn shuffled(
    correct: String,
    distractors: Vec<String>,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, usize) {
    let mut options = vec![correct.clone()];
    for d in distractors {
        if !options.contains(&d) {
            options.push(d);
        }
    }
    options.shuffle(rng);
    let answer = options
        .iter()
        .position(|o| *o == correct)
        .expect("correct option present");
    (options, answer)
}

fn dollars(v: f64) -> String {
    let whole = v.round() as i64;
    let digits = whole.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    format!("${out}")
}

pub const OPINION_OPTIONS: [&str; 5] = [
    "Price",
    "Location",
    "Features & amenities",
    "Size",
    "Investment potential",
];

/// Builds the quiz from one randomly chosen listing of `pool`.
pub fn build_quiz(pool: &[Listing], rng: &mut ChaCha8Rng) -> Option<Quiz> {
    let listing = pool.choose(rng)?;
    let mut items = Vec::new();

    let beds = listing.bedrooms;
    let bed_distractors = [beds + 1.0, beds + 2.0, (beds - 1.0).max(0.0), beds + 3.0]
        .into_iter()
        .filter(|&b| b != beds)
        .take(3)
        .map(render_number)
        .collect();
    let (options, answer) = shuffled(render_number(beds), bed_distractors, rng);
    items.push(QuizItem {
        id: "bedrooms".into(),
        prompt: "How many bedrooms does this home have?".into(),
        options,
        answer: Some(answer),
        must_pass: true,
    });

    let price = listing.price;
    let (options, answer) = shuffled(
        dollars(price),
        [0.7, 1.3, 1.6].iter().map(|f| dollars(price * f)).collect(),
        rng,
    );
    items.push(QuizItem {
        id: "price".into(),
        prompt: "What is the asking price of this home?".into(),
        options,
        answer: Some(answer),
        must_pass: true,
    });

    // A home-search motive the participant has to apply to the listing.
    let fits = rng.random_bool(0.5);
    let (need, budget) = if fits {
        (beds.max(1.0) - 1.0, price * 1.2)
    } else {
        (beds + 1.0, price * 1.2)
    };
    items.push(QuizItem {
        id: "motive".into(),
        prompt: format!(
            "Suppose you need at least {} bedrooms and can spend at most {}. Does this home fit your search?",
            render_number(need),
            dollars(budget)
        ),
        options: vec!["Yes".into(), "No".into()],
        answer: Some(if fits { 0 } else { 1 }),
        must_pass: true,
    });

    items.push(QuizItem {
        id: "priority".into(),
        prompt: "Which aspect matters most to you when choosing a home?".into(),
        options: OPINION_OPTIONS.iter().map(|s| s.to_string()).collect(),
        answer: None,
        must_pass: false,
    });
    Some(Quiz {
        listing_id: listing.id.clone(),
        items,
    })
}

/// Correct answers for every graded question; opinion questions get option 0.
pub fn answer_key(quiz: &Quiz) -> BTreeMap<String, usize> {
    quiz.items
        .iter()
        .map(|q| (q.id.clone(), q.answer.unwrap_or(0)))
        .collect()
}
