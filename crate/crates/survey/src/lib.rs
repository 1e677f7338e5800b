//! Survey service for human evaluation: screening quiz, preference
//! elicitation, blinded A/B comparisons with attention and control items,
//! an append-only event log, and live Elo ratings.

pub mod error;
pub mod http;
pub mod log;
pub mod plan;
pub mod quiz;
pub mod service;
pub mod view;

pub use error::{ApiError, ErrorBody};
pub use service::{ServiceConfig, SurveyService};
