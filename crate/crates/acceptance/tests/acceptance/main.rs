//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Every tolerance and time budget is a
//! named constant in the module that checks it.

use std::process::ExitCode;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

/// Returns `Err(message)` from the enclosing check when `cond` is false.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

/// Converts any displayable error into a check failure with context.
macro_rules! attempt {
    ($expr:expr, $what:expr) => {
        $expr.map_err(|e| format!("{}: {}", $what, e))?
    };
}

mod elo;
mod faithfulness;
mod grounding;
mod prompts;
mod retrieval;
mod selection;
mod service;
mod simulation;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        name: "elo-math",
        budget: Some(Duration::from_secs(1)),
        run: elo::check,
    },
    Criterion {
        name: "feature-selection",
        budget: Some(Duration::from_secs(10)),
        run: selection::check,
    },
    Criterion {
        name: "grounding-numerics",
        budget: Some(Duration::from_secs(60)),
        run: grounding::check,
    },
    Criterion {
        name: "faithfulness",
        budget: None,
        run: faithfulness::check,
    },
    Criterion {
        name: "prompt-fidelity",
        budget: None,
        run: prompts::check,
    },
    Criterion {
        name: "retrieval",
        budget: None,
        run: retrieval::check,
    },
    Criterion {
        name: "simulation-metrics",
        budget: None,
        run: simulation::check,
    },
    Criterion {
        name: "service",
        budget: Some(Duration::from_secs(30)),
        run: service::check,
    },
];

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run).unwrap_or_else(|p| Err(panic_message(p)));
        let took = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(detail), Some(budget)) if took > budget => Err(format!(
                "{detail}; took {} ms, budget {} ms",
                took.as_millis(),
                budget.as_millis()
            )),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {:<20} {detail} [{} ms]", c.name, took.as_millis()),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {:<20} {reason} [{} ms]", c.name, took.as_millis());
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
