use realtor_core::factcheck::{faithfulness_report, Aggregate, FactCheckSpec};
use realtor_core::listing::Listing;
use realtor_core::llm::{RetryPolicy, ScriptedClient};
use serde_json::{json, Value};

use crate::Outcome;

fn listing() -> Listing {
    let mut l = Listing::new("l1", 3.0, 2.5, 450000.0);
    l.living_area_value = Some(1828.0);
    l.area_units = Some("sqft".into());
    l.street_address = Some("1255 S State St".into());
    l.city = Some("Chicago".into());
    l.state = Some("IL".into());
    l.home_insights = vec!["Large island".into(), "Lake views".into()];
    l
}

fn hard(
    price: Option<Value>,
    area: Option<Value>,
    beds: Option<Value>,
    baths: Option<Value>,
) -> String {
    let mut o = serde_json::Map::new();
    for (name, v) in [
        ("price", price),
        ("living_area", area),
        ("bedrooms", beds),
        ("bathrooms", baths),
    ] {
        o.insert(format!("{name}_mentioned"), json!(v.is_some()));
        o.insert(name.into(), v.unwrap_or(json!(0)));
    }
    Value::Object(o).to_string()
}

fn soft(insights: Option<Value>, address: Option<Value>) -> String {
    json!({
        "home_insights_mentioned": insights.is_some(), "home_insights": insights.unwrap_or(json!([])),
        "address_mentioned": address.is_some(), "address": address.unwrap_or(json!("")),
    })
    .to_string()
}

struct Case {
    name: &'static str,
    replies: Vec<String>,
    hard: Aggregate,
    soft: Aggregate,
}

pub fn check() -> Outcome {
    let score = |s: u8| json!({ "score": s }).to_string();
    let cases = [
        Case {
            name: "approximate area counts as wrong",
            replies: vec![
                hard(
                    Some(json!(450000.0)),
                    Some(json!("nearly 2,000 sqft")),
                    None,
                    None,
                ),
                soft(None, None),
            ],
            hard: Aggregate::Score(0.5),
            soft: Aggregate::NotApplicable,
        },
        Case {
            name: "nothing mentioned",
            replies: vec![hard(None, None, None, None), soft(None, None)],
            hard: Aggregate::NotApplicable,
            soft: Aggregate::NotApplicable,
        },
        Case {
            name: "room counts and both soft attributes",
            replies: vec![
                hard(None, None, Some(json!(3)), Some(json!(2))),
                soft(
                    Some(json!(["Large island"])),
                    Some(json!("1255 S State St Chicago IL")),
                ),
                score(7),
                score(10),
            ],
            hard: Aggregate::Score(0.5),
            soft: Aggregate::Score(0.85),
        },
        Case {
            name: "all hard facts exact",
            replies: vec![
                hard(
                    Some(json!(450000)),
                    Some(json!("1,828 sq ft")),
                    Some(json!(3)),
                    Some(json!(2.5)),
                ),
                soft(None, Some(json!("State St"))),
                score(4),
            ],
            hard: Aggregate::Score(1.0),
            soft: Aggregate::Score(0.4),
        },
        Case {
            name: "price off by one dollar",
            replies: vec![
                hard(Some(json!(450001)), None, None, None),
                soft(None, None),
            ],
            hard: Aggregate::Score(0.0),
            soft: Aggregate::NotApplicable,
        },
    ];
    let l = listing();
    for case in &cases {
        let expected_calls = case.replies.len();
        let llm = ScriptedClient::with_replies("scripted", case.replies.clone());
        let r = attempt!(
            faithfulness_report(
                "A description.",
                &l,
                &FactCheckSpec::default(),
                &llm,
                &RetryPolicy::immediate(0)
            ),
            case.name
        );
        ensure!(
            r.faithful_hard == case.hard,
            "{}: hard {} want {}",
            case.name,
            r.faithful_hard,
            case.hard
        );
        ensure!(
            r.faithful_soft == case.soft,
            "{}: soft {} want {}",
            case.name,
            r.faithful_soft,
            case.soft
        );
        ensure!(
            llm.call_count() == expected_calls,
            "{}: {} model calls, want {expected_calls}",
            case.name,
            llm.call_count()
        );
    }
    let area = realtor_core::factcheck::eval_hard(
        realtor_core::factcheck::HardAttribute::LivingArea,
        &json!("nearly 2,000 sqft"),
        1828.0,
    );
    ensure!(
        area == Some(0),
        "\"nearly 2,000 sqft\" against 1828 scored {area:?}"
    );
    Ok(format!(
        "{} scripted reports reproduced exactly",
        cases.len()
    ))
}
