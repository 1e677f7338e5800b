//! Attribute-level faithfulness checks of generated descriptions.
//!
//! A model extracts which attributes a description mentions and what it
//! claims about them. Hard attributes are compared exactly against the
//! listing; soft attributes are judged by a model on a 0–10 scale. Scores
//! are averaged over mentioned attributes only.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::listing::Listing;
use crate::llm::{DecodeParams, LanguageModelClient, LlmError, Message, OutputSchema, RetryPolicy};
use crate::prompts::{render, Bindings, PromptId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardAttribute {
    Price,
    LivingArea,
    Bedrooms,
    Bathrooms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftAttribute {
    HomeInsights,
    Address,
}

impl HardAttribute {
    pub const ALL: [HardAttribute; 4] = [
        HardAttribute::Price,
        HardAttribute::LivingArea,
        HardAttribute::Bedrooms,
        HardAttribute::Bathrooms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HardAttribute::Price => "price",
            HardAttribute::LivingArea => "living_area",
            HardAttribute::Bedrooms => "bedrooms",
            HardAttribute::Bathrooms => "bathrooms",
        }
    }
}

impl SoftAttribute {
    pub const ALL: [SoftAttribute; 2] = [SoftAttribute::HomeInsights, SoftAttribute::Address];

    pub fn name(self) -> &'static str {
        match self {
            SoftAttribute::HomeInsights => "home_insights",
            SoftAttribute::Address => "address",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactCheckSpec {
    pub hard: Vec<HardAttribute>,
    pub soft: Vec<SoftAttribute>,
}

impl Default for FactCheckSpec {
    fn default() -> Self {
        Self {
            hard: HardAttribute::ALL.to_vec(),
            soft: SoftAttribute::ALL.to_vec(),
        }
    }
}

/// Example values shown in the soft-extraction instruction.
pub const EXAMPLE_HOME_INSIGHTS: [&str; 12] = [
    "Large island",
    "Oversized bathroom",
    "Open floor plan",
    "Lake views",
    "Orange l lines",
    "Newer stainless steel appliances",
    "Gorgeous hardwood floors",
    "Tons of cabinet space",
    "In-unit washer and dryer",
    "Skyline view",
    "Private balcony",
    "Beautiful city",
];
pub const EXAMPLE_ADDRESS: &str = "1255 S State St UNIT 703 Chicago IL 60601";

/// `json.dumps` with default separators and ASCII escaping.
pub fn py_json_dumps(value: &Value) -> String {
    fn string(s: &str, out: &mut String) {
        out.push('"');
        for c in s.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 || !c.is_ascii() => {
                    let mut buf = [0u16; 2];
                    for unit in c.encode_utf16(&mut buf) {
                        out.push_str(&format!("\\u{unit:04x}"));
                    }
                }
                c => out.push(c),
            }
        }
        out.push('"');
    }
    fn walk(v: &Value, out: &mut String) {
        match v {
            Value::String(s) => string(s, out),
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    walk(item, out);
                }
                out.push(']');
            }
            Value::Object(map) => {
                out.push('{');
                for (i, (k, item)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    string(k, out);
                    out.push_str(": ");
                    walk(item, out);
                }
                out.push('}');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    walk(value, &mut out);
    out
}

/// Python `str()` of a list of strings.
fn py_list_repr(items: &[&str]) -> String {
    let inner: Vec<String> = items
        .iter()
        .map(|s| format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", inner.join(", "))
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Parses `1,828`, `$450,000`, `1.2M`, `450k`, `2.5` or a number word.
pub fn parse_quantity(token: &str) -> Option<f64> {
    let t = token
        .trim()
        .trim_start_matches('$')
        .trim_end_matches(['.', ',', ';', ':', ')'])
        .to_lowercase();
    if let Some(i) = NUMBER_WORDS.iter().position(|w| *w == t) {
        return Some(i as f64);
    }
    let (body, mult) = match t.chars().last()? {
        'k' => (&t[..t.len() - 1], 1e3),
        'm' => (&t[..t.len() - 1], 1e6),
        _ => (t.as_str(), 1.0),
    };
    let body = body.replace(',', "");
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    body.parse::<f64>().ok().map(|v| v * mult)
}

/// Square feet per unit, keyed by lowercase unit spelling.
fn unit_factor(unit: &str) -> Option<f64> {
    let u = unit
        .trim()
        .trim_end_matches('.')
        .to_lowercase()
        .replace(['_', '-'], " ");
    match u.as_str() {
        "sqft" | "sq ft" | "sq. ft" | "square feet" | "square foot" | "sf" | "ft2" | "ft²"
        | "feet" => Some(1.0),
        "sqm" | "sq m" | "m2" | "m²" | "square meters" | "square metres" => {
            Some(10.763_910_416_709_722)
        }
        "acre" | "acres" => Some(43_560.0),
        _ => None,
    }
}

/// `"990.0 sqft"` → 990.0. Leading qualifiers ("nearly", "about") are
/// skipped; unknown units are rejected; a bare number is square feet.
pub fn parse_area_sqft(text: &str) -> Option<f64> {
    let t = text.trim();
    let t = &t[t.find(|c: char| c.is_ascii_digit())?..];
    let split = t
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == ','))
        .unwrap_or(t.len());
    let value = parse_quantity(&t[..split])?;
    let unit = t[split..].trim();
    let factor = if unit.is_empty() {
        1.0
    } else {
        unit_factor(unit)?
    };
    Some(value * factor)
}

fn listing_area_sqft(listing: &Listing) -> Option<f64> {
    let v = listing.living_area_value?;
    let factor = match listing.area_units.as_deref() {
        None => 1.0,
        Some(u) => unit_factor(u)?,
    };
    Some(v * factor)
}

/// Rule-based scan of hard-attribute mentions, shaped like the hard extraction
/// reply. Backs the offline mock.
pub fn scan_hard_mentions(description: &str) -> Value {
    let tokens: Vec<&str> = description.split_whitespace().collect();
    let lower: Vec<String> = tokens
        .iter()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .collect();
    let mut price = None;
    let mut area = None;
    let mut beds = None;
    let mut baths = None;
    for (i, tok) in tokens.iter().enumerate() {
        if price.is_none() && tok.starts_with('$') {
            price = parse_quantity(tok);
        }
        let Some(n) = parse_quantity(tok) else {
            continue;
        };
        let next = lower.get(i + 1).map(String::as_str).unwrap_or("");
        let after = lower.get(i + 2).map(String::as_str).unwrap_or("");
        if beds.is_none() && (next.starts_with("bed") || next == "br") {
            beds = Some(n);
        } else if baths.is_none() && (next.starts_with("bath") || next == "ba") {
            baths = Some(n);
        } else if area.is_none()
            && (next == "sqft"
                || next == "sf"
                || (next == "sq" && after == "ft")
                || (next == "square" && after.starts_with("f")))
        {
            area = Some(n);
        }
    }
    json!({
        "price_mentioned": price.is_some(),
        "price": price.unwrap_or(0.0),
        "living_area_mentioned": area.is_some(),
        "living_area": area.map(|a| format!("{a:.1} sqft")).unwrap_or_default(),
        "bedrooms_mentioned": beds.is_some(),
        "bedrooms": beds.unwrap_or(0.0),
        "bathrooms_mentioned": baths.is_some(),
        "bathrooms": baths.unwrap_or(0.0),
        "address_mentioned": false,
        "address": "",
    })
}

/// Outcome of extracting one attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum Extracted {
    NotMentioned,
    Mentioned(Value),
    /// The reply violated the output schema twice.
    Unextractable(String),
}

fn hard_output_schema() -> OutputSchema {
    let mut props = serde_json::Map::new();
    for (name, ty) in [
        ("price", "number"),
        ("living_area", "string"),
        ("bedrooms", "number"),
        ("bathrooms", "number"),
        ("address", "string"),
    ] {
        props.insert(format!("{name}_mentioned"), json!({"type": "boolean"}));
        props.insert(name.into(), json!({"type": ty}));
    }
    OutputSchema {
        name: "MainInfo".into(),
        schema: json!({"type": "object", "properties": props}),
    }
}

fn soft_output_schema() -> OutputSchema {
    OutputSchema {
        name: "MainInfo".into(),
        schema: json!({"type": "object", "properties": {
            "home_insights_mentioned": {"type": "boolean"},
            "home_insights": {"type": "array", "items": {"type": "string"}},
            "address_mentioned": {"type": "boolean"},
            "address": {"type": "string"},
        }}),
    }
}

fn value_matches(name: &str, v: &Value) -> bool {
    match name {
        "price" | "bedrooms" | "bathrooms" => v.as_f64().is_some_and(f64::is_finite),
        "living_area" | "address" => v.is_string(),
        "home_insights" => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
        _ => false,
    }
}

fn read_attribute(reply: &Value, name: &str) -> std::result::Result<Extracted, String> {
    match reply.get(format!("{name}_mentioned")) {
        Some(Value::Bool(false)) => Ok(Extracted::NotMentioned),
        Some(Value::Bool(true)) => match reply.get(name) {
            Some(v) if value_matches(name, v) => Ok(Extracted::Mentioned(v.clone())),
            Some(v) => Err(format!("`{name}` has unexpected value {v}")),
            None => Err(format!("`{name}` missing")),
        },
        _ => Err(format!("`{name}_mentioned` missing or not a boolean")),
    }
}

/// One extraction call; attributes whose fields violate the schema are
/// re-asked once and then marked unextractable.
fn extract(
    system: String,
    description: &str,
    names: &[&str],
    schema: &OutputSchema,
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<BTreeMap<String, Extracted>> {
    let messages = [Message::system(system), Message::user(description)];
    let params = DecodeParams::default();
    let mut out = BTreeMap::new();
    let mut pending: Vec<&str> = names.to_vec();
    for attempt in 0..2 {
        let reply = match retry.run(|| llm.structured(&messages, schema, &params)) {
            Ok(v) => v,
            Err(LlmError::Unparseable { reason, .. }) => {
                if attempt == 1 {
                    for n in &pending {
                        out.insert(n.to_string(), Extracted::Unextractable(reason.clone()));
                    }
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut still = Vec::new();
        for n in pending {
            match read_attribute(&reply, n) {
                Ok(x) => {
                    out.insert(n.to_string(), x);
                }
                Err(reason) if attempt == 1 => {
                    out.insert(n.to_string(), Extracted::Unextractable(reason));
                }
                Err(_) => still.push(n),
            }
        }
        pending = still;
        if pending.is_empty() {
            break;
        }
    }
    Ok(out)
}

pub fn extract_hard(
    description: &str,
    attributes: &[HardAttribute],
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<BTreeMap<HardAttribute, Extracted>> {
    if attributes.is_empty() {
        return Ok(BTreeMap::new());
    }
    let system = render(PromptId::FactcheckHardSystem, &Bindings::new())?;
    let names: Vec<&str> = attributes.iter().map(|a| a.name()).collect();
    let mut raw = extract(
        system,
        description,
        &names,
        &hard_output_schema(),
        llm,
        retry,
    )?;
    Ok(attributes
        .iter()
        .map(|a| (*a, raw.remove(a.name()).expect("every name extracted")))
        .collect())
}

pub fn extract_soft(
    description: &str,
    attributes: &[SoftAttribute],
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<BTreeMap<SoftAttribute, Extracted>> {
    if attributes.is_empty() {
        return Ok(BTreeMap::new());
    }
    let system = render(
        PromptId::FactcheckSoftSystem,
        &Bindings::new()
            .set(
                "example_home_insights",
                py_list_repr(&EXAMPLE_HOME_INSIGHTS),
            )
            .set("example_addr", EXAMPLE_ADDRESS),
    )?;
    let names: Vec<&str> = attributes.iter().map(|a| a.name()).collect();
    let mut raw = extract(
        system,
        description,
        &names,
        &soft_output_schema(),
        llm,
        retry,
    )?;
    Ok(attributes
        .iter()
        .map(|a| (*a, raw.remove(a.name()).expect("every name extracted")))
        .collect())
}

/// True value of a hard attribute in the units it is compared in.
pub fn hard_truth(listing: &Listing, attribute: HardAttribute) -> Option<f64> {
    match attribute {
        HardAttribute::Price => Some(listing.price),
        HardAttribute::LivingArea => listing_area_sqft(listing),
        HardAttribute::Bedrooms => Some(listing.bedrooms),
        HardAttribute::Bathrooms => Some(listing.bathrooms),
    }
}

/// Exact comparison: price to the dollar, living area to the square foot after
/// unit normalization, room counts as exact decimals. Returns `None` when the
/// extracted value cannot be read as the attribute's type.
pub fn eval_hard(attribute: HardAttribute, extracted: &Value, truth: f64) -> Option<u8> {
    let claimed = match attribute {
        HardAttribute::LivingArea => match extracted {
            Value::String(s) => parse_area_sqft(s)?,
            other => other.as_f64()?,
        },
        _ => extracted.as_f64()?,
    };
    let equal = match attribute {
        HardAttribute::Price | HardAttribute::LivingArea => claimed.round() == truth.round(),
        HardAttribute::Bedrooms | HardAttribute::Bathrooms => claimed == truth,
    };
    Some(u8::from(equal))
}

pub fn soft_truth(listing: &Listing, attribute: SoftAttribute) -> Value {
    match attribute {
        SoftAttribute::HomeInsights => json!(listing.home_insights),
        SoftAttribute::Address => json!(listing.full_address()),
    }
}

/// Model-judged match score in 0..=10; an out-of-range or non-integer score
/// is re-asked once.
pub fn eval_soft(
    description: &str,
    attribute: SoftAttribute,
    truth: &Value,
    extracted: &Value,
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<u8> {
    let prompt = render(
        PromptId::FactcheckSoftMatch,
        &Bindings::new()
            .set("description", description)
            .set("attribute_name", attribute.name())
            .set("json.dumps(true_value)", py_json_dumps(truth))
            .set("json.dumps(extracted_value)", py_json_dumps(extracted)),
    )?;
    let messages = [Message::user(prompt)];
    let schema = OutputSchema {
        name: "score".into(),
        schema: json!({"type": "object", "properties": {"score": {"type": "integer"}}}),
    };
    let params = DecodeParams::default();
    let mut last = String::new();
    for _ in 0..2 {
        match retry.run(|| llm.structured(&messages, &schema, &params)) {
            Ok(v) => match v.get("score").and_then(Value::as_u64) {
                Some(s) if s <= 10 => return Ok(s as u8),
                _ => last = v.to_string(),
            },
            Err(LlmError::Unparseable { raw, .. }) => last = raw,
            Err(e) => return Err(e.into()),
        }
    }
    Err(LlmError::Unparseable {
        raw: last,
        reason: "score must be an integer in 0..=10".into(),
    }
    .into())
}

/// Mean over mentioned attributes, or not applicable when none were mentioned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregate {
    Score(f64),
    NotApplicable,
}

impl Aggregate {
    pub fn from_scores(scores: &[f64]) -> Self {
        if scores.is_empty() {
            Aggregate::NotApplicable
        } else {
            Aggregate::Score(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Aggregate::Score(v) => Some(v),
            Aggregate::NotApplicable => None,
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregate::Score(v) => write!(f, "{v:.4}"),
            Aggregate::NotApplicable => f.write_str("NOT_APPLICABLE"),
        }
    }
}

impl Serialize for Aggregate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Aggregate::Score(v) => s.serialize_f64(*v),
            Aggregate::NotApplicable => s.serialize_str("NOT_APPLICABLE"),
        }
    }
}

impl<'de> Deserialize<'de> for Aggregate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "NOT_APPLICABLE" => Ok(Aggregate::NotApplicable),
            v => v
                .as_f64()
                .map(Aggregate::Score)
                .ok_or_else(|| serde::de::Error::custom(format!("bad aggregate {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCheck {
    pub attribute: String,
    pub kind: AttributeKind,
    /// Member of the support set (mentioned and scored).
    pub mentioned: bool,
    #[serde(default)]
    pub extracted: Option<Value>,
    /// 0/1 for hard attributes, 0..=10 for soft ones.
    #[serde(default)]
    pub score: Option<u8>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub listing_id: String,
    #[serde(default)]
    pub record_id: Option<String>,
    #[serde(default)]
    pub variant: Option<String>,
    pub checks: Vec<AttributeCheck>,
    pub faithful_hard: Aggregate,
    pub faithful_soft: Aggregate,
}

impl FaithfulnessReport {
    /// Aggregates from per-attribute checks: hard mean, and soft mean divided by 10.
    pub fn from_checks(listing_id: impl Into<String>, checks: Vec<AttributeCheck>) -> Self {
        let scores = |kind: AttributeKind, scale: f64| -> Vec<f64> {
            checks
                .iter()
                .filter(|c| c.kind == kind && c.mentioned)
                .filter_map(|c| c.score)
                .map(|s| f64::from(s) / scale)
                .collect()
        };
        let faithful_hard = Aggregate::from_scores(&scores(AttributeKind::Hard, 1.0));
        let faithful_soft = Aggregate::from_scores(&scores(AttributeKind::Soft, 10.0));
        Self {
            listing_id: listing_id.into(),
            record_id: None,
            variant: None,
            checks,
            faithful_hard,
            faithful_soft,
        }
    }
}

fn unscored(
    attribute: &str,
    kind: AttributeKind,
    extracted: Option<Value>,
    note: impl Into<String>,
) -> AttributeCheck {
    AttributeCheck {
        attribute: attribute.into(),
        kind,
        mentioned: false,
        extracted,
        score: None,
        note: Some(note.into()),
    }
}

pub fn faithfulness_report(
    description: &str,
    listing: &Listing,
    spec: &FactCheckSpec,
    llm: &dyn LanguageModelClient,
    retry: &RetryPolicy,
) -> Result<FaithfulnessReport> {
    if description.trim().is_empty() {
        return Err(Error::Precondition("description is empty".into()));
    }
    let mut checks = Vec::new();
    for (attr, extracted) in extract_hard(description, &spec.hard, llm, retry)? {
        let name = attr.name();
        checks.push(match extracted {
            Extracted::NotMentioned => unscored(name, AttributeKind::Hard, None, "not mentioned"),
            Extracted::Unextractable(why) => unscored(
                name,
                AttributeKind::Hard,
                None,
                format!("unextractable: {why}"),
            ),
            Extracted::Mentioned(value) => match hard_truth(listing, attr) {
                None => unscored(
                    name,
                    AttributeKind::Hard,
                    Some(value),
                    "listing has no true value",
                ),
                Some(truth) => match eval_hard(attr, &value, truth) {
                    None => unscored(
                        name,
                        AttributeKind::Hard,
                        Some(value),
                        "unextractable: value not readable",
                    ),
                    Some(score) => AttributeCheck {
                        attribute: name.into(),
                        kind: AttributeKind::Hard,
                        mentioned: true,
                        extracted: Some(value),
                        score: Some(score),
                        note: None,
                    },
                },
            },
        });
    }
    for (attr, extracted) in extract_soft(description, &spec.soft, llm, retry)? {
        let name = attr.name();
        checks.push(match extracted {
            Extracted::NotMentioned => unscored(name, AttributeKind::Soft, None, "not mentioned"),
            Extracted::Unextractable(why) => unscored(
                name,
                AttributeKind::Soft,
                None,
                format!("unextractable: {why}"),
            ),
            Extracted::Mentioned(value) => {
                let truth = soft_truth(listing, attr);
                match eval_soft(description, attr, &truth, &value, llm, retry) {
                    Ok(score) => AttributeCheck {
                        attribute: name.into(),
                        kind: AttributeKind::Soft,
                        mentioned: true,
                        extracted: Some(value),
                        score: Some(score),
                        note: None,
                    },
                    Err(Error::Llm(LlmError::Unparseable { raw, .. })) => unscored(
                        name,
                        AttributeKind::Soft,
                        Some(value),
                        format!("unscorable match reply: {raw}"),
                    ),
                    Err(e) => return Err(e),
                }
            }
        });
    }
    Ok(FaithfulnessReport::from_checks(&listing.id, checks))
}

/// Per-variant corpus means of defined scores, with not-applicable counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub descriptions: usize,
    pub hard_mean: Option<f64>,
    pub hard_defined: usize,
    pub hard_not_applicable: usize,
    pub soft_mean: Option<f64>,
    pub soft_defined: usize,
    pub soft_not_applicable: usize,
}

pub fn summarize(reports: &[FaithfulnessReport]) -> Vec<VariantSummary> {
    let mut by_variant: BTreeMap<String, Vec<&FaithfulnessReport>> = BTreeMap::new();
    for r in reports {
        by_variant
            .entry(r.variant.clone().unwrap_or_else(|| "unknown".into()))
            .or_default()
            .push(r);
    }
    by_variant
        .into_iter()
        .map(|(variant, rs)| {
            let hard: Vec<f64> = rs.iter().filter_map(|r| r.faithful_hard.value()).collect();
            let soft: Vec<f64> = rs.iter().filter_map(|r| r.faithful_soft.value()).collect();
            VariantSummary {
                variant,
                descriptions: rs.len(),
                hard_mean: Aggregate::from_scores(&hard).value(),
                hard_defined: hard.len(),
                hard_not_applicable: rs.len() - hard.len(),
                soft_mean: Aggregate::from_scores(&soft).value(),
                soft_defined: soft.len(),
                soft_not_applicable: rs.len() - soft.len(),
            }
        })
        .collect()
}
