//! Listing records: line-delimited ingest, validation, attribute statements
//! for embedding, and the engagement-ratio quality filter.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};

/// One property record. Field names follow the dataset's snake_case columns;
/// columns not modelled here survive a round trip through `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Listing {
    pub id: String,
    pub bedrooms: f64,
    pub bathrooms: f64,
    pub price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub living_area_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lot_area_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_units: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zipcode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub street_address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_type: Option<String>,
    #[serde(default)]
    pub page_view_count: f64,
    #[serde(default)]
    pub favorite_count: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub home_insights: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_built: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub county: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_school_rating: Option<f64>,
    /// Ingested verbatim; carries no semantics downstream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(rename = "jpeg_urls", default, skip_serializing_if = "Vec::is_empty")]
    pub photo_urls: Vec<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Listing {
    /// Minimal valid listing, mostly for fixtures.
    pub fn new(id: impl Into<String>, bedrooms: f64, bathrooms: f64, price: f64) -> Self {
        Self {
            id: id.into(),
            bedrooms,
            bathrooms,
            price,
            description: None,
            living_area_value: None,
            lot_area_value: None,
            area_units: None,
            zipcode: None,
            street_address: None,
            home_type: None,
            page_view_count: 0.0,
            favorite_count: 0.0,
            home_insights: Vec::new(),
            neighborhood_region: None,
            city: None,
            state: None,
            year_built: None,
            county: None,
            avg_school_rating: None,
            score: None,
            photo_urls: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        let check = |name: &str, v: f64| -> std::result::Result<(), String> {
            if !v.is_finite() {
                Err(format!("{name} is not finite"))
            } else if v < 0.0 {
                Err(format!("{name} must be >= 0, got {v}"))
            } else {
                Ok(())
            }
        };
        check("bedrooms", self.bedrooms)?;
        check("bathrooms", self.bathrooms)?;
        check("page_view_count", self.page_view_count)?;
        check("favorite_count", self.favorite_count)?;
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(format!("price must be > 0, got {}", self.price));
        }
        for (name, v) in [
            ("living_area_value", self.living_area_value),
            ("lot_area_value", self.lot_area_value),
        ] {
            if let Some(v) = v {
                check(name, v)?;
            }
        }
        Ok(())
    }

    /// Engagement ratio `favorite_count / page_view_count`; `None` without views.
    pub fn engagement_ratio(&self) -> Option<f64> {
        (self.page_view_count > 0.0).then(|| self.favorite_count / self.page_view_count)
    }

    /// Rendered value of a named attribute, `None` when missing or empty.
    pub fn attribute_value(&self, name: &str) -> Option<Result<String, UnknownAttribute>> {
        let text = |v: &Option<String>| {
            v.as_ref()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
        };
        let value = match name {
            "id" => Some(self.id.clone()),
            "bedrooms" => Some(render_number(self.bedrooms)),
            "bathrooms" => Some(render_number(self.bathrooms)),
            "price" => Some(render_number(self.price)),
            "description" => text(&self.description),
            "living_area_value" => self.living_area_value.map(render_number),
            "lot_area_value" => self.lot_area_value.map(render_number),
            "area_units" => text(&self.area_units),
            "zipcode" => text(&self.zipcode),
            "street_address" => text(&self.street_address),
            "home_type" => text(&self.home_type),
            "page_view_count" => Some(render_number(self.page_view_count)),
            "favorite_count" => Some(render_number(self.favorite_count)),
            "home_insights" => {
                let items: Vec<&str> = self
                    .home_insights
                    .iter()
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .collect();
                (!items.is_empty()).then(|| items.join(", "))
            }
            "neighborhood_region" => text(&self.neighborhood_region),
            "city" => text(&self.city),
            "state" => text(&self.state),
            "year_built" => self.year_built.map(render_number),
            "county" => text(&self.county),
            "avg_school_rating" => self.avg_school_rating.map(render_number),
            other => match self.extra.get(other) {
                None => return Some(Err(UnknownAttribute(other.to_string()))),
                Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) => {
                    Some(s.trim().to_string()).filter(|s| !s.is_empty())
                }
                Some(serde_json::Value::Number(n)) => n.as_f64().map(render_number),
                Some(v) => Some(v.to_string()),
            },
        };
        value.map(Ok)
    }

    /// Full address used by fact-checking: street, city, state, zipcode.
    pub fn full_address(&self) -> String {
        [&self.street_address, &self.city, &self.state, &self.zipcode]
            .iter()
            .filter_map(|p| p.as_deref())
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownAttribute(pub String);

/// Attributes rendered into statements for the embedding model by default.
/// Identifiers, free text, photos and engagement counters are left out.
pub const EMBEDDING_ATTRIBUTES: &[&str] = &[
    "bedrooms",
    "bathrooms",
    "price",
    "living_area_value",
    "lot_area_value",
    "area_units",
    "zipcode",
    "street_address",
    "home_type",
    "home_insights",
    "neighborhood_region",
    "city",
    "state",
    "year_built",
    "county",
    "avg_school_rating",
];

/// Integers print without a decimal point; everything else uses the shortest
/// representation that round-trips.
pub fn render_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeStatement {
    pub attribute_name: String,
    pub attribute_value: String,
    pub statement: String,
}

impl AttributeStatement {
    pub fn new(name: &str, value: &str) -> Self {
        Self {
            attribute_name: name.to_string(),
            attribute_value: value.to_string(),
            statement: format!("The attribute {name} is {value}."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Missing,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedAttribute {
    pub attribute_name: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statements {
    pub statements: Vec<AttributeStatement>,
    pub skipped: Vec<SkippedAttribute>,
}

/// One statement per requested attribute that is present; the rest are
/// reported as skipped rather than failing the listing.
pub fn attribute_statements<S: AsRef<str>>(listing: &Listing, included: &[S]) -> Statements {
    let mut out = Statements::default();
    for name in included {
        let name = name.as_ref();
        match listing.attribute_value(name) {
            Some(Ok(value)) => out.statements.push(AttributeStatement::new(name, &value)),
            Some(Err(_)) => out.skipped.push(SkippedAttribute {
                attribute_name: name.to_string(),
                reason: SkipReason::Unknown,
            }),
            None => out.skipped.push(SkippedAttribute {
                attribute_name: name.to_string(),
                reason: SkipReason::Missing,
            }),
        }
    }
    out
}

pub const DEFAULT_MIN_RATIO: f64 = 0.05;

/// Keeps listings whose favorites-to-views ratio reaches `min_ratio`, in input
/// order. Listings without views are dropped.
pub fn quality_filter(listings: &[Listing], min_ratio: f64) -> Result<Vec<&Listing>> {
    if !(0.0..=1.0).contains(&min_ratio) {
        return Err(Error::Precondition(format!(
            "min_ratio {min_ratio} outside [0, 1]"
        )));
    }
    Ok(listings
        .iter()
        .filter(|l| l.engagement_ratio().is_some_and(|r| r >= min_ratio))
        .collect())
}

/// Reads one JSON listing per line, keeping valid records and reporting every
/// bad one with its line number. Blank lines are ignored.
pub fn read_listings(reader: impl BufRead) -> Result<(Vec<Listing>, Vec<RecordError>)> {
    let mut listings = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(RecordError {
                    line: line_no,
                    id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let id = raw.get("id").and_then(|v| v.as_str()).map(String::from);
        let listing: Listing = match serde_json::from_value(raw) {
            Ok(l) => l,
            Err(e) => {
                errors.push(RecordError {
                    line: line_no,
                    id,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Err(message) = listing.validate() {
            errors.push(RecordError {
                line: line_no,
                id: Some(listing.id),
                message,
            });
            continue;
        }
        if !seen.insert(listing.id.clone()) {
            errors.push(RecordError {
                line: line_no,
                id: Some(listing.id.clone()),
                message: format!("duplicate id `{}`", listing.id),
            });
            continue;
        }
        listings.push(listing);
    }
    Ok((listings, errors))
}

/// Strict load: any bad record fails the whole file.
pub fn load_listings(reader: impl BufRead) -> Result<Vec<Listing>> {
    let (listings, errors) = read_listings(reader)?;
    if errors.is_empty() {
        Ok(listings)
    } else {
        Err(Error::Records(errors))
    }
}

pub fn load_listings_path(path: impl AsRef<Path>) -> Result<Vec<Listing>> {
    load_listings(BufReader::new(File::open(path)?))
}

pub fn write_listings<'a>(
    mut writer: impl Write,
    listings: impl IntoIterator<Item = &'a Listing>,
) -> Result<()> {
    for l in listings {
        serde_json::to_writer(&mut writer, l)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn listing_line(id: &str, beds: f64) -> String {
        format!(r#"{{"id":"{id}","bedrooms":{beds},"bathrooms":2,"price":350000}}"#)
    }

    #[test]
    fn loads_fixture_and_preserves_ids() {
        let text = [
            listing_line("a", 3.0),
            listing_line("b", 2.0),
            listing_line("c", 1.0),
        ]
        .join("\n");
        let ls = load_listings(text.as_bytes()).unwrap();
        assert_eq!(
            ls.iter().map(|l| l.id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
    }

    #[test]
    fn negative_bedrooms_names_the_record() {
        let text = [listing_line("ok", 2.0), listing_line("bad", -1.0)].join("\n");
        match load_listings(text.as_bytes()) {
            Err(Error::Records(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].line, 2);
                assert_eq!(errs[0].id.as_deref(), Some("bad"));
                assert!(errs[0].message.contains("bedrooms"));
            }
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn missing_required_field_and_duplicates_are_reported() {
        let text = [
            r#"{"id":"x","bedrooms":1,"bathrooms":1}"#.to_string(),
            listing_line("y", 1.0),
            listing_line("y", 2.0),
        ]
        .join("\n");
        let Err(Error::Records(errs)) = load_listings(text.as_bytes()) else {
            panic!()
        };
        assert_eq!(errs.len(), 2);
        assert!(errs[0].message.contains("price"));
        assert!(errs[1].message.contains("duplicate"));
    }

    #[test]
    fn statement_template() {
        let l = Listing::new("a", 3.0, 2.5, 410000.0);
        let s = attribute_statements(&l, &["bedrooms", "bathrooms"]);
        assert_eq!(s.statements[0].statement, "The attribute bedrooms is 3.");
        assert_eq!(s.statements[1].statement, "The attribute bathrooms is 2.5.");
        assert!(attribute_statements(&l, &[] as &[&str])
            .statements
            .is_empty());
    }

    #[test]
    fn missing_attributes_are_skipped_not_fatal() {
        let mut l = Listing::new("a", 3.0, 2.0, 500000.0);
        l.city = Some("Chicago".into());
        l.zipcode = Some("60601".into());
        let requested = [
            "bedrooms",
            "bathrooms",
            "price",
            "city",
            "zipcode",
            "county",
            "year_built",
        ];
        let s = attribute_statements(&l, &requested);
        assert_eq!(s.statements.len(), 5);
        assert_eq!(s.skipped.len(), 2);
        assert!(s.skipped.iter().all(|k| k.reason == SkipReason::Missing));
        let s = attribute_statements(&l, &["no_such_column"]);
        assert_eq!(s.skipped[0].reason, SkipReason::Unknown);
    }

    #[test]
    fn quality_filter_rules() {
        let mut keep = Listing::new("k", 1.0, 1.0, 1.0);
        keep.favorite_count = 10.0;
        keep.page_view_count = 100.0;
        let mut no_views = Listing::new("z", 1.0, 1.0, 1.0);
        no_views.favorite_count = 3.0;
        let ls = [keep, no_views];
        let out = quality_filter(&ls, 0.05).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "k");
        assert!(quality_filter(&ls, 1.5).is_err());
    }

    #[test]
    fn numbers_render_minimally() {
        assert_eq!(render_number(3.0), "3");
        assert_eq!(render_number(2.5), "2.5");
        assert_eq!(render_number(0.1), "0.1");
        assert_eq!(render_number(350000.0), "350000");
    }
}
