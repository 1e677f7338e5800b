//! Peer retrieval and surprisal features.
//!
//! Peer groups (same neighborhood, zipcode, city, and the most similar
//! listings) give per-feature empirical distributions. A marketable feature is
//! surprising when the listing sits in the top `beta` fraction of some group
//! and strictly above that group's minimum.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listing::{load_listings, write_listings, Listing};
use crate::util::sha256_hex;

/// Fields the index exposes for filtering and scoring. `zipcode` is added to
/// the retriever mapping so zipcode peer groups can be filtered.
pub const INDEXED_FIELDS: &[&str] = &[
    "bedrooms",
    "bathrooms",
    "price",
    "description",
    "living_area_value",
    "street_address",
    "home_type",
    "state",
    "city",
    "page_view_count",
    "favorite_count",
    "home_insights",
    "neighborhood_region",
    "id",
    "zipcode",
];

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn listing_text(listing: &Listing) -> String {
    let mut text = listing.description.clone().unwrap_or_default();
    for insight in &listing.home_insights {
        text.push(' ');
        text.push_str(insight);
    }
    text
}

/// Weights of the peer-similarity score. The text part is BM25 over
/// description and home insights; each numeric part adds
/// `weight / (1 + |doc - query| / max(|query|, 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityWeights {
    pub text: f64,
    pub price: f64,
    pub bedrooms: f64,
    pub bathrooms: f64,
    pub living_area: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            text: 1.0,
            price: 2.0,
            bedrooms: 1.0,
            bathrooms: 1.0,
            living_area: 2.0,
            bm25_k1: 1.2,
            bm25_b: 0.75,
        }
    }
}

/// Exact-match field filter; text comparison is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldFilter {
    pub field: String,
    pub value: String,
}

impl FieldFilter {
    pub fn new(field: &str, value: &str) -> Self {
        Self {
            field: field.into(),
            value: value.into(),
        }
    }
}

/// In-memory inverted index. Immutable once built, so concurrent reads are safe.
#[derive(Debug, Clone)]
pub struct ListingIndex {
    docs: Vec<Listing>,
    by_id: HashMap<String, usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<usize>,
    avg_len: f64,
    pub weights: SimilarityWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub fields: Vec<String>,
    pub doc_count: usize,
    pub weights: SimilarityWeights,
    /// sha256 of the stored listings file.
    pub checksum: String,
}

const INDEX_FORMAT_VERSION: u32 = 1;
const INDEX_DOCS_FILE: &str = "listings.jsonl";
const INDEX_MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarPeers {
    /// `(id, score)`, best first, ties broken by id.
    pub peers: Vec<(String, f64)>,
    /// Set when fewer than `k` peers exist.
    pub shortfall: bool,
}

impl ListingIndex {
    pub fn build(listings: Vec<Listing>) -> Result<Self> {
        Self::with_weights(listings, SimilarityWeights::default())
    }

    pub fn with_weights(listings: Vec<Listing>, weights: SimilarityWeights) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(listings.len());
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(listings.len());
        for (i, l) in listings.iter().enumerate() {
            if by_id.insert(l.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(l.id.clone()));
            }
            let tokens = tokenize(&listing_text(l));
            doc_len.push(tokens.len());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
        }
        let avg_len = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64
        };
        Ok(Self {
            docs: listings,
            by_id,
            postings,
            doc_len,
            avg_len,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn listings(&self) -> &[Listing] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Listing> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    /// Listings matching every filter, in index order.
    pub fn filter(&self, filters: &[FieldFilter]) -> Result<Vec<&Listing>> {
        if let Some(f) = filters
            .iter()
            .find(|f| !INDEXED_FIELDS.contains(&f.field.as_str()))
        {
            return Err(Error::Precondition(format!(
                "field `{}` is not indexed",
                f.field
            )));
        }
        Ok(self
            .docs
            .iter()
            .filter(|l| {
                filters.iter().all(|f| match l.attribute_value(&f.field) {
                    Some(Ok(v)) => v.eq_ignore_ascii_case(f.value.trim()),
                    _ => false,
                })
            })
            .collect())
    }

    /// BM25 score of every document against `query`, in index order.
    pub fn text_scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        let n = self.docs.len() as f64;
        let SimilarityWeights {
            bm25_k1: k1,
            bm25_b: b,
            ..
        } = self.weights;
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        for term in terms {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = if self.avg_len > 0.0 {
                    self.doc_len[doc] as f64 / self.avg_len
                } else {
                    0.0
                };
                scores[doc] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            }
        }
        scores
    }

    /// Top `k` documents by text score, best first, ties by id.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let scores = self.text_scores(query);
        top_k(
            self.docs
                .iter()
                .zip(scores)
                .map(|(l, s)| (l.id.as_str(), s)),
            k,
        )
    }

    /// Similarity of each document to `query`, in index order.
    pub fn similarity_scores(&self, query: &Listing) -> Vec<f64> {
        let w = self.weights;
        let text = self.text_scores(&listing_text(query));
        self.docs
            .iter()
            .zip(text)
            .map(|(doc, t)| {
                w.text * t
                    + w.price * proximity(Some(doc.price), Some(query.price))
                    + w.bedrooms * proximity(Some(doc.bedrooms), Some(query.bedrooms))
                    + w.bathrooms * proximity(Some(doc.bathrooms), Some(query.bathrooms))
                    + w.living_area * proximity(doc.living_area_value, query.living_area_value)
            })
            .collect()
    }

    /// The `k` most similar listings, never including the query itself.
    pub fn query_similar(&self, query: &Listing, k: usize) -> Result<SimilarPeers> {
        if k == 0 {
            return Err(Error::Precondition("k must be >= 1".into()));
        }
        let scores = self.similarity_scores(query);
        let candidates = self
            .docs
            .iter()
            .zip(scores)
            .filter(|(l, _)| l.id != query.id)
            .map(|(l, s)| (l.id.as_str(), s));
        let peers = top_k(candidates, k);
        Ok(SimilarPeers {
            shortfall: peers.len() < k,
            peers,
        })
    }

    pub fn manifest(&self) -> Result<IndexManifest> {
        let mut bytes = Vec::new();
        write_listings(&mut bytes, self.docs.iter())?;
        Ok(IndexManifest {
            format_version: INDEX_FORMAT_VERSION,
            fields: INDEXED_FIELDS.iter().map(|s| s.to_string()).collect(),
            doc_count: self.docs.len(),
            weights: self.weights,
            checksum: sha256_hex(&bytes),
        })
    }

    /// Writes the stored listings and a manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<IndexManifest> {
        fs::create_dir_all(dir)?;
        let mut bytes = Vec::new();
        write_listings(&mut bytes, self.docs.iter())?;
        fs::write(dir.join(INDEX_DOCS_FILE), &bytes)?;
        let manifest = self.manifest()?;
        fs::write(
            dir.join(INDEX_MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: IndexManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(INDEX_MANIFEST_FILE))?)?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(Error::Precondition(format!(
                "unsupported index format {}",
                manifest.format_version
            )));
        }
        let bytes = fs::read(dir.join(INDEX_DOCS_FILE))?;
        let actual = sha256_hex(&bytes);
        if actual != manifest.checksum {
            return Err(Error::Checksum {
                expected: manifest.checksum,
                actual,
            });
        }
        let listings = load_listings(BufReader::new(bytes.as_slice()))?;
        if listings.len() != manifest.doc_count {
            return Err(Error::Precondition(format!(
                "manifest lists {} documents, found {}",
                manifest.doc_count,
                listings.len()
            )));
        }
        Self::with_weights(listings, manifest.weights)
    }
}

fn proximity(doc: Option<f64>, query: Option<f64>) -> f64 {
    match (doc, query) {
        (Some(d), Some(q)) if d.is_finite() && q.is_finite() => {
            1.0 / (1.0 + (d - q).abs() / q.abs().max(1.0))
        }
        _ => 0.0,
    }
}

fn top_k<'a>(items: impl Iterator<Item = (&'a str, f64)>, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(&str, f64)> = items.collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    all.truncate(k);
    all.into_iter().map(|(id, s)| (id.to_string(), s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Neighborhood,
    Zipcode,
    City,
    Similar,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::Neighborhood => "neighborhood",
            GroupKind::Zipcode => "zipcode",
            GroupKind::City => "city",
            GroupKind::Similar => "similar",
        }
    }
}

/// Per-feature sorted intensity samples of one peer group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub kind: GroupKind,
    pub label: String,
    samples: Vec<Vec<f64>>,
    size: usize,
}

impl EmpiricalDistribution {
    /// `rows` holds one intensity vector per group member.
    pub fn new(kind: GroupKind, label: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Precondition("group needs at least one member".into()))?;
        let m = first.len();
        let mut samples = vec![Vec::with_capacity(rows.len()); m];
        for row in rows {
            if row.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    actual: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite sample for feature {j}"
                    )));
                }
                samples[j].push(*v);
            }
        }
        samples.iter_mut().for_each(|s| s.sort_by(f64::total_cmp));
        Ok(Self {
            kind,
            label: label.into(),
            samples,
            size: rows.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn feature_count(&self) -> usize {
        self.samples.len()
    }

    fn column(&self, feature: usize) -> Result<&[f64]> {
        self.samples
            .get(feature)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))
    }

    pub fn min(&self, feature: usize) -> Result<f64> {
        Ok(self.column(feature)?[0])
    }

    /// Fraction of samples `<= p`.
    pub fn cdf(&self, feature: usize, p: f64) -> Result<f64> {
        let col = self.column(feature)?;
        Ok(col.partition_point(|v| *v <= p) as f64 / col.len() as f64)
    }
}

/// `1 - F(p)`, computed as the fraction of samples strictly above `p` so that
/// boundary ranks such as 3/10 compare exactly against `beta`. 0 at or above
/// the group maximum.
pub fn percentile_rank(group: &EmpiricalDistribution, feature: usize, p: f64) -> Result<f64> {
    let col = group.column(feature)?;
    Ok((col.len() - col.partition_point(|v| *v <= p)) as f64 / col.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurprisalConfig {
    pub beta: f64,
    pub similar_k: usize,
    pub min_group: usize,
}

impl Default for SurprisalConfig {
    fn default() -> Self {
        Self {
            beta: 0.30,
            similar_k: 20,
            min_group: 5,
        }
    }
}

impl SurprisalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Precondition(format!(
                "beta {} outside (0, 1)",
                self.beta
            )));
        }
        if self.similar_k == 0 {
            return Err(Error::Precondition("similar_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveFeature {
    pub feature: usize,
    pub rank: f64,
}

/// Features of one group that met the surprisal rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvidence {
    pub kind: GroupKind,
    pub label: String,
    pub size: usize,
    pub competitive: Vec<CompetitiveFeature>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurprisalOutcome {
    /// Ascending feature ids.
    pub features: Vec<usize>,
    /// One entry per group that met `min_group`, in input order.
    pub groups: Vec<GroupEvidence>,
    /// Groups ignored for being smaller than `min_group`: `(kind, label, size)`.
    pub skipped: Vec<(GroupKind, String, usize)>,
    /// No group met `min_group`.
    pub no_usable_group: bool,
}

impl SurprisalOutcome {
    pub fn group(&self, kind: GroupKind) -> Option<&GroupEvidence> {
        self.groups.iter().find(|g| g.kind == kind)
    }
}

/// Features of `s1` ranked within the top `beta` of at least one group and
/// strictly above that group's minimum.
pub fn select_surprising(
    s: &[f64],
    s1: &[usize],
    groups: &[EmpiricalDistribution],
    config: &SurprisalConfig,
) -> Result<SurprisalOutcome> {
    config.validate()?;
    if let Some(&j) = s1.iter().find(|&&j| j >= s.len()) {
        return Err(Error::UnknownFeature(j.to_string()));
    }
    let mut out = SurprisalOutcome::default();
    let mut chosen = vec![false; s.len()];
    for g in groups {
        if g.len() < config.min_group {
            out.skipped.push((g.kind, g.label.clone(), g.len()));
            continue;
        }
        if g.feature_count() != s.len() {
            return Err(Error::Dimension {
                expected: s.len(),
                actual: g.feature_count(),
            });
        }
        let mut competitive = Vec::new();
        for &j in s1 {
            let rank = percentile_rank(g, j, s[j])?;
            if rank <= config.beta && s[j] > g.min(j)? {
                competitive.push(CompetitiveFeature { feature: j, rank });
                chosen[j] = true;
            }
        }
        out.groups.push(GroupEvidence {
            kind: g.kind,
            label: g.label.clone(),
            size: g.len(),
            competitive,
        });
    }
    out.no_usable_group = out.groups.is_empty();
    out.features = chosen
        .iter()
        .enumerate()
        .filter(|(_, c)| **c)
        .map(|(j, _)| j)
        .collect();
    Ok(out)
}

/// Builds the neighborhood, zipcode, city and similar-listing groups of
/// `target` from stored intensities. The target never belongs to its own
/// groups; listings without intensities are left out.
pub fn build_peer_groups(
    index: &ListingIndex,
    target: &Listing,
    intensities: &HashMap<String, Vec<f64>>,
    config: &SurprisalConfig,
) -> Result<Vec<EmpiricalDistribution>> {
    let rows_of = |ids: &mut dyn Iterator<Item = &str>| -> Vec<Vec<f64>> {
        ids.filter(|id| *id != target.id)
            .filter_map(|id| intensities.get(id).cloned())
            .collect()
    };
    let mut groups = Vec::new();
    let mut push = |kind: GroupKind, label: String, rows: Vec<Vec<f64>>| -> Result<()> {
        if !rows.is_empty() {
            groups.push(EmpiricalDistribution::new(kind, label, &rows)?);
        }
        Ok(())
    };
    let fields = [
        (
            GroupKind::Neighborhood,
            "neighborhood_region",
            &target.neighborhood_region,
        ),
        (GroupKind::Zipcode, "zipcode", &target.zipcode),
        (GroupKind::City, "city", &target.city),
    ];
    for (kind, field, value) in fields {
        let Some(value) = value.as_deref().map(str::trim).filter(|v| !v.is_empty()) else {
            continue;
        };
        let members = index.filter(&[FieldFilter::new(field, value)])?;
        push(
            kind,
            value.to_string(),
            rows_of(&mut members.iter().map(|l| l.id.as_str())),
        )?;
    }
    let similar = index.query_similar(target, config.similar_k)?;
    let label = format!("{} similar listings", similar.peers.len());
    push(
        GroupKind::Similar,
        label,
        rows_of(&mut similar.peers.iter().map(|(id, _)| id.as_str())),
    )?;
    Ok(groups)
}
