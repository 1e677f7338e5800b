//! Hierarchical signaling-feature schema and the LLM-assisted pipeline that
//! induces it from human-written descriptions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{
    parse_json_reply, DecodeParams, LanguageModelClient, LlmError, Message, RetryPolicy,
};
use crate::normalize::Normalizer;
use crate::prompts::{render, Bindings, PromptId};

/// Category names the induction step may not produce.
pub const FORBIDDEN_CATEGORIES: &[&str] =
    &["others", "other", "misc", "miscellaneous", "uncategorized"];

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    #[default]
    Pending,
    Approved,
    Rejected,
}

/// A category (has children) or a leaf feature (has keywords).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<SchemaNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewStatus>,
}

impl SchemaNode {
    pub fn category(name: impl Into<String>, children: Vec<SchemaNode>) -> Self {
        Self {
            name: name.into(),
            children,
            keywords: Vec::new(),
            review: None,
        }
    }

    pub fn leaf(name: impl Into<String>, keywords: Vec<String>) -> Self {
        Self {
            name: name.into(),
            children: Vec::new(),
            keywords,
            review: Some(ReviewStatus::Pending),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub roots: Vec<SchemaNode>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDocument {
    version: u32,
    roots: Vec<SchemaNode>,
}

impl FeatureSchema {
    /// The shipped final schema.
    pub fn builtin() -> Self {
        Self::parse_layout(include_str!("../resources/feature_schema.txt"))
            .expect("builtin schema is valid")
    }

    /// Seed schema used as the starting point for induction.
    pub fn induction_seed() -> Self {
        Self::parse_layout(include_str!("../resources/induction_seed_schema.txt"))
            .expect("seed schema is valid")
    }

    /// Canonical JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SchemaDocument = serde_json::from_str(text)?;
        if doc.version != SCHEMA_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema version {}",
                doc.version
            )));
        }
        let schema = Self { roots: doc.roots };
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SchemaDocument {
            version: SCHEMA_FORMAT_VERSION,
            roots: self.roots.clone(),
        })
        .expect("schema serializes")
    }

    /// Loads either the canonical JSON document or the indented text layout.
    pub fn load(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::parse_layout(text)
        }
    }

    /// Parses the indented text layout: `Name:` opens a node, an indented
    /// `[a,b,c]` line gives the keywords of the node above it, and a bare
    /// `Name` line is a leaf whose only keyword is its own name.
    pub fn parse_layout(text: &str) -> Result<Self> {
        struct Open {
            indent: usize,
            name: String,
            line: usize,
            children: Vec<SchemaNode>,
            keywords: Option<Vec<String>>,
        }

        fn close(open: Open) -> Result<SchemaNode> {
            match open.keywords {
                Some(keywords) => Ok(SchemaNode::leaf(open.name, keywords)),
                None if !open.children.is_empty() => {
                    Ok(SchemaNode::category(open.name, open.children))
                }
                None => Err(Error::Schema(format!(
                    "line {}: `{}` has neither children nor keywords",
                    open.line, open.name
                ))),
            }
        }

        fn attach(stack: &mut [Open], roots: &mut Vec<SchemaNode>, node: SchemaNode) {
            match stack.last_mut() {
                Some(parent) => parent.children.push(node),
                None => roots.push(node),
            }
        }

        let mut roots = Vec::new();
        let mut stack: Vec<Open> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let indent: usize = raw
                .chars()
                .take_while(|c| c.is_whitespace())
                .map(|c| if c == '\t' { 4 } else { 1 })
                .sum();
            let content = raw.trim();
            if let Some(inner) = content.strip_prefix('[') {
                let inner = inner.strip_suffix(']').ok_or_else(|| {
                    Error::Schema(format!("line {line_no}: unterminated keyword list"))
                })?;
                let top = stack.last_mut().ok_or_else(|| {
                    Error::Schema(format!(
                        "line {line_no}: keyword list without a feature name"
                    ))
                })?;
                if indent <= top.indent || top.keywords.is_some() || !top.children.is_empty() {
                    return Err(Error::Schema(format!(
                        "line {line_no}: misplaced keyword list under `{}`",
                        top.name
                    )));
                }
                let mut keywords: Vec<String> = Vec::new();
                for k in inner.split(',').map(str::trim).filter(|k| !k.is_empty()) {
                    if !keywords.iter().any(|e| e == k) {
                        keywords.push(k.to_string());
                    }
                }
                top.keywords = Some(keywords);
                continue;
            }
            while stack.last().is_some_and(|o| o.indent >= indent) {
                let done = close(stack.pop().unwrap())?;
                attach(&mut stack, &mut roots, done);
            }
            if stack.last().is_some_and(|o| o.keywords.is_some()) {
                return Err(Error::Schema(format!(
                    "line {line_no}: `{content}` nested under a leaf"
                )));
            }
            match content.strip_suffix(':') {
                Some(name) => stack.push(Open {
                    indent,
                    name: name.trim().to_string(),
                    line: line_no,
                    children: Vec::new(),
                    keywords: None,
                }),
                None => {
                    let leaf = SchemaNode::leaf(content, vec![content.to_lowercase()]);
                    attach(&mut stack, &mut roots, leaf);
                }
            }
        }
        while let Some(open) = stack.pop() {
            let done = close(open)?;
            attach(&mut stack, &mut roots, done);
        }
        let schema = Self { roots };
        schema.validate()?;
        Ok(schema)
    }

    /// Renders the indented text layout accepted by [`Self::parse_layout`].
    pub fn to_layout(&self) -> String {
        fn walk(node: &SchemaNode, depth: usize, out: &mut String) {
            let pad = "    ".repeat(depth);
            out.push_str(&format!("{pad}{}:\n", node.name));
            if node.is_leaf() {
                out.push_str(&format!("{pad}    [{}]\n", node.keywords.join(",")));
            } else {
                for c in &node.children {
                    walk(c, depth + 1, out);
                }
            }
        }
        let mut out = String::new();
        for r in &self.roots {
            walk(r, 0, &mut out);
        }
        out
    }

    /// Nested JSON object: categories map to objects, leaves to keyword arrays.
    pub fn to_induction_json(&self) -> serde_json::Value {
        fn walk(nodes: &[SchemaNode]) -> serde_json::Value {
            let mut map = serde_json::Map::new();
            for n in nodes {
                let v = if n.is_leaf() {
                    serde_json::Value::from(n.keywords.clone())
                } else {
                    walk(&n.children)
                };
                map.insert(n.name.clone(), v);
            }
            serde_json::Value::Object(map)
        }
        walk(&self.roots)
    }

    pub fn from_induction_json(value: &serde_json::Value) -> Result<Self> {
        fn walk(map: &serde_json::Map<String, serde_json::Value>) -> Result<Vec<SchemaNode>> {
            let mut nodes = Vec::new();
            for (name, v) in map {
                let node = match v {
                    serde_json::Value::Object(inner) => {
                        SchemaNode::category(name.clone(), walk(inner)?)
                    }
                    serde_json::Value::Array(items) => {
                        let keywords = items
                            .iter()
                            .map(|i| {
                                i.as_str().map(String::from).ok_or_else(|| {
                                    Error::Schema(format!("non-string keyword under `{name}`"))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        SchemaNode::leaf(name.clone(), keywords)
                    }
                    other => {
                        return Err(Error::Schema(format!(
                            "unexpected value under `{name}`: {other}"
                        )))
                    }
                };
                nodes.push(node);
            }
            Ok(nodes)
        }
        let map = value
            .as_object()
            .ok_or_else(|| Error::Schema("schema must be a JSON object".into()))?;
        Ok(Self { roots: walk(map)? })
    }

    /// Leaves in depth-first order; the index into this list is the feature id.
    pub fn leaves(&self) -> Vec<&SchemaNode> {
        fn walk<'a>(n: &'a SchemaNode, out: &mut Vec<&'a SchemaNode>) {
            if n.is_leaf() {
                out.push(n);
            } else {
                n.children.iter().for_each(|c| walk(c, out));
            }
        }
        let mut out = Vec::new();
        self.roots.iter().for_each(|r| walk(r, &mut out));
        out
    }

    pub fn leaf_names(&self) -> Vec<String> {
        self.leaves().into_iter().map(|l| l.name.clone()).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Case-insensitive lookup of a leaf's feature id.
    pub fn feature_id(&self, name: &str) -> Option<usize> {
        let needle = name.trim().to_lowercase();
        self.leaves()
            .iter()
            .position(|l| l.name.to_lowercase() == needle)
    }

    pub fn for_each_leaf_mut(&mut self, mut f: impl FnMut(&mut SchemaNode)) {
        fn walk(n: &mut SchemaNode, f: &mut dyn FnMut(&mut SchemaNode)) {
            if n.is_leaf() {
                f(n);
            } else {
                n.children.iter_mut().for_each(|c| walk(c, f));
            }
        }
        self.roots.iter_mut().for_each(|r| walk(r, &mut f));
    }

    pub fn set_review(&mut self, leaf: &str, status: ReviewStatus) -> Result<()> {
        let needle = leaf.trim().to_lowercase();
        let mut found = false;
        self.for_each_leaf_mut(|l| {
            if l.name.to_lowercase() == needle {
                l.review = Some(status);
                found = true;
            }
        });
        found
            .then_some(())
            .ok_or_else(|| Error::UnknownFeature(leaf.to_string()))
    }

    /// Leaf names unique case-insensitively, every leaf has a keyword, no
    /// node mixes children and keywords.
    pub fn validate(&self) -> Result<()> {
        fn walk(n: &SchemaNode, seen: &mut HashSet<String>) -> Result<()> {
            if n.name.trim().is_empty() {
                return Err(Error::Schema("empty node name".into()));
            }
            if n.is_leaf() {
                if n.keywords.is_empty() {
                    return Err(Error::Schema(format!("leaf `{}` has no keywords", n.name)));
                }
                if !seen.insert(n.name.to_lowercase()) {
                    return Err(Error::Schema(format!("duplicate leaf `{}`", n.name)));
                }
            } else {
                if !n.keywords.is_empty() {
                    return Err(Error::Schema(format!(
                        "category `{}` carries keywords",
                        n.name
                    )));
                }
                for c in &n.children {
                    walk(c, seen)?;
                }
            }
            Ok(())
        }
        let mut seen = HashSet::new();
        for r in &self.roots {
            walk(r, &mut seen)?;
        }
        Ok(())
    }

    /// Rejects catch-all buckets anywhere in the tree.
    pub fn check_no_catch_all(&self) -> Result<()> {
        fn walk(n: &SchemaNode) -> Result<()> {
            if FORBIDDEN_CATEGORIES.contains(&n.name.trim().to_lowercase().as_str()) {
                return Err(Error::Schema(format!(
                    "catch-all category `{}` is not allowed",
                    n.name
                )));
            }
            n.children.iter().try_for_each(walk)
        }
        self.roots.iter().try_for_each(walk)
    }

    /// Lowercased set of every keyword assigned to some leaf.
    pub fn assigned_keywords(&self) -> BTreeSet<String> {
        self.leaves()
            .iter()
            .flat_map(|l| l.keywords.iter().map(|k| k.to_lowercase()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub keyword: String,
    pub document_frequency: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeywordBase {
    pub keywords: Vec<KeywordEntry>,
    /// Descriptions whose extraction failed, by index, with the reason.
    pub failures: Vec<(usize, String)>,
    pub llm_calls: usize,
}

/// Default frequency floor for the induction base.
pub const DEFAULT_FREQUENCY_FLOOR: usize = 50;

/// Extracts keywords from each description, normalizes them through the
/// model and `normalizer`, and keeps those found in at least
/// `frequency_floor` descriptions. Output is sorted by keyword.
pub fn build_keyword_base(
    descriptions: &[String],
    llm: &dyn LanguageModelClient,
    normalizer: &dyn Normalizer,
    frequency_floor: usize,
    retry: &RetryPolicy,
) -> Result<KeywordBase> {
    if frequency_floor == 0 {
        return Err(Error::Precondition("frequency_floor must be >= 1".into()));
    }
    let params = DecodeParams::default();
    let mut base = KeywordBase::default();
    let mut normalized_cache: HashMap<String, String> = HashMap::new();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for (i, desc) in descriptions.iter().enumerate() {
        let prompt = render(
            PromptId::KeywordExtraction,
            &Bindings::new().set("desc", desc),
        )?;
        base.llm_calls += 1;
        let reply = match retry.run(|| llm.complete(&[Message::user(prompt.clone())], &params)) {
            Ok(r) => r,
            Err(e) => {
                base.failures.push((i, e.to_string()));
                continue;
            }
        };
        let mut doc_keywords = BTreeSet::new();
        let mut failed = None;
        for raw in reply
            .split([',', '\n'])
            .map(str::trim)
            .filter(|k| !k.is_empty())
        {
            let llm_form = match normalized_cache.get(raw) {
                Some(n) => n.clone(),
                None => {
                    let prompt = render(
                        PromptId::KeywordNormalization,
                        &Bindings::new().set("", raw),
                    )?;
                    base.llm_calls += 1;
                    match retry.run(|| llm.complete(&[Message::user(prompt.clone())], &params)) {
                        Ok(r) => {
                            let first = r
                                .lines()
                                .find(|l| !l.trim().is_empty())
                                .unwrap_or("")
                                .trim()
                                .to_string();
                            normalized_cache.insert(raw.to_string(), first.clone());
                            first
                        }
                        Err(e) => {
                            failed = Some(e.to_string());
                            break;
                        }
                    }
                }
            };
            let keyword = normalizer.normalize(&llm_form);
            if !keyword.is_empty() {
                doc_keywords.insert(keyword);
            }
        }
        if let Some(reason) = failed {
            base.failures.push((i, reason));
        }
        for k in doc_keywords {
            *df.entry(k).or_default() += 1;
        }
    }
    base.keywords = df
        .into_iter()
        .filter(|(_, n)| *n >= frequency_floor)
        .map(|(keyword, document_frequency)| KeywordEntry {
            keyword,
            document_frequency,
        })
        .collect();
    Ok(base)
}

pub const DEFAULT_INDUCTION_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct InductionOutcome {
    pub schema: FeatureSchema,
    pub batches: usize,
}

/// Feeds keywords to the model in batches; each reply is the updated full
/// tree, which seeds the next batch. Unparseable replies are retried once.
pub fn induce_schema(
    keywords: &[KeywordEntry],
    seed: &FeatureSchema,
    llm: &dyn LanguageModelClient,
    batch_size: usize,
) -> Result<InductionOutcome> {
    if batch_size == 0 {
        return Err(Error::Precondition("batch_size must be >= 1".into()));
    }
    let params = DecodeParams::default();
    let mut schema = seed.clone();
    let mut batches = 0;
    for batch in keywords.chunks(batch_size) {
        let list: Vec<&str> = batch.iter().map(|k| k.keyword.as_str()).collect();
        let prompt = render(
            PromptId::SchemaInduction,
            &Bindings::new()
                .set("schema", schema.to_layout())
                .set("keywords", list.join("\n")),
        )?;
        batches += 1;
        let mut attempt = 0;
        schema = loop {
            attempt += 1;
            let reply = llm.complete(&[Message::user(prompt.clone())], &params)?;
            let parsed = parse_json_reply(&reply)
                .map_err(Error::from)
                .and_then(|v| FeatureSchema::from_induction_json(&v));
            match parsed {
                Ok(s) => break s,
                Err(e) if attempt >= 2 => {
                    return Err(Error::Llm(LlmError::Unparseable {
                        raw: reply,
                        reason: e.to_string(),
                    }))
                }
                Err(_) => continue,
            }
        };
        schema.check_no_catch_all()?;
        schema.validate()?;
    }
    let assigned = schema.assigned_keywords();
    let missing: Vec<&str> = keywords
        .iter()
        .map(|k| k.keyword.as_str())
        .filter(|k| !assigned.contains(&k.to_lowercase()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "unassigned keywords: {}",
            missing.join(", ")
        )));
    }
    Ok(InductionOutcome { schema, batches })
}
