//! Shared state of one CLI run: resolved configuration, data paths, model
//! clients, and the manifest being assembled.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use realtor_core::llm::{
    DecodeParams, EmbeddingClient, FeatureHashEmbedder, HeuristicMock, LanguageModelClient,
    RetryPolicy,
};
use realtor_core::sha256_hex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::openai::OpenAiClient;

pub const LISTINGS: &str = "listings.jsonl";
pub const INGEST_ERRORS: &str = "ingest_errors.jsonl";
pub const SCHEMA: &str = "schema.json";
pub const KEYWORDS: &str = "keywords.json";
pub const MODEL: &str = "model.json";
pub const TRAINING_REPORT: &str = "training_report.json";
pub const INDEX_DIR: &str = "index";
pub const DESCRIPTIONS: &str = "descriptions.jsonl";
pub const GENERATE_ERRORS: &str = "generate_errors.jsonl";
pub const FACTCHECK_REPORTS: &str = "factcheck_reports.jsonl";
pub const FACTCHECK_SUMMARY: &str = "factcheck_summary.json";
pub const FACTCHECK_SUMMARY_CSV: &str = "factcheck_summary.csv";
pub const SIMULATION_RUNS: &str = "simulation_runs.jsonl";
pub const SIMULATION_METRICS: &str = "simulation_metrics.json";
pub const REPORT_DIR: &str = "report";
pub const SURVEY_DIR: &str = "survey";
pub const MANIFEST_DIR: &str = "manifests";

/// Timestamp stamped on generated records when clients are mocked, so that
/// mocked runs are byte-reproducible.
pub const MOCK_CLOCK: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub seed: u64,
    pub mock_llm: bool,
    pub config: Config,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub struct Ctx {
    pub cfg: Config,
    pub data_dir: PathBuf,
    pub seed: u64,
    /// The seed exactly as given on the command line or in the config.
    pub explicit_seed: Option<u64>,
    pub mock: bool,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn digest(path: &Path) -> anyhow::Result<String> {
    if path.is_dir() {
        // directories hash as the sorted list of their files' digests
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        let mut acc = String::new();
        for e in entries {
            acc.push_str(&format!(
                "{}:{}\n",
                e.file_name().unwrap_or_default().to_string_lossy(),
                digest(&e)?
            ));
        }
        return Ok(sha256_hex(acc.as_bytes()));
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Ctx {
    pub fn new(cfg: Config, data_dir: Option<PathBuf>, seed: Option<u64>, mock: bool) -> Self {
        let data_dir = data_dir
            .or_else(|| cfg.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from("data"));
        let explicit_seed = seed.or(cfg.seed);
        Self {
            cfg,
            data_dir,
            seed: explicit_seed.unwrap_or(0),
            explicit_seed,
            mock,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.data_dir.join(name)
    }

    pub fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    pub fn output(&mut self, path: &Path) -> PathBuf {
        self.outputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    pub fn llm(&self) -> anyhow::Result<Arc<dyn LanguageModelClient>> {
        if self.mock {
            return Ok(Arc::new(HeuristicMock::default()));
        }
        Ok(Arc::new(OpenAiClient::new(&self.cfg.llm)?))
    }

    pub fn embedder(&self) -> anyhow::Result<Arc<dyn EmbeddingClient>> {
        if self.mock {
            return Ok(Arc::new(FeatureHashEmbedder::new(
                self.cfg.train.mock_embedding_dim,
                self.seed,
            )));
        }
        Ok(Arc::new(OpenAiClient::new(&self.cfg.llm)?))
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.cfg.llm.retries,
            base_delay_ms: self.cfg.llm.backoff_ms,
        }
    }

    pub fn decode(&self) -> DecodeParams {
        DecodeParams {
            temperature: self.cfg.llm.temperature,
            max_tokens: self.cfg.llm.max_tokens,
            seed: self.seed,
        }
    }

    pub fn created_at(&self) -> String {
        if self.mock {
            MOCK_CLOCK.to_string()
        } else {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        }
    }

    fn display(&self, p: &Path) -> String {
        p.strip_prefix(&self.data_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Writes `manifests/<command>.json` with digests of every recorded
    /// input and output.
    pub fn finish(&self, command: &str, args: serde_json::Value) -> anyhow::Result<RunManifest> {
        let files = |paths: &[PathBuf]| -> anyhow::Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileDigest {
                        path: self.display(p),
                        sha256: digest(p)?,
                    })
                })
                .collect()
        };
        let manifest = RunManifest {
            command: command.to_string(),
            args,
            seed: self.seed,
            mock_llm: self.mock,
            config: self.cfg.clone(),
            inputs: files(&self.inputs)?,
            outputs: files(&self.outputs)?,
        };
        let path = self.path(MANIFEST_DIR).join(format!("{command}.json"));
        write_json(&path, &manifest)?;
        Ok(manifest)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// CSV with a header; fields are quoted when needed.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    fn field(s: &str) -> String {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.iter().map(|s| field(s)).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Maps `f` over `items` on up to `workers` threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let workers = workers.max(1).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
