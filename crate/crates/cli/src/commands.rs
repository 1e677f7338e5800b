//! Subcommand implementations. Each records its inputs and outputs on the
//! context and finishes by writing a run manifest.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context as _};
use realtor_core::agent::Agent;
use realtor_core::arena::{
    elo_update, leaderboard, simulate_buyer, simulation_accuracy, EloTable, Leaderboard, PairTask,
    SimulationMetrics, SimulationRun,
};
use realtor_core::factcheck::{faithfulness_report, summarize, FaithfulnessReport};
use realtor_core::generation::{
    attributes_block, generate_description, DescriptionRecord, Variant,
};
use realtor_core::grounding::{
    prepare_examples, train_mapping, LabeledExample, MlpModel, TrainOptions,
};
use realtor_core::listing::{
    load_listings_path, quality_filter, read_listings, write_listings, Listing,
};
use realtor_core::llm::EmbeddingClient;
use realtor_core::normalize::RuleNormalizer;
use realtor_core::personalization::BuyerProfile;
use realtor_core::schema::{build_keyword_base, induce_schema, FeatureSchema, ReviewStatus};
use realtor_core::surprisal::ListingIndex;
use realtor_survey::log::{read_comparison_events, read_log, LogRecord};
use realtor_survey::plan::AgentSource;
use realtor_survey::service::{Ledger, ServiceConfig, SurveyService};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::*;
use crate::context::*;

fn args_json<T: Serialize>(a: &T) -> serde_json::Value {
    serde_json::to_value(a).unwrap_or(serde_json::Value::Null)
}

fn load_ingested(ctx: &mut Ctx) -> anyhow::Result<Vec<Listing>> {
    let p = ctx.path(LISTINGS);
    ensure!(
        p.exists(),
        "{} not found; run `realtor ingest` first",
        p.display()
    );
    ctx.input(&p);
    Ok(load_listings_path(&p)?)
}

fn load_schema(ctx: &mut Ctx) -> anyhow::Result<FeatureSchema> {
    let p = ctx.path(SCHEMA);
    if !p.exists() {
        tracing::info!(
            "no {} in the data directory; using the shipped schema",
            SCHEMA
        );
        return Ok(FeatureSchema::builtin());
    }
    ctx.input(&p);
    Ok(FeatureSchema::load(&std::fs::read_to_string(&p)?)?)
}

fn load_agent(
    ctx: &mut Ctx,
    listings: &[Listing],
    embedder: &dyn EmbeddingClient,
) -> anyhow::Result<Agent> {
    let schema = load_schema(ctx)?;
    let model_path = ctx.path(MODEL);
    ensure!(
        model_path.exists(),
        "{} not found; run `realtor train` first",
        model_path.display()
    );
    ctx.input(&model_path);
    let model = MlpModel::from_document(&std::fs::read_to_string(&model_path)?)?;
    let index_dir = ctx.path(INDEX_DIR);
    let index = if index_dir.exists() {
        ctx.input(&index_dir);
        ListingIndex::load(&index_dir)?
    } else {
        ListingIndex::build(listings.to_vec())?
    };
    Ok(Agent::new(schema, model, index, ctx.cfg.agent, embedder)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestError {
    line: usize,
    id: Option<String>,
    message: String,
}

pub fn ingest(ctx: &mut Ctx, a: IngestArgs) -> anyhow::Result<()> {
    let input = ctx.input(&a.input);
    let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
    let (listings, errors) = read_listings(BufReader::new(file))?;
    let out = ctx.output(&ctx.path(LISTINGS));
    let mut w = std::io::BufWriter::new(File::create(&out)?);
    write_listings(&mut w, &listings)?;
    std::io::Write::flush(&mut w)?;
    let errs: Vec<IngestError> = errors
        .into_iter()
        .map(|e| IngestError {
            line: e.line,
            id: e.id,
            message: e.message,
        })
        .collect();
    let err_path = ctx.output(&ctx.path(INGEST_ERRORS));
    write_jsonl(&err_path, &errs)?;
    for e in &errs {
        tracing::warn!(
            line = e.line,
            id = e.id.as_deref().unwrap_or("-"),
            "rejected: {}",
            e.message
        );
    }
    println!(
        "ingested {} listings, rejected {}",
        listings.len(),
        errs.len()
    );
    ctx.finish("ingest", args_json(&a))?;
    Ok(())
}

fn parse_review(spec: &str) -> anyhow::Result<(String, ReviewStatus)> {
    let (leaf, status) = spec
        .rsplit_once('=')
        .with_context(|| format!("expected LEAF=STATUS, got {spec:?}"))?;
    let status: ReviewStatus = serde_json::from_value(json!(status.trim().to_lowercase()))
        .with_context(|| format!("status must be pending, approved or rejected, got {status:?}"))?;
    Ok((leaf.trim().to_string(), status))
}

pub fn schema(ctx: &mut Ctx, a: SchemaArgs) -> anyhow::Result<()> {
    let path = ctx.path(SCHEMA);
    let reviews = a
        .review
        .iter()
        .map(|r| parse_review(r))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut schema = if a.induce {
        let listings = load_ingested(ctx)?;
        let descriptions: Vec<String> = listings
            .iter()
            .filter_map(|l| l.description.clone())
            .collect();
        ensure!(
            !descriptions.is_empty(),
            "no listing has a description to induce from"
        );
        let llm = ctx.llm()?;
        let base = build_keyword_base(
            &descriptions,
            llm.as_ref(),
            &RuleNormalizer::default(),
            a.frequency_floor,
            &ctx.retry(),
        )?;
        tracing::info!(
            keywords = base.keywords.len(),
            failures = base.failures.len(),
            "keyword base built"
        );
        ensure!(
            !base.keywords.is_empty(),
            "no keyword reaches the frequency floor of {}",
            a.frequency_floor
        );
        write_json(&ctx.output(&ctx.path(KEYWORDS)), &base)?;
        induce_schema(
            &base.keywords,
            &FeatureSchema::induction_seed(),
            llm.as_ref(),
            a.batch_size,
        )?
        .schema
    } else if path.exists() && !a.force {
        ctx.input(&path);
        FeatureSchema::load(&std::fs::read_to_string(&path)?)?
    } else {
        FeatureSchema::builtin()
    };
    for (leaf, status) in reviews {
        schema.set_review(&leaf, status)?;
    }
    std::fs::write(ctx.output(&path), schema.to_json() + "\n")?;
    if a.show {
        print!("{}", schema.to_layout());
    }
    println!(
        "schema with {} features written to {}",
        schema.leaf_count(),
        path.display()
    );
    ctx.finish("schema", args_json(&a))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainingSummary<'a> {
    listings: usize,
    kept_after_quality_filter: usize,
    examples: usize,
    skipped: &'a [String],
    options: &'a TrainOptions,
    report: &'a realtor_core::grounding::TrainingReport,
}

pub fn train(ctx: &mut Ctx, a: TrainArgs) -> anyhow::Result<()> {
    let listings = load_ingested(ctx)?;
    let schema = load_schema(ctx)?;
    let (llm, embedder) = (ctx.llm()?, ctx.embedder()?);
    let kept = quality_filter(&listings, ctx.cfg.train.min_engagement)?;
    ensure!(
        !kept.is_empty(),
        "no listing passes the engagement filter ({})",
        ctx.cfg.train.min_engagement
    );

    let retry = ctx.retry();
    let chunk = kept.len().div_ceil(ctx.cfg.llm.workers.max(1));
    let chunks: Vec<&[&Listing]> = kept.chunks(chunk).collect();
    let labeled = parallel_map(&chunks, ctx.cfg.llm.workers, |c| {
        prepare_examples(c, &schema, llm.as_ref(), embedder.as_ref(), &retry)
    });
    let mut examples: Vec<LabeledExample> = Vec::new();
    let mut skipped = Vec::new();
    for r in labeled {
        let (e, s) = r?;
        examples.extend(e);
        skipped.extend(s);
    }
    ensure!(
        !examples.is_empty(),
        "every listing was skipped during labeling"
    );

    let t = &ctx.cfg.train;
    let options = TrainOptions {
        learning_rate: a.learning_rate.unwrap_or(t.learning_rate),
        epochs: a.epochs.unwrap_or(t.epochs),
        batch_size: t.batch_size,
        seed: ctx.seed,
        test_fraction: t.test_fraction,
        hidden_bias: t.hidden_bias,
        freeze_hidden: t.freeze_hidden,
        selection: ctx.cfg.agent.selection,
    };
    let (model, report) = train_mapping(&examples, &options)?;
    std::fs::write(ctx.output(&ctx.path(MODEL)), model.to_document())?;
    write_json(
        &ctx.output(&ctx.path(TRAINING_REPORT)),
        &TrainingSummary {
            listings: listings.len(),
            kept_after_quality_filter: kept.len(),
            examples: examples.len(),
            skipped: &skipped,
            options: &options,
            report: &report,
        },
    )?;
    let index_dir = ctx.path(INDEX_DIR);
    ListingIndex::build(listings.clone())?.save(&index_dir)?;
    ctx.output(&index_dir);

    println!(
        "trained on {} examples ({} skipped)",
        report.train_ids.len(),
        skipped.len()
    );
    println!(
        "train accuracy {:.4} f1 {:.4}",
        report.train_metrics.accuracy, report.train_metrics.f1
    );
    if let Some(m) = &report.test_metrics {
        println!("test  accuracy {:.4} f1 {:.4}", m.accuracy, m.f1);
    }
    ctx.finish("train", args_json(&a))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateError {
    pub listing_id: Option<String>,
    pub variant: Option<String>,
    pub line: Option<usize>,
    pub error: String,
}

pub fn generate(ctx: &mut Ctx, a: GenerateArgs) -> anyhow::Result<()> {
    let variants = a
        .variants
        .iter()
        .map(|v| Variant::parse(v.trim()).with_context(|| format!("unknown variant {v:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let profile = match &a.buyer {
        Some(p) => {
            let profile: BuyerProfile = read_json(&ctx.input(p))?;
            profile.validate()?;
            Some(profile)
        }
        None => None,
    };
    let personal: Vec<&str> = variants
        .iter()
        .filter(|v| matches!(v, Variant::AiRealtor | Variant::NoSurprisal))
        .map(|v| v.as_str())
        .collect();
    if profile.is_none() && !personal.is_empty() {
        bail!(
            "variants {} need a buyer profile; pass --buyer",
            personal.join(", ")
        );
    }

    let all = load_ingested(ctx)?;
    let mut errors = Vec::new();
    let mut targets = match &a.input {
        Some(p) => {
            let (ls, bad) = read_listings(BufReader::new(File::open(ctx.input(p))?))?;
            errors.extend(bad.into_iter().map(|e| GenerateError {
                listing_id: e.id,
                variant: None,
                line: Some(e.line),
                error: e.message,
            }));
            ls
        }
        None => all.clone(),
    };
    if !a.listings.is_empty() {
        targets.retain(|l| a.listings.contains(&l.id));
        for id in &a.listings {
            if !targets.iter().any(|l| &l.id == id) {
                errors.push(GenerateError {
                    listing_id: Some(id.clone()),
                    variant: None,
                    line: None,
                    error: "unknown listing".into(),
                });
            }
        }
    }
    if let Some(n) = a.limit {
        targets.truncate(n);
    }

    let (llm, embedder) = (ctx.llm()?, ctx.embedder()?);
    let agent = load_agent(ctx, &all, embedder.as_ref())?;
    if let Some(p) = &profile {
        let known = agent.schema.leaf_names();
        let unknown: Vec<&str> = p
            .feature_importance
            .keys()
            .filter(|f| !known.contains(f))
            .map(String::as_str)
            .collect();
        ensure!(
            unknown.is_empty(),
            "the buyer profile rates features missing from the schema: {}",
            unknown.join(", ")
        );
    }
    let (decode, retry, created_at) = (ctx.decode(), ctx.retry(), ctx.created_at());
    let jobs: Vec<(&Listing, Variant)> = targets
        .iter()
        .flat_map(|l| variants.iter().map(move |v| (l, *v)))
        .collect();
    let results = parallel_map(&jobs, ctx.cfg.llm.workers, |(l, v)| {
        let req = agent.request(l, *v, profile.as_ref(), embedder.as_ref())?;
        generate_description(&req, llm.as_ref(), &decode, &retry, &created_at)
    });
    let mut records: Vec<DescriptionRecord> = Vec::new();
    for ((l, v), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                tracing::warn!(listing = %l.id, variant = %v, "generation failed: {e}");
                errors.push(GenerateError {
                    listing_id: Some(l.id.clone()),
                    variant: Some(v.to_string()),
                    line: None,
                    error: e.to_string(),
                });
            }
        }
    }
    write_jsonl(&ctx.output(&ctx.path(DESCRIPTIONS)), &records)?;
    write_jsonl(&ctx.output(&ctx.path(GENERATE_ERRORS)), &errors)?;
    println!(
        "generated {} descriptions, {} errors",
        records.len(),
        errors.len()
    );
    ctx.finish("generate", args_json(&a))?;
    Ok(())
}

pub const ORIGINAL_TAG: &str = "HUMAN";

fn summary_rows(reports: &[FaithfulnessReport]) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| {
        v.map(|x| format!("{x:.6}"))
            .unwrap_or_else(|| "NOT_APPLICABLE".into())
    };
    summarize(reports)
        .into_iter()
        .map(|s| {
            vec![
                s.variant,
                s.descriptions.to_string(),
                opt(s.hard_mean),
                s.hard_defined.to_string(),
                s.hard_not_applicable.to_string(),
                opt(s.soft_mean),
                s.soft_defined.to_string(),
                s.soft_not_applicable.to_string(),
            ]
        })
        .collect()
}

pub fn factcheck(ctx: &mut Ctx, a: FactcheckArgs) -> anyhow::Result<()> {
    let listings = load_ingested(ctx)?;
    let by_id: HashMap<&str, &Listing> = listings.iter().map(|l| (l.id.as_str(), l)).collect();
    let desc_path = a
        .descriptions
        .clone()
        .unwrap_or_else(|| ctx.path(DESCRIPTIONS));
    let records: Vec<DescriptionRecord> = read_jsonl(&ctx.input(&desc_path))?;
    for r in &records {
        ensure!(
            by_id.contains_key(r.listing_id.as_str()),
            "record {} names unknown listing {}",
            r.record_id,
            r.listing_id
        );
    }
    // (text, listing, record id, variant)
    let mut jobs: Vec<(String, &Listing, Option<String>, String)> = records
        .iter()
        .map(|r| {
            (
                r.text.clone(),
                by_id[r.listing_id.as_str()],
                Some(r.record_id.clone()),
                r.variant.to_string(),
            )
        })
        .collect();
    if a.include_original {
        for l in &listings {
            if let Some(d) = l.description.as_ref().filter(|d| !d.trim().is_empty()) {
                jobs.push((d.clone(), l, None, ORIGINAL_TAG.into()));
            }
        }
    }
    let llm = ctx.llm()?;
    let retry = ctx.retry();
    let spec = ctx.cfg.factcheck.clone();
    let results = parallel_map(&jobs, ctx.cfg.llm.workers, |(text, l, _, _)| {
        faithfulness_report(text, l, &spec, llm.as_ref(), &retry)
    });
    let mut reports = Vec::with_capacity(jobs.len());
    for ((_, l, record_id, variant), r) in jobs.iter().zip(results) {
        let mut r =
            r.with_context(|| format!("fact-checking a {variant} description of {}", l.id))?;
        r.record_id = record_id.clone();
        r.variant = Some(variant.clone());
        reports.push(r);
    }
    write_jsonl(&ctx.output(&ctx.path(FACTCHECK_REPORTS)), &reports)?;
    write_json(
        &ctx.output(&ctx.path(FACTCHECK_SUMMARY)),
        &summarize(&reports),
    )?;
    let rows = summary_rows(&reports);
    write_csv(
        &ctx.output(&ctx.path(FACTCHECK_SUMMARY_CSV)),
        &[
            "variant",
            "descriptions",
            "hard_mean",
            "hard_defined",
            "hard_not_applicable",
            "soft_mean",
            "soft_defined",
            "soft_not_applicable",
        ],
        &rows,
    )?;
    println!("{:<16} {:>5} {:>10} {:>10}", "variant", "n", "hard", "soft");
    for r in &rows {
        println!(
            "{:<16} {:>5} {:>10} {:>10}",
            r[0],
            r[1],
            &r[2][..r[2].len().min(10)],
            &r[5][..r[5].len().min(10)]
        );
    }
    ctx.finish("factcheck", args_json(&a))?;
    Ok(())
}

/// One buyer's recorded comparisons, in the order they were made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerTasks {
    pub buyer_id: String,
    pub profile: String,
    pub tasks: Vec<PairTask>,
}

/// Scored comparisons of a survey log, grouped by buyer, with the texts as
/// the buyer saw them.
pub fn tasks_from_log(
    records: &[LogRecord],
    listings: &HashMap<String, Listing>,
) -> anyhow::Result<Vec<BuyerTasks>> {
    let ledger = Ledger::replay(records, Default::default())
        .map_err(|e| anyhow::anyhow!("replaying log: {e}"))?;
    let mut by_buyer: BTreeMap<String, BuyerTasks> = BTreeMap::new();
    for r in records {
        let LogRecord::ChoiceRecorded {
            session_id,
            item_id,
            event,
            ..
        } = r
        else {
            continue;
        };
        if !event.is_scored() {
            continue;
        }
        let session = &ledger.sessions[session_id];
        let (Some(plan), Some(profile)) = (&session.plan, &session.profile) else {
            bail!("session {session_id} recorded a choice without a plan");
        };
        let item = &plan.items[*item_id];
        let facts = listings
            .get(&item.listing_id)
            .map(attributes_block)
            .unwrap_or_else(|| item.listing_id.clone());
        let entry = by_buyer
            .entry(event.buyer_id.clone())
            .or_insert_with(|| BuyerTasks {
                buyer_id: event.buyer_id.clone(),
                profile: format!(
                    "{}\n{}",
                    profile.general_preferences_text(),
                    profile.feature_preferences_text()
                )
                .trim()
                .to_string(),
                tasks: Vec::new(),
            });
        entry.tasks.push(PairTask {
            seq: event.seq,
            listing: facts,
            text_a: item.a.text.clone(),
            text_b: item.b.text.clone(),
            choice: event.choice,
            strength: event.strength,
            rationale: event.rationale.clone(),
        });
    }
    Ok(by_buyer.into_values().collect())
}

pub fn simulate(ctx: &mut Ctx, a: SimulateArgs) -> anyhow::Result<()> {
    let buyers: Vec<BuyerTasks> = match &a.tasks {
        Some(p) => read_jsonl(&ctx.input(p))?,
        None => {
            let log = a.events.clone().unwrap_or_else(|| {
                ctx.path(SURVEY_DIR)
                    .join(realtor_survey::service::EVENT_LOG_FILE)
            });
            let records = read_log(&ctx.input(&log))?;
            let listings_path = ctx.path(LISTINGS);
            let listings: HashMap<String, Listing> = if listings_path.exists() {
                load_ingested(ctx)?
                    .into_iter()
                    .map(|l| (l.id.clone(), l))
                    .collect()
            } else {
                HashMap::new()
            };
            tasks_from_log(&records, &listings)?
        }
    };
    let jobs: Vec<(&BuyerTasks, usize)> = buyers
        .iter()
        .flat_map(|b| {
            (0..=a.max_shots)
                .filter(|k| *k < b.tasks.len())
                .map(move |k| (b, k))
        })
        .collect();
    ensure!(
        !jobs.is_empty(),
        "no buyer has enough recorded comparisons to simulate"
    );
    let llm = ctx.llm()?;
    let retry = ctx.retry();
    let results = parallel_map(&jobs, ctx.cfg.llm.workers, |(b, k)| {
        simulate_buyer(&b.buyer_id, &b.profile, &b.tasks, *k, llm.as_ref(), &retry)
    });
    let runs: Vec<SimulationRun> = results.into_iter().collect::<Result<_, _>>()?;
    let metrics = simulation_accuracy(&runs)?;
    write_jsonl(&ctx.output(&ctx.path(SIMULATION_RUNS)), &runs)?;
    write_json(&ctx.output(&ctx.path(SIMULATION_METRICS)), &metrics)?;
    println!(
        "{:>5} {:>8} {:>9} {:>6}",
        "shots", "ssa", "variance", "buyers"
    );
    for s in &metrics.ssa {
        println!(
            "{:>5} {:>8.4} {:>9.4} {:>6}",
            s.shots, s.mean, s.variance, s.buyers
        );
    }
    println!("ties excluded: {}", metrics.ties);
    ctx.finish("simulate", args_json(&a))?;
    Ok(())
}

/// Rating of each participant after every scored event.
pub fn elo_series(
    events: &[realtor_core::arena::ComparisonEvent],
    cfg: &realtor_core::arena::EloConfig,
) -> anyhow::Result<Vec<Vec<String>>> {
    let mut table = EloTable::default();
    let mut rows = Vec::new();
    for e in events {
        elo_update(&mut table, e, cfg)?;
        if e.is_scored() {
            for m in [e.model_a.as_str(), e.model_b.as_str()] {
                rows.push(vec![
                    e.seq.to_string(),
                    m.to_string(),
                    format!("{:.6}", table.rating(m, cfg)),
                ]);
            }
        }
    }
    Ok(rows)
}

fn is_survey_log(path: &Path) -> anyhow::Result<bool> {
    use std::io::BufRead;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        return Ok(
            serde_json::from_str::<serde_json::Value>(&line).is_ok_and(|v| v.get("kind").is_some())
        );
    }
    Ok(false)
}

fn write_simulation_series(dir: &Path, m: &SimulationMetrics, ctx: &mut Ctx) -> anyhow::Result<()> {
    let ssa: Vec<Vec<String>> = m
        .ssa
        .iter()
        .map(|s| {
            vec![
                s.shots.to_string(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.variance),
                s.buyers.to_string(),
            ]
        })
        .collect();
    write_csv(
        &ctx.output(&dir.join("ssa_series.csv")),
        &["shots", "mean", "variance", "buyers"],
        &ssa,
    )?;
    let bins: Vec<Vec<String>> = m
        .usa_histogram
        .iter()
        .map(|b| {
            vec![
                format!("{:.1}", b.lo),
                format!("{:.1}", b.hi),
                b.count.to_string(),
            ]
        })
        .collect();
    write_csv(
        &ctx.output(&dir.join("usa_histogram.csv")),
        &["lo", "hi", "count"],
        &bins,
    )?;
    let usa: Vec<Vec<String>> = m
        .usa
        .iter()
        .map(|(b, v)| vec![b.clone(), format!("{v:.6}")])
        .collect();
    write_csv(
        &ctx.output(&dir.join("usa.csv")),
        &["buyer_id", "usa"],
        &usa,
    )?;
    Ok(())
}

pub fn report(ctx: &mut Ctx, a: ReportArgs) -> anyhow::Result<()> {
    let events_path = a.events.clone().unwrap_or_else(|| {
        ctx.path(SURVEY_DIR)
            .join(realtor_survey::service::EVENT_LOG_FILE)
    });
    let events = read_comparison_events(&ctx.input(&events_path))?;
    let elo = ctx.cfg.survey.elo;
    let board: Leaderboard = leaderboard(&events, &elo)?;
    let dir = ctx.path(REPORT_DIR);
    write_json(&ctx.output(&dir.join("leaderboard.json")), &board)?;
    let rows: Vec<Vec<String>> = board
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.6}", r.rating),
                r.games.to_string(),
                r.wins.to_string(),
                r.losses.to_string(),
            ]
        })
        .collect();
    write_csv(
        &ctx.output(&dir.join("leaderboard.csv")),
        &["model", "rating", "games", "wins", "losses"],
        &rows,
    )?;
    let wr: Vec<Vec<String>> = board
        .win_rates
        .iter()
        .map(|p| {
            vec![
                p.model.clone(),
                p.opponent.clone(),
                p.wins.to_string(),
                p.losses.to_string(),
                format!("{:.6}", p.win_rate),
            ]
        })
        .collect();
    write_csv(
        &ctx.output(&dir.join("win_rates.csv")),
        &["model", "opponent", "wins", "losses", "win_rate"],
        &wr,
    )?;
    write_csv(
        &ctx.output(&dir.join("elo_series.csv")),
        &["seq", "model", "rating"],
        &elo_series(&events, &elo)?,
    )?;

    if is_survey_log(&events_path)? {
        let ledger = Ledger::replay(&read_log(&events_path)?, elo)
            .map_err(|e| anyhow::anyhow!("replaying log: {e}"))?;
        let q = ledger.quality_summary();
        write_json(&ctx.output(&dir.join("quality.json")), &q)?;
        println!(
            "sessions {} completed {} rejected at screening {} flagged low-quality {}",
            q.sessions, q.completed, q.rejected, q.low_quality
        );
    }
    let sim_path: Option<PathBuf> = match &a.simulation {
        Some(p) => Some(p.clone()),
        None => Some(ctx.path(SIMULATION_METRICS)).filter(|p| p.exists()),
    };
    if let Some(p) = sim_path {
        let m: SimulationMetrics = read_json(&ctx.input(&p))?;
        write_simulation_series(&dir, &m, ctx)?;
    }

    println!(
        "{:<16} {:>10} {:>6} {:>5} {:>6}",
        "model", "elo", "games", "wins", "losses"
    );
    for r in &board.rows {
        println!(
            "{:<16} {:>10.2} {:>6} {:>5} {:>6}",
            r.model, r.rating, r.games, r.wins, r.losses
        );
    }
    println!(
        "{} comparison events, {} scored",
        events.len(),
        events.iter().filter(|e| e.is_scored()).count()
    );
    ctx.finish("report", args_json(&a))?;
    Ok(())
}

pub fn serve(ctx: &mut Ctx, a: ServeArgs) -> anyhow::Result<()> {
    let bind = a
        .bind
        .clone()
        .unwrap_or_else(|| ctx.cfg.survey.bind.clone());
    let addr: SocketAddr = bind
        .parse()
        .with_context(|| format!("invalid bind address {bind:?}"))?;
    let listings = load_ingested(ctx)?;
    let (llm, embedder) = (ctx.llm()?, ctx.embedder()?);
    let agent = load_agent(ctx, &listings, embedder.as_ref())?;
    let source = AgentSource {
        agent,
        llm,
        embedder,
        decode: ctx.decode(),
        retry: ctx.retry(),
    };
    let s = &ctx.cfg.survey;
    let cfg = ServiceConfig {
        data_dir: ctx.path(SURVEY_DIR),
        seed: ctx.explicit_seed,
        plan: s.plan.clone(),
        elo: s.elo,
        rating_candidates: s.rating_candidates,
    };
    let service = Arc::new(SurveyService::open(cfg, listings, Arc::new(source))?);
    ctx.finish("serve", args_json(&a))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(realtor_survey::http::serve(service, addr, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    }))?;
    Ok(())
}
