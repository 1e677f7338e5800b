use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "realtor",
    version,
    about = "Grounded listing descriptions and their evaluation"
)]
pub struct Cli {
    /// TOML configuration file; environment variables override it.
    #[arg(long, global = true, env = "REALTOR_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding inputs and outputs of every stage.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Use the offline deterministic model and embedder instead of an API.
    #[arg(long, global = true)]
    pub mock_llm: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate listing records and store the good ones.
    Ingest(IngestArgs),
    /// Install, induce, review or show the feature schema.
    Schema(SchemaArgs),
    /// Label features, train the attribute-to-feature mapping, build the peer index.
    Train(TrainArgs),
    /// Generate descriptions for listings and variants.
    Generate(GenerateArgs),
    /// Fact-check generated (and optionally original) descriptions.
    Factcheck(FactcheckArgs),
    /// Predict buyers' recorded choices with the language model.
    Simulate(SimulateArgs),
    /// Leaderboard, win rates, simulation accuracy and quality flags.
    Report(ReportArgs),
    /// Run the survey service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Listing records, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SchemaArgs {
    /// Induce a schema from listing descriptions instead of installing the shipped one.
    #[arg(long)]
    pub induce: bool,
    /// Minimum number of descriptions a keyword must appear in.
    #[arg(long, default_value_t = realtor_core::schema::DEFAULT_FREQUENCY_FLOOR)]
    pub frequency_floor: usize,
    /// Keywords per induction prompt.
    #[arg(long, default_value_t = realtor_core::schema::DEFAULT_INDUCTION_BATCH)]
    pub batch_size: usize,
    /// Set a leaf's review status, e.g. `--review "walk-in closet=approved"`.
    #[arg(long, value_name = "LEAF=STATUS")]
    pub review: Vec<String>,
    /// Print the schema outline.
    #[arg(long)]
    pub show: bool,
    /// Replace an existing schema with the shipped one.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training epochs; overrides the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Gradient-descent step size; overrides the config.
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Comma-separated variants.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "AI_REALTOR,NO_SURPRISAL,ONLY_SIGNALING,VANILLA,CONTROL_PLAIN"
    )]
    pub variants: Vec<String>,
    /// Listing records to describe; defaults to the ingested listings.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Only these listing ids.
    #[arg(long, value_delimiter = ',')]
    pub listings: Vec<String>,
    /// At most this many listings.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Buyer profile (JSON) for personalized variants.
    #[arg(long)]
    pub buyer: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FactcheckArgs {
    /// Description records; defaults to the generated ones.
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    /// Also check each listing's original description.
    #[arg(long)]
    pub include_original: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Survey event log; defaults to the service's log under the data directory.
    #[arg(long, conflicts_with = "tasks")]
    pub events: Option<PathBuf>,
    /// Buyer task file: one `{buyer_id, profile, tasks}` object per line.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Largest number of in-context examples.
    #[arg(long, default_value_t = 9)]
    pub max_shots: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Survey event log or a file of comparison events.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Simulation metrics to include; defaults to the last `simulate` output if present.
    #[arg(long)]
    pub simulation: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Address to listen on; overrides the config and REALTOR_BIND.
    #[arg(long)]
    pub bind: Option<String>,
}
