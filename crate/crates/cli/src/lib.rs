//! The `realtor` command line: offline pipeline stages and the survey server.

pub mod cli;
pub mod commands;
pub mod config;
pub mod context;
pub mod openai;

pub use cli::{Cli, Command};

/// Runs one parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::Config::load(cli.config.as_deref())?;
    let mut ctx = context::Ctx::new(cfg, cli.data_dir, cli.seed, cli.mock_llm);
    std::fs::create_dir_all(&ctx.data_dir)?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(&mut ctx, a),
        Command::Schema(a) => commands::schema(&mut ctx, a),
        Command::Train(a) => commands::train(&mut ctx, a),
        Command::Generate(a) => commands::generate(&mut ctx, a),
        Command::Factcheck(a) => commands::factcheck(&mut ctx, a),
        Command::Simulate(a) => commands::simulate(&mut ctx, a),
        Command::Report(a) => commands::report(&mut ctx, a),
        Command::Serve(a) => commands::serve(&mut ctx, a),
    }
}
