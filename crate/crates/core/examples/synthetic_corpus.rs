//! Writes a synthetic listing corpus as JSONL to stdout.
//!
//! cargo run -p realtor-core --example synthetic_corpus -- 200 7 > corpus.jsonl

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map(|a| a.parse()).transpose()?.unwrap_or(200);
    let seed = args.next().map(|a| a.parse()).transpose()?.unwrap_or(7);
    let listings = realtor_core::synthetic::listings(n, seed);
    realtor_core::listing::write_listings(std::io::stdout().lock(), &listings)?;
    Ok(())
}
