use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blindpir::harness::{self, OutputFormat, Overrides, RunConfig};
use blindpir::{transcript, RetrievalOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blindpir", version, about = "Multi-user blind secure private information retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print achievable rate, capacity bounds and the partition baseline.
    Plan(Common),
    /// Run a retrieval session and write its transcript.
    Retrieve {
        #[command(flatten)]
        common: Common,
        /// Symbols per message for the random source.
        #[arg(long)]
        symbols: Option<usize>,
        /// Replace the common randomness with zeros.
        #[arg(long)]
        no_common_randomness: bool,
        /// Perturb one answer, given as BLOCK:SERVER (both 1-based).
        #[arg(long, hide = true, value_parser = parse_pair)]
        corrupt_answer: Option<(usize, usize)>,
    },
    /// Run the privacy and security audits.
    Audit(Common),
    /// Time each protocol phase over many blocks.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Field modulus (prime).
    #[arg(long)]
    q: Option<u64>,
    /// Number of servers.
    #[arg(long)]
    n: Option<usize>,
    /// Number of users; single-valued --k and --t are repeated M times.
    #[arg(long)]
    m: Option<usize>,
    /// Number of colluding servers the storage is secure against.
    #[arg(long)]
    x: Option<usize>,
    /// Per-user privacy thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<usize>>,
    /// Per-user index ranges, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Desired indices, 1-based, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<usize>>,
    /// Monte-Carlo draws for inter-user audits beyond the budget.
    #[arg(long)]
    sample: Option<usize>,
    /// Maximum realizations an exact audit may enumerate.
    #[arg(long)]
    budget: Option<u128>,
    #[arg(long)]
    blocks: Option<usize>,
    /// Output file; the transcript for retrieve, the report otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Records,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => OutputFormat::Text,
            Format::Records => OutputFormat::Records,
        }
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected BLOCK:SERVER")?;
    let a: usize = a.parse().map_err(|e| format!("{e}"))?;
    let b: usize = b.parse().map_err(|e| format!("{e}"))?;
    if a == 0 || b == 0 {
        return Err("BLOCK and SERVER are 1-based".into());
    }
    Ok((a, b))
}

impl Common {
    fn load(&self, symbols: Option<usize>) -> blindpir::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            q: self.q,
            n: self.n,
            m: self.m,
            x: self.x,
            t: self.t.clone(),
            k: self.k.clone(),
            theta: self.theta.clone(),
            sample: self.sample,
            budget: self.budget,
            blocks: self.blocks,
            symbols,
        })?;
        Ok(cfg)
    }

    fn emit(&self, text: &str) -> blindpir::Result<()> {
        match &self.out {
            Some(path) => write(path, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn write(path: &Path, text: &str) -> blindpir::Result<()> {
    std::fs::write(path, text).map_err(|e| blindpir::Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> blindpir::Result<bool> {
    match cli.command {
        Command::Plan(c) => {
            let report = harness::cmd_plan(&c.load(None)?)?;
            c.emit(&report.render(c.format.into()))?;
            Ok(true)
        }
        Command::Retrieve {
            common: c,
            symbols,
            no_common_randomness,
            corrupt_answer,
        } => {
            let cfg = c.load(symbols)?;
            let opts = RetrievalOptions {
                without_common_randomness: no_common_randomness,
                corrupt_answer: corrupt_answer.map(|(b, s)| (b - 1, s)),
            };
            let t = harness::cmd_retrieve(&cfg, opts)?;
            match &c.out {
                Some(path) => {
                    transcript::write_file(&t, path)?;
                    print!("{}", harness::retrieve_summary(&t, OutputFormat::Text));
                }
                None => print!("{}", harness::retrieve_summary(&t, c.format.into())),
            }
            if let Err(e) = t.ensure_verified() {
                eprintln!("error: {e}");
                return Ok(false);
            }
            Ok(true)
        }
        Command::Audit(c) => {
            let report = harness::cmd_audit(&c.load(None)?)?;
            c.emit(&report.render(c.format.into()))?;
            for e in report.unexpected() {
                eprintln!("unexpected outcome: {}", e.audit);
            }
            Ok(report.unexpected().is_empty())
        }
        Command::Bench(c) => {
            let report = harness::cmd_bench(&c.load(None)?)?;
            c.emit(&report.render(c.format.into()))?;
            Ok(report.verified)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
