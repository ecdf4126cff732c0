//! Configuration and the four top-level commands: plan, retrieve, audit
//! and bench. Every command returns a report value; rendering to text or
//! line-delimited records is separate so the same report can be printed
//! and persisted.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::privacy::{self, DatabasePrior, Estimate, LeakageReport};
use crate::protocol::{
    decode, encode_storage, gen_queries, gen_user_secret, pack_bytes, retrieve, server_answer, CommonRandomness,
    MessageStore, QueryShare, RetrievalOptions, Transcript,
};
use crate::rng::SeedSchedule;
use crate::scheme::{achievable_rate, CandidateParams, RateReport, SchemeParams};

pub const REPORT_SCHEMA: &str = "blindpir.report/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub n: Option<usize>,
    pub k: Option<Vec<usize>>,
    pub t: Option<Vec<usize>>,
    pub x: Option<usize>,
    pub q: Option<u64>,
    pub f: Option<Vec<u64>>,
    pub alpha: Option<Vec<u64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    #[serde(default)]
    pub master: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageSource {
    #[default]
    Random,
    Inline,
    File,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageSection {
    #[serde(default)]
    pub source: MessageSource,
    /// Symbols per message for the random source; defaults to one block.
    pub symbols: Option<usize>,
    /// Inline messages in row-major index order, each a list of hex symbols.
    pub messages: Option<Vec<Vec<String>>>,
    /// File source: the bytes are split into K equal parts.
    pub path: Option<PathBuf>,
    /// Desired index per user, 1-based; defaults to all ones.
    pub theta: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    Uniform,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    #[serde(default = "default_budget")]
    pub budget: u128,
    /// Monte-Carlo draws for inter-user audits beyond the budget.
    pub sample: Option<usize>,
    /// Also run the |T| = T_m + 1 and |X| = X + 1 probes, which must fail.
    #[serde(default = "yes")]
    pub probes: bool,
    #[serde(default = "default_priors")]
    pub priors: Vec<PriorChoice>,
}

fn default_budget() -> u128 {
    privacy::DEFAULT_BUDGET
}

fn yes() -> bool {
    true
}

fn default_priors() -> Vec<PriorChoice> {
    vec![PriorChoice::Uniform]
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            sample: None,
            probes: true,
            priors: default_priors(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

fn default_blocks() -> usize {
    100
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { blocks: default_blocks() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(default)]
    pub message: MessageSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub bench: BenchSection,
    /// Directory that relative message paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Command-line values that replace config entries when present.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub q: Option<u64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub x: Option<usize>,
    pub t: Option<Vec<usize>>,
    pub k: Option<Vec<usize>>,
    pub theta: Option<Vec<usize>>,
    pub sample: Option<usize>,
    pub budget: Option<u128>,
    pub blocks: Option<usize>,
    pub symbols: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        let s = &mut self.scheme;
        if let Some(v) = o.n {
            s.n = Some(v);
        }
        if let Some(v) = o.q {
            s.q = Some(v);
        }
        if let Some(v) = o.x {
            s.x = Some(v);
        }
        if let Some(v) = &o.k {
            s.k = Some(v.clone());
        }
        if let Some(v) = &o.t {
            s.t = Some(v.clone());
        }
        if let Some(m) = o.m {
            for (name, list) in [("k", &mut s.k), ("t", &mut s.t)] {
                match list {
                    Some(v) if v.len() == 1 => *v = vec![v[0]; m],
                    Some(v) if v.len() != m => {
                        return Err(Error::Config(format!(
                            "--m {m} disagrees with {name} = {v:?}; give one value or exactly {m}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        if let Some(v) = o.seed {
            self.seeds.master = v;
        }
        if let Some(v) = &o.theta {
            self.message.theta = Some(v.clone());
        }
        if let Some(v) = o.symbols {
            self.message.symbols = Some(v);
        }
        if let Some(v) = o.sample {
            self.audit.sample = Some(v);
        }
        if let Some(v) = o.budget {
            self.audit.budget = v;
        }
        if let Some(v) = o.blocks {
            self.bench.blocks = v;
        }
        Ok(())
    }

    pub fn candidate(&self) -> Result<CandidateParams> {
        let s = &self.scheme;
        let missing = |key: &str| Error::Config(format!("missing [scheme] {key} (or --{key})"));
        let k = s.k.clone().ok_or_else(|| missing("k"))?;
        let t = s.t.clone().ok_or_else(|| missing("t"))?;
        Ok(CandidateParams {
            servers: s.n.ok_or_else(|| missing("n"))?,
            k,
            t,
            x: s.x.unwrap_or(0),
            q: s.q.ok_or_else(|| missing("q"))?,
            f: s.f.clone(),
            alpha: s.alpha.clone(),
        })
    }

    pub fn params(&self) -> Result<SchemeParams> {
        self.candidate()?.validate()
    }

    pub fn seeds(&self) -> SeedSchedule {
        SeedSchedule::new(self.seeds.master)
    }

    pub fn thetas(&self, params: &SchemeParams) -> Result<Vec<usize>> {
        let thetas = self.message.theta.clone().unwrap_or_else(|| vec![1; params.users()]);
        if thetas.len() != params.users() {
            return Err(Error::Config(format!(
                "theta lists {} indices but there are {} users",
                thetas.len(),
                params.users()
            )));
        }
        for (m, (&th, &k)) in thetas.iter().zip(params.k()).enumerate() {
            if th == 0 || th > k {
                return Err(Error::Config(format!("theta_{} = {th} is outside [1, {k}]", m + 1)));
            }
        }
        Ok(thetas)
    }

    /// Resolves the message source into a plaintext store.
    pub fn message_store(&self, params: &SchemeParams) -> Result<MessageStore> {
        let f = params.field();
        let count = params.message_count();
        let msg = &self.message;
        match msg.source {
            MessageSource::Random => {
                let symbols = msg.symbols.unwrap_or(params.l());
                Ok(MessageStore::random(f, params.k(), symbols, &mut self.seeds().database()))
            }
            MessageSource::Inline => {
                let raw = msg
                    .messages
                    .as_ref()
                    .ok_or_else(|| Error::Config("[message] source = \"inline\" needs messages".into()))?;
                if raw.len() != count {
                    return Err(Error::Config(format!(
                        "inline source lists {} messages, K = {count}",
                        raw.len()
                    )));
                }
                let messages = raw
                    .iter()
                    .map(|m| m.iter().map(|s| f.from_hex(s)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Config(format!("inline message: {e}")))?;
                MessageStore::new(f, params.k(), messages).map_err(|e| Error::Config(e.to_string()))
            }
            MessageSource::File => {
                let path = msg
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("[message] source = \"file\" needs path".into()))?;
                let path = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let bytes = std::fs::read(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                if bytes.len() % count != 0 {
                    return Err(Error::Config(format!(
                        "{} has {} bytes, not divisible into K = {count} messages",
                        path.display(),
                        bytes.len()
                    )));
                }
                let chunk = bytes.len() / count;
                let messages = (0..count)
                    .map(|i| pack_bytes(f, &bytes[i * chunk..(i + 1) * chunk]))
                    .collect();
                MessageStore::new(f, params.k(), messages)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Text,
    Records,
}

fn params_line(p: &SchemeParams) -> String {
    format!(
        "N={} M={} K={:?} T={:?} X={} q={} L={}",
        p.servers(),
        p.users(),
        p.k(),
        p.t(),
        p.x(),
        p.field().modulus(),
        p.l()
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReport {
    pub schema: String,
    pub version: String,
    pub params: CandidateParams,
    pub l: usize,
    pub rates: RateReport,
    pub improvement_percent: Option<f64>,
}

pub fn cmd_plan(config: &RunConfig) -> Result<PlanReport> {
    let p = config.params()?;
    let rates = RateReport::for_params(&p)?;
    Ok(PlanReport {
        schema: REPORT_SCHEMA.into(),
        version: VERSION.into(),
        params: p.candidate(),
        l: p.l(),
        improvement_percent: rates.improvement_over_baseline(),
        rates,
    })
}

impl PlanReport {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Records => record_line("plan", self),
            OutputFormat::Text => {
                let p = self.params.validate().expect("report params are validated");
                let r = &self.rates;
                let mut s = String::new();
                writeln!(s, "parameters: {}", params_line(&p)).unwrap();
                writeln!(s, "achievable rate: {}", r.achievable_rate).unwrap();
                if let Some(c) = &r.db_asymptotic_capacity {
                    writeln!(s, "two-user asymptotic capacity: {c}").unwrap();
                }
                writeln!(s, "capacity bounds: [{}, {}]", r.lower_bound, r.upper_bound).unwrap();
                if let (Some(b), Some(pct)) = (r.baseline_rate, self.improvement_percent) {
                    writeln!(s, "partition baseline: {b:.6} (achievable rate is {pct:.0}% higher)").unwrap();
                }
                s
            }
        }
    }
}

/// One JSON object per line with the `record` tag as its first key.
fn record_line<T: Serialize>(tag: &str, value: &T) -> String {
    let body = serde_json::to_string(value).expect("reports serialize");
    let rest = body.strip_prefix('{').expect("reports are objects");
    let sep = if rest == "}" { "" } else { "," };
    format!("{{\"record\":\"{tag}\"{sep}{rest}\n")
}

fn parse_record<T: for<'de> Deserialize<'de>>(tag: &str, line: &str) -> Result<T> {
    let prefix = format!("{{\"record\":\"{tag}\",");
    let rest = line
        .trim()
        .strip_prefix(&prefix)
        .ok_or_else(|| Error::Record(format!("expected a {tag} record")))?;
    Ok(serde_json::from_str(&format!("{{{rest}"))?)
}

impl PlanReport {
    pub fn parse(line: &str) -> Result<Self> {
        parse_record("plan", line.trim_end())
    }
}

/// Runs a full retrieval session; the transcript records whether the
/// decoded message matched the plaintext.
pub fn cmd_retrieve(config: &RunConfig, opts: RetrievalOptions) -> Result<Transcript> {
    let p = config.params()?;
    let thetas = config.thetas(&p)?;
    let store = config.message_store(&p)?;
    retrieve(&p, &store, &thetas, config.seeds(), opts)
}

pub fn retrieve_summary(t: &Transcript, format: OutputFormat) -> String {
    let rate = t.rate().map_or("n/a".to_string(), |r| r.to_string());
    match format {
        OutputFormat::Text => format!(
            "parameters: {}\nblocks: {}\ndownloaded symbols: {}\nrate: {}\nverified: {}\n",
            params_line(&t.params),
            t.blocks.len(),
            t.download_count(),
            rate,
            match t.verified {
                Some(true) => "yes",
                Some(false) => "NO",
                None => "n/a",
            }
        ),
        OutputFormat::Records => crate::transcript::to_jsonl(t),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Pass,
    /// Tightness probe: the audit is expected to fail.
    Fail,
    /// Informational: leakage is reported, not judged.
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub audit: String,
    pub expected: Expectation,
    pub passed: bool,
    pub unexpected: bool,
    pub enumerated: Option<u64>,
    pub leakage: Option<LeakageReport>,
    pub detail: String,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditHeader {
    pub schema: String,
    pub version: String,
    pub params: CandidateParams,
    pub master_seed: u64,
    pub budget: u128,
    pub sample: Option<usize>,
    /// The prior over W is an audit choice, not part of the scheme.
    pub priors: Vec<PriorChoice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub header: AuditHeader,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn unexpected(&self) -> Vec<&AuditEntry> {
        self.entries.iter().filter(|e| e.unexpected).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = record_line("audit_header", &self.header);
        for e in &self.entries {
            out.push_str(&record_line("audit", e));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = parse_record("audit_header", lines.next().ok_or_else(|| Error::Record("empty report".into()))?)?;
        let entries = lines.map(|l| parse_record("audit", l)).collect::<Result<_>>()?;
        Ok(Self { header, entries })
    }

    pub fn render(&self, format: OutputFormat) -> String {
        if format == OutputFormat::Records {
            return self.to_jsonl();
        }
        let p = self.header.params.validate().expect("report params are validated");
        let mut s = format!("parameters: {}\n", params_line(&p));
        for (title, pick) in [
            ("audits", Expectation::Pass),
            ("expected failures (tightness probes)", Expectation::Fail),
            ("leakage without common randomness", Expectation::Report),
        ] {
            let rows: Vec<&AuditEntry> = self.entries.iter().filter(|e| e.expected == pick).collect();
            if rows.is_empty() {
                continue;
            }
            writeln!(s, "{title}:").unwrap();
            for e in rows {
                let verdict = if e.passed { "PASS" } else { "FAIL" };
                let flag = if e.unexpected { "  <-- unexpected" } else { "" };
                writeln!(s, "  {verdict}  {}  {}{flag}", e.audit, e.detail).unwrap();
            }
        }
        let bad = self.unexpected().len();
        writeln!(s, "{}", if bad == 0 { "all outcomes as expected".to_string() } else { format!("{bad} unexpected outcome(s)") }).unwrap();
        s
    }
}

fn leakage_detail(r: &LeakageReport) -> String {
    let mut s = format!("MI = {:.6e} q-ary units", r.mi);
    match &r.estimate {
        Estimate::Exact { realizations, exact_zero } => {
            write!(s, " (exact, {realizations} realizations{})", if *exact_zero { ", exactly zero" } else { "" }).unwrap();
        }
        Estimate::Sampled { samples, null_std, .. } => {
            write!(s, " (sampled, {samples} draws, +/- {:.2e} at 3 sigma)", 3.0 * null_std).unwrap();
        }
    }
    if let Some(b) = r.bound {
        write!(s, ", bound {b:.6}").unwrap();
    }
    write!(s, ", prior {}", r.prior).unwrap();
    s
}

/// Runs T-privacy, X-security and inter-user audits for the configured
/// scheme, plus the tightness probes when enabled.
pub fn cmd_audit(config: &RunConfig) -> Result<AuditReport> {
    let p = config.params()?;
    let budget = config.audit.budget;
    let mut entries = Vec::new();
    let mut push = |audit: String, expected: Expectation, passed: bool, enumerated: Option<u64>, leakage: Option<LeakageReport>, detail: String, start: Instant| {
        let unexpected = match expected {
            Expectation::Pass => !passed,
            Expectation::Fail => passed,
            Expectation::Report => false,
        };
        entries.push(AuditEntry {
            audit,
            expected,
            passed,
            unexpected,
            enumerated,
            leakage,
            detail,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    };

    for m in 1..=p.users() {
        let tm = p.t()[m - 1];
        let start = Instant::now();
        let mut all = true;
        let mut enumerated = 0;
        let sets = privacy::subsets(p.servers(), tm);
        for s in &sets {
            let v = privacy::audit_t_privacy(&p, m, s, budget)?;
            enumerated += v.enumerated;
            all &= v.passed;
        }
        push(
            format!("t-privacy user {m}, all {} sets of {tm} servers", sets.len()),
            Expectation::Pass,
            all,
            Some(enumerated),
            None,
            "query distributions identical across indices".into(),
            start,
        );
        if config.audit.probes && tm < p.servers() {
            let start = Instant::now();
            let mut witness = None;
            let mut enumerated = 0;
            for s in privacy::subsets(p.servers(), tm + 1) {
                let v = privacy::audit_t_privacy(&p, m, &s, budget)?;
                enumerated += v.enumerated;
                if !v.passed {
                    witness = Some(s);
                    break;
                }
            }
            push(
                format!("t-privacy user {m}, {} colluding servers", tm + 1),
                Expectation::Fail,
                witness.is_none(),
                Some(enumerated),
                None,
                witness.map_or("no subset distinguishes the index".into(), |s| format!("servers {s:?} distinguish the index")),
                start,
            );
        }
    }

    if p.x() > 0 {
        let start = Instant::now();
        let mut all = true;
        let mut enumerated = 0;
        let sets = privacy::subsets(p.servers(), p.x());
        for s in &sets {
            let v = privacy::audit_x_security(&p, s, budget)?;
            enumerated += v.enumerated;
            all &= v.passed;
        }
        push(
            format!("x-security, all {} sets of {} servers", sets.len(), p.x()),
            Expectation::Pass,
            all,
            Some(enumerated),
            None,
            "share distributions identical for two databases".into(),
            start,
        );
    }
    if config.audit.probes && p.x() < p.servers() {
        let start = Instant::now();
        let s: Vec<usize> = (1..=p.x() + 1).collect();
        let v = privacy::audit_x_security(&p, &s, budget)?;
        push(
            format!("x-security, {} colluding servers", p.x() + 1),
            Expectation::Fail,
            v.passed,
            Some(v.enumerated),
            None,
            v.detail,
            start,
        );
    }

    for &prior_choice in &config.audit.priors {
        let prior = match prior_choice {
            PriorChoice::Uniform => DatabasePrior::Uniform,
            PriorChoice::Fixed => DatabasePrior::Fixed(privacy::demo_database(&p)),
        };
        for m in 1..=p.users() {
            for common in [true, false] {
                let start = Instant::now();
                let report = match privacy::audit_inter_user_privacy(&p, m, common, &prior, budget) {
                    Ok(r) => r,
                    Err(Error::BudgetExceeded { .. }) if config.audit.sample.is_some() => {
                        let n = config.audit.sample.expect("checked");
                        privacy::sample_inter_user_privacy(&p, m, common, &prior, n, config.seeds.master)?
                    }
                    Err(e) => return Err(e),
                };
                let (expected, passed) = if common {
                    let ok = report.exact_zero().unwrap_or(report.mi <= report.uncertainty());
                    (Expectation::Pass, ok)
                } else {
                    match report.within_bound() {
                        Some(ok) => (Expectation::Pass, ok),
                        None => (Expectation::Report, true),
                    }
                };
                let name = if common {
                    format!("inter-user privacy, observer {m}, common randomness")
                } else {
                    format!("inter-user leakage, observer {m}, no common randomness")
                };
                let enumerated = match report.estimate {
                    Estimate::Exact { realizations, .. } => Some(realizations),
                    Estimate::Sampled { .. } => None,
                };
                push(name, expected, passed, enumerated, Some(report.clone()), leakage_detail(&report), start);
            }
        }
    }

    Ok(AuditReport {
        header: AuditHeader {
            schema: REPORT_SCHEMA.into(),
            version: VERSION.into(),
            params: p.candidate(),
            master_seed: config.seeds.master,
            budget,
            sample: config.audit.sample,
            priors: config.audit.priors.clone(),
        },
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub schema: String,
    pub version: String,
    pub params: CandidateParams,
    pub master_seed: u64,
    pub blocks: usize,
    pub encode_seconds: f64,
    pub query_seconds: f64,
    /// Per server, summed over blocks.
    pub answer_seconds: Vec<f64>,
    pub decode_seconds: f64,
    pub symbols_retrieved: usize,
    pub symbols_downloaded: usize,
    pub bytes_downloaded: usize,
    pub rate: String,
    pub throughput_symbols_per_second: f64,
    pub verified: bool,
}

impl BenchReport {
    pub fn parse(line: &str) -> Result<Self> {
        parse_record("bench", line.trim_end())
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Records => record_line("bench", self),
            OutputFormat::Text => {
                let p = self.params.validate().expect("report params are validated");
                let answers: f64 = self.answer_seconds.iter().sum();
                format!(
                    "parameters: {}\nblocks: {}\nencode: {:.6} s\nqueries: {:.6} s\nanswers: {:.6} s over {} servers\ndecode: {:.6} s\nretrieved symbols: {}\ndownloaded symbols: {} ({} bytes)\nrate: {}\nthroughput: {:.1} symbols/s\nverified: {}\n",
                    params_line(&p),
                    self.blocks,
                    self.encode_seconds,
                    self.query_seconds,
                    answers,
                    self.answer_seconds.len(),
                    self.decode_seconds,
                    self.symbols_retrieved,
                    self.symbols_downloaded,
                    self.bytes_downloaded,
                    self.rate,
                    self.throughput_symbols_per_second,
                    if self.verified { "yes" } else { "NO" }
                )
            }
        }
    }
}

/// Times each protocol phase over `config.bench.blocks` random blocks.
pub fn cmd_bench(config: &RunConfig) -> Result<BenchReport> {
    let p = config.params()?;
    let seeds = config.seeds();
    let thetas = config.thetas(&p)?;
    let blocks = config.bench.blocks;
    let store = MessageStore::random(p.field(), p.k(), blocks * p.l(), &mut seeds.database());

    let t0 = Instant::now();
    let queries: Vec<Vec<QueryShare>> = thetas
        .iter()
        .enumerate()
        .map(|(m, &th)| gen_queries(&p, &gen_user_secret(&p, m + 1, th, &mut seeds.user(m + 1))?))
        .collect::<Result<_>>()?;
    let query_seconds = t0.elapsed().as_secs_f64();

    let mut encode_seconds = 0.0;
    let mut decode_seconds = 0.0;
    let mut answer_seconds = vec![0.0; p.servers()];
    let mut decoded: Vec<FieldElement> = Vec::with_capacity(blocks * p.l());
    let mut downloaded = 0;
    let total = Instant::now();
    for b in 0..blocks {
        let db = store.block(&p, b)?;
        let t = Instant::now();
        let storage = encode_storage(&p, &db, &mut seeds.storage(b))?;
        encode_seconds += t.elapsed().as_secs_f64();
        let cr = CommonRandomness::draw(&p, &mut seeds.common(b));
        let mut answers = Vec::with_capacity(p.servers());
        for s in &storage {
            let t = Instant::now();
            let qs: Vec<&QueryShare> = queries.iter().map(|q| &q[s.server - 1]).collect();
            answers.push(server_answer(&p, s, &qs, &cr)?);
            answer_seconds[s.server - 1] += t.elapsed().as_secs_f64();
        }
        downloaded += answers.len();
        let t = Instant::now();
        decoded.extend(decode(&p, &answers)?);
        decode_seconds += t.elapsed().as_secs_f64();
    }
    let elapsed = total.elapsed().as_secs_f64() + query_seconds;
    let retrieved = blocks * p.l();
    let rate = if downloaded == 0 {
        achievable_rate(&p)
    } else {
        num_rational::BigRational::new((retrieved as i64).into(), (downloaded as i64).into())
    };
    Ok(BenchReport {
        schema: REPORT_SCHEMA.into(),
        version: VERSION.into(),
        params: p.candidate(),
        master_seed: config.seeds.master,
        blocks,
        encode_seconds,
        query_seconds,
        answer_seconds,
        decode_seconds,
        symbols_retrieved: retrieved,
        symbols_downloaded: downloaded,
        bytes_downloaded: downloaded * p.field().hex_width() / 2,
        rate: rate.to_string(),
        throughput_symbols_per_second: if elapsed > 0.0 { retrieved as f64 / elapsed } else { 0.0 },
        verified: decoded.as_slice() == store.message(&thetas)?,
    })
}
