//! `pubtrend` command-line front end.
//!
//! Each subcommand writes headered CSV tables plus one `metadata.toml` into
//! `--output-dir`; without it the main table goes to stdout.
//!
//! Exit codes: 0 success, 1 validation error, 2 computation error, 3 I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use pubtrend::harvester::{self, Cache, HarvestError, QueryPlan};
use pubtrend::metrics::{self, MetricsError};
use pubtrend::report::{self, FitMeta, KnotMeta, ReportError, ReportOptions, TOOLKIT_VERSION};
use pubtrend::synth::{self, GrowthSpec, HeterogeneousSpec, SynthError};
use pubtrend::trendfit::{self, FitError, FitResult};
use pubtrend::{ColumnMapping, Corpus, CorpusError, EntityId};

#[derive(Parser)]
#[command(name = "pubtrend", version, about = "Publication-count trend analysis")]
struct Cli {
    /// Input corpus CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Directory for output tables and metadata.toml.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    leader: Option<String>,
    #[arg(long, global = true)]
    follower: Option<String>,
    /// Overrides the seed of a synth config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config: column mapping (ingest), query plan (harvest), growth spec (synth).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a count table and write it in canonical form.
    Ingest,
    /// Execute a query plan against its endpoint.
    Harvest,
    /// Generate a synthetic corpus from a growth spec.
    Synth,
    /// Fit a trend model.
    Fit {
        #[arg(long, value_enum, default_value_t = Model::Loglinear)]
        model: Model,
        /// `auto` uses the leader/follower crossing year.
        #[arg(long, default_value = "auto")]
        knot: String,
        /// Entity for volume models; defaults to the leader (loglinear) or follower (hinge).
        #[arg(long)]
        entity: Option<String>,
    },
    /// Per-keyword lag table and mean lag series.
    Lag,
    /// Year-by-year total variation distance matrix.
    Tvd,
    /// Keyword-share entropy per year.
    Entropy {
        /// Restrict to these entities; default is all.
        #[arg(long)]
        entity: Vec<String>,
    },
    /// Full report bundle for a leader/follower pair.
    Report {
        /// Year of the single-year share table; default is the latest common year.
        #[arg(long)]
        bar_year: Option<i32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Loglinear,
    Hinge,
    Lag,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Computation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Computation(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Computation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Corpus(c) => c.into(),
            MetricsError::InvalidDistribution(_) | MetricsError::KeywordMismatch => {
                CliError::Computation(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Computation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Corpus(c) => c.into(),
            SynthError::Overflow { .. } => CliError::Computation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<HarvestError> for CliError {
    fn from(e: HarvestError) -> Self {
        match e {
            HarvestError::Corpus(c) => c.into(),
            HarvestError::Io(_) | HarvestError::Unreachable(_) => CliError::Io(e.to_string()),
            HarvestError::MissingCells(_) => CliError::Computation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Corpus(c) => c.into(),
            ReportError::Metrics(m) => m.into(),
            ReportError::Fit(f) => f.into(),
            ReportError::Io(io) => io.into(),
            ReportError::Invalid(m) => CliError::Validation(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest => cmd_ingest(cli),
        Command::Harvest => cmd_harvest(cli),
        Command::Synth => cmd_synth(cli),
        Command::Fit { model, knot, entity } => cmd_fit(cli, *model, knot, entity.as_deref()),
        Command::Lag => cmd_lag(cli),
        Command::Tvd => cmd_tvd(cli),
        Command::Entropy { entity } => cmd_entropy(cli, entity),
        Command::Report { bar_year } => cmd_report(cli, *bar_year),
    }
}

fn require<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| CliError::Validation(format!("--{flag} is required")))
}

fn entity(name: &str) -> Result<EntityId> {
    Ok(EntityId::new(name)?)
}

fn read_config(cli: &Cli) -> Result<Option<String>> {
    match &cli.config {
        Some(p) => Ok(Some(fs::read_to_string(p).map_err(|e| {
            CliError::Io(format!("{}: {e}", p.display()))
        })?)),
        None => Ok(None),
    }
}

fn load_corpus(cli: &Cli) -> Result<Corpus> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| CliError::Validation("--input is required".into()))?;
    Ok(Corpus::load(path, &ColumnMapping::default())?)
}

fn base_meta(command: &str, corpus: &Corpus) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("command".into(), command.into());
    t.insert("toolkit_version".into(), TOOLKIT_VERSION.into());
    t.insert("corpus_sha256".into(), corpus.fingerprint().into());
    t
}

/// Writes `tables` and metadata into the output dir, or prints the first table.
fn emit(cli: &Cli, tables: &[(&str, String)], meta: &toml::Table) -> Result<()> {
    match &cli.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in tables {
                write_file(dir, name, body)?;
            }
            let text = toml::to_string(meta).map_err(|e| CliError::Computation(e.to_string()))?;
            write_file(dir, "metadata.toml", &text)?;
        }
        None => {
            if let Some((_, body)) = tables.first() {
                print!("{body}");
            }
        }
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn summary(corpus: &Corpus) -> String {
    let mut s = String::new();
    for e in corpus.entities() {
        let (a, b) = corpus.year_range(e).expect("listed entity");
        s.push_str(&format!("entity {e}: years {a}-{b}\n"));
    }
    s.push_str(&format!("keywords: {}\n", corpus.n_keywords()));
    s.push_str(&format!("sha256: {}\n", corpus.fingerprint()));
    s
}

fn cmd_ingest(cli: &Cli) -> Result<()> {
    let mapping = match read_config(cli)? {
        Some(text) => toml::from_str::<ColumnMapping>(&text)
            .map_err(|e| CliError::Validation(format!("column mapping: {e}")))?,
        None => ColumnMapping::default(),
    };
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| CliError::Validation("--input is required".into()))?;
    let corpus = Corpus::load(path, &mapping)?;
    print!("{}", summary(&corpus));
    if let Some(dir) = &cli.output_dir {
        let mut meta = base_meta("ingest", &corpus);
        meta.insert("source".into(), path.display().to_string().into());
        meta.insert("n_keywords".into(), (corpus.n_keywords() as i64).into());
        emit(cli, &[("corpus.csv", corpus.to_csv_string())], &meta)?;
        info!("canonical corpus written to {}", dir.display());
    }
    Ok(())
}

fn cmd_harvest(cli: &Cli) -> Result<()> {
    let text = read_config(cli)?.ok_or_else(|| CliError::Validation("--config <plan.toml> is required".into()))?;
    let plan = QueryPlan::from_toml(&text)?;
    plan.validate()?;
    let transport = harvester::transport_for(&plan)?;
    let cache = plan.cache_dir.as_ref().map(Cache::open).transpose()?;
    let harvest = harvester::execute_plan(&plan, transport.as_ref(), cache.as_ref())?;
    let corpus = harvest.to_corpus(plan.missing_policy)?;
    let n_missing = harvest.missing().count();
    println!(
        "{} cells, {} missing, {} transport calls",
        harvest.rows.len(),
        n_missing,
        harvest.transport_calls
    );
    for n in &harvest.notes {
        println!("note: {n}");
    }
    match &cli.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let prov = dir.join("provenance.csv");
            if prov.exists() {
                fs::remove_file(&prov)?;
            }
            harvest.append_provenance(&prov)?;
            let mut meta = base_meta("harvest", &corpus);
            meta.insert("cells".into(), (harvest.rows.len() as i64).into());
            meta.insert("missing".into(), (n_missing as i64).into());
            meta.insert("transport_calls".into(), (harvest.transport_calls as i64).into());
            meta.insert(
                "notes".into(),
                toml::Value::Array(harvest.notes.iter().map(|n| n.clone().into()).collect()),
            );
            emit(cli, &[("corpus.csv", corpus.to_csv_string())], &meta)
        }
        None => {
            print!("{}", corpus.to_csv_string());
            Ok(())
        }
    }
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    let text = read_config(cli)?.ok_or_else(|| CliError::Validation("--config <spec.toml> is required".into()))?;
    let raw: toml::Table = toml::from_str(&text).map_err(|e| CliError::Validation(format!("growth spec: {e}")))?;
    let mut spec = if raw.contains_key("regimes") {
        HeterogeneousSpec::from_toml(&text)?.expand()?
    } else {
        GrowthSpec::from_toml(&text)?
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let corpus = synth::generate_corpus(&spec)?;
    let mut meta = base_meta("synth", &corpus);
    meta.insert("seed".into(), toml::Value::Integer(spec.seed as i64));
    meta.insert("rng".into(), synth::RNG_ALGORITHM.into());
    emit(cli, &[("corpus.csv", corpus.to_csv_string())], &meta)
}

fn fit_meta_value(meta: &FitMeta) -> Result<toml::Value> {
    toml::Value::try_from(meta).map_err(|e| CliError::Computation(e.to_string()))
}

fn cmd_fit(cli: &Cli, model: Model, knot: &str, entity_flag: Option<&str>) -> Result<()> {
    let corpus = load_corpus(cli)?;
    let mut meta = base_meta("fit", &corpus);
    let (label, fit): (String, FitResult) = match model {
        Model::Loglinear => {
            let name = match entity_flag {
                Some(n) => n,
                None => require(&cli.leader, "leader")?,
            };
            let e = entity(name)?;
            (format!("loglinear:{e}"), trendfit::fit_volume_loglinear(&corpus.total_volume(&e)?)?)
        }
        Model::Hinge => {
            let name = match entity_flag {
                Some(n) => n,
                None => require(&cli.follower, "follower")?,
            };
            let e = entity(name)?;
            let series = corpus.total_volume(&e)?;
            let y0 = if knot == "auto" {
                let leader = entity(require(&cli.leader, "leader")?)?;
                let k = trendfit::crossing_year(&corpus.total_volume(&leader)?, &series)?;
                meta.insert(
                    "knot".into(),
                    toml::Value::try_from(KnotMeta::from(&k)).map_err(|e| CliError::Computation(e.to_string()))?,
                );
                k.y0
            } else {
                knot.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Validation(format!("--knot must be `auto` or a year, got `{knot}`")))?
            };
            (format!("hinge:{e}"), trendfit::fit_volume_hinge(&series, y0)?)
        }
        Model::Lag => {
            let l = entity(require(&cli.leader, "leader")?)?;
            let f = entity(require(&cli.follower, "follower")?)?;
            let series = metrics::mean_lag(&corpus, &l, &f)?;
            (format!("lag:{l}-{f}"), trendfit::fit_lag_linear(&series)?)
        }
    };
    meta.insert("fit".into(), fit_meta_value(&FitMeta::new(&label, &fit))?);
    let table = report::fit_table(&corpus.fingerprint(), &[(label, &fit)]);
    emit(cli, &[("fit.csv", table)], &meta)
}

fn cmd_lag(cli: &Cli) -> Result<()> {
    let corpus = load_corpus(cli)?;
    let l = entity(require(&cli.leader, "leader")?)?;
    let f = entity(require(&cli.follower, "follower")?)?;
    let table = metrics::lag_table(&corpus, &l, &f)?;
    let fp = corpus.fingerprint();
    let mut meta = base_meta("lag", &corpus);
    meta.insert("leader".into(), l.to_string().into());
    meta.insert("follower".into(), f.to_string().into());
    emit(
        cli,
        &[
            ("lag.csv", report::lag_csv(&fp, &table)),
            ("mean_lag.csv", report::mean_lag_csv(&fp, &table.mean_lag())),
        ],
        &meta,
    )
}

fn cmd_tvd(cli: &Cli) -> Result<()> {
    let corpus = load_corpus(cli)?;
    let row = entity(require(&cli.leader, "leader")?)?;
    let col = match &cli.follower {
        Some(n) => entity(n)?,
        None => row.clone(),
    };
    let m = metrics::tvd_matrix(&corpus, &row, &col)?;
    let mut meta = base_meta("tvd", &corpus);
    meta.insert("entity_row".into(), row.to_string().into());
    meta.insert("entity_col".into(), col.to_string().into());
    let (r, c) = m.shape();
    meta.insert("shape".into(), toml::Value::Array(vec![(r as i64).into(), (c as i64).into()]));
    emit(cli, &[("tvd.csv", report::tvd_table(&corpus.fingerprint(), &m))], &meta)
}

fn cmd_entropy(cli: &Cli, names: &[String]) -> Result<()> {
    let corpus = load_corpus(cli)?;
    let entities: Vec<EntityId> = if names.is_empty() {
        corpus.entities().cloned().collect()
    } else {
        names.iter().map(|n| entity(n)).collect::<Result<_>>()?
    };
    let series = entities
        .iter()
        .map(|e| metrics::entropy_series(&corpus, e))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut meta = base_meta("entropy", &corpus);
    meta.insert("units".into(), "nats".into());
    meta.insert("max_entropy".into(), (corpus.n_keywords() as f64).ln().into());
    emit(cli, &[("entropy.csv", report::entropy_table(&corpus.fingerprint(), &series))], &meta)
}

fn cmd_report(cli: &Cli, bar_year: Option<i32>) -> Result<()> {
    let corpus = load_corpus(cli)?;
    let l = entity(require(&cli.leader, "leader")?)?;
    let f = entity(require(&cli.follower, "follower")?)?;
    let dir = cli
        .output_dir
        .as_ref()
        .ok_or_else(|| CliError::Validation("--output-dir is required".into()))?;
    let opts = ReportOptions {
        share_bar_year: bar_year,
        ..ReportOptions::default()
    };
    let bundle = report::build_report(&corpus, &l, &f, &opts)?;
    bundle.write(dir)?;
    for s in &bundle.metadata.stages {
        match &s.reason {
            Some(r) => println!("{}: {} ({r})", s.name, s.status),
            None => println!("{}: {}", s.name, s.status),
        }
    }
    println!("wrote {} files to {}", bundle.files.len() + 1, dir.display());
    Ok(())
}
