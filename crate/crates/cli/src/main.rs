use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cognistream::config::RunConfig;
use cognistream::dpu::{contiguous_split, SimSettings, Topology, TopologyConfig, World};
use cognistream::forecast::{classify, predict, Method};
use cognistream::hypotheses::HypothesisState;
use cognistream::pipeline::{self, Analysis};
use cognistream::queries::{self, Mode};
use cognistream::relevancy::Subject;
use cognistream::store::StreamStore;
use cognistream::{structures, Exec, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONFIG_ENV: &str = "COGNISTREAM_CONFIG";
const DEFAULT_STORE: &str = "cognistream-store";
const BOOSTS: &str = "boosts.log";
const HYPOTHESES: &str = "hypotheses.log";

#[derive(Parser)]
#[command(
    name = "cognistream",
    version,
    about = "Schema-free mining and generalization over raw byte streams"
)]
struct Cli {
    /// Config file; falls back to $COGNISTREAM_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store directory; overrides the config's [store] path.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Run without the rayon thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Append a file to the store as one segment.
    Ingest {
        file: PathBuf,
        /// Defaults to the last timestamp plus one.
        #[arg(long)]
        timestamp: Option<u64>,
        #[arg(long, default_value = "")]
        tag: String,
    },
    /// Pattern dictionary.
    Mine,
    /// Deduplicated structures.
    Structures,
    /// Notion hierarchy.
    Generalize,
    /// Relevancy table.
    Relevancy,
    /// Synthesize hypotheses and replay the held-out windows against them.
    Hypothesize,
    /// mine, structures, generalize, relevancy and hypothesize in one pass.
    Cycle,
    /// Answer keyword queries, one per line, from a file or stdin.
    Query(QueryArgs),
    /// Predict the next value of a template slot.
    Forecast {
        #[arg(long)]
        template: String,
        #[arg(long)]
        position: usize,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Simulate a matrix of processing units over the stored segments.
    DpuSim {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        rounds: u64,
        /// Random keyword queries injected after local mining.
        #[arg(long, default_value_t = 0)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summary counts for the store.
    Report,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, conflicts_with = "narrow")]
    broaden: bool,
    #[arg(long)]
    narrow: bool,
    file: Option<PathBuf>,
}

enum Failure {
    Data(cognistream::Error),
    Io(String),
}

impl From<cognistream::Error> for Failure {
    fn from(e: cognistream::Error) -> Self {
        Failure::Data(e)
    }
}

macro_rules! from_module {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.into())
            }
        }
    )*};
}

from_module!(
    cognistream::store::StoreError,
    cognistream::config::ConfigError,
    cognistream::forecast::ForecastError,
    cognistream::queries::QueryError,
    cognistream::dpu::DpuError,
    cognistream::relevancy::RelevancyError
);

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

struct Ctx {
    cfg: RunConfig,
    store_dir: PathBuf,
    exec: Exec,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let path = cli
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let cfg = match path {
            Some(p) => RunConfig::parse(&fs::read_to_string(&p).map_err(io_err(&p))?)?,
            None => RunConfig::default(),
        };
        let store_dir = cli
            .store
            .clone()
            .or_else(|| cfg.store_path.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE));
        let exec = if cli.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        };
        Ok(Ctx {
            cfg,
            store_dir,
            exec,
        })
    }

    fn store(&self) -> Result<StreamStore, Failure> {
        Ok(StreamStore::open(&self.store_dir)?)
    }

    fn analysis(&self) -> Result<Analysis, Failure> {
        let segments = self.store()?.segments();
        Ok(pipeline::analyze(
            &segments,
            &self.cfg.miner,
            &self.cfg.structures,
            self.exec,
        )?)
    }

    fn boosts(&self) -> Result<Vec<(u64, Subject)>, Failure> {
        let path = self.store_dir.join(BOOSTS);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        text.lines()
            .enumerate()
            .map(|(n, line)| {
                let parsed = line
                    .split_once('\t')
                    .and_then(|(w, s)| Some((w.parse().ok()?, Subject::parse(s)?)));
                parsed.ok_or_else(|| {
                    Failure::Io(format!("{}:{}: bad boost line", path.display(), n + 1))
                })
            })
            .collect()
    }

    fn append(&self, file: &str, text: &str) -> Result<(), Failure> {
        let path = self.store_dir.join(file);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))
    }
}

fn mine_report(a: &Analysis) -> String {
    a.dictionary.export()
}

fn structures_report(a: &Analysis) -> String {
    structures::export(&a.groups)
}

fn generalize_report(a: &Analysis) -> String {
    a.hierarchy.export()
}

fn relevancy_report(ctx: &Ctx, a: &Analysis) -> Result<String, Failure> {
    Ok(pipeline::score(a, &ctx.boosts()?, &ctx.cfg.relevancy)?.export())
}

/// Empty when the history has no slotted template to draw from.
fn hypothesize_report(ctx: &Ctx, a: &Analysis) -> Result<String, Failure> {
    let run = pipeline::replay_hypotheses(
        a,
        &ctx.cfg.relevancy,
        &ctx.cfg.hypothesis,
        ctx.cfg.holdout,
        ctx.exec,
    )?;
    let Some(run) = run else {
        return Ok(String::new());
    };
    run.book.verify_safety().map_err(cognistream::Error::from)?;
    let text = run.book.export();
    ctx.append(HYPOTHESES, &text)?;
    Ok(text)
}

fn ingest(ctx: &Ctx, file: &Path, timestamp: Option<u64>, tag: &str) -> Result<String, Failure> {
    let bytes = fs::read(file).map_err(io_err(file))?;
    let mut store = ctx.store()?;
    let ts = timestamp.unwrap_or_else(|| store.last_timestamp().map_or(0, |t| t + 1));
    let id = store.append(&bytes, ts, tag)?;
    let line = store
        .metadata_text()
        .lines()
        .nth(id as usize)
        .unwrap_or_default()
        .to_string();
    Ok(format!("{line}\n"))
}

fn query(ctx: &Ctx, args: &QueryArgs) -> Result<String, Failure> {
    let text = match &args.file {
        Some(p) => fs::read_to_string(p).map_err(io_err(p))?,
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Io(format!("stdin: {e}")))?;
            s
        }
    };
    let mode = match (args.broaden, args.narrow) {
        (true, _) => Mode::Broaden,
        (_, true) => Mode::Narrow,
        _ => Mode::Exact,
    };
    let a = ctx.analysis()?;
    let window = a.windows.len().saturating_sub(1) as u64;
    let scores = pipeline::score(&a, &ctx.boosts()?, &ctx.cfg.relevancy)?;
    let plans = queries::parse_queries(&text)?
        .iter()
        .enumerate()
        .map(|(i, kws)| queries::plan(i as u64, kws, window, &a.dictionary, &a.hierarchy, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let results = queries::run(&plans, &a.hierarchy, &scores)?;

    let mut boosted = BTreeSet::new();
    for p in &plans {
        if !results[&p.query.query_id].is_empty() {
            boosted.extend(
                p.query
                    .resolved
                    .iter()
                    .filter_map(|i| i.pattern_id())
                    .map(Subject::Pattern),
            );
        }
    }
    let log: String = boosted.iter().map(|s| format!("{window}\t{s}\n")).collect();
    if !log.is_empty() {
        ctx.append(BOOSTS, &log)?;
    }
    Ok(queries::export(&results))
}

fn forecast(
    ctx: &Ctx,
    template: &str,
    position: usize,
    method: Option<Method>,
    alpha: Option<f64>,
) -> Result<String, Failure> {
    let id = NodeId::from_hex(template)
        .ok_or_else(|| Failure::Io(format!("bad template id {template:?}")))?;
    let a = ctx.analysis()?;
    let seq = classify(&a.hierarchy, id, position)?;
    let f = predict(
        &seq,
        method.unwrap_or(ctx.cfg.forecast_method),
        alpha.unwrap_or(ctx.cfg.alpha),
    )?;
    Ok(f.export())
}

fn dpu_sim(
    ctx: &Ctx,
    topology: &Path,
    rounds: u64,
    queries: usize,
    seed: u64,
) -> Result<String, Failure> {
    let tc = TopologyConfig::parse(&fs::read_to_string(topology).map_err(io_err(topology))?)?;
    let topo = Topology::from_config(&tc)?;
    let settings = SimSettings {
        miner: ctx.cfg.miner,
        structures: ctx.cfg.structures.clone(),
        relevancy: ctx.cfg.relevancy,
        ttl: tc.ttl(),
        exec: ctx.exec,
    };
    let segments = ctx.store()?.segments();
    let n = topo.len();
    let mut world = World::partitioned(topo, settings, contiguous_split(&segments, n))?;
    world.mine_all()?;

    let vocabulary: Vec<Vec<u8>> = world
        .units()
        .iter()
        .flat_map(|u| u.dictionary.iter().map(|p| p.bytes.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !vocabulary.is_empty() {
        for q in 0..queries {
            let origin = rng.gen_range(0..n);
            let kws = (0..rng.gen_range(1..=2))
                .map(|_| vocabulary[rng.gen_range(0..vocabulary.len())].clone())
                .collect();
            world.inject_query(origin, q as u64, kws)?;
        }
    }
    world.run(rounds);
    Ok(world.transcript())
}

fn report(ctx: &Ctx) -> Result<String, Failure> {
    let store = ctx.store()?;
    let a = ctx.analysis()?;
    let run = pipeline::replay_hypotheses(
        &a,
        &ctx.cfg.relevancy,
        &ctx.cfg.hypothesis,
        ctx.cfg.holdout,
        ctx.exec,
    )?;
    let mut out = String::new();
    let mut row = |k: &str, v: usize| {
        let _ = writeln!(out, "{k}\t{v}");
    };
    row("segments", store.len());
    row("bytes", store.total_bytes() as usize);
    row("patterns", a.dictionary.len());
    row("windows", a.windows.len());
    row("structures", a.instances.len());
    row("leaves", a.hierarchy.leaves().count());
    row("templates", a.hierarchy.templates().count());
    row("roots", a.hierarchy.roots().count());
    let book = run.map(|r| r.book);
    for state in [
        HypothesisState::Proposed,
        HypothesisState::Confirmed,
        HypothesisState::Superseded,
        HypothesisState::Rejected,
    ] {
        let count = book
            .as_ref()
            .map_or(0, |b| b.iter().filter(|h| h.state == state).count());
        row(&format!("hypotheses.{state}"), count);
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let ctx = Ctx::load(cli)?;
    match &cli.command {
        Command::Ingest {
            file,
            timestamp,
            tag,
        } => ingest(&ctx, file, *timestamp, tag),
        Command::Mine => Ok(mine_report(&ctx.analysis()?)),
        Command::Structures => Ok(structures_report(&ctx.analysis()?)),
        Command::Generalize => Ok(generalize_report(&ctx.analysis()?)),
        Command::Relevancy => relevancy_report(&ctx, &ctx.analysis()?),
        Command::Hypothesize => hypothesize_report(&ctx, &ctx.analysis()?),
        Command::Cycle => {
            let a = ctx.analysis()?;
            let mut out = mine_report(&a);
            out += &structures_report(&a);
            out += &generalize_report(&a);
            out += &relevancy_report(&ctx, &a)?;
            out += &hypothesize_report(&ctx, &a)?;
            Ok(out)
        }
        Command::Query(args) => query(&ctx, args),
        Command::Forecast {
            template,
            position,
            method,
            alpha,
        } => forecast(&ctx, template, *position, *method, *alpha),
        Command::DpuSim {
            topology,
            rounds,
            queries,
            seed,
        } => dpu_sim(&ctx, topology, *rounds, *queries, *seed),
        Command::Report => report(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: cli: {msg}");
            ExitCode::from(2)
        }
    }
}
