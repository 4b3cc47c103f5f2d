//! Subcommands of the `bnsearch` binary.
//!
//! Every command writes its report to the supplied writer and returns a
//! library error on failure; `main` turns the error into an
//! `error\t<kind>\t<message>` line on stderr.
//!
//! Randomness comes from the single `--seed` value, split per subsystem with
//! [`derive_seed`] using the `STREAM_*` constants below.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bnsearch::adtree::{AdTree, AdTreeConfig};
use bnsearch::dagsearch;
use bnsearch::data::{load_dataset, load_dataset_with_schema, save_dataset, split_folds, Dataset, LoadOptions, Schema};
use bnsearch::families::{load_family_cache, save_family_cache, CacheKey, FamilyConfig, Precomputed, RankedFamilyTable};
use bnsearch::model::{
    alarm_structure, fit_parameters, forward_sample, load_network, log_likelihood, random_cpts, random_network,
    save_network, Network,
};
use bnsearch::ordsearch;
use bnsearch::scoring::{network_score, AdTreeScorer, ScoreConfig, ScoreKind};
use bnsearch::search::{derive_seed, RestartMode, SearchConfig, SearchOutcome};
use bnsearch::{Error, ParentSet, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SAMPLE: u64 = 1;
pub const STREAM_SEARCH: u64 = 2;
pub const STREAM_FOLDS: u64 = 3;
pub const STREAM_GENERATE: u64 = 4;

#[derive(Debug, Parser)]
#[command(name = "bnsearch", version, about = "Bayesian network structure learning by ordering and DAG search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random network, or the Alarm topology with random parameters.
    Generate(GenerateArgs),
    /// Draw records from a network with parameters.
    Sample(SampleArgs),
    /// Learn a structure with one search method.
    Learn(LearnArgs),
    /// Per-record log-likelihood of a network on data.
    Eval(EvalArgs),
    /// Run both search methods on the same inputs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Order,
    Dag,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Order => "order",
            Method::Dag => "dag",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Number of variables (ignored with --alarm).
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub max_in_degree: usize,
    #[arg(long, default_value_t = 2)]
    pub min_card: usize,
    #[arg(long, default_value_t = 4)]
    pub max_card: usize,
    /// Use the 37-node Alarm topology and cardinalities.
    #[arg(long)]
    pub alarm: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    pub network: PathBuf,
    #[arg(long, short = 'm')]
    pub records: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Take variable names and states from this network file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Give single-valued columns an extra unseen state instead of failing.
    #[arg(long)]
    pub allow_constant: bool,
    /// The data file has no header row.
    #[arg(long)]
    pub no_header: bool,
}

impl DataArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            header: !self.no_header,
            allow_constant: self.allow_constant,
            ..LoadOptions::default()
        }
    }

    fn load(&self, path: &Path) -> Result<Dataset> {
        match &self.schema {
            Some(net) => load_dataset_with_schema(path, load_network(net)?.schema(), &self.options()),
            None => load_dataset(path, &self.options()),
        }
    }
}

fn parse_candidates(s: &str) -> std::result::Result<Candidates, String> {
    if s == "all" {
        return Ok(Candidates(None));
    }
    s.parse::<usize>()
        .map_err(|e| e.to_string())
        .and_then(|c| if c == 0 { Err("must be positive or \"all\"".into()) } else { Ok(Candidates(Some(c))) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidates(pub Option<usize>);

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "bde")]
    pub score: ScoreKind,
    /// Equivalent sample size for the BDe score and parameter fitting.
    #[arg(long, default_value_t = ScoreConfig::DEFAULT_ESS)]
    pub ess: f64,
    /// Maximum parents per node.
    #[arg(long, short = 'k', default_value_t = 3)]
    pub max_parents: usize,
    /// Candidate parents per node, or "all".
    #[arg(long, short = 'c', default_value = "10", value_parser = parse_candidates)]
    pub candidates: Candidates,
    #[arg(long, default_value_t = 100)]
    pub tabu: usize,
    /// Non-improving moves before a restart; defaults to the tabu size.
    #[arg(long)]
    pub stagnation: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Random moves per restart; defaults to half the number of variables.
    #[arg(long)]
    pub perturbation: Option<usize>,
    #[arg(long, default_value = "perturb")]
    pub restart_mode: RestartMode,
    /// Stop at the first local maximum instead of taking worsening moves.
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Search time limit in seconds, excluding precomputation.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl RunArgs {
    pub fn score_config(&self) -> Result<ScoreConfig> {
        ScoreConfig::new(self.score, self.ess)
    }

    pub fn family_config(&self) -> Result<FamilyConfig> {
        if self.max_parents == 0 {
            return Err(Error::Config("max parents must be positive".into()));
        }
        Ok(FamilyConfig {
            candidates: self.candidates.0,
            max_parents: self.max_parents,
            score: self.score_config()?,
        })
    }

    pub fn search_config(&self) -> Result<SearchConfig> {
        if self.perturbation == Some(0) {
            return Err(Error::Config("perturbation length must be positive".into()));
        }
        let time_limit = match self.time_limit {
            Some(t) if !(t.is_finite() && t >= 0.0) => {
                return Err(Error::Config(format!("bad time limit {t}")));
            }
            t => t.map(Duration::from_secs_f64),
        };
        Ok(SearchConfig {
            tabu_size: self.tabu,
            stagnation_limit: self.stagnation.unwrap_or(self.tabu),
            restarts: self.restarts,
            perturbation: self.perturbation,
            restart_mode: self.restart_mode,
            greedy: self.greedy,
            max_in_degree: self.max_parents,
            max_steps: self.max_steps,
            time_limit,
            seed: derive_seed(self.seed, STREAM_SEARCH),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    pub dataset: PathBuf,
    #[arg(long, default_value = "order")]
    pub method: Method,
    #[command(flatten)]
    pub run: RunArgs,
    /// Learned network with fitted parameters.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Best-score-versus-time trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Ranked family table cache: read if present, written otherwise.
    /// Only the ordering search reads it.
    #[arg(long)]
    pub family_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub network: PathBuf,
    pub dataset: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Fit parameters on k-1 folds and evaluate on the held-out fold.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, default_value_t = ScoreConfig::DEFAULT_ESS)]
    pub ess: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Traces go to `<prefix><dataset stem>.<method>.tsv`.
    #[arg(long)]
    pub trace_prefix: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Learn(a) => cmd_learn(&a, out).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a, out).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a, out).map(|_| ()),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<output>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let seed = derive_seed(args.seed, STREAM_GENERATE);
    let network = if args.alarm {
        let structure = alarm_structure();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cpts = random_cpts(structure.schema(), structure.parents(), &mut rng);
        structure.with_cpts(cpts)?
    } else {
        if args.nodes == 0 || args.min_card < 2 || args.min_card > args.max_card {
            return Err(Error::Config("need nodes >= 1 and 2 <= min-card <= max-card".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cards: Vec<usize> = (0..args.nodes)
            .map(|_| rand::Rng::random_range(&mut rng, args.min_card..=args.max_card))
            .collect();
        random_network(&cards, args.max_in_degree, derive_seed(seed, 1))
    };
    save_network(&args.out, &network)?;
    emit(
        out,
        &format!(
            "nodes\tedges\tmax_in_degree\n{}\t{}\t{}\n",
            network.n_nodes(),
            network.edge_count(),
            network.max_in_degree()
        ),
    )
}

pub fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> Result<()> {
    let network = load_network(&args.network)?;
    let data = forward_sample(&network, args.records, derive_seed(args.seed, STREAM_SAMPLE))?;
    save_dataset(&args.out, &data)?;
    emit(out, &format!("records\tvariables\n{}\t{}\n", data.n_records(), data.n_vars()))
}

/// Inputs shared by both searches for one dataset.
pub struct Prepared {
    pub data: Dataset,
    pub tree: AdTree,
    pub ranked: RankedFamilyTable,
    /// `None` when the ranked table came from a cache.
    pub full: Option<Precomputed>,
    pub precompute_seconds: f64,
}

fn cache_key(data: &Dataset, cfg: &FamilyConfig) -> CacheKey {
    CacheKey {
        dataset_hash: data.content_hash(),
        candidates: cfg.candidates,
        max_parents: cfg.max_parents,
        score: cfg.score,
    }
}

/// Builds the AD-tree and family tables; the ranked table is read from
/// `cache` when it exists and `need_full` is false.
pub fn prepare(data: Dataset, cfg: &FamilyConfig, cache: Option<&Path>, need_full: bool) -> Result<Prepared> {
    let start = Instant::now();
    let tree = AdTree::build(&data, AdTreeConfig::default())?;
    let key = cache_key(&data, cfg);
    let cached = match cache {
        Some(p) if !need_full && p.exists() => Some(load_family_cache(p, &key)?),
        _ => None,
    };
    let (ranked, full) = match cached {
        Some(r) => (r, None),
        None => {
            let pre = Precomputed::build(&data, &tree, cfg)?;
            if let Some(p) = cache {
                save_family_cache(p, &key, &pre.ranked)?;
            }
            (pre.ranked.clone(), Some(pre))
        }
    };
    Ok(Prepared {
        data,
        tree,
        ranked,
        full,
        precompute_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `method` on prepared inputs; the trace carries the precompute time.
pub fn run_search(method: Method, prepared: &Prepared, cfg: &SearchConfig) -> Result<SearchOutcome> {
    let mut outcome = match method {
        Method::Order => ordsearch::search(&prepared.ranked, cfg, None),
        Method::Dag => {
            let full = prepared
                .full
                .as_ref()
                .ok_or_else(|| Error::Config("DAG search needs freshly computed family scores".into()))?;
            dagsearch::search(&full.score_map(), &full.candidates, cfg, None)?
        }
    };
    outcome.trace.precompute_seconds = Some(prepared.precompute_seconds);
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnSummary {
    pub method: Method,
    pub score: f64,
    pub n_records: usize,
    pub time_to_best: f64,
    pub search_seconds: f64,
    pub precompute_seconds: f64,
    pub steps: u64,
    pub restarts: u64,
    pub f_max: usize,
    pub f_eff_mean: f64,
    pub f_eff_max: usize,
}

impl LearnSummary {
    pub const HEADER: &'static str = "method\tscore\tscore_per_datapoint\ttime_to_best\tsearch_seconds\tprecompute_seconds\tsteps\trestarts\tf_max\tf_eff_mean\tf_eff_max";

    pub fn score_per_datapoint(&self) -> f64 {
        self.score / self.n_records as f64
    }

    pub fn row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{:.3}\t{}",
            self.method.as_str(),
            self.score,
            self.score_per_datapoint(),
            self.time_to_best,
            self.search_seconds,
            self.precompute_seconds,
            self.steps,
            self.restarts,
            self.f_max,
            self.f_eff_mean,
            self.f_eff_max
        )
    }
}

fn summarize(method: Method, prepared: &Prepared, outcome: &SearchOutcome) -> LearnSummary {
    LearnSummary {
        method,
        score: outcome.score,
        n_records: prepared.data.n_records(),
        time_to_best: outcome.time_to_best,
        search_seconds: outcome.elapsed,
        precompute_seconds: prepared.precompute_seconds,
        steps: outcome.steps,
        restarts: outcome.restarts,
        f_max: prepared.ranked.max_f_max(),
        f_eff_mean: prepared.ranked.mean_f_eff(),
        f_eff_max: prepared.ranked.max_f_eff(),
    }
}

pub fn cmd_learn(args: &LearnArgs, out: &mut dyn Write) -> Result<LearnSummary> {
    let family_cfg = args.run.family_config()?;
    let search_cfg = args.run.search_config()?;
    let data = args.run.data.load(&args.dataset)?;
    let prepared = prepare(data, &family_cfg, args.family_cache.as_deref(), args.method == Method::Dag)?;
    let outcome = run_search(args.method, &prepared, &search_cfg)?;
    if let Some(path) = &args.out {
        let structure = Network::new(prepared.data.schema().clone(), outcome.parents.clone())?;
        save_network(path, &fit_parameters(&structure, &prepared.data, args.run.ess)?)?;
    }
    if let Some(path) = &args.trace {
        write_file(path, &outcome.trace.to_tsv(prepared.data.n_records()))?;
    }
    let summary = summarize(args.method, &prepared, &outcome);
    emit(out, &format!("{}\n{}\n", LearnSummary::HEADER, summary.row()))?;
    Ok(summary)
}

/// Scores `parents` directly from the data, independent of any search tables.
pub fn rescore(data: &Dataset, parents: &[ParentSet], score: ScoreConfig) -> Result<f64> {
    let tree = AdTree::build(data, AdTreeConfig::default())?;
    network_score(parents, &AdTreeScorer::new(&tree, score))
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<f64> {
    let network = load_network(&args.network)?;
    let opts = args.data.options();
    let schema: &Schema = network.schema();
    let data = load_dataset_with_schema(&args.dataset, schema, &opts)?;
    let (ll, mode) = match args.folds {
        None => (log_likelihood(&network, &data)?, "direct".to_owned()),
        Some(k) => {
            let structure = network.structure();
            let folds = split_folds(&data, k, derive_seed(args.seed, STREAM_FOLDS))?;
            let mut total = 0.0;
            for fold in &folds {
                let fitted = fit_parameters(&structure, &fold.train, args.ess)?;
                total += log_likelihood(&fitted, &fold.test)?;
            }
            (total / folds.len() as f64, format!("{k}-fold"))
        }
    };
    emit(out, &format!("mode\trecords\tlog_likelihood_per_datapoint\n{mode}\t{}\t{ll}\n", data.n_records()))?;
    Ok(ll)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub summary: LearnSummary,
}

pub const BENCH_HEADER: &str = "dataset\tmethod\tbest_score_per_datapoint\ttime_to_best\ttotal_seconds\tprecompute_seconds\tsteps\trestarts";

fn trace_path(prefix: &Path, dataset: &Path, method: Method) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("{stem}.{}.tsv", method.as_str()));
    PathBuf::from(name)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Vec<BenchRow>> {
    let family_cfg = args.run.family_config()?;
    let search_cfg = args.run.search_config()?;
    let mut table = format!("{BENCH_HEADER}\n");
    let mut rows = Vec::new();
    for path in &args.datasets {
        let data = args.run.data.load(path)?;
        let prepared = prepare(data, &family_cfg, None, true)?;
        for method in [Method::Order, Method::Dag] {
            let outcome = run_search(method, &prepared, &search_cfg)?;
            if let Some(prefix) = &args.trace_prefix {
                write_file(&trace_path(prefix, path, method), &outcome.trace.to_tsv(prepared.data.n_records()))?;
            }
            let summary = summarize(method, &prepared, &outcome);
            let name = path.display().to_string();
            let _ = writeln!(
                table,
                "{name}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                method.as_str(),
                summary.score_per_datapoint(),
                summary.time_to_best,
                summary.search_seconds + summary.precompute_seconds,
                summary.precompute_seconds,
                summary.steps,
                summary.restarts
            );
            rows.push(BenchRow { dataset: name, summary });
        }
    }
    emit(out, &table)?;
    Ok(rows)
}
