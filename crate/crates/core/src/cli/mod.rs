//! Command-line front end: `ingest | synth | select-k | fit | metrics |
//! simulate | regress | export`. Every invocation writes a run manifest
//! next to its primary output.

mod config_file;
mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::cooccurrence::{simulate_share_curve, SimulationPlan, StrataWeighting};
use crate::econet::{apply_filters, load_edgelist, EcoNetwork, EdgeListFormat, Roster};
use crate::error::{Error, Result};
use crate::lda::{fit, select_k, Alpha, CommunityModel, Estimator, LdaConfig, Prior, SelectionPlan};
use crate::metrics::{
    community_sizes, individual_metrics, summarize_neighborhoods, write_individual_csv, write_neighborhood_csv,
};
use crate::neighstats::{ols_fit, DataTable, RegressionSpec};
use crate::synth::{generate, NeighborhoodPlan, SynthSpec, TokenCount};

pub use manifest::{default_manifest_path, sha256_file, FileDigest, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "ecocomm",
    version,
    about = "Ecological community detection in individual x location networks"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load an edge list and roster, apply the sample filters, write the filtered network.
    Ingest(IngestArgs),
    /// Generate a synthetic network with known communities.
    Synth(SynthArgs),
    /// Choose K by repeated held-out perplexity.
    SelectK(SelectKArgs),
    /// Fit the community model for a fixed K.
    Fit(FitArgs),
    /// Per-individual and per-neighborhood metrics for a fitted model.
    Metrics(MetricsArgs),
    /// Simulate location-sharing probabilities from a fitted model.
    Simulate(SimulateArgs),
    /// Standardized OLS on neighborhood-level columns.
    Regress(RegressArgs),
    /// Export W, H and community sizes as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct NetworkInput {
    /// Edge list CSV: individual_id,location_id[,count]
    #[arg(long)]
    pub edges: PathBuf,
    /// Roster CSV: individual_id,neighborhood_id,in_area
    #[arg(long)]
    pub roster: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    /// Manifest path (default: <primary output>.manifest.json)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: NetworkInput,
    #[arg(long, default_value_t = 4)]
    pub min_per_neighborhood: usize,
    #[arg(long)]
    pub out_edges: PathBuf,
    #[arg(long)]
    pub out_roster: PathBuf,
    /// Write the filter report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NeighborhoodMode {
    Aligned,
    Mixed,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub individuals: usize,
    #[arg(long)]
    pub locations: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// Tokens per individual: `n` or an inclusive range `min:max`.
    #[arg(long, default_value = "20")]
    pub tokens: String,
    #[arg(long, value_enum, default_value = "aligned")]
    pub neighborhoods: NeighborhoodMode,
    /// Neighborhoods per community (aligned) or in total (mixed).
    #[arg(long, default_value_t = 5)]
    pub neighborhood_count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    /// Symmetric community prior (default 50/K).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = crate::lda::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = crate::lda::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = crate::lda::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    /// Estimate W and H from the final sweep instead of averaging.
    #[arg(long)]
    pub last_sweep_only: bool,
    #[arg(long)]
    pub seed: u64,
}

impl SamplerArgs {
    fn config(&self, k: usize) -> LdaConfig {
        LdaConfig {
            k,
            alpha: self.alpha.map_or(Alpha::Default, Alpha::Symmetric),
            beta: Prior::Symmetric(self.beta),
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed,
            estimator: if self.last_sweep_only {
                Estimator::LastSweep
            } else {
                Estimator::PosteriorMean
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[command(flatten)]
    pub input: NetworkInput,
    /// `a:b` (inclusive), `a:b:step`, or a comma list.
    #[arg(long)]
    pub grid: String,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Worker threads for the (replicate, K) grid.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-cell perplexities CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON (default: <out> with .json extension).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: NetworkInput,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: NetworkInput,
    #[arg(long)]
    pub out_individuals: PathBuf,
    #[arg(long)]
    pub out_neighborhoods: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Size,
    Uniform,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Locations per individual: `a:b` or a comma list.
    #[arg(long, default_value = "1:35")]
    pub n: String,
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// Location count for the analytic curve (default: the model's J).
    #[arg(long)]
    pub analytic_j: Option<usize>,
    #[arg(long, value_enum, default_value = "size")]
    pub weighting: WeightingArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// Neighborhood table (e.g. the `metrics` neighborhood CSV).
    #[arg(long)]
    pub table: PathBuf,
    /// Extra columns joined on the key column.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long, default_value = "neighborhood_id")]
    pub key: String,
    #[arg(long)]
    pub response: String,
    #[arg(long = "term")]
    pub terms: Vec<String>,
    /// `a:b`, both members also given as terms.
    #[arg(long = "interaction")]
    pub interactions: Vec<String>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

/// Parses `a:b`, `a:b:step` or `a,b,c`.
pub fn parse_int_list(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::validation(format!("cannot parse integer list '{spec}'"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let list = match parts.as_slice() {
        [single] => single.split(',').map(num).collect::<Result<Vec<_>>>()?,
        [a, b] => (num(a)?..=num(b)?).collect(),
        [a, b, step] => {
            let step = num(step)?;
            if step == 0 {
                return Err(bad());
            }
            (num(a)?..=num(b)?).step_by(step).collect()
        }
        _ => return Err(bad()),
    };
    if list.is_empty() {
        return Err(bad());
    }
    Ok(list)
}

fn parse_tokens(spec: &str) -> Result<TokenCount> {
    let bad = || Error::validation(format!("cannot parse token count '{spec}'"));
    match spec.split_once(':') {
        Some((a, b)) => Ok(TokenCount::Uniform {
            min: a.trim().parse().map_err(|_| bad())?,
            max: b.trim().parse().map_err(|_| bad())?,
        }),
        None => Ok(TokenCount::Fixed {
            n: spec.trim().parse().map_err(|_| bad())?,
        }),
    }
}

fn load_network(input: &NetworkInput, manifest: &mut RunManifest) -> Result<EcoNetwork> {
    let roster = match &input.roster {
        Some(path) => {
            manifest.input(path)?;
            Some(Roster::load(path)?)
        }
        None => None,
    };
    manifest.input(&input.edges)?;
    load_edgelist(&input.edges, EdgeListFormat::LongCsv, roster.as_ref())
}

fn finish(mut manifest: RunManifest, arg: &ManifestArg, outputs: &[&Path]) -> Result<()> {
    for path in outputs {
        manifest.output(path)?;
    }
    let path = arg
        .manifest
        .clone()
        .unwrap_or_else(|| default_manifest_path(outputs[0]));
    manifest.write(&path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ingest(args: &IngestArgs, mut manifest: RunManifest) -> Result<()> {
    let roster_path = args
        .input
        .roster
        .as_ref()
        .ok_or_else(|| Error::validation("ingest needs --roster for the sample filters"))?;
    let net = load_network(&args.input, &mut manifest)?;
    let roster = Roster::load(roster_path)?;
    let (filtered, report) = apply_filters(&net, &roster, args.min_per_neighborhood)?;
    log::info!("kept {} of {} individuals", report.kept, net.n_individuals());
    filtered.write_edgelist(&args.out_edges)?;
    filtered.write_roster(&args.out_roster)?;
    manifest.config = json!({ "min_per_neighborhood": args.min_per_neighborhood });
    let mut outputs = vec![args.out_edges.as_path(), args.out_roster.as_path()];
    if let Some(path) = &args.report {
        report.write_json(path)?;
        outputs.push(path);
    }
    finish(manifest, &args.manifest, &outputs)
}

fn synth(args: &SynthArgs, mut manifest: RunManifest) -> Result<()> {
    let spec = SynthSpec {
        individuals: args.individuals,
        locations: args.locations,
        k_true: args.k,
        alpha_true: Prior::Symmetric(args.alpha),
        beta_true: Prior::Symmetric(args.beta),
        tokens_per_individual: parse_tokens(&args.tokens)?,
        neighborhood_plan: match args.neighborhoods {
            NeighborhoodMode::Aligned => NeighborhoodPlan::Aligned {
                per_community: args.neighborhood_count,
            },
            NeighborhoodMode::Mixed => NeighborhoodPlan::Mixed {
                neighborhoods: args.neighborhood_count,
            },
        },
        seed: args.seed,
    };
    let (net, truth) = generate(&spec)?;
    ensure_dir(&args.out_dir)?;
    let edges = args.out_dir.join("edges.csv");
    let roster = args.out_dir.join("roster.csv");
    let truth_path = args.out_dir.join("truth.json");
    net.write_edgelist(&edges)?;
    net.write_roster(&roster)?;
    truth.write_json(&truth_path)?;
    manifest.config = serde_json::to_value(&spec)?;
    manifest.seeds = vec![args.seed];
    finish(manifest, &args.manifest, &[&edges, &roster, &truth_path])
}

fn select(args: &SelectKArgs, mut manifest: RunManifest) -> Result<()> {
    let net = load_network(&args.input, &mut manifest)?;
    let grid = parse_int_list(&args.grid)?;
    let plan = SelectionPlan::new(grid, args.replicates, args.test_fraction);
    let base = args.sampler.config(plan.grid[0]);
    let run = || select_k(&net, &plan, &base);
    let result = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    result.write_csv(&args.out)?;
    let summary = args.summary.clone().unwrap_or_else(|| args.out.with_extension("json"));
    result.write_summary(&summary)?;
    log::info!("selected K = {}", result.selected_k);
    manifest.config = json!({
        "grid": plan.grid,
        "replicates": plan.replicates,
        "test_fraction": plan.test_fraction,
        "foldin_sweeps": plan.foldin_sweeps,
        "foldin_averaged": plan.foldin_averaged,
        "base": base,
    });
    manifest.seeds = vec![args.sampler.seed];
    finish(manifest, &args.manifest, &[&args.out, &summary])
}

fn fit_cmd(args: &FitArgs, mut manifest: RunManifest) -> Result<()> {
    let net = load_network(&args.input, &mut manifest)?;
    let config = args.sampler.config(args.k);
    let model = fit(&net, &config)?;
    model.save_json(&args.out)?;
    manifest.config = serde_json::to_value(&config)?;
    manifest.seeds = vec![config.seed];
    finish(manifest, &args.manifest, &[&args.out])
}

fn metrics_cmd(args: &MetricsArgs, mut manifest: RunManifest) -> Result<()> {
    manifest.input(&args.model)?;
    let model = CommunityModel::load_json(&args.model)?;
    let net = load_network(&args.input, &mut manifest)?;
    write_individual_csv(&individual_metrics(&net, &model)?, &args.out_individuals)?;
    write_neighborhood_csv(&summarize_neighborhoods(&net, &model)?, &args.out_neighborhoods)?;
    finish(
        manifest,
        &args.manifest,
        &[&args.out_individuals, &args.out_neighborhoods],
    )
}

fn simulate(args: &SimulateArgs, mut manifest: RunManifest) -> Result<()> {
    manifest.input(&args.model)?;
    let model = CommunityModel::load_json(&args.model)?;
    let plan = SimulationPlan {
        n_values: parse_int_list(&args.n)?,
        pairs_per_n: args.pairs,
        seed: args.seed,
        weighting: match args.weighting {
            WeightingArg::Size => StrataWeighting::BySize,
            WeightingArg::Uniform => StrataWeighting::Uniform,
        },
        analytic_j: args.analytic_j,
    };
    let curve = simulate_share_curve(&model, &plan)?;
    curve.write_csv(&args.out)?;
    manifest.config = json!({
        "n_values": plan.n_values,
        "pairs_per_n": plan.pairs_per_n,
        "weighting": plan.weighting,
        "analytic_j": curve.analytic_j,
    });
    manifest.seeds = vec![args.seed];
    finish(manifest, &args.manifest, &[&args.out])
}

fn regress(args: &RegressArgs, mut manifest: RunManifest) -> Result<()> {
    manifest.input(&args.table)?;
    let mut table = DataTable::load_csv(&args.table, &args.key)?;
    if let Some(path) = &args.covariates {
        manifest.input(path)?;
        table = table.join(&DataTable::load_csv(path, &args.key)?)?;
    }
    let mut spec = RegressionSpec {
        response: args.response.clone(),
        terms: args.terms.clone(),
        interactions: Vec::new(),
        standardize: !args.no_standardize,
    };
    for inter in &args.interactions {
        let (a, b) = inter
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("interaction '{inter}' must be a:b")))?;
        spec = spec.with_interaction(a, b);
    }
    let fit = ols_fit(&table, &spec)?;
    fit.write_csv(&args.out)?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(path) = &args.json {
        fit.write_json(path)?;
        outputs.push(path);
    }
    manifest.config = serde_json::to_value(&spec)?;
    finish(manifest, &args.manifest, &outputs)
}

fn export(args: &ExportArgs, mut manifest: RunManifest) -> Result<()> {
    manifest.input(&args.model)?;
    let model = CommunityModel::load_json(&args.model)?;
    ensure_dir(&args.out_dir)?;
    let k = model.k();
    let community_cols: Vec<String> = (1..=k).map(|c| format!("community_{c}")).collect();

    let w_path = args.out_dir.join("assignments.csv");
    let mut w = csv::Writer::from_path(&w_path)?;
    w.write_record(std::iter::once("individual_id".to_string()).chain(community_cols.iter().cloned()))?;
    for (i, id) in model.individuals().iter().enumerate() {
        w.write_record(std::iter::once(id.clone()).chain(model.w().row(i).iter().map(f64::to_string)))?;
    }
    w.flush().map_err(|e| Error::io(&w_path, e))?;

    let h_path = args.out_dir.join("profiles.csv");
    let mut w = csv::Writer::from_path(&h_path)?;
    w.write_record(std::iter::once("location_id".to_string()).chain(community_cols.iter().cloned()))?;
    for (j, id) in model.locations().iter().enumerate() {
        w.write_record(std::iter::once(id.clone()).chain(model.h().column(j).iter().map(f64::to_string)))?;
    }
    w.flush().map_err(|e| Error::io(&h_path, e))?;

    let sizes_path = args.out_dir.join("community_sizes.csv");
    let mut w = csv::Writer::from_path(&sizes_path)?;
    w.write_record(["community", "size"])?;
    for (c, size) in community_sizes(&model).into_iter().enumerate() {
        w.write_record([(c + 1).to_string(), size.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&sizes_path, e))?;

    finish(manifest, &args.manifest, &[&w_path, &h_path, &sizes_path])
}

pub fn execute(cli: &Cli, args: Vec<String>) -> Result<()> {
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Synth(_) => "synth",
        Command::SelectK(_) => "select-k",
        Command::Fit(_) => "fit",
        Command::Metrics(_) => "metrics",
        Command::Simulate(_) => "simulate",
        Command::Regress(_) => "regress",
        Command::Export(_) => "export",
    };
    let manifest = RunManifest::start(name, args);
    match &cli.command {
        Command::Ingest(a) => ingest(a, manifest),
        Command::Synth(a) => synth(a, manifest),
        Command::SelectK(a) => select(a, manifest),
        Command::Fit(a) => fit_cmd(a, manifest),
        Command::Metrics(a) => metrics_cmd(a, manifest),
        Command::Simulate(a) => simulate(a, manifest),
        Command::Regress(a) => regress(a, manifest),
        Command::Export(a) => export(a, manifest),
    }
}

/// Runs the CLI on raw process arguments and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let args = match config_file::expand(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.category().exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}
