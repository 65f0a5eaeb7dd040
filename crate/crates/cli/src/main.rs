use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vlhmm::baum_welch::{default_grid, fit, identifiable_grid, EmissionUpdate, FitConfig};
use vlhmm::bic_ctm::{bootstrap_sample, ctm_prune, default_depth, CountTrie};
use vlhmm::contamination::{contaminate, NoiseSpec, Regime};
use vlhmm::context_tree::ContextTree;
use vlhmm::hmm_embedding::{EmbedMode, HmmParams, HmmParamsJson};
use vlhmm::pipeline::{emit_report, two_step_estimate, EstimateConfig, ReportFormat, ScenarioSpec};
use vlhmm::presets;
use vlhmm::vlmc_source::{sample_vlmc, VlmcModel, DEFAULT_BURN_IN};
use vlhmm::{Alphabet, SymbolSequence};

#[derive(Parser)]
#[command(name = "vlhmm", version, about = "Simulate and estimate noisy variable-length Markov chains")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for outputs without an explicit path.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Scenario1,
    Scenario2,
}

impl Preset {
    fn tree(self) -> ContextTree<f64> {
        match self {
            Preset::Scenario1 => presets::scenario1_tree(),
            Preset::Scenario2 => presets::scenario2_tree(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a hidden chain from a context tree.
    Simulate {
        /// Tree JSON file.
        #[arg(long, conflicts_with = "preset")]
        tree: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Sample length.
        #[arg(long, short = 'T')]
        length: usize,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Pass a sequence through a noise channel.
    Contaminate {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "sum")]
        regime: Regime,
        /// Noise level, or a comma-separated noise law over the alphabet.
        #[arg(long)]
        eps: String,
    },
    /// Fit the block HMM by EM over a grid of noise levels.
    Fit {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// FitResult JSON path.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Select a context tree by penalized likelihood.
    Prune {
        /// Sequence to prune directly.
        #[arg(long, short, conflicts_with = "params", required_unless_present = "params")]
        input: Option<PathBuf>,
        /// Fitted parameters (FitResult or HmmParams JSON) to bootstrap from.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Bootstrap or counting length; the whole input when unset.
        #[arg(long)]
        m: Option<usize>,
        /// Candidate depth.
        #[arg(long, short = 'D')]
        depth: Option<usize>,
        /// Tree JSON path.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Per-node values and flags as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run both estimation steps on a sequence.
    Estimate {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, short = 'D')]
        depth: Option<usize>,
        /// Summary JSON path.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo scenario and write its report.
    Experiment {
        /// Scenario spec JSON file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value = "sum")]
        regime: Regime,
        /// Full sweep with 100 replications at length 30000.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, short = 'T')]
        length: Option<usize>,
        /// Comma-separated noise levels.
        #[arg(long)]
        sweep: Option<String>,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Block length; defaults to the smallest d with N^(2d) >= T.
    #[arg(long, short)]
    k: Option<usize>,
    #[arg(long, default_value = "sum")]
    regime: Regime,
    #[arg(long, default_value = "symbol")]
    mode: EmbedMode,
    /// `identifiable`, `full`, `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "identifiable")]
    grid: String,
    #[arg(long, default_value_t = FitConfig::DEFAULT_REL_TOL)]
    tol: f64,
    #[arg(long, default_value_t = FitConfig::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value = "fixed")]
    emission_update: EmissionUpdate,
}

impl FitArgs {
    fn config(&self, z: &SymbolSequence) -> Result<FitConfig> {
        let k = self.k.unwrap_or_else(|| vlhmm::hmm_embedding::default_block_length(z.len(), z.alphabet()));
        let cfg = FitConfig {
            noise_grid: parse_grid(&self.grid, self.regime, z.alphabet())?,
            max_iter: self.max_iter,
            rel_tol: self.tol,
            k,
            mode: self.mode,
            regime: self.regime,
            emission_update: self.emission_update,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?}")))
        .collect()
}

fn parse_grid(text: &str, regime: Regime, alphabet: Alphabet) -> Result<Vec<f64>> {
    match text {
        "identifiable" => Ok(identifiable_grid(regime, alphabet)),
        "full" => Ok(default_grid()),
        _ if text.contains(':') => {
            let parts = parse_list(&text.replace(':', ","))?;
            let [start, stop, step] = parts[..] else { bail!("grid range must be start:stop:step") };
            if step <= 0.0 || stop < start {
                bail!("empty grid range {text}");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // rounding keeps values such as 0.07 exact in the output
            Ok((0..=count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
        }
        _ => parse_list(text),
    }
}

fn resolve(out_dir: &Path, explicit: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    let path = explicit.clone().unwrap_or_else(|| out_dir.join(default_name));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(path)
}

fn read_sequence(path: &Path) -> Result<SymbolSequence> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(SymbolSequence::read_text(BufReader::new(file))?)
}

fn write_sequence(path: &Path, seq: &SymbolSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    seq.write_text(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush()?;
    Ok(())
}

fn read_params(path: &Path) -> Result<HmmParams<f64>> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    // accept either a bare parameter file or a full fit result
    let inner = value.get("params").cloned().unwrap_or(value);
    let json: HmmParamsJson = serde_json::from_value(inner)?;
    Ok(HmmParams::from_json(&json)?)
}

#[derive(Serialize)]
struct EstimateSummary {
    eps_hat: f64,
    implied_eps: f64,
    loglik: f64,
    converged: bool,
    k: usize,
    m: usize,
    depth: usize,
    bic_score: f64,
    tree: ContextTree<f64>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out = &cli.out_dir;
    match cli.command {
        Command::Simulate { tree, preset, length, burn_in, output } => {
            let tree = match (tree, preset) {
                (Some(path), _) => ContextTree::read_json(BufReader::new(File::open(&path)?))?,
                (None, Some(p)) => p.tree(),
                (None, None) => bail!("pass --tree or --preset"),
            };
            let x = sample_vlmc(&VlmcModel::new(tree, burn_in)?, length, cli.seed)?;
            write_sequence(&resolve(out, &output, "hidden.txt")?, &x)?;
        }
        Command::Contaminate { input, output, regime, eps } => {
            let x = read_sequence(&input)?;
            let values = parse_list(&eps)?;
            let noise = match values[..] {
                [level] => NoiseSpec::from_level(regime, x.alphabet(), level)?,
                _ => NoiseSpec::new(regime, values)?,
            };
            let z = contaminate(&x, &noise, cli.seed)?;
            write_sequence(&resolve(out, &output, "observed.txt")?, &z)?;
        }
        Command::Fit { input, fit: args, output } => {
            let z = read_sequence(&input)?;
            let result = fit::<f64>(&z, &args.config(&z)?)?;
            write_json(&resolve(out, &output, "fit.json")?, &result.to_json())?;
        }
        Command::Prune { input, params, m, depth, output, dump } => {
            let (sample, m) = match (input, params) {
                (Some(path), _) => {
                    let x = read_sequence(&path)?;
                    let m = m.unwrap_or(x.len());
                    (x, m)
                }
                (None, Some(path)) => {
                    let p = read_params(&path)?;
                    let m = m.context("--m is required when bootstrapping from parameters")?;
                    (bootstrap_sample(&p.transitions, &p.initial, m, cli.seed)?, m)
                }
                (None, None) => bail!("pass --input or --params"),
            };
            let depth = match depth {
                Some(d) => d,
                None => default_depth(m, sample.alphabet())?,
            };
            let result = ctm_prune(&sample, depth, m)?;
            result.tree.write_json(BufWriter::new(File::create(resolve(out, &output, "tree.json")?)?))?;
            if let Some(path) = dump {
                let trie = CountTrie::build(&sample, depth, m)?;
                write_json(&resolve(out, &Some(path), "")?, &result.node_dump(&trie))?;
            }
        }
        Command::Estimate { input, fit: args, m, depth, output } => {
            let z = read_sequence(&input)?;
            let cfg = EstimateConfig { fit: args.config(&z)?, m, depth, seed: cli.seed };
            let est = two_step_estimate::<f64>(&z, &cfg)?;
            let summary = EstimateSummary {
                eps_hat: est.eps_hat,
                implied_eps: est.fit.implied_eps,
                loglik: est.fit.loglik,
                converged: est.fit.converged,
                k: cfg.fit.k,
                m: est.m,
                depth: est.depth,
                bic_score: est.pruned.bic_score,
                tree: est.tree,
            };
            write_json(&resolve(out, &output, "estimate.json")?, &summary)?;
        }
        Command::Experiment { spec, preset, regime, full, replications, length, sweep } => {
            let mut spec = match (spec, preset) {
                (Some(path), _) => ScenarioSpec::from_json_str(&std::fs::read_to_string(&path)?)?,
                (None, Some(Preset::Scenario1)) => ScenarioSpec::scenario1(regime),
                (None, Some(Preset::Scenario2)) => ScenarioSpec::scenario2(regime),
                (None, None) => bail!("pass --spec or --preset"),
            };
            if full {
                spec = spec.full();
            }
            spec.seed = cli.seed;
            if let Some(r) = replications {
                spec.replications = r;
            }
            if let Some(t) = length {
                spec.sample_size = t;
            }
            if let Some(s) = sweep {
                spec.sweep = parse_list(&s)?;
            }
            let report = vlhmm::pipeline::run_scenario(&spec)?;
            let format = match cli.format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            for path in emit_report(&report, out, format)? {
                println!("{}", path.display());
            }
            let failures = report.failures();
            if failures > 0 {
                eprintln!("{failures} replication(s) failed");
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
