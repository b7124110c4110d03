//! Command-line surface: `score`, `eval`, `validate-trees` and `replay`.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rots_core::preprocess::{build_pipeline, PipelineContext, ScaleMode};
use rots_core::rpp::{rpp_from_dependency_tree, validate_rpp};
use rots_core::similarity::{CorrectionScope, TreeMode};
use rots_core::stats::BootstrapOptions;
use rots_core::transport::SolverOptions;
use rots_core::{Method, PipelineSetup, SimilarityConfig};

use crate::bench::{evaluate, format_table, BootstrapRecord, ScoredPairSet, Scorer};
use crate::error::{Result, RotsError};
use crate::io::conllu::read_conllu;
use crate::io::frequencies::load_frequencies;
use crate::io::pairs::load_pairs;
use crate::io::vectors::load_vectors_filtered;
use crate::manifest::{Command as ManifestCommand, ConfigRecord, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "rots", version, about = "Sentence similarity with recursive optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print one score per sentence pair.
    Score(ScoreArgs),
    /// Correlate scores with gold ratings.
    Eval(EvalArgs),
    /// Check every tree of a CoNLL-U file and the phrase partitions built from it.
    ValidateTrees(ValidateArgs),
    /// Rerun a `score` or `eval` invocation from its manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Tab-separated pairs: gold, sentence 1, sentence 2, optional subtask.
    pub pairs: PathBuf,
    /// Text word-vector file.
    #[arg(long)]
    pub vectors: PathBuf,
    /// Unigram counts, needed by setups with W or U.
    #[arg(long)]
    pub freq: Option<PathBuf>,
    /// Converter letters from WUACSRP, e.g. SWC or SUP.
    #[arg(long, default_value = "")]
    pub setup: String,
    #[arg(long, default_value = "rots", value_parser = ["ac", "wrd", "interp", "prd", "rots"])]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Prior strength per level; one value applies to every level.
    #[arg(long, default_value = "10", value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// mean, max, min, last or level(k).
    #[arg(long, default_value = "mean")]
    pub agg: String,
    #[arg(long, default_value_t = 0.1)]
    pub wrd_reg: f64,
    #[arg(long, default_value_t = 10.0)]
    pub interp_eps: f64,
    /// CoNLL-U sidecar; pair i uses sentences 2i and 2i+1.
    #[arg(long, conflicts_with = "binary")]
    pub trees: Option<PathBuf>,
    /// Use balanced binary partitions instead of dependency trees.
    #[arg(long)]
    pub binary: bool,
    /// Compute the correction coefficient once from the words.
    #[arg(long)]
    pub word_level_correction: bool,
    /// Make S divide each dimension by its norm over the sentence instead
    /// of normalizing each word vector.
    #[arg(long)]
    pub dimension_wise_scaling: bool,
    /// Required vector dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write a replayable manifest of this run.
    #[arg(long)]
    pub write_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: ScoreArgs,
    #[arg(long, default_value = "tsv", value_parser = ["tsv"])]
    pub gold_format: String,
    /// Bootstrap resamples for BCa intervals.
    #[arg(long)]
    pub bca: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Write the JSON report here; `-` prints it instead of the table.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub trees: PathBuf,
    /// Refinement depth; by default partitions run down to single tokens.
    #[arg(long)]
    pub depth: Option<usize>,
}

fn usage(e: impl std::fmt::Display) -> RotsError {
    RotsError::Usage(e.to_string())
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn manifest_from_args(a: &ScoreArgs, command: ManifestCommand, bootstrap: Option<BootstrapRecord>) -> Result<RunManifest> {
    let setup = PipelineSetup::parse(&a.setup).map_err(usage)?;
    let eps_schedule = match a.eps.as_slice() {
        [e] => vec![*e; a.depth],
        many => many.to_vec(),
    };
    let cfg = SimilarityConfig {
        alpha: a.alpha,
        depth: a.depth,
        eps_schedule,
        wrd_reg: a.wrd_reg,
        interp_eps: a.interp_eps,
        aggregation: a.agg.parse().map_err(usage)?,
        tree_mode: if a.binary { TreeMode::Binary } else { TreeMode::Dependency },
        correction: if a.word_level_correction { CorrectionScope::WordLevel } else { CorrectionScope::PerLevel },
        solver: SolverOptions { max_iter: a.max_iter, tol: a.tol },
    };
    cfg.validate().map_err(usage)?;
    if a.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(RunManifest {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        command,
        pairs: absolute(&a.pairs),
        vectors: absolute(&a.vectors),
        frequencies: a.freq.as_deref().map(absolute),
        trees: a.trees.as_deref().map(absolute),
        expected_dim: a.dim,
        setup: setup.code(),
        dimension_wise_scaling: a.dimension_wise_scaling,
        method: a.method.clone(),
        config: ConfigRecord::from(&cfg),
        jobs: a.jobs,
        bootstrap,
    })
}

/// Loads inputs and fits the preprocessing pipeline described by `m`.
pub fn prepare(m: &RunManifest) -> Result<(ScoredPairSet, Scorer)> {
    let method: Method = m.method.parse().map_err(usage)?;
    let cfg = m.config.to_config()?;
    let mut setup = PipelineSetup::parse(&m.setup).map_err(usage)?;
    if m.dimension_wise_scaling {
        setup.params.scale_mode = ScaleMode::DimensionWise;
    }
    if method.needs_partitions() && cfg.tree_mode == TreeMode::Dependency && m.trees.is_none() {
        return Err(usage(format!("method {} needs --trees or --binary", method.name())));
    }
    if setup.needs_frequencies() && m.frequencies.is_none() {
        return Err(usage(format!("setup {} needs --freq", setup.code())));
    }

    let file = load_pairs(&m.pairs)?;
    if file.skipped > 0 {
        log::warn!("{}: skipped {} malformed lines", m.pairs.display(), file.skipped);
    }
    let trees = m.trees.as_deref().map(read_conllu).transpose()?;
    let label = m.pairs.file_stem().map_or_else(|| "pairs".to_owned(), |s| s.to_string_lossy().into_owned());
    let set = ScoredPairSet::new(label, file.records, trees.as_deref())?;

    let sentences = set.sentences();
    let mut wanted: HashSet<String> = HashSet::new();
    for t in sentences.iter().flatten() {
        wanted.insert(t.clone());
        wanted.insert(t.to_lowercase());
    }
    let vectors = load_vectors_filtered(&m.vectors, m.expected_dim, |t| wanted.contains(t), setup.needs_vocabulary())?;
    if vectors.stats.skipped > 0 {
        log::warn!("{}: skipped {} malformed lines", m.vectors.display(), vectors.stats.skipped);
    }
    if vectors.store.is_empty() {
        return Err(RotsError::Data("no sentence token has a vector".into()));
    }
    let freq = match (&m.frequencies, setup.needs_frequencies()) {
        (Some(p), true) => {
            let (f, skipped) = load_frequencies(p)?;
            if skipped > 0 {
                log::warn!("{}: skipped {skipped} malformed lines", p.display());
            }
            Some(f)
        }
        _ => None,
    };
    let ctx = PipelineContext {
        frequencies: freq.as_ref(),
        corpus: setup.needs_corpus().then_some(sentences.as_slice()),
        vocabulary: vectors.moments.as_ref(),
    };
    let pre = build_pipeline(&setup, vectors.store, ctx)?;
    Ok((set, Scorer { method, pre, cfg }))
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes()).map_err(|e| RotsError::io("<stdout>", e))
}

/// Runs a resolved manifest, writing results to `out`.
pub fn execute(m: &RunManifest, json: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let (set, scorer) = prepare(m)?;
    let scores = scorer.score_all(&set.pairs, m.jobs)?;
    match m.command {
        ManifestCommand::Score => {
            let mut s = String::new();
            for (i, sc) in scores.iter().enumerate() {
                match sc {
                    Some(x) => s.push_str(&format!("{i}\t{x}\n")),
                    None => s.push_str(&format!("{i}\tNA\n")),
                }
            }
            write_out(out, &s)
        }
        ManifestCommand::Eval => {
            let ci = m.bootstrap.map(|b| BootstrapOptions { resamples: b.resamples, level: b.level, seed: b.seed });
            let report = evaluate(&set, &scores, scorer.method, &m.setup, ci)?;
            let text = serde_json::to_string_pretty(&report)?;
            match json {
                Some(p) if p == Path::new("-") => write_out(out, &(text + "\n")),
                Some(p) => {
                    std::fs::write(p, text + "\n").map_err(|e| RotsError::io(p, e))?;
                    write_out(out, &format_table(&report))
                }
                None => write_out(out, &format_table(&report)),
            }
        }
    }
}

fn save_manifest(m: &RunManifest, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, m.to_json()? + "\n").map_err(|e| RotsError::io(p, e))?;
    }
    Ok(())
}

/// Validates every tree; returns the number of violations.
pub fn validate_trees(args: &ValidateArgs, out: &mut dyn Write) -> Result<usize> {
    let sentences = read_conllu(&args.trees)?;
    let mut report = String::new();
    let mut violations = 0;
    let mut tokens = 0;
    for (i, s) in sentences.iter().enumerate() {
        tokens += s.forms.len();
        let problem = match s.to_tree() {
            Err(e) => Some(e.to_string()),
            Ok(tree) => {
                let depth = args.depth.unwrap_or(tree.len());
                validate_rpp(&rpp_from_dependency_tree(&tree, depth)).err().map(|v| v.to_string())
            }
        };
        if let Some(p) = problem {
            violations += 1;
            report.push_str(&format!("sentence {i} (line {}): {p}\n", s.line));
        }
    }
    report.push_str(&format!("sentences {}  tokens {tokens}  violations {violations}\n", sentences.len()));
    write_out(out, &report)?;
    Ok(violations)
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Score(a) => {
            let m = manifest_from_args(&a, ManifestCommand::Score, None)?;
            save_manifest(&m, a.write_manifest.as_deref())?;
            execute(&m, None, out)
        }
        Command::Eval(a) => {
            let boot = a.bca.map(|b| BootstrapRecord { resamples: b, level: a.level, seed: a.seed });
            if !(a.level > 0.0 && a.level < 1.0) {
                return Err(usage("--level must lie in (0, 1)"));
            }
            let m = manifest_from_args(&a.common, ManifestCommand::Eval, boot)?;
            save_manifest(&m, a.common.write_manifest.as_deref())?;
            execute(&m, a.json.as_deref(), out)
        }
        Command::ValidateTrees(a) => match validate_trees(&a, out)? {
            0 => Ok(()),
            v => Err(RotsError::Data(format!("{v} trees failed validation"))),
        },
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| RotsError::io(&manifest, e))?;
            let m = RunManifest::from_json(&text).map_err(|e| RotsError::Usage(format!("{}: {e}", manifest.display())))?;
            execute(&m, None, out)
        }
    }
}
