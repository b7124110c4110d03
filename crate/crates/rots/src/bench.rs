//! Benchmark runner: score sentence pairs, correlate with gold ratings and
//! attach bootstrap intervals.

use std::fmt::Write as _;

use rayon::prelude::*;
use rots_core::rpp::{rpp_binary, rpp_from_dependency_tree};
use rots_core::similarity::{score_pair, TreeMode};
use rots_core::stats::{bca_interval, pearson, pearson_at, spearman, spearman_at, BootstrapOptions};
use rots_core::{DependencyTree, Method, RecursivePhrasePartition, SentencePreprocessor, SimilarityConfig, WeightedVectors};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RotsError};
use crate::io::conllu::ConlluSentence;
use crate::io::pairs::PairRecord;

/// A gold-rated sentence pair, optionally with dependency trees.
#[derive(Debug, Clone)]
pub struct ScoredPair {
    /// Source line in the pair file.
    pub line: usize,
    pub gold: f64,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub trees: Option<(DependencyTree, DependencyTree)>,
    pub subtask: Option<String>,
}

impl ScoredPair {
    /// Tokens of each side: the tree forms when trees are attached.
    pub fn tokens(&self) -> (&[String], &[String]) {
        match &self.trees {
            Some((a, b)) => (a.tokens(), b.tokens()),
            None => (&self.left, &self.right),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoredPairSet {
    pub label: String,
    pub pairs: Vec<ScoredPair>,
}

impl ScoredPairSet {
    /// Joins pair records with an optional tree sidecar: pair `i` takes
    /// sentences `2i` and `2i + 1`.
    pub fn new(label: impl Into<String>, records: Vec<PairRecord>, trees: Option<&[ConlluSentence]>) -> Result<Self> {
        if records.is_empty() {
            return Err(RotsError::Data("no sentence pairs".into()));
        }
        if let Some(t) = trees {
            if t.len() != 2 * records.len() {
                return Err(RotsError::Data(format!(
                    "tree file has {} sentences for {} pairs, expected {}",
                    t.len(),
                    records.len(),
                    2 * records.len()
                )));
            }
        }
        let to_tree = |s: &ConlluSentence| {
            s.to_tree()
                .map_err(|e| RotsError::Data(format!("tree starting at line {}: {e}", s.line)))
        };
        let mut pairs = Vec::with_capacity(records.len());
        for (i, r) in records.into_iter().enumerate() {
            let trees = match trees {
                Some(t) => Some((to_tree(&t[2 * i])?, to_tree(&t[2 * i + 1])?)),
                None => None,
            };
            pairs.push(ScoredPair {
                line: r.line,
                gold: r.gold,
                left: r.left,
                right: r.right,
                trees,
                subtask: r.subtask,
            });
        }
        Ok(Self { label: label.into(), pairs })
    }

    /// Every sentence of the set, for corpus-level converter fitting.
    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.pairs
            .iter()
            .flat_map(|p| {
                let (a, b) = p.tokens();
                [a.to_vec(), b.to_vec()]
            })
            .collect()
    }
}

/// A preprocessor, a method and a configuration: everything needed to score a pair.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub method: Method,
    pub pre: SentencePreprocessor,
    pub cfg: SimilarityConfig,
}

impl Scorer {
    fn partition(&self, tree: Option<&DependencyTree>, n: usize) -> rots_core::Result<RecursivePhrasePartition> {
        match (self.cfg.tree_mode, tree) {
            (TreeMode::Binary, _) => Ok(rpp_binary(n, self.cfg.depth)),
            (TreeMode::Dependency, Some(t)) => Ok(rpp_from_dependency_tree(t, self.cfg.depth)),
            (TreeMode::Dependency, None) => {
                Err(rots_core::Error::InvalidArgument("dependency trees are required for this method".into()))
            }
        }
    }

    pub fn score(&self, pair: &ScoredPair) -> rots_core::Result<f64> {
        let (ta, tb) = pair.tokens();
        let a = self.pre.process(ta)?;
        let b = self.pre.process(tb)?;
        if !self.method.needs_partitions() {
            return score_pair(self.method, &a, &b, None, &self.cfg);
        }
        let trees = pair.trees.as_ref();
        let r1 = self.partition(trees.map(|t| &t.0), a.len())?;
        let r2 = self.partition(trees.map(|t| &t.1), b.len())?;
        score_pair(self.method, &a, &b, Some((&r1, &r2)), &self.cfg)
    }

    /// Scores every pair in order; `jobs > 1` scores them on a thread pool.
    /// Failed pairs are `None`.
    pub fn score_all(&self, pairs: &[ScoredPair], jobs: usize) -> Result<Vec<Option<f64>>> {
        let one = |p: &ScoredPair| match self.score(p) {
            Ok(s) if s.is_finite() => Some(s),
            Ok(_) => None,
            Err(e) => {
                log::debug!("pair on line {} not scored: {e}", p.line);
                None
            }
        };
        if jobs <= 1 {
            return Ok(pairs.iter().map(one).collect());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| RotsError::Data(format!("thread pool: {e}")))?;
        Ok(pool.install(|| pairs.par_iter().map(one).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskReport {
    pub name: String,
    /// Pairs scored and used in the correlations.
    pub pairs: usize,
    pub excluded: usize,
    /// Pearson r x 100.
    pub pearson: f64,
    /// Spearman rho x 100.
    pub spearman: f64,
    pub pearson_ci: Option<Interval>,
    pub spearman_ci: Option<Interval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRecord {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

/// Correlations for a dataset. With several subtasks the headline numbers
/// are the unweighted means of the subtask correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub setup: String,
    pub pairs: usize,
    pub excluded: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub pearson_ci: Option<Interval>,
    pub spearman_ci: Option<Interval>,
    pub bootstrap: Option<BootstrapRecord>,
    pub subtasks: Vec<SubtaskReport>,
}

/// Minimum pairs for a bootstrap interval.
pub const MIN_BOOTSTRAP_PAIRS: usize = 10;
/// Minimum resamples for a bootstrap interval.
pub const MIN_BOOTSTRAP_RESAMPLES: usize = 100;

fn interval_for<F>(n: usize, stat: F, opts: BootstrapOptions, what: &str) -> Result<Interval>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    let r = bca_interval(n, stat, opts)?;
    if r.mostly_degenerate() {
        log::warn!("{what}: {} of {} resamples were degenerate and dropped", r.dropped, r.dropped + r.kept);
    }
    Ok(Interval { lo: r.lo, hi: r.hi })
}

fn subtask_report(
    name: &str,
    gold: &[f64],
    pred: &[f64],
    excluded: usize,
    ci: Option<BootstrapOptions>,
) -> Result<SubtaskReport> {
    let pear = pearson(pred, gold).map_err(|e| RotsError::Data(format!("{name}: pearson: {e}")))?;
    let spear = spearman(pred, gold).map_err(|e| RotsError::Data(format!("{name}: spearman: {e}")))?;
    let (pearson_ci, spearman_ci) = match ci {
        None => (None, None),
        Some(opts) => {
            if gold.len() < MIN_BOOTSTRAP_PAIRS {
                return Err(RotsError::Usage(format!(
                    "{name}: bootstrap needs at least {MIN_BOOTSTRAP_PAIRS} scored pairs, have {}",
                    gold.len()
                )));
            }
            let p = interval_for(gold.len(), |i| pearson_at(pred, gold, i).map(|r| 100.0 * r), opts, name)?;
            let s = interval_for(gold.len(), |i| spearman_at(pred, gold, i).map(|r| 100.0 * r), opts, name)?;
            (Some(p), Some(s))
        }
    };
    Ok(SubtaskReport {
        name: name.to_owned(),
        pairs: gold.len(),
        excluded,
        pearson: 100.0 * pear,
        spearman: 100.0 * spear,
        pearson_ci,
        spearman_ci,
    })
}

/// Builds a report from per-pair scores (`None` marks excluded pairs).
pub fn evaluate(
    set: &ScoredPairSet,
    scores: &[Option<f64>],
    method: Method,
    setup: &str,
    ci: Option<BootstrapOptions>,
) -> Result<EvalReport> {
    if scores.len() != set.pairs.len() {
        return Err(RotsError::Data("score count differs from pair count".into()));
    }
    if let Some(o) = ci {
        if o.resamples < MIN_BOOTSTRAP_RESAMPLES {
            return Err(RotsError::Usage(format!(
                "bootstrap needs at least {MIN_BOOTSTRAP_RESAMPLES} resamples, got {}",
                o.resamples
            )));
        }
    }
    // Subtasks in order of first appearance.
    let mut names: Vec<&str> = Vec::new();
    let mut groups: Vec<(Vec<f64>, Vec<f64>, usize)> = Vec::new();
    for (p, s) in set.pairs.iter().zip(scores) {
        let name = p.subtask.as_deref().unwrap_or(&set.label);
        let k = match names.iter().position(|&n| n == name) {
            Some(k) => k,
            None => {
                names.push(name);
                groups.push((Vec::new(), Vec::new(), 0));
                names.len() - 1
            }
        };
        match s {
            Some(s) => {
                groups[k].0.push(p.gold);
                groups[k].1.push(*s);
            }
            None => groups[k].2 += 1,
        }
    }
    let excluded: usize = groups.iter().map(|g| g.2).sum();
    if excluded == set.pairs.len() {
        return Err(RotsError::Data("every pair was excluded".into()));
    }
    let mut subtasks = Vec::with_capacity(names.len());
    for (name, (gold, pred, excl)) in names.iter().zip(&groups) {
        subtasks.push(subtask_report(name, gold, pred, *excl, ci)?);
    }
    let k = subtasks.len() as f64;
    let single = subtasks.len() == 1;
    Ok(EvalReport {
        dataset: set.label.clone(),
        method: method.name().to_owned(),
        setup: setup.to_owned(),
        pairs: set.pairs.len() - excluded,
        excluded,
        pearson: subtasks.iter().map(|s| s.pearson).sum::<f64>() / k,
        spearman: subtasks.iter().map(|s| s.spearman).sum::<f64>() / k,
        pearson_ci: if single { subtasks[0].pearson_ci } else { None },
        spearman_ci: if single { subtasks[0].spearman_ci } else { None },
        bootstrap: ci.map(|o| BootstrapRecord { resamples: o.resamples, level: o.level, seed: o.seed }),
        subtasks,
    })
}

/// Scores a dataset and evaluates it.
pub fn run_benchmark(
    set: &ScoredPairSet,
    scorer: &Scorer,
    ci: Option<BootstrapOptions>,
    jobs: usize,
) -> Result<(EvalReport, Vec<Option<f64>>)> {
    let scores = scorer.score_all(&set.pairs, jobs)?;
    let report = evaluate(set, &scores, scorer.method, &scorer.pre.setup().code(), ci)?;
    Ok((report, scores))
}

fn fmt_ci(ci: Option<Interval>) -> String {
    ci.map_or_else(String::new, |c| format!("[{:.2}, {:.2}]", c.lo, c.hi))
}

/// Plain-text table with correlations x 100 to two decimals.
pub fn format_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let setup = if r.setup.is_empty() { "-" } else { &r.setup };
    let _ = writeln!(s, "dataset {}  method {}  setup {}", r.dataset, r.method, setup);
    let _ = writeln!(
        s,
        "{:<24} {:>6} {:>6} {:>8} {:>16} {:>8} {:>16}",
        "subtask", "pairs", "excl", "pearson", "pearson CI", "spearman", "spearman CI"
    );
    let mut row = |name: &str, pairs, excl, p: f64, pci, sp: f64, sci| {
        let _ = writeln!(
            s,
            "{:<24} {:>6} {:>6} {:>8.2} {:>16} {:>8.2} {:>16}",
            name,
            pairs,
            excl,
            p,
            fmt_ci(pci),
            sp,
            fmt_ci(sci)
        );
    };
    if r.subtasks.len() > 1 {
        for t in &r.subtasks {
            row(&t.name, t.pairs, t.excluded, t.pearson, t.pearson_ci, t.spearman, t.spearman_ci);
        }
        row("mean", r.pairs, r.excluded, r.pearson, r.pearson_ci, r.spearman, r.spearman_ci);
    } else {
        row(&r.dataset, r.pairs, r.excluded, r.pearson, r.pearson_ci, r.spearman, r.spearman_ci);
    }
    s
}
