//! Sentence similarities built on expectation-correction.
//!
//! Every similarity here has the shape `C~ * sum_ij G_ij cos(v_i, v_j)`:
//! an alignment `G` between the two sentences (the expectation step) times a
//! correction `C~ = alpha * C + 1 - alpha` for intra-sentence diversity.
//! AC uses the independent coupling with `alpha = 1`, WRD an entropic optimal
//! transport plan with `alpha = 0`, and ROTS walks down two recursive phrase
//! partitions, guiding each level's prior-regularized transport with the
//! previous level's plan.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{cosine, dot, norm, sqrt, Matrix};
use crate::rpp::{compose_phrases, parent_indices, RecursivePhrasePartition};
use crate::sequence::WeightedVectors;
use crate::transport::{
    solve_reduced, wrd_marginals, AlignmentMatrix, PriorMatrix, Regularizer, SolverOptions, TransportProblem,
};

/// How per-level ROTS scores are reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Mean over levels `1..=d`.
    Mean,
    Max,
    Min,
    /// Level `d`.
    Last,
    /// One specific level; level 0 is allowed.
    Level(usize),
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            "last" => Ok(Self::Last),
            other => {
                let k = other
                    .strip_prefix("level")
                    .or_else(|| other.strip_prefix('l'))
                    .map(|k| k.trim_start_matches(['(', ':', '=']).trim_end_matches(')'))
                    .and_then(|k| k.parse().ok());
                k.map(Self::Level)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown aggregation {s:?}")))
            }
        }
    }
}

/// Where the correction coefficient of a ROTS level is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionScope {
    /// From that level's phrase weights and vectors.
    #[default]
    PerLevel,
    /// Once from the word-level sequences, shared by every level.
    WordLevel,
}

/// Source of the recursive phrase partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TreeMode {
    #[default]
    Dependency,
    Binary,
}

/// Everything that determines a similarity run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    /// Correction strength in `[0, 1]`.
    pub alpha: f64,
    /// ROTS depth `d`.
    pub depth: usize,
    /// Prior strengths `eps_1 .. eps_d`.
    pub eps_schedule: Vec<f64>,
    /// Entropic regularization for WRD and PRD.
    pub wrd_reg: f64,
    /// Prior strength for the AC/WRD interpolation.
    pub interp_eps: f64,
    pub aggregation: Aggregation,
    pub tree_mode: TreeMode,
    pub correction: CorrectionScope,
    pub solver: SolverOptions,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            depth: 4,
            eps_schedule: vec![10.0; 4],
            wrd_reg: 0.1,
            interp_eps: 10.0,
            aggregation: Aggregation::Mean,
            tree_mode: TreeMode::Dependency,
            correction: CorrectionScope::PerLevel,
            solver: SolverOptions::default(),
        }
    }
}

impl SimilarityConfig {
    /// Sets the depth and a constant prior strength for every level.
    pub fn with_depth(mut self, depth: usize, eps: f64) -> Self {
        self.depth = depth;
        self.eps_schedule = vec![eps; depth];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.eps_schedule.len() < self.depth {
            return Err(Error::InvalidArgument(format!(
                "{} prior strengths for depth {}",
                self.eps_schedule.len(),
                self.depth
            )));
        }
        if self.eps_schedule.iter().any(|&e| !(e > 0.0)) || !(self.wrd_reg > 0.0) || !(self.interp_eps > 0.0) {
            return Err(Error::InvalidArgument("regularization strengths must be positive".into()));
        }
        if let Aggregation::Level(k) = self.aggregation {
            if k > self.depth {
                return Err(Error::InvalidArgument(format!("level {k} is deeper than depth {}", self.depth)));
            }
        }
        Ok(())
    }
}

/// Which similarity to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ac,
    Wrd,
    Interp,
    Prd,
    Rots,
}

impl Method {
    pub fn needs_partitions(self) -> bool {
        matches!(self, Self::Prd | Self::Rots)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ac => "ac",
            Self::Wrd => "wrd",
            Self::Interp => "interp",
            Self::Prd => "prd",
            Self::Rots => "rots",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ac" => Ok(Self::Ac),
            "wrd" | "ot" => Ok(Self::Wrd),
            "interp" => Ok(Self::Interp),
            "prd" => Ok(Self::Prd),
            "rots" => Ok(Self::Rots),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

/// Per-level solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagnostics {
    pub shape: (usize, usize),
    pub correction: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// `ROTS_0 .. ROTS_d` for one sentence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScores {
    pub scores: Vec<f64>,
    pub diagnostics: Vec<LevelDiagnostics>,
}

impl LevelScores {
    pub fn depth(&self) -> usize {
        self.scores.len().saturating_sub(1)
    }
}

fn nonzero_embedding<S: WeightedVectors + ?Sized>(s: &S) -> Result<Vec<f64>> {
    let x = s.embedding();
    if norm(&x) > 0.0 {
        Ok(x)
    } else {
        Err(Error::ZeroEmbedding)
    }
}

/// Cosine of the two additive-composition embeddings.
pub fn ac_similarity<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let x = nonzero_embedding(a)?;
    let y = nonzero_embedding(b)?;
    Ok(cosine(&x, &y))
}

/// `K = (sum w ||v||)^2 / ||sum w v||^2`, at least 1.
pub fn diversity<S: WeightedVectors + ?Sized>(s: &S) -> Result<f64> {
    let x = nonzero_embedding(s)?;
    let mass = s.total_mass();
    let k = mass * mass / dot(&x, &x);
    Ok(k.max(1.0))
}

/// `C~ = alpha * sqrt(K1 K2) + 1 - alpha`.
pub fn correction_coefficient<A, B>(a: &A, b: &B, alpha: f64) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let c = sqrt(diversity(a)? * diversity(b)?);
    Ok(alpha * c + 1.0 - alpha)
}

fn cosine_matrix<A, B>(a: &A, b: &B) -> Matrix
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let an: Vec<f64> = (0..a.len()).map(|i| norm(a.vector(i))).collect();
    let bn: Vec<f64> = (0..b.len()).map(|j| norm(b.vector(j))).collect();
    let mut c = Matrix::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            if an[i] > 0.0 && bn[j] > 0.0 {
                c[(i, j)] = (dot(a.vector(i), b.vector(j)) / (an[i] * bn[j])).clamp(-1.0, 1.0);
            }
        }
    }
    c
}

fn expectation(gamma: &Matrix, cos: &Matrix) -> f64 {
    gamma.as_slice().iter().zip(cos.as_slice()).map(|(g, c)| g * c).sum()
}

/// `C~ * sum_ij G_ij cos(a_i, b_j)`.
pub fn ec_similarity<A, B>(gamma: &Matrix, a: &A, b: &B, alpha: f64) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    if (gamma.rows(), gamma.cols()) != (a.len(), b.len()) {
        return Err(Error::Shape(format!(
            "alignment is {}x{} for sequences of {} and {}",
            gamma.rows(),
            gamma.cols(),
            a.len(),
            b.len()
        )));
    }
    let c = correction_coefficient(a, b, alpha)?;
    Ok(c * expectation(gamma, &cosine_matrix(a, b)))
}

/// Solves in a canonical orientation so that swapping the two sentences
/// yields exactly the transposed plan.
fn solve_oriented(
    cost: Matrix,
    mu: Vec<f64>,
    nu: Vec<f64>,
    prior: Option<(&Matrix, f64)>,
    reg: f64,
    opts: SolverOptions,
) -> Result<AlignmentMatrix> {
    if flip(&cost, &mu, &nu) {
        let prior_t = prior.map(|(p, e)| (p.transpose(), e));
        let prob = TransportProblem::new(cost.transpose(), nu, mu)?;
        let regularizer = match &prior_t {
            Some((p, eps)) => Regularizer::Prior { prior: p, eps: *eps },
            None => Regularizer::Entropy { reg },
        };
        let mut out = solve_reduced(&prob, regularizer, opts)?;
        out.gamma = out.gamma.transpose();
        core::mem::swap(&mut out.row_residual, &mut out.col_residual);
        Ok(out)
    } else {
        let prob = TransportProblem::new(cost, mu, nu)?;
        let regularizer = match prior {
            Some((p, eps)) => Regularizer::Prior { prior: p, eps },
            None => Regularizer::Entropy { reg },
        };
        solve_reduced(&prob, regularizer, opts)
    }
}

fn flip(cost: &Matrix, mu: &[f64], nu: &[f64]) -> bool {
    let (m, n) = (cost.rows(), cost.cols());
    if m != n {
        return m > n;
    }
    for i in 0..m {
        for j in 0..n {
            let (x, y) = (cost[(i, j)], cost[(j, i)]);
            if x != y {
                return x > y;
            }
        }
    }
    for (x, y) in mu.iter().zip(nu) {
        if x != y {
            return x > y;
        }
    }
    false
}

fn renormalize(p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.into_iter().map(|x| x / s).collect()
}

/// WRD plan: entropic transport with cosine cost and norm-weighted marginals.
pub fn wrd_alignment<A, B>(a: &A, b: &B, reg: f64, opts: SolverOptions) -> Result<(AlignmentMatrix, Matrix)>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let mu = renormalize(wrd_marginals(a)?);
    let nu = renormalize(wrd_marginals(b)?);
    let cos = cosine_matrix(a, b);
    let mut cost = cos.clone();
    cost.as_mut_slice().iter_mut().for_each(|c| *c = 1.0 - *c);
    Ok((solve_oriented(cost, mu, nu, None, reg, opts)?, cos))
}

/// `sum_ij G_ij cos(a_i, b_j)` under the WRD plan.
pub fn wrd_similarity<A, B>(a: &A, b: &B, reg: f64, opts: SolverOptions) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let (plan, cos) = wrd_alignment(a, b, reg, opts)?;
    Ok(expectation(&plan.gamma, &cos))
}

/// EC interpolation between WRD and AC: prior-OT towards `mu nu^T`, then EC.
pub fn interp_similarity<A, B>(a: &A, b: &B, alpha: f64, eps: f64, opts: SolverOptions) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let mu = renormalize(wrd_marginals(a)?);
    let nu = renormalize(wrd_marginals(b)?);
    let prior = PriorMatrix::product(&mu, &nu)?;
    let cos = cosine_matrix(a, b);
    let mut cost = cos.clone();
    cost.as_mut_slice().iter_mut().for_each(|c| *c = 1.0 - *c);
    let plan = solve_oriented(cost, mu, nu, Some((prior.matrix(), eps)), 0.0, opts)?;
    let c = correction_coefficient(a, b, alpha)?;
    Ok(c * expectation(&plan.gamma, &cos))
}

/// Spreads each parent cell `G_ij` over its child cells in proportion to
/// `mu_m nu_n`, then floors at [`crate::transport::PRIOR_FLOOR`].
///
/// `parents_1[m]` is the parent (row of `gamma_prev`) of child row `m`, and
/// likewise for columns.
pub fn coarse_to_fine_prior(
    gamma_prev: &Matrix,
    parents_1: &[usize],
    parents_2: &[usize],
    mu_next: &[f64],
    nu_next: &[f64],
) -> Result<PriorMatrix> {
    if parents_1.len() != mu_next.len() || parents_2.len() != nu_next.len() {
        return Err(Error::Shape("parent maps and child marginals differ in length".into()));
    }
    if parents_1.iter().any(|&p| p >= gamma_prev.rows()) || parents_2.iter().any(|&p| p >= gamma_prev.cols()) {
        return Err(Error::Shape("parent index outside the previous alignment".into()));
    }
    let mut block_mu = vec![0.0; gamma_prev.rows()];
    for (&p, &m) in parents_1.iter().zip(mu_next) {
        block_mu[p] += m;
    }
    let mut block_nu = vec![0.0; gamma_prev.cols()];
    for (&p, &n) in parents_2.iter().zip(nu_next) {
        block_nu[p] += n;
    }
    let mut pi = Matrix::zeros(mu_next.len(), nu_next.len());
    for (m, (&pm, &mu)) in parents_1.iter().zip(mu_next).enumerate() {
        for (n, (&pn, &nu)) in parents_2.iter().zip(nu_next).enumerate() {
            let denom = block_mu[pm] * block_nu[pn];
            pi[(m, n)] = if denom > 0.0 { gamma_prev[(pm, pn)] * (mu * nu / denom) } else { 0.0 };
        }
    }
    PriorMatrix::floored(pi)
}

/// Recursive optimal transport similarity at levels `0..=cfg.depth`.
///
/// Sentences shallower than `cfg.depth` repeat their finest level.
pub fn rots<A, B>(
    a: &A,
    b: &B,
    rpp1: &RecursivePhrasePartition,
    rpp2: &RecursivePhrasePartition,
    cfg: &SimilarityConfig,
) -> Result<LevelScores>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    cfg.validate()?;
    if rpp1.n() != a.len() || rpp2.n() != b.len() {
        return Err(Error::Shape(format!(
            "partitions cover {} and {} tokens, sentences have {} and {}",
            rpp1.n(),
            rpp2.n(),
            a.len(),
            b.len()
        )));
    }
    let word_correction = match cfg.correction {
        CorrectionScope::WordLevel => Some(correction_coefficient(a, b, cfg.alpha)?),
        CorrectionScope::PerLevel => None,
    };

    let top1 = compose_phrases(a, rpp1.level(0))?;
    let top2 = compose_phrases(b, rpp2.level(0))?;
    let c0 = match word_correction {
        Some(c) => c,
        None => correction_coefficient(&top1, &top2, cfg.alpha)?,
    };
    let mut scores = Vec::with_capacity(cfg.depth + 1);
    let mut diagnostics = Vec::with_capacity(cfg.depth + 1);
    scores.push(c0 * cosine(top1.vector(0), top2.vector(0)));
    diagnostics.push(LevelDiagnostics { shape: (1, 1), correction: c0, iterations: 0, residual: 0.0, converged: true });

    let mut gamma = Matrix::filled(1, 1, 1.0);
    for k in 1..=cfg.depth {
        let spans1 = rpp1.level(k);
        let spans2 = rpp2.level(k);
        let ph1 = compose_phrases(a, spans1)?;
        let ph2 = compose_phrases(b, spans2)?;
        let mu = renormalize(wrd_marginals(&ph1)?);
        let nu = renormalize(wrd_marginals(&ph2)?);
        let par1 = parent_indices(rpp1.level(k - 1), spans1);
        let par2 = parent_indices(rpp2.level(k - 1), spans2);
        let prior = coarse_to_fine_prior(&gamma, &par1, &par2, &mu, &nu)?;

        let cos = cosine_matrix(&ph1, &ph2);
        let mut cost = cos.clone();
        cost.as_mut_slice().iter_mut().for_each(|c| *c = 1.0 - *c);
        let plan = solve_oriented(cost, mu, nu, Some((prior.matrix(), cfg.eps_schedule[k - 1])), 0.0, cfg.solver)?;

        let c = match word_correction {
            Some(c) => c,
            None => correction_coefficient(&ph1, &ph2, cfg.alpha)?,
        };
        scores.push(c * expectation(&plan.gamma, &cos));
        diagnostics.push(LevelDiagnostics {
            shape: plan.shape(),
            correction: c,
            iterations: plan.iterations,
            residual: plan.max_residual(),
            converged: plan.converged,
        });
        gamma = plan.gamma;
    }
    Ok(LevelScores { scores, diagnostics })
}

/// Phrase-level WRD at partition level `k`.
pub fn prd<A, B>(
    a: &A,
    b: &B,
    rpp1: &RecursivePhrasePartition,
    rpp2: &RecursivePhrasePartition,
    k: usize,
    reg: f64,
    opts: SolverOptions,
) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    if rpp1.n() != a.len() || rpp2.n() != b.len() {
        return Err(Error::Shape("partitions do not match the sentences".into()));
    }
    let ph1 = compose_phrases(a, rpp1.level(k))?;
    let ph2 = compose_phrases(b, rpp2.level(k))?;
    wrd_similarity(&ph1, &ph2, reg, opts)
}

/// Reduces per-level scores with `mode`.
pub fn aggregate(scores: &LevelScores, mode: Aggregation) -> Result<f64> {
    let s = &scores.scores;
    if s.is_empty() {
        return Err(Error::Empty("level scores"));
    }
    let d = s.len() - 1;
    let deep = &s[1..];
    match mode {
        Aggregation::Last => Ok(s[d]),
        Aggregation::Level(k) if k <= d => Ok(s[k]),
        Aggregation::Level(k) => Err(Error::InvalidArgument(format!("level {k} is deeper than depth {d}"))),
        _ if deep.is_empty() => Err(Error::Empty("no levels below the root")),
        Aggregation::Mean => Ok(deep.iter().sum::<f64>() / deep.len() as f64),
        Aggregation::Max => Ok(deep.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Aggregation::Min => Ok(deep.iter().copied().fold(f64::INFINITY, f64::min)),
    }
}

/// Scores one pair with `method`. Partitions are required for PRD and ROTS.
pub fn score_pair<A, B>(
    method: Method,
    a: &A,
    b: &B,
    partitions: Option<(&RecursivePhrasePartition, &RecursivePhrasePartition)>,
    cfg: &SimilarityConfig,
) -> Result<f64>
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let need = || partitions.ok_or_else(|| Error::InvalidArgument(format!("{} needs phrase partitions", method.name())));
    match method {
        Method::Ac => ac_similarity(a, b),
        Method::Wrd => wrd_similarity(a, b, cfg.wrd_reg, cfg.solver),
        Method::Interp => interp_similarity(a, b, cfg.alpha, cfg.interp_eps, cfg.solver),
        Method::Prd => {
            let (r1, r2) = need()?;
            prd(a, b, r1, r2, cfg.depth, cfg.wrd_reg, cfg.solver)
        }
        Method::Rots => {
            let (r1, r2) = need()?;
            aggregate(&rots(a, b, r1, r2, cfg)?, cfg.aggregation)
        }
    }
}
