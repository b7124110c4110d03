//! Vector converters and the named preprocessing setups built from them.
//!
//! Converters act at four levels, always applied in this order:
//!
//! * vocabulary: all-but-the-top (`A`), then conceptor negation (`C`);
//! * word: SIF (`W`) or uSIF (`U`) weights, uniform otherwise;
//! * sentence: scaling (`S`);
//! * corpus: first principal component removal (`R`), then weighted
//!   piecewise removal of the top `p` components (`P`).
//!
//! Corpus components are fitted on the weighted sentence embeddings of a
//! corpus after the earlier stages, and removed from every word vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::embeddings::{EmbeddingStore, FrequencyTable};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, pow, sqrt, symmetric_eigen, Matrix};
use crate::sequence::{WeightedSequence, WeightedVectors};

/// SIF weight `a / (a + p(token))`; unseen tokens weigh 1.
pub fn sif_weight(freq: &FrequencyTable, a: f64, token: &str) -> f64 {
    a / (a + freq.probability(token))
}

/// The uSIF weighting constant, derived from the vocabulary size and the
/// expected sentence length `n`.
///
/// With `V` distinct tokens, a token is expected to appear in a sentence of
/// `n` tokens with probability `threshold = 1 - (1 - 1/V)^n`. The share of
/// vocabulary above that threshold is `alpha`, `Z = V / 2`, and
/// `a = (1 - alpha) / (alpha * Z)`. Weights are `a / (a/2 + p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usif {
    /// `+inf` when no token clears the threshold; every weight is then 2.
    pub a: f64,
}

impl Usif {
    pub fn fit(freq: &FrequencyTable, n: f64) -> Result<Self> {
        if freq.is_empty() {
            return Err(Error::Empty("frequency table"));
        }
        if !(n > 0.0) {
            return Err(Error::InvalidArgument(format!("average sentence length must be positive, got {n}")));
        }
        let vocab = freq.vocab_size() as f64;
        let threshold = 1.0 - pow(1.0 - 1.0 / vocab, n);
        let above = freq.iter().filter(|(t, _)| freq.probability(t) > threshold).count();
        let alpha = above as f64 / vocab;
        let z = 0.5 * vocab;
        let a = if alpha > 0.0 { (1.0 - alpha) / (alpha * z) } else { f64::INFINITY };
        Ok(Self { a })
    }

    pub fn weight_for_probability(&self, p: f64) -> f64 {
        if self.a.is_infinite() {
            return 2.0;
        }
        self.a / (0.5 * self.a + p)
    }
}

/// uSIF weight of `token`; decreasing in `p(token)`, maximal (`2`) at `p = 0`.
pub fn usif_weight(freq: &FrequencyTable, n: f64, token: &str) -> Result<f64> {
    Ok(Usif::fit(freq, n)?.weight_for_probability(freq.probability(token)))
}

/// Per-token weighting rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    Uniform,
    Sif { a: f64 },
    Usif(Usif),
}

impl WeightScheme {
    pub fn weight(&self, freq: Option<&FrequencyTable>, token: &str) -> f64 {
        let p = || freq.map_or(0.0, |f| f.probability(token));
        match *self {
            Self::Uniform => 1.0,
            Self::Sif { a } => a / (a + p()),
            Self::Usif(u) => u.weight_for_probability(p()),
        }
    }
}

/// First and second moments of a vocabulary: `E[v]` and `E[v v^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabMoments {
    count: usize,
    sum: Vec<f64>,
    outer_sum: Matrix,
}

impl VocabMoments {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, sum: vec![0.0; dim], outer_sum: Matrix::zeros(dim, dim) }
    }

    pub fn from_store(store: &EmbeddingStore) -> Self {
        let mut m = Self::new(store.dim());
        for v in store.vectors() {
            m.accumulate(v);
        }
        m
    }

    /// Adds one vector. Only the upper triangle of the outer sum is kept.
    pub fn accumulate(&mut self, v: &[f64]) {
        let d = self.sum.len();
        assert_eq!(v.len(), d);
        self.count += 1;
        axpy(1.0, v, &mut self.sum);
        for i in 0..d {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            let row = &mut self.outer_sum.row_mut(i)[i..];
            axpy(vi, &v[i..], row);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let c = self.count.max(1) as f64;
        self.sum.iter().map(|x| x / c).collect()
    }

    /// `E[v v^T]`, symmetric.
    pub fn second_moment(&self) -> Matrix {
        let d = self.dim();
        let c = self.count.max(1) as f64;
        let mut s = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let x = self.outer_sum[(i, j)] / c;
                s[(i, j)] = x;
                s[(j, i)] = x;
            }
        }
        s
    }

    /// Covariance `E[v v^T] - E[v] E[v]^T`.
    pub fn covariance(&self) -> Matrix {
        let mean = self.mean();
        let mut s = self.second_moment();
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                s[(i, j)] -= mean[i] * mean[j];
            }
        }
        s
    }

    /// Moments of the vectors after applying `map`.
    fn mapped(&self, map: &AffineMap) -> (Vec<f64>, Matrix) {
        let d = self.dim();
        let mean = self.mean();
        let s = &map.shift;
        let mut centered = self.second_moment();
        for i in 0..d {
            for j in 0..d {
                centered[(i, j)] += -mean[i] * s[j] - s[i] * mean[j] + s[i] * s[j];
            }
        }
        let diff: Vec<f64> = mean.iter().zip(s).map(|(m, s)| m - s).collect();
        let new_mean = map.matrix.mul_vec(&diff);
        let second = map.matrix.matmul(&centered).matmul(&map.matrix.transpose());
        (new_mean, second)
    }
}

/// `v -> M (v - shift)`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub shift: Vec<f64>,
    pub matrix: Matrix,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self { shift: vec![0.0; dim], matrix: Matrix::identity(dim) }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = v.iter().zip(&self.shift).map(|(x, s)| x - s).collect();
        self.matrix.mul_vec(&c)
    }

    /// `other` after `self`. `other` must be linear (zero shift).
    pub fn then(&self, other: &AffineMap) -> AffineMap {
        assert!(other.shift.iter().all(|&x| x == 0.0), "only linear maps compose after a shift");
        AffineMap { shift: self.shift.clone(), matrix: other.matrix.matmul(&self.matrix) }
    }
}

/// Fitted all-but-the-top transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AllButTheTop {
    pub mean: Vec<f64>,
    /// Removed principal directions, unit norm, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Number of components asked for; more than `components.len()` when the
    /// vocabulary is rank deficient.
    pub requested: usize,
}

impl AllButTheTop {
    pub fn fit(moments: &VocabMoments, d: usize) -> Self {
        let mean = moments.mean();
        let components = if d == 0 { Vec::new() } else { top_components(&moments.covariance(), d) };
        Self { mean, components, requested: d }
    }

    pub fn map(&self) -> AffineMap {
        AffineMap { shift: self.mean.clone(), matrix: projector_complement(&self.components, self.mean.len()) }
    }
}

/// Leading eigenvectors of a covariance-like matrix with eigenvalue above
/// `1e-12` of the largest.
fn top_components(cov: &Matrix, d: usize) -> Vec<Vec<f64>> {
    let eig = symmetric_eigen(cov);
    let max = eig.values.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Vec::new();
    }
    eig.values
        .iter()
        .zip(eig.vectors)
        .take(d)
        .take_while(|(&l, _)| l > 1e-12 * max)
        .map(|(_, v)| v)
        .collect()
}

fn projector_complement(components: &[Vec<f64>], dim: usize) -> Matrix {
    let mut p = Matrix::identity(dim);
    for u in components {
        for i in 0..dim {
            for j in 0..dim {
                p[(i, j)] -= u[i] * u[j];
            }
        }
    }
    p
}

/// Removes the vocabulary mean and the top `d` principal components.
pub fn all_but_the_top(store: &EmbeddingStore, d: usize) -> Result<(EmbeddingStore, AllButTheTop)> {
    if store.count() <= d {
        return Err(Error::InvalidArgument(format!(
            "all-but-the-top needs more than {d} vectors, store has {}",
            store.count()
        )));
    }
    let fit = AllButTheTop::fit(&VocabMoments::from_store(store), d);
    Ok((apply_map(store, &fit.map()), fit))
}

/// Fitted conceptor negation `I - C`, with `C = R (R + alpha^-2 I)^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptorNegation {
    pub negation: Matrix,
}

impl ConceptorNegation {
    /// `correlation` is `R = E[v v^T]` of the vocabulary being transformed.
    pub fn fit(correlation: &Matrix, alpha_c: f64) -> Result<Self> {
        if !(alpha_c > 0.0) {
            return Err(Error::InvalidArgument(format!("conceptor aperture must be positive, got {alpha_c}")));
        }
        let d = correlation.rows();
        let inv_sq = 1.0 / (alpha_c * alpha_c);
        let eig = symmetric_eigen(correlation);
        let mut neg = Matrix::zeros(d, d);
        for (&lambda, e) in eig.values.iter().zip(&eig.vectors) {
            // eigenvalue of I - C along e: alpha^-2 / (lambda + alpha^-2)
            let g = inv_sq / (lambda.max(0.0) + inv_sq);
            for i in 0..d {
                for j in 0..d {
                    neg[(i, j)] += g * e[i] * e[j];
                }
            }
        }
        Ok(Self { negation: neg })
    }

    pub fn map(&self) -> AffineMap {
        AffineMap { shift: vec![0.0; self.negation.rows()], matrix: self.negation.clone() }
    }
}

/// Applies `I - C` to every vector of the store.
pub fn conceptor_negation(store: &EmbeddingStore, alpha_c: f64) -> Result<(EmbeddingStore, ConceptorNegation)> {
    if store.is_empty() {
        return Err(Error::Empty("embedding store"));
    }
    let moments = VocabMoments::from_store(store);
    let fit = ConceptorNegation::fit(&moments.second_moment(), alpha_c)?;
    Ok((apply_map(store, &fit.map()), fit))
}

fn apply_map(store: &EmbeddingStore, map: &AffineMap) -> EmbeddingStore {
    let mut out = store.clone();
    out.transform(|v| {
        let w = map.apply(v);
        v.copy_from_slice(&w);
    });
    out
}

/// How the sentence-level `S` converter rescales word vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleMode {
    /// Every nonzero word vector is scaled to unit L2 norm.
    #[default]
    UnitVector,
    /// Every dimension is divided by its L2 norm over the sentence's tokens.
    DimensionWise,
}

/// The `S` converter: unit-normalizes each nonzero word vector.
pub fn unit_scale(ws: &WeightedSequence) -> WeightedSequence {
    scale_sentence(ws, ScaleMode::UnitVector)
}

pub fn scale_sentence(ws: &WeightedSequence, mode: ScaleMode) -> WeightedSequence {
    let mut out = ws.clone();
    match mode {
        ScaleMode::UnitVector => {
            for v in out.vectors_mut() {
                let n = norm(v);
                if n > 0.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                }
            }
        }
        ScaleMode::DimensionWise => {
            let d = ws.dim();
            let mut col = vec![0.0; d];
            for i in 0..ws.len() {
                for (c, x) in col.iter_mut().zip(ws.vector(i)) {
                    *c += x * x;
                }
            }
            let col: Vec<f64> = col.into_iter().map(sqrt).collect();
            for v in out.vectors_mut() {
                for (x, &c) in v.iter_mut().zip(&col) {
                    if c > 0.0 {
                        *x /= c;
                    }
                }
            }
        }
    }
    out
}

/// Corpus-level removal flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalMode {
    /// Remove the first principal direction entirely.
    First,
    /// Remove the top `p` directions, each weighted by `sigma_i / sum sigma`.
    Piecewise { p: usize },
}

/// Top singular directions of a corpus of sentence embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub mode: RemovalMode,
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

/// Fits the top singular directions of the (uncentered) embedding matrix.
pub fn fit_corpus_components(embeddings: &[Vec<f64>], mode: RemovalMode) -> Result<CorpusStats> {
    let want = match mode {
        RemovalMode::First => 1,
        RemovalMode::Piecewise { p } => {
            if p == 0 {
                return Err(Error::InvalidArgument("piecewise removal needs p >= 1".into()));
            }
            p
        }
    };
    let need = (want + 1).max(2);
    if embeddings.len() < need {
        return Err(Error::InvalidArgument(format!(
            "component removal needs at least {need} sentence embeddings, got {}",
            embeddings.len()
        )));
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::Shape("ragged sentence embeddings".into()));
    }
    if embeddings.iter().all(|e| e.iter().all(|&x| x == 0.0)) {
        return Err(Error::Undefined("all sentence embeddings are zero"));
    }

    let n = embeddings.len();
    let (components, values) = if d <= n {
        // Eigenvectors of X^T X are the right singular vectors.
        let mut gram = Matrix::zeros(d, d);
        for e in embeddings {
            for i in 0..d {
                if e[i] != 0.0 {
                    axpy(e[i], e, gram.row_mut(i));
                }
            }
        }
        let eig = symmetric_eigen(&gram);
        (eig.vectors, eig.values)
    } else {
        // Work with X X^T and map left singular vectors back: v = X^T u / sigma.
        let mut gram = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = dot(&embeddings[i], &embeddings[j]);
                gram[(i, j)] = x;
                gram[(j, i)] = x;
            }
        }
        let eig = symmetric_eigen(&gram);
        let vectors = eig
            .vectors
            .iter()
            .zip(&eig.values)
            .map(|(u, &l)| {
                let mut v = vec![0.0; d];
                for (k, e) in embeddings.iter().enumerate() {
                    axpy(u[k], e, &mut v);
                }
                let s = norm(&v);
                if s > 0.0 && l > 0.0 {
                    v.iter_mut().for_each(|x| *x /= s);
                }
                v
            })
            .collect();
        (vectors, eig.values)
    };
    let max = values.first().copied().unwrap_or(0.0);
    let mut comps = Vec::new();
    let mut sigmas = Vec::new();
    for (v, &l) in components.into_iter().zip(&values).take(want) {
        if !(l > 1e-12 * max) {
            break;
        }
        comps.push(v);
        sigmas.push(sqrt(l));
    }
    Ok(CorpusStats { mode, components: comps, singular_values: sigmas })
}

/// `First`: `v - <v,u1> u1`. `Piecewise`: `v - sum_i (sigma_i / sum_j sigma_j) <v,u_i> u_i`.
pub fn remove_components(v: &[f64], stats: &CorpusStats) -> Vec<f64> {
    let mut out = v.to_vec();
    remove_components_in_place(&mut out, stats);
    out
}

fn remove_components_in_place(v: &mut [f64], stats: &CorpusStats) {
    match stats.mode {
        RemovalMode::First => {
            if let Some(u) = stats.components.first() {
                let c = dot(v, u);
                axpy(-c, u, v);
            }
        }
        RemovalMode::Piecewise { .. } => {
            let total: f64 = stats.singular_values.iter().sum();
            if !(total > 0.0) {
                return;
            }
            let coeffs: Vec<f64> = stats
                .components
                .iter()
                .zip(&stats.singular_values)
                .map(|(u, s)| s / total * dot(v, u))
                .collect();
            for (u, c) in stats.components.iter().zip(coeffs) {
                axpy(-c, u, v);
            }
        }
    }
}

/// Numeric knobs of the converters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    /// SIF smoothing `a`.
    pub sif_a: f64,
    /// Expected sentence length for uSIF.
    pub usif_n: f64,
    /// Components removed by all-but-the-top.
    pub abtt_d: usize,
    /// Conceptor aperture.
    pub conceptor_alpha: f64,
    /// Components removed piecewise.
    pub piecewise_p: usize,
    pub scale_mode: ScaleMode,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self { sif_a: 1e-3, usif_n: 11.0, abtt_d: 3, conceptor_alpha: 2.0, piecewise_p: 5, scale_mode: ScaleMode::UnitVector }
    }
}

/// A set of converters named by letters from `WUACSRP`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineSetup {
    pub sif: bool,
    pub usif: bool,
    pub abtt: bool,
    pub conceptor: bool,
    pub scale: bool,
    pub remove_first: bool,
    pub piecewise: bool,
    pub params: ConverterParams,
}

impl PipelineSetup {
    /// Parses a case-insensitive setup code such as `"SWC"` or `"surca"`.
    /// Letter order does not matter; `+` and whitespace are ignored.
    pub fn parse(code: &str) -> Result<Self> {
        let mut s = Self::default();
        for ch in code.chars() {
            let flag = match ch.to_ascii_uppercase() {
                'W' => &mut s.sif,
                'U' => &mut s.usif,
                'A' => &mut s.abtt,
                'C' => &mut s.conceptor,
                'S' => &mut s.scale,
                'R' => &mut s.remove_first,
                'P' => &mut s.piecewise,
                '+' | ' ' | '-' => continue,
                other => return Err(Error::InvalidSetup(format!("unknown converter {other:?} in {code:?}"))),
            };
            if *flag {
                return Err(Error::InvalidSetup(format!("converter {ch:?} repeated in {code:?}")));
            }
            *flag = true;
        }
        if s.sif && s.usif {
            return Err(Error::InvalidSetup(format!("{code:?} combines W and U word weights")));
        }
        Ok(s)
    }

    pub fn with_params(mut self, params: ConverterParams) -> Self {
        self.params = params;
        self
    }

    /// Canonical code, e.g. `SURCA`.
    pub fn code(&self) -> String {
        let mut c = String::new();
        for (on, ch) in [
            (self.scale, 'S'),
            (self.usif, 'U'),
            (self.sif, 'W'),
            (self.remove_first, 'R'),
            (self.piecewise, 'P'),
            (self.conceptor, 'C'),
            (self.abtt, 'A'),
        ] {
            if on {
                c.push(ch);
            }
        }
        c
    }

    pub fn needs_corpus(&self) -> bool {
        self.remove_first || self.piecewise
    }

    pub fn needs_frequencies(&self) -> bool {
        self.sif || self.usif
    }

    pub fn needs_vocabulary(&self) -> bool {
        self.abtt || self.conceptor
    }
}

/// Vocabulary-level transform fitted from vocabulary moments: `A`, then `C`.
pub fn fit_vocabulary_map(setup: &PipelineSetup, moments: &VocabMoments) -> Result<(AffineMap, Option<AllButTheTop>)> {
    let dim = moments.dim();
    let mut map = AffineMap::identity(dim);
    let mut abtt = None;
    if setup.abtt {
        if moments.count() <= setup.params.abtt_d {
            return Err(Error::InvalidArgument(format!(
                "all-but-the-top needs more than {} vectors, vocabulary has {}",
                setup.params.abtt_d,
                moments.count()
            )));
        }
        let fit = AllButTheTop::fit(moments, setup.params.abtt_d);
        map = fit.map();
        abtt = Some(fit);
    }
    if setup.conceptor {
        if moments.count() == 0 {
            return Err(Error::Empty("vocabulary"));
        }
        let (_, second) = moments.mapped(&map);
        let c = ConceptorNegation::fit(&second, setup.params.conceptor_alpha)?;
        map = map.then(&c.map());
    }
    Ok((map, abtt))
}

/// Maps a token sequence to a [`WeightedSequence`] under a fitted setup.
///
/// Out-of-vocabulary tokens keep their position with weight 0 and a zero
/// vector, so token indices stay aligned with any parse of the sentence.
#[derive(Debug, Clone)]
pub struct SentencePreprocessor {
    setup: PipelineSetup,
    store: EmbeddingStore,
    freq: Option<FrequencyTable>,
    scheme: WeightScheme,
    removals: Vec<CorpusStats>,
    abtt: Option<AllButTheTop>,
}

impl SentencePreprocessor {
    pub fn setup(&self) -> &PipelineSetup {
        &self.setup
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn weight_scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn corpus_stats(&self) -> &[CorpusStats] {
        &self.removals
    }

    /// The all-but-the-top fit, when `A` is part of the setup.
    pub fn abtt(&self) -> Option<&AllButTheTop> {
        self.abtt.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    fn weighted_scaled<S: AsRef<str>>(&self, tokens: &[S]) -> Result<WeightedSequence> {
        let dim = self.store.dim();
        let zero = vec![0.0; dim];
        let mut ws = WeightedSequence::new(dim);
        let mut hits = 0;
        for t in tokens {
            let t = t.as_ref();
            match self.store.lookup(t) {
                Some(v) => {
                    hits += 1;
                    ws.push(t, self.scheme.weight(self.freq.as_ref(), t), v)?;
                }
                None => ws.push(t, 0.0, &zero)?,
            }
        }
        if hits == 0 {
            return Err(Error::Empty("sentence has no in-vocabulary tokens"));
        }
        if self.setup.scale {
            ws = scale_sentence(&ws, self.setup.params.scale_mode);
        }
        Ok(ws)
    }

    pub fn process<S: AsRef<str>>(&self, tokens: &[S]) -> Result<WeightedSequence> {
        let mut ws = self.weighted_scaled(tokens)?;
        for stats in &self.removals {
            for v in ws.vectors_mut() {
                remove_components_in_place(v, stats);
            }
        }
        Ok(ws)
    }
}

/// Inputs for [`build_pipeline`] beyond the setup and the store.
#[derive(Debug)]
pub struct PipelineContext<'a, S: AsRef<str>> {
    pub frequencies: Option<&'a FrequencyTable>,
    /// Sentences used to fit `R`/`P`.
    pub corpus: Option<&'a [Vec<S>]>,
    /// Moments of the full vocabulary for `A`/`C`; taken from the store when absent.
    pub vocabulary: Option<&'a VocabMoments>,
}

// Only references inside, so copyable whatever `S` is.
impl<S: AsRef<str>> Clone for PipelineContext<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S: AsRef<str>> Copy for PipelineContext<'_, S> {}

impl<S: AsRef<str>> Default for PipelineContext<'_, S> {
    fn default() -> Self {
        Self { frequencies: None, corpus: None, vocabulary: None }
    }
}

/// Fits every converter of `setup` and returns the resulting preprocessor.
pub fn build_pipeline<S: AsRef<str>>(
    setup: &PipelineSetup,
    store: EmbeddingStore,
    ctx: PipelineContext<'_, S>,
) -> Result<SentencePreprocessor> {
    if setup.needs_corpus() && ctx.corpus.is_none() {
        return Err(Error::InvalidSetup(format!("setup {} needs a corpus for component removal", setup.code())));
    }
    if setup.needs_frequencies() && ctx.frequencies.is_none() {
        return Err(Error::InvalidSetup(format!("setup {} needs a frequency table", setup.code())));
    }
    if store.is_empty() {
        return Err(Error::Empty("embedding store"));
    }

    let mut store = store;
    let mut abtt = None;
    if setup.needs_vocabulary() {
        let own;
        let moments = match ctx.vocabulary {
            Some(m) => m,
            None => {
                own = VocabMoments::from_store(&store);
                &own
            }
        };
        let (map, fit) = fit_vocabulary_map(setup, moments)?;
        store = apply_map(&store, &map);
        abtt = fit;
    }

    let scheme = if setup.sif {
        WeightScheme::Sif { a: setup.params.sif_a }
    } else if setup.usif {
        WeightScheme::Usif(Usif::fit(ctx.frequencies.unwrap(), setup.params.usif_n)?)
    } else {
        WeightScheme::Uniform
    };

    let mut pre = SentencePreprocessor {
        setup: *setup,
        store,
        freq: ctx.frequencies.filter(|_| setup.needs_frequencies()).cloned(),
        scheme,
        removals: Vec::new(),
        abtt,
    };

    if let Some(corpus) = ctx.corpus.filter(|_| setup.needs_corpus()) {
        let mut embeddings: Vec<Vec<f64>> = corpus
            .iter()
            .filter_map(|s| pre.weighted_scaled(s).ok())
            .map(|ws| ws.embedding())
            .collect();
        let modes = [
            (setup.remove_first, RemovalMode::First),
            (setup.piecewise, RemovalMode::Piecewise { p: setup.params.piecewise_p }),
        ];
        for (on, mode) in modes {
            if !on {
                continue;
            }
            let stats = fit_corpus_components(&embeddings, mode)?;
            for e in &mut embeddings {
                remove_components_in_place(e, &stats);
            }
            pre.removals.push(stats);
        }
    }
    Ok(pre)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freq(entries: &[(&str, u64)]) -> FrequencyTable {
        let mut f = FrequencyTable::new();
        for &(t, c) in entries {
            f.add(t, c);
        }
        f
    }

    #[test]
    fn sif_examples() {
        // p(x) = 1e-3, p(y) = 9e-3 with total 1000
        let f = freq(&[("x", 1), ("y", 9), ("z", 990)]);
        assert_eq!(sif_weight(&f, 1e-3, "unseen"), 1.0);
        assert!((sif_weight(&f, 1e-3, "x") - 0.5).abs() < 1e-12);
        assert!((sif_weight(&f, 1e-3, "y") - 0.1).abs() < 1e-12);
    }

    #[test]
    fn usif_is_monotone_and_maximal_when_unseen() {
        let f = freq(&[("a", 50), ("b", 30), ("c", 15), ("d", 5)]);
        let u = Usif::fit(&f, 1.0).unwrap();
        assert!(u.a.is_finite());
        let w = |t| u.weight_for_probability(f.probability(t));
        assert!(w("a") < w("b") && w("b") < w("c") && w("c") < w("d") && w("d") < w("zz"));
        assert_eq!(w("zz"), 2.0);
    }

    #[test]
    fn unit_scale_examples() {
        let ws = WeightedSequence::from_parts(vec![2.0, 1.0], vec![vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let s = unit_scale(&ws);
        assert_eq!(s.vector(0), &[0.6, 0.8]);
        assert_eq!(s.vector(1), &[0.0, 0.0]);
        assert_eq!(s.weights(), ws.weights());
        let again = unit_scale(&s);
        for (a, b) in again.vector(0).iter().zip(s.vector(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_wise_scale() {
        let ws = WeightedSequence::from_parts(vec![1.0, 1.0], vec![vec![3.0, 0.0], vec![4.0, 2.0]]).unwrap();
        let s = scale_sentence(&ws, ScaleMode::DimensionWise);
        assert_eq!(s.vector(0), &[0.6, 0.0]);
        assert_eq!(s.vector(1), &[0.8, 1.0]);
    }

    #[test]
    fn abtt_constant_store_is_zero() {
        let mut s = EmbeddingStore::new(3);
        for t in ["a", "b", "c", "d", "e"] {
            s.insert(t, &[1.0, 2.0, 3.0]).unwrap();
        }
        let (out, fit) = all_but_the_top(&s, 3).unwrap();
        assert!(fit.components.is_empty());
        for v in out.vectors() {
            assert!(v.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn abtt_zero_components_only_centers() {
        let mut s = EmbeddingStore::new(2);
        s.insert("a", &[1.0, 1.0]).unwrap();
        s.insert("b", &[3.0, 5.0]).unwrap();
        let (out, _) = all_but_the_top(&s, 0).unwrap();
        assert_eq!(out.lookup("a").unwrap(), &[-1.0, -2.0]);
        assert_eq!(out.lookup("b").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn conceptor_scalar_case() {
        let mut s = EmbeddingStore::new(1);
        s.insert("p", &[1.0]).unwrap();
        s.insert("m", &[-1.0]).unwrap();
        let (out, fit) = conceptor_negation(&s, 2.0).unwrap();
        assert!((fit.negation[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((out.lookup("p").unwrap()[0] - 0.2).abs() < 1e-15);
        assert!((out.lookup("m").unwrap()[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn conceptor_of_zero_store_is_identity() {
        let mut s = EmbeddingStore::new(2);
        s.insert("z", &[0.0, 0.0]).unwrap();
        let (_, fit) = conceptor_negation(&s, 2.0).unwrap();
        assert!(fit.negation.max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn removal_examples() {
        let u1 = vec![1.0, 0.0, 0.0];
        let u2 = vec![0.0, 1.0, 0.0];
        let first = CorpusStats { mode: RemovalMode::First, components: vec![u1.clone()], singular_values: vec![3.0] };
        assert_eq!(remove_components(&[2.0, 0.0, 0.0], &first), vec![0.0, 0.0, 0.0]);
        assert_eq!(remove_components(&[0.0, 0.0, 5.0], &first), vec![0.0, 0.0, 5.0]);

        let piece = CorpusStats {
            mode: RemovalMode::Piecewise { p: 2 },
            components: vec![u1, u2],
            singular_values: vec![3.0, 1.0],
        };
        assert_eq!(remove_components(&[1.0, 1.0, 0.0], &piece), vec![0.25, 0.75, 0.0]);
    }

    #[test]
    fn corpus_rank_one() {
        let emb: Vec<Vec<f64>> = (1..6).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let r = fit_corpus_components(&emb, RemovalMode::First).unwrap();
        assert_eq!(r.components.len(), 1);
        assert!((r.components[0][0].abs() - 1.0).abs() < 1e-12);
        let p = fit_corpus_components(&emb, RemovalMode::Piecewise { p: 3 }).unwrap();
        assert_eq!(p.components.len(), 1);
        let zeros = vec![vec![0.0; 3]; 4];
        assert!(fit_corpus_components(&zeros, RemovalMode::First).is_err());
        assert!(fit_corpus_components(&emb[..1], RemovalMode::First).is_err());
    }

    #[test]
    fn setup_codes() {
        assert_eq!(PipelineSetup::parse("SWC").unwrap(), PipelineSetup::parse("csw").unwrap());
        assert_eq!(PipelineSetup::parse("csw").unwrap().code(), "SWC");
        assert_eq!(PipelineSetup::parse("acrus").unwrap().code(), "SURCA");
        assert_eq!(PipelineSetup::parse("").unwrap().code(), "");
        assert!(PipelineSetup::parse("WU").is_err());
        assert!(PipelineSetup::parse("SS").is_err());
        assert!(PipelineSetup::parse("X").is_err());
    }

    fn toy_store() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2);
        s.insert("the", &[1.0, 0.5]).unwrap();
        s.insert("cat", &[0.2, 1.0]).unwrap();
        s.insert("sat", &[-0.3, 0.8]).unwrap();
        s.insert("dog", &[0.9, -0.4]).unwrap();
        s
    }

    #[test]
    fn identity_and_single_converter_pipelines() {
        let none: PipelineContext<'_, &str> = PipelineContext::default();
        let p = build_pipeline(&PipelineSetup::parse("").unwrap(), toy_store(), none).unwrap();
        let ws = p.process(&["cat"]).unwrap();
        assert_eq!(ws.weights(), &[1.0]);
        assert_eq!(ws.vector(0), &[0.2, 1.0]);

        let f = freq(&[("the", 90), ("cat", 10)]);
        let ctx: PipelineContext<'_, &str> = PipelineContext { frequencies: Some(&f), ..Default::default() };
        let p = build_pipeline(&PipelineSetup::parse("W").unwrap(), toy_store(), ctx).unwrap();
        let ws = p.process(&["cat"]).unwrap();
        assert_eq!(ws.weights(), &[sif_weight(&f, 1e-3, "cat")]);
        assert_eq!(ws.vector(0), &[0.2, 1.0]);
    }

    #[test]
    fn oov_tokens_keep_their_slot() {
        let none: PipelineContext<'_, &str> = PipelineContext::default();
        let p = build_pipeline(&PipelineSetup::default(), toy_store(), none).unwrap();
        let ws = p.process(&["the", "qqq", "cat"]).unwrap();
        assert_eq!(ws.len(), 3);
        assert_eq!(ws.weights()[1], 0.0);
        assert_eq!(ws.vector(1), &[0.0, 0.0]);
        assert!(p.process(&["qqq"]).is_err());
    }

    #[test]
    fn corpus_removal_requires_corpus() {
        let none: PipelineContext<'_, &str> = PipelineContext::default();
        assert!(build_pipeline(&PipelineSetup::parse("R").unwrap(), toy_store(), none).is_err());
        let corpus = [vec!["the", "cat"], vec!["dog", "sat"], vec!["cat", "sat"]];
        let ctx = PipelineContext { corpus: Some(&corpus[..]), ..Default::default() };
        let p = build_pipeline(&PipelineSetup::parse("R").unwrap(), toy_store(), ctx).unwrap();
        let u = &p.corpus_stats()[0].components[0];
        let ws = p.process(&["dog"]).unwrap();
        assert!(dot(ws.vector(0), u).abs() < 1e-12);
    }

    #[test]
    fn streamed_moments_match_store() {
        let setup = PipelineSetup::parse("AC").unwrap().with_params(ConverterParams { abtt_d: 1, ..Default::default() });
        let store = toy_store();
        let moments = VocabMoments::from_store(&store);
        let none: PipelineContext<'_, &str> = PipelineContext::default();
        let a = build_pipeline(&setup, store.clone(), none).unwrap();
        let ctx: PipelineContext<'_, &str> = PipelineContext { vocabulary: Some(&moments), ..Default::default() };
        let b = build_pipeline(&setup, store, ctx).unwrap();
        assert_eq!(a.store(), b.store());
    }
}
