//! Recursive phrase partitions and additive phrase composition.
//!
//! A partition level is an ordered list of half-open token spans covering
//! the sentence. Level 0 is the whole sentence, the last level is the token
//! level, and every span is nested inside exactly one span of each coarser
//! level.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::sequence::{PhraseSequence, WeightedVectors};

pub type Span = (usize, usize);

/// A dependency parse: surface-ordered tokens with one head per token.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyTree {
    tokens: Vec<String>,
    heads: Vec<Option<usize>>,
    root: usize,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

impl DependencyTree {
    /// `heads[i]` is the 0-based index of token `i`'s head, `None` for the root.
    pub fn new(tokens: Vec<String>, heads: Vec<Option<usize>>) -> Result<Self> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::InvalidTree("no tokens".into()));
        }
        if heads.len() != n {
            return Err(Error::InvalidTree(format!("{} heads for {} tokens", heads.len(), n)));
        }
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (i, h) in heads.iter().enumerate() {
            match *h {
                None if root.is_some() => {
                    return Err(Error::InvalidTree(format!("multiple roots (token {})", i + 1)))
                }
                None => root = Some(i),
                Some(h) if h >= n => {
                    return Err(Error::InvalidTree(format!(
                        "token {} has head {} outside the sentence",
                        i + 1,
                        h + 1
                    )))
                }
                Some(h) if h == i => {
                    return Err(Error::InvalidTree(format!("token {} is its own head", i + 1)))
                }
                Some(h) => children[h].push(i),
            }
        }
        let root = root.ok_or_else(|| Error::InvalidTree("no root".into()))?;

        // Breadth-first from the root; anything unreached sits on a cycle.
        let mut depth = vec![usize::MAX; n];
        depth[root] = 0;
        let mut queue = vec![root];
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &c in &children[u] {
                depth[c] = depth[u] + 1;
                queue.push(c);
            }
        }
        if let Some(i) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(Error::InvalidTree(format!("cycle through token {}", i + 1)));
        }
        Ok(Self { tokens, heads, root, children, depth })
    }

    /// A flat tree where every token depends on the first one.
    pub fn flat(tokens: Vec<String>) -> Result<Self> {
        let heads = (0..tokens.len()).map(|i| if i == 0 { None } else { Some(0) }).collect();
        Self::new(tokens, heads)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn heads(&self) -> &[Option<usize>] {
        &self.heads
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Labels every token with the child of `h` whose subtree contains it,
    /// or `None` if it does not descend from `h` through a child.
    fn branch_labels(&self, h: usize) -> Vec<Option<usize>> {
        let n = self.len();
        let mut label = vec![None; n];
        for &c in &self.children[h] {
            let mut stack = vec![c];
            while let Some(u) = stack.pop() {
                label[u] = Some(c);
                stack.extend_from_slice(&self.children[u]);
            }
        }
        label
    }
}

/// Nested span partitions `P_0 .. P_L` of a sentence of `n` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursivePhrasePartition {
    n: usize,
    levels: Vec<Vec<Span>>,
}

/// The first property a candidate partition breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RppViolation {
    NoLevels,
    EmptySpan { level: usize, span: Span },
    Unordered { level: usize, index: usize },
    Overlap { level: usize, index: usize },
    Coverage { level: usize },
    CoarsestNotWhole,
    FinestNotTokens,
    Nesting { level: usize, span: Span },
}

impl fmt::Display for RppViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoLevels => write!(f, "partition has no levels"),
            Self::EmptySpan { level, span } => {
                write!(f, "level {level}: empty span {span:?}")
            }
            Self::Unordered { level, index } => {
                write!(f, "level {level}: span {index} starts before its predecessor")
            }
            Self::Overlap { level, index } => {
                write!(f, "level {level}: span {index} overlaps its predecessor")
            }
            Self::Coverage { level } => write!(f, "level {level}: spans do not cover the sentence"),
            Self::CoarsestNotWhole => write!(f, "level 0 is not the whole sentence"),
            Self::FinestNotTokens => write!(f, "last level is not the token partition"),
            Self::Nesting { level, span } => {
                write!(f, "level {level}: span {span:?} is not inside one parent span")
            }
        }
    }
}

impl RecursivePhrasePartition {
    /// Wraps raw levels without checking them; see [`validate_rpp`].
    pub fn from_levels_unchecked(n: usize, levels: Vec<Vec<Span>>) -> Self {
        Self { n, levels }
    }

    pub fn from_levels(n: usize, levels: Vec<Vec<Span>>) -> core::result::Result<Self, RppViolation> {
        let rpp = Self { n, levels };
        validate_rpp(&rpp)?;
        Ok(rpp)
    }

    /// Sentence length in tokens.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the finest level.
    pub fn depth(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn levels(&self) -> &[Vec<Span>] {
        &self.levels
    }

    /// Level `k`, or the finest level once `k` runs past it.
    pub fn level(&self, k: usize) -> &[Span] {
        &self.levels[k.min(self.depth())]
    }

    /// Largest number of children any span has at the next level.
    pub fn max_branching(&self) -> usize {
        let mut best = 1;
        for w in self.levels.windows(2) {
            let parents = parent_indices(&w[0], &w[1]);
            let mut run = 0;
            for (i, &p) in parents.iter().enumerate() {
                run = if i > 0 && parents[i - 1] == p { run + 1 } else { 1 };
                best = best.max(run);
            }
        }
        best
    }
}

/// For each span of `fine`, the index of the span of `coarse` containing it.
/// Both must be valid nested partitions of the same sentence.
pub fn parent_indices(coarse: &[Span], fine: &[Span]) -> Vec<usize> {
    let mut out = Vec::with_capacity(fine.len());
    let mut p = 0;
    for &(b, _) in fine {
        while p + 1 < coarse.len() && coarse[p].1 <= b {
            p += 1;
        }
        out.push(p);
    }
    out
}

fn token_level(n: usize) -> Vec<Span> {
    (0..n).map(|i| (i, i + 1)).collect()
}

fn is_token_level(level: &[Span]) -> bool {
    level.iter().all(|&(b, e)| e == b + 1)
}

/// Maximal runs of consecutive positions that share a key, in surface order.
fn runs_by<K: PartialEq + Copy>(span: Span, key: impl Fn(usize) -> K) -> Vec<(K, Span)> {
    let mut out: Vec<(K, Span)> = Vec::new();
    for i in span.0..span.1 {
        let k = key(i);
        match out.last_mut() {
            Some((last, s)) if *last == k && s.1 == i => s.1 = i + 1,
            _ => out.push((k, (i, i + 1))),
        }
    }
    out
}

fn refine_dependency_span(tree: &DependencyTree, span: Span) -> Vec<Span> {
    if span.1 - span.0 <= 1 {
        return vec![span];
    }
    // Governor: shallowest token of the span, leftmost on ties.
    let h = (span.0..span.1).min_by_key(|&i| (tree.depth[i], i)).unwrap();
    let labels = tree.branch_labels(h);
    let parts: Vec<Span> = runs_by(span, |i| labels[i]).into_iter().map(|(_, s)| s).collect();
    if parts.len() > 1 {
        return parts;
    }
    // Everything in the span is filler around the governor: split the
    // governor off so the refinement always makes progress.
    runs_by(span, |i| i == h).into_iter().map(|(_, s)| s).collect()
}

/// Builds a partition from a dependency tree.
///
/// A span is refined around its governing (shallowest) token `h`: each child
/// subtree of `h` restricted to the span becomes one phrase per contiguous
/// run, and the remaining tokens (including `h`) are merged into contiguous
/// filler phrases. Up to `max_depth` refinements are made; the token level
/// is always appended last.
pub fn rpp_from_dependency_tree(tree: &DependencyTree, max_depth: usize) -> RecursivePhrasePartition {
    let n = tree.len();
    build_levels(n, max_depth, |span| refine_dependency_span(tree, span))
}

/// Builds a partition by splitting every span of length `m >= 2` at
/// `b + ceil(m / 2)`.
pub fn rpp_binary(n: usize, max_depth: usize) -> RecursivePhrasePartition {
    build_levels(n, max_depth, |(b, e)| {
        let m = e - b;
        if m < 2 {
            vec![(b, e)]
        } else {
            let mid = b + m.div_ceil(2);
            vec![(b, mid), (mid, e)]
        }
    })
}

fn build_levels(n: usize, max_depth: usize, refine: impl Fn(Span) -> Vec<Span>) -> RecursivePhrasePartition {
    let mut levels = vec![vec![(0, n)]];
    while levels.len() <= max_depth && !is_token_level(levels.last().unwrap()) {
        let next: Vec<Span> = levels.last().unwrap().iter().flat_map(|&s| refine(s)).collect();
        levels.push(next);
    }
    if !is_token_level(levels.last().unwrap()) {
        levels.push(token_level(n));
    }
    RecursivePhrasePartition { n, levels }
}

fn validate_level(level_idx: usize, level: &[Span], n: usize) -> core::result::Result<(), RppViolation> {
    for (i, &(b, e)) in level.iter().enumerate() {
        if b >= e {
            return Err(RppViolation::EmptySpan { level: level_idx, span: (b, e) });
        }
        if i > 0 {
            let (pb, pe) = level[i - 1];
            if b < pb {
                return Err(RppViolation::Unordered { level: level_idx, index: i });
            }
            if b < pe {
                return Err(RppViolation::Overlap { level: level_idx, index: i });
            }
            if b > pe {
                return Err(RppViolation::Coverage { level: level_idx });
            }
        }
    }
    match (level.first(), level.last()) {
        (Some(&(0, _)), Some(&(_, e))) if e == n => Ok(()),
        _ => Err(RppViolation::Coverage { level: level_idx }),
    }
}

/// Checks coverage, disjointness, ordering and nesting; reports the first violation.
pub fn validate_rpp(rpp: &RecursivePhrasePartition) -> core::result::Result<(), RppViolation> {
    let n = rpp.n;
    if rpp.levels.is_empty() {
        return Err(RppViolation::NoLevels);
    }
    for (l, level) in rpp.levels.iter().enumerate() {
        validate_level(l, level, n)?;
    }
    if rpp.levels[0] != [(0, n)] {
        return Err(RppViolation::CoarsestNotWhole);
    }
    if !is_token_level(rpp.levels.last().unwrap()) {
        return Err(RppViolation::FinestNotTokens);
    }
    for l in 1..rpp.levels.len() {
        let coarse = &rpp.levels[l - 1];
        let parents = parent_indices(coarse, &rpp.levels[l]);
        for (&(b, e), &p) in rpp.levels[l].iter().zip(&parents) {
            let (pb, pe) = coarse[p];
            if b < pb || e > pe {
                return Err(RppViolation::Nesting { level: l, span: (b, e) });
            }
        }
    }
    Ok(())
}

/// Composes phrase weights and vectors additively over `spans`:
/// `w~ = sum w_i`, `v~ = sum w_i v_i / w~`. A zero-weight phrase gets the zero vector.
pub fn compose_phrases<S: WeightedVectors + ?Sized>(ws: &S, spans: &[Span]) -> Result<PhraseSequence> {
    let n = ws.len();
    let mut cursor = 0;
    for &(b, e) in spans {
        if b != cursor || e <= b {
            return Err(Error::InvalidArgument(format!("spans do not partition 0..{n}")));
        }
        cursor = e;
    }
    if cursor != n {
        return Err(Error::InvalidArgument(format!("spans do not partition 0..{n}")));
    }
    let dim = ws.dim();
    let mut weights = Vec::with_capacity(spans.len());
    let mut vectors = vec![0.0; spans.len() * dim];
    for (q, &(b, e)) in spans.iter().enumerate() {
        let out = &mut vectors[q * dim..(q + 1) * dim];
        let mut w = 0.0;
        for i in b..e {
            let wi = ws.weight(i);
            w += wi;
            axpy(wi, ws.vector(i), out);
        }
        if w != 0.0 {
            let inv = 1.0 / w;
            for x in out.iter_mut() {
                *x *= inv;
            }
        } else {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
        weights.push(w);
    }
    Ok(PhraseSequence { spans: spans.to_vec(), weights, dim, vectors })
}
