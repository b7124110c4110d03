//! Entropic and prior-regularized optimal transport.
//!
//! Both regularized solvers are Sinkhorn scalings of a Gibbs kernel:
//! `exp(-D / reg)` for the entropic problem and `Pi * exp(-D / eps)` for the
//! KL-prior problem. The plain multiplicative iteration is used unless some
//! kernel entry underflows below `1e-300`, in which case the same iteration
//! runs on log-potentials.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{cosine, exp, ln, norm, Matrix};
use crate::sequence::WeightedVectors;

/// Smallest prior entry handed to the solver.
pub const PRIOR_FLOOR: f64 = 1e-12;

const LOG_DOMAIN_THRESHOLD: f64 = 1e-300;

/// Cost matrix with two probability marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    cost: Matrix,
    mu: Vec<f64>,
    nu: Vec<f64>,
}

fn check_marginal(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Empty("marginal"));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 * (p.len() as f64).max(1.0) {
        return Err(Error::InvalidArgument(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

impl TransportProblem {
    pub fn new(cost: Matrix, mu: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        check_marginal("mu", &mu)?;
        check_marginal("nu", &nu)?;
        if cost.rows() != mu.len() || cost.cols() != nu.len() {
            return Err(Error::Shape(format!(
                "cost is {}x{} but marginals are {} and {}",
                cost.rows(),
                cost.cols(),
                mu.len(),
                nu.len()
            )));
        }
        if cost.as_slice().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("cost has a non-finite entry".into()));
        }
        Ok(Self { cost, mu, nu })
    }

    pub fn cost(&self) -> &Matrix {
        &self.cost
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.mu.len(), self.nu.len())
    }

    /// `sum_ij G_ij D_ij`
    pub fn transport_cost(&self, gamma: &Matrix) -> f64 {
        gamma.as_slice().iter().zip(self.cost.as_slice()).map(|(g, d)| g * d).sum()
    }

    /// Product coupling `mu nu^T`.
    pub fn independent_coupling(&self) -> Matrix {
        outer(&self.mu, &self.nu)
    }
}

pub(crate) fn outer(a: &[f64], b: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(a.len(), b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            m[(i, j)] = x * y;
        }
    }
    m
}

/// A transport plan with the marginal residuals it achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    pub gamma: Matrix,
    /// `max_i |sum_j G_ij - mu_i|`
    pub row_residual: f64,
    /// `max_j |sum_i G_ij - nu_j|`
    pub col_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log_domain: bool,
}

impl AlignmentMatrix {
    fn from_plan(gamma: Matrix, mu: &[f64], nu: &[f64], iterations: usize, converged: bool, log_domain: bool) -> Self {
        let row_residual = max_abs_diff(&gamma.row_sums(), mu);
        let col_residual = max_abs_diff(&gamma.col_sums(), nu);
        Self { gamma, row_residual, col_residual, iterations, converged, log_domain }
    }

    pub fn max_residual(&self) -> f64 {
        self.row_residual.max(self.col_residual)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.gamma.rows(), self.gamma.cols())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Strictly positive prior alignment summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix {
    pi: Matrix,
}

impl PriorMatrix {
    /// Accepts a positive matrix whose entries sum to one (within `1e-9`).
    pub fn new(pi: Matrix) -> Result<Self> {
        if pi.as_slice().iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("prior entries must be positive and finite".into()));
        }
        let s = pi.sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("prior sums to {s}, not 1")));
        }
        Ok(Self { pi })
    }

    /// Floors every entry at [`PRIOR_FLOOR`] without renormalizing.
    pub fn floored(mut pi: Matrix) -> Result<Self> {
        for x in pi.as_mut_slice() {
            if !(*x >= PRIOR_FLOOR) {
                *x = PRIOR_FLOOR;
            }
        }
        Self::new(pi)
    }

    /// The independent coupling `mu nu^T`, floored.
    pub fn product(mu: &[f64], nu: &[f64]) -> Result<Self> {
        Self::floored(outer(mu, nu))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.pi
    }
}

/// Iteration cap and stopping tolerance for the Sinkhorn solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once the largest marginal residual is below this.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, tol: 1e-9 }
    }
}

/// WRD marginals `w_i ||v_i|| / sum_k w_k ||v_k||`.
pub fn wrd_marginals<S: WeightedVectors + ?Sized>(seq: &S) -> Result<Vec<f64>> {
    let mass: Vec<f64> = (0..seq.len()).map(|i| seq.weight(i) * norm(seq.vector(i))).collect();
    if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::InvalidArgument("negative or non-finite weight".into()));
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMarginals);
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

/// `D_ij = 1 - cos(a_i, b_j)`; a zero vector has cosine 0 with everything.
pub fn cosine_cost<A, B>(a: &A, b: &B) -> Matrix
where
    A: WeightedVectors + ?Sized,
    B: WeightedVectors + ?Sized,
{
    let mut d = Matrix::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            d[(i, j)] = 1.0 - cosine(a.vector(i), b.vector(j));
        }
    }
    d
}

/// Entropy-regularized transport with kernel `exp(-D / reg)`.
pub fn sinkhorn_entropy(prob: &TransportProblem, reg: f64, opts: SolverOptions) -> Result<AlignmentMatrix> {
    if !(reg > 0.0) {
        return Err(Error::InvalidArgument(format!("regularization must be positive, got {reg}")));
    }
    let mut logk = prob.cost.clone();
    for x in logk.as_mut_slice() {
        *x = -*x / reg;
    }
    Ok(scale_kernel(logk, &prob.mu, &prob.nu, opts))
}

/// Minimizes `<G, D> + eps * KL(G || Pi)` over couplings of `mu` and `nu`.
pub fn sinkhorn_prior(
    prob: &TransportProblem,
    prior: &PriorMatrix,
    eps: f64,
    opts: SolverOptions,
) -> Result<AlignmentMatrix> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("prior strength must be positive, got {eps}")));
    }
    if (prior.pi.rows(), prior.pi.cols()) != prob.shape() {
        return Err(Error::Shape("prior and cost shapes differ".into()));
    }
    Ok(scale_kernel(prior_log_kernel(&prob.cost, &prior.pi, eps), &prob.mu, &prob.nu, opts))
}

fn prior_log_kernel(cost: &Matrix, pi: &Matrix, eps: f64) -> Matrix {
    let mut logk = cost.clone();
    for (x, &p) in logk.as_mut_slice().iter_mut().zip(pi.as_slice()) {
        *x = ln(p.max(PRIOR_FLOOR)) - *x / eps;
    }
    logk
}

/// Sinkhorn scaling of the kernel `exp(logk)` onto marginals `mu`, `nu`.
fn scale_kernel(logk: Matrix, mu: &[f64], nu: &[f64], opts: SolverOptions) -> AlignmentMatrix {
    let mut kernel = logk.clone();
    let mut underflow = false;
    for x in kernel.as_mut_slice() {
        *x = exp(*x);
        if *x < LOG_DOMAIN_THRESHOLD {
            underflow = true;
        }
    }
    if underflow {
        scale_log_domain(&logk, mu, nu, opts)
    } else {
        scale_plain(&kernel, mu, nu, opts)
    }
}

fn scale_plain(kernel: &Matrix, mu: &[f64], nu: &[f64], opts: SolverOptions) -> AlignmentMatrix {
    let (m, n) = (mu.len(), nu.len());
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    let mut kv = kernel.mul_vec(&v);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        for i in 0..m {
            u[i] = if mu[i] > 0.0 { mu[i] / kv[i] } else { 0.0 };
        }
        let mut ktu = vec![0.0; n];
        for i in 0..m {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for (acc, &k) in ktu.iter_mut().zip(kernel.row(i)) {
                *acc += k * ui;
            }
        }
        for j in 0..n {
            v[j] = if nu[j] > 0.0 { nu[j] / ktu[j] } else { 0.0 };
        }
        kv = kernel.mul_vec(&v);
        let residual = (0..m).map(|i| (u[i] * kv[i] - mu[i]).abs()).fold(0.0, f64::max);
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    let mut gamma = kernel.clone();
    for i in 0..m {
        for (g, &vj) in gamma.row_mut(i).iter_mut().zip(&v) {
            *g *= u[i] * vj;
        }
    }
    AlignmentMatrix::from_plan(gamma, mu, nu, iterations, converged, false)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + ln(xs.map(|x| exp(x - max)).sum::<f64>())
}

fn scale_log_domain(logk: &Matrix, mu: &[f64], nu: &[f64], opts: SolverOptions) -> AlignmentMatrix {
    let (m, n) = (mu.len(), nu.len());
    let log_mu: Vec<f64> = mu.iter().map(|&x| ln(x)).collect();
    let log_nu: Vec<f64> = nu.iter().map(|&x| ln(x)).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        for i in 0..m {
            let row = logk.row(i);
            f[i] = log_mu[i] - log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj));
        }
        for j in 0..n {
            g[j] = log_nu[j] - log_sum_exp((0..m).map(|i| logk[(i, j)] + f[i]));
        }
        let residual = (0..m)
            .map(|i| {
                let row = logk.row(i);
                let s: f64 = row.iter().zip(&g).map(|(k, gj)| exp(k + f[i] + gj)).sum();
                (s - mu[i]).abs()
            })
            .fold(0.0, f64::max);
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    let mut gamma = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let x = logk[(i, j)] + f[i] + g[j];
            gamma[(i, j)] = if x.is_nan() { 0.0 } else { exp(x) };
        }
    }
    AlignmentMatrix::from_plan(gamma, mu, nu, iterations, converged, true)
}

/// Which regularized problem [`solve_reduced`] solves.
#[derive(Debug, Clone, Copy)]
pub enum Regularizer<'a> {
    Entropy { reg: f64 },
    Prior { prior: &'a Matrix, eps: f64 },
}

/// Solves on the support of the marginals only: zero-mass rows and columns
/// are dropped before the solve and come back as zeros.
pub fn solve_reduced(prob: &TransportProblem, regularizer: Regularizer<'_>, opts: SolverOptions) -> Result<AlignmentMatrix> {
    let rows: Vec<usize> = (0..prob.mu.len()).filter(|&i| prob.mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..prob.nu.len()).filter(|&j| prob.nu[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::DegenerateMarginals);
    }
    let (m, n) = prob.shape();
    let full = rows.len() == m && cols.len() == n;

    let sub = |src: &Matrix| {
        if full {
            return src.clone();
        }
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = src[(i, j)];
            }
        }
        out
    };
    let cost = sub(&prob.cost);
    let mu: Vec<f64> = rows.iter().map(|&i| prob.mu[i]).collect();
    let nu: Vec<f64> = cols.iter().map(|&j| prob.nu[j]).collect();

    let solved = match regularizer {
        Regularizer::Entropy { reg } => {
            if !(reg > 0.0) {
                return Err(Error::InvalidArgument(format!("regularization must be positive, got {reg}")));
            }
            let mut logk = cost;
            for x in logk.as_mut_slice() {
                *x = -*x / reg;
            }
            scale_kernel(logk, &mu, &nu, opts)
        }
        Regularizer::Prior { prior, eps } => {
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!("prior strength must be positive, got {eps}")));
            }
            if (prior.rows(), prior.cols()) != (m, n) {
                return Err(Error::Shape("prior and cost shapes differ".into()));
            }
            scale_kernel(prior_log_kernel(&cost, &sub(prior), eps), &mu, &nu, opts)
        }
    };
    if full {
        return Ok(solved);
    }
    let mut gamma = Matrix::zeros(m, n);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            gamma[(i, j)] = solved.gamma[(a, b)];
        }
    }
    Ok(AlignmentMatrix::from_plan(
        gamma,
        &prob.mu,
        &prob.nu,
        solved.iterations,
        solved.converged,
        solved.log_domain,
    ))
}

/// Exact unregularized transport by two-phase simplex (Bland's rule).
/// Limited to `m * n <= 25`.
pub fn exact_ot_oracle(prob: &TransportProblem) -> Result<AlignmentMatrix> {
    let (m, n) = prob.shape();
    if m * n > 25 {
        return Err(Error::TooLarge(m * n));
    }
    let x = simplex::solve_transport(&prob.cost, &prob.mu, &prob.nu);
    Ok(AlignmentMatrix::from_plan(x, &prob.mu, &prob.nu, 0, true, false))
}

mod simplex {
    use super::*;

    const EPS: f64 = 1e-12;

    struct Tableau {
        a: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        basis: Vec<usize>,
    }

    impl Tableau {
        fn pivot(&mut self, obj: &mut [f64], obj_rhs: &mut f64, r: usize, c: usize) {
            let p = self.a[r][c];
            for x in self.a[r].iter_mut() {
                *x /= p;
            }
            self.rhs[r] /= p;
            let prow = self.a[r].clone();
            let prhs = self.rhs[r];
            for k in 0..self.a.len() {
                if k == r {
                    continue;
                }
                let f = self.a[k][c];
                if f != 0.0 {
                    for (x, y) in self.a[k].iter_mut().zip(&prow) {
                        *x -= f * y;
                    }
                    self.rhs[k] -= f * prhs;
                }
            }
            let f = obj[c];
            if f != 0.0 {
                for (x, y) in obj.iter_mut().zip(&prow) {
                    *x -= f * y;
                }
                *obj_rhs -= f * prhs;
            }
            self.basis[r] = c;
        }

        /// Bland's rule: lowest-index improving column, lowest-index leaving basic variable.
        fn optimize(&mut self, obj: &mut [f64], obj_rhs: &mut f64, allowed: usize) {
            loop {
                let Some(c) = (0..allowed).find(|&j| obj[j] < -EPS) else { return };
                let mut leave: Option<(usize, f64)> = None;
                for r in 0..self.a.len() {
                    if self.a[r][c] > EPS {
                        let ratio = self.rhs[r] / self.a[r][c];
                        leave = match leave {
                            None => Some((r, ratio)),
                            Some((lr, lratio)) => {
                                if ratio < lratio - EPS
                                    || ((ratio - lratio).abs() <= EPS && self.basis[r] < self.basis[lr])
                                {
                                    Some((r, ratio))
                                } else {
                                    Some((lr, lratio))
                                }
                            }
                        }
                    }
                }
                match leave {
                    Some((r, _)) => self.pivot(obj, obj_rhs, r, c),
                    None => return, // unbounded; impossible for transport
                }
            }
        }
    }

    pub(super) fn solve_transport(cost: &Matrix, mu: &[f64], nu: &[f64]) -> Matrix {
        let (m, n) = (mu.len(), nu.len());
        let nvar = m * n;
        // Row constraints for every i, column constraints for all but the last j.
        let ncons = m + n - 1;
        let width = nvar + ncons;
        let mut a = vec![vec![0.0; width]; ncons];
        let mut rhs = vec![0.0; ncons];
        for i in 0..m {
            for j in 0..n {
                a[i][i * n + j] = 1.0;
            }
            rhs[i] = mu[i];
        }
        for j in 0..n - 1 {
            for i in 0..m {
                a[m + j][i * n + j] = 1.0;
            }
            rhs[m + j] = nu[j];
        }
        for (r, row) in a.iter_mut().enumerate() {
            row[nvar + r] = 1.0;
        }
        let basis = (nvar..width).collect();
        let mut t = Tableau { a, rhs, basis };

        // Phase 1: minimize the sum of artificials.
        let mut obj = vec![0.0; width];
        let mut obj_rhs = 0.0;
        for j in nvar..width {
            obj[j] = 1.0;
        }
        for r in 0..ncons {
            for j in 0..width {
                obj[j] -= t.a[r][j];
            }
            obj_rhs -= t.rhs[r];
        }
        t.optimize(&mut obj, &mut obj_rhs, nvar);

        // Drive zero-level artificials out of the basis where possible.
        for r in 0..ncons {
            if t.basis[r] >= nvar {
                if let Some(c) = (0..nvar).find(|&j| t.a[r][j].abs() > EPS) {
                    let mut dummy = vec![0.0; width];
                    let mut dummy_rhs = 0.0;
                    t.pivot(&mut dummy, &mut dummy_rhs, r, c);
                }
            }
        }

        // Phase 2: true costs, artificials may not re-enter.
        let mut obj = vec![0.0; width];
        obj[..nvar].copy_from_slice(cost.as_slice());
        let mut obj_rhs = 0.0;
        for r in 0..ncons {
            let b = t.basis[r];
            let cb = obj[b];
            if cb != 0.0 {
                for j in 0..width {
                    obj[j] -= cb * t.a[r][j];
                }
                obj_rhs -= cb * t.rhs[r];
            }
        }
        t.optimize(&mut obj, &mut obj_rhs, nvar);

        let mut x = Matrix::zeros(m, n);
        for r in 0..ncons {
            let b = t.basis[r];
            if b < nvar {
                x.as_mut_slice()[b] = t.rhs[r].max(0.0);
            }
        }
        x
    }
}
