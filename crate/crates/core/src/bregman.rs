//! Generic Bregman divergence with pluggable generators, plus the
//! verification suite for the statistical-divergence identities behind the
//! joint objective.
//!
//! `d_psi(p, q) = psi(p) - psi(q) - <grad psi(q), p - q>` for strictly
//! convex psi. The squared-norm generator reduces it to the squared
//! Euclidean distance; the negative-entropy generator on the simplex
//! reduces it to the KL divergence — the reduction relies on both vectors
//! summing to 1, which is validated rather than generalized away.

use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::{pairwise_nll, ProbVector};
use crate::nn::ViewEmbedding;

/// Domain a generator is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    AllReals,
    OpenSimplex,
}

/// A strictly convex, continuously differentiable generating function.
pub trait Generator {
    fn psi(&self, x: &[f64]) -> f64;
    fn grad_psi(&self, x: &[f64]) -> Vec<f64>;
    fn domain(&self) -> Domain;
}

/// psi(x) = <x, x>; its Bregman divergence is the squared Euclidean distance.
pub struct SquaredNorm;

impl Generator for SquaredNorm {
    fn psi(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn grad_psi(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 2.0 * v).collect()
    }

    fn domain(&self) -> Domain {
        Domain::AllReals
    }
}

/// psi(x) = sum x_h ln x_h on the open simplex; its Bregman divergence is
/// the KL divergence. Entries below `floor` are clamped to `floor` before
/// evaluation so boundary inputs stay in a detectable-but-safe regime.
pub struct NegativeEntropy {
    pub floor: f64,
}

impl Default for NegativeEntropy {
    fn default() -> Self {
        Self { floor: 1e-12 }
    }
}

impl NegativeEntropy {
    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| v.max(self.floor)).collect()
    }
}

impl Generator for NegativeEntropy {
    fn psi(&self, x: &[f64]) -> f64 {
        self.clamp(x).iter().map(|&v| v * v.ln()).sum()
    }

    fn grad_psi(&self, x: &[f64]) -> Vec<f64> {
        self.clamp(x).iter().map(|&v| v.ln() + 1.0).collect()
    }

    fn domain(&self) -> Domain {
        Domain::OpenSimplex
    }
}

/// Positive combination `a*psi_1 + b*psi_2`, itself a valid generator.
pub struct WeightedSum<A, B> {
    pub a: f64,
    pub first: A,
    pub b: f64,
    pub second: B,
}

impl<A: Generator, B: Generator> Generator for WeightedSum<A, B> {
    fn psi(&self, x: &[f64]) -> f64 {
        self.a * self.first.psi(x) + self.b * self.second.psi(x)
    }

    fn grad_psi(&self, x: &[f64]) -> Vec<f64> {
        let g1 = self.first.grad_psi(x);
        let g2 = self.second.grad_psi(x);
        g1.iter()
            .zip(&g2)
            .map(|(u, v)| self.a * u + self.b * v)
            .collect()
    }

    fn domain(&self) -> Domain {
        if self.first.domain() == Domain::OpenSimplex || self.second.domain() == Domain::OpenSimplex
        {
            Domain::OpenSimplex
        } else {
            Domain::AllReals
        }
    }
}

fn check_domain(g: &impl Generator, v: &[f64], which: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DomainViolation(format!("{which} has non-finite entries")));
    }
    if g.domain() == Domain::OpenSimplex {
        if v.iter().any(|&x| x < 0.0) {
            return Err(Error::DomainViolation(format!(
                "{which} has negative entries outside the simplex"
            )));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::DomainViolation(format!(
                "{which} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Bregman divergence `psi(p) - psi(q) - <grad psi(q), p - q>`.
pub fn bregman(g: &impl Generator, p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_domain(g, p, "p")?;
    check_domain(g, q, "q")?;
    let grad = g.grad_psi(q);
    let inner: f64 = grad
        .iter()
        .zip(p.iter().zip(q))
        .map(|(gr, (&ph, &qh))| gr * (ph - qh))
        .sum();
    Ok(g.psi(p) - g.psi(q) - inner)
}

/// Outcome of one algebraic verification run.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub name: String,
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} over {} trials, max deviation {:.3e} (tolerance {:.1e})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.trials,
            self.max_deviation,
            self.tolerance
        )
    }
}

/// Check that the squared-norm Bregman divergence equals the squared
/// Euclidean distance on random vector pairs.
pub fn verify_eq7<R: Rng>(trials: usize, rng: &mut R) -> VerifyReport {
    let dim = 100;
    let mut max_dev: f64 = 0.0;
    for _ in 0..trials {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let breg = bregman(&SquaredNorm, &p, &q).expect("all-reals domain");
        let sq: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
        max_dev = max_dev.max((breg - sq).abs());
    }
    VerifyReport {
        name: "squared-norm Bregman vs squared Euclidean".into(),
        trials,
        max_deviation: max_dev,
        tolerance: 1e-10,
        passed: max_dev <= 1e-10,
    }
}

/// Draw a strictly interior point of the simplex.
pub fn random_simplex<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = v.iter().sum();
    for e in &mut v {
        *e /= sum;
    }
    v
}

/// Check that the negative-entropy Bregman divergence equals the KL
/// divergence on random interior simplex pairs.
pub fn verify_eq8<R: Rng>(trials: usize, rng: &mut R) -> VerifyReport {
    let len = 50;
    let gen = NegativeEntropy::default();
    let mut max_dev: f64 = 0.0;
    for _ in 0..trials {
        let p = random_simplex(len, rng);
        let q = random_simplex(len, rng);
        let breg = bregman(&gen, &p, &q).expect("interior simplex");
        let kl = crate::losses::kl_div(
            &ProbVector::new(p.clone()).expect("simplex"),
            &ProbVector::new(q.clone()).expect("simplex"),
        )
        .expect("interior support");
        max_dev = max_dev.max((breg - kl).abs());
    }
    VerifyReport {
        name: "negative-entropy Bregman vs KL divergence".into(),
        trials,
        max_deviation: max_dev,
        tolerance: 1e-10,
        passed: max_dev <= 1e-10,
    }
}

/// Exact contrastive losses versus their first-order Bregman surrogate.
///
/// For each designated anchor the exact loss is the contrastive NLL; the
/// surrogate is `sum_{m != i} sum_j [<a, f_mj> - <a, f_ij>] / tau` (positive
/// terms mirror the exact loss's positive set, weighted so both sides weigh
/// means equally). The first-order relation is
/// `exact ~= ln(n_all / n_pos) + surrogate / n_all`; the unspecified
/// proportionality constant is verified as rank agreement plus a
/// small-argument relative gap, not equality.
#[derive(Debug, Clone)]
pub struct TaylorGapReport {
    /// Exact contrastive NLL per anchor.
    pub exact: Vec<f64>,
    /// Raw surrogate per anchor.
    pub surrogate: Vec<f64>,
    /// Surrogate mapped through the first-order affine relation.
    pub surrogate_mapped: Vec<f64>,
    /// Max relative gap between centered exact and scaled surrogate.
    pub max_relative_gap: f64,
    /// Whether exact and surrogate order the anchors identically.
    pub rank_agreement: bool,
    /// Largest |inner product| / tau seen.
    pub max_abs_argument: f64,
    /// Set when `max_abs_argument >= 3`.
    pub regime_flag: Option<String>,
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut rank = vec![0; values.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// Compare exact discrimination terms against the Taylor surrogate over a
/// batch (each subject's first two views are the anchors, as in the loss).
pub fn taylor_gap(batch: &[(String, ViewEmbedding)], tau: f64) -> Result<TaylorGapReport> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, (s, _)) in batch.iter().enumerate() {
        match groups.iter_mut().find(|(gs, _)| gs == s) {
            Some((_, v)) => v.push(i),
            None => groups.push((s.clone(), vec![i])),
        }
    }
    if groups.len() < 2 || groups.iter().any(|(_, v)| v.len() < 2) {
        return Err(Error::InvalidArgument(
            "taylor_gap needs >= 2 subjects with >= 2 views each".into(),
        ));
    }
    let n_all = (batch.len() - 1) as f64;
    let mut exact = Vec::new();
    let mut surrogate = Vec::new();
    let mut max_arg: f64 = 0.0;
    for (subject, idxs) in &groups {
        for &anchor in &idxs[..2] {
            exact.push(pairwise_nll(batch, anchor, tau)?);
            let a = &batch[anchor].1.flat_normalized;
            let mut pos_sum = 0.0;
            let mut pos_count = 0.0;
            let mut neg_sum = 0.0;
            let mut neg_count = 0.0;
            for (i, (s, e)) in batch.iter().enumerate() {
                if i == anchor {
                    continue;
                }
                let arg = a
                    .iter()
                    .zip(&e.flat_normalized)
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    / tau;
                max_arg = max_arg.max(arg.abs());
                if s == subject {
                    pos_sum += arg;
                    pos_count += 1.0;
                } else {
                    neg_sum += arg;
                    neg_count += 1.0;
                }
            }
            // positive side weighted to match the negative count
            surrogate.push(neg_sum - (neg_count / pos_count) * pos_sum);
        }
    }
    let n_pos = (groups[0].1.len() - 1) as f64;
    let offset = (n_all / n_pos).ln();
    let surrogate_mapped: Vec<f64> = surrogate.iter().map(|s| offset + s / n_all).collect();
    let mut max_rel: f64 = 0.0;
    for (e, m) in exact.iter().zip(&surrogate_mapped) {
        let centered_exact = e - offset;
        let centered_surr = m - offset;
        let scale = centered_exact.abs().max(centered_surr.abs()).max(1e-12);
        max_rel = max_rel.max((centered_exact - centered_surr).abs() / scale);
    }
    let rank_agreement = ranks(&exact) == ranks(&surrogate);
    let regime_flag = if max_arg >= 3.0 {
        Some("approximation regime violated".to_string())
    } else {
        None
    };
    Ok(TaylorGapReport {
        exact,
        surrogate,
        surrogate_mapped,
        max_relative_gap: max_rel,
        rank_agreement,
        max_abs_argument: max_arg,
        regime_flag,
    })
}
