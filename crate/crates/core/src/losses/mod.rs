//! Reconstruction loss, discrimination loss and the joint objective.
//!
//! The reconstruction loss is a convex combination of the squared Frobenius
//! distance and the JS divergence between softmax distributions of the
//! original and reconstructed maps. The discrimination loss is a
//! temperature-scaled contrastive negative log-likelihood over L2-normalized
//! view embeddings, symmetrized over each subject's designated view pair.
//!
//! These are the pure value-path implementations; [`graph`] holds the
//! differentiable twins used during training, which must agree with these
//! to floating-point accuracy.

pub mod graph;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::ViewEmbedding;

/// A point of the probability simplex: non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    entries: Vec<f64>,
}

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|&e| e < 0.0 || !e.is_finite()) {
            return Err(Error::DomainViolation(
                "probability entries must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::DomainViolation(format!(
                "probability entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Weighting of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Reconstruction mix in [0, 1]: squared error weight; 1-beta weights JS.
    pub beta: f64,
    /// Weight of the discrimination task, >= 0.
    pub lambda: f64,
    /// Contrastive temperature, > 0.
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 0.5,
            lambda: 1.0,
            tau: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Normalized exponential over the flattened matrix: one distribution per
/// map, length rows * cols. The row maximum is subtracted before
/// exponentiation.
pub fn to_prob(x: &Array2<f64>) -> ProbVector {
    debug_assert!(x.iter().all(|v| v.is_finite()));
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut entries: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = entries.iter().sum();
    for e in &mut entries {
        *e /= sum;
    }
    ProbVector { entries }
}

/// Kullback-Leibler divergence `sum p ln(p/q)` with the `0 ln(0/q) = 0`
/// convention. Errors where p has mass and q does not.
pub fn kl_div(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    assert_eq!(p.len(), q.len(), "kl_div length mismatch");
    let mut total = 0.0;
    for (i, (&ph, &qh)) in p.entries.iter().zip(&q.entries).enumerate() {
        if ph > 0.0 {
            if qh == 0.0 {
                return Err(Error::InfiniteDivergence(i));
            }
            total += ph * (ph / qh).ln();
        }
    }
    Ok(total)
}

/// Jensen-Shannon divergence via the equal mixture; symmetric, bounded by
/// ln 2, and finite for any simplex pair.
pub fn js_div(p: &ProbVector, q: &ProbVector) -> f64 {
    assert_eq!(p.len(), q.len(), "js_div length mismatch");
    let z: Vec<f64> = p
        .entries
        .iter()
        .zip(&q.entries)
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    let z = ProbVector { entries: z };
    // z dominates both p and q, so neither KL can fail
    0.5 * kl_div(p, &z).expect("mixture support") + 0.5 * kl_div(q, &z).expect("mixture support")
}

/// Reconstruction loss over the K views of one subject:
/// `sum_j beta * ||x - xhat_j||^2 + (1 - beta) * JS(p(x), p(xhat_j))`.
pub fn recon_loss(x: &Array2<f64>, views_recon: &[Array2<f64>], beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "beta must be in [0, 1], got {beta}"
        )));
    }
    let p = to_prob(x);
    let mut total = 0.0;
    for xhat in views_recon {
        if xhat.dim() != x.dim() {
            return Err(Error::InvalidArgument(format!(
                "reconstruction shape {:?} does not match input {:?}",
                xhat.dim(),
                x.dim()
            )));
        }
        let sq: f64 = x
            .iter()
            .zip(xhat.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let q = to_prob(xhat);
        total += beta * sq + (1.0 - beta) * js_div(&p, &q);
    }
    Ok(total)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Contrastive negative log-likelihood for the anchor at `anchor_idx`:
/// `-ln( sum_pos exp(<a, f>/tau) / sum_all exp(<a, f>/tau) )`.
///
/// Positives are same-subject embeddings excluding the anchor itself; the
/// denominator spans every other embedding in the batch (the anchor's
/// self-similarity is excluded from both sums).
pub fn pairwise_nll(
    batch: &[(String, ViewEmbedding)],
    anchor_idx: usize,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
    }
    let (anchor_subject, anchor) = &batch[anchor_idx];
    let a = &anchor.flat_normalized;
    let mut pos = Vec::new();
    let mut all = Vec::new();
    for (i, (subject, emb)) in batch.iter().enumerate() {
        if i == anchor_idx {
            continue;
        }
        let s = dot(a, &emb.flat_normalized) / tau;
        all.push(s);
        if subject == anchor_subject {
            pos.push(s);
        }
    }
    if pos.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "batch has no other view of subject {anchor_subject}"
        )));
    }
    if pos.len() == all.len() {
        return Err(Error::InvalidArgument(
            "batch has no view of a different subject".into(),
        ));
    }
    Ok(log_sum_exp(&all) - log_sum_exp(&pos))
}

fn group_by_subject(batch: &[(String, ViewEmbedding)]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, (subject, _)) in batch.iter().enumerate() {
        match groups.iter_mut().find(|(s, _)| s == subject) {
            Some((_, idxs)) => idxs.push(i),
            None => groups.push((subject.clone(), vec![i])),
        }
    }
    groups
}

/// Overall discrimination loss: the symmetrized per-subject pair average
/// `(1/2M) sum_i [l_d(f_iv, f_ij) + l_d(f_ij, f_iv)]`, where `(v, j)` are
/// each subject's first two views.
pub fn discrimination_loss(batch: &[(String, ViewEmbedding)], tau: f64) -> Result<f64> {
    let groups = group_by_subject(batch);
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "discrimination needs >= 2 subjects, got {}",
            groups.len()
        )));
    }
    for (subject, idxs) in &groups {
        if idxs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "subject {subject} has {} view(s); need >= 2",
                idxs.len()
            )));
        }
    }
    let m = groups.len() as f64;
    let mut total = 0.0;
    for (_, idxs) in &groups {
        total += pairwise_nll(batch, idxs[0], tau)?;
        total += pairwise_nll(batch, idxs[1], tau)?;
    }
    Ok(total / (2.0 * m))
}

/// Joint objective `L* = L_r + lambda * L_d`.
pub fn total_loss(recon: f64, disc: f64, lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "lambda must be >= 0");
    recon + lambda * disc
}
