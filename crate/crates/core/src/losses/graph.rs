//! Differentiable twins of the pure loss functions, built on the autodiff
//! graph. Values must agree with the `losses` module to floating-point
//! accuracy; unit tests pin that equivalence.

use crate::nn::graph::{Graph, NodeId};

/// Squared Frobenius distance node between two same-shaped nodes.
pub fn squared_error_node(g: &mut Graph, x: NodeId, xhat: NodeId) -> NodeId {
    let diff = g.sub(x, xhat);
    let sq = g.mul(diff, diff);
    g.sum_all(sq)
}

/// JS divergence between the flat softmax distributions of two nodes.
pub fn js_node(g: &mut Graph, x: NodeId, xhat: NodeId) -> NodeId {
    let p = g.softmax_flat(x);
    let q = g.softmax_flat(xhat);
    let sum = g.add(p, q);
    let z = g.scale(sum, 0.5);
    let ln_z = g.ln(z);
    let ln_p = g.ln(p);
    let ln_q = g.ln(q);
    let dp = g.sub(ln_p, ln_z);
    let dq = g.sub(ln_q, ln_z);
    let kp = g.mul(p, dp);
    let kq = g.mul(q, dq);
    let kp = g.sum_all(kp);
    let kq = g.sum_all(kq);
    let s = g.add(kp, kq);
    g.scale(s, 0.5)
}

/// Reconstruction loss of one subject over its reconstructed views,
/// optionally restricted to the masked rows of each view.
pub fn recon_loss_node(
    g: &mut Graph,
    x: NodeId,
    recons: &[NodeId],
    masks: Option<&[Vec<usize>]>,
    beta: f64,
) -> NodeId {
    let mut terms = Vec::with_capacity(recons.len());
    for (j, &xhat) in recons.iter().enumerate() {
        let (tgt, out) = match masks {
            Some(masks) => {
                let rows = &masks[j];
                (g.gather_rows(x, rows), g.gather_rows(xhat, rows))
            }
            None => (x, xhat),
        };
        let mut parts = Vec::with_capacity(2);
        if beta > 0.0 {
            let sq = squared_error_node(g, tgt, out);
            parts.push(g.scale(sq, beta));
        }
        if beta < 1.0 {
            let js = js_node(g, tgt, out);
            parts.push(g.scale(js, 1.0 - beta));
        }
        terms.push(if parts.len() == 1 {
            parts[0]
        } else {
            g.add(parts[0], parts[1])
        });
    }
    g.sum_many(&terms)
}

/// One batch entry for the discrimination loss: which subject a unit-norm
/// flat embedding node belongs to.
pub struct DiscEntry {
    pub subject: usize,
    pub flat: NodeId,
}

/// Contrastive NLL node for one anchor: `lse(all others) - lse(positives)`.
fn pairwise_nll_node(g: &mut Graph, entries: &[DiscEntry], anchor: usize, tau: f64) -> NodeId {
    let a = entries[anchor].flat;
    let mut pos = Vec::new();
    let mut all = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if i == anchor {
            continue;
        }
        let ft = g.transpose(e.flat);
        let ip = g.matmul(a, ft);
        let s = g.scale(ip, 1.0 / tau);
        all.push(s);
        if e.subject == entries[anchor].subject {
            pos.push(s);
        }
    }
    let lse_all = g.log_sum_exp_many(&all);
    let lse_pos = g.log_sum_exp_many(&pos);
    g.sub(lse_all, lse_pos)
}

/// Discrimination loss node: symmetrized per-subject anchor pair, averaged
/// over subjects. Entries must be grouped so each subject's first two
/// listed views are its designated anchors.
pub fn discrimination_loss_node(g: &mut Graph, entries: &[DiscEntry], tau: f64) -> NodeId {
    let mut subjects: Vec<usize> = Vec::new();
    for e in entries {
        if !subjects.contains(&e.subject) {
            subjects.push(e.subject);
        }
    }
    let mut terms = Vec::new();
    for s in &subjects {
        let idxs: Vec<usize> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.subject == *s)
            .map(|(i, _)| i)
            .collect();
        terms.push(pairwise_nll_node(g, entries, idxs[0], tau));
        terms.push(pairwise_nll_node(g, entries, idxs[1], tau));
    }
    let total = g.sum_many(&terms);
    g.scale(total, 1.0 / (2.0 * subjects.len() as f64))
}
