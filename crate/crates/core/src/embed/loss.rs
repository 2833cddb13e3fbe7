//! Losses for metric embeddings: the hard contrastive loss, its soft
//! variant weighted by a similarity kernel, plain imitation cross-entropy,
//! and the squared-error alternative that matches embedding distances to
//! metric distances directly. Every loss has an analytic gradient.

use crate::error::{Error, Result};
use crate::metrics::{gaussian_kernel, PairwiseMetricTable};

const NORM_FLOOR: f64 = 1e-12;

/// Cosine similarity with a 1e-12 floor on each norm, so zero vectors are
/// handled rather than rejected.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch("cosine on unequal lengths".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = norm(u).max(NORM_FLOOR);
    let nv = norm(v).max(NORM_FLOOR);
    Ok(dot / (nu * nv))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Value plus gradients of the cosine similarity wrt both arguments.
fn cosine_with_grad(u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = norm(u).max(NORM_FLOOR);
    let nv = norm(v).max(NORM_FLOOR);
    let s = dot / (nu * nv);
    let du: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| vi / (nu * nv) - s * ui / (nu * nu))
        .collect();
    let dv: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| ui / (nu * nv) - s * vi / (nv * nv))
        .collect();
    (s, du, dv)
}

/// Contrastive loss for one positive pair against a set of negatives:
/// -log( e^(lambda s_pos) / (e^(lambda s_pos) + sum_i e^(lambda s_neg_i)) ).
pub fn simclr_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    lambda: f64,
) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::InvalidArgument("needs at least one negative".into()));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let s_pos = cosine_similarity(positive, anchor)?;
    let mut exponents = vec![lambda * s_pos];
    for n in negatives {
        exponents.push(lambda * cosine_similarity(n, anchor)?);
    }
    let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = exponents.iter().map(|e| (e - m).exp()).sum();
    Ok(-(exponents[0] - m - denom.ln()))
}

/// Soft contrastive loss: the positive term is weighted by its kernel
/// similarity, each negative by one minus its own. With a fully similar
/// positive and fully dissimilar negatives this is exactly `simclr_loss`;
/// with no (weighted) negatives it is -log(1) = 0.
pub fn cme_pair_loss(
    anchor: &[f64],
    candidates: &[&[f64]],
    gammas: &[f64],
    positive_index: usize,
    lambda: f64,
) -> Result<f64> {
    cme_pair_loss_impl(anchor, candidates, gammas, positive_index, lambda, None)
}

/// As `cme_pair_loss` but also yields d(loss)/d(embedding) for the anchor
/// and every candidate, appended into `grads` as (anchor_grad, cand_grads).
pub fn cme_pair_loss_with_grad(
    anchor: &[f64],
    candidates: &[&[f64]],
    gammas: &[f64],
    positive_index: usize,
    lambda: f64,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let mut grads = (vec![0.0; anchor.len()], vec![vec![]; candidates.len()]);
    let loss = cme_pair_loss_impl(
        anchor,
        candidates,
        gammas,
        positive_index,
        lambda,
        Some(&mut grads),
    )?;
    Ok((loss, grads.0, grads.1))
}

fn cme_pair_loss_impl(
    anchor: &[f64],
    candidates: &[&[f64]],
    gammas: &[f64],
    positive_index: usize,
    lambda: f64,
    mut grads: Option<&mut (Vec<f64>, Vec<Vec<f64>>)>,
) -> Result<f64> {
    if positive_index >= candidates.len() {
        return Err(Error::InvalidArgument(
            "positive is not a member of the candidate set".into(),
        ));
    }
    if gammas.len() != candidates.len() {
        return Err(Error::DimensionMismatch(
            "one kernel weight per candidate".into(),
        ));
    }
    if gammas.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
        return Err(Error::InvalidArgument(
            "kernel weights must lie in [0, 1]".into(),
        ));
    }
    if gammas[positive_index] <= 0.0 {
        return Err(Error::InvalidArgument(
            "positive weight must be strictly positive".into(),
        ));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }

    // Weighted softmax terms: w_i e^(lambda s_i), positive weight gamma_pos,
    // negative weights (1 - gamma_i).
    let mut sims = Vec::with_capacity(candidates.len());
    let mut grad_pairs = Vec::with_capacity(candidates.len());
    for c in candidates {
        if grads.is_some() {
            let (s, dc, da) = cosine_with_grad(c, anchor);
            sims.push(s);
            grad_pairs.push((dc, da));
        } else {
            sims.push(cosine_similarity(c, anchor)?);
        }
    }
    let weights: Vec<f64> = (0..candidates.len())
        .map(|i| {
            if i == positive_index {
                gammas[i]
            } else {
                1.0 - gammas[i]
            }
        })
        .collect();

    let m = sims
        .iter()
        .map(|s| lambda * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    let mut terms = vec![0.0; candidates.len()];
    for i in 0..candidates.len() {
        if weights[i] == 0.0 {
            continue;
        }
        terms[i] = weights[i] * (lambda * sims[i] - m).exp();
        denom += terms[i];
    }
    let pos_term = terms[positive_index];
    debug_assert!(pos_term > 0.0);
    let loss = -(pos_term.ln() - denom.ln());

    if let Some(g) = grads.as_mut() {
        // d loss / d s_i = lambda * (term_i / denom - [i == pos]).
        for i in 0..candidates.len() {
            let coeff = lambda
                * (terms[i] / denom - if i == positive_index { 1.0 } else { 0.0 });
            let (dc, da) = &grad_pairs[i];
            if coeff == 0.0 {
                g.1[i] = vec![0.0; candidates[i].len()];
                continue;
            }
            g.1[i] = dc.iter().map(|v| coeff * v).collect();
            for (acc, v) in g.0.iter_mut().zip(da) {
                *acc += coeff * v;
            }
        }
    }
    Ok(loss)
}

/// Cross-entropy of softmax(logits) against the target action.
pub fn imitation_loss(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::InvalidArgument("target action out of range".into()));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    Ok(-(logits[target] - m - denom.ln()))
}

/// Gradient of `imitation_loss` wrt the logits: softmax - onehot.
pub fn imitation_loss_grad(logits: &[f64], target: usize) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let denom: f64 = exps.iter().sum();
    exps.iter()
        .enumerate()
        .map(|(i, e)| e / denom - if i == target { 1.0 } else { 0.0 })
        .collect()
}

/// One anchor's positive candidate plus the kernel weights of the whole
/// candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePair {
    pub anchor: usize,
    pub positive: usize,
    pub gamma_row: Vec<f64>,
}

/// For every anchor (column of the table), the candidate (row) with the
/// highest kernel similarity, ties to the lowest row index, plus the full
/// kernel column.
pub fn select_positive_pairs(table: &PairwiseMetricTable, beta: f64) -> Result<Vec<PositivePair>> {
    if table.values.is_empty() {
        return Err(Error::InvalidArgument("empty metric table".into()));
    }
    let mut out = Vec::with_capacity(table.n_cols());
    for y in 0..table.n_cols() {
        let mut gamma_row = Vec::with_capacity(table.n_rows());
        let mut best = 0usize;
        for x in 0..table.n_rows() {
            gamma_row.push(gaussian_kernel(table.at(x, y), beta)?);
        }
        for x in 1..table.n_rows() {
            if gamma_row[x] > gamma_row[best] {
                best = x;
            }
        }
        out.push(PositivePair {
            anchor: y,
            positive: best,
            gamma_row,
        });
    }
    Ok(out)
}

/// Mean soft contrastive loss over all anchors of one trajectory against
/// the candidate set of another: for each anchor (a table column), the
/// kernel argmax picks the positive and the rest weigh in as negatives.
pub fn cme_total_loss(
    candidate_embeddings: &[Vec<f64>],
    anchor_embeddings: &[Vec<f64>],
    table: &PairwiseMetricTable,
    beta: f64,
    lambda: f64,
) -> Result<f64> {
    if candidate_embeddings.len() != table.n_rows()
        || anchor_embeddings.len() != table.n_cols()
    {
        return Err(Error::DimensionMismatch(
            "one embedding per table row/col".into(),
        ));
    }
    let pairs = select_positive_pairs(table, beta)?;
    let candidates: Vec<&[f64]> = candidate_embeddings.iter().map(|e| e.as_slice()).collect();
    let mut total = 0.0;
    for p in &pairs {
        total += cme_pair_loss(
            &anchor_embeddings[p.anchor],
            &candidates,
            &p.gamma_row,
            p.positive,
            lambda,
        )?;
    }
    Ok(total / pairs.len() as f64)
}

/// Mean over pairs of (||f_i - f_j|| - d_ij)^2: pin embedding distances to
/// metric distances directly.
pub fn l2_metric_loss(
    feats_rows: &[Vec<f64>],
    feats_cols: &[Vec<f64>],
    table: &PairwiseMetricTable,
) -> Result<f64> {
    l2_metric_loss_impl(feats_rows, feats_cols, table, None)
}

pub fn l2_metric_loss_with_grad(
    feats_rows: &[Vec<f64>],
    feats_cols: &[Vec<f64>],
    table: &PairwiseMetricTable,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut grads = (
        vec![vec![0.0; feats_rows[0].len()]; feats_rows.len()],
        vec![vec![0.0; feats_cols[0].len()]; feats_cols.len()],
    );
    let loss = l2_metric_loss_impl(feats_rows, feats_cols, table, Some(&mut grads))?;
    Ok((loss, grads.0, grads.1))
}

fn l2_metric_loss_impl(
    feats_rows: &[Vec<f64>],
    feats_cols: &[Vec<f64>],
    table: &PairwiseMetricTable,
    mut grads: Option<&mut (Vec<Vec<f64>>, Vec<Vec<f64>>)>,
) -> Result<f64> {
    if feats_rows.len() != table.n_rows() || feats_cols.len() != table.n_cols() {
        return Err(Error::DimensionMismatch(
            "one feature vector per table row/col".into(),
        ));
    }
    let n_pairs = (feats_rows.len() * feats_cols.len()) as f64;
    let mut total = 0.0;
    for (i, fi) in feats_rows.iter().enumerate() {
        for (j, fj) in feats_cols.iter().enumerate() {
            let diff: Vec<f64> = fi.iter().zip(fj).map(|(a, b)| a - b).collect();
            let dist = norm(&diff);
            let err = dist - table.at(i, j);
            total += err * err;
            if let Some(g) = grads.as_mut() {
                let scale = 2.0 * err / (dist.max(NORM_FLOOR) * n_pairs);
                for ((gi, gj), d) in g.0[i].iter_mut().zip(g.1[j].iter_mut()).zip(&diff) {
                    *gi += scale * d;
                    *gj -= scale * d;
                }
            }
        }
    }
    Ok(total / n_pairs)
}
