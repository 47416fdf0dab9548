//! The matrix form of a rule chain: similarity and propagation matrices,
//! truth-vector products for nodes and relations, and the training loss.
//!
//! One rule application contributes a similarity matrix
//! `S = M ⊙ softmax_cols(Pᵀ F − T)` gating how well the current state matches
//! the rule's preconditions, and a propagation matrix `R` carrying truth
//! values from precondition slots to postcondition slots with a single
//! trainable weight. A whole path multiplies out to
//! `f_n = S_goal · R_{k-1} S_{k-1} · ... · R_0 S_0 · f_0`, where the trailing
//! similarity factor compares the final created state against the goal.
//! Relations follow the same sequence with their own matrices.

use crate::autodiff::{Tape, TensorError, TensorId};
use serde::{Deserialize, Serialize};

/// Inputs for one similarity factor. `preconditions` and `facts` hold
/// embedding columns (dim x n, zero-padded); `mask` and `thresholds` are
/// n x n, the mask binary and the bias row-constant.
#[derive(Debug, Clone, Copy)]
pub struct StepMatrices {
    pub preconditions: TensorId,
    pub facts: TensorId,
    pub mask: TensorId,
    pub thresholds: TensorId,
}

/// `S = M ⊙ softmax_cols(Pᵀ F − T)`. With `normalize` set, the embedding
/// columns are unit-normalized first so the logits are cosines; the
/// normalization is part of the differentiable graph.
pub fn similarity_matrix(
    tape: &mut Tape,
    step: &StepMatrices,
    normalize: bool,
) -> Result<TensorId, TensorError> {
    let (p, f) = if normalize {
        (
            tape.normalize_cols(step.preconditions),
            tape.normalize_cols(step.facts),
        )
    } else {
        (step.preconditions, step.facts)
    };
    let pt = tape.transpose(p);
    let scores = tape.matmul(pt, f)?;
    let logits = tape.sub(scores, step.thresholds)?;
    let soft = tape.softmax_cols(logits);
    tape.hadamard(step.mask, soft)
}

/// n x n block matrix with entry (i, j) = w for i < post_count and
/// j < pre_count, zero elsewhere: a fully connected layer from precondition
/// slots to postcondition slots with one trainable parameter.
pub fn propagation_matrix(
    tape: &mut Tape,
    pre_count: usize,
    post_count: usize,
    weight: TensorId,
    n: usize,
) -> Result<TensorId, TensorError> {
    tape.weight_block(weight, post_count, pre_count, n)
}

/// One multiplicative step of the chain. The goal-comparison step has no
/// propagation factor.
#[derive(Debug, Clone, Copy)]
pub struct ChainStep {
    pub similarity: TensorId,
    pub propagation: Option<TensorId>,
}

/// Multiplies the chain onto `f0` in step order:
/// `f = ... R_1 · S_1 · R_0 · S_0 · f0`, skipping absent propagation factors.
pub fn forward_chain(
    tape: &mut Tape,
    steps: &[ChainStep],
    f0: TensorId,
) -> Result<TensorId, TensorError> {
    let mut f = f0;
    for step in steps {
        f = tape.matmul(step.similarity, f)?;
        if let Some(r) = step.propagation {
            f = tape.matmul(r, f)?;
        }
    }
    Ok(f)
}

/// The relation chain is the same product over relation matrices.
pub fn relation_chain(
    tape: &mut Tape,
    steps: &[ChainStep],
    f0_rel: TensorId,
) -> Result<TensorId, TensorError> {
    forward_chain(tape, steps, f0_rel)
}

/// Truth values are clamped into [ε, 1−ε] before any logarithm.
pub const LOSS_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// −(g·log f + gʳ·log fʳ): the positive-class cross-entropy terms,
    /// negated so minimization is well-posed.
    Stated,
    /// Adds the −(1−g)·log(1−f) complements on both sides.
    FullBce,
}

fn bce_side(
    tape: &mut Tape,
    f: TensorId,
    g: TensorId,
    mode: LossMode,
) -> Result<TensorId, TensorError> {
    let clamped = tape.clamp(f, LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    let log_f = tape.log_elem(clamped);
    let pos = tape.hadamard(g, log_f)?;
    let pos_sum = tape.sum(pos);
    match mode {
        LossMode::Stated => Ok(pos_sum),
        LossMode::FullBce => {
            let (rows, cols) = tape.shape(f);
            let ones = tape.ones(rows, cols);
            let g_complement = tape.sub(ones, g)?;
            let f_complement = tape.sub(ones, clamped)?;
            let log_fc = tape.log_elem(f_complement);
            let neg = tape.hadamard(g_complement, log_fc)?;
            let neg_sum = tape.sum(neg);
            tape.add(pos_sum, neg_sum)
        }
    }
}

/// Scalar loss from the final node and relation truth vectors against the
/// goal vectors.
pub fn loss(
    tape: &mut Tape,
    f_nodes: TensorId,
    f_relations: TensorId,
    goal_nodes: TensorId,
    goal_relations: TensorId,
    mode: LossMode,
) -> Result<TensorId, TensorError> {
    let node_term = bce_side(tape, f_nodes, goal_nodes, mode)?;
    let rel_term = bce_side(tape, f_relations, goal_relations, mode)?;
    let total = tape.add(node_term, rel_term)?;
    Ok(tape.neg(total))
}
