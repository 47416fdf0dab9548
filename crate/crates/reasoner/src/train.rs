//! Training of rule embeddings, matching thresholds, and rule weights over
//! enumerated paths.
//!
//! Every epoch rebuilds the matrix chain of the path on a fresh tape from the
//! current parameter values, takes the loss, backpropagates, updates only the
//! unfrozen parameters, and projects thresholds back into the clip band.
//! Facts, the goal, and frozen relation embeddings are constants throughout.
//! A trained path is *verified* by re-parsing its extracted rule text and
//! chaining the re-parsed rules symbolically from the facts to the goal.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, TensorError, TensorId};
use crate::chain::{enumerate_paths, ChainConfig, ChainError, PathPlan};
use crate::dsl::{parse_rule, serialize_rule, DslError};
use crate::embedding::Lexicon;
use crate::graph::{
    apply_rule, goal_satisfied, match_subgraph, GraphError, PostNode, Rule, SemanticGraph,
};
use crate::matrices::{
    forward_chain, loss, propagation_matrix, relation_chain, similarity_matrix, ChainStep,
    LossMode, StepMatrices,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no path connects the facts to the goal")]
    NoPath,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_floor: f64,
    pub clip_ceiling: f64,
    pub seed: u64,
    pub loss_mode: LossMode,
    /// Cosine threshold for the symbolic goal check during verification.
    pub success_threshold: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            learning_rate: 0.01,
            clip_floor: 0.6,
            clip_ceiling: 0.99,
            seed: 7,
            loss_mode: LossMode::Stated,
            success_threshold: 0.6,
            optimizer: Optimizer::Adam,
        }
    }
}

/// Training stops early when the loss improves by less than this over the
/// plateau window.
const PLATEAU_EPS: f64 = 1e-8;
const PLATEAU_WINDOW: usize = 50;

/// One trained path: the plan, the materialized rules with learned values,
/// the loss history, and the verification outcome.
#[derive(Debug, Clone)]
pub struct TrainedPath {
    pub path: PathPlan,
    /// Learned rules in step order.
    pub learned_rules: Vec<Rule>,
    pub loss_curve: Vec<f64>,
    pub verified: bool,
    /// Extracted rule text in step order.
    pub extracted: Vec<String>,
}

impl TrainedPath {
    pub fn final_loss(&self) -> f64 {
        *self.loss_curve.last().expect("loss curve is never empty")
    }
}

/// All candidates for one facts/goal pair, best first.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ranked: Vec<TrainedPath>,
}

impl TrainOutcome {
    pub fn best(&self) -> &TrainedPath {
        &self.ranked[0]
    }
}

/// A multi-pair candidate: one path per pair trained against the summed
/// loss with shared rule parameters.
#[derive(Debug, Clone)]
pub struct MultiCandidate {
    pub per_pair: Vec<TrainedPath>,
    pub loss_curve: Vec<f64>,
    pub verified: bool,
}

impl MultiCandidate {
    pub fn final_loss(&self) -> f64 {
        *self.loss_curve.last().expect("loss curve is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct MultiOutcome {
    pub ranked: Vec<MultiCandidate>,
}

impl MultiOutcome {
    pub fn best(&self) -> &MultiCandidate {
        &self.ranked[0]
    }
}

// ---------------------------------------------------------------------------
// Parameter layout and chain assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct RuleSlots {
    rule_index: usize,
    pre_node_emb: Vec<Option<Range<usize>>>,
    pre_edge_emb: Vec<Option<Range<usize>>>,
    post_node_emb: Vec<Option<Range<usize>>>,
    post_edge_emb: Vec<Option<Range<usize>>>,
    node_thresholds: Range<usize>,
    edge_thresholds: Range<usize>,
    weight: usize,
}

/// Differentiable model of one or more paths with shared rule parameters.
/// `params` is the flat vector of every trainable scalar; the layout maps
/// slices of it onto rule embeddings, thresholds, and weights.
pub struct PathModel {
    pairs: Vec<(SemanticGraph, SemanticGraph)>,
    paths: Vec<PathPlan>,
    rules: Vec<Rule>,
    goal_check_threshold: f64,
    loss_mode: LossMode,
    slots: Vec<RuleSlots>,
    initial: Vec<f64>,
    dim: usize,
}

#[derive(Clone, Copy)]
enum Source {
    FactNode(usize),
    FactEdge(usize),
    RulePostNode { rule: usize, idx: usize },
    RulePostEdge { rule: usize, idx: usize },
}

/// A freshly assembled tape: the loss node plus the map from parameter
/// ranges to their leaf tensors.
type BuiltTape = (Tape, TensorId, Vec<(Range<usize>, TensorId)>);

struct RuleLeaves {
    pre_node: Vec<TensorId>,
    pre_edge: Vec<TensorId>,
    post_node: Vec<Option<TensorId>>,
    post_edge: Vec<TensorId>,
    node_thr: TensorId,
    edge_thr: TensorId,
    weight: TensorId,
}

fn mask_matrix(n: usize, ones_at: impl Iterator<Item = (usize, usize)>) -> Vec<f64> {
    let mut data = vec![0.0; n * n];
    for (row, col) in ones_at {
        data[row * n + col] = 1.0;
    }
    data
}

impl PathModel {
    pub fn new(
        pairs: Vec<(SemanticGraph, SemanticGraph)>,
        paths: Vec<PathPlan>,
        rules: Vec<Rule>,
        chain_cfg: &ChainConfig,
        loss_mode: LossMode,
    ) -> Self {
        assert_eq!(pairs.len(), paths.len(), "one path per pair");
        let mut used: Vec<usize> = paths
            .iter()
            .flat_map(|p| p.steps.iter().map(|s| s.rule_index))
            .collect();
        used.sort_unstable();
        used.dedup();

        let mut initial = Vec::new();
        let mut slots = Vec::new();
        for &rule_index in &used {
            let rule = &rules[rule_index];
            let mut alloc_emb = |emb: &crate::embedding::Embedding, frozen: bool| {
                if frozen {
                    None
                } else {
                    let start = initial.len();
                    initial.extend_from_slice(emb.as_slice());
                    Some(start..initial.len())
                }
            };
            let pre_node_emb = rule
                .pre
                .nodes
                .iter()
                .map(|n| alloc_emb(&n.embedding, n.frozen))
                .collect();
            let pre_edge_emb = rule
                .pre
                .edges
                .iter()
                .map(|e| alloc_emb(&e.embedding, e.frozen))
                .collect();
            let post_node_emb = rule
                .post
                .nodes
                .iter()
                .map(|p| match p {
                    PostNode::Copy { .. } => None,
                    PostNode::Fresh {
                        embedding, frozen, ..
                    } => alloc_emb(embedding, *frozen),
                })
                .collect();
            let post_edge_emb = rule
                .post
                .edges
                .iter()
                .map(|e| alloc_emb(&e.embedding, e.frozen))
                .collect();
            let nt_start = initial.len();
            initial.extend_from_slice(&rule.thresholds.nodes);
            let node_thresholds = nt_start..initial.len();
            let et_start = initial.len();
            initial.extend_from_slice(&rule.thresholds.edges);
            let edge_thresholds = et_start..initial.len();
            let weight = initial.len();
            initial.push(rule.weight);
            slots.push(RuleSlots {
                rule_index,
                pre_node_emb,
                pre_edge_emb,
                post_node_emb,
                post_edge_emb,
                node_thresholds,
                edge_thresholds,
                weight,
            });
        }

        let dim = pairs
            .iter()
            .flat_map(|(facts, goal)| facts.nodes.iter().chain(&goal.nodes))
            .map(|n| n.embedding.dim())
            .next()
            .or_else(|| {
                rules
                    .iter()
                    .flat_map(|r| r.pre.nodes.iter())
                    .map(|n| n.embedding.dim())
                    .next()
            })
            .unwrap_or(1);

        PathModel {
            pairs,
            paths,
            rules,
            goal_check_threshold: chain_cfg.goal_check_threshold,
            loss_mode,
            slots,
            initial,
            dim,
        }
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.initial.clone()
    }

    pub fn param_count(&self) -> usize {
        self.initial.len()
    }

    /// Positions of every threshold scalar inside the flat parameter vector.
    fn threshold_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .flat_map(|s| s.node_thresholds.clone().chain(s.edge_thresholds.clone()))
    }

    /// True when every embedding of every used rule is frozen, so only
    /// thresholds and weights would train.
    fn all_embeddings_frozen(&self) -> bool {
        self.slots.iter().all(|s| {
            s.pre_node_emb.iter().all(Option::is_none)
                && s.pre_edge_emb.iter().all(Option::is_none)
                && s.post_node_emb.iter().all(Option::is_none)
                && s.post_edge_emb.iter().all(Option::is_none)
        })
    }

    fn build_rule_leaves(
        &self,
        tape: &mut Tape,
        values: &[f64],
        slot: &RuleSlots,
        leaves_out: &mut Vec<(Range<usize>, TensorId)>,
    ) -> RuleLeaves {
        let rule = &self.rules[slot.rule_index];
        let emb_leaf = |tape: &mut Tape,
                        emb: &crate::embedding::Embedding,
                        range: &Option<Range<usize>>,
                        leaves_out: &mut Vec<(Range<usize>, TensorId)>| {
            match range {
                Some(r) => {
                    let id = tape.parameter(emb.dim(), 1, values[r.clone()].to_vec());
                    leaves_out.push((r.clone(), id));
                    id
                }
                None => tape.constant(emb.dim(), 1, emb.as_slice().to_vec()),
            }
        };
        let pre_node = rule
            .pre
            .nodes
            .iter()
            .zip(&slot.pre_node_emb)
            .map(|(n, r)| emb_leaf(tape, &n.embedding, r, leaves_out))
            .collect();
        let pre_edge = rule
            .pre
            .edges
            .iter()
            .zip(&slot.pre_edge_emb)
            .map(|(e, r)| emb_leaf(tape, &e.embedding, r, leaves_out))
            .collect();
        let post_node = rule
            .post
            .nodes
            .iter()
            .zip(&slot.post_node_emb)
            .map(|(p, r)| match p {
                PostNode::Copy { .. } => None,
                PostNode::Fresh { embedding, .. } => Some(emb_leaf(tape, embedding, r, leaves_out)),
            })
            .collect();
        let post_edge = rule
            .post
            .edges
            .iter()
            .zip(&slot.post_edge_emb)
            .map(|(e, r)| emb_leaf(tape, &e.embedding, r, leaves_out))
            .collect();

        let node_thr = tape.parameter(
            slot.node_thresholds.len(),
            1,
            values[slot.node_thresholds.clone()].to_vec(),
        );
        leaves_out.push((slot.node_thresholds.clone(), node_thr));
        let edge_thr = tape.parameter(
            slot.edge_thresholds.len(),
            1,
            values[slot.edge_thresholds.clone()].to_vec(),
        );
        leaves_out.push((slot.edge_thresholds.clone(), edge_thr));
        let weight = tape.parameter(1, 1, vec![values[slot.weight]]);
        leaves_out.push((slot.weight..slot.weight + 1, weight));

        RuleLeaves {
            pre_node,
            pre_edge,
            post_node,
            post_edge,
            node_thr,
            edge_thr,
            weight,
        }
    }

    /// Builds the full differentiable chain for every pair at the given
    /// parameter values. Returns the scalar loss and the leaf map used to
    /// read gradients back out.
    fn build(&self, values: &[f64]) -> Result<BuiltTape, TrainError> {
        let mut tape = Tape::new();
        let mut leaves = Vec::new();
        let mut rule_leaves: BTreeMap<usize, RuleLeaves> = BTreeMap::new();
        for slot in &self.slots {
            let built = self.build_rule_leaves(&mut tape, values, slot, &mut leaves);
            rule_leaves.insert(slot.rule_index, built);
        }

        let mut total: Option<TensorId> = None;
        for (pair, plan) in self.pairs.iter().zip(&self.paths) {
            let (facts, goal) = pair;
            let n = plan.slots;

            let fact_node_leaves: Vec<TensorId> = facts
                .nodes
                .iter()
                .map(|nd| tape.constant(nd.embedding.dim(), 1, nd.embedding.as_slice().to_vec()))
                .collect();
            let fact_edge_leaves: Vec<TensorId> = facts
                .edges
                .iter()
                .map(|e| tape.constant(e.embedding.dim(), 1, e.embedding.as_slice().to_vec()))
                .collect();
            let goal_node_leaves: Vec<TensorId> = goal
                .nodes
                .iter()
                .map(|nd| tape.constant(nd.embedding.dim(), 1, nd.embedding.as_slice().to_vec()))
                .collect();
            let goal_edge_leaves: Vec<TensorId> = goal
                .edges
                .iter()
                .map(|e| tape.constant(e.embedding.dim(), 1, e.embedding.as_slice().to_vec()))
                .collect();

            // Provenance of every state element: which leaf holds its vector.
            let mut node_sources: Vec<Source> =
                (0..facts.node_count()).map(Source::FactNode).collect();
            let mut edge_sources: Vec<Source> =
                (0..facts.edge_count()).map(Source::FactEdge).collect();

            let resolve = |src: &Source,
                           rule_leaves: &BTreeMap<usize, RuleLeaves>,
                           fact_nodes: &[TensorId],
                           fact_edges: &[TensorId]|
             -> TensorId {
                match src {
                    Source::FactNode(i) => fact_nodes[*i],
                    Source::FactEdge(i) => fact_edges[*i],
                    Source::RulePostNode { rule, idx } => rule_leaves[rule].post_node[*idx]
                        .expect("fresh post nodes always have a leaf"),
                    Source::RulePostEdge { rule, idx } => rule_leaves[rule].post_edge[*idx],
                }
            };

            let mut node_steps: Vec<ChainStep> = Vec::new();
            let mut rel_steps: Vec<ChainStep> = Vec::new();

            for step in &plan.steps {
                let rule = &self.rules[step.rule_index];
                let leavesr = &rule_leaves[&step.rule_index];

                let state_node_ids: Vec<TensorId> = node_sources
                    .iter()
                    .map(|s| resolve(s, &rule_leaves, &fact_node_leaves, &fact_edge_leaves))
                    .collect();
                let p = tape.stack_columns(&leavesr.pre_node, n, self.dim)?;
                let f = tape.stack_columns(&state_node_ids, n, self.dim)?;
                let m = tape.constant(
                    n,
                    n,
                    mask_matrix(
                        n,
                        step.binding
                            .node_map
                            .iter()
                            .enumerate()
                            .map(|(j, t)| (j, t.0)),
                    ),
                );
                let t = tape.row_broadcast(leavesr.node_thr, n)?;
                let s = similarity_matrix(
                    &mut tape,
                    &StepMatrices {
                        preconditions: p,
                        facts: f,
                        mask: m,
                        thresholds: t,
                    },
                    true,
                )?;
                let r = propagation_matrix(
                    &mut tape,
                    rule.pre.node_count(),
                    rule.post.nodes.len(),
                    leavesr.weight,
                    n,
                )?;
                node_steps.push(ChainStep {
                    similarity: s,
                    propagation: Some(r),
                });

                if rule.pre.edge_count() == 0 && rule.post.edges.is_empty() {
                    // A rule that moves no relations passes the relation
                    // truth vector through unchanged.
                    let identity = tape.identity(n);
                    rel_steps.push(ChainStep {
                        similarity: identity,
                        propagation: Some(identity),
                    });
                } else {
                    let state_edge_ids: Vec<TensorId> = edge_sources
                        .iter()
                        .map(|s| resolve(s, &rule_leaves, &fact_node_leaves, &fact_edge_leaves))
                        .collect();
                    let pr = tape.stack_columns(&leavesr.pre_edge, n, self.dim)?;
                    let fr = tape.stack_columns(&state_edge_ids, n, self.dim)?;
                    let mr = tape.constant(
                        n,
                        n,
                        mask_matrix(
                            n,
                            step.binding
                                .edge_map
                                .iter()
                                .enumerate()
                                .map(|(j, t)| (j, t.0)),
                        ),
                    );
                    let tr = tape.row_broadcast(leavesr.edge_thr, n)?;
                    let sr = similarity_matrix(
                        &mut tape,
                        &StepMatrices {
                            preconditions: pr,
                            facts: fr,
                            mask: mr,
                            thresholds: tr,
                        },
                        true,
                    )?;
                    let rr = propagation_matrix(
                        &mut tape,
                        rule.pre.edge_count(),
                        rule.post.edges.len(),
                        leavesr.weight,
                        n,
                    )?;
                    rel_steps.push(ChainStep {
                        similarity: sr,
                        propagation: Some(rr),
                    });
                }

                // Advance provenance to the created state.
                let next_nodes: Vec<Source> = rule
                    .post
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(idx, p)| match p {
                        PostNode::Copy { pre } => node_sources[step.binding.node_map[pre.0].0],
                        PostNode::Fresh { .. } => Source::RulePostNode {
                            rule: step.rule_index,
                            idx,
                        },
                    })
                    .collect();
                let next_edges: Vec<Source> = (0..rule.post.edges.len())
                    .map(|idx| Source::RulePostEdge {
                        rule: step.rule_index,
                        idx,
                    })
                    .collect();
                node_sources = next_nodes;
                edge_sources = next_edges;
            }

            // Trailing similarity factor: the goal against the final state.
            let final_state = plan.final_state();
            let state_node_ids: Vec<TensorId> = node_sources
                .iter()
                .map(|s| resolve(s, &rule_leaves, &fact_node_leaves, &fact_edge_leaves))
                .collect();
            let p = tape.stack_columns(&goal_node_leaves, n, self.dim)?;
            let f = tape.stack_columns(&state_node_ids, n, self.dim)?;
            let m = tape.constant(
                n,
                n,
                mask_matrix(
                    n,
                    plan.goal_binding
                        .node_map
                        .iter()
                        .enumerate()
                        .map(|(j, t)| (j, t.0)),
                ),
            );
            let thr_vec = tape.constant(
                goal.node_count(),
                1,
                vec![self.goal_check_threshold; goal.node_count()],
            );
            let t = tape.row_broadcast(thr_vec, n)?;
            let s_goal = similarity_matrix(
                &mut tape,
                &StepMatrices {
                    preconditions: p,
                    facts: f,
                    mask: m,
                    thresholds: t,
                },
                true,
            )?;
            node_steps.push(ChainStep {
                similarity: s_goal,
                propagation: None,
            });

            if goal.edge_count() == 0 && final_state.edge_count() == 0 {
                let identity = tape.identity(n);
                rel_steps.push(ChainStep {
                    similarity: identity,
                    propagation: None,
                });
            } else {
                let state_edge_ids: Vec<TensorId> = edge_sources
                    .iter()
                    .map(|s| resolve(s, &rule_leaves, &fact_node_leaves, &fact_edge_leaves))
                    .collect();
                let pr = tape.stack_columns(&goal_edge_leaves, n, self.dim)?;
                let fr = tape.stack_columns(&state_edge_ids, n, self.dim)?;
                let mr = tape.constant(
                    n,
                    n,
                    mask_matrix(
                        n,
                        plan.goal_binding
                            .edge_map
                            .iter()
                            .enumerate()
                            .map(|(j, t)| (j, t.0)),
                    ),
                );
                let thr_vec = tape.constant(
                    goal.edge_count(),
                    1,
                    vec![self.goal_check_threshold; goal.edge_count()],
                );
                let tr = tape.row_broadcast(thr_vec, n)?;
                let sr_goal = similarity_matrix(
                    &mut tape,
                    &StepMatrices {
                        preconditions: pr,
                        facts: fr,
                        mask: mr,
                        thresholds: tr,
                    },
                    true,
                )?;
                rel_steps.push(ChainStep {
                    similarity: sr_goal,
                    propagation: None,
                });
            }

            let f0 = tape.ones(n, 1);
            let f0r = tape.ones(n, 1);
            let f_n = forward_chain(&mut tape, &node_steps, f0)?;
            let f_rn = relation_chain(&mut tape, &rel_steps, f0r)?;

            let mut g = vec![0.0; n];
            for slot in g.iter_mut().take(goal.node_count()) {
                *slot = 1.0;
            }
            let mut gr = vec![0.0; n];
            for slot in gr.iter_mut().take(goal.edge_count()) {
                *slot = 1.0;
            }
            let g_id = tape.constant(n, 1, g);
            let gr_id = tape.constant(n, 1, gr);
            let pair_loss = loss(&mut tape, f_n, f_rn, g_id, gr_id, self.loss_mode)?;
            total = Some(match total {
                None => pair_loss,
                Some(acc) => tape.add(acc, pair_loss)?,
            });
        }

        let loss_id = total.expect("at least one pair");
        Ok((tape, loss_id, leaves))
    }

    /// Loss value at the given parameters.
    pub fn loss_at(&self, values: &[f64]) -> Result<f64, TrainError> {
        let (tape, loss_id, _) = self.build(values)?;
        Ok(tape.item(loss_id))
    }

    /// Loss and the full flat gradient at the given parameters.
    pub fn grads_at(&self, values: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
        let (mut tape, loss_id, leaves) = self.build(values)?;
        tape.backward(loss_id)?;
        let mut grads = vec![0.0; values.len()];
        for (range, leaf) in leaves {
            grads[range].copy_from_slice(tape.grad(leaf));
        }
        Ok((tape.item(loss_id), grads))
    }

    /// Rules with the learned values written back, keyed by rule index.
    pub fn learned_rules(&self, values: &[f64]) -> BTreeMap<usize, Rule> {
        let mut out = BTreeMap::new();
        for slot in &self.slots {
            let mut rule = self.rules[slot.rule_index].clone();
            let write = |emb: &mut crate::embedding::Embedding, range: &Option<Range<usize>>| {
                if let Some(r) = range {
                    emb.0.copy_from_slice(&values[r.clone()]);
                }
            };
            for (node, range) in rule.pre.nodes.iter_mut().zip(&slot.pre_node_emb) {
                write(&mut node.embedding, range);
            }
            for (edge, range) in rule.pre.edges.iter_mut().zip(&slot.pre_edge_emb) {
                write(&mut edge.embedding, range);
            }
            for (post, range) in rule.post.nodes.iter_mut().zip(&slot.post_node_emb) {
                if let PostNode::Fresh { embedding, .. } = post {
                    write(embedding, range);
                }
            }
            for (edge, range) in rule.post.edges.iter_mut().zip(&slot.post_edge_emb) {
                write(&mut edge.embedding, range);
            }
            rule.thresholds
                .nodes
                .copy_from_slice(&values[slot.node_thresholds.clone()]);
            rule.thresholds
                .edges
                .copy_from_slice(&values[slot.edge_thresholds.clone()]);
            rule.weight = values[slot.weight];
            out.insert(slot.rule_index, rule);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl OptimizerState {
    fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn apply(&mut self, values: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (value, grad) in values.iter_mut().zip(grads) {
                    *value -= cfg.learning_rate * grad;
                }
            }
            Optimizer::Adam => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.step += 1;
                let t = self.step as i32;
                for i in 0..values.len() {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grads[i];
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grads[i] * grads[i];
                    let m_hat = self.m[i] / (1.0 - BETA1.powi(t));
                    let v_hat = self.v[i] / (1.0 - BETA2.powi(t));
                    values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Verification by symbolic replay
// ---------------------------------------------------------------------------

/// Chains the given concrete rules from the facts, searching over bindings
/// depth-first, and reports whether any branch satisfies the goal.
pub fn replay_reaches_goal(
    rules_in_order: &[Rule],
    facts: &SemanticGraph,
    goal: &SemanticGraph,
    success_threshold: f64,
) -> bool {
    fn step(
        state: &SemanticGraph,
        idx: usize,
        rules: &[Rule],
        goal: &SemanticGraph,
        threshold: f64,
    ) -> bool {
        if idx == rules.len() {
            return goal_satisfied(state, goal, threshold);
        }
        let rule = &rules[idx];
        for binding in match_subgraph(&rule.pre, &rule.thresholds, state) {
            let next = apply_rule(rule, state, &binding).expect("matched bindings are valid");
            if step(&next, idx + 1, rules, goal, threshold) {
                return true;
            }
        }
        false
    }
    step(facts, 0, rules_in_order, goal, success_threshold)
}

// ---------------------------------------------------------------------------
// Training entry points
// ---------------------------------------------------------------------------

fn plateaued(curve: &[f64]) -> bool {
    let e = curve.len();
    e > PLATEAU_WINDOW && curve[e - 1 - PLATEAU_WINDOW] - curve[e - 1] < PLATEAU_EPS
}

fn train_combo(
    pairs: &[(SemanticGraph, SemanticGraph)],
    paths: &[PathPlan],
    rules: &[Rule],
    lexicon: &Lexicon,
    chain_cfg: &ChainConfig,
    cfg: &TrainConfig,
) -> Result<MultiCandidate, TrainError> {
    let model = PathModel::new(
        pairs.to_vec(),
        paths.to_vec(),
        rules.to_vec(),
        chain_cfg,
        cfg.loss_mode,
    );
    let mut values = model.initial_params();
    let mut curve = Vec::new();

    // A fully hand-specified chain that already replays to the goal needs no
    // training at all.
    if model.all_embeddings_frozen() {
        let initial = model.loss_at(&values)?;
        if initial.is_finite() {
            let learned = model.learned_rules(&values);
            let verified = pairs.iter().zip(paths).all(|((facts, goal), plan)| {
                let ordered: Vec<Rule> = plan
                    .steps
                    .iter()
                    .map(|s| learned[&s.rule_index].clone())
                    .collect();
                replay_reaches_goal(&ordered, facts, goal, cfg.success_threshold)
            });
            if verified {
                curve.push(initial);
                return finish_candidate(&model, &values, curve, pairs, paths, lexicon, cfg);
            }
        }
    }

    let mut optimizer = OptimizerState::new(values.len());
    for epoch in 0..cfg.epochs.max(1) {
        let (loss_value, grads) = model.grads_at(&values)?;
        curve.push(loss_value);
        if !loss_value.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        if cfg.epochs == 0 || plateaued(&curve) {
            break;
        }
        optimizer.apply(&mut values, &grads, cfg);
        for i in model.threshold_indices() {
            values[i] = values[i].clamp(cfg.clip_floor, cfg.clip_ceiling);
        }
        debug_assert!(model
            .threshold_indices()
            .all(|i| values[i] >= cfg.clip_floor && values[i] <= cfg.clip_ceiling));
    }

    finish_candidate(&model, &values, curve, pairs, paths, lexicon, cfg)
}

fn finish_candidate(
    model: &PathModel,
    values: &[f64],
    curve: Vec<f64>,
    pairs: &[(SemanticGraph, SemanticGraph)],
    paths: &[PathPlan],
    lexicon: &Lexicon,
    cfg: &TrainConfig,
) -> Result<MultiCandidate, TrainError> {
    let learned = model.learned_rules(values);

    // Extract text per rule, then re-parse it so verification exercises the
    // readable artifact, names snapped to vocabulary words and all.
    let mut extracted: BTreeMap<usize, String> = BTreeMap::new();
    let mut snapped: BTreeMap<usize, Rule> = BTreeMap::new();
    let mut scratch = lexicon.clone();
    for (&index, rule) in &learned {
        let text = serialize_rule(rule, lexicon)?;
        let reparsed = parse_rule(&text)?.realize(&mut scratch, &rule.label)?;
        extracted.insert(index, text);
        snapped.insert(index, reparsed);
    }

    let mut per_pair = Vec::new();
    let mut all_verified = true;
    for ((facts, goal), plan) in pairs.iter().zip(paths) {
        let ordered_snapped: Vec<Rule> = plan
            .steps
            .iter()
            .map(|s| snapped[&s.rule_index].clone())
            .collect();
        let verified = replay_reaches_goal(&ordered_snapped, facts, goal, cfg.success_threshold);
        all_verified &= verified;
        per_pair.push(TrainedPath {
            path: plan.clone(),
            learned_rules: plan
                .steps
                .iter()
                .map(|s| learned[&s.rule_index].clone())
                .collect(),
            loss_curve: curve.clone(),
            verified,
            extracted: plan
                .steps
                .iter()
                .map(|s| extracted[&s.rule_index].clone())
                .collect(),
        });
    }

    Ok(MultiCandidate {
        per_pair,
        loss_curve: curve,
        verified: all_verified,
    })
}

/// Trains one already-enumerated path for a single facts/goal pair.
pub fn train_path(
    plan: &PathPlan,
    facts: &SemanticGraph,
    goal: &SemanticGraph,
    rules: &[Rule],
    lexicon: &Lexicon,
    chain_cfg: &ChainConfig,
    cfg: &TrainConfig,
) -> Result<TrainedPath, TrainError> {
    let candidate = train_combo(
        &[(facts.clone(), goal.clone())],
        std::slice::from_ref(plan),
        rules,
        lexicon,
        chain_cfg,
        cfg,
    )?;
    Ok(candidate.per_pair.into_iter().next().expect("one pair"))
}

/// Enumerates every path for the pair, trains each independently, and ranks
/// by (verified, final loss). Deterministic given the seed.
pub fn train_all(
    facts: &SemanticGraph,
    goal: &SemanticGraph,
    rules: &[Rule],
    lexicon: &Lexicon,
    chain_cfg: &ChainConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let multi = train_multi(
        &[(facts.clone(), goal.clone())],
        rules,
        lexicon,
        chain_cfg,
        cfg,
    )?;
    let ranked = multi
        .ranked
        .into_iter()
        .map(|c| c.per_pair.into_iter().next().expect("one pair"))
        .collect();
    Ok(TrainOutcome { ranked })
}

/// Trains shared rule parameters against the summed loss of several
/// facts/goal pairs. Every combination of per-pair paths becomes one
/// candidate; with a single pair this reduces exactly to [`train_all`].
pub fn train_multi(
    pairs: &[(SemanticGraph, SemanticGraph)],
    rules: &[Rule],
    lexicon: &Lexicon,
    chain_cfg: &ChainConfig,
    cfg: &TrainConfig,
) -> Result<MultiOutcome, TrainError> {
    assert!(!pairs.is_empty(), "at least one facts/goal pair");
    let mut per_pair_plans = Vec::new();
    for (facts, goal) in pairs {
        let plans = enumerate_paths(facts, goal, rules, chain_cfg)?;
        if plans.is_empty() {
            return Err(TrainError::NoPath);
        }
        per_pair_plans.push(plans);
    }

    // Cartesian product of per-pair path choices.
    let mut combos: Vec<Vec<PathPlan>> = vec![Vec::new()];
    for plans in &per_pair_plans {
        let mut next = Vec::new();
        for combo in &combos {
            for plan in plans {
                let mut extended = combo.clone();
                extended.push(plan.clone());
                next.push(extended);
            }
        }
        combos = next;
    }

    let mut candidates = Vec::new();
    for combo in &combos {
        candidates.push(train_combo(pairs, combo, rules, lexicon, chain_cfg, cfg)?);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = &candidates[a];
        let cb = &candidates[b];
        cb.verified
            .cmp(&ca.verified)
            .then(
                ca.final_loss()
                    .partial_cmp(&cb.final_loss())
                    .expect("finite losses"),
            )
            .then(a.cmp(&b))
    });
    let ranked = order.into_iter().map(|i| candidates[i].clone()).collect();
    Ok(MultiOutcome { ranked })
}

/// Extracted rule text of a trained path, in step order.
pub fn extract_rules(trained: &TrainedPath) -> Vec<String> {
    trained.extracted.clone()
}

/// Report entry for one trained path, serializable for the CLI's JSON
/// output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathReport {
    pub rule_labels: Vec<String>,
    pub length: usize,
    pub final_loss: f64,
    pub verified: bool,
    pub extracted_rules: Vec<String>,
    pub loss_curve: Vec<f64>,
}

pub fn path_reports(outcome: &TrainOutcome) -> Vec<PathReport> {
    outcome
        .ranked
        .iter()
        .map(|t| PathReport {
            rule_labels: t.learned_rules.iter().map(|r| r.label.clone()).collect(),
            length: t.path.len(),
            final_loss: t.final_loss(),
            verified: t.verified,
            extracted_rules: t.extracted.clone(),
            loss_curve: t.loss_curve.clone(),
        })
        .collect()
}
