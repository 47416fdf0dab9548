//! Acceptance suite: one test per release criterion, each printing a
//! PASS line when it holds. Run with
//! `cargo test -p reasoner --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use reasoner::autodiff::{Tape, TensorId};
use reasoner::chain::{enumerate_paths, ChainConfig, PathPlan};
use reasoner::dsl::{parse_facts, parse_rule, parse_rules, serialize_graph, serialize_rule};
use reasoner::embedding::{cosine, load_word_vectors, random_embedding, Lexicon};
use reasoner::graph::{
    apply_rule, match_subgraph, Binding, EdgeId, NodeId, Rule, SemanticGraph, Thresholds,
};
use reasoner::matrices::{
    forward_chain, loss, propagation_matrix, relation_chain, similarity_matrix, ChainStep,
    LossMode, StepMatrices,
};
use reasoner::train::{train_all, PathModel, TrainConfig};

const SEEDS: [u64; 5] = [1, 2, 3, 5, 7];

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn load_bundle(bundle: &str, seed: u64) -> (Lexicon, SemanticGraph, SemanticGraph, Vec<Rule>) {
    let dir = data_dir().join(bundle);
    let store = load_word_vectors(data_dir().join("vocab_toy.txt"), None).unwrap();
    let mut lexicon = Lexicon::with_node_vocab(seed, store);
    let facts = parse_facts(&std::fs::read_to_string(dir.join("facts.txt")).unwrap())
        .unwrap()
        .realize(&mut lexicon)
        .unwrap();
    let goal = parse_facts(&std::fs::read_to_string(dir.join("goal.txt")).unwrap())
        .unwrap()
        .realize(&mut lexicon)
        .unwrap();
    let rules: Vec<Rule> = parse_rules(&std::fs::read_to_string(dir.join("rules.txt")).unwrap())
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, rt)| rt.realize(&mut lexicon, &format!("r{i}")).unwrap())
        .collect();
    (lexicon, facts, goal, rules)
}

/// One-rule learning on the bundled toy vocabulary: a verified path whose
/// extracted rule replays to the goal, thresholds clipped at 0.6, on at
/// least 3 of 5 fixed seeds, within 60 seconds.
#[test]
fn criterion_one_rule_learning() {
    let started = Instant::now();
    let mut successes = 0;
    for seed in SEEDS {
        let (lexicon, facts, goal, rules) = load_bundle("one_rule", seed);
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let outcome = train_all(
            &facts,
            &goal,
            &rules,
            &lexicon,
            &ChainConfig::default(),
            &cfg,
        )
        .unwrap();
        let best = outcome.best();
        let thresholds_ok = best.learned_rules.iter().all(|r| {
            r.thresholds
                .nodes
                .iter()
                .chain(&r.thresholds.edges)
                .all(|&t| t >= 0.6)
        });
        if best.verified && thresholds_ok {
            successes += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        successes >= 3,
        "one-rule learning verified on {successes}/5 seeds"
    );
    assert!(
        elapsed.as_secs() < 60,
        "one-rule learning took {elapsed:?}, budget 60s"
    );
    println!(
        "PASS: one-rule learning verified on {successes}/5 seeds in {:.1}s",
        elapsed.as_secs_f64()
    );
}

/// Two-rule chaining: verified length-2 path, the second rule's MATCH keeps
/// the frozen "and" relation with its embedding bitwise unchanged, on at
/// least 3 of 5 fixed seeds, within 5 minutes.
#[test]
fn criterion_two_rule_chaining() {
    let started = Instant::now();
    let mut successes = 0;
    for seed in SEEDS {
        let (lexicon, facts, goal, rules) = load_bundle("two_rules", seed);
        let and_initial = {
            let mut scratch = lexicon.clone();
            scratch.relation_embedding("and")
        };
        assert_eq!(rules[1].pre.edges[0].symbol.as_deref(), Some("and"));
        assert!(rules[1].pre.edges[0].frozen);
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let outcome = train_all(
            &facts,
            &goal,
            &rules,
            &lexicon,
            &ChainConfig::default(),
            &cfg,
        )
        .unwrap();
        let best = outcome.best();
        let second = best.learned_rules.last().unwrap();
        let frozen_kept = second.pre.edges[0].symbol.as_deref() == Some("and")
            && second.pre.edges[0].embedding == and_initial;
        let extracted_names_and = best
            .extracted
            .last()
            .map(|t| t.contains("and>"))
            .unwrap_or(false);
        if best.verified && best.path.len() == 2 && frozen_kept && extracted_names_and {
            successes += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        successes >= 3,
        "two-rule chaining verified on {successes}/5 seeds"
    );
    assert!(
        elapsed.as_secs() < 300,
        "two-rule chaining took {elapsed:?}, budget 5min"
    );
    println!(
        "PASS: two-rule chaining verified on {successes}/5 seeds in {:.1}s",
        elapsed.as_secs_f64()
    );
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        plus[i] += h;
        let mut minus = x.to_vec();
        minus[i] -= h;
        grad[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    grad
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// A synthetic full pipeline: 1-2 steps of node and relation chains plus the
/// goal comparison and the loss, with every embedding column, threshold, and
/// weight trainable. Layout of the flat vector: per step, pre columns, state
/// columns, thresholds (one per active row), weight; all doubled for the
/// relation side; then the goal-step columns for both sides.
struct SyntheticPipeline {
    n: usize,
    dim: usize,
    active: Vec<(usize, usize, usize, usize)>, // per step: pre/post node, pre/post edge counts
    goal_nodes: usize,
    goal_edges: usize,
    mode: LossMode,
}

impl SyntheticPipeline {
    fn random(seed: u64) -> Self {
        let pick = |tag: &str, lo: usize, hi: usize| -> usize {
            let v = random_embedding(seed, tag, 1).0[0].abs();
            lo + ((v * 1e4) as usize) % (hi - lo + 1)
        };
        let n = pick("n", 2, 6);
        let step_count = pick("steps", 1, 2);
        let mut active = Vec::new();
        for s in 0..step_count {
            let pre_n = pick(&format!("pre_n{s}"), 1, n);
            let post_n = pick(&format!("post_n{s}"), 1, n);
            let pre_e = pick(&format!("pre_e{s}"), 1, n);
            let post_e = pick(&format!("post_e{s}"), 1, n);
            active.push((pre_n, post_n, pre_e, post_e));
        }
        SyntheticPipeline {
            n,
            dim: 4,
            active,
            goal_nodes: pick("goal_n", 1, n),
            goal_edges: pick("goal_e", 1, n),
            mode: if pick("mode", 0, 1) == 0 {
                LossMode::Stated
            } else {
                LossMode::FullBce
            },
        }
    }

    fn param_count(&self) -> usize {
        let mut count = 0;
        for &(pre_n, _, pre_e, _) in &self.active {
            count += pre_n * self.dim + self.n * self.dim + pre_n + 1; // node side P, F, T, w
            count += pre_e * self.dim + self.n * self.dim + pre_e; // relation side P, F, T
        }
        count += self.goal_nodes * self.dim + self.n * self.dim + self.goal_nodes;
        count += self.goal_edges * self.dim + self.n * self.dim + self.goal_edges;
        count
    }

    fn initial(&self, seed: u64) -> Vec<f64> {
        let count = self.param_count();
        let raw = random_embedding(seed, "pipeline-init", count);
        raw.0
            .iter()
            .enumerate()
            .map(|(i, &v)| v * 0.5 + if i % 7 == 0 { 0.6 } else { 0.0 })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn side(
        &self,
        tape: &mut Tape,
        values: &[f64],
        cursor: &mut usize,
        leaves: &mut Vec<TensorId>,
        pre: usize,
        post: Option<usize>,
        weight: Option<TensorId>,
        include_weight: bool,
    ) -> (ChainStep, Option<TensorId>) {
        let mut take = |tape: &mut Tape, leaves: &mut Vec<TensorId>, rows: usize| -> TensorId {
            let id = tape.parameter(rows, 1, values[*cursor..*cursor + rows].to_vec());
            leaves.push(id);
            *cursor += rows;
            id
        };
        let pre_cols: Vec<TensorId> = (0..pre).map(|_| take(tape, leaves, self.dim)).collect();
        let state_cols: Vec<TensorId> = (0..self.n).map(|_| take(tape, leaves, self.dim)).collect();
        let thr = take(tape, leaves, pre);
        let p = tape.stack_columns(&pre_cols, self.n, self.dim).unwrap();
        let f = tape.stack_columns(&state_cols, self.n, self.dim).unwrap();
        let mut mask = vec![0.0; self.n * self.n];
        for j in 0..pre {
            mask[j * self.n + (j + 1) % self.n] = 1.0;
        }
        let m = tape.constant(self.n, self.n, mask);
        let t = tape.row_broadcast(thr, self.n).unwrap();
        let s = similarity_matrix(
            tape,
            &StepMatrices {
                preconditions: p,
                facts: f,
                mask: m,
                thresholds: t,
            },
            true,
        )
        .unwrap();
        let (r, w_out) = match post {
            Some(post_count) => {
                let w = match weight {
                    Some(w) => w,
                    None if include_weight => take(tape, leaves, 1),
                    None => unreachable!("weight comes from the node side"),
                };
                (
                    Some(propagation_matrix(tape, pre, post_count, w, self.n).unwrap()),
                    Some(w),
                )
            }
            None => (None, None),
        };
        (
            ChainStep {
                similarity: s,
                propagation: r,
            },
            w_out,
        )
    }

    fn build(&self, values: &[f64]) -> (Tape, TensorId, Vec<TensorId>) {
        let mut tape = Tape::new();
        let mut cursor = 0;
        let mut leaves = Vec::new();
        let mut node_steps = Vec::new();
        let mut rel_steps = Vec::new();
        for &(pre_n, post_n, pre_e, post_e) in &self.active {
            let (node_step, w) = self.side(
                &mut tape,
                values,
                &mut cursor,
                &mut leaves,
                pre_n,
                Some(post_n),
                None,
                true,
            );
            node_steps.push(node_step);
            let (rel_step, _) = self.side(
                &mut tape,
                values,
                &mut cursor,
                &mut leaves,
                pre_e,
                Some(post_e),
                w,
                false,
            );
            rel_steps.push(rel_step);
        }
        let (goal_node_step, _) = self.side(
            &mut tape,
            values,
            &mut cursor,
            &mut leaves,
            self.goal_nodes,
            None,
            None,
            false,
        );
        node_steps.push(goal_node_step);
        let (goal_rel_step, _) = self.side(
            &mut tape,
            values,
            &mut cursor,
            &mut leaves,
            self.goal_edges,
            None,
            None,
            false,
        );
        rel_steps.push(goal_rel_step);
        assert_eq!(cursor, values.len());

        let f0 = tape.ones(self.n, 1);
        let f0r = tape.ones(self.n, 1);
        let f_n = forward_chain(&mut tape, &node_steps, f0).unwrap();
        let f_rn = relation_chain(&mut tape, &rel_steps, f0r).unwrap();
        let mut g = vec![0.0; self.n];
        for slot in g.iter_mut().take(self.goal_nodes) {
            *slot = 1.0;
        }
        let mut gr = vec![0.0; self.n];
        for slot in gr.iter_mut().take(self.goal_edges) {
            *slot = 1.0;
        }
        let g_id = tape.constant(self.n, 1, g);
        let gr_id = tape.constant(self.n, 1, gr);
        let l = loss(&mut tape, f_n, f_rn, g_id, gr_id, self.mode).unwrap();
        (tape, l, leaves)
    }

    fn loss_at(&self, values: &[f64]) -> f64 {
        let (tape, l, _) = self.build(values);
        tape.item(l)
    }

    fn grads_at(&self, values: &[f64]) -> Vec<f64> {
        let (mut tape, l, leaves) = self.build(values);
        tape.backward(l).unwrap();
        let mut grads = Vec::with_capacity(values.len());
        for leaf in leaves {
            grads.extend_from_slice(tape.grad(leaf));
        }
        assert_eq!(grads.len(), values.len());
        grads
    }
}

/// Gradient correctness of the full chain/loss pipeline on 20 random
/// instances, against central finite differences.
#[test]
fn criterion_gradient_correctness() {
    let started = Instant::now();
    let mut checked = 0;
    for seed in 0..20u64 {
        let pipeline = SyntheticPipeline::random(seed + 100);
        let values = pipeline.initial(seed);
        let numeric = central_diff(&|v| pipeline.loss_at(v), &values, 1e-5);
        let analytic = pipeline.grads_at(&values);
        let err = max_rel_err(&analytic, &numeric);
        assert!(
            err < 1e-4,
            "instance {seed}: max relative error {err} exceeds 1e-4"
        );
        checked += analytic.len();
    }

    // The real one-rule path model, end to end, as assembled by the trainer.
    let (_, facts, goal, rules) = load_bundle("one_rule", 7);
    let plans = enumerate_paths(&facts, &goal, &rules, &ChainConfig::default()).unwrap();
    let model = PathModel::new(
        vec![(facts.clone(), goal.clone())],
        vec![plans[0].clone()],
        rules,
        &ChainConfig::default(),
        LossMode::Stated,
    );
    let values = model.initial_params();
    let numeric = central_diff(&|v| model.loss_at(v).unwrap(), &values, 1e-5);
    let (_, analytic) = model.grads_at(&values).unwrap();
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < 1e-4, "path model: max relative error {err}");
    checked += analytic.len();

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "gradient check took {elapsed:?}");
    println!(
        "PASS: gradients match finite differences over {checked} parameters in {:.1}s",
        elapsed.as_secs_f64()
    );
}

/// Masked/biased softmax similarity equals an independent scalar-loop
/// re-evaluation within 1e-12 on 100 random instances; softmax columns sum
/// to 1 within 1e-6; S is exactly zero wherever M is zero.
#[test]
fn criterion_similarity_fidelity() {
    let mut instances = 0;
    for seed in 0..100u64 {
        let n = 2 + (seed as usize % 5);
        let dim = 3 + (seed as usize % 3);
        let p = random_embedding(seed, "accept-p", dim * n).0;
        let f = random_embedding(seed, "accept-f", dim * n).0;
        let mask: Vec<f64> = random_embedding(seed, "accept-m", n * n)
            .0
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let thr: Vec<f64> = random_embedding(seed, "accept-t", n)
            .0
            .iter()
            .map(|v| 0.6 + 0.3 * v.tanh())
            .collect();

        let mut tape = Tape::new();
        let p_id = tape.constant(dim, n, p.clone());
        let f_id = tape.constant(dim, n, f.clone());
        let m_id = tape.constant(n, n, mask.clone());
        let mut t_full = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                t_full[j * n + k] = thr[j];
            }
        }
        let t_id = tape.constant(n, n, t_full.clone());
        let s = similarity_matrix(
            &mut tape,
            &StepMatrices {
                preconditions: p_id,
                facts: f_id,
                mask: m_id,
                thresholds: t_id,
            },
            true,
        )
        .unwrap();
        let got = tape.value(s);

        // Straight-line scalar re-evaluation.
        let normalize = |src: &[f64]| {
            let mut out = src.to_vec();
            for k in 0..n {
                let norm = (0..dim)
                    .map(|d| src[d * n + k] * src[d * n + k])
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    for d in 0..dim {
                        out[d * n + k] = src[d * n + k] / norm;
                    }
                }
            }
            out
        };
        let pn = normalize(&p);
        let fn_ = normalize(&f);
        let mut soft = vec![0.0; n * n];
        for k in 0..n {
            let mut logits = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for d in 0..dim {
                    dot += pn[d * n + j] * fn_[d * n + k];
                }
                logits[j] = dot - t_full[j * n + k];
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for j in 0..n {
                soft[j * n + k] = (logits[j] - max).exp() / denom;
            }
        }
        for i in 0..n * n {
            let want = mask[i] * soft[i];
            assert!(
                (got[i] - want).abs() < 1e-12,
                "instance {seed} entry {i}: {} vs {want}",
                got[i]
            );
            if mask[i] == 0.0 {
                assert_eq!(got[i], 0.0, "masked entry must be exactly zero");
            }
        }

        // Column sums of the softmax itself.
        let logits_id = {
            let mut tape2 = Tape::new();
            let p2 = tape2.constant(dim, n, p.clone());
            let f2 = tape2.constant(dim, n, f.clone());
            let pn2 = tape2.normalize_cols(p2);
            let fn2 = tape2.normalize_cols(f2);
            let pt = tape2.transpose(pn2);
            let scores = tape2.matmul(pt, fn2).unwrap();
            let t2 = tape2.constant(n, n, t_full.clone());
            let logits = tape2.sub(scores, t2).unwrap();
            let sm = tape2.softmax_cols(logits);
            tape2.value(sm).to_vec()
        };
        for k in 0..n {
            let sum: f64 = (0..n).map(|j| logits_id[j * n + k]).sum();
            assert!((sum - 1.0).abs() < 1e-6, "column {k} sums to {sum}");
        }
        instances += 1;
    }
    println!("PASS: similarity matrix matches the scalar oracle on {instances} instances");
}

/// The propagation matrix for 3 preconditions and 2 postconditions at n = 4
/// reproduces the printed block layout.
#[test]
fn criterion_propagation_block() {
    let mut tape = Tape::new();
    let w = tape.scalar(1.0);
    let r = propagation_matrix(&mut tape, 3, 2, w, 4).unwrap();
    #[rustfmt::skip]
    let want = [
        1.0, 1.0, 1.0, 0.0,
        1.0, 1.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    ];
    assert_eq!(tape.value(r), &want[..]);
    println!("PASS: propagation matrix reproduces the 3-pre/2-post block at n=4");
}

// Brute-force path oracle shared by the enumeration criterion.
mod oracle {
    use super::*;

    fn all_injections(k: usize, n: usize) -> Vec<Vec<usize>> {
        fn rec(k: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in 0..n {
                if !cur.contains(&i) {
                    cur.push(i);
                    rec(k, n, cur, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(k, n, &mut Vec::new(), &mut out);
        out
    }

    fn gated(
        frozen: bool,
        a: &reasoner::embedding::Embedding,
        b: &reasoner::embedding::Embedding,
        threshold: f64,
    ) -> bool {
        !frozen || cosine(a, b).map(|c| c > threshold).unwrap_or(false)
    }

    pub fn matches_of(rule: &Rule, state: &SemanticGraph) -> Vec<Binding> {
        let mut out = Vec::new();
        for nodes in all_injections(rule.pre.node_count(), state.node_count()) {
            let ok = nodes.iter().enumerate().all(|(p, &t)| {
                gated(
                    rule.pre.nodes[p].frozen,
                    &rule.pre.nodes[p].embedding,
                    &state.nodes[t].embedding,
                    rule.thresholds.nodes[p],
                )
            });
            if !ok {
                continue;
            }
            for edges in all_injections(rule.pre.edge_count(), state.edge_count()) {
                let ok = edges.iter().enumerate().all(|(p, &t)| {
                    let pe = &rule.pre.edges[p];
                    let te = &state.edges[t];
                    te.source.0 == nodes[pe.source.0]
                        && te.target.0 == nodes[pe.target.0]
                        && gated(
                            pe.frozen,
                            &pe.embedding,
                            &te.embedding,
                            rule.thresholds.edges[p],
                        )
                });
                if ok {
                    out.push(Binding {
                        node_map: nodes.iter().map(|&i| NodeId(i)).collect(),
                        edge_map: edges.iter().map(|&i| EdgeId(i)).collect(),
                    });
                }
            }
        }
        out.sort();
        out
    }

    fn goal_ok(goal: &SemanticGraph, state: &SemanticGraph, thr: f64) -> bool {
        for nodes in all_injections(goal.node_count(), state.node_count()) {
            let ok = nodes.iter().enumerate().all(|(g, &s)| {
                gated(
                    state.nodes[s].frozen,
                    &goal.nodes[g].embedding,
                    &state.nodes[s].embedding,
                    thr,
                )
            });
            if !ok {
                continue;
            }
            for edges in all_injections(goal.edge_count(), state.edge_count()) {
                let ok = edges.iter().enumerate().all(|(g, &s)| {
                    let ge = &goal.edges[g];
                    let se = &state.edges[s];
                    se.source.0 == nodes[ge.source.0]
                        && se.target.0 == nodes[ge.target.0]
                        && gated(se.frozen, &ge.embedding, &se.embedding, thr)
                });
                if ok {
                    return true;
                }
            }
        }
        false
    }

    pub fn paths(
        facts: &SemanticGraph,
        goal: &SemanticGraph,
        rules: &[Rule],
        max_depth: usize,
        thr: f64,
    ) -> Vec<Vec<(usize, Binding)>> {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            state: &SemanticGraph,
            goal: &SemanticGraph,
            rules: &[Rule],
            used: &mut Vec<bool>,
            prefix: &mut Vec<(usize, Binding)>,
            max_depth: usize,
            thr: f64,
            out: &mut Vec<Vec<(usize, Binding)>>,
        ) {
            if !prefix.is_empty() && goal_ok(goal, state, thr) {
                out.push(prefix.clone());
            }
            if prefix.len() == max_depth {
                return;
            }
            for (ri, rule) in rules.iter().enumerate() {
                if used[ri] {
                    continue;
                }
                for b in matches_of(rule, state) {
                    let next = apply_rule(rule, state, &b).unwrap();
                    used[ri] = true;
                    prefix.push((ri, b));
                    rec(&next, goal, rules, used, prefix, max_depth, thr, out);
                    prefix.pop();
                    used[ri] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(
            facts,
            goal,
            rules,
            &mut vec![false; rules.len()],
            &mut Vec::new(),
            max_depth,
            thr,
            &mut out,
        );
        out
    }
}

fn plan_pairs(plans: &[PathPlan]) -> Vec<Vec<(usize, Binding)>> {
    plans
        .iter()
        .map(|p| {
            p.steps
                .iter()
                .map(|s| (s.rule_index, s.binding.clone()))
                .collect()
        })
        .collect()
}

/// Path enumeration equals a brute-force recursive oracle for rule sets of
/// size up to 3 over toy states, and no path reuses a rule.
#[test]
fn criterion_path_enumeration_oracle() {
    let fact_texts = [
        "p(a), q(b), e(a,b)",
        "p(a), q(b), r(c), e(a,b), f(a,c)",
        "p(a), q(b), r(c), e(a,b), f(b,c)",
    ];
    let goal_texts = ["x(a), y(b), g(a,b)", "x(a)"];
    let rule_sets: [&[&str]; 4] = [
        &["MATCH *(a), *(a,b), *(b) CREATE (b), *(b,d), *(d)"],
        &[
            "MATCH *(a), *(a,b), *(b) CREATE (a), *(a,d), *(d)",
            "MATCH *(a), *(a,b), *(b) CREATE (b), *(b,d), *(d)",
        ],
        &[
            "MATCH *(a), *(a,b), *(b), *(a,c), *(c) CREATE (b), and(b,c), (c)",
            "MATCH *(a), and(a,b), *(b) CREATE *(c), *(c,d), *(d)",
        ],
        &[
            "MATCH *(a) CREATE *(b)",
            "MATCH *(a), *(a,b), *(b) CREATE (a)",
            "MATCH *(a), *(a,b), *(b) CREATE *(c), *(c,d), *(d)",
        ],
    ];
    let mut cases = 0;
    for (fi, facts_text) in fact_texts.iter().enumerate() {
        for (gi, goal_text) in goal_texts.iter().enumerate() {
            for (si, set) in rule_sets.iter().enumerate() {
                let seed = (fi * 100 + gi * 10 + si) as u64;
                let mut lexicon = Lexicon::seeded(seed, 8);
                let facts = parse_facts(facts_text)
                    .unwrap()
                    .realize(&mut lexicon)
                    .unwrap();
                let goal = parse_facts(goal_text)
                    .unwrap()
                    .realize(&mut lexicon)
                    .unwrap();
                let rules: Vec<Rule> = set
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        parse_rule(t)
                            .unwrap()
                            .realize(&mut lexicon, &format!("r{i}"))
                            .unwrap()
                    })
                    .collect();
                let cfg = ChainConfig::default();
                let plans = enumerate_paths(&facts, &goal, &rules, &cfg).unwrap();
                let want =
                    oracle::paths(&facts, &goal, &rules, rules.len(), cfg.goal_check_threshold);
                assert_eq!(
                    plan_pairs(&plans),
                    want,
                    "facts {fi}, goal {gi}, rules {si}"
                );
                for plan in &plans {
                    let mut seen = vec![false; rules.len()];
                    for step in &plan.steps {
                        assert!(!seen[step.rule_index], "a path reused a rule");
                        seen[step.rule_index] = true;
                    }
                }
                cases += 1;
            }
        }
    }
    println!("PASS: path enumeration matches the brute-force oracle on {cases} instances");
}

/// Subgraph matching equals exhaustive injective-map enumeration on 50
/// random instances, and the self-match binding is always present below
/// threshold 1.
#[test]
fn criterion_matching_oracle() {
    for seed in 0..50u64 {
        let mut lexicon = Lexicon::seeded(seed, 6);
        let facts_text = match seed % 4 {
            0 => "p(a), q(b), r(c), e(a,b), f(b,c)",
            1 => "p(a), q(b), r(c), s(d), e(a,b), f(c,d), g(a,c)",
            2 => "p(a), q(b), e(a,b), f(a,b)",
            _ => "p(a), q(b), r(c), s(d), t(e), u(f), e(a,b), f(c,d)",
        };
        let facts = parse_facts(facts_text)
            .unwrap()
            .realize(&mut lexicon)
            .unwrap();
        let pattern = parse_facts("m(x), n(y), k(x,y)")
            .unwrap()
            .realize(&mut lexicon)
            .unwrap();
        // Low bar so random 6-dim cosines produce a mix of hits and misses.
        let thresholds = Thresholds::uniform(&pattern, -0.1);
        let mut got = match_subgraph(&pattern, &thresholds, &facts);
        got.sort();
        let rule = Rule {
            label: "oracle".into(),
            pre: pattern.clone(),
            thresholds: thresholds.clone(),
            post: Default::default(),
            weight: 1.0,
        };
        let want = oracle::matches_of(&rule, &facts);
        assert_eq!(got, want, "seed {seed}");

        // Self match below threshold 1.
        let self_thr = Thresholds::uniform(&facts, 0.999);
        let self_bindings = match_subgraph(&facts, &self_thr, &facts);
        let identity = Binding {
            node_map: (0..facts.node_count()).map(NodeId).collect(),
            edge_map: (0..facts.edge_count()).map(EdgeId).collect(),
        };
        assert!(self_bindings.contains(&identity), "seed {seed}");
    }
    println!("PASS: subgraph matching equals the exhaustive oracle on 50 instances");
}

/// Deterministic generator for valid random rule strings.
fn random_rule_text(seed: u64) -> String {
    let draw = random_embedding(seed, "rule-gen", 64).0;
    let mut cursor = 0;
    let mut next = |range: usize| -> usize {
        let v = (draw[cursor].abs() * 1e5) as usize % range;
        cursor += 1;
        v
    };
    let words = [
        "person",
        "fruit",
        "round",
        "delicious",
        "apple",
        "king",
        "river",
        "music",
    ];
    let rels = ["be", "win", "spouse", "likes", "near"];
    let vars = ["a", "b", "c", "d", "e"];

    let node_count = 1 + next(3);
    let mut match_atoms = Vec::new();
    for var in vars.iter().take(node_count) {
        let name = if next(3) == 0 {
            "*"
        } else {
            words[next(words.len())]
        };
        let atom = match next(3) {
            0 => format!("{name}({var})"),
            1 => format!("{name}>0.{}({var})", 6 + next(4)),
            _ => format!("{name}>0.7{}({var})", next(10)),
        };
        match_atoms.push(atom);
    }
    let edge_count = next(node_count + 1);
    for _ in 0..edge_count {
        let s = vars[next(node_count)];
        let t = vars[next(node_count)];
        let name = if next(3) == 0 {
            "*"
        } else {
            rels[next(rels.len())]
        };
        match_atoms.push(format!("{name}({s},{t})"));
    }

    let mut create_atoms = Vec::new();
    let copy_count = next(node_count + 1);
    for v in vars.iter().take(copy_count) {
        create_atoms.push(format!("({v})"));
    }
    let fresh_count = 1 + next(2);
    let fresh_vars = ["u", "v", "w"];
    for fv in fresh_vars.iter().take(fresh_count) {
        let name = if next(3) == 0 {
            "*"
        } else {
            words[next(words.len())]
        };
        create_atoms.push(format!("{name}({fv})"));
    }
    let create_vars: Vec<&str> = vars
        .iter()
        .take(copy_count)
        .chain(fresh_vars.iter().take(fresh_count))
        .copied()
        .collect();
    let create_edge_count = next(create_vars.len());
    for _ in 0..create_edge_count {
        let s = create_vars[next(create_vars.len())];
        let t = create_vars[next(create_vars.len())];
        let name = if next(3) == 0 {
            "*"
        } else {
            rels[next(rels.len())]
        };
        create_atoms.push(format!("{name}({s},{t})"));
    }

    format!(
        "MATCH {}\nCREATE {}",
        match_atoms.join(", "),
        create_atoms.join(", ")
    )
}

/// Parse -> serialize -> parse is a fixed point on every bundled example and
/// on 200 generated random valid rule strings.
#[test]
fn criterion_dsl_round_trip() {
    // Bundled fact and goal files.
    let mut lexicon = Lexicon::with_node_vocab(
        7,
        load_word_vectors(data_dir().join("vocab_toy.txt"), None).unwrap(),
    );
    for bundle in ["one_rule", "two_rules", "election"] {
        let dir = data_dir().join(bundle);
        for name in ["facts.txt", "goal.txt"] {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).unwrap();
            let g1 = parse_facts(&text).unwrap().realize(&mut lexicon).unwrap();
            let s1 = serialize_graph(&g1).unwrap();
            let g2 = parse_facts(&s1).unwrap().realize(&mut lexicon).unwrap();
            let s2 = serialize_graph(&g2).unwrap();
            assert_eq!(s1, s2, "{}", path.display());
        }
        // Bundled rule files.
        for name in ["rules.txt", "learned_rules.txt"] {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).unwrap();
            for (i, rt) in parse_rules(&text).unwrap().iter().enumerate() {
                let r1 = rt.realize(&mut lexicon, &format!("{bundle}{i}")).unwrap();
                let s1 = serialize_rule(&r1, &lexicon).unwrap();
                let r2 = parse_rule(&s1)
                    .unwrap()
                    .realize(&mut lexicon, &format!("{bundle}{i}b"))
                    .unwrap();
                let s2 = serialize_rule(&r2, &lexicon).unwrap();
                assert_eq!(s1, s2, "{}", path.display());
            }
        }
    }

    // 200 generated rule strings.
    let mut generated = 0;
    let mut seed = 0u64;
    while generated < 200 {
        let text = random_rule_text(seed);
        seed += 1;
        let parsed = match parse_rule(&text) {
            Ok(p) => p,
            Err(e) => panic!("generator produced invalid text {text:?}: {e}"),
        };
        let r1 = parsed.realize(&mut lexicon, &format!("gen{seed}")).unwrap();
        let s1 = serialize_rule(&r1, &lexicon).unwrap();
        let r2 = parse_rule(&s1)
            .unwrap()
            .realize(&mut lexicon, &format!("gen{seed}b"))
            .unwrap();
        let s2 = serialize_rule(&r2, &lexicon).unwrap();
        assert_eq!(s1, s2, "generated rule {text:?}");
        generated += 1;
    }
    println!("PASS: DSL round trip is a fixed point on bundles and {generated} generated rules");
}

/// Two runs of a bundled example with the same seed produce byte-identical
/// JSON reports, through the real binary.
#[test]
fn criterion_deterministic_reports() {
    let exe = env!("CARGO_BIN_EXE_reasoner");
    let tmp = tempfile::tempdir().unwrap();
    for bundle in ["one_rule", "two_rules"] {
        let config = data_dir().join(bundle).join("config.json");
        let out_a = tmp.path().join(format!("{bundle}_a.json"));
        let out_b = tmp.path().join(format!("{bundle}_b.json"));
        for out in [&out_a, &out_b] {
            let status = std::process::Command::new(exe)
                .args([
                    "train",
                    "--config",
                    config.to_str().unwrap(),
                    "--seed",
                    "7",
                    "--out",
                    out.to_str().unwrap(),
                ])
                .stdout(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "training run failed for {bundle}");
        }
        let a = std::fs::read(&out_a).unwrap();
        let b = std::fs::read(&out_b).unwrap();
        assert_eq!(a, b, "reports differ for {bundle}");
    }
    println!("PASS: same-seed runs produce byte-identical reports");
}
