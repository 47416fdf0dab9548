//! Enumeration of rule-application paths from facts to goal.
//!
//! A path applies each rule at most once. At enumeration time the rule
//! embeddings are mostly untrained, so matching is structural for unfrozen
//! elements: only frozen elements (named atoms such as a frozen `and`
//! relation, or copied facts) additionally gate on cosine against their
//! threshold. A path is admitted when the goal embeds injectively into its
//! final state under the same frozen-gated test.

use crate::graph::{apply_rule, element_clears, find_bindings, Binding, Rule, SemanticGraph};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("slot count {slots} is too small: an admitted path needs {needed}")]
    SlotOverflow { needed: usize, slots: usize },
}

/// Enumeration settings. `max_depth` defaults to the number of rules (the
/// use-once constraint bounds depth anyway); `slots` defaults to the largest
/// predicate count over facts, goal, and every rule side.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub max_depth: Option<usize>,
    pub slots: Option<usize>,
    pub goal_check_threshold: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            max_depth: None,
            slots: None,
            goal_check_threshold: 0.6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathStep {
    pub rule_index: usize,
    pub binding: Binding,
}

/// One candidate proof: an ordered sequence of rule applications whose final
/// state structurally admits the goal. `states[0]` is the fact graph and
/// `states[i + 1]` is the result of applying step `i`.
#[derive(Debug, Clone)]
pub struct PathPlan {
    pub steps: Vec<PathStep>,
    pub states: Vec<SemanticGraph>,
    pub goal_binding: Binding,
    pub slots: usize,
}

impl PathPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &SemanticGraph {
        self.states.last().expect("states is never empty")
    }

    fn needed_slots(&self, goal: &SemanticGraph, rules: &[Rule]) -> usize {
        let mut needed = goal.atom_count();
        for state in &self.states {
            needed = needed.max(state.atom_count());
        }
        for step in &self.steps {
            let rule = &rules[step.rule_index];
            needed = needed.max(rule.pre.atom_count());
            needed = needed.max(rule.post.nodes.len() + rule.post.edges.len());
        }
        needed
    }
}

/// Bindings of the rule's precondition graph into `state` that preserve
/// structure everywhere and pass the cosine threshold for frozen
/// precondition elements only; wildcard slots match anything of their kind.
pub fn structural_match(rule: &Rule, state: &SemanticGraph) -> Vec<Binding> {
    find_bindings(
        &rule.pre,
        state,
        &|p, t| {
            let pre = &rule.pre.nodes[p.0];
            !pre.frozen
                || element_clears(
                    &pre.embedding,
                    &state.nodes[t.0].embedding,
                    rule.thresholds.nodes[p.0],
                )
        },
        &|p, t| {
            let pre = &rule.pre.edges[p.0];
            !pre.frozen
                || element_clears(
                    &pre.embedding,
                    &state.edges[t.0].embedding,
                    rule.thresholds.edges[p.0],
                )
        },
    )
}

/// Injective structural maps of the goal into a state. Frozen state elements
/// (copied facts, frozen relations) must clear `threshold` against the goal
/// element; unfrozen elements are still trainable and match structurally.
pub fn goal_fit(goal: &SemanticGraph, state: &SemanticGraph, threshold: f64) -> Vec<Binding> {
    find_bindings(
        goal,
        state,
        &|g, s| {
            let st = &state.nodes[s.0];
            !st.frozen || element_clears(&goal.nodes[g.0].embedding, &st.embedding, threshold)
        },
        &|g, s| {
            let st = &state.edges[s.0];
            !st.frozen || element_clears(&goal.edges[g.0].embedding, &st.embedding, threshold)
        },
    )
}

fn auto_slots(facts: &SemanticGraph, goal: &SemanticGraph, rules: &[Rule]) -> usize {
    let mut n = facts.atom_count().max(goal.atom_count());
    for rule in rules {
        n = n.max(rule.pre.atom_count());
        n = n.max(rule.post.nodes.len() + rule.post.edges.len());
    }
    n.max(1)
}

/// Depth-first enumeration of every path of length 1..=max_depth whose final
/// state admits the goal. Rules are tried in index order and bindings in
/// canonical order, so the result is deterministic.
pub fn enumerate_paths(
    facts: &SemanticGraph,
    goal: &SemanticGraph,
    rules: &[Rule],
    cfg: &ChainConfig,
) -> Result<Vec<PathPlan>, ChainError> {
    if rules.is_empty() {
        return Ok(Vec::new());
    }
    let max_depth = cfg.max_depth.unwrap_or(rules.len()).max(1);
    let slots = cfg.slots.unwrap_or_else(|| auto_slots(facts, goal, rules));

    struct Dfs<'a> {
        goal: &'a SemanticGraph,
        rules: &'a [Rule],
        max_depth: usize,
        threshold: f64,
        slots: usize,
        plans: Vec<PathPlan>,
    }

    impl Dfs<'_> {
        fn walk(
            &mut self,
            state: &SemanticGraph,
            used: &mut Vec<bool>,
            steps: &mut Vec<PathStep>,
            states: &mut Vec<SemanticGraph>,
        ) {
            if !steps.is_empty() {
                let fits = goal_fit(self.goal, state, self.threshold);
                if let Some(goal_binding) = fits.into_iter().next() {
                    self.plans.push(PathPlan {
                        steps: steps.clone(),
                        states: states.clone(),
                        goal_binding,
                        slots: self.slots,
                    });
                }
            }
            if steps.len() == self.max_depth {
                return;
            }
            for rule_index in 0..self.rules.len() {
                if used[rule_index] {
                    continue;
                }
                let rule = &self.rules[rule_index];
                for binding in structural_match(rule, state) {
                    let next = apply_rule(rule, state, &binding)
                        .expect("bindings from the matcher are valid");
                    used[rule_index] = true;
                    steps.push(PathStep {
                        rule_index,
                        binding,
                    });
                    states.push(next.clone());
                    self.walk(&next, used, steps, states);
                    states.pop();
                    steps.pop();
                    used[rule_index] = false;
                }
            }
        }
    }

    let mut dfs = Dfs {
        goal,
        rules,
        max_depth,
        threshold: cfg.goal_check_threshold,
        slots,
        plans: Vec::new(),
    };
    let mut used = vec![false; rules.len()];
    let mut steps = Vec::new();
    let mut states = vec![facts.clone()];
    dfs.walk(facts, &mut used, &mut steps, &mut states);

    for plan in &dfs.plans {
        let needed = plan.needed_slots(goal, rules);
        if needed > slots {
            return Err(ChainError::SlotOverflow { needed, slots });
        }
    }
    Ok(dfs.plans)
}
