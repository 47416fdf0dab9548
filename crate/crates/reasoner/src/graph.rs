//! Semantic graphs, threshold-gated subgraph matching, and rule application.
//!
//! A fact base is a directed graph whose nodes and edges carry a symbol, an
//! embedding, and a frozen flag. Matching a rule's precondition graph into
//! the facts produces `Binding`s (most general unifiers); applying the rule
//! replaces the matched region with the instantiated postcondition graph,
//! copying bound elements where the rule says so.

use crate::embedding::{cosine, Embedding};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid binding: {reason}")]
    InvalidBinding { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone)]
pub struct GraphNode {
    pub symbol: Option<String>,
    pub embedding: Embedding,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct GraphEdge {
    pub source: NodeId,
    pub target: NodeId,
    pub symbol: Option<String>,
    pub embedding: Embedding,
    pub frozen: bool,
}

/// Directed graph of embedded predicates. Node and edge ids are positions in
/// the respective lists.
#[derive(Debug, Clone, Default)]
pub struct SemanticGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SemanticGraph {
    pub fn new() -> Self {
        SemanticGraph::default()
    }

    pub fn add_node(
        &mut self,
        symbol: Option<String>,
        embedding: Embedding,
        frozen: bool,
    ) -> NodeId {
        self.nodes.push(GraphNode {
            symbol,
            embedding,
            frozen,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_edge(
        &mut self,
        source: NodeId,
        target: NodeId,
        symbol: Option<String>,
        embedding: Embedding,
        frozen: bool,
    ) -> EdgeId {
        assert!(source.0 < self.nodes.len(), "edge source out of bounds");
        assert!(target.0 < self.nodes.len(), "edge target out of bounds");
        self.edges.push(GraphEdge {
            source,
            target,
            symbol,
            embedding,
            frozen,
        });
        EdgeId(self.edges.len() - 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Total predicate count: one per node plus one per edge.
    pub fn atom_count(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }
}

/// Injective, structure-preserving map from a pattern graph into a target
/// graph; position `i` holds the target id of pattern element `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Binding {
    pub node_map: Vec<NodeId>,
    pub edge_map: Vec<EdgeId>,
}

/// Per-element matching thresholds for a precondition graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub nodes: Vec<f64>,
    pub edges: Vec<f64>,
}

impl Thresholds {
    pub fn uniform(pattern: &SemanticGraph, value: f64) -> Self {
        Thresholds {
            nodes: vec![value; pattern.node_count()],
            edges: vec![value; pattern.edge_count()],
        }
    }
}

/// Postcondition node: either a copy of a matched precondition node or a
/// fresh element carried by the rule.
#[derive(Debug, Clone)]
pub enum PostNode {
    Copy {
        pre: NodeId,
    },
    Fresh {
        symbol: Option<String>,
        embedding: Embedding,
        frozen: bool,
    },
}

#[derive(Debug, Clone)]
pub struct PostEdge {
    /// Indices into the postcondition node list.
    pub source: usize,
    pub target: usize,
    pub symbol: Option<String>,
    pub embedding: Embedding,
    pub frozen: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PostPattern {
    pub nodes: Vec<PostNode>,
    pub edges: Vec<PostEdge>,
}

/// A MATCH/CREATE rule: a precondition graph with per-element thresholds, a
/// postcondition pattern with copy slots, and a scalar weight.
#[derive(Debug, Clone)]
pub struct Rule {
    pub label: String,
    pub pre: SemanticGraph,
    pub thresholds: Thresholds,
    pub post: PostPattern,
    pub weight: f64,
}

impl Rule {
    /// True when every element is frozen: nothing left to train.
    pub fn fully_frozen(&self) -> bool {
        self.pre.nodes.iter().all(|n| n.frozen)
            && self.pre.edges.iter().all(|e| e.frozen)
            && self.post.nodes.iter().all(|n| match n {
                PostNode::Copy { .. } => true,
                PostNode::Fresh { frozen, .. } => *frozen,
            })
            && self.post.edges.iter().all(|e| e.frozen)
    }
}

/// Backtracking matcher shared by the cosine-gated and structural variants.
/// Nodes are assigned in pattern-id order with target candidates tried in
/// ascending id order, then edges likewise, so the returned bindings are in
/// lexicographic order over (node_map, edge_map).
pub(crate) fn find_bindings(
    pattern: &SemanticGraph,
    target: &SemanticGraph,
    node_ok: &dyn Fn(NodeId, NodeId) -> bool,
    edge_ok: &dyn Fn(EdgeId, EdgeId) -> bool,
) -> Vec<Binding> {
    let mut out = Vec::new();
    let mut node_map: Vec<NodeId> = Vec::with_capacity(pattern.node_count());
    let mut node_used = vec![false; target.node_count()];

    fn assign_edges(
        pattern: &SemanticGraph,
        target: &SemanticGraph,
        node_map: &[NodeId],
        edge_ok: &dyn Fn(EdgeId, EdgeId) -> bool,
        edge_map: &mut Vec<EdgeId>,
        edge_used: &mut [bool],
        out: &mut Vec<Binding>,
    ) {
        let pid = edge_map.len();
        if pid == pattern.edge_count() {
            out.push(Binding {
                node_map: node_map.to_vec(),
                edge_map: edge_map.clone(),
            });
            return;
        }
        let pe = &pattern.edges[pid];
        let want_source = node_map[pe.source.0];
        let want_target = node_map[pe.target.0];
        for (tid, te) in target.edges.iter().enumerate() {
            if edge_used[tid] || te.source != want_source || te.target != want_target {
                continue;
            }
            if !edge_ok(EdgeId(pid), EdgeId(tid)) {
                continue;
            }
            edge_used[tid] = true;
            edge_map.push(EdgeId(tid));
            assign_edges(pattern, target, node_map, edge_ok, edge_map, edge_used, out);
            edge_map.pop();
            edge_used[tid] = false;
        }
    }

    fn assign_nodes(
        pattern: &SemanticGraph,
        target: &SemanticGraph,
        node_ok: &dyn Fn(NodeId, NodeId) -> bool,
        edge_ok: &dyn Fn(EdgeId, EdgeId) -> bool,
        node_map: &mut Vec<NodeId>,
        node_used: &mut [bool],
        out: &mut Vec<Binding>,
    ) {
        let pid = node_map.len();
        if pid == pattern.node_count() {
            let mut edge_map = Vec::with_capacity(pattern.edge_count());
            let mut edge_used = vec![false; target.edge_count()];
            assign_edges(
                pattern,
                target,
                node_map,
                edge_ok,
                &mut edge_map,
                &mut edge_used,
                out,
            );
            return;
        }
        for tid in 0..target.node_count() {
            if node_used[tid] || !node_ok(NodeId(pid), NodeId(tid)) {
                continue;
            }
            node_used[tid] = true;
            node_map.push(NodeId(tid));
            assign_nodes(pattern, target, node_ok, edge_ok, node_map, node_used, out);
            node_map.pop();
            node_used[tid] = false;
        }
    }

    assign_nodes(
        pattern,
        target,
        node_ok,
        edge_ok,
        &mut node_map,
        &mut node_used,
        &mut out,
    );
    out
}

/// Cosine above threshold; a zero-norm pair never matches.
pub(crate) fn element_clears(a: &Embedding, b: &Embedding, threshold: f64) -> bool {
    cosine(a, b).map(|c| c > threshold).unwrap_or(false)
}

/// All bindings of `pre` into `facts` where every mapped pair clears its
/// threshold and edge structure and direction are preserved. No match gives
/// an empty list; an empty pattern matches once, with the empty binding.
pub fn match_subgraph(
    pre: &SemanticGraph,
    thresholds: &Thresholds,
    facts: &SemanticGraph,
) -> Vec<Binding> {
    assert_eq!(
        thresholds.nodes.len(),
        pre.node_count(),
        "node threshold count"
    );
    assert_eq!(
        thresholds.edges.len(),
        pre.edge_count(),
        "edge threshold count"
    );
    find_bindings(
        pre,
        facts,
        &|p, t| {
            element_clears(
                &pre.nodes[p.0].embedding,
                &facts.nodes[t.0].embedding,
                thresholds.nodes[p.0],
            )
        },
        &|p, t| {
            element_clears(
                &pre.edges[p.0].embedding,
                &facts.edges[t.0].embedding,
                thresholds.edges[p.0],
            )
        },
    )
}

/// True iff an injective structure-preserving map embeds `goal` into `state`
/// with cosine above `threshold` for every mapped pair. An empty goal is
/// vacuously satisfied.
pub fn goal_satisfied(state: &SemanticGraph, goal: &SemanticGraph, threshold: f64) -> bool {
    !match_subgraph(goal, &Thresholds::uniform(goal, threshold), state).is_empty()
}

fn validate_binding(
    rule: &Rule,
    facts: &SemanticGraph,
    binding: &Binding,
) -> Result<(), GraphError> {
    let fail = |reason: String| Err(GraphError::InvalidBinding { reason });
    if binding.node_map.len() != rule.pre.node_count() {
        return fail(format!(
            "binding maps {} nodes, rule has {}",
            binding.node_map.len(),
            rule.pre.node_count()
        ));
    }
    if binding.edge_map.len() != rule.pre.edge_count() {
        return fail(format!(
            "binding maps {} edges, rule has {}",
            binding.edge_map.len(),
            rule.pre.edge_count()
        ));
    }
    for (i, t) in binding.node_map.iter().enumerate() {
        if t.0 >= facts.node_count() {
            return fail(format!("node {} maps outside the fact graph", i));
        }
        if binding.node_map[..i].contains(t) {
            return fail(format!("node target {} bound twice", t.0));
        }
    }
    for (i, t) in binding.edge_map.iter().enumerate() {
        if t.0 >= facts.edge_count() {
            return fail(format!("edge {} maps outside the fact graph", i));
        }
        if binding.edge_map[..i].contains(t) {
            return fail(format!("edge target {} bound twice", t.0));
        }
        let pe = &rule.pre.edges[i];
        let te = &facts.edges[t.0];
        if te.source != binding.node_map[pe.source.0] || te.target != binding.node_map[pe.target.0]
        {
            return fail(format!("edge {} does not connect the mapped endpoints", i));
        }
    }
    Ok(())
}

/// Instantiates the rule's postcondition under `binding`: copy slots pull the
/// bound fact element across (symbol, embedding, frozen flag); everything
/// else becomes a fresh element carrying the rule's own embedding. The result
/// is exactly the postcondition graph; unmatched facts are not carried over.
pub fn apply_rule(
    rule: &Rule,
    facts: &SemanticGraph,
    binding: &Binding,
) -> Result<SemanticGraph, GraphError> {
    validate_binding(rule, facts, binding)?;
    let mut out = SemanticGraph::new();
    for post in &rule.post.nodes {
        match post {
            PostNode::Copy { pre } => {
                let src = &facts.nodes[binding.node_map[pre.0].0];
                out.add_node(src.symbol.clone(), src.embedding.clone(), src.frozen);
            }
            PostNode::Fresh {
                symbol,
                embedding,
                frozen,
            } => {
                out.add_node(symbol.clone(), embedding.clone(), *frozen);
            }
        }
    }
    for edge in &rule.post.edges {
        out.add_edge(
            NodeId(edge.source),
            NodeId(edge.target),
            edge.symbol.clone(),
            edge.embedding.clone(),
            edge.frozen,
        );
    }
    Ok(out)
}
