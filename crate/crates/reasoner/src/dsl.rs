//! The predicate text format for facts, goals, rules, and templates.
//!
//! Facts are comma-separated atoms: `joe(a), win(a,b), election(b)`. A 1-ary
//! atom declares a node, a 2-ary atom a directed edge between declared nodes.
//! Rules pair a MATCH clause with a CREATE clause; MATCH atoms may carry a
//! matching threshold (`person>0.6(a)`), `*` stands for a trainable wildcard
//! slot, and a bare `(a)` in CREATE copies the element matched by MATCH
//! variable `a`. Whitespace and newlines between atoms are insignificant;
//! `MATCH` and `CREATE` are case-sensitive keywords. Rule files hold one rule
//! per blank-line-separated block.
//!
//! Parsing is two-stage: the text parsers build atom lists, and `realize`
//! attaches embeddings from a [`Lexicon`] to produce [`SemanticGraph`]s and
//! [`Rule`]s. Serialization renders graphs and (learned) rules back to the
//! same format, naming learned embeddings by their nearest vocabulary word.

use crate::embedding::{nearest_word, EmbeddingError, Lexicon};
use crate::graph::{NodeId, PostEdge, PostNode, PostPattern, Rule, SemanticGraph, Thresholds};
use std::collections::HashMap;
use thiserror::Error;

/// Threshold assumed for MATCH atoms written without one; equals the
/// training clip floor so hand-written rules line up with learned ones.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error)]
pub enum DslError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: edge variable '{var}' has no node atom")]
    UndeclaredVariable {
        var: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: variable '{var}' is declared by more than one node atom")]
    DuplicateVariable {
        var: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: copy slot '({var})' is not bound by any MATCH variable")]
    UnboundCopySlot {
        var: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: threshold {value} is outside [0, 1]")]
    ThresholdRange { value: f64, line: usize, col: usize },
    #[error("{line}:{col}: thresholds are not allowed here")]
    ThresholdNotAllowed { line: usize, col: usize },
    #[error("{line}:{col}: wildcards are not allowed here")]
    WildcardNotAllowed { line: usize, col: usize },
    #[error("{line}:{col}: copy slots are only allowed in CREATE")]
    CopySlotNotAllowed { line: usize, col: usize },
    #[error("cannot serialize an element that has no symbol")]
    UnnamedElement,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtomName {
    Symbol(String),
    Wildcard,
    CopySlot,
}

/// One predicate atom as written: a name part, an optional threshold, and
/// one (node) or two (edge) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub name: AtomName,
    pub threshold: Option<f64>,
    pub vars: Vec<String>,
    pub line: usize,
    pub col: usize,
}

impl Atom {
    pub fn is_edge(&self) -> bool {
        self.vars.len() == 2
    }
}

/// A parsed fact or goal listing: plain named atoms, no thresholds, no
/// wildcards, every edge variable declared by a node atom.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphText {
    pub atoms: Vec<Atom>,
}

/// A parsed MATCH/CREATE pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleText {
    pub match_atoms: Vec<Atom>,
    pub create_atoms: Vec<Atom>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Star,
    Gt,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str, start_line: usize) -> Result<Vec<Token>, DslError> {
    let mut tokens = Vec::new();
    let mut line = start_line;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '(' | ')' | ',' | '>' | '*' => {
                chars.next();
                col += 1;
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '>' => Tok::Gt,
                    _ => Tok::Star,
                };
                tokens.push(Token {
                    tok,
                    line: tl,
                    col: tc,
                });
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut raw = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit()
                        || d == '.'
                        || d == 'e'
                        || d == 'E'
                        || ((d == '+' || d == '-')
                            && matches!(raw.chars().last(), Some('e') | Some('E')))
                    {
                        raw.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let value: f64 = raw.parse().map_err(|_| DslError::Syntax {
                    line: tl,
                    col: tc,
                    msg: format!("'{raw}' is not a number"),
                })?;
                tokens.push(Token {
                    tok: Tok::Number(value),
                    line: tl,
                    col: tc,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut name = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' || d == '-' {
                        name.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    tok: Tok::Ident(name),
                    line: tl,
                    col: tc,
                });
            }
            other => {
                return Err(DslError::Syntax {
                    line: tl,
                    col: tc,
                    msg: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end_line: usize,
}

impl Parser {
    fn new(text: &str, start_line: usize) -> Result<Self, DslError> {
        let tokens = lex(text, start_line)?;
        let end_line = start_line + text.lines().count().saturating_sub(1);
        Ok(Parser {
            tokens,
            pos: 0,
            end_line,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or((self.end_line, 1))
    }

    fn error(&self, msg: impl Into<String>) -> DslError {
        let (line, col) = self.here();
        DslError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, DslError> {
        match self.next() {
            Some(t) if t.tok == want => Ok(t),
            Some(t) => Err(DslError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!("expected {what}"),
            }),
            None => Err(self.error(format!("expected {what}, found end of input"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == kw)
    }

    fn parse_var(&mut self) -> Result<String, DslError> {
        match self.next() {
            Some(Token {
                tok: Tok::Ident(s),
                line,
                col,
            }) => {
                let ok = s
                    .chars()
                    .next()
                    .map(|c| c.is_ascii_lowercase())
                    .unwrap_or(false)
                    && s.chars()
                        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
                if !ok {
                    return Err(DslError::Syntax {
                        line,
                        col,
                        msg: format!("variable '{s}' must be a lowercase identifier"),
                    });
                }
                Ok(s)
            }
            Some(t) => Err(DslError::Syntax {
                line: t.line,
                col: t.col,
                msg: "expected a variable".into(),
            }),
            None => Err(self.error("expected a variable, found end of input")),
        }
    }

    /// atom := (ident | '*') ('>' number)? '(' var (',' var)? ')'
    ///       | '(' var ')'                    -- copy slot
    fn parse_atom(&mut self) -> Result<Atom, DslError> {
        let (line, col) = self.here();
        let (name, threshold) = match self.peek() {
            Some(Token {
                tok: Tok::LParen, ..
            }) => (AtomName::CopySlot, None),
            Some(Token { tok: Tok::Star, .. }) => {
                self.next();
                (AtomName::Wildcard, self.parse_threshold()?)
            }
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => {
                if s == "MATCH" || s == "CREATE" {
                    return Err(self.error(format!("'{s}' is a reserved keyword")));
                }
                let s = s.clone();
                self.next();
                (AtomName::Symbol(s), self.parse_threshold()?)
            }
            _ => return Err(self.error("expected an atom")),
        };
        self.expect(Tok::LParen, "'('")?;
        let mut vars = vec![self.parse_var()?];
        if matches!(
            self.peek(),
            Some(Token {
                tok: Tok::Comma,
                ..
            })
        ) {
            self.next();
            vars.push(self.parse_var()?);
        }
        self.expect(Tok::RParen, "')'")?;
        if name == AtomName::CopySlot && vars.len() != 1 {
            return Err(DslError::Syntax {
                line,
                col,
                msg: "a copy slot takes exactly one variable".into(),
            });
        }
        Ok(Atom {
            name,
            threshold,
            vars,
            line,
            col,
        })
    }

    fn parse_threshold(&mut self) -> Result<Option<f64>, DslError> {
        if !matches!(self.peek(), Some(Token { tok: Tok::Gt, .. })) {
            return Ok(None);
        }
        self.next();
        match self.next() {
            Some(Token {
                tok: Tok::Number(v),
                ..
            }) => Ok(Some(v)),
            _ => Err(self.error("expected a threshold value after '>'")),
        }
    }

    /// Comma-separated atoms; stops before `MATCH`/`CREATE` or end of input.
    fn parse_atom_list(&mut self) -> Result<Vec<Atom>, DslError> {
        let mut atoms = Vec::new();
        if self.peek().is_none() || self.at_keyword("MATCH") || self.at_keyword("CREATE") {
            return Ok(atoms);
        }
        atoms.push(self.parse_atom()?);
        while matches!(
            self.peek(),
            Some(Token {
                tok: Tok::Comma,
                ..
            })
        ) {
            self.next();
            atoms.push(self.parse_atom()?);
        }
        Ok(atoms)
    }
}

/// Rejects thresholds/wildcards/copy slots and checks variable declarations
/// for a fact-like atom list.
fn validate_fact_atoms(atoms: &[Atom]) -> Result<(), DslError> {
    for atom in atoms {
        match atom.name {
            AtomName::Wildcard => {
                return Err(DslError::WildcardNotAllowed {
                    line: atom.line,
                    col: atom.col,
                })
            }
            AtomName::CopySlot => {
                return Err(DslError::CopySlotNotAllowed {
                    line: atom.line,
                    col: atom.col,
                })
            }
            AtomName::Symbol(_) => {}
        }
        if atom.threshold.is_some() {
            return Err(DslError::ThresholdNotAllowed {
                line: atom.line,
                col: atom.col,
            });
        }
    }
    check_side_variables(atoms)
}

/// Node variables unique; edge variables declared by some 1-ary atom of the
/// same side.
fn check_side_variables(atoms: &[Atom]) -> Result<(), DslError> {
    let mut declared: HashMap<&str, ()> = HashMap::new();
    for atom in atoms.iter().filter(|a| !a.is_edge()) {
        let var = atom.vars[0].as_str();
        if declared.insert(var, ()).is_some() {
            return Err(DslError::DuplicateVariable {
                var: var.to_string(),
                line: atom.line,
                col: atom.col,
            });
        }
    }
    for atom in atoms.iter().filter(|a| a.is_edge()) {
        for var in &atom.vars {
            if !declared.contains_key(var.as_str()) {
                return Err(DslError::UndeclaredVariable {
                    var: var.clone(),
                    line: atom.line,
                    col: atom.col,
                });
            }
        }
    }
    Ok(())
}

/// Parses a fact or goal listing.
pub fn parse_facts(text: &str) -> Result<GraphText, DslError> {
    let mut parser = Parser::new(text, 1)?;
    let atoms = parser.parse_atom_list()?;
    if parser.peek().is_some() {
        return Err(parser.error("unexpected trailing input"));
    }
    validate_fact_atoms(&atoms)?;
    Ok(GraphText { atoms })
}

/// Parses one MATCH/CREATE rule, applying [`DEFAULT_MATCH_THRESHOLD`] to
/// MATCH atoms written without an explicit threshold.
pub fn parse_rule(text: &str) -> Result<RuleText, DslError> {
    parse_rule_block(text, 1)
}

fn parse_rule_block(text: &str, start_line: usize) -> Result<RuleText, DslError> {
    let mut parser = Parser::new(text, start_line)?;
    if !parser.at_keyword("MATCH") {
        return Err(parser.error("expected MATCH"));
    }
    parser.next();
    let mut match_atoms = parser.parse_atom_list()?;
    if !parser.at_keyword("CREATE") {
        return Err(parser.error("expected CREATE"));
    }
    parser.next();
    let create_atoms = parser.parse_atom_list()?;
    if parser.peek().is_some() {
        return Err(parser.error("unexpected trailing input"));
    }

    for atom in &mut match_atoms {
        if atom.name == AtomName::CopySlot {
            return Err(DslError::CopySlotNotAllowed {
                line: atom.line,
                col: atom.col,
            });
        }
        let value = atom.threshold.unwrap_or(DEFAULT_MATCH_THRESHOLD);
        if !(0.0..=1.0).contains(&value) {
            return Err(DslError::ThresholdRange {
                value,
                line: atom.line,
                col: atom.col,
            });
        }
        atom.threshold = Some(value);
    }
    check_side_variables(&match_atoms)?;

    let match_vars: Vec<&str> = match_atoms
        .iter()
        .filter(|a| !a.is_edge())
        .map(|a| a.vars[0].as_str())
        .collect();
    for atom in &create_atoms {
        if atom.threshold.is_some() {
            return Err(DslError::ThresholdNotAllowed {
                line: atom.line,
                col: atom.col,
            });
        }
        if atom.name == AtomName::CopySlot && !match_vars.contains(&atom.vars[0].as_str()) {
            return Err(DslError::UnboundCopySlot {
                var: atom.vars[0].clone(),
                line: atom.line,
                col: atom.col,
            });
        }
    }
    check_side_variables(&create_atoms)?;

    Ok(RuleText {
        match_atoms,
        create_atoms,
    })
}

/// Parses a rules file: one rule per block, blocks separated by blank lines.
pub fn parse_rules(text: &str) -> Result<Vec<RuleText>, DslError> {
    let mut rules = Vec::new();
    let mut block = String::new();
    let mut block_start = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !block.trim().is_empty() {
                rules.push(parse_rule_block(&block, block_start + 1)?);
            }
            block.clear();
        } else {
            if block.is_empty() {
                block_start = idx;
            }
            block.push_str(line);
            block.push('\n');
        }
    }
    if !block.trim().is_empty() {
        rules.push(parse_rule_block(&block, block_start + 1)?);
    }
    Ok(rules)
}

// ---------------------------------------------------------------------------
// Realization: atoms -> embedded graphs and rules
// ---------------------------------------------------------------------------

impl GraphText {
    /// Builds the embedded graph: one frozen node per 1-ary atom, one frozen
    /// directed edge per 2-ary atom, vectors drawn from the lexicon.
    pub fn realize(&self, lexicon: &mut Lexicon) -> Result<SemanticGraph, DslError> {
        let mut graph = SemanticGraph::new();
        let mut vars: HashMap<&str, NodeId> = HashMap::new();
        for atom in self.atoms.iter().filter(|a| !a.is_edge()) {
            let name = match &atom.name {
                AtomName::Symbol(s) => s,
                _ => unreachable!("validated at parse time"),
            };
            let id = graph.add_node(Some(name.clone()), lexicon.node_embedding(name)?, true);
            vars.insert(atom.vars[0].as_str(), id);
        }
        for atom in self.atoms.iter().filter(|a| a.is_edge()) {
            let name = match &atom.name {
                AtomName::Symbol(s) => s,
                _ => unreachable!("validated at parse time"),
            };
            let source = vars[atom.vars[0].as_str()];
            let target = vars[atom.vars[1].as_str()];
            graph.add_edge(
                source,
                target,
                Some(name.clone()),
                lexicon.relation_embedding(name),
                true,
            );
        }
        Ok(graph)
    }
}

impl RuleText {
    /// Builds the embedded rule. Named atoms are frozen and take their
    /// vector from the lexicon; wildcard atoms get seeded trainable slots
    /// tagged by rule label, side, kind, and position.
    pub fn realize(&self, lexicon: &mut Lexicon, label: &str) -> Result<Rule, DslError> {
        let mut pre = SemanticGraph::new();
        let mut thresholds = Thresholds {
            nodes: Vec::new(),
            edges: Vec::new(),
        };
        let mut pre_vars: HashMap<&str, NodeId> = HashMap::new();
        for (i, atom) in self.match_atoms.iter().filter(|a| !a.is_edge()).enumerate() {
            let (symbol, embedding, frozen) = match &atom.name {
                AtomName::Symbol(s) => (Some(s.clone()), lexicon.node_embedding(s)?, true),
                AtomName::Wildcard => (
                    None,
                    lexicon.slot_embedding(&format!("{label}/pre/node/{i}")),
                    false,
                ),
                AtomName::CopySlot => unreachable!("rejected at parse time"),
            };
            let id = pre.add_node(symbol, embedding, frozen);
            pre_vars.insert(atom.vars[0].as_str(), id);
            thresholds
                .nodes
                .push(atom.threshold.expect("defaulted at parse"));
        }
        for (i, atom) in self.match_atoms.iter().filter(|a| a.is_edge()).enumerate() {
            let (symbol, embedding, frozen) = match &atom.name {
                AtomName::Symbol(s) => (Some(s.clone()), lexicon.relation_embedding(s), true),
                AtomName::Wildcard => (
                    None,
                    lexicon.slot_embedding(&format!("{label}/pre/edge/{i}")),
                    false,
                ),
                AtomName::CopySlot => unreachable!("rejected at parse time"),
            };
            pre.add_edge(
                pre_vars[atom.vars[0].as_str()],
                pre_vars[atom.vars[1].as_str()],
                symbol,
                embedding,
                frozen,
            );
            thresholds
                .edges
                .push(atom.threshold.expect("defaulted at parse"));
        }

        let mut post = PostPattern::default();
        let mut post_vars: HashMap<&str, usize> = HashMap::new();
        for (i, atom) in self
            .create_atoms
            .iter()
            .filter(|a| !a.is_edge())
            .enumerate()
        {
            let node = match &atom.name {
                AtomName::CopySlot => PostNode::Copy {
                    pre: pre_vars[atom.vars[0].as_str()],
                },
                AtomName::Symbol(s) => PostNode::Fresh {
                    symbol: Some(s.clone()),
                    embedding: lexicon.node_embedding(s)?,
                    frozen: true,
                },
                AtomName::Wildcard => PostNode::Fresh {
                    symbol: None,
                    embedding: lexicon.slot_embedding(&format!("{label}/post/node/{i}")),
                    frozen: false,
                },
            };
            post_vars.insert(atom.vars[0].as_str(), post.nodes.len());
            post.nodes.push(node);
        }
        for (i, atom) in self.create_atoms.iter().filter(|a| a.is_edge()).enumerate() {
            let (symbol, embedding, frozen) = match &atom.name {
                AtomName::Symbol(s) => (Some(s.clone()), lexicon.relation_embedding(s), true),
                AtomName::Wildcard => (
                    None,
                    lexicon.slot_embedding(&format!("{label}/post/edge/{i}")),
                    false,
                ),
                AtomName::CopySlot => unreachable!("copy slots are 1-ary"),
            };
            post.edges.push(PostEdge {
                source: post_vars[atom.vars[0].as_str()],
                target: post_vars[atom.vars[1].as_str()],
                symbol,
                embedding,
                frozen,
            });
        }

        Ok(Rule {
            label: label.to_string(),
            pre,
            thresholds,
            post,
            weight: 1.0,
        })
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Variable letters a, b, ..., z, aa, ab, ... by element position.
fn var_letters(mut i: usize) -> String {
    let mut bytes = Vec::new();
    loop {
        bytes.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    bytes.reverse();
    String::from_utf8(bytes).expect("ascii letters")
}

/// Canonical text for a graph: nodes in first-appearance order, each
/// immediately followed by its outgoing edges. Every element must carry a
/// symbol; re-parsing the output yields an isomorphic graph.
pub fn serialize_graph(graph: &SemanticGraph) -> Result<String, DslError> {
    let mut parts = Vec::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        let name = node.symbol.as_ref().ok_or(DslError::UnnamedElement)?;
        parts.push(format!("{}({})", name, var_letters(i)));
        for edge in graph.edges.iter().filter(|e| e.source.0 == i) {
            let ename = edge.symbol.as_ref().ok_or(DslError::UnnamedElement)?;
            parts.push(format!(
                "{}({},{})",
                ename,
                var_letters(edge.source.0),
                var_letters(edge.target.0)
            ));
        }
    }
    Ok(parts.join(", "))
}

/// Renders a rule back to MATCH/CREATE text. Elements without a symbol are
/// named by their nearest vocabulary word (nodes against the node store,
/// edges against the relation store); thresholds print with the shortest
/// decimal that round-trips the stored value; copy slots print bare.
pub fn serialize_rule(rule: &Rule, lexicon: &Lexicon) -> Result<String, DslError> {
    let node_name = |symbol: &Option<String>, emb: &crate::embedding::Embedding| match symbol {
        Some(s) => Ok::<String, DslError>(s.clone()),
        None => Ok(nearest_word(emb, lexicon.node_store())?.0.to_string()),
    };
    let edge_name = |symbol: &Option<String>, emb: &crate::embedding::Embedding| match symbol {
        Some(s) => Ok::<String, DslError>(s.clone()),
        None => Ok(nearest_word(emb, lexicon.relation_store())?.0.to_string()),
    };

    let mut match_parts = Vec::new();
    for (i, node) in rule.pre.nodes.iter().enumerate() {
        let name = node_name(&node.symbol, &node.embedding)?;
        match_parts.push(format!(
            "{}>{}({})",
            name,
            rule.thresholds.nodes[i],
            var_letters(i)
        ));
        for (j, edge) in rule.pre.edges.iter().enumerate() {
            if edge.source.0 != i {
                continue;
            }
            let ename = edge_name(&edge.symbol, &edge.embedding)?;
            match_parts.push(format!(
                "{}>{}({},{})",
                ename,
                rule.thresholds.edges[j],
                var_letters(edge.source.0),
                var_letters(edge.target.0)
            ));
        }
    }

    // Copy slots reuse the MATCH letter of the element they copy; fresh
    // elements continue the letter sequence past the MATCH variables.
    let pre_count = rule.pre.node_count();
    let mut fresh_seen = 0usize;
    let mut post_letters = Vec::with_capacity(rule.post.nodes.len());
    for node in &rule.post.nodes {
        match node {
            PostNode::Copy { pre } => post_letters.push(var_letters(pre.0)),
            PostNode::Fresh { .. } => {
                post_letters.push(var_letters(pre_count + fresh_seen));
                fresh_seen += 1;
            }
        }
    }
    let mut create_parts = Vec::new();
    for (i, node) in rule.post.nodes.iter().enumerate() {
        match node {
            PostNode::Copy { .. } => create_parts.push(format!("({})", post_letters[i])),
            PostNode::Fresh {
                symbol, embedding, ..
            } => {
                let name = node_name(symbol, embedding)?;
                create_parts.push(format!("{}({})", name, post_letters[i]));
            }
        }
        for edge in rule.post.edges.iter().filter(|e| e.source == i) {
            let ename = edge_name(&edge.symbol, &edge.embedding)?;
            create_parts.push(format!(
                "{}({},{})",
                ename, post_letters[edge.source], post_letters[edge.target]
            ));
        }
    }

    Ok(format!(
        "MATCH {}\nCREATE {}",
        match_parts.join(", "),
        create_parts.join(", ")
    ))
}
