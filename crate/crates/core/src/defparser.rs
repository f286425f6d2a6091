//! Ontology tokens and structured sense definitions.
//!
//! A definition such as
//!
//! ```text
//! {InstitutePlace|場所:telic={or({experiment|實驗:location={~}},{research|研究:location={~}})}}
//! ```
//!
//! is parsed into a [`DefGraph`]: a rooted tree whose nodes are concepts,
//! words, functions (`or(...)`) or the self-reference `~`, and whose edges are
//! either attribute modifiers (`:telic=`) or positional function arguments.
//!
//! Grammar (whitespace between tokens is ignored):
//!
//! ```text
//! Definition := "{" Head ( ":" Attr "=" Definition ( "," Attr "=" Definition )* )? "}"
//! Head       := Concept | Word | Function | "~"
//! Function   := name "(" Definition ( "," Definition )* ")"
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_script::{Script, UnicodeScript};

/// The three kinds of lexicon tokens, told apart by their surface form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Concept,
    Attribute,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Word => "word",
            TokenKind::Concept => "concept",
            TokenKind::Attribute => "attribute",
        })
    }
}

impl FromStr for TokenKind {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(TokenKind::Word),
            "concept" => Ok(TokenKind::Concept),
            "attribute" => Ok(TokenKind::Attribute),
            other => Err(ClassifyError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("empty token")]
    Empty,
    #[error("token {0:?} has surrounding whitespace")]
    Whitespace(String),
    #[error("token {0:?} is neither a word, a concept, nor an attribute")]
    Unclassifiable(String),
    #[error("unknown token kind {0:?}")]
    UnknownKind(String),
}

pub(crate) fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic() && c.script() == Script::Latin
}

fn is_attribute_shaped(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_latin_letter)
}

/// Latin half of a concept name, e.g. `InstitutePlace` or `self-moving`.
fn is_latin_half(s: &str) -> bool {
    s.chars().any(is_latin_letter)
        && s
            .chars()
            .all(|c| is_latin_letter(c) || c.is_ascii_digit() || "-_'.&".contains(c))
}

/// Non-Latin half of a concept name, or a whole word.
fn is_native_text(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c != '|' && !c.is_whitespace() && !is_latin_letter(c))
}

/// Classifies a lexicon token as a word, concept, or attribute.
pub fn classify_token(token: &str) -> Result<TokenKind, ClassifyError> {
    if token.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if token.trim() != token {
        return Err(ClassifyError::Whitespace(token.to_string()));
    }
    if token.contains('|') {
        return ConceptId::split(token)
            .map(|_| TokenKind::Concept)
            .ok_or_else(|| ClassifyError::Unclassifiable(token.to_string()));
    }
    if is_attribute_shaped(token) {
        Ok(TokenKind::Attribute)
    } else if is_native_text(token) {
        Ok(TokenKind::Word)
    } else {
        Err(ClassifyError::Unclassifiable(token.to_string()))
    }
}

/// A concept name such as `help|幫助`.
///
/// Equality, ordering and hashing ignore which half was written first, so
/// `help|幫助` and `幫助|help` are the same concept. The written order is kept
/// only so that serialization reproduces the source text.
#[derive(Debug, Clone)]
pub struct ConceptId {
    english: String,
    chinese: String,
    english_first: bool,
}

impl ConceptId {
    /// Builds an English-first concept id. Both halves are validated.
    pub fn new(english: &str, chinese: &str) -> Result<Self, ClassifyError> {
        if !is_latin_half(english) || !is_native_text(chinese) {
            return Err(ClassifyError::Unclassifiable(format!("{english}|{chinese}")));
        }
        Ok(ConceptId {
            english: english.to_string(),
            chinese: chinese.to_string(),
            english_first: true,
        })
    }

    fn split(token: &str) -> Option<ConceptId> {
        let (a, b) = token.split_once('|')?;
        if b.contains('|') {
            return None;
        }
        if is_latin_half(a) && is_native_text(b) {
            Some(ConceptId {
                english: a.to_string(),
                chinese: b.to_string(),
                english_first: true,
            })
        } else if is_native_text(a) && is_latin_half(b) {
            Some(ConceptId {
                english: b.to_string(),
                chinese: a.to_string(),
                english_first: false,
            })
        } else {
            None
        }
    }

    pub fn english(&self) -> &str {
        &self.english
    }

    pub fn chinese(&self) -> &str {
        &self.chinese
    }

    /// Order-independent form, always `english|chinese`.
    pub fn canonical(&self) -> String {
        format!("{}|{}", self.english, self.chinese)
    }
}

impl FromStr for ConceptId {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(ClassifyError::Empty);
        }
        if s.trim() != s {
            return Err(ClassifyError::Whitespace(s.to_string()));
        }
        ConceptId::split(s).ok_or_else(|| ClassifyError::Unclassifiable(s.to_string()))
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.english_first {
            write!(f, "{}|{}", self.english, self.chinese)
        } else {
            write!(f, "{}|{}", self.chinese, self.english)
        }
    }
}

impl PartialEq for ConceptId {
    fn eq(&self, other: &Self) -> bool {
        self.english == other.english && self.chinese == other.chinese
    }
}

impl Eq for ConceptId {}

impl Hash for ConceptId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.english.hash(state);
        self.chinese.hash(state);
    }
}

impl PartialOrd for ConceptId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ConceptId {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.english, &self.chinese).cmp(&(&other.english, &other.chinese))
    }
}

impl Serialize for ConceptId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum DefNode {
    Concept(ConceptId),
    /// A bare word used inside a definition body.
    Word(String),
    Function(String),
    /// `~`, standing for the head being defined. Always a leaf.
    SelfRef,
}

impl DefNode {
    pub fn concept(&self) -> Option<&ConceptId> {
        match self {
            DefNode::Concept(c) => Some(c),
            _ => None,
        }
    }

    /// Short text used in listings: the concept or word surface, the
    /// function name, or `~`.
    pub fn label(&self) -> String {
        match self {
            DefNode::Concept(c) => c.to_string(),
            DefNode::Word(w) => w.clone(),
            DefNode::Function(name) => name.clone(),
            DefNode::SelfRef => "~".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum DefEdge {
    Attribute(String),
    /// Zero-based function argument position.
    Arg(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node {0} is out of bounds")]
    OutOfBounds(NodeId),
    #[error("node {0} is not reachable from the root")]
    Unreachable(NodeId),
    #[error("node {0} has more than one incoming edge")]
    SharedNode(NodeId),
    #[error("the root has an incoming edge")]
    RootHasParent,
    #[error("self-reference node {0} has outgoing edges")]
    SelfRefWithEdges(NodeId),
    #[error("argument edge leaves non-function node {0}")]
    ArgFromNonFunction(NodeId),
    #[error("function node {0} has missing or duplicate argument positions")]
    BadArguments(NodeId),
    #[error("{0:?} is not a valid attribute or function name")]
    BadName(String),
}

/// A parsed definition: a rooted, edge-labelled tree.
///
/// Graph equality is structural. Node numbering, the order in which
/// attribute edges were written, and the written order of concept halves
/// are all ignored. Attribute edges are compared as a multiset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefGraph {
    nodes: Vec<DefNode>,
    edges: Vec<(NodeId, DefEdge, NodeId)>,
    root: NodeId,
}

impl DefGraph {
    /// A graph holding only `root`.
    pub fn single(root: DefNode) -> Self {
        DefGraph {
            nodes: vec![root],
            edges: Vec::new(),
            root: 0,
        }
    }

    pub fn add_node(&mut self, node: DefNode) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Adds an edge without checking it; see [`DefGraph::validate`].
    pub fn add_edge(&mut self, source: NodeId, edge: DefEdge, target: NodeId) {
        self.edges.push((source, edge, target));
    }

    /// Adds `node` as a new child of `parent` and returns its id.
    pub fn attach(&mut self, parent: NodeId, edge: DefEdge, node: DefNode) -> NodeId {
        let id = self.add_node(node);
        self.add_edge(parent, edge, id);
        id
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[DefNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DefNode {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[(NodeId, DefEdge, NodeId)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_node(&self) -> &DefNode {
        &self.nodes[self.root]
    }

    /// The concept this graph consists of, if it is a single concept node.
    pub fn single_concept(&self) -> Option<&ConceptId> {
        if self.nodes.len() == 1 && self.edges.is_empty() {
            self.nodes[self.root].concept()
        } else {
            None
        }
    }

    /// Outgoing edge indices per node, in insertion order.
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, (src, _, _)) in self.edges.iter().enumerate() {
            if let Some(slot) = adj.get_mut(*src) {
                slot.push(i);
            }
        }
        adj
    }

    /// Checks the tree invariants: in-bounds ids, a single parent per
    /// non-root node, full reachability, leaf self-references, and
    /// consecutive argument positions under function nodes.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        if self.root >= self.nodes.len() {
            return Err(GraphError::OutOfBounds(self.root));
        }
        let mut parent = vec![None; self.nodes.len()];
        for (src, edge, dst) in &self.edges {
            for &n in [src, dst] {
                if n >= self.nodes.len() {
                    return Err(GraphError::OutOfBounds(n));
                }
            }
            if *dst == self.root {
                return Err(GraphError::RootHasParent);
            }
            if parent[*dst].replace(*src).is_some() {
                return Err(GraphError::SharedNode(*dst));
            }
            match (&self.nodes[*src], edge) {
                (DefNode::SelfRef, _) => return Err(GraphError::SelfRefWithEdges(*src)),
                (DefNode::Function(_), DefEdge::Arg(_)) => {}
                (_, DefEdge::Arg(_)) => return Err(GraphError::ArgFromNonFunction(*src)),
                (_, DefEdge::Attribute(label)) if !is_attribute_shaped(label) => {
                    return Err(GraphError::BadName(label.clone()))
                }
                _ => {}
            }
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(adj[n].iter().map(|&e| self.edges[e].2));
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(GraphError::Unreachable(orphan));
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if let DefNode::Function(name) = node {
                if !is_attribute_shaped(name) {
                    return Err(GraphError::BadName(name.clone()));
                }
                let mut positions: Vec<usize> = adj[id]
                    .iter()
                    .filter_map(|&e| match self.edges[e].1 {
                        DefEdge::Arg(i) => Some(i),
                        DefEdge::Attribute(_) => None,
                    })
                    .collect();
                positions.sort_unstable();
                if positions.is_empty() || positions.iter().enumerate().any(|(i, &p)| i != p) {
                    return Err(GraphError::BadArguments(id));
                }
            }
        }
        Ok(())
    }

    /// Structural key of the subtree at `node`; equal keys mean isomorphic
    /// subtrees. `mask` replaces one node's label by a wildcard.
    pub(crate) fn subtree_key(
        &self,
        adj: &[Vec<usize>],
        node: NodeId,
        unordered_args: bool,
        mask: Option<NodeId>,
    ) -> String {
        let mut key = if mask == Some(node) {
            "*".to_string()
        } else {
            match &self.nodes[node] {
                DefNode::Concept(c) => format!("c{}", c.canonical()),
                DefNode::Word(w) => format!("w{w}"),
                DefNode::Function(name) => format!("f{name}"),
                DefNode::SelfRef => "~".to_string(),
            }
        };
        if adj[node].is_empty() {
            return key;
        }
        let mut attrs = Vec::new();
        let mut args = Vec::new();
        for &e in &adj[node] {
            let (_, edge, child) = &self.edges[e];
            let child_key = self.subtree_key(adj, *child, unordered_args, mask);
            match edge {
                DefEdge::Attribute(label) => attrs.push(format!("{label}={child_key}")),
                DefEdge::Arg(i) => args.push((*i, child_key)),
            }
        }
        attrs.sort();
        if unordered_args {
            args.sort_by(|a, b| a.1.cmp(&b.1));
        } else {
            args.sort_by_key(|a| a.0);
        }
        key.push('{');
        key.push_str(&attrs.join(","));
        if !args.is_empty() {
            key.push('(');
            let rendered: Vec<&str> = args.iter().map(|(_, k)| k.as_str()).collect();
            key.push_str(&rendered.join(","));
            key.push(')');
        }
        key.push('}');
        key
    }

    pub(crate) fn structure_key(&self, unordered_args: bool, mask: Option<NodeId>) -> String {
        let adj = self.adjacency();
        self.subtree_key(&adj, self.root, unordered_args, mask)
    }
}

impl PartialEq for DefGraph {
    fn eq(&self, other: &Self) -> bool {
        match (self.validate(), other.validate()) {
            (Ok(()), Ok(())) => {
                self.structure_key(false, None) == other.structure_key(false, None)
            }
            _ => self.nodes == other.nodes && self.edges == other.edges && self.root == other.root,
        }
    }
}

impl fmt::Display for DefGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match serialize_definition(self) {
            Ok(s) => f.write_str(&s),
            Err(e) => write!(f, "<invalid graph: {e}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {expected}, found {found:?}")]
    Unexpected { expected: &'static str, found: char },
    #[error("missing head")]
    MissingHead,
    #[error("attribute {0:?} has no value")]
    MissingValue(String),
    #[error("empty argument list")]
    EmptyArguments,
    #[error("invalid token: {0}")]
    Token(ClassifyError),
    #[error("attribute {0:?} cannot head a definition")]
    AttributeHead(String),
    #[error("{0:?} is not a valid attribute name")]
    BadAttribute(String),
    #[error("{0:?} is not a valid function name")]
    BadFunctionName(String),
    #[error("self-reference cannot carry attributes")]
    SelfRefAttributes,
    #[error("trailing input after definition")]
    Trailing,
}

/// A definition parse failure at a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

const DELIMITERS: &str = "{}():=,~";

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    graph: DefGraph,
}

impl<'a> Parser<'a> {
    fn error<T>(&self, offset: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError { offset, kind })
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, want: char, expected: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(found) => self.error(self.pos, ParseErrorKind::Unexpected { expected, found }),
            None => self.error(self.pos, ParseErrorKind::UnexpectedEnd),
        }
    }

    /// Reads a maximal run of non-delimiter, non-space characters.
    fn token(&mut self) -> (usize, &'a str) {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .find(|c: char| c.is_whitespace() || DELIMITERS.contains(c))
            .unwrap_or(rest.len());
        self.pos += len;
        (start, &rest[..len])
    }

    /// Parses one braced definition and returns the id of its head node.
    fn definition(&mut self) -> Result<NodeId, ParseError> {
        self.expect('{', "'{'")?;
        let head_at = self.pos;
        let head = match self.peek() {
            None => return self.error(self.pos, ParseErrorKind::UnexpectedEnd),
            Some('~') => {
                self.pos += 1;
                self.graph.add_node(DefNode::SelfRef)
            }
            Some(_) => {
                let (at, tok) = self.token();
                if tok.is_empty() {
                    return self.error(at, ParseErrorKind::MissingHead);
                }
                if self.peek() == Some('(') {
                    self.function(at, tok)?
                } else {
                    match classify_token(tok) {
                        Ok(TokenKind::Concept) => {
                            let id = ConceptId::split(tok).expect("classified as concept");
                            self.graph.add_node(DefNode::Concept(id))
                        }
                        Ok(TokenKind::Word) => self.graph.add_node(DefNode::Word(tok.to_string())),
                        Ok(TokenKind::Attribute) => {
                            return self.error(at, ParseErrorKind::AttributeHead(tok.to_string()))
                        }
                        Err(e) => return self.error(at, ParseErrorKind::Token(e)),
                    }
                }
            }
        };
        if self.peek() == Some(':') {
            if matches!(self.graph.nodes[head], DefNode::SelfRef) {
                return self.error(head_at, ParseErrorKind::SelfRefAttributes);
            }
            self.pos += 1;
            loop {
                self.attribute(head)?;
                if self.peek() == Some(',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect('}', "'}'")?;
        Ok(head)
    }

    fn attribute(&mut self, source: NodeId) -> Result<(), ParseError> {
        let (at, name) = self.token();
        if name.is_empty() {
            return match self.peek() {
                None => self.error(self.pos, ParseErrorKind::UnexpectedEnd),
                Some(found) => self.error(
                    self.pos,
                    ParseErrorKind::Unexpected {
                        expected: "attribute name",
                        found,
                    },
                ),
            };
        }
        if !is_attribute_shaped(name) {
            return self.error(at, ParseErrorKind::BadAttribute(name.to_string()));
        }
        self.expect('=', "'='")?;
        match self.peek() {
            Some('{') => {}
            Some(',') | Some('}') => {
                return self.error(self.pos, ParseErrorKind::MissingValue(name.to_string()))
            }
            Some(found) => {
                return self.error(
                    self.pos,
                    ParseErrorKind::Unexpected {
                        expected: "'{'",
                        found,
                    },
                )
            }
            None => return self.error(self.pos, ParseErrorKind::UnexpectedEnd),
        }
        let value = self.definition()?;
        self.graph
            .add_edge(source, DefEdge::Attribute(name.to_string()), value);
        Ok(())
    }

    fn function(&mut self, at: usize, name: &str) -> Result<NodeId, ParseError> {
        if !is_attribute_shaped(name) {
            return self.error(at, ParseErrorKind::BadFunctionName(name.to_string()));
        }
        let id = self.graph.add_node(DefNode::Function(name.to_string()));
        self.expect('(', "'('")?;
        if self.peek() == Some(')') {
            return self.error(self.pos, ParseErrorKind::EmptyArguments);
        }
        let mut index = 0;
        loop {
            let arg = self.definition()?;
            self.graph.add_edge(id, DefEdge::Arg(index), arg);
            index += 1;
            if self.peek() == Some(',') {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.expect(')', "')'")?;
        Ok(id)
    }
}

/// Parses a definition string into its graph.
pub fn parse_definition(text: &str) -> Result<DefGraph, ParseError> {
    let mut parser = Parser {
        src: text,
        pos: 0,
        graph: DefGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            root: 0,
        },
    };
    let root = parser.definition()?;
    if parser.peek().is_some() {
        return parser.error(parser.pos, ParseErrorKind::Trailing);
    }
    debug_assert_eq!(root, 0);
    Ok(parser.graph)
}

/// Renders a graph in canonical text form: no whitespace, attribute edges
/// in lexicographic label order, function arguments by position.
pub fn serialize_definition(graph: &DefGraph) -> Result<String, GraphError> {
    graph.validate()?;
    let adj = graph.adjacency();
    Ok(render(graph, &adj, graph.root))
}

fn render(graph: &DefGraph, adj: &[Vec<usize>], node: NodeId) -> String {
    let mut out = String::from("{");
    let mut attrs = Vec::new();
    let mut args = Vec::new();
    for &e in &adj[node] {
        let (_, edge, child) = &graph.edges[e];
        match edge {
            DefEdge::Attribute(label) => attrs.push((label.as_str(), render(graph, adj, *child))),
            DefEdge::Arg(i) => args.push((*i, render(graph, adj, *child))),
        }
    }
    match &graph.nodes[node] {
        DefNode::Function(name) => {
            args.sort_by_key(|a| a.0);
            out.push_str(name);
            out.push('(');
            let rendered: Vec<&str> = args.iter().map(|(_, s)| s.as_str()).collect();
            out.push_str(&rendered.join(","));
            out.push(')');
        }
        other => out.push_str(&other.label()),
    }
    if !attrs.is_empty() {
        attrs.sort();
        out.push(':');
        let rendered: Vec<String> = attrs.iter().map(|(l, s)| format!("{l}={s}")).collect();
        out.push_str(&rendered.join(","));
    }
    out.push('}');
    out
}
