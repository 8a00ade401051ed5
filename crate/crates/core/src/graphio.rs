//! Graph and label loading, plus the connected link-prediction split.

use crate::error::{Error, Result};
use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

/// Undirected simple graph over dense node ids `0..num_nodes`.
/// Edges are stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    /// `upper[i]` holds the sorted neighbours `j > i`.
    upper: Vec<Vec<usize>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.num_nodes == other.num_nodes && self.edges == other.edges
    }
}

impl Graph {
    /// Builds a graph, normalizing pair order. Self-loops and duplicates are
    /// rejected; use [`Graph::from_pairs_lossy`] to drop them instead.
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let (graph, dropped) = Self::build(num_nodes, edges)?;
        if dropped.self_loops + dropped.duplicates > 0 {
            return Err(Error::InvalidConfig(format!(
                "graph has {} self-loops and {} duplicate edges",
                dropped.self_loops, dropped.duplicates
            )));
        }
        Ok(graph)
    }

    /// Builds a graph, dropping self-loops and duplicate pairs.
    pub fn from_pairs_lossy(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<(Self, Dropped)> {
        Self::build(num_nodes, edges)
    }

    fn build(num_nodes: usize, raw: Vec<(usize, usize)>) -> Result<(Self, Dropped)> {
        let mut dropped = Dropped::default();
        let mut lookup = HashSet::with_capacity(raw.len());
        let mut edges = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidConfig(format!(
                    "edge ({a}, {b}) references a node id >= {num_nodes}"
                )));
            }
            if a == b {
                dropped.self_loops += 1;
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if lookup.insert(pair) {
                edges.push(pair);
            } else {
                dropped.duplicates += 1;
            }
        }
        let mut upper = vec![Vec::new(); num_nodes];
        for &(i, j) in &edges {
            upper[i].push(j);
        }
        upper.iter_mut().for_each(|u| u.sort_unstable());
        Ok((
            Graph {
                num_nodes,
                edges,
                upper,
            },
            dropped,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let (a, b) = (i.min(j), i.max(j));
        self.upper.get(a).is_some_and(|u| u.binary_search(&b).is_ok())
    }

    /// Number of unordered node pairs that are not edges.
    pub fn num_non_edges(&self) -> usize {
        let n = self.num_nodes;
        n * n.saturating_sub(1) / 2 - self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Number of connected components (isolated nodes count as components).
    pub fn num_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_nodes];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes > 0 && self.num_components() == 1
    }
}

/// Counts of edges discarded while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dropped {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Original string ids, indexed by dense node id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeIds {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl NodeIds {
    pub fn new(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        NodeIds { names, index }
    }

    /// Ids `"0".."n-1"` for generated graphs.
    pub fn sequential(n: usize) -> Self {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a whitespace-separated edge list with arbitrary string ids.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<(Graph, NodeIds)> {
    let mut ids = NodeIds::default();
    let mut pairs = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let (Some(u), Some(v), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected 'u v', got '{line}'"),
            });
        };
        let a = ids.intern(u);
        let b = ids.intern(v);
        pairs.push((a, b));
    }
    let (graph, dropped) = Graph::from_pairs_lossy(ids.len(), pairs)?;
    if dropped.self_loops > 0 || dropped.duplicates > 0 {
        warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            dropped.self_loops,
            dropped.duplicates
        );
    }
    if graph.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok((graph, ids))
}

/// Loads an edge-list file. String ids are mapped to dense integers in
/// first-appearance order.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<(Graph, NodeIds)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Partial node labelling with class ids dense in `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTable {
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
}

impl LabelTable {
    /// Builds a table from per-node class ids; `num_classes` is inferred.
    pub fn from_classes(labels: Vec<Option<usize>>) -> Self {
        let c = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
        LabelTable {
            labels,
            class_names: (0..c).map(|i| i.to_string()).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, node: usize) -> Option<usize> {
        self.labels.get(node).copied().flatten()
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// `(node, class)` for every labeled node in id order.
    pub fn labeled(&self) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|c| (i, c)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses `node<TAB>label` lines against the graph's id map. Labels are
/// remapped to dense class ids in first-appearance order.
pub fn parse_labels(text: &str, ids: &NodeIds, path: &Path) -> Result<LabelTable> {
    let mut labels = vec![None; ids.len()];
    let mut classes: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut parts = if line.contains('\t') {
            line.split('\t').map(str::trim).collect::<Vec<_>>()
        } else {
            line.split_whitespace().collect()
        };
        parts.retain(|p| !p.is_empty());
        let [node, label] = parts[..] else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected 'node<TAB>label', got '{line}'"),
            });
        };
        let idx = ids
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        let next = class_names.len();
        let class = *classes.entry(label.to_string()).or_insert_with(|| {
            class_names.push(label.to_string());
            next
        });
        match labels[idx] {
            Some(prev) if prev != class => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("node '{node}' has conflicting labels"),
                })
            }
            _ => labels[idx] = Some(class),
        }
    }
    Ok(LabelTable {
        labels,
        class_names,
    })
}

pub fn load_labels(path: impl AsRef<Path>, ids: &NodeIds) -> Result<LabelTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, ids, path)
}

/// Residual training graph plus held-out positive and negative test pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    pub residual: Graph,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl LinkSplit {
    /// Test pairs with binary labels, positives first.
    pub fn test_pairs(&self) -> (Vec<(usize, usize)>, Vec<bool>) {
        let pairs: Vec<_> = self.test_pos.iter().chain(&self.test_neg).copied().collect();
        let labels = (0..pairs.len()).map(|i| i < self.test_pos.len()).collect();
        (pairs, labels)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Removes `fraction` of the edges as positive test pairs while keeping the
/// residual graph connected, and samples as many non-edges as negatives.
///
/// A random spanning tree (union-find over shuffled edges) is protected; the
/// removed edges are drawn uniformly from the remaining non-tree edges.
/// Negatives are distinct pairs that are not edges of the original graph.
pub fn connected_link_split(graph: &Graph, fraction: f64, seed: u64) -> Result<LinkSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (residual, test_pos) = holdout_with(graph, fraction, &mut rng)?;

    let needed = test_pos.len();
    let available = graph.num_non_edges();
    if available < needed {
        return Err(Error::TooDense { available, needed });
    }
    let mut chosen = HashSet::with_capacity(needed);
    let mut test_neg = Vec::with_capacity(needed);
    while test_neg.len() < needed {
        let pair = sample_pair(&mut rng, graph.num_nodes());
        if !graph.has_edge(pair.0, pair.1) && chosen.insert(pair) {
            test_neg.push(pair);
        }
    }

    Ok(LinkSplit {
        residual,
        test_pos,
        test_neg,
    })
}

/// The positive half of [`connected_link_split`]: the connected residual
/// graph and the held-out edges, without negative sampling.
pub fn connected_holdout(
    graph: &Graph,
    fraction: f64,
    seed: u64,
) -> Result<(Graph, Vec<(usize, usize)>)> {
    holdout_with(graph, fraction, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn holdout_with(
    graph: &Graph,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Graph, Vec<(usize, usize)>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let components = graph.num_components();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let n = graph.num_nodes();

    let mut order: Vec<usize> = (0..graph.num_edges()).collect();
    order.shuffle(rng);
    let mut uf = UnionFind::new(n);
    let mut non_tree = Vec::new();
    for &e in &order {
        let (i, j) = graph.edges()[e];
        if !uf.union(i, j) {
            non_tree.push(e);
        }
    }

    let requested = (fraction * graph.num_edges() as f64).floor() as usize;
    let n_remove = requested.min(non_tree.len());
    if n_remove < requested {
        warn!(
            "only {} non-tree edges available; removing {} instead of {}",
            non_tree.len(),
            n_remove,
            requested
        );
    }
    let picked = rand::seq::index::sample(rng, non_tree.len(), n_remove);
    let mut removed = vec![false; graph.num_edges()];
    let mut test_pos = Vec::with_capacity(n_remove);
    for idx in picked.iter() {
        let e = non_tree[idx];
        removed[e] = true;
        test_pos.push(graph.edges()[e]);
    }
    let residual_edges = graph
        .edges()
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&e, _)| e)
        .collect();
    Ok((Graph::new(n, residual_edges)?, test_pos))
}

/// Uniform unordered pair of distinct nodes, returned as `(min, max)`.
pub(crate) fn sample_pair<R: Rng>(rng: &mut R, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i.min(j), i.max(j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn parse(text: &str) -> Result<(Graph, NodeIds)> {
        parse_edge_list(text, Path::new("test.tsv"))
    }

    #[test]
    fn loads_simple_path() {
        let (g, ids) = parse("a b\nb c").unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(ids.name(2), "c");
        assert_eq!(ids.get("b"), Some(1));
    }

    #[test]
    fn drops_self_loops_and_duplicates() {
        let (g, _) = parse("a a\na b").unwrap();
        assert_eq!((g.num_nodes(), g.edges()), (2, &[(0, 1)][..]));
        let (g, _) = parse("a b\nb a").unwrap();
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn comments_tabs_and_blank_lines() {
        let (g, _) = parse("# header\n\nx\ty\n  y z  \n").unwrap();
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn parse_error_reports_line() {
        match parse("a b\nc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a b c"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_graph() {
        assert!(matches!(parse("# nothing\n"), Err(Error::EmptyGraph)));
        assert!(matches!(parse("a a\n"), Err(Error::EmptyGraph)));
    }

    #[test]
    fn missing_file_mentions_path() {
        let err = load_edge_list("/definitely/not/here.tsv").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.tsv"));
    }

    #[test]
    fn labels_are_densified() {
        let (_, ids) = parse("n1 n2\nn2 n3").unwrap();
        let t = parse_labels("n1\tx\nn2\ty\nn3\tx\n", &ids, Path::new("l")).unwrap();
        assert_eq!(t.num_classes(), 2);
        assert_eq!((t.get(0), t.get(1), t.get(2)), (Some(0), Some(1), Some(0)));
        assert_eq!(t.class_name(1), "y");
    }

    #[test]
    fn labels_unknown_node_and_empty() {
        let (_, ids) = parse("n1 n2").unwrap();
        assert!(matches!(
            parse_labels("n9\tx\n", &ids, Path::new("l")),
            Err(Error::UnknownNode(n)) if n == "n9"
        ));
        let t = parse_labels("", &ids, Path::new("l")).unwrap();
        assert_eq!((t.len(), t.num_classes()), (0, 0));
        assert!(matches!(
            parse_labels("n1\n", &ids, Path::new("l")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn labels_from_file() {
        let (_, ids) = parse("n1 n2").unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "n1\ta\nn2\tb").unwrap();
        let t = load_labels(f.path(), &ids).unwrap();
        assert_eq!(t.labeled(), vec![(0, 0), (1, 1)]);
    }

    fn complete(n: usize) -> Graph {
        let mut e = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                e.push((i, j));
            }
        }
        Graph::new(n, e).unwrap()
    }

    fn check_split(g: &Graph, s: &LinkSplit) {
        assert!(s.residual.is_connected());
        let mut all: Vec<_> = s.residual.edges().iter().chain(&s.test_pos).copied().collect();
        all.sort();
        let mut orig = g.edges().to_vec();
        orig.sort();
        assert_eq!(all, orig);
        for &(i, j) in &s.test_pos {
            assert!(!s.residual.has_edge(i, j));
        }
        assert_eq!(s.test_neg.len(), s.test_pos.len());
        let uniq: HashSet<_> = s.test_neg.iter().collect();
        assert_eq!(uniq.len(), s.test_neg.len());
        for &(i, j) in &s.test_neg {
            assert!(i < j && !g.has_edge(i, j));
        }
    }

    #[test]
    fn triangle_holdout_removes_one_edge() {
        let g = complete(3);
        // Every spanning tree of K3 keeps 2 of the 3 edges, so exactly one
        // non-tree edge exists and floor(1.5) = 1 is requested.
        for seed in 0..20 {
            let (residual, test_pos) = connected_holdout(&g, 0.5, seed).unwrap();
            assert_eq!(test_pos.len(), 1);
            assert_eq!(residual.num_edges(), 2);
            assert!(residual.is_connected());
        }
        // K3 has no non-edges to serve as negatives.
        assert!(matches!(
            connected_link_split(&g, 0.5, 1),
            Err(Error::TooDense { available: 0, needed: 1 })
        ));
    }

    #[test]
    fn degraded_removal_when_few_non_tree_edges() {
        let g = Graph::new(4, vec![(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        let s = connected_link_split(&g, 0.5, 3).unwrap();
        // floor(0.5 * 4) = 2 requested, but only 1 non-tree edge exists.
        assert_eq!(s.test_pos.len(), 1);
        check_split(&g, &s);
    }

    #[test]
    fn tree_split_removes_nothing() {
        let g = Graph::new(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
        let s = connected_link_split(&g, 0.5, 11).unwrap();
        assert!(s.test_pos.is_empty() && s.test_neg.is_empty());
        assert_eq!(s.residual, g);
    }

    #[test]
    fn k5_holdout_is_deterministic() {
        let g = complete(5);
        let a = connected_holdout(&g, 0.5, 42).unwrap();
        let b = connected_holdout(&g, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 5);
        assert!(a.0.is_connected());
        assert!(matches!(
            connected_link_split(&g, 0.5, 42),
            Err(Error::TooDense { available: 0, needed: 5 })
        ));
    }

    #[test]
    fn split_with_pendant_is_deterministic() {
        let mut edges = complete(5).edges().to_vec();
        edges.push((4, 5));
        edges.push((5, 6));
        let g = Graph::new(7, edges).unwrap();
        let a = connected_link_split(&g, 0.5, 42).unwrap();
        let b = connected_link_split(&g, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.test_pos.len(), 6);
        check_split(&g, &a);
        let c = connected_link_split(&g, 0.5, 43).unwrap();
        check_split(&g, &c);
    }

    #[test]
    fn disconnected_input() {
        let g = Graph::new(4, vec![(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            connected_link_split(&g, 0.5, 0),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn split_fraction_validated() {
        let g = complete(4);
        assert!(connected_link_split(&g, 0.0, 0).is_err());
        assert!(connected_link_split(&g, 1.0, 0).is_err());
    }

    #[test]
    fn non_edge_count() {
        let g = Graph::new(4, vec![(0, 1)]).unwrap();
        assert_eq!(g.num_non_edges(), 5);
        assert!(!g.is_connected());
        assert_eq!(g.num_components(), 3);
    }
}
