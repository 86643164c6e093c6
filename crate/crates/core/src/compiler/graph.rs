use fixedbitset::FixedBitSet;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use crate::formula::{PartialAssignment, Var};

/// Index of a node in a [`DnnfGraph`] arena.
pub type NodeId = usize;

/// Id of the `False` node in every graph.
pub const FALSE: NodeId = 0;
/// Id of the `True` node in every graph.
pub const TRUE: NodeId = 1;

/// A decision-DNNF node. Literals are encoded as `Ite(v, True, False)` and
/// `Ite(v, False, True)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    False,
    True,
    Ite { var: Var, hi: NodeId, lo: NodeId },
    And(Vec<NodeId>),
}

/// A decision-DNNF held as a topologically ordered arena: children always
/// have smaller ids than their parents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnnfGraph {
    nodes: Vec<Node>,
    root: NodeId,
    num_vars: u32,
    upper: BTreeSet<Var>,
    smooth: Option<BTreeSet<Var>>,
    supports: Vec<FixedBitSet>,
}

/// Hash-consing node factory.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    unique: HashMap<Node, NodeId>,
    num_vars: u32,
}

impl GraphBuilder {
    pub fn new(num_vars: u32) -> GraphBuilder {
        let mut unique = HashMap::new();
        unique.insert(Node::False, FALSE);
        unique.insert(Node::True, TRUE);
        GraphBuilder {
            nodes: vec![Node::False, Node::True],
            unique,
            num_vars,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.unique.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.unique.insert(node, id);
        id
    }

    /// Decision node. `Ite(v, n, n)` is kept as is (it is the smoothing gadget
    /// when `n` is `True`); only `Ite(v, False, False)` folds to `False`.
    pub fn ite(&mut self, var: Var, hi: NodeId, lo: NodeId) -> NodeId {
        if hi == FALSE && lo == FALSE {
            return FALSE;
        }
        self.intern(Node::Ite { var, hi, lo })
    }

    pub fn literal(&mut self, var: Var, positive: bool) -> NodeId {
        if positive {
            self.ite(var, TRUE, FALSE)
        } else {
            self.ite(var, FALSE, TRUE)
        }
    }

    /// Conjunction with `True` children dropped, `False` absorbing, nested
    /// conjunctions flattened and children sorted.
    pub fn and(&mut self, children: impl IntoIterator<Item = NodeId>) -> NodeId {
        let mut flat = Vec::new();
        for c in children {
            match &self.nodes[c] {
                Node::False => return FALSE,
                Node::True => {}
                Node::And(grand) => flat.extend_from_slice(grand),
                Node::Ite { .. } => flat.push(c),
            }
        }
        flat.sort_unstable();
        flat.dedup();
        match flat.len() {
            0 => TRUE,
            1 => flat[0],
            _ => self.intern(Node::And(flat)),
        }
    }

    pub fn finish(self, root: NodeId, upper: BTreeSet<Var>) -> DnnfGraph {
        DnnfGraph::from_parts(self.nodes, root, self.num_vars, upper)
    }
}

impl DnnfGraph {
    fn from_parts(nodes: Vec<Node>, root: NodeId, num_vars: u32, upper: BTreeSet<Var>) -> DnnfGraph {
        let mut g = DnnfGraph {
            nodes,
            root,
            num_vars,
            upper,
            smooth: None,
            supports: Vec::new(),
        };
        g.supports = g.compute_supports();
        g
    }

    /// Builds a graph from raw nodes; children must precede their parents.
    pub fn from_nodes(nodes: Vec<Node>, root: NodeId, num_vars: u32) -> DnnfGraph {
        DnnfGraph::from_parts(nodes, root, num_vars, BTreeSet::new())
    }

    fn compute_supports(&self) -> Vec<FixedBitSet> {
        let n = self.num_vars as usize;
        let mut supports: Vec<FixedBitSet> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let mut s = FixedBitSet::with_capacity(n);
            match node {
                Node::False | Node::True => {}
                Node::Ite { var, hi, lo } => {
                    for c in [hi, lo] {
                        if *c < id {
                            s.union_with(&supports[*c]);
                        }
                    }
                    s.insert(var.offset());
                }
                Node::And(children) => {
                    for &c in children.iter().filter(|&&c| c < id) {
                        s.union_with(&supports[c]);
                    }
                }
            }
            supports.push(s);
        }
        supports
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Upper layer used at compile time (empty for unconstrained compilation).
    pub fn upper(&self) -> &BTreeSet<Var> {
        &self.upper
    }

    /// The universe this graph was smoothed over, if any.
    pub fn smooth_universe(&self) -> Option<&BTreeSet<Var>> {
        self.smooth.as_ref()
    }

    pub fn support_bits(&self, id: NodeId) -> &FixedBitSet {
        &self.supports[id]
    }

    pub fn support(&self, id: NodeId) -> BTreeSet<Var> {
        self.supports[id].ones().map(Var::from_offset).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Ite { .. } => 2,
                Node::And(c) => c.len(),
                _ => 0,
            })
            .sum()
    }

    /// Nodes reachable from the root.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            match &self.nodes[id] {
                Node::Ite { hi, lo, .. } => stack.extend([*hi, *lo]),
                Node::And(children) => stack.extend(children),
                _ => {}
            }
        }
        seen
    }

    /// Truth value under a total assignment of the support.
    pub fn eval(&self, assignment: &PartialAssignment) -> bool {
        let mut value = vec![false; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            value[id] = match node {
                Node::False => false,
                Node::True => true,
                Node::Ite { var, hi, lo } => {
                    if assignment.get(*var).unwrap_or(false) {
                        value[*hi]
                    } else {
                        value[*lo]
                    }
                }
                Node::And(children) => children.iter().all(|&c| value[c]),
            };
        }
        value[self.root]
    }

    /// Makes every decision node smooth and extends the root to `universe`.
    ///
    /// Missing variables are added as `Ite(v, True, True)` gadgets conjoined
    /// to the branch lacking them. `False` is compatible with any support and
    /// is left alone.
    pub fn smooth(&self, universe: &BTreeSet<Var>) -> DnnfGraph {
        let num_vars = universe
            .iter()
            .next_back()
            .map_or(self.num_vars, |v| v.index().max(self.num_vars));
        let mut b = GraphBuilder::new(num_vars);
        let n = num_vars as usize;
        let mut support: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); 2];
        let mut map = vec![FALSE; self.nodes.len()];
        map[TRUE] = TRUE;

        fn pad(b: &mut GraphBuilder, node: NodeId, missing: impl Iterator<Item = usize>) -> NodeId {
            let gadgets: Vec<NodeId> = missing.map(|o| b.ite(Var::from_offset(o), TRUE, TRUE)).collect();
            if gadgets.is_empty() {
                return node;
            }
            b.and(std::iter::once(node).chain(gadgets))
        }

        fn record(b: &GraphBuilder, support: &mut Vec<FixedBitSet>, id: NodeId, n: usize) {
            while support.len() < b.len() {
                let new = support.len();
                let mut s = FixedBitSet::with_capacity(n);
                match b.node(new) {
                    Node::False | Node::True => {}
                    Node::Ite { var, hi, lo } => {
                        s.union_with(&support[*hi]);
                        s.union_with(&support[*lo]);
                        s.insert(var.offset());
                    }
                    Node::And(children) => {
                        for &c in children {
                            s.union_with(&support[c]);
                        }
                    }
                }
                support.push(s);
            }
            debug_assert!(id < support.len());
        }

        for (id, node) in self.nodes.iter().enumerate().skip(2) {
            let new = match node {
                Node::False => FALSE,
                Node::True => TRUE,
                Node::Ite { var, hi, lo } => {
                    let (hi, lo) = (map[*hi], map[*lo]);
                    let (mut hi2, mut lo2) = (hi, lo);
                    if hi != FALSE && lo != FALSE {
                        let hs = support[hi].clone();
                        let ls = support[lo].clone();
                        hi2 = pad(&mut b, hi, ls.difference(&hs).collect::<Vec<_>>().into_iter());
                        record(&b, &mut support, hi2, n);
                        lo2 = pad(&mut b, lo, hs.difference(&ls).collect::<Vec<_>>().into_iter());
                    }
                    record(&b, &mut support, lo2, n);
                    b.ite(*var, hi2, lo2)
                }
                Node::And(children) => {
                    let children: Vec<NodeId> = children.iter().map(|&c| map[c]).collect();
                    b.and(children)
                }
            };
            record(&b, &mut support, new, n);
            map[id] = new;
        }
        let mut root = map[self.root];
        if root != FALSE {
            let missing: Vec<usize> = universe
                .iter()
                .map(|v| v.offset())
                .filter(|&o| !support[root].contains(o))
                .collect();
            root = pad(&mut b, root, missing.into_iter());
        }
        let mut g = b.finish(root, self.upper.clone());
        g.smooth = Some(universe.clone());
        g.compact()
    }

    /// `g|m`: every decision on a variable of `m` is replaced by the selected
    /// branch.
    pub fn condition(&self, m: &PartialAssignment) -> DnnfGraph {
        let mut b = GraphBuilder::new(self.num_vars);
        let mut map = vec![FALSE; self.nodes.len()];
        map[TRUE] = TRUE;
        for (id, node) in self.nodes.iter().enumerate().skip(2) {
            map[id] = match node {
                Node::False => FALSE,
                Node::True => TRUE,
                Node::Ite { var, hi, lo } => match m.get(*var) {
                    Some(true) => map[*hi],
                    Some(false) => map[*lo],
                    None => b.ite(*var, map[*hi], map[*lo]),
                },
                Node::And(children) => {
                    let children: Vec<NodeId> = children.iter().map(|&c| map[c]).collect();
                    b.and(children)
                }
            };
        }
        let mut g = b.finish(map[self.root], self.upper.clone());
        g.smooth = self
            .smooth
            .as_ref()
            .map(|u| u.iter().filter(|v| !m.contains(**v)).copied().collect());
        g.compact()
    }

    /// Drops nodes unreachable from the root, keeping the topological order.
    pub fn compact(&self) -> DnnfGraph {
        let reachable = self.reachable();
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if !(reachable[id] || id == FALSE || id == TRUE) {
                continue;
            }
            map[id] = nodes.len();
            nodes.push(match node {
                Node::Ite { var, hi, lo } => Node::Ite {
                    var: *var,
                    hi: map[*hi],
                    lo: map[*lo],
                },
                Node::And(children) => Node::And(children.iter().map(|&c| map[c]).collect()),
                other => other.clone(),
            });
        }
        let mut g = DnnfGraph::from_parts(nodes, map[self.root], self.num_vars, self.upper.clone());
        g.smooth = self.smooth.clone();
        g
    }

    /// Decision variables in breadth-first order from the root, skipping
    /// literal nodes, each listed once.
    pub fn bfs_decision_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        let mut seen_var = BTreeSet::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(id) = queue.pop_front() {
            let children: Vec<NodeId> = match &self.nodes[id] {
                Node::Ite { var, hi, lo } => {
                    if !is_literal(*hi, *lo) && seen_var.insert(*var) {
                        out.push(*var);
                    }
                    vec![*hi, *lo]
                }
                Node::And(children) => children.clone(),
                _ => vec![],
            };
            for c in children {
                if !std::mem::replace(&mut seen[c], true) {
                    queue.push_back(c);
                }
            }
        }
        out
    }

    /// Dumps the graph as NNF text: `nnf <nodes> <edges> <vars>` then one line
    /// per node (`L <lit>`, `A <k> <ids…>`, `O <var> 2 <hi> <lo>`, with
    /// `O 0 0` for false and `A 0` for true), the root last.
    pub fn to_nnf(&self) -> String {
        let g = self.compact();
        // the root must come last; everything else is already in topological order
        let mut order: Vec<NodeId> = (0..g.nodes.len()).filter(|&i| i != g.root).collect();
        order.push(g.root);
        let mut pos = vec![0; g.nodes.len()];
        for (i, &id) in order.iter().enumerate() {
            pos[id] = i;
        }
        let mut out = String::new();
        let _ = writeln!(out, "nnf {} {} {}", g.nodes.len(), g.edge_count(), g.num_vars);
        for &id in &order {
            let _ = match &g.nodes[id] {
                Node::False => writeln!(out, "O 0 0"),
                Node::True => writeln!(out, "A 0"),
                Node::Ite { var, hi: TRUE, lo: FALSE } => writeln!(out, "L {}", var.index()),
                Node::Ite { var, hi: FALSE, lo: TRUE } => writeln!(out, "L -{}", var.index()),
                Node::Ite { var, hi, lo } => writeln!(out, "O {} 2 {} {}", var.index(), pos[*hi], pos[*lo]),
                Node::And(children) => {
                    let ids: Vec<String> = children.iter().map(|c| pos[*c].to_string()).collect();
                    writeln!(out, "A {} {}", children.len(), ids.join(" "))
                }
            };
        }
        out
    }

    /// Parses the format written by [`DnnfGraph::to_nnf`]; the last node is the root.
    pub fn from_nnf(text: &str) -> Result<DnnfGraph, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('c'));
        let header: Vec<&str> = lines.next().ok_or("empty input")?.split_whitespace().collect();
        if header.len() != 4 || header[0] != "nnf" {
            return Err("expected `nnf <nodes> <edges> <vars>`".into());
        }
        let num_vars: u32 = header[3].parse().map_err(|_| "bad variable count")?;
        let mut b = GraphBuilder::new(num_vars);
        let mut map: Vec<NodeId> = Vec::new();
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<i64, String> {
                t.get(i)
                    .ok_or_else(|| format!("truncated line `{line}`"))?
                    .parse()
                    .map_err(|_| format!("bad number in `{line}`"))
            };
            let child = |i: usize| -> Result<NodeId, String> {
                let c = num(i)? as usize;
                map.get(c).copied().ok_or_else(|| format!("forward reference in `{line}`"))
            };
            let id = match t.first().copied() {
                Some("L") => {
                    let lit = num(1)?;
                    let var = Var::try_new(lit.unsigned_abs() as u32).ok_or("literal 0")?;
                    b.literal(var, lit > 0)
                }
                Some("A") => {
                    let k = num(1)? as usize;
                    let children = (0..k).map(|i| child(2 + i)).collect::<Result<Vec<_>, _>>()?;
                    b.and(children)
                }
                Some("O") if num(2)? == 0 => FALSE,
                Some("O") => {
                    let var = Var::try_new(num(1)? as u32).ok_or("decision on variable 0")?;
                    let (hi, lo) = (child(3)?, child(4)?);
                    b.ite(var, hi, lo)
                }
                _ => return Err(format!("unknown node line `{line}`")),
            };
            map.push(id);
        }
        let root = *map.last().ok_or("no nodes")?;
        Ok(b.finish(root, BTreeSet::new()).compact())
    }

    /// Recomputes the smoothness flag: every decision has equal branch
    /// supports (ignoring `False` branches) and the root covers `universe`.
    pub fn is_smooth_over(&self, universe: &BTreeSet<Var>) -> bool {
        if self.root == FALSE {
            return true;
        }
        let smooth_nodes = self.nodes.iter().all(|node| match node {
            Node::Ite { hi, lo, .. } => {
                *hi == FALSE || *lo == FALSE || self.supports[*hi] == self.supports[*lo]
            }
            _ => true,
        });
        smooth_nodes && self.support(self.root) == *universe
    }
}

pub(crate) fn is_literal(hi: NodeId, lo: NodeId) -> bool {
    (hi == TRUE && lo == FALSE) || (hi == FALSE && lo == TRUE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u32) -> Var {
        Var::new(i)
    }

    fn models(g: &DnnfGraph, vars: &[u32]) -> usize {
        (0..1u32 << vars.len())
            .filter(|bits| {
                let m: PartialAssignment = vars.iter().enumerate().map(|(i, &x)| (v(x), bits >> i & 1 == 1)).collect();
                g.eval(&m)
            })
            .count()
    }

    #[test]
    fn builder_simplifies_and() {
        let mut b = GraphBuilder::new(2);
        let x = b.literal(v(1), true);
        assert_eq!(b.and([x, TRUE]), x);
        assert_eq!(b.and([x, FALSE]), FALSE);
        assert_eq!(b.and([]), TRUE);
        let y = b.literal(v(2), false);
        let a1 = b.and([x, y]);
        let a2 = b.and([y, x]);
        assert_eq!(a1, a2);
        assert_eq!(b.ite(v(1), FALSE, FALSE), FALSE);
    }

    #[test]
    fn smoothing_adds_free_variables() {
        let mut b = GraphBuilder::new(2);
        let x = b.literal(v(1), true);
        let g = b.finish(x, BTreeSet::new());
        let universe: BTreeSet<Var> = [v(1), v(2)].into();
        let s = g.smooth(&universe);
        assert!(s.is_smooth_over(&universe));
        assert_eq!(models(&s, &[1, 2]), 2);

        let t = GraphBuilder::new(3).finish(TRUE, BTreeSet::new());
        let universe: BTreeSet<Var> = [v(1), v(2), v(3)].into();
        let s = t.smooth(&universe);
        assert_eq!(s.support(s.root()), universe);
        assert_eq!(s.smooth(&universe), s);
    }

    #[test]
    fn smoothing_balances_branches() {
        // ite(x1, x2, ¬x3)
        let mut b = GraphBuilder::new(3);
        let x2 = b.literal(v(2), true);
        let nx3 = b.literal(v(3), false);
        let root = b.ite(v(1), x2, nx3);
        let g = b.finish(root, BTreeSet::new());
        let universe: BTreeSet<Var> = [v(1), v(2), v(3)].into();
        assert!(!g.is_smooth_over(&universe));
        let s = g.smooth(&universe);
        assert!(s.is_smooth_over(&universe));
        assert_eq!(models(&s, &[1, 2, 3]), models(&g, &[1, 2, 3]));
    }

    #[test]
    fn conditioning() {
        let mut b = GraphBuilder::new(2);
        let x2 = b.literal(v(2), true);
        let root = b.ite(v(1), x2, FALSE);
        let g = b.finish(root, BTreeSet::new());
        let m: PartialAssignment = [(v(1), true)].into_iter().collect();
        let c = g.condition(&m);
        assert_eq!(c.node(c.root()), &Node::Ite { var: v(2), hi: TRUE, lo: FALSE });
        let m: PartialAssignment = [(v(1), false)].into_iter().collect();
        assert_eq!(g.condition(&m).root(), FALSE);
        let absent: PartialAssignment = [(v(7), true)].into_iter().collect();
        assert_eq!(g.condition(&absent), g.compact());
    }

    #[test]
    fn nnf_round_trip() {
        let mut b = GraphBuilder::new(3);
        let x2 = b.literal(v(2), true);
        let nx3 = b.literal(v(3), false);
        let both = b.and([x2, nx3]);
        let root = b.ite(v(1), both, x2);
        let g = b.finish(root, BTreeSet::new());
        let text = g.to_nnf();
        assert!(text.starts_with("nnf "));
        let back = DnnfGraph::from_nnf(&text).unwrap();
        assert_eq!(models(&back, &[1, 2, 3]), models(&g, &[1, 2, 3]));
        assert_eq!(back.bfs_decision_vars(), vec![v(1)]);
    }
}
