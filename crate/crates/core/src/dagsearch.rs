//! Hill-climbing over DAGs with single-edge moves.
//!
//! Each node keeps a row of cached deltas: one per addable candidate parent
//! and one per current parent. A move changes at most two parent sets, so only
//! those rows are recomputed. A reversal's delta is the sum of a deletion on
//! one row and an addition on the other. Acyclicity is checked lazily, best
//! move first.

use std::cmp::Ordering as CmpOrdering;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::families::CandidateSets;
use crate::model::is_acyclic;
use crate::parent_set::ParentSet;
use crate::scoring::FamilyScoreLookup;
use crate::search::{RestartMode, SearchConfig, SearchOutcome, SearchTrace, TabuList, TraceEventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeOpKind {
    Add,
    Delete,
    Reverse,
}

/// A single-edge change to the arc `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeOp {
    pub kind: EdgeOpKind,
    pub from: usize,
    pub to: usize,
}

impl EdgeOp {
    pub fn add(from: usize, to: usize) -> Self {
        EdgeOp { kind: EdgeOpKind::Add, from, to }
    }

    pub fn delete(from: usize, to: usize) -> Self {
        EdgeOp { kind: EdgeOpKind::Delete, from, to }
    }

    pub fn reverse(from: usize, to: usize) -> Self {
        EdgeOp { kind: EdgeOpKind::Reverse, from, to }
    }

    /// The move that undoes this one.
    pub fn inverse(&self) -> Self {
        match self.kind {
            EdgeOpKind::Add => EdgeOp::delete(self.from, self.to),
            EdgeOpKind::Delete => EdgeOp::add(self.from, self.to),
            EdgeOpKind::Reverse => EdgeOp::reverse(self.to, self.from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RowEntry {
    parent: usize,
    present: bool,
    /// Score change of toggling `parent`; `None` when the result is not scorable.
    delta: Option<f64>,
}

/// Search state over one DAG.
#[derive(Debug, Clone)]
pub struct DagState<'a, L> {
    lookup: &'a L,
    candidates: &'a CandidateSets,
    max_in_degree: usize,
    parents: Vec<ParentSet>,
    children: Vec<Vec<usize>>,
    node_scores: Vec<f64>,
    total: f64,
    rows: Vec<Vec<RowEntry>>,
    lookups: u64,
}

impl<'a, L: FamilyScoreLookup> DagState<'a, L> {
    pub fn new(
        lookup: &'a L,
        candidates: &'a CandidateSets,
        max_in_degree: usize,
        parents: Vec<ParentSet>,
    ) -> Result<Self> {
        let n = candidates.len();
        if parents.len() != n {
            return Err(Error::Config(format!("{} parent sets for {n} nodes", parents.len())));
        }
        if !is_acyclic(&parents) {
            let node = crate::model::topological_order(&parents).unwrap_err();
            return Err(Error::Cyclic(node));
        }
        let mut children = vec![Vec::new(); n];
        let mut node_scores = Vec::with_capacity(n);
        for (i, pa) in parents.iter().enumerate() {
            for p in pa.iter() {
                children[p].push(i);
            }
            node_scores.push(lookup.family_score(i, pa).ok_or_else(|| Error::MissingFamily {
                node: i,
                parents: pa.to_vec(),
            })?);
        }
        let mut state = DagState {
            lookup,
            candidates,
            max_in_degree,
            parents,
            children,
            node_scores,
            total: 0.0,
            rows: vec![Vec::new(); n],
            lookups: n as u64,
        };
        state.total = state.node_scores.iter().sum();
        for i in 0..n {
            state.rows[i] = state.compute_row(i);
        }
        Ok(state)
    }

    pub fn empty(lookup: &'a L, candidates: &'a CandidateSets, max_in_degree: usize) -> Result<Self> {
        let n = candidates.len();
        DagState::new(lookup, candidates, max_in_degree, vec![ParentSet::empty(); n])
    }

    fn toggle_delta(&self, node: usize, parent: usize) -> Option<f64> {
        let pa = &self.parents[node];
        let next = if pa.contains(parent) {
            pa.without(parent)
        } else {
            if pa.len() >= self.max_in_degree {
                return None;
            }
            pa.with(parent)
        };
        self.lookup.family_score(node, &next).map(|s| s - self.node_scores[node])
    }

    fn compute_row(&mut self, node: usize) -> Vec<RowEntry> {
        let mut row: Vec<RowEntry> = self.candidates.of(node).iter().map(|&p| RowEntry {
            parent: p,
            present: self.parents[node].contains(p),
            delta: None,
        }).collect();
        // Parents outside the candidate set can still be deleted.
        for p in self.parents[node].iter() {
            if !self.candidates.contains(node, p) {
                row.push(RowEntry { parent: p, present: true, delta: None });
            }
        }
        for e in &mut row {
            e.delta = self.toggle_delta(node, e.parent);
        }
        self.lookups += row.len() as u64;
        row
    }

    fn row_delta(&self, node: usize, parent: usize, present: bool) -> Option<f64> {
        self.rows[node]
            .iter()
            .find(|e| e.parent == parent && e.present == present)
            .and_then(|e| e.delta)
    }

    pub fn parents(&self) -> &[ParentSet] {
        &self.parents
    }

    pub fn score(&self) -> f64 {
        self.total
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    /// Score lookups performed so far.
    pub fn lookups(&self) -> u64 {
        self.lookups
    }

    /// Cached score change of `op`, or `None` if the op is not available
    /// (ignoring acyclicity).
    pub fn cached_delta(&self, op: &EdgeOp) -> Option<f64> {
        let EdgeOp { kind, from, to } = *op;
        match kind {
            EdgeOpKind::Add => self.row_delta(to, from, false),
            EdgeOpKind::Delete => self.row_delta(to, from, true),
            EdgeOpKind::Reverse => {
                let del = self.row_delta(to, from, true)?;
                let add = self.row_delta(from, to, false)?;
                Some(del + add)
            }
        }
    }

    /// Score change of `op` from the score tables, without the cache.
    pub fn op_delta(&self, op: &EdgeOp) -> Option<f64> {
        let EdgeOp { kind, from, to } = *op;
        let present = self.parents[to].contains(from);
        match kind {
            EdgeOpKind::Add if !present && from != to && self.candidates.contains(to, from) => {
                self.toggle_delta(to, from)
            }
            EdgeOpKind::Delete if present => self.toggle_delta(to, from),
            EdgeOpKind::Reverse if present && self.candidates.contains(from, to) => {
                Some(self.toggle_delta(to, from)? + self.toggle_delta(from, to)?)
            }
            _ => None,
        }
    }

    /// Whether `target` is reachable from `source` along child links,
    /// optionally ignoring the arc `skip`.
    fn reaches(&self, source: usize, target: usize, skip: Option<(usize, usize)>) -> bool {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![source];
        seen[source] = true;
        while let Some(u) = stack.pop() {
            if u == target {
                return true;
            }
            for &c in &self.children[u] {
                if skip == Some((u, c)) || seen[c] {
                    continue;
                }
                seen[c] = true;
                stack.push(c);
            }
        }
        false
    }

    /// Whether applying `op` keeps the graph acyclic.
    pub fn keeps_acyclic(&self, op: &EdgeOp) -> bool {
        match op.kind {
            EdgeOpKind::Add => !self.reaches(op.to, op.from, None),
            EdgeOpKind::Delete => true,
            EdgeOpKind::Reverse => !self.reaches(op.from, op.to, Some((op.from, op.to))),
        }
    }

    /// Every op with a cached delta, sorted best first (ties by op order).
    /// Acyclicity is not checked.
    pub fn candidate_ops(&self) -> Vec<(EdgeOp, f64)> {
        let mut ops = Vec::new();
        for (to, row) in self.rows.iter().enumerate() {
            for e in row {
                let Some(d) = e.delta else { continue };
                if e.present {
                    ops.push((EdgeOp::delete(e.parent, to), d));
                    if let Some(r) = self.cached_delta(&EdgeOp::reverse(e.parent, to)) {
                        ops.push((EdgeOp::reverse(e.parent, to), r));
                    }
                } else {
                    ops.push((EdgeOp::add(e.parent, to), d));
                }
            }
        }
        ops.sort_by(by_delta);
        ops
    }

    /// All ops that can be applied now.
    pub fn legal_ops(&self) -> Vec<(EdgeOp, f64)> {
        self.candidate_ops().into_iter().filter(|(op, _)| self.keeps_acyclic(op)).collect()
    }

    /// The best acyclic op that `allowed` accepts.
    fn best_where(&self, ops: &[(EdgeOp, f64)], allowed: impl Fn(&EdgeOp) -> bool) -> Option<(EdgeOp, f64)> {
        ops.iter().find(|(op, _)| allowed(op) && self.keeps_acyclic(op)).copied()
    }

    /// Best non-tabu acyclic op; if every acyclic op is tabu, the best one.
    pub fn best_move(&self, tabu: &TabuList<EdgeOp>) -> Option<(EdgeOp, f64, bool)> {
        let ops = self.candidate_ops();
        self.best_where(&ops, |op| !tabu.contains(op))
            .map(|(op, d)| (op, d, false))
            .or_else(|| self.best_where(&ops, |_| true).map(|(op, d)| (op, d, true)))
    }

    fn set_parents(&mut self, node: usize, parents: ParentSet) {
        self.node_scores[node] = self
            .lookup
            .family_score(node, &parents)
            .expect("applied op had a score");
        self.parents[node] = parents;
    }

    /// Applies `op`, which must be legal.
    pub fn apply(&mut self, op: &EdgeOp) {
        let EdgeOp { kind, from, to } = *op;
        let mut touched = vec![to];
        match kind {
            EdgeOpKind::Add => {
                self.set_parents(to, self.parents[to].with(from));
                self.children[from].push(to);
            }
            EdgeOpKind::Delete => {
                self.set_parents(to, self.parents[to].without(from));
                self.children[from].retain(|&c| c != to);
            }
            EdgeOpKind::Reverse => {
                self.set_parents(to, self.parents[to].without(from));
                self.children[from].retain(|&c| c != to);
                self.set_parents(from, self.parents[from].with(to));
                self.children[to].push(from);
                touched.push(from);
            }
        }
        self.total = self.node_scores.iter().sum();
        for node in touched {
            self.rows[node] = self.compute_row(node);
        }
    }
}

fn by_delta(a: &(EdgeOp, f64), b: &(EdgeOp, f64)) -> CmpOrdering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn random_walk<L: FamilyScoreLookup>(state: &mut DagState<'_, L>, len: usize, rng: &mut ChaCha8Rng) {
    for _ in 0..len {
        let ops = state.legal_ops();
        if ops.is_empty() {
            break;
        }
        let &(op, _) = ops.choose(rng).expect("non-empty");
        state.apply(&op);
    }
}

/// Tabu hill-climbing with restarts over DAGs, from `initial` or the empty
/// graph. Families are scored through `lookup`; additions are limited to the
/// candidate parents.
pub fn search<L: FamilyScoreLookup>(
    lookup: &L,
    candidates: &CandidateSets,
    config: &SearchConfig,
    initial: Option<Vec<ParentSet>>,
) -> Result<SearchOutcome> {
    let start = Instant::now();
    let n = candidates.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.max_in_degree;
    let mut state = match initial {
        Some(p) => DagState::new(lookup, candidates, k, p)?,
        None => DagState::empty(lookup, candidates, k)?,
    };
    let mut tabu = TabuList::new(config.tabu_size);
    let mut trace = SearchTrace::default();
    let mut best = state.score();
    let mut best_parents = state.parents().to_vec();
    let mut time_to_best = 0.0;
    let mut steps = 0u64;
    let mut restarts = 0u64;
    let mut stagnation = 0usize;
    let mut at_local_max = false;
    let mut lookups_before = 0u64;
    trace.record(start, 0, best, TraceEventKind::Start);

    loop {
        if config.out_of_budget(steps, start) {
            break;
        }
        if at_local_max || stagnation >= config.stagnation_limit {
            if restarts >= config.restarts as u64 {
                break;
            }
            restarts += 1;
            lookups_before += state.lookups();
            let from = match config.restart_mode {
                RestartMode::PerturbBest => best_parents.clone(),
                RestartMode::Fresh => vec![ParentSet::empty(); n],
            };
            state = DagState::new(lookup, candidates, k, from)?;
            random_walk(&mut state, config.perturbation_len(n), &mut rng);
            tabu.clear();
            stagnation = 0;
            at_local_max = false;
            trace.record(start, steps, best, TraceEventKind::Restart);
            if state.score() > best {
                best = state.score();
                best_parents = state.parents().to_vec();
                time_to_best = start.elapsed().as_secs_f64();
                trace.record(start, steps, best, TraceEventKind::Improve);
            }
            continue;
        }
        let Some((op, delta, aspiration)) = state.best_move(&tabu) else {
            at_local_max = true;
            continue;
        };
        if config.greedy && delta <= 0.0 {
            at_local_max = true;
            continue;
        }
        state.apply(&op);
        tabu.push(op.inverse());
        steps += 1;
        if aspiration {
            trace.record(start, steps, best, TraceEventKind::Aspiration);
        }
        if state.score() > best {
            best = state.score();
            best_parents = state.parents().to_vec();
            stagnation = 0;
            time_to_best = start.elapsed().as_secs_f64();
            trace.record(start, steps, best, TraceEventKind::Improve);
        } else {
            stagnation += 1;
        }
    }

    trace.record(start, steps, best, TraceEventKind::End);
    Ok(SearchOutcome {
        score: crate::scoring::network_score(&best_parents, lookup)?,
        parents: best_parents,
        trace,
        steps,
        restarts,
        time_to_best,
        elapsed: start.elapsed().as_secs_f64(),
        family_scans: lookups_before + state.lookups(),
    })
}
