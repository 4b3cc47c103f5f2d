//! Hill-climbing over variable orderings.
//!
//! The score of an ordering is the score of the best network consistent with
//! it: every node independently takes the highest-ranked family whose parents
//! all precede it. Moves swap two adjacent variables, which changes the
//! eligible parents of those two nodes only. Each position caches the delta of
//! its swap; after a move only the neighbouring positions need rescanning.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::families::RankedFamilyTable;
use crate::parent_set::ParentSet;
use crate::search::{RestartMode, SearchConfig, SearchOutcome, SearchTrace, TabuList, TraceEventKind};

/// A permutation of variable ids with its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    perm: Vec<usize>,
    pos: Vec<usize>,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Ordering {
            perm: (0..n).collect(),
            pos: (0..n).collect(),
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut pos = vec![usize::MAX; n];
        for (i, &v) in perm.iter().enumerate() {
            if v >= n || pos[v] != usize::MAX {
                return Err(Error::Config(format!("{perm:?} is not a permutation")));
            }
            pos[v] = i;
        }
        Ok(Ordering { perm, pos })
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Ordering::from_perm(perm).expect("shuffle is a permutation")
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn position(&self, node: usize) -> usize {
        self.pos[node]
    }

    pub fn node_at(&self, position: usize) -> usize {
        self.perm[position]
    }

    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.pos[a] < self.pos[b]
    }

    /// Exchanges the variables at `j` and `j + 1`.
    pub fn swap_adjacent(&mut self, j: usize) {
        self.perm.swap(j, j + 1);
        self.pos[self.perm[j]] = j;
        self.pos[self.perm[j + 1]] = j + 1;
    }
}

/// Index of the first family in `list` whose parents all satisfy `eligible`,
/// and the number of entries examined.
fn first_consistent(list: &[(ParentSet, f64)], eligible: impl Fn(usize) -> bool) -> (usize, u64) {
    for (i, (parents, _)) in list.iter().enumerate() {
        if parents.iter().all(&eligible) {
            return (i, i as u64 + 1);
        }
    }
    panic!("family table lacks the empty parent set");
}

/// The best family for `node` among those consistent with `ordering`.
pub fn best_consistent_family<'t>(
    node: usize,
    ordering: &Ordering,
    table: &'t RankedFamilyTable,
) -> (&'t ParentSet, f64) {
    let list = table.families(node);
    let (i, _) = first_consistent(list, |p| ordering.precedes(p, node));
    (&list[i].0, list[i].1)
}

/// The optimal network consistent with `ordering` and its score (summed in
/// ascending node order).
pub fn network_for_ordering(ordering: &Ordering, table: &RankedFamilyTable) -> (Vec<ParentSet>, f64) {
    let mut total = 0.0;
    let parents = (0..table.n_nodes())
        .map(|node| {
            let (pa, s) = best_consistent_family(node, ordering, table);
            total += s;
            pa.clone()
        })
        .collect();
    (parents, total)
}

/// Cached evaluation of swapping positions `j` and `j + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SwapMove {
    delta: f64,
    /// Family index for the node now at `j`, after it moves to `j + 1`.
    first: usize,
    /// Family index for the node now at `j + 1`, after it moves to `j`.
    second: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub position: usize,
    pub delta: f64,
    /// Taken despite being tabu because every move was.
    pub aspiration: bool,
    /// Family-list entries examined to refresh cached deltas.
    pub scans: u64,
}

/// Search state over one ordering.
#[derive(Debug, Clone)]
pub struct OrderingState<'t> {
    table: &'t RankedFamilyTable,
    ordering: Ordering,
    chosen: Vec<usize>,
    total: f64,
    moves: Vec<SwapMove>,
    tabu: TabuList<(usize, usize)>,
    stagnation: usize,
    scans: u64,
}

impl<'t> OrderingState<'t> {
    pub fn new(table: &'t RankedFamilyTable, ordering: Ordering, tabu_size: usize) -> Self {
        assert_eq!(table.n_nodes(), ordering.len(), "ordering and table sizes differ");
        let mut scans = 0;
        let chosen = (0..ordering.len())
            .map(|node| {
                let (i, s) = first_consistent(table.families(node), |p| ordering.precedes(p, node));
                scans += s;
                i
            })
            .collect();
        let mut state = OrderingState {
            table,
            ordering,
            chosen,
            total: 0.0,
            moves: Vec::new(),
            tabu: TabuList::new(tabu_size),
            stagnation: 0,
            scans,
        };
        state.total = state.sum_chosen();
        state.moves = (0..state.ordering.len().saturating_sub(1))
            .map(|j| {
                let (mv, s) = state.evaluate_swap(j);
                state.scans += s;
                mv
            })
            .collect();
        state
    }

    fn score_of(&self, node: usize, family: usize) -> f64 {
        self.table.families(node)[family].1
    }

    fn sum_chosen(&self) -> f64 {
        self.chosen.iter().enumerate().map(|(n, &f)| self.score_of(n, f)).sum()
    }

    /// From-scratch evaluation of the swap at `j`.
    fn evaluate_swap(&self, j: usize) -> (SwapMove, u64) {
        let a = self.ordering.node_at(j);
        let b = self.ordering.node_at(j + 1);
        let ord = &self.ordering;
        // After the swap, `b` sees only what precedes position j; `a` also sees `b`.
        let (new_b, sb) = first_consistent(self.table.families(b), |p| ord.position(p) < j);
        let (new_a, sa) = first_consistent(self.table.families(a), |p| ord.position(p) < j || p == b);
        let before = self.score_of(a, self.chosen[a]) + self.score_of(b, self.chosen[b]);
        let after = self.score_of(a, new_a) + self.score_of(b, new_b);
        (
            SwapMove {
                delta: after - before,
                first: new_a,
                second: new_b,
            },
            sa + sb,
        )
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn score(&self) -> f64 {
        self.total
    }

    pub fn chosen_family(&self, node: usize) -> (&'t ParentSet, f64) {
        let (p, s) = &self.table.families(node)[self.chosen[node]];
        (p, *s)
    }

    pub fn parents(&self) -> Vec<ParentSet> {
        (0..self.chosen.len()).map(|n| self.chosen_family(n).0.clone()).collect()
    }

    pub fn cached_delta(&self, j: usize) -> f64 {
        self.moves[j].delta
    }

    pub fn cached_deltas(&self) -> Vec<f64> {
        self.moves.iter().map(|m| m.delta).collect()
    }

    /// Score change of swapping positions `j` and `j + 1`, recomputed from
    /// the tables for the two swapped nodes only.
    pub fn swap_delta(&self, j: usize) -> f64 {
        self.evaluate_swap(j).0.delta
    }

    pub fn is_tabu(&self, j: usize) -> bool {
        self.tabu.contains(&self.pair_at(j))
    }

    fn pair_at(&self, j: usize) -> (usize, usize) {
        let (a, b) = (self.ordering.node_at(j), self.ordering.node_at(j + 1));
        (a.min(b), a.max(b))
    }

    pub fn stagnation(&self) -> usize {
        self.stagnation
    }

    /// Cumulative family-list entries examined, including initialisation.
    pub fn family_scans(&self) -> u64 {
        self.scans
    }

    /// Best non-tabu swap (lowest position on ties); if every swap is tabu,
    /// the best swap overall. `None` for fewer than two variables.
    pub fn best_move(&self) -> Option<(usize, f64, bool)> {
        let pick = |allow_tabu: bool| {
            (0..self.moves.len())
                .filter(|&j| allow_tabu || !self.is_tabu(j))
                .fold(None, |best: Option<(usize, f64)>, j| match best {
                    Some((_, d)) if d >= self.moves[j].delta => best,
                    _ => Some((j, self.moves[j].delta)),
                })
        };
        pick(false)
            .map(|(j, d)| (j, d, false))
            .or_else(|| pick(true).map(|(j, d)| (j, d, true)))
    }

    /// Applies the swap at `j` and refreshes the affected cached deltas.
    pub fn apply(&mut self, j: usize) -> u64 {
        let a = self.ordering.node_at(j);
        let b = self.ordering.node_at(j + 1);
        let mv = self.moves[j];
        let (old_a, old_b) = (self.chosen[a], self.chosen[b]);
        self.chosen[a] = mv.first;
        self.chosen[b] = mv.second;
        self.ordering.swap_adjacent(j);
        self.total = self.sum_chosen();
        // Swapping back restores the old families: exact negation.
        self.moves[j] = SwapMove {
            delta: -mv.delta,
            first: old_b,
            second: old_a,
        };
        let mut scans = 0;
        for k in [j.checked_sub(1), Some(j + 1)].into_iter().flatten() {
            if k + 1 < self.ordering.len() {
                let (m, s) = self.evaluate_swap(k);
                self.moves[k] = m;
                scans += s;
            }
        }
        self.scans += scans;
        self.tabu.push((a.min(b), a.max(b)));
        scans
    }

    /// Takes the best available move.
    pub fn step(&mut self) -> Option<StepInfo> {
        let (position, delta, aspiration) = self.best_move()?;
        let scans = self.apply(position);
        Some(StepInfo {
            position,
            delta,
            aspiration,
            scans,
        })
    }

    fn reset_stagnation(&mut self) {
        self.stagnation = 0;
    }

    fn bump_stagnation(&mut self) {
        self.stagnation += 1;
    }
}

/// Tabu hill-climbing with restarts over orderings; starts from `initial` or
/// a seeded random ordering.
pub fn search(table: &RankedFamilyTable, config: &SearchConfig, initial: Option<Ordering>) -> SearchOutcome {
    let start = Instant::now();
    let n = table.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ordering = initial.unwrap_or_else(|| Ordering::random(n, &mut rng));

    let mut trace = SearchTrace::default();
    let mut state = OrderingState::new(table, ordering, config.tabu_size);
    let mut best_order = state.ordering().clone();
    let mut best = state.score();
    let mut time_to_best = 0.0;
    let mut steps = 0u64;
    let mut restarts = 0u64;
    let mut at_local_max = false;
    let mut scans_before = 0u64;
    trace.record(start, 0, best, TraceEventKind::Start);

    loop {
        if config.out_of_budget(steps, start) {
            break;
        }
        if at_local_max || state.stagnation() >= config.stagnation_limit {
            if restarts >= config.restarts as u64 {
                break;
            }
            restarts += 1;
            let mut next = match config.restart_mode {
                RestartMode::PerturbBest => best_order.clone(),
                RestartMode::Fresh => Ordering::random(n, &mut rng),
            };
            if n >= 2 {
                for _ in 0..config.perturbation_len(n) {
                    next.swap_adjacent(rng.random_range(0..n - 1));
                }
            }
            scans_before += state.family_scans();
            state = OrderingState::new(table, next, config.tabu_size);
            at_local_max = false;
            trace.record(start, steps, best, TraceEventKind::Restart);
            if state.score() > best {
                best = state.score();
                best_order = state.ordering().clone();
                time_to_best = start.elapsed().as_secs_f64();
                trace.record(start, steps, best, TraceEventKind::Improve);
            }
            continue;
        }
        let Some((j, delta, aspiration)) = state.best_move() else {
            at_local_max = true;
            continue;
        };
        if config.greedy && delta <= 0.0 {
            at_local_max = true;
            continue;
        }
        state.apply(j);
        steps += 1;
        if aspiration {
            trace.record(start, steps, best, TraceEventKind::Aspiration);
        }
        if state.score() > best {
            best = state.score();
            best_order = state.ordering().clone();
            state.reset_stagnation();
            time_to_best = start.elapsed().as_secs_f64();
            trace.record(start, steps, best, TraceEventKind::Improve);
        } else {
            state.bump_stagnation();
        }
    }

    let (parents, score) = network_for_ordering(&best_order, table);
    trace.record(start, steps, best, TraceEventKind::End);
    SearchOutcome {
        parents,
        score,
        trace,
        steps,
        restarts,
        time_to_best,
        elapsed: start.elapsed().as_secs_f64(),
        family_scans: scans_before + state.family_scans(),
    }
}
