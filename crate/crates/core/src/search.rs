//! Configuration, tabu memory, traces and results shared by both searches.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::parent_set::ParentSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartMode {
    /// Random moves applied to the best state found so far.
    PerturbBest,
    /// Random moves applied to a fresh start (random ordering / empty graph).
    Fresh,
}

impl std::str::FromStr for RestartMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "perturb" => Ok(RestartMode::PerturbBest),
            "fresh" => Ok(RestartMode::Fresh),
            other => Err(crate::Error::Config(format!("unknown restart mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub tabu_size: usize,
    /// Moves without a new global best before restarting.
    pub stagnation_limit: usize,
    pub restarts: usize,
    /// Random moves per restart; `None` means half the number of variables.
    pub perturbation: Option<usize>,
    pub restart_mode: RestartMode,
    /// Stop climbing at the first local maximum instead of taking worsening moves.
    pub greedy: bool,
    /// Parent bound for DAG moves. Ordering search takes it from its family table.
    pub max_in_degree: usize,
    pub max_steps: Option<u64>,
    pub time_limit: Option<Duration>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tabu_size: 100,
            stagnation_limit: 100,
            restarts: 10,
            perturbation: None,
            restart_mode: RestartMode::PerturbBest,
            greedy: false,
            max_in_degree: 3,
            max_steps: None,
            time_limit: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn perturbation_len(&self, n: usize) -> usize {
        self.perturbation.unwrap_or((n / 2).max(1))
    }

    pub(crate) fn out_of_budget(&self, steps: u64, start: Instant) -> bool {
        self.max_steps.is_some_and(|m| steps >= m) || self.time_limit.is_some_and(|t| start.elapsed() >= t)
    }
}

/// Bounded FIFO of forbidden moves.
#[derive(Debug, Clone)]
pub struct TabuList<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T: PartialEq> TabuList<T> {
    pub fn new(capacity: usize) -> Self {
        TabuList {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1024)),
        }
    }

    pub fn push(&mut self, item: T) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn contains(&self, item: &T) -> bool {
        self.items.contains(item)
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    Start,
    Improve,
    Restart,
    /// Every move was tabu; the best one was taken anyway.
    Aspiration,
    End,
}

impl TraceEventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceEventKind::Start => "start",
            TraceEventKind::Improve => "improve",
            TraceEventKind::Restart => "restart",
            TraceEventKind::Aspiration => "aspiration",
            TraceEventKind::End => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    /// Seconds since the search started (precomputation excluded).
    pub elapsed: f64,
    pub step: u64,
    /// Best total score seen so far.
    pub best: f64,
    pub kind: TraceEventKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    /// Seconds spent before the search started, when known.
    pub precompute_seconds: Option<f64>,
}

impl SearchTrace {
    pub(crate) fn record(&mut self, start: Instant, step: u64, best: f64, kind: TraceEventKind) {
        self.events.push(TraceEvent {
            elapsed: start.elapsed().as_secs_f64(),
            step,
            best,
            kind,
        });
    }

    /// Events with timestamps dropped, for reproducibility checks.
    pub fn untimed(&self) -> Vec<(u64, f64, TraceEventKind)> {
        self.events.iter().map(|e| (e.step, e.best, e.kind)).collect()
    }

    /// Tab-separated `elapsed_seconds, best_score_per_datapoint, event` rows
    /// under a header; the precompute time, if known, is a `#` comment.
    pub fn to_tsv(&self, n_records: usize) -> String {
        let mut out = String::from("elapsed_seconds\tbest_score_per_datapoint\tevent\n");
        if let Some(p) = self.precompute_seconds {
            let _ = writeln!(out, "# precompute_seconds\t{p:.6}");
        }
        let m = n_records.max(1) as f64;
        for e in &self.events {
            let _ = writeln!(out, "{:.6}\t{}\t{}", e.elapsed, e.best / m, e.kind.as_str());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub parents: Vec<ParentSet>,
    pub score: f64,
    pub trace: SearchTrace,
    pub steps: u64,
    pub restarts: u64,
    /// Seconds from search start to the last improvement.
    pub time_to_best: f64,
    pub elapsed: f64,
    /// Family-list entries examined (ordering search only).
    pub family_scans: u64,
}

/// SplitMix64 of `root + stream · φ`: the seed of an independent random stream.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
