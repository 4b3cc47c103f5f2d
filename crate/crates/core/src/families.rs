//! Candidate parents, family enumeration and scoring, and dominance pruning.
//!
//! The output of this module is what both searches consume: per node, every
//! scored candidate family (for DAG moves) and the pruned, ranked list of
//! families (for ordering moves).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adtree::{AdTree, ContingencyTable};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::parent_set::ParentSet;
use crate::scoring::{family_score, FamilyScoreLookup, ScoreConfig, ScoreKind};

/// Candidate parent ids per node, strongest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    per_node: Vec<Vec<usize>>,
}

impl CandidateSets {
    /// Every other variable is a candidate.
    pub fn full(n: usize) -> Self {
        CandidateSets {
            per_node: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn new(per_node: Vec<Vec<usize>>) -> Result<Self> {
        let n = per_node.len();
        for (i, c) in per_node.iter().enumerate() {
            if c.iter().any(|&j| j == i || j >= n) {
                return Err(Error::Config(format!("bad candidate list for node {i}")));
            }
            if ParentSet::from_ids(c.iter().copied()).len() != c.len() {
                return Err(Error::Config(format!("repeated candidate for node {i}")));
            }
        }
        Ok(CandidateSets { per_node })
    }

    pub fn len(&self) -> usize {
        self.per_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }

    pub fn of(&self, node: usize) -> &[usize] {
        &self.per_node[node]
    }

    pub fn contains(&self, node: usize, parent: usize) -> bool {
        self.per_node[node].contains(&parent)
    }
}

/// Empirical mutual information `I(X_a; X_b)` in nats.
pub fn mutual_information(data: &Dataset, a: usize, b: usize) -> f64 {
    let table = ContingencyTable::from_records(data, a, &[b]);
    let m = data.n_records() as f64;
    let ra = table.child_card;
    let qb = table.n_parent_states();
    let mut marg_a = vec![0u64; ra];
    let mut marg_b = vec![0u64; qb];
    for u in 0..qb {
        for (x, &c) in table.row(u).iter().enumerate() {
            marg_a[x] += c;
            marg_b[u] += c;
        }
    }
    let mut mi = 0.0;
    for u in 0..qb {
        for (x, &c) in table.row(u).iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / m * (c * m / (marg_a[x] as f64 * marg_b[u] as f64)).ln();
            }
        }
    }
    mi
}

/// For each node, the `c` variables with the highest mutual information with
/// it (lower id first on ties). `c` is clamped to `n - 1`.
pub fn select_candidates(data: &Dataset, c: usize) -> CandidateSets {
    let n = data.n_vars();
    let c = c.min(n.saturating_sub(1));
    let per_node = (0..n)
        .map(|i| {
            let mut scored: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (mutual_information(data, i, j), j))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.into_iter().take(c).map(|(_, j)| j).collect()
        })
        .collect();
    CandidateSets { per_node }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of parent sets of size at most `k` drawn from `c` candidates.
pub fn family_count(c: usize, k: usize) -> u128 {
    (0..=k.min(c)).map(|j| binomial(c, j)).sum()
}

/// All subsets of `items` with at most `k` elements, by size then lexicographically.
pub fn bounded_subsets(items: &[usize], k: usize) -> Vec<ParentSet> {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = Vec::new();
    for size in 0..=k.min(sorted.len()) {
        idx.clear();
        idx.extend(0..size);
        loop {
            out.push(ParentSet::from_ids(idx.iter().map(|&i| sorted[i])));
            // Advance to the next combination.
            let mut pos = size;
            while pos > 0 && idx[pos - 1] == sorted.len() - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for p in pos..size {
                idx[p] = idx[p - 1] + 1;
            }
        }
    }
    out
}

/// Scores every subset of the node's candidates with at most `k` parents.
pub fn enumerate_and_score(
    node: usize,
    candidates: &CandidateSets,
    k: usize,
    tree: &AdTree,
    config: &ScoreConfig,
) -> Result<Vec<(ParentSet, f64)>> {
    bounded_subsets(candidates.of(node), k)
        .into_iter()
        .map(|parents| {
            let table = tree.contingency_table(node, &parents.to_vec())?;
            Ok((parents, family_score(&table, config)))
        })
        .collect()
}

fn rank_cmp(a: &(ParentSet, f64), b: &(ParentSet, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.tie_cmp(&b.0))
}

/// Drops every family with a proper subset (among the inputs) scoring at
/// least as well, then ranks the survivors best first.
pub fn prune_dominated(scored: &[(ParentSet, f64)]) -> Vec<(ParentSet, f64)> {
    let score_of: HashMap<&ParentSet, f64> = scored.iter().map(|(p, s)| (p, *s)).collect();
    let mut best_below: HashMap<ParentSet, f64> = HashMap::with_capacity(scored.len());

    // Best score over proper subsets of `set` present in the input.
    fn best_proper(
        set: &ParentSet,
        score_of: &HashMap<&ParentSet, f64>,
        memo: &mut HashMap<ParentSet, f64>,
    ) -> f64 {
        if let Some(&b) = memo.get(set) {
            return b;
        }
        let mut best = f64::NEG_INFINITY;
        for id in set.iter() {
            let sub = set.without(id);
            if let Some(&s) = score_of.get(&sub) {
                best = best.max(s);
            }
            best = best.max(best_proper(&sub, score_of, memo));
        }
        memo.insert(set.clone(), best);
        best
    }

    // Smaller sets first keeps the recursion shallow.
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by_key(|&i| scored[i].0.len());
    let mut kept: Vec<(ParentSet, f64)> = order
        .into_iter()
        .filter_map(|i| {
            let (set, score) = &scored[i];
            let dominated = best_proper(set, &score_of, &mut best_below) >= *score;
            (!dominated).then(|| (set.clone(), *score))
        })
        .collect();
    kept.sort_by(rank_cmp);
    kept
}

/// Per node, the surviving families sorted by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFamilyTable {
    nodes: Vec<Vec<(ParentSet, f64)>>,
    /// Families enumerated per node before pruning.
    f_max: Vec<usize>,
}

impl RankedFamilyTable {
    /// Builds from per-node ranked lists; each list must contain the empty set.
    pub fn new(nodes: Vec<Vec<(ParentSet, f64)>>, f_max: Vec<usize>) -> Result<Self> {
        if nodes.len() != f_max.len() {
            return Err(Error::Config("f_max length differs from node count".into()));
        }
        for (i, list) in nodes.iter().enumerate() {
            if !list.iter().any(|(p, _)| p.is_empty()) {
                return Err(Error::Config(format!("node {i} has no empty-parent family")));
            }
            if list.iter().any(|(p, s)| p.contains(i) || !s.is_finite()) {
                return Err(Error::Config(format!("node {i} has an invalid family")));
            }
        }
        let mut nodes = nodes;
        for list in &mut nodes {
            list.sort_by(rank_cmp);
        }
        Ok(RankedFamilyTable { nodes, f_max })
    }

    /// Prunes and ranks unpruned per-node enumerations.
    pub fn from_scored(scored: &[Vec<(ParentSet, f64)>]) -> Result<Self> {
        RankedFamilyTable::new(
            scored.iter().map(|s| prune_dominated(s)).collect(),
            scored.iter().map(Vec::len).collect(),
        )
    }

    /// Ranks without pruning.
    pub fn unpruned(scored: &[Vec<(ParentSet, f64)>]) -> Result<Self> {
        RankedFamilyTable::new(scored.to_vec(), scored.iter().map(Vec::len).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn families(&self, node: usize) -> &[(ParentSet, f64)] {
        &self.nodes[node]
    }

    pub fn f_eff(&self, node: usize) -> usize {
        self.nodes[node].len()
    }

    pub fn f_max(&self, node: usize) -> usize {
        self.f_max[node]
    }

    pub fn max_f_eff(&self) -> usize {
        self.nodes.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_f_max(&self) -> usize {
        self.f_max.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_f_eff(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        self.nodes.iter().map(Vec::len).sum::<usize>() as f64 / self.nodes.len() as f64
    }
}

/// Unpruned family scores, indexed for arbitrary lookups.
#[derive(Debug, Clone, Default)]
pub struct FamilyScoreMap {
    per_node: Vec<HashMap<ParentSet, f64>>,
}

impl FamilyScoreMap {
    pub fn from_scored(scored: &[Vec<(ParentSet, f64)>]) -> Self {
        FamilyScoreMap {
            per_node: scored
                .iter()
                .map(|s| s.iter().map(|(p, v)| (p.clone(), *v)).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.per_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }
}

impl FamilyScoreLookup for FamilyScoreMap {
    fn family_score(&self, child: usize, parents: &ParentSet) -> Option<f64> {
        self.per_node.get(child)?.get(parents).copied()
    }
}

#[derive(Debug, Clone)]
pub struct FamilyConfig {
    /// Candidate parents per node; `None` admits every other variable.
    pub candidates: Option<usize>,
    pub max_parents: usize,
    pub score: ScoreConfig,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            candidates: Some(10),
            max_parents: 3,
            score: ScoreConfig::default(),
        }
    }
}

/// Everything both searches need, computed once per dataset.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub candidates: CandidateSets,
    pub scored: Vec<Vec<(ParentSet, f64)>>,
    pub ranked: RankedFamilyTable,
    pub n_records: usize,
}

impl Precomputed {
    pub fn build(data: &Dataset, tree: &AdTree, config: &FamilyConfig) -> Result<Self> {
        let candidates = match config.candidates {
            Some(c) => select_candidates(data, c),
            None => CandidateSets::full(data.n_vars()),
        };
        let scored = (0..data.n_vars())
            .map(|i| enumerate_and_score(i, &candidates, config.max_parents, tree, &config.score))
            .collect::<Result<Vec<_>>>()?;
        let ranked = RankedFamilyTable::from_scored(&scored)?;
        Ok(Precomputed {
            candidates,
            scored,
            ranked,
            n_records: data.n_records(),
        })
    }

    pub fn score_map(&self) -> FamilyScoreMap {
        FamilyScoreMap::from_scored(&self.scored)
    }

    /// Number of enumerated families of exactly `size` parents, per node.
    pub fn count_of_size(&self, size: usize) -> Vec<usize> {
        self.scored
            .iter()
            .map(|s| s.iter().filter(|(p, _)| p.len() == size).count())
            .collect()
    }
}

/// Identifies the inputs a cached [`RankedFamilyTable`] was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheKey {
    pub dataset_hash: String,
    pub candidates: Option<usize>,
    pub max_parents: usize,
    pub score: ScoreConfig,
}

const CACHE_MAGIC: &str = "bnsearch-family-cache 1";

pub fn format_family_cache(key: &CacheKey, table: &RankedFamilyTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CACHE_MAGIC}");
    let cands = key.candidates.map_or("all".to_owned(), |c| c.to_string());
    let _ = writeln!(
        out,
        "key {} {} {} {} {}",
        key.dataset_hash,
        cands,
        key.max_parents,
        key.score.kind(),
        key.score.ess()
    );
    let _ = writeln!(out, "nodes {}", table.n_nodes());
    for i in 0..table.n_nodes() {
        let _ = writeln!(out, "node {} {} {}", i, table.f_max(i), table.f_eff(i));
        for (parents, score) in table.families(i) {
            let ids: Vec<String> = parents.iter().map(|p| p.to_string()).collect();
            let ids = if ids.is_empty() { "-".to_owned() } else { ids.join(",") };
            let _ = writeln!(out, "{score}\t{ids}");
        }
    }
    out
}

pub fn parse_family_cache(text: &str, expected: &CacheKey) -> Result<RankedFamilyTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::parse(0, format!("missing {what}")));

    let (no, magic) = next("header")?;
    if magic != CACHE_MAGIC {
        return Err(Error::parse(no, "not a family cache file"));
    }
    let (no, key_line) = next("key")?;
    let f: Vec<&str> = key_line.split_whitespace().collect();
    if f.len() != 6 || f[0] != "key" {
        return Err(Error::parse(no, "malformed key line"));
    }
    let bad = |m: &str| Error::parse(no, m.to_owned());
    let candidates = match f[2] {
        "all" => None,
        c => Some(c.parse().map_err(|_| bad("bad candidate count"))?),
    };
    let kind: ScoreKind = f[4].parse()?;
    let ess: f64 = f[5].parse().map_err(|_| bad("bad ess"))?;
    let key = CacheKey {
        dataset_hash: f[1].to_owned(),
        candidates,
        max_parents: f[3].parse().map_err(|_| bad("bad max parents"))?,
        score: ScoreConfig::new(kind, ess)?,
    };
    let same = key.dataset_hash == expected.dataset_hash
        && key.candidates == expected.candidates
        && key.max_parents == expected.max_parents
        && key.score.kind() == expected.score.kind()
        && (key.score.kind() == ScoreKind::Bic || key.score.ess() == expected.score.ess());
    if !same {
        return Err(Error::CacheMismatch(format!("cache built for {key:?}")));
    }

    let (no, nodes_line) = next("node count")?;
    let n: usize = nodes_line
        .strip_prefix("nodes ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(no, "malformed node count"))?;
    let mut nodes = Vec::with_capacity(n);
    let mut f_max = Vec::with_capacity(n);
    for i in 0..n {
        let (no, head) = next("node header")?;
        let h: Vec<&str> = head.split_whitespace().collect();
        let parsed = (h.len() == 4 && h[0] == "node" && h[1] == i.to_string())
            .then(|| Some((h[2].parse::<usize>().ok()?, h[3].parse::<usize>().ok()?)))
            .flatten();
        let (fm, len) = parsed.ok_or_else(|| Error::parse(no, "malformed node header"))?;
        f_max.push(fm);
        let mut list = Vec::with_capacity(len);
        for _ in 0..len {
            let (no, row) = next("family row")?;
            let (score, ids) = row.split_once('\t').ok_or_else(|| Error::parse(no, "malformed family row"))?;
            let score: f64 = score.parse().map_err(|_| Error::parse(no, "bad score"))?;
            let parents = if ids == "-" {
                ParentSet::empty()
            } else {
                ids.split(',')
                    .map(|s| s.parse::<usize>().map_err(|_| Error::parse(no, "bad parent id")))
                    .collect::<Result<ParentSet>>()?
            };
            if parents.iter().any(|p| p >= n) {
                return Err(Error::parse(no, "parent id out of range"));
            }
            list.push((parents, score));
        }
        nodes.push(list);
    }
    RankedFamilyTable::new(nodes, f_max)
}

pub fn save_family_cache(path: impl AsRef<Path>, key: &CacheKey, table: &RankedFamilyTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_family_cache(key, table)).map_err(|e| Error::io(path, e))
}

pub fn load_family_cache(path: impl AsRef<Path>, expected: &CacheKey) -> Result<RankedFamilyTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_family_cache(&text, expected)
}
