//! All-dimensions tree of sufficient statistics.
//!
//! A count node covers the records matching the bindings on its path. Below
//! it, one vary node per later variable splits those records by value. The
//! most common value of each split is never materialised: its counts are the
//! parent's counts minus the siblings'. Nodes covering few records keep the
//! record ids instead and answer queries by scanning.

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdTreeConfig {
    /// Nodes covering at most this many records store record ids.
    pub leaf_threshold: usize,
    /// Deepest number of bindings the tree materialises; `None` builds the full tree.
    pub max_depth: Option<usize>,
    /// Largest dense contingency table, in cells, that a query may allocate.
    pub cell_ceiling: usize,
}

impl Default for AdTreeConfig {
    fn default() -> Self {
        AdTreeConfig {
            leaf_threshold: 32,
            max_depth: None,
            cell_ceiling: 1 << 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum AdNode {
    Leaf {
        records: Box<[u32]>,
    },
    Inner {
        count: u64,
        first_var: usize,
        /// Vary nodes for `first_var..first_var + vary.len()`.
        vary: Box<[VaryNode]>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct VaryNode {
    mcv: u32,
    /// `None` for the most common value and for values with no records.
    children: Box<[Option<Box<AdNode>>]>,
}

impl AdNode {
    fn count(&self) -> u64 {
        match self {
            AdNode::Leaf { records } => records.len() as u64,
            AdNode::Inner { count, .. } => *count,
        }
    }
}

/// A conjunction of `variable = value` bindings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountQuery {
    bindings: Vec<(usize, u32)>,
}

impl CountQuery {
    pub fn new(mut bindings: Vec<(usize, u32)>) -> Result<Self> {
        bindings.sort_unstable();
        if bindings.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Query("variable bound twice".into()));
        }
        Ok(CountQuery { bindings })
    }

    pub fn bindings(&self) -> &[(usize, u32)] {
        &self.bindings
    }
}

/// Dense counts `M[x, u]` for one child and an ordered parent list. Cell
/// `(x, u)` lives at `u * child_card + x`; parent states are mixed-radix with
/// the first parent most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub child_card: usize,
    pub parent_cards: Vec<usize>,
    pub counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn n_parent_states(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn count(&self, x: usize, u: usize) -> u64 {
        self.counts[u * self.child_card + x]
    }

    /// Counts for parent state `u`, indexed by child value.
    pub fn row(&self, u: usize) -> &[u64] {
        &self.counts[u * self.child_card..(u + 1) * self.child_card]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts by a direct pass over the records.
    pub fn from_records(data: &Dataset, child: usize, parents: &[usize]) -> Self {
        let schema = data.schema();
        let child_card = schema.cardinality(child);
        let parent_cards: Vec<usize> = parents.iter().map(|&p| schema.cardinality(p)).collect();
        let mut counts = vec![0u64; child_card * parent_cards.iter().product::<usize>()];
        for rec in data.records() {
            let u = parents
                .iter()
                .zip(&parent_cards)
                .fold(0usize, |acc, (&p, &c)| acc * c + rec[p] as usize);
            counts[u * child_card + rec[child] as usize] += 1;
        }
        ContingencyTable {
            child_card,
            parent_cards,
            counts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdTree {
    data: Dataset,
    cards: Vec<usize>,
    root: AdNode,
    config: AdTreeConfig,
}

impl AdTree {
    pub fn build(data: &Dataset, config: AdTreeConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::NoRecords);
        }
        let cards = data.schema().cardinalities();
        let mut tree = AdTree {
            data: data.clone(),
            cards,
            root: AdNode::Leaf { records: Box::new([]) },
            config,
        };
        let all: Vec<u32> = (0..data.n_records() as u32).collect();
        tree.root = tree.build_node(all, 0, 0);
        Ok(tree)
    }

    pub fn with_defaults(data: &Dataset) -> Result<Self> {
        AdTree::build(data, AdTreeConfig::default())
    }

    fn build_node(&self, records: Vec<u32>, first_var: usize, depth: usize) -> AdNode {
        if records.len() <= self.config.leaf_threshold {
            return AdNode::Leaf {
                records: records.into_boxed_slice(),
            };
        }
        let n = self.cards.len();
        let last = match self.config.max_depth {
            Some(d) if depth >= d => first_var,
            _ => n,
        };
        let vary = (first_var..last)
            .map(|var| {
                let mut buckets = vec![Vec::new(); self.cards[var]];
                for &r in &records {
                    buckets[self.data.value(r as usize, var) as usize].push(r);
                }
                // Lowest value index wins ties.
                let mcv = buckets
                    .iter()
                    .enumerate()
                    .fold(0, |best, (v, b)| if b.len() > buckets[best].len() { v } else { best });
                let children = buckets
                    .into_iter()
                    .enumerate()
                    .map(|(v, b)| {
                        (v != mcv && !b.is_empty()).then(|| Box::new(self.build_node(b, var + 1, depth + 1)))
                    })
                    .collect();
                VaryNode {
                    mcv: mcv as u32,
                    children,
                }
            })
            .collect();
        AdNode::Inner {
            count: records.len() as u64,
            first_var,
            vary,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn n_records(&self) -> u64 {
        self.root.count()
    }

    /// Number of count nodes (inner and leaf-list) in the tree.
    pub fn node_count(&self) -> usize {
        fn walk(node: &AdNode) -> usize {
            match node {
                AdNode::Leaf { .. } => 1,
                AdNode::Inner { vary, .. } => {
                    1 + vary
                        .iter()
                        .flat_map(|v| v.children.iter().flatten())
                        .map(|c| walk(c))
                        .sum::<usize>()
                }
            }
        }
        walk(&self.root)
    }

    fn vary<'t>(&self, first_var: usize, vary: &'t [VaryNode], var: usize) -> Result<&'t VaryNode> {
        vary.get(var - first_var).ok_or_else(|| {
            Error::Query(format!(
                "query deeper than the tree's depth bound {:?}",
                self.config.max_depth
            ))
        })
    }

    pub fn count(&self, query: &CountQuery) -> Result<u64> {
        for &(var, val) in query.bindings() {
            let card = *self
                .cards
                .get(var)
                .ok_or_else(|| Error::Query(format!("unknown variable {var}")))?;
            if val as usize >= card {
                return Err(Error::Query(format!("value {val} out of range for variable {var}")));
            }
        }
        self.count_at(&self.root, query.bindings())
    }

    fn count_at(&self, node: &AdNode, bindings: &[(usize, u32)]) -> Result<u64> {
        let Some((&(var, val), rest)) = bindings.split_first() else {
            return Ok(node.count());
        };
        match node {
            AdNode::Leaf { records } => Ok(records
                .iter()
                .filter(|&&r| bindings.iter().all(|&(v, x)| self.data.value(r as usize, v) == x))
                .count() as u64),
            AdNode::Inner { first_var, vary, .. } => {
                let vn = self.vary(*first_var, vary, var)?;
                if val == vn.mcv {
                    let mut total = self.count_at(node, rest)?;
                    for child in vn.children.iter().flatten() {
                        total -= self.count_at(child, rest)?;
                    }
                    Ok(total)
                } else {
                    match &vn.children[val as usize] {
                        Some(child) => self.count_at(child, rest),
                        None => Ok(0),
                    }
                }
            }
        }
    }

    /// Dense counts over `vars` (strictly ascending), first variable most significant.
    fn fill(&self, node: &AdNode, vars: &[usize], out: &mut [u64]) -> Result<()> {
        match node {
            AdNode::Leaf { records } => {
                out.fill(0);
                for &r in records.iter() {
                    let rec = self.data.record(r as usize);
                    let idx = vars.iter().fold(0usize, |acc, &v| acc * self.cards[v] + rec[v] as usize);
                    out[idx] += 1;
                }
                Ok(())
            }
            AdNode::Inner { count, first_var, vary } => {
                let Some((&var, rest)) = vars.split_first() else {
                    out[0] = *count;
                    return Ok(());
                };
                let vn = self.vary(*first_var, vary, var)?;
                let block = out.len() / self.cards[var];
                let mcv = vn.mcv as usize;
                self.fill(node, rest, &mut out[mcv * block..(mcv + 1) * block])?;
                for (val, child) in vn.children.iter().enumerate() {
                    if val == mcv {
                        continue;
                    }
                    let (lo, hi) = out.split_at_mut(val.max(mcv) * block);
                    let (dst, mcv_block) = if val < mcv {
                        (&mut lo[val * block..(val + 1) * block], &mut hi[..block])
                    } else {
                        (&mut hi[..block], &mut lo[mcv * block..(mcv + 1) * block])
                    };
                    match child {
                        Some(c) => {
                            self.fill(c, rest, dst)?;
                            for (m, d) in mcv_block.iter_mut().zip(dst.iter()) {
                                *m -= *d;
                            }
                        }
                        None => dst.fill(0),
                    }
                }
                Ok(())
            }
        }
    }

    /// Counts `M[x, u]` for `child` given `parents` (in the given order).
    pub fn contingency_table(&self, child: usize, parents: &[usize]) -> Result<ContingencyTable> {
        let n = self.cards.len();
        if child >= n || parents.iter().any(|&p| p >= n) {
            return Err(Error::Query("unknown variable in family".into()));
        }
        if parents.contains(&child) {
            return Err(Error::Query(format!("node {child} listed as its own parent")));
        }
        let mut sorted: Vec<usize> = parents.iter().copied().chain([child]).collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Query("repeated parent".into()));
        }
        let cells = sorted.iter().map(|&v| self.cards[v] as u128).product::<u128>();
        if cells > self.config.cell_ceiling as u128 {
            return Err(Error::TableTooLarge {
                vars: sorted.len(),
                cells,
                ceiling: self.config.cell_ceiling,
            });
        }
        let cells = cells as usize;
        let mut dense = vec![0u64; cells];
        self.fill(&self.root, &sorted, &mut dense)?;

        let child_card = self.cards[child];
        let parent_cards: Vec<usize> = parents.iter().map(|&p| self.cards[p]).collect();
        // Stride of each sorted variable in the (parent state, child value) layout.
        let mut target_stride = vec![0usize; n];
        target_stride[child] = 1;
        let mut s = child_card;
        for &p in parents.iter().rev() {
            target_stride[p] = s;
            s *= self.cards[p];
        }
        let mut counts = vec![0u64; cells];
        let mut digits = vec![0usize; sorted.len()];
        let mut target = 0usize;
        for &c in &dense {
            counts[target] = c;
            // Odometer increment, last sorted variable fastest.
            for d in (0..sorted.len()).rev() {
                let v = sorted[d];
                digits[d] += 1;
                target += target_stride[v];
                if digits[d] < self.cards[v] {
                    break;
                }
                target -= target_stride[v] * digits[d];
                digits[d] = 0;
            }
        }
        Ok(ContingencyTable {
            child_card,
            parent_cards,
            counts,
        })
    }
}
