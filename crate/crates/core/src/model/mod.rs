//! Bayesian networks with conditional probability tables: parameter fitting,
//! forward sampling, log-likelihood, and a line-oriented text format.

mod generate;
mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adtree::ContingencyTable;
use crate::data::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::parent_set::ParentSet;

pub use generate::{alarm_structure, random_cpts, random_network, random_structure};
pub use io::{format_network, load_network, parse_network, save_network};

/// Tolerance on CPT row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// `P(x | u)` stored at `u * child_card + x`, with parent states mixed-radix
/// over the parents in ascending id order (first parent most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub child_card: usize,
    pub parent_cards: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Cpt {
    pub fn n_parent_states(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.probs[u * self.child_card..(u + 1) * self.child_card]
    }

    fn validate(&self, node: usize) -> Result<()> {
        if self.probs.len() != self.child_card * self.n_parent_states() {
            return Err(Error::Network(format!("CPT of node {node} has the wrong size")));
        }
        for u in 0..self.n_parent_states() {
            let row = self.row(u);
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Network(format!("CPT of node {node} has an invalid probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Network(format!(
                    "CPT row {u} of node {node} sums to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// Kahn topological order, or the id of a node on a cycle.
pub fn topological_order(parents: &[ParentSet]) -> std::result::Result<Vec<usize>, usize> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(ParentSet::len).collect();
    let mut children = vec![Vec::new(); n];
    for (child, pa) in parents.iter().enumerate() {
        for p in pa.iter() {
            children[p].push(child);
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &c in children[v].iter().rev() {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&i| indegree[i] > 0).unwrap_or(0))
    }
}

pub fn is_acyclic(parents: &[ParentSet]) -> bool {
    topological_order(parents).is_ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    schema: Schema,
    parents: Vec<ParentSet>,
    order: Vec<usize>,
    cpts: Option<Vec<Cpt>>,
}

impl Network {
    /// A structure without parameters.
    pub fn new(schema: Schema, parents: Vec<ParentSet>) -> Result<Self> {
        let n = schema.len();
        if parents.len() != n {
            return Err(Error::Network(format!("{} parent sets for {n} variables", parents.len())));
        }
        for (i, pa) in parents.iter().enumerate() {
            if pa.contains(i) || pa.iter().any(|p| p >= n) {
                return Err(Error::Network(format!("invalid parent set for node {i}")));
            }
        }
        let order = topological_order(&parents).map_err(Error::Cyclic)?;
        Ok(Network {
            schema,
            parents,
            order,
            cpts: None,
        })
    }

    pub fn empty(schema: Schema) -> Self {
        let n = schema.len();
        Network::new(schema, vec![ParentSet::empty(); n]).expect("empty graph is acyclic")
    }

    pub fn with_cpts(mut self, cpts: Vec<Cpt>) -> Result<Self> {
        if cpts.len() != self.n_nodes() {
            return Err(Error::Network("one CPT per node required".into()));
        }
        for (i, cpt) in cpts.iter().enumerate() {
            let parent_cards: Vec<usize> = self.parents[i].iter().map(|p| self.schema.cardinality(p)).collect();
            if cpt.child_card != self.schema.cardinality(i) || cpt.parent_cards != parent_cards {
                return Err(Error::Network(format!("CPT of node {i} does not match the schema")));
            }
            cpt.validate(i)?;
        }
        self.cpts = Some(cpts);
        Ok(self)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[ParentSet] {
        &self.parents
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn cpts(&self) -> Option<&[Cpt]> {
        self.cpts.as_deref()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(ParentSet::len).sum()
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(ParentSet::len).max().unwrap_or(0)
    }

    /// Structure only.
    pub fn structure(&self) -> Network {
        Network {
            cpts: None,
            ..self.clone()
        }
    }

    fn parent_state(&self, node: usize, record: &[u32]) -> usize {
        self.parents[node]
            .iter()
            .fold(0usize, |acc, p| acc * self.schema.cardinality(p) + record[p] as usize)
    }
}

/// Dirichlet posterior mean under the BDe prior:
/// `P(x|u) = (M[x,u] + ess/(r q)) / (M[u] + ess/q)`.
pub fn fit_parameters(structure: &Network, data: &Dataset, ess: f64) -> Result<Network> {
    if !data.schema().is_compatible(structure.schema()) {
        return Err(Error::Schema("dataset does not match the network's variables".into()));
    }
    if !(ess > 0.0 && ess.is_finite()) {
        return Err(Error::Config(format!("equivalent sample size must be positive, got {ess}")));
    }
    let cpts = (0..structure.n_nodes())
        .map(|i| {
            let table = ContingencyTable::from_records(data, i, &structure.parents[i].to_vec());
            let r = table.child_card;
            let q = table.n_parent_states();
            let a_xu = ess / (r * q) as f64;
            let a_u = ess / q as f64;
            let mut probs = Vec::with_capacity(r * q);
            for u in 0..q {
                let row = table.row(u);
                let m_u: u64 = row.iter().sum();
                let denom = m_u as f64 + a_u;
                probs.extend(row.iter().map(|&c| (c as f64 + a_xu) / denom));
            }
            Cpt {
                child_card: r,
                parent_cards: table.parent_cards,
                probs,
            }
        })
        .collect();
    structure.structure().with_cpts(cpts)
}

/// Draws `m` records in topological order. Record `i` uses its own stream
/// of a ChaCha8 generator seeded with `seed`, so output is a pure function of
/// `(network, m, seed)`.
pub fn forward_sample(network: &Network, m: usize, seed: u64) -> Result<Dataset> {
    let cpts = network.cpts().ok_or(Error::MissingCpts)?;
    if m == 0 {
        return Err(Error::NoRecords);
    }
    let n = network.n_nodes();
    let mut values = vec![0u32; m * n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (idx, record) in values.chunks_exact_mut(n).enumerate() {
        rng.set_stream(idx as u64);
        rng.set_word_pos(0);
        for &node in network.topological_order() {
            let u = network.parent_state(node, record);
            let row = cpts[node].row(u);
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut value = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            for (x, &p) in row.iter().enumerate() {
                acc += p;
                if draw < acc {
                    value = x;
                    break;
                }
            }
            record[node] = value as u32;
        }
    }
    Dataset::from_flat(network.schema().clone(), values)
}

/// Mean over records of `Σ_i ln P(x_i | u_i)`.
pub fn log_likelihood(network: &Network, data: &Dataset) -> Result<f64> {
    let cpts = network.cpts().ok_or(Error::MissingCpts)?;
    if !data.schema().is_compatible(network.schema()) {
        return Err(Error::Schema("dataset does not match the network's variables".into()));
    }
    if data.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut total = 0.0;
    for (m, rec) in data.records().enumerate() {
        for node in 0..network.n_nodes() {
            let p = cpts[node].row(network.parent_state(node, rec))[rec[node] as usize];
            if p <= 0.0 {
                return Err(Error::ZeroProbability { record: m, node });
            }
            total += p.ln();
        }
    }
    Ok(total / data.n_records() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{family_score, ScoreConfig};

    fn ps(ids: &[usize]) -> ParentSet {
        ParentSet::from_ids(ids.iter().copied())
    }

    fn chain3() -> Network {
        // 0 -> 1 -> 2, all binary.
        let schema = Schema::from_cardinalities(&[2, 2, 2]).unwrap();
        Network::new(schema, vec![ps(&[]), ps(&[0]), ps(&[1])]).unwrap()
    }

    #[test]
    fn rejects_cycles() {
        let schema = Schema::from_cardinalities(&[2, 2]).unwrap();
        assert!(matches!(
            Network::new(schema, vec![ps(&[1]), ps(&[0])]),
            Err(Error::Cyclic(_))
        ));
    }

    #[test]
    fn topological_order_respects_edges() {
        let parents = vec![ps(&[2]), ps(&[0, 2]), ps(&[]), ps(&[1])];
        let order = topological_order(&parents).unwrap();
        let pos: Vec<usize> = (0..4).map(|i| order.iter().position(|&v| v == i).unwrap()).collect();
        for (c, pa) in parents.iter().enumerate() {
            assert!(pa.iter().all(|p| pos[p] < pos[c]));
        }
    }

    #[test]
    fn fit_matches_formula() {
        let schema = Schema::from_cardinalities(&[2]).unwrap();
        let ds = Dataset::new(schema.clone(), vec![vec![0], vec![0], vec![1]]).unwrap();
        let net = fit_parameters(&Network::empty(schema), &ds, 5.0).unwrap();
        let row = net.cpts().unwrap()[0].row(0).to_vec();
        assert!((row[0] - 4.5 / 8.0).abs() < 1e-15);
        assert!((row[1] - 3.5 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_parent_state_is_uniform() {
        let net = chain3();
        let ds = Dataset::new(net.schema().clone(), vec![vec![0, 0, 1], vec![0, 1, 1]]).unwrap();
        let fitted = fit_parameters(&net, &ds, 2.0).unwrap();
        assert_eq!(fitted.cpts().unwrap()[1].row(1), &[0.5, 0.5]);
    }

    #[test]
    fn tiny_ess_gives_frequencies() {
        let net = chain3();
        let rows = vec![vec![0, 0, 1], vec![0, 1, 1], vec![1, 1, 0], vec![0, 0, 0], vec![1, 0, 1]];
        let ds = Dataset::new(net.schema().clone(), rows).unwrap();
        let fitted = fit_parameters(&Network::empty(net.schema().clone()), &ds, 1e-12).unwrap();
        let row = fitted.cpts().unwrap()[0].row(0);
        assert!((row[0] - 0.6).abs() < 1e-9 && (row[1] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn deterministic_network_samples() {
        let net = chain3()
            .with_cpts(vec![
                Cpt { child_card: 2, parent_cards: vec![], probs: vec![0.0, 1.0] },
                Cpt { child_card: 2, parent_cards: vec![2], probs: vec![0.0, 1.0, 1.0, 0.0] },
                Cpt { child_card: 2, parent_cards: vec![2], probs: vec![1.0, 0.0, 0.0, 1.0] },
            ])
            .unwrap();
        let ds = forward_sample(&net, 50, 3).unwrap();
        assert!(ds.records().all(|r| r == [1, 0, 0]));
        assert_eq!(log_likelihood(&net, &ds).unwrap(), 0.0);
        let off = Dataset::new(net.schema().clone(), vec![vec![0, 0, 0]]).unwrap();
        assert!(matches!(log_likelihood(&net, &off), Err(Error::ZeroProbability { record: 0, node: 0 })));
    }

    #[test]
    fn sampling_is_seeded() {
        let net = random_network(&[2, 3, 2, 4], 2, 11);
        assert_eq!(forward_sample(&net, 200, 5).unwrap(), forward_sample(&net, 200, 5).unwrap());
        assert_ne!(forward_sample(&net, 200, 5).unwrap(), forward_sample(&net, 200, 6).unwrap());
        assert!(matches!(forward_sample(&net.structure(), 10, 1), Err(Error::MissingCpts)));
    }

    #[test]
    fn fair_coin_frequency() {
        let schema = Schema::from_cardinalities(&[2]).unwrap();
        let net = Network::empty(schema)
            .with_cpts(vec![Cpt { child_card: 2, parent_cards: vec![], probs: vec![0.5, 0.5] }])
            .unwrap();
        let ds = forward_sample(&net, 100_000, 17).unwrap();
        let zeros = ds.records().filter(|r| r[0] == 0).count() as f64 / 100_000.0;
        // 0.01 is more than six standard deviations of a fair binomial at this size.
        assert!((zeros - 0.5).abs() < 0.01, "{zeros}");
    }

    #[test]
    fn uniform_independent_loglik() {
        let n = 4;
        let schema = Schema::from_cardinalities(&vec![2; n]).unwrap();
        let cpts = (0..n).map(|_| Cpt { child_card: 2, parent_cards: vec![], probs: vec![0.5, 0.5] }).collect();
        let net = Network::empty(schema).with_cpts(cpts).unwrap();
        let ds = forward_sample(&net, 30, 1).unwrap();
        let ll = log_likelihood(&net, &ds).unwrap();
        assert!((ll + n as f64 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_chain_rule() {
        let net = random_network(&[3, 2, 2, 3, 2], 2, 21);
        let ds = forward_sample(&net, 300, 2).unwrap();
        let cpts = net.cpts().unwrap();
        let mut total = 0.0;
        for rec in ds.records() {
            let mut joint = 1.0;
            for node in 0..net.n_nodes() {
                let pa = net.parents()[node].to_vec();
                let mut u = 0;
                for &p in &pa {
                    u = u * net.schema().cardinality(p) + rec[p] as usize;
                }
                joint *= cpts[node].probs[u * net.schema().cardinality(node) + rec[node] as usize];
            }
            total += joint.ln();
        }
        let want = total / 300.0;
        assert!((log_likelihood(&net, &ds).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn ml_fit_loglik_equals_bic_likelihood_term() {
        let truth = random_network(&[2, 3, 2, 2], 2, 8);
        let ds = forward_sample(&truth, 400, 4).unwrap();
        let structure = truth.structure();
        let fitted = fit_parameters(&structure, &ds, 1e-13).unwrap();
        let ll = log_likelihood(&fitted, &ds).unwrap();
        let m = ds.n_records() as f64;
        let mut bic_ll = 0.0;
        for i in 0..4 {
            let table = ContingencyTable::from_records(&ds, i, &structure.parents()[i].to_vec());
            let q = table.n_parent_states();
            let r = table.child_card;
            let penalty = m.ln() / 2.0 * ((r - 1) * q) as f64;
            bic_ll += family_score(&table, &ScoreConfig::bic()) + penalty;
        }
        assert!((ll - bic_ll / m).abs() < 1e-8, "{ll} vs {}", bic_ll / m);
    }

    #[test]
    fn sampled_counts_converge() {
        let net = random_network(&[2, 3, 2], 1, 5);
        let m = 100_000;
        let ds = forward_sample(&net, m, 9).unwrap();
        // Marginal of node order[0] (a root) against its CPT.
        let root = net.topological_order()[0];
        let p = net.cpts().unwrap()[root].row(0).to_vec();
        for (x, &px) in p.iter().enumerate() {
            let freq = ds.records().filter(|r| r[root] as usize == x).count() as f64;
            let sd = (m as f64 * px * (1.0 - px)).sqrt();
            assert!((freq - m as f64 * px).abs() <= 3.0 * sd + 1.0, "x={x}");
        }
    }
}
