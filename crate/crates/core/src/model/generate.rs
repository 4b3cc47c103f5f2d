//! Synthetic networks for experiments.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{Cpt, Network};
use crate::data::{Schema, Variable};
use crate::parent_set::ParentSet;

/// Random DAG: a shuffled order, each node taking a uniform number of
/// parents (up to `max_in_degree`) uniformly among its predecessors.
pub fn random_structure<R: Rng>(n: usize, max_in_degree: usize, rng: &mut R) -> Vec<ParentSet> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parents = vec![ParentSet::empty(); n];
    for (pos, &node) in order.iter().enumerate() {
        let k = rng.random_range(0..=max_in_degree.min(pos));
        let chosen = order[..pos].choose_multiple(rng, k).copied();
        parents[node] = ParentSet::from_ids(chosen);
    }
    parents
}

/// Each CPT row drawn from a flat Dirichlet (normalised unit exponentials).
pub fn random_cpts<R: Rng>(schema: &Schema, parents: &[ParentSet], rng: &mut R) -> Vec<Cpt> {
    parents
        .iter()
        .enumerate()
        .map(|(i, pa)| {
            let r = schema.cardinality(i);
            let parent_cards: Vec<usize> = pa.iter().map(|p| schema.cardinality(p)).collect();
            let q: usize = parent_cards.iter().product();
            let mut probs = Vec::with_capacity(r * q);
            for _ in 0..q {
                let draws: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = draws.iter().sum();
                probs.extend(draws.iter().map(|d| d / total));
            }
            Cpt {
                child_card: r,
                parent_cards,
                probs,
            }
        })
        .collect()
}

/// Random structure and CPTs over variables `c0..` with the given cardinalities.
pub fn random_network(cards: &[usize], max_in_degree: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::from_cardinalities(cards).expect("cardinalities must be at least 2");
    let parents = random_structure(cards.len(), max_in_degree, &mut rng);
    let cpts = random_cpts(&schema, &parents, &mut rng);
    Network::new(schema, parents)
        .and_then(|n| n.with_cpts(cpts))
        .expect("generated network is valid")
}

/// (name, cardinality, parents) for the 37-node ICU monitoring network
/// (46 edges, maximum in-degree 4).
const ALARM: &[(&str, usize, &[&str])] = &[
    ("HISTORY", 2, &["LVFAILURE"]),
    ("CVP", 3, &["LVEDVOLUME"]),
    ("PCWP", 3, &["LVEDVOLUME"]),
    ("HYPOVOLEMIA", 2, &[]),
    ("LVEDVOLUME", 3, &["HYPOVOLEMIA", "LVFAILURE"]),
    ("LVFAILURE", 2, &[]),
    ("STROKEVOLUME", 3, &["HYPOVOLEMIA", "LVFAILURE"]),
    ("ERRLOWOUTPUT", 2, &[]),
    ("HRBP", 3, &["ERRLOWOUTPUT", "HR"]),
    ("HREKG", 3, &["ERRCAUTER", "HR"]),
    ("ERRCAUTER", 2, &[]),
    ("HRSAT", 3, &["ERRCAUTER", "HR"]),
    ("INSUFFANESTH", 2, &[]),
    ("ANAPHYLAXIS", 2, &[]),
    ("TPR", 3, &["ANAPHYLAXIS"]),
    ("EXPCO2", 4, &["ARTCO2", "VENTLUNG"]),
    ("KINKEDTUBE", 2, &[]),
    ("MINVOL", 4, &["INTUBATION", "VENTLUNG"]),
    ("FIO2", 2, &[]),
    ("PVSAT", 3, &["FIO2", "VENTALV"]),
    ("SAO2", 3, &["PVSAT", "SHUNT"]),
    ("PAP", 3, &["PULMEMBOLUS"]),
    ("PULMEMBOLUS", 2, &[]),
    ("SHUNT", 2, &["INTUBATION", "PULMEMBOLUS"]),
    ("INTUBATION", 3, &[]),
    ("PRESS", 4, &["INTUBATION", "KINKEDTUBE", "VENTTUBE"]),
    ("DISCONNECT", 2, &[]),
    ("MINVOLSET", 3, &[]),
    ("VENTMACH", 4, &["MINVOLSET"]),
    ("VENTTUBE", 4, &["DISCONNECT", "VENTMACH"]),
    ("VENTLUNG", 4, &["INTUBATION", "KINKEDTUBE", "VENTTUBE"]),
    ("VENTALV", 4, &["INTUBATION", "VENTLUNG"]),
    ("ARTCO2", 3, &["VENTALV"]),
    ("CATECHOL", 2, &["ARTCO2", "INSUFFANESTH", "SAO2", "TPR"]),
    ("HR", 3, &["CATECHOL"]),
    ("CO", 3, &["HR", "STROKEVOLUME"]),
    ("BP", 3, &["CO", "TPR"]),
];

/// Topology and cardinalities of the ALARM network, without parameters.
pub fn alarm_structure() -> Network {
    let schema = Schema::new(
        ALARM
            .iter()
            .map(|(name, card, _)| Variable::with_cardinality(*name, *card))
            .collect(),
    )
    .expect("alarm schema is valid");
    let parents = ALARM
        .iter()
        .map(|(_, _, pa)| {
            ParentSet::from_ids(pa.iter().map(|p| schema.index_of(p).expect("known alarm node")))
        })
        .collect();
    Network::new(schema, parents).expect("alarm structure is acyclic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_acyclic;

    #[test]
    fn alarm_shape() {
        let net = alarm_structure();
        assert_eq!(net.n_nodes(), 37);
        assert_eq!(net.edge_count(), 46);
        assert_eq!(net.max_in_degree(), 4);
        let mean_card = net.schema().cardinalities().iter().sum::<usize>() as f64 / 37.0;
        assert!((mean_card - 2.8).abs() < 0.05);
    }

    #[test]
    fn random_structures_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_structure(30, 3, &mut rng);
            assert!(is_acyclic(&p));
            assert!(p.iter().all(|s| s.len() <= 3));
        }
        let net = random_network(&[2, 3, 4, 2], 2, 9);
        assert!(net.cpts().is_some());
        assert_eq!(net, random_network(&[2, 3, 4, 2], 2, 9));
    }
}
