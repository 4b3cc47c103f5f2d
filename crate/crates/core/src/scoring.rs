//! Decomposable family scores (BDe and BIC) in natural-log units.

use statrs::function::gamma::ln_gamma;

use crate::adtree::{AdTree, ContingencyTable};
use crate::error::{Error, Result};
use crate::parent_set::ParentSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// Bayesian-Dirichlet likelihood-equivalent score with a uniform prior.
    Bde,
    Bic,
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bde" | "bdeu" => Ok(ScoreKind::Bde),
            "bic" | "mdl" => Ok(ScoreKind::Bic),
            other => Err(Error::Config(format!("unknown score {other:?}"))),
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreKind::Bde => "bde",
            ScoreKind::Bic => "bic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    kind: ScoreKind,
    ess: f64,
}

impl ScoreConfig {
    pub const DEFAULT_ESS: f64 = 5.0;

    pub fn new(kind: ScoreKind, ess: f64) -> Result<Self> {
        if !(ess > 0.0 && ess.is_finite()) {
            return Err(Error::Config(format!("equivalent sample size must be positive, got {ess}")));
        }
        Ok(ScoreConfig { kind, ess })
    }

    pub fn bde(ess: f64) -> Result<Self> {
        ScoreConfig::new(ScoreKind::Bde, ess)
    }

    pub fn bic() -> Self {
        ScoreConfig {
            kind: ScoreKind::Bic,
            ess: Self::DEFAULT_ESS,
        }
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// Equivalent sample size; only meaningful for BDe.
    pub fn ess(&self) -> f64 {
        self.ess
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            kind: ScoreKind::Bde,
            ess: Self::DEFAULT_ESS,
        }
    }
}

/// A scored family: a child, its parents, and the family's score.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScore {
    pub child: usize,
    pub parents: ParentSet,
    pub value: f64,
}

pub fn family_score(table: &ContingencyTable, config: &ScoreConfig) -> f64 {
    match config.kind {
        ScoreKind::Bde => bde(table, config.ess),
        ScoreKind::Bic => bic(table),
    }
}

fn bde(table: &ContingencyTable, ess: f64) -> f64 {
    let r = table.child_card;
    let q = table.n_parent_states();
    let alpha_xu = ess / (r * q) as f64;
    let alpha_u = ess / q as f64;
    let lg_alpha_xu = ln_gamma(alpha_xu);
    let lg_alpha_u = ln_gamma(alpha_u);
    let mut score = 0.0;
    for u in 0..q {
        let row = table.row(u);
        let m_u: u64 = row.iter().sum();
        if m_u == 0 {
            continue;
        }
        score += lg_alpha_u - ln_gamma(alpha_u + m_u as f64);
        for &m_xu in row {
            if m_xu > 0 {
                score += ln_gamma(alpha_xu + m_xu as f64) - lg_alpha_xu;
            }
        }
    }
    score
}

fn bic(table: &ContingencyTable) -> f64 {
    let r = table.child_card;
    let q = table.n_parent_states();
    let mut loglik = 0.0;
    let mut total = 0u64;
    for u in 0..q {
        let row = table.row(u);
        let m_u: u64 = row.iter().sum();
        total += m_u;
        for &m_xu in row {
            if m_xu > 0 {
                loglik += m_xu as f64 * (m_xu as f64 / m_u as f64).ln();
            }
        }
    }
    let penalty = if total > 0 {
        (total as f64).ln() / 2.0 * ((r - 1) * q) as f64
    } else {
        0.0
    };
    loglik - penalty
}

/// Source of per-family scores.
pub trait FamilyScoreLookup {
    /// `None` when the family is not available (e.g. outside the candidate space).
    fn family_score(&self, child: usize, parents: &ParentSet) -> Option<f64>;
}

/// Scores any family on demand from an AD-tree, without caching.
pub struct AdTreeScorer<'a> {
    tree: &'a AdTree,
    config: ScoreConfig,
}

impl<'a> AdTreeScorer<'a> {
    pub fn new(tree: &'a AdTree, config: ScoreConfig) -> Self {
        AdTreeScorer { tree, config }
    }

    pub fn score(&self, child: usize, parents: &ParentSet) -> Result<f64> {
        let table = self.tree.contingency_table(child, &parents.to_vec())?;
        Ok(family_score(&table, &self.config))
    }
}

impl FamilyScoreLookup for AdTreeScorer<'_> {
    fn family_score(&self, child: usize, parents: &ParentSet) -> Option<f64> {
        self.score(child, parents).ok()
    }
}

/// Sum of family scores in ascending node order.
pub fn network_score(parents: &[ParentSet], scores: &impl FamilyScoreLookup) -> Result<f64> {
    parents.iter().enumerate().try_fold(0.0, |acc, (node, pa)| {
        scores
            .family_score(node, pa)
            .map(|s| acc + s)
            .ok_or_else(|| Error::MissingFamily {
                node,
                parents: pa.to_vec(),
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Schema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sequential predictive product of the Dirichlet-multinomial, record by record.
    fn polya_urn(data: &Dataset, child: usize, parents: &[usize], ess: f64) -> f64 {
        let cards = data.schema().cardinalities();
        let r = cards[child];
        let q: usize = parents.iter().map(|&p| cards[p]).product();
        let a_xu = ess / (r * q) as f64;
        let a_u = ess / q as f64;
        let mut n_xu = vec![0u64; r * q];
        let mut n_u = vec![0u64; q];
        let mut logp = 0.0;
        for rec in data.records() {
            let u = parents.iter().fold(0, |acc, &p| acc * cards[p] + rec[p] as usize);
            let x = rec[child] as usize;
            logp += ((a_xu + n_xu[u * r + x] as f64) / (a_u + n_u[u] as f64)).ln();
            n_xu[u * r + x] += 1;
            n_u[u] += 1;
        }
        logp
    }

    fn table_of(data: &Dataset, child: usize, parents: &[usize]) -> ContingencyTable {
        ContingencyTable::from_records(data, child, parents)
    }

    #[test]
    fn bde_single_binary_node() {
        let ds = Dataset::new(Schema::from_cardinalities(&[2]).unwrap(), vec![vec![0], vec![0], vec![1]]).unwrap();
        let s = family_score(&table_of(&ds, 0, &[]), &ScoreConfig::bde(5.0).unwrap());
        let want = (2.5f64 / 5.0 * (3.5 / 6.0) * (2.5 / 7.0)).ln();
        assert!((s - want).abs() < 1e-12, "{s} vs {want}");
        assert!((s - -2.26176).abs() < 1e-5);
    }

    #[test]
    fn bic_single_binary_node() {
        let ds = Dataset::new(Schema::from_cardinalities(&[2]).unwrap(), vec![vec![0], vec![0], vec![1]]).unwrap();
        let s = family_score(&table_of(&ds, 0, &[]), &ScoreConfig::bic());
        let want = 2.0 * (2.0f64 / 3.0).ln() + (1.0f64 / 3.0).ln() - 3.0f64.ln() / 2.0;
        assert!((s - want).abs() < 1e-12);
        assert!((s - -2.45885).abs() < 1e-5);
    }

    #[test]
    fn bde_of_empty_counts_is_zero() {
        let table = ContingencyTable {
            child_card: 3,
            parent_cards: vec![2, 2],
            counts: vec![0; 12],
        };
        assert_eq!(family_score(&table, &ScoreConfig::default()), 0.0);
    }

    #[test]
    fn rejects_bad_ess() {
        assert!(ScoreConfig::bde(0.0).is_err());
        assert!(ScoreConfig::bde(-1.0).is_err());
        assert!(ScoreConfig::bde(f64::NAN).is_err());
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..30u32 {
            // lnΓ(n) = ln((n-1)!)
            let want = fact.ln();
            let got = ln_gamma(n as f64);
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "n={n}: {got} vs {want}");
            fact *= n as f64;
        }
    }

    fn random_dataset(rng: &mut ChaCha8Rng, cards: &[usize], m: usize) -> Dataset {
        let rows = (0..m)
            .map(|_| cards.iter().map(|&c| rng.random_range(0..c as u32)).collect())
            .collect();
        Dataset::new(Schema::from_cardinalities(cards).unwrap(), rows).unwrap()
    }

    #[test]
    fn bde_equals_predictive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let cards: Vec<usize> = (0..4).map(|_| rng.random_range(2..5)).collect();
            let m = rng.random_range(1..120);
            let ds = random_dataset(&mut rng, &cards, m);
            let ess = rng.random_range(0.5..10.0);
            let parents: Vec<usize> = (1..4).filter(|_| rng.random_bool(0.5)).collect();
            let got = family_score(&table_of(&ds, 0, &parents), &ScoreConfig::bde(ess).unwrap());
            let want = polya_urn(&ds, 0, &parents, ess);
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn scores_ignore_record_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ds = random_dataset(&mut rng, &[3, 2, 4], 80);
        let mut idx: Vec<usize> = (0..80).collect();
        idx.reverse();
        idx.swap(3, 40);
        let shuffled = ds.subset(&idx);
        for cfg in [ScoreConfig::default(), ScoreConfig::bic()] {
            let a = family_score(&table_of(&ds, 2, &[0, 1]), &cfg);
            let b = family_score(&table_of(&shuffled, 2, &[0, 1]), &cfg);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn covered_edge_reversal_keeps_bde() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, &[2, 3, 2], 150);
        let cfg = ScoreConfig::bde(5.0).unwrap();
        let s = |c: usize, p: &[usize]| family_score(&table_of(&ds, c, p), &cfg);
        // A->B, A->C, B->C versus A->B, A->C, C->B (B->C is covered).
        let g1 = s(0, &[]) + s(1, &[0]) + s(2, &[0, 1]);
        let g2 = s(0, &[]) + s(2, &[0]) + s(1, &[0, 2]);
        assert!((g1 - g2).abs() < 1e-8, "{g1} vs {g2}");
        // A->B versus B->A on the marginal pair.
        assert!(((s(0, &[]) + s(1, &[0])) - (s(1, &[]) + s(0, &[1]))).abs() < 1e-8);
    }

    #[test]
    fn network_score_sums_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = random_dataset(&mut rng, &[2, 2, 3], 60);
        let tree = AdTree::with_defaults(&ds).unwrap();
        let scorer = AdTreeScorer::new(&tree, ScoreConfig::default());
        let empty = vec![ParentSet::empty(); 3];
        let want: f64 = (0..3).map(|i| scorer.score(i, &ParentSet::empty()).unwrap()).sum();
        assert_eq!(network_score(&empty, &scorer).unwrap(), want);

        let g = vec![ParentSet::empty(), ParentSet::from_ids([0]), ParentSet::from_ids([0, 1])];
        let cfg = ScoreConfig::default();
        let recomputed = family_score(&table_of(&ds, 0, &[]), &cfg)
            + family_score(&table_of(&ds, 1, &[0]), &cfg)
            + family_score(&table_of(&ds, 2, &[0, 1]), &cfg);
        assert_eq!(network_score(&g, &scorer).unwrap(), recomputed);

        let single = Dataset::new(Schema::from_cardinalities(&[2]).unwrap(), vec![vec![1]]).unwrap();
        let t1 = AdTree::with_defaults(&single).unwrap();
        let sc1 = AdTreeScorer::new(&t1, cfg);
        assert_eq!(
            network_score(&[ParentSet::empty()], &sc1).unwrap(),
            sc1.score(0, &ParentSet::empty()).unwrap()
        );
    }

    #[test]
    fn missing_family_names_node() {
        struct Nothing;
        impl FamilyScoreLookup for Nothing {
            fn family_score(&self, child: usize, _: &ParentSet) -> Option<f64> {
                (child == 0).then_some(-1.0)
            }
        }
        let err = network_score(&[ParentSet::empty(), ParentSet::empty()], &Nothing).unwrap_err();
        assert!(matches!(err, Error::MissingFamily { node: 1, .. }));
    }
}
