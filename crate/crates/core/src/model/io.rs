//! Line-oriented network files.
//!
//! ```text
//! # comment
//! var <name> <cardinality> [<state label> ...]
//! parents <child> <parent> ...
//! cpt <child> <parent values ...> <P(child = 0 | ...)> ... <P(child = r-1 | ...)>
//! ```
//!
//! Parent values on a `cpt` line follow the order of that child's `parents`
//! line. A file either gives every CPT row of every node or no `cpt` lines.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Cpt, Network, ROW_SUM_TOLERANCE};
use crate::data::{Schema, Variable};
use crate::error::{Error, Result};
use crate::parent_set::ParentSet;

fn default_labels(var: &Variable) -> bool {
    var.states.iter().enumerate().all(|(i, s)| *s == i.to_string())
}

pub fn format_network(network: &Network) -> Result<String> {
    let schema = network.schema();
    let mut out = String::from("# bnsearch network\n");
    for var in schema.variables() {
        let _ = write!(out, "var {} {}", var.name, var.cardinality());
        if !default_labels(var) {
            if let Some(bad) = var.states.iter().find(|s| s.chars().any(char::is_whitespace)) {
                return Err(Error::Network(format!("state label {bad:?} contains whitespace")));
            }
            for s in &var.states {
                let _ = write!(out, " {s}");
            }
        }
        out.push('\n');
    }
    for (i, pa) in network.parents().iter().enumerate() {
        let _ = write!(out, "parents {}", schema.variable(i).name);
        for p in pa.iter() {
            let _ = write!(out, " {}", schema.variable(p).name);
        }
        out.push('\n');
    }
    if let Some(cpts) = network.cpts() {
        for (i, cpt) in cpts.iter().enumerate() {
            for u in 0..cpt.n_parent_states() {
                let _ = write!(out, "cpt {}", schema.variable(i).name);
                let mut rest = u;
                let mut digits = vec![0usize; cpt.parent_cards.len()];
                for (d, &c) in digits.iter_mut().zip(&cpt.parent_cards).rev() {
                    *d = rest % c;
                    rest /= c;
                }
                for d in digits {
                    let _ = write!(out, " {d}");
                }
                for p in cpt.row(u) {
                    let _ = write!(out, " {p}");
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn save_network(path: impl AsRef<Path>, network: &Network) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_network(network)?).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    parse_network(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn parse_network(text: &str) -> Result<Network> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, t)| !t.is_empty() && !t[0].starts_with('#'))
        .collect();

    let mut variables = Vec::new();
    for (no, t) in lines.iter().filter(|(_, t)| t[0] == "var") {
        if t.len() < 3 {
            return Err(Error::parse(*no, "var needs a name and a cardinality"));
        }
        let card: usize = t[2]
            .parse()
            .map_err(|_| Error::parse(*no, format!("bad cardinality {:?}", t[2])))?;
        let var = if t.len() == 3 {
            Variable::with_cardinality(t[1], card)
        } else if t.len() == 3 + card {
            Variable::new(t[1], t[3..].iter().map(|s| s.to_string()).collect())
        } else {
            return Err(Error::parse(*no, format!("expected {card} state labels, found {}", t.len() - 3)));
        };
        variables.push(var);
    }
    let schema = Schema::new(variables).map_err(|e| Error::parse(0, e.to_string()))?;
    let n = schema.len();
    if n == 0 {
        return Err(Error::parse(0, "no variables declared"));
    }
    let lookup = |no: usize, name: &str| {
        schema
            .index_of(name)
            .ok_or_else(|| Error::parse(no, format!("unknown variable {name:?}")))
    };

    // Parents in file order, per node.
    let mut file_parents: Vec<Option<Vec<usize>>> = vec![None; n];
    for (no, t) in lines.iter().filter(|(_, t)| t[0] == "parents") {
        if t.len() < 2 {
            return Err(Error::parse(*no, "parents needs a child"));
        }
        let child = lookup(*no, t[1])?;
        if file_parents[child].is_some() {
            return Err(Error::parse(*no, format!("second parents line for {}", t[1])));
        }
        let pa = t[2..].iter().map(|p| lookup(*no, p)).collect::<Result<Vec<_>>>()?;
        if pa.contains(&child) {
            return Err(Error::parse(*no, format!("{} is its own parent", t[1])));
        }
        if ParentSet::from_ids(pa.iter().copied()).len() != pa.len() {
            return Err(Error::parse(*no, "repeated parent"));
        }
        file_parents[child] = Some(pa);
    }
    let file_parents: Vec<Vec<usize>> = file_parents.into_iter().map(Option::unwrap_or_default).collect();
    let parents: Vec<ParentSet> = file_parents
        .iter()
        .map(|p| ParentSet::from_ids(p.iter().copied()))
        .collect();
    let network = Network::new(schema.clone(), parents)?;

    let mut rows: Vec<HashMap<usize, Vec<f64>>> = vec![HashMap::new(); n];
    let mut any_cpt = false;
    for (no, t) in lines.iter().filter(|(_, t)| t[0] == "cpt") {
        any_cpt = true;
        if t.len() < 2 {
            return Err(Error::parse(*no, "cpt needs a child"));
        }
        let child = lookup(*no, t[1])?;
        let in_file = &file_parents[child];
        let r = schema.cardinality(child);
        if t.len() != 2 + in_file.len() + r {
            return Err(Error::parse(
                *no,
                format!("expected {} parent values and {r} probabilities", in_file.len()),
            ));
        }
        let mut value_of = HashMap::new();
        for (&p, tok) in in_file.iter().zip(&t[2..2 + in_file.len()]) {
            let v: usize = tok
                .parse()
                .ok()
                .filter(|&v| v < schema.cardinality(p))
                .ok_or_else(|| Error::parse(*no, format!("bad value {tok:?} for parent {}", schema.variable(p).name)))?;
            value_of.insert(p, v);
        }
        let u = network.parents()[child]
            .iter()
            .fold(0usize, |acc, p| acc * schema.cardinality(p) + value_of[&p]);
        let probs = t[2 + in_file.len()..]
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|p| p.is_finite() && *p >= 0.0))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::parse(*no, "bad probability"))?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::parse(*no, format!("probabilities sum to {sum}")));
        }
        if rows[child].insert(u, probs).is_some() {
            return Err(Error::parse(*no, "repeated CPT row"));
        }
    }
    if !any_cpt {
        return Ok(network);
    }

    let mut cpts = Vec::with_capacity(n);
    for (i, node_rows) in rows.iter_mut().enumerate() {
        let parent_cards: Vec<usize> = network.parents()[i].iter().map(|p| schema.cardinality(p)).collect();
        let q: usize = parent_cards.iter().product();
        if node_rows.len() != q {
            return Err(Error::parse(
                0,
                format!("node {} has {} of {q} CPT rows", schema.variable(i).name, node_rows.len()),
            ));
        }
        let mut probs = Vec::with_capacity(q * schema.cardinality(i));
        for u in 0..q {
            probs.extend(node_rows.remove(&u).expect("row count checked"));
        }
        cpts.push(Cpt {
            child_card: schema.cardinality(i),
            parent_cards,
            probs,
        });
    }
    network.with_cpts(cpts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_network;

    #[test]
    fn round_trip_is_exact() {
        let net = random_network(&[2, 3, 4, 2, 3], 3, 12);
        let text = format_network(&net).unwrap();
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
        let structure = net.structure();
        assert_eq!(parse_network(&format_network(&structure).unwrap()).unwrap(), structure);
    }

    #[test]
    fn reads_parents_in_file_order() {
        let text = "var a 2\nvar b 2\nvar c 2\nparents c b a\nparents a\nparents b\n\
                    cpt a 0.5 0.5\ncpt b 0.25 0.75\n\
                    cpt c 0 0 1 0\ncpt c 0 1 0.5 0.5\ncpt c 1 0 0 1\ncpt c 1 1 0.125 0.875\n";
        let net = parse_network(text).unwrap();
        // Canonical parent order is (a, b); the file listed b first.
        let cpt = &net.cpts().unwrap()[2];
        assert_eq!(cpt.row(0b00), &[1.0, 0.0]);
        assert_eq!(cpt.row(0b01), &[0.0, 1.0]);
        assert_eq!(cpt.row(0b10), &[0.5, 0.5]);
        assert_eq!(cpt.row(0b11), &[0.125, 0.875]);
    }

    #[test]
    fn labels_survive() {
        let text = "var x 2 lo hi\nvar y 3\nparents y x\n";
        let net = parse_network(text).unwrap();
        assert_eq!(net.schema().variable(0).states, vec!["lo", "hi"]);
        assert_eq!(parse_network(&format_network(&net).unwrap()).unwrap(), net);
    }

    #[test]
    fn rejects_cycles() {
        let text = "var a 2\nvar b 2\nparents a b\nparents b a\n";
        assert!(matches!(parse_network(text), Err(Error::Cyclic(_))));
    }

    #[test]
    fn rejects_bad_row_sum() {
        let text = "var a 2\nparents a\ncpt a 0.5 0.4\n";
        match parse_network(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_line_numbers() {
        let text = "var a 2\n# note\nparents a zzz\n";
        assert!(matches!(parse_network(text), Err(Error::Parse { line: 3, .. })));
        let missing = "var a 2\nvar b 2\nparents b a\ncpt a 0.5 0.5\ncpt b 0 0.5 0.5\n";
        assert!(parse_network(missing).is_err());
    }
}
