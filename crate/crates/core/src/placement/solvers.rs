use serde::{Deserialize, Serialize};

use super::objective::{better, indicator, Evaluator};
use crate::error::{Error, Result};
use crate::gramian::GramianBank;

/// Enumeration is refused above this many candidate sets.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exhaustive,
    Greedy,
    Mads,
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "greedy" => Ok(Self::Greedy),
            "mads" => Ok(Self::Mads),
            other => Err(Error::InvalidArgument(format!("unknown solver '{other}'"))),
        }
    }
}

/// A sensor placement and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub z: Vec<bool>,
    pub cardinality: usize,
    pub objective: f64,
    pub solver: Solver,
    /// Distinct placements whose objective was computed.
    pub evaluations: usize,
    pub converged: bool,
}

impl Placement {
    pub(crate) fn new(
        sites: &[usize],
        g: usize,
        objective: f64,
        solver: Solver,
        evaluations: usize,
        converged: bool,
    ) -> Self {
        Self {
            z: indicator(sites, g),
            cardinality: sites.len(),
            objective,
            solver,
            evaluations,
            converged,
        }
    }

    /// Selected generator positions, 0-based and ascending.
    pub fn sites(&self) -> Vec<usize> {
        super::objective::selected(&self.z)
    }

    /// Selected generator ids, 1-based.
    pub fn ids(&self) -> Vec<usize> {
        self.sites().into_iter().map(|k| k + 1).collect()
    }
}

pub(crate) fn check_cardinality(g: usize, pinned: &[usize], k: usize) -> Result<()> {
    if k == 0 || k > g || k < pinned.len() {
        return Err(Error::InfeasibleCardinality { k, g });
    }
    if let Some(&p) = pinned.iter().find(|&&p| p >= g) {
        return Err(Error::InvalidArgument(format!(
            "pinned generator {p} out of range"
        )));
    }
    Ok(())
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Visit every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Global optimum by enumeration.
pub fn exhaustive(bank: &GramianBank, k: usize) -> Result<Placement> {
    exhaustive_pinned(bank, &[], k)
}

pub(crate) fn exhaustive_pinned(
    bank: &GramianBank,
    pinned: &[usize],
    k: usize,
) -> Result<Placement> {
    let g = bank.n_sites();
    check_cardinality(g, pinned, k)?;
    let free: Vec<usize> = (0..g).filter(|s| !pinned.contains(s)).collect();
    let extra = k - pinned.len();
    let count = binomial(free.len(), extra);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::CombinatorialGuard {
            g,
            k,
            count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut candidates = Vec::with_capacity(count as usize);
    for_each_combination(free.len(), extra, |c| {
        let mut s: Vec<usize> = pinned
            .iter()
            .copied()
            .chain(c.iter().map(|&i| free[i]))
            .collect();
        s.sort_unstable();
        candidates.push(s);
    });
    let mut eval = Evaluator::new(bank, true);
    let values = eval.evaluate_many(&candidates, usize::MAX);
    let mut best: Option<(f64, &Vec<usize>)> = None;
    for (s, v) in candidates.iter().zip(values) {
        let v = v.expect("unbounded");
        if best.is_none_or(|(bv, bs)| better((v, s), (bv, bs))) {
            best = Some((v, s));
        }
    }
    let (v, s) = best.expect("at least one candidate");
    Ok(Placement::new(
        s,
        g,
        v,
        Solver::Exhaustive,
        eval.distinct(),
        true,
    ))
}

/// Add generators one at a time, each maximizing the new log-det.
///
/// Ties (including several `-inf` while the sum is still rank deficient) are
/// broken by a regularized log-det, then by the lowest generator position.
pub fn greedy(bank: &GramianBank, k: usize) -> Result<Placement> {
    let mut eval = Evaluator::new(bank, true);
    let (sites, v) = greedy_from(&mut eval, bank.n_sites(), &[], k)?;
    Ok(Placement::new(
        &sites,
        bank.n_sites(),
        v,
        Solver::Greedy,
        eval.distinct(),
        true,
    ))
}

pub(crate) fn greedy_from(
    eval: &mut Evaluator,
    g: usize,
    pinned: &[usize],
    k: usize,
) -> Result<(Vec<usize>, f64)> {
    check_cardinality(g, pinned, k)?;
    let mut current: Vec<usize> = pinned.to_vec();
    current.sort_unstable();
    while current.len() < k {
        let candidates: Vec<Vec<usize>> = (0..g)
            .filter(|s| !current.contains(s))
            .map(|s| {
                let mut c = current.clone();
                c.push(s);
                c.sort_unstable();
                c
            })
            .collect();
        let values = eval.evaluate_many(&candidates, usize::MAX);
        let mut best: Option<(f64, f64, &Vec<usize>)> = None;
        for (c, v) in candidates.iter().zip(values) {
            let v = v.expect("unbounded");
            let reg = eval.regularized(c);
            let wins = match best {
                None => true,
                Some((bv, breg, _)) => v > bv || (v == bv && reg > breg),
            };
            if wins {
                best = Some((v, reg, c));
            }
        }
        current = best.expect("free generator available").2.clone();
    }
    let v = eval.evaluate_one(&current);
    Ok((current, v))
}
