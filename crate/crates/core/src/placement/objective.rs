use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gramian::{logdet, GramianBank};

/// `log det (sum_{z_i = 1} W_i)`, `-inf` when singular or empty.
pub fn evaluate(z: &[bool], bank: &GramianBank) -> Result<f64> {
    if z.len() != bank.n_sites() {
        return Err(Error::Dimension {
            expected: bank.n_sites(),
            got: z.len(),
        });
    }
    let sites = selected(z);
    Ok(evaluate_sites(&sites, bank))
}

pub(crate) fn evaluate_sites(sites: &[usize], bank: &GramianBank) -> f64 {
    if sites.is_empty() {
        return f64::NEG_INFINITY;
    }
    logdet(&bank.sum(sites)).unwrap_or(f64::NEG_INFINITY)
}

pub fn selected(z: &[bool]) -> Vec<usize> {
    z.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(k, _)| k)
        .collect()
}

pub fn indicator(sites: &[usize], g: usize) -> Vec<bool> {
    let mut z = vec![false; g];
    for &s in sites {
        z[s] = true;
    }
    z
}

/// Strict total order used everywhere: larger objective first, then the
/// lexicographically smaller (sorted) site set.
pub fn better(a: (f64, &[usize]), b: (f64, &[usize])) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Objective evaluations with a visited-point history and an optional value cache.
///
/// The history counts distinct points whether or not values are cached, so a
/// budget means the same thing in both modes.
pub(crate) struct Evaluator<'a> {
    bank: &'a GramianBank,
    visited: HashSet<Vec<usize>>,
    cache: Option<HashMap<Vec<usize>, f64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(bank: &'a GramianBank, use_cache: bool) -> Self {
        Self {
            bank,
            visited: HashSet::new(),
            cache: use_cache.then(HashMap::new),
        }
    }

    pub fn distinct(&self) -> usize {
        self.visited.len()
    }

    /// Values for `points` (sorted site sets) in input order. New points are
    /// evaluated in parallel; at most `allowance` of them are admitted and the
    /// rest come back as `None`.
    pub fn evaluate_many(&mut self, points: &[Vec<usize>], allowance: usize) -> Vec<Option<f64>> {
        let mut admitted = HashSet::new();
        let mut plan = Vec::with_capacity(points.len());
        for p in points {
            let fresh = !self.visited.contains(p);
            if fresh && !admitted.contains(p) {
                if admitted.len() >= allowance {
                    plan.push(false);
                    continue;
                }
                admitted.insert(p.clone());
            }
            plan.push(true);
        }
        let bank = self.bank;
        let cached = |p: &Vec<usize>| self.cache.as_ref().and_then(|c| c.get(p).copied());
        let values: Vec<Option<f64>> = points
            .par_iter()
            .zip(plan.par_iter())
            .map(|(p, &ok)| ok.then(|| cached(p).unwrap_or_else(|| evaluate_sites(p, bank))))
            .collect();
        for (p, v) in points.iter().zip(&values) {
            if let Some(v) = v {
                self.visited.insert(p.clone());
                if let Some(c) = self.cache.as_mut() {
                    c.insert(p.clone(), *v);
                }
            }
        }
        values
    }

    pub fn evaluate_one(&mut self, sites: &[usize]) -> f64 {
        self.evaluate_many(&[sites.to_vec()], usize::MAX)[0].expect("unbounded allowance")
    }

    /// `log det(W_S + eps I)` with `eps` tied to the bank scale; ranks
    /// rank-deficient sets that all score `-inf`.
    pub fn regularized(&self, sites: &[usize]) -> f64 {
        let n = self.bank.dim();
        let all: Vec<usize> = (0..self.bank.n_sites()).collect();
        let scale = self.bank.sum(&all).trace() / n.max(1) as f64;
        let eps = 1e-9 * scale.max(f64::MIN_POSITIVE);
        let w = self.bank.sum(sites) + DMatrix::<f64>::identity(n, n) * eps;
        logdet(&w).unwrap_or(f64::NEG_INFINITY)
    }
}
