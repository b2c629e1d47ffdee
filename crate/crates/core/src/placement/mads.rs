use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{better, Evaluator};
use super::solvers::{check_cardinality, greedy_from, Placement, Solver};
use crate::error::{Error, Result};
use crate::gramian::GramianBank;

/// Settings for the swap-move direct search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadsOptions {
    pub seed: u64,
    /// Distinct placements the search may evaluate beyond the warm start.
    /// `None` means `200 g`.
    pub budget: Option<usize>,
    /// Poll-size growth factor, > 1.
    pub tau: u32,
    /// Random multi-swap directions drawn per poll once the poll size exceeds 1.
    pub poll_directions: usize,
    /// VNS restarts without improvement before declaring convergence.
    /// `None` means `2 g`.
    pub max_stagnation: Option<usize>,
    pub use_cache: bool,
}

impl Default for MadsOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: None,
            tau: 2,
            poll_directions: 16,
            max_stagnation: None,
            use_cache: true,
        }
    }
}

impl MadsOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }
}

/// Search state after the run. The mesh stays at its minimum of one swap;
/// the poll size moves between 1 and the largest feasible swap count.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub incumbent: Placement,
    pub mesh_size: usize,
    pub poll_size: usize,
    pub tau: u32,
    pub iteration: usize,
    /// Objective of every visited point, keyed by sorted site set.
    pub history: HashMap<Vec<usize>, f64>,
    /// Smallest poll size used at any iteration.
    pub min_poll_size: usize,
}

/// A swap move: remove `out`, add `inn` (both sorted, same length).
#[derive(Debug, Clone, PartialEq, Eq)]
struct Swap {
    out: Vec<usize>,
    inn: Vec<usize>,
}

fn apply(sites: &[usize], sw: &Swap) -> Vec<usize> {
    let mut next: Vec<usize> = sites
        .iter()
        .copied()
        .filter(|s| !sw.out.contains(s))
        .collect();
    next.extend_from_slice(&sw.inn);
    next.sort_unstable();
    next
}

struct Search<'a, 'b> {
    eval: &'b mut Evaluator<'a>,
    pinned: Vec<usize>,
    g: usize,
    budget: usize,
    base: usize,
    history: HashMap<Vec<usize>, f64>,
}

impl Search<'_, '_> {
    fn remaining(&self) -> usize {
        (self.base + self.budget).saturating_sub(self.eval.distinct())
    }

    fn free_in(&self, sites: &[usize]) -> Vec<usize> {
        sites
            .iter()
            .copied()
            .filter(|s| !self.pinned.contains(s))
            .collect()
    }

    fn free_out(&self, sites: &[usize]) -> Vec<usize> {
        (0..self.g).filter(|s| !sites.contains(s)).collect()
    }

    /// Evaluate candidate points in the given order and return the best
    /// improving one. `exhausted` is set when the budget cut the poll short.
    fn poll(
        &mut self,
        points: Vec<Vec<usize>>,
        incumbent: (f64, &[usize]),
    ) -> (Option<(f64, Vec<usize>)>, bool) {
        let allowance = self.remaining();
        let values = self.eval.evaluate_many(&points, allowance);
        let mut exhausted = false;
        let mut best: Option<(f64, Vec<usize>)> = None;
        for (p, v) in points.into_iter().zip(values) {
            let Some(v) = v else {
                exhausted = true;
                continue;
            };
            self.history.insert(p.clone(), v);
            let beats_incumbent = better((v, &p), incumbent);
            let beats_best = best
                .as_ref()
                .is_none_or(|(bv, bs)| better((v, &p), (*bv, bs)));
            if beats_incumbent && beats_best {
                best = Some((v, p));
            }
        }
        (best, exhausted)
    }

    fn single_swaps(&self, sites: &[usize]) -> Vec<Vec<usize>> {
        let out = self.free_in(sites);
        let inn = self.free_out(sites);
        let mut pts = Vec::with_capacity(out.len() * inn.len());
        for &o in &out {
            for &i in &inn {
                pts.push(apply(
                    sites,
                    &Swap {
                        out: vec![o],
                        inn: vec![i],
                    },
                ));
            }
        }
        pts
    }

    fn random_swap(&self, sites: &[usize], m: usize, rng: &mut ChaCha8Rng) -> Swap {
        let out_pool = self.free_in(sites);
        let in_pool = self.free_out(sites);
        let mut out: Vec<usize> = sample(rng, out_pool.len(), m)
            .into_iter()
            .map(|k| out_pool[k])
            .collect();
        let mut inn: Vec<usize> = sample(rng, in_pool.len(), m)
            .into_iter()
            .map(|k| in_pool[k])
            .collect();
        out.sort_unstable();
        inn.sort_unstable();
        Swap { out, inn }
    }

    /// Best-improvement single-swap descent from `start`. Returns the local
    /// optimum reached and whether the budget ran out.
    fn descend(&mut self, start: Vec<usize>, f_start: f64) -> (f64, Vec<usize>, bool) {
        let (mut f, mut s) = (f_start, start);
        loop {
            let pts = self.single_swaps(&s);
            let (best, exhausted) = self.poll(pts, (f, &s));
            match best {
                Some((v, p)) => {
                    f = v;
                    s = p;
                }
                None => return (f, s, exhausted),
            }
            if exhausted {
                return (f, s, true);
            }
        }
    }
}

/// Swap-move mesh adaptive direct search with VNS restarts, warm-started from
/// the greedy placement.
pub fn mads(bank: &GramianBank, k: usize, opts: &MadsOptions) -> Result<Placement> {
    mads_pinned(bank, &[], k, opts).map(|s| s.incumbent)
}

/// As [`mads`] but returns the final search state.
pub fn mads_state(bank: &GramianBank, k: usize, opts: &MadsOptions) -> Result<SearchState> {
    mads_pinned(bank, &[], k, opts)
}

pub(crate) fn mads_pinned(
    bank: &GramianBank,
    pinned: &[usize],
    k: usize,
    opts: &MadsOptions,
) -> Result<SearchState> {
    let g = bank.n_sites();
    check_cardinality(g, pinned, k)?;
    if opts.tau < 2 {
        return Err(Error::InvalidArgument(format!(
            "tau must exceed 1, got {}",
            opts.tau
        )));
    }
    let budget = opts.budget.unwrap_or(200 * g);
    let max_stagnation = opts.max_stagnation.unwrap_or(2 * g).max(1);
    let mut pinned = pinned.to_vec();
    pinned.sort_unstable();
    pinned.dedup();

    let mut eval = Evaluator::new(bank, opts.use_cache);
    let (start, f_start) = greedy_from(&mut eval, g, &pinned, k)?;
    let base = eval.distinct();
    let mut search = Search {
        eval: &mut eval,
        pinned,
        g,
        budget,
        base,
        history: HashMap::new(),
    };
    search.history.insert(start.clone(), f_start);

    let max_swaps = search.free_in(&start).len().min(g - k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut f, mut s) = (f_start, start);
    let mut poll_size = 1usize;
    let mut min_poll = 1usize;
    let mut iteration = 0usize;
    let mut strength = 2usize;
    let mut stagnation = 0usize;
    let mut converged = max_swaps == 0;

    while !converged && search.remaining() > 0 {
        iteration += 1;
        let pts = if poll_size == 1 {
            search.single_swaps(&s)
        } else {
            (0..opts.poll_directions)
                .map(|_| apply(&s, &search.random_swap(&s, poll_size, &mut rng)))
                .collect()
        };
        let (best, exhausted) = search.poll(pts, (f, &s));
        min_poll = min_poll.min(poll_size);
        if let Some((v, p)) = best {
            f = v;
            s = p;
            poll_size = (poll_size * opts.tau as usize).min(max_swaps);
            continue;
        }
        if exhausted {
            break;
        }
        if poll_size > 1 {
            poll_size = (poll_size / opts.tau as usize).max(1);
            continue;
        }
        // Local optimum for single swaps: perturb and descend.
        let j = strength.min(max_swaps).max(1);
        let kicked = apply(&s, &search.random_swap(&s, j, &mut rng));
        let (kv, exhausted) = {
            let vals = search
                .eval
                .evaluate_many(std::slice::from_ref(&kicked), search.remaining());
            (vals[0], vals[0].is_none())
        };
        if exhausted {
            break;
        }
        let kv = kv.expect("admitted");
        search.history.insert(kicked.clone(), kv);
        let (lv, ls, exhausted) = search.descend(kicked, kv);
        if better((lv, &ls), (f, &s)) {
            f = lv;
            s = ls;
            strength = 2;
            stagnation = 0;
        } else {
            strength = (strength + 1).min(k.max(2));
            stagnation += 1;
            if stagnation >= max_stagnation {
                converged = true;
            }
        }
        if exhausted {
            break;
        }
    }

    let evaluations = search.eval.distinct();
    let history = std::mem::take(&mut search.history);
    Ok(SearchState {
        incumbent: Placement::new(&s, g, f, Solver::Mads, evaluations, converged),
        mesh_size: 1,
        poll_size,
        tau: opts.tau,
        iteration,
        history,
        min_poll_size: min_poll,
    })
}

/// Keep the sensors in `pinned` and choose the rest with [`mads`].
pub fn incremental(
    bank: &GramianBank,
    pinned: &[usize],
    k_total: usize,
    opts: &MadsOptions,
) -> Result<Placement> {
    mads_pinned(bank, pinned, k_total, opts).map(|s| s.incumbent)
}
