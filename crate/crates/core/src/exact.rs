//! Exhaustive ground truth for small instances, plus diagnostics that label
//! agents by how their optimal bundle relates to a solver trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{approx_eq, at_least, at_most};
use crate::rng::SeededRng;
use crate::solver::{Allocation, SolveTrace};
use crate::valuations::{Bundle, CappedView, Instance, PriceVector, XosValuation};

/// Default cap on the number of assignments enumerated.
pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Largest good count accepted by exhaustive demand and subset searches.
pub const MAX_SUBSET_GOODS: usize = 20;

const CHUNK: u64 = 1 << 14;

/// Maximizes `score` over all `bins^m` assignments of goods to bins, in base
/// `bins` counting order with good 0 as the most significant digit. Returns
/// the first (lexicographically smallest) maximizer.
fn enumerate<F>(bins: usize, m: usize, budget: u64, score: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let required = (bins as f64).powi(m as i32);
    if required > budget as f64 {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let total = (bins as u64).pow(m as u32);
    let chunks = total.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut digits = vec![0; m];
            let mut rest = start;
            for d in digits.iter_mut().rev() {
                *d = (rest % bins as u64) as usize;
                rest /= bins as u64;
            }
            let mut best = (f64::NEG_INFINITY, start);
            for index in start..end {
                let s = score(&digits);
                if s > best.0 {
                    best = (s, index);
                }
                for d in digits.iter_mut().rev() {
                    *d += 1;
                    if *d < bins {
                        break;
                    }
                    *d = 0;
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let index = if best.1 == u64::MAX { 0 } else { best.1 };
    let mut digits = vec![0; m];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = (rest % bins as u64) as usize;
        rest /= bins as u64;
    }
    Ok((digits, best.0))
}

fn bundles_from(digits: &[usize], n: usize) -> Vec<Bundle> {
    let mut bundles = vec![Bundle::new(); n];
    for (g, &a) in digits.iter().enumerate() {
        if a < n {
            bundles[a].insert(g);
        }
    }
    bundles
}

fn sum_of_logs(inst: &Instance, digits: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, v) in inst.valuations().iter().enumerate() {
        let value = v.value_of(digits.iter().enumerate().filter(|(_, &a)| a == i).map(|(g, _)| g));
        if value <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += value.ln();
    }
    total
}

/// Optimal NSW over every complete assignment, within [`DEFAULT_BUDGET`].
pub fn brute_force_nsw(inst: &Instance) -> Result<(Allocation, f64)> {
    brute_force_nsw_with_budget(inst, DEFAULT_BUDGET)
}

pub fn brute_force_nsw_with_budget(inst: &Instance, budget: u64) -> Result<(Allocation, f64)> {
    let n = inst.n();
    let (digits, log_sum) = enumerate(n, inst.m(), budget, |d| sum_of_logs(inst, d))?;
    let opt = if log_sum.is_finite() {
        (log_sum / n as f64).exp()
    } else {
        0.0
    };
    Ok((Allocation { bundles: bundles_from(&digits, n) }, opt))
}

/// Optimal NSW by dynamic programming over subsets of goods, for instances
/// too large to enumerate assignment by assignment. Work grows as `n·3^m`.
pub fn optimal_nsw_subsets(inst: &Instance) -> Result<(Allocation, f64)> {
    let (n, m) = (inst.n(), inst.m());
    if m > MAX_SUBSET_GOODS {
        return Err(Error::invalid(format!(
            "subset search supports at most {MAX_SUBSET_GOODS} goods, got {m}"
        )));
    }
    let full = (1usize << m) - 1;
    let log_values: Vec<Vec<f64>> = inst
        .valuations()
        .par_iter()
        .map(|v| {
            (0..=full)
                .map(|mask| {
                    let value = v.value_of((0..m).filter(|g| mask >> g & 1 == 1));
                    if value > 0.0 {
                        value.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect();

    // layer[k][S]: best sum of logs giving S to agents 0..=k; choice[k][S]: agent k's part.
    let mut layers: Vec<Vec<f64>> = vec![log_values[0].clone()];
    let mut choices: Vec<Vec<usize>> = vec![(0..=full).collect()];
    for k in 1..n {
        let prev = &layers[k - 1];
        let own = &log_values[k];
        let (layer, choice): (Vec<f64>, Vec<usize>) = (0..=full)
            .into_par_iter()
            .map(|s| {
                let mut best = (f64::NEG_INFINITY, 0);
                let mut t = s;
                loop {
                    let value = own[t] + prev[s ^ t];
                    if value > best.0 {
                        best = (value, t);
                    }
                    if t == 0 {
                        break;
                    }
                    t = (t - 1) & s;
                }
                best
            })
            .unzip();
        layers.push(layer);
        choices.push(choice);
    }

    let mut bundles = vec![Bundle::new(); n];
    let mut s = full;
    for k in (0..n).rev() {
        let t = if k == 0 { s } else { choices[k][s] };
        bundles[k] = (0..m).filter(|g| t >> g & 1 == 1).collect();
        s ^= t;
    }
    let log_sum = layers[n - 1][full];
    let opt = if log_sum.is_finite() {
        (log_sum / n as f64).exp()
    } else {
        bundles = vec![Bundle::new(); n];
        bundles[0] = inst.all_goods();
        0.0
    };
    Ok((Allocation { bundles }, opt))
}

/// Maximum (uncapped) social welfare `Σ v_i(A_i)` over complete assignments.
pub fn brute_force_sw(inst: &Instance) -> Result<(Allocation, f64)> {
    brute_force_sw_with_budget(inst, DEFAULT_BUDGET)
}

pub fn brute_force_sw_with_budget(inst: &Instance, budget: u64) -> Result<(Allocation, f64)> {
    let n = inst.n();
    let (digits, best) = enumerate(n, inst.m(), budget, |d| {
        inst.valuations()
            .iter()
            .enumerate()
            .map(|(i, v)| v.value_of(d.iter().enumerate().filter(|(_, &a)| a == i).map(|(g, _)| g)))
            .sum()
    })?;
    Ok((Allocation { bundles: bundles_from(&digits, n) }, best))
}

/// Maximum capped social welfare `Σ min(1/√n, β_j·v_j(A_j))` over all
/// assignments where each good goes to an agent or stays unassigned.
pub fn brute_force_capped_sw(inst: &Instance, betas: &[f64]) -> Result<(Allocation, f64)> {
    brute_force_capped_sw_with_budget(inst, betas, DEFAULT_BUDGET)
}

pub fn brute_force_capped_sw_with_budget(
    inst: &Instance,
    betas: &[f64],
    budget: u64,
) -> Result<(Allocation, f64)> {
    let n = inst.n();
    if betas.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} scaling factors for {n} agents",
            betas.len()
        )));
    }
    let views: Vec<CappedView<'_>> = inst
        .valuations()
        .iter()
        .zip(betas)
        .map(|(v, &b)| CappedView::new(v, b, n))
        .collect::<Result<_>>()?;
    let (digits, best) = enumerate(n + 1, inst.m(), budget, |d| {
        views
            .iter()
            .enumerate()
            .map(|(i, view)| {
                view.value_of(d.iter().enumerate().filter(|(_, &a)| a == i).map(|(g, _)| g))
            })
            .sum()
    })?;
    Ok((Allocation { bundles: bundles_from(&digits, n) }, best))
}

/// Exhaustive demand: maximizes `v(S) − p(S)` over all `2^m` bundles.
/// Surpluses equal within tolerance count as ties, resolved toward the
/// smaller bundle and then the lexicographically smaller one.
pub fn brute_force_demand(v: &XosValuation, prices: &PriceVector) -> Result<Bundle> {
    let m = v.arity();
    if m > MAX_SUBSET_GOODS {
        return Err(Error::invalid(format!(
            "exhaustive demand supports at most {MAX_SUBSET_GOODS} goods, got {m}"
        )));
    }
    if prices.len() != m {
        return Err(Error::DimensionMismatch(format!("{} prices for {m} goods", prices.len())));
    }
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    for mask in 1usize..(1 << m) {
        let goods: Vec<usize> = (0..m).filter(|g| mask >> g & 1 == 1).collect();
        let price: f64 = goods.iter().map(|&g| prices.get(g)).sum();
        if price.is_infinite() {
            continue;
        }
        let surplus = v.value_of(goods.iter().copied()) - price;
        let better = if approx_eq(surplus, best.0) {
            (goods.len(), &goods) < (best.1.len(), &best.1)
        } else {
            surplus > best.0
        };
        if better {
            best = (surplus, goods);
        }
    }
    Ok(best.1.into_iter().collect())
}

/// `g*_i`: the most valuable single good of each bundle, lowest index on
/// ties; `None` for an empty bundle.
pub fn best_goods(inst: &Instance, alloc: &Allocation) -> Vec<Option<usize>> {
    alloc
        .bundles
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let v = inst.valuation(i);
            b.iter()
                .copied()
                .fold(None, |best: Option<usize>, g| match best {
                    Some(h) if v.single(h) >= v.single(g) => Some(h),
                    _ => Some(g),
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    T1,
    T2,
    T3,
}

/// Labels of one agent. `in_p` is set for `T2` agents only, `in_u` for
/// agents in `P̄ ∪ T3`, `in_b` for agents in `Ū`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLabel {
    pub tier: Tier,
    pub in_p: Option<bool>,
    pub in_u: Option<bool>,
    pub in_b: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentClassification {
    pub labels: Vec<AgentLabel>,
    /// `|T1 ∪ P ∪ U| ≥ n/27`.
    pub many_well_served: bool,
    /// `|Ū| ≥ 26n/27`.
    pub mostly_unserved: bool,
    /// Thresholds are asymptotic; results for `n < 16` are only indicative.
    pub small_n: bool,
}

/// Constant in the threshold for `B`.
pub const B_CONSTANT: f64 = 1.0 / 22_000.0;

impl AgentClassification {
    pub fn count<F: Fn(&AgentLabel) -> bool>(&self, pred: F) -> usize {
        self.labels.iter().filter(|l| pred(l)).count()
    }
}

/// Labels each agent from its optimal bundle `N_i` and the trace of a run.
pub fn classify_agents(
    inst: &Instance,
    optimal: &Allocation,
    trace: &SolveTrace,
) -> Result<AgentClassification> {
    let n = inst.n();
    if optimal.n() != n || trace.x.n() != n || trace.y.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "classification needs {n} bundles in the allocation and the trace"
        )));
    }
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let log_n = nf.ln().max(1.0);
    let gstar = best_goods(inst, optimal);
    let mut reserved = trace.kept.clone();
    reserved.extend(trace.pi_goods());

    let labels: Vec<AgentLabel> = (0..n)
        .map(|i| {
            let v = inst.valuation(i);
            let whole = v.value(&optimal.bundles[i]);
            let top = gstar[i].map_or(0.0, |g| v.single(g));
            let tier = if at_least(top, whole / (256.0 * sqrt_n)) {
                Tier::T1
            } else if at_least(top, whole / (16.0 * nf * log_n)) {
                Tier::T2
            } else {
                Tier::T3
            };
            let in_p = (tier == Tier::T2).then(|| {
                let part: Bundle = optimal.bundles[i].intersection(&reserved).copied().collect();
                at_least(v.value(&part), whole / 16.0)
            });
            let in_u = (tier == Tier::T3 || in_p == Some(false)).then(|| {
                let mut held = trace.x.bundles[i].clone();
                held.extend(trace.pi.good_of(i));
                at_least(v.value(&held), whole / (4.0 * sqrt_n))
            });
            let in_b = (in_u == Some(false))
                .then(|| at_least(v.value(&trace.y.bundles[i]), B_CONSTANT / sqrt_n * whole));
            AgentLabel { tier, in_p, in_u, in_b }
        })
        .collect();

    let served = labels
        .iter()
        .filter(|l| l.tier == Tier::T1 || l.in_p == Some(true) || l.in_u == Some(true))
        .count();
    let unserved = labels.iter().filter(|l| l.in_u == Some(false)).count();
    Ok(AgentClassification {
        labels,
        many_well_served: served as f64 >= nf / 27.0,
        mostly_unserved: unserved as f64 >= 26.0 * nf / 27.0,
        small_n: n < 16,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    /// Fraction of trials with `v(N̄ ∩ R) ≤ v(N̄)/3`.
    pub frequency: f64,
    /// The bundle is empty or worthless, so every trial fails trivially.
    pub degenerate: bool,
    /// `exp(−√n/18)`.
    pub bound: f64,
    pub trials: usize,
}

/// Monte Carlo estimate of how often a uniformly random half of `nbar`
/// keeps at most a third of its value. Requires every good of `nbar` to be
/// worth at most `v(nbar)/√n`.
pub fn concentration_experiment(
    v: &XosValuation,
    nbar: &Bundle,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationResult> {
    if n == 0 || trials == 0 {
        return Err(Error::invalid("agent count and trial count must be positive"));
    }
    crate::valuations::check_bundle(nbar, v.arity())?;
    let whole = v.value(nbar);
    let limit = whole / (n as f64).sqrt();
    if let Some(&g) = nbar.iter().find(|&&g| !at_most(v.single(g), limit)) {
        return Err(Error::invalid(format!(
            "good {g} is worth {} which exceeds v(N)/sqrt(n) = {limit}",
            v.single(g)
        )));
    }
    let bound = (-(n as f64).sqrt() / 18.0).exp();
    if whole <= 0.0 {
        return Ok(ConcentrationResult {
            frequency: 1.0,
            degenerate: true,
            bound,
            trials,
        });
    }
    let mut rng = SeededRng::new(seed);
    let goods: Vec<usize> = nbar.iter().copied().collect();
    let mut failures = 0usize;
    let mut kept = Vec::with_capacity(goods.len());
    for _ in 0..trials {
        kept.clear();
        kept.extend(goods.iter().copied().filter(|_| rng.coin()));
        if v.value_of(kept.iter().copied()) <= whole / 3.0 {
            failures += 1;
        }
    }
    Ok(ConcentrationResult {
        frequency: failures as f64 / trials as f64,
        degenerate: false,
        bound,
        trials,
    })
}
