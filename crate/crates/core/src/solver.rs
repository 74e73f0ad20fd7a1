//! End-to-end approximation of the Nash social welfare.
//!
//! Four phases: repeated matchings set aside a small pool `M` and a first
//! matching `π` picks one good per agent; the remaining goods are split at
//! random into `R` and `R′`; a moving knife shares `R`; a capped local search
//! shares `R′`. A last matching `μ` hands out the goods of `M` on top of
//! everything else.

use serde::{Deserialize, Serialize};

use crate::capped_welfare::{CappedWelfare, IterationRecord};
use crate::error::{Error, Result};
use crate::matching::{match_into, max_product_matching_with_base, repeated_matchings, MatchingResult};
use crate::moving_knife::discrete_moving_knife;
use crate::numeric::matching_rounds;
use crate::rng::SeededRng;
use crate::valuations::{check_bundle, Bundle, Instance};

/// Pairwise-disjoint bundles, one per agent. Goods may be left out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    pub bundles: Vec<Bundle>,
}

impl Allocation {
    /// Checks disjointness and range before wrapping.
    pub fn new(bundles: Vec<Bundle>, m: usize) -> Result<Self> {
        let mut seen = Bundle::new();
        for (i, b) in bundles.iter().enumerate() {
            check_bundle(b, m)?;
            for &g in b {
                if !seen.insert(g) {
                    return Err(Error::invalid(format!(
                        "good {g} appears in more than one bundle (again in agent {i})"
                    )));
                }
            }
        }
        Ok(Allocation { bundles })
    }

    pub fn empty(n: usize) -> Self {
        Allocation {
            bundles: vec![Bundle::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.bundles.len()
    }

    pub fn values(&self, inst: &Instance) -> Vec<f64> {
        inst.valuations()
            .iter()
            .zip(&self.bundles)
            .map(|(v, b)| v.value(b))
            .collect()
    }

    pub fn allocated(&self) -> Bundle {
        self.bundles.iter().flatten().copied().collect()
    }
}

/// Geometric mean of the values, computed in log space; zero if any value is zero.
pub fn nsw_of_values(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    mean_log.exp()
}

pub fn nsw(inst: &Instance, alloc: &Allocation) -> f64 {
    nsw_of_values(&alloc.values(inst))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Hand out goods the algorithm leaves unallocated, greedily by relative gain.
    pub topup: bool,
}

/// Every intermediate object of a run. Bundles of excluded agents are empty
/// in `x` and `y` and their `betas` entry is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub seed: u64,
    #[serde(rename = "M")]
    pub kept: Bundle,
    pub tau: Vec<MatchingResult>,
    pub pi: MatchingResult,
    pub excluded: Vec<usize>,
    #[serde(rename = "R")]
    pub r: Bundle,
    #[serde(rename = "R_prime")]
    pub r_prime: Bundle,
    #[serde(rename = "X")]
    pub x: Allocation,
    pub betas: Vec<Option<f64>>,
    #[serde(rename = "Y")]
    pub y: Allocation,
    pub capped_iterations: Vec<IterationRecord>,
    pub mu: MatchingResult,
    #[serde(rename = "Q")]
    pub q: Allocation,
}

impl SolveTrace {
    pub fn pi_goods(&self) -> Bundle {
        self.pi.goods()
    }

    /// `{π(i)} ∪ X_i ∪ Y_i`: everything agent `i` holds before `μ`.
    pub fn pre_rematch(&self, agent: usize) -> Bundle {
        let mut b: Bundle = self.pi.good_of(agent).into_iter().collect();
        b.extend(&self.x.bundles[agent]);
        b.extend(&self.y.bundles[agent]);
        b
    }
}

/// Runs all phases with the default options.
pub fn solve(inst: &Instance, seed: u64) -> Result<(Allocation, SolveTrace)> {
    solve_with(inst, seed, SolveOptions::default())
}

pub fn solve_with(inst: &Instance, seed: u64, options: SolveOptions) -> Result<(Allocation, SolveTrace)> {
    let n = inst.n();
    let m = inst.m();

    // Phase I.
    let (kept, tau) = repeated_matchings(inst, &inst.all_goods(), matching_rounds(n));
    let rest: Bundle = inst.all_goods().difference(&kept).copied().collect();
    let pi = match_into(inst, &rest);
    let excluded: Vec<usize> = (0..n).filter(|&i| pi.good_of(i).is_none()).collect();
    let active: Vec<usize> = (0..n).filter(|&i| pi.good_of(i).is_some()).collect();

    // Phase II.
    let pi_goods = pi.goods();
    let mut rng = SeededRng::new(seed);
    let (mut r, mut r_prime) = (Bundle::new(), Bundle::new());
    for g in rest.difference(&pi_goods).copied() {
        if rng.coin() {
            r.insert(g);
        } else {
            r_prime.insert(g);
        }
    }

    // Phases III and IV on the agents that hold a positive-valued π good.
    let mut x = Allocation::empty(n);
    let mut y = Allocation::empty(n);
    let mut betas = vec![None; n];
    let mut capped_iterations = Vec::new();
    if !active.is_empty() {
        let sub = inst.sub_instance(&active)?;
        let knife = discrete_moving_knife(&sub, &r);
        let n_active = active.len() as f64;
        let mut sub_betas = Vec::with_capacity(active.len());
        for (k, &i) in active.iter().enumerate() {
            x.bundles[i] = knife.bundles[k].clone();
            let mut held = x.bundles[i].clone();
            held.extend(pi.good_of(i));
            let beta = 1.0 / (n_active * inst.valuation(i).value(&held));
            betas[i] = Some(beta);
            sub_betas.push(beta);
        }
        let capped = CappedWelfare::new(&sub, &r_prime, &sub_betas)?.run()?;
        for (k, &i) in active.iter().enumerate() {
            y.bundles[i] = capped.bundles[k].clone();
        }
        capped_iterations = capped.iterations;
    }

    // Final rematching of M over all agents.
    let held: Vec<Bundle> = (0..n)
        .map(|i| {
            let mut b = x.bundles[i].clone();
            b.extend(&y.bundles[i]);
            b.extend(pi.good_of(i));
            b
        })
        .collect();
    let cols: Vec<usize> = kept.iter().copied().collect();
    let base: Vec<f64> = (0..n).map(|i| inst.valuation(i).value(&held[i])).collect();
    let values: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let v = inst.valuation(i);
            cols.iter()
                .map(|&g| v.value_of(held[i].iter().copied().chain(std::iter::once(g))))
                .collect()
        })
        .collect();
    let mut mu = max_product_matching_with_base(&values, &base);
    for slot in &mut mu.assignment {
        *slot = slot.map(|c| cols[c]);
    }

    let mut bundles = held;
    for (i, b) in bundles.iter_mut().enumerate() {
        b.extend(mu.good_of(i));
    }
    if options.topup {
        top_up(inst, &mut bundles);
    }
    let q = Allocation::new(bundles, m)?;
    let trace = SolveTrace {
        seed,
        kept,
        tau,
        pi,
        excluded,
        r,
        r_prime,
        x,
        betas,
        y,
        capped_iterations,
        mu,
        q: q.clone(),
    };
    Ok((q, trace))
}

/// Gives each unallocated good (ascending) to the agent with the largest
/// ratio `v_i(Q_i + g) / v_i(Q_i)`, lowest index on ties. A positive gain on
/// a zero-valued bundle counts as an infinite ratio.
fn top_up(inst: &Instance, bundles: &mut [Bundle]) {
    let allocated: Bundle = bundles.iter().flatten().copied().collect();
    for g in (0..inst.m()).filter(|g| !allocated.contains(g)) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, b) in bundles.iter().enumerate() {
            let v = inst.valuation(i);
            let before = v.value(b);
            let after = v.value_of(b.iter().copied().chain(std::iter::once(g)));
            let ratio = if before > 0.0 {
                after / before
            } else if after > 0.0 {
                f64::INFINITY
            } else {
                1.0
            };
            if ratio > best.1 {
                best = (i, ratio);
            }
        }
        bundles[best.0].insert(g);
    }
}

/// NSW of the solver's output and of the counterfactual `Q*` where each
/// agent receives `gstar[i]` instead of `μ(i)`. `None` entries add nothing.
pub fn rematch_bound_check(
    inst: &Instance,
    trace: &SolveTrace,
    gstar: &[Option<usize>],
) -> Result<(f64, f64)> {
    let n = inst.n();
    if gstar.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} reference goods for {n} agents",
            gstar.len()
        )));
    }
    let star: Vec<f64> = (0..n)
        .map(|i| {
            let mut b = trace.pre_rematch(i);
            b.extend(gstar[i]);
            inst.valuation(i).value(&b)
        })
        .collect();
    Ok((nsw(inst, &trace.q), nsw_of_values(&star)))
}
