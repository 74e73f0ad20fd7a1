//! Price-guided local search for social welfare under capped valuations
//! `v̂_j(S) = min(1/√n, β_j·v_j(S))`, using only XOS and demand oracles of the
//! underlying `v_j`.
//!
//! Each turn prices every allocated good at twice its scaled contribution to
//! its holder's bundle, asks each agent for a demand set among goods that are
//! individually small for it, trims that set to a minimal prefix of
//! sufficient capped value, and moves the prefix to the first agent for which
//! doing so raises total capped welfare by at least `1/(225√n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{at_least, at_most};
use crate::valuations::{Bundle, CappedView, Instance, PriceVector};

/// Candidate prefixes stop once they reach `92/225` of the cap.
pub const PREFIX_SHARE: f64 = 92.0 / 225.0;
/// Minimum welfare gain per move, as a fraction of the cap.
pub const GAIN_SHARE: f64 = 1.0 / 225.0;

/// Bundles `Y_1..Y_n` of the goods in the pool; `unallocated` is `Y_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareState {
    pub bundles: Vec<Bundle>,
    pub unallocated: Bundle,
    pub iteration: usize,
}

impl WelfareState {
    pub fn empty(n: usize, pool: &Bundle) -> Self {
        WelfareState {
            bundles: vec![Bundle::new(); n],
            unallocated: pool.clone(),
            iteration: 0,
        }
    }

    /// A state with the given bundles; `Y_0` is the rest of the pool.
    pub fn from_bundles(bundles: Vec<Bundle>, pool: &Bundle) -> Self {
        let mut unallocated = pool.clone();
        for b in &bundles {
            for g in b {
                unallocated.remove(g);
            }
        }
        WelfareState {
            bundles,
            unallocated,
            iteration: 0,
        }
    }
}

/// Demand set `D_j` in ascending order and its trimmed prefix `D̂_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub demand: Vec<usize>,
    pub prefix: Bundle,
}

/// Reference allocation `O` and agent subset `Ā` used to state the welfare
/// guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareWitness {
    pub reference: Vec<Bundle>,
    pub agents: Vec<usize>,
}

impl WelfareWitness {
    /// `Σ_{i∈Ā} v̂_i(O_i)`.
    pub fn benchmark(&self, views: &[CappedView<'_>]) -> f64 {
        self.agents
            .iter()
            .map(|&i| views[i].value(&self.reference[i]))
            .sum()
    }

    /// Welfare-mass condition: `Σ_{i∈Ā} v̂_i(O_i) ≥ (26/27)·√n`.
    pub fn satisfies_mass(&self, views: &[CappedView<'_>]) -> bool {
        let n = views.len() as f64;
        at_least(self.benchmark(views), 26.0 / 27.0 * n.sqrt())
    }

    /// Small-goods condition: every `g ∈ O_i`, `i ∈ Ā`, has `v̂_i(g) ≤ 1/(2√n)`.
    pub fn satisfies_small_goods(&self, views: &[CappedView<'_>]) -> bool {
        self.agents.iter().all(|&i| {
            let half_cap = views[i].cap() / 2.0;
            self.reference[i]
                .iter()
                .all(|&g| at_most(views[i].single(g), half_cap))
        })
    }

    /// The guaranteed welfare `(2/25)·Σ_{i∈Ā} v̂_i(O_i)`.
    pub fn guarantee(&self, views: &[CappedView<'_>]) -> f64 {
        2.0 / 25.0 * self.benchmark(views)
    }
}

/// One turn of the loop that moved goods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub welfare_before: f64,
    pub welfare_after: f64,
    pub agent: usize,
    pub candidate_size: usize,
    /// `max_j β_j·v_j(Y_j)` after the move.
    pub max_scaled_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CappedOutcome {
    pub bundles: Vec<Bundle>,
    pub unallocated: Bundle,
    pub welfare: f64,
    pub iterations: Vec<IterationRecord>,
}

/// Prices `p_g = 2β_j·f_{j,Y_j}(g)` for `g ∈ Y_j`, zero for everything else.
pub fn compute_prices(state: &WelfareState, views: &[CappedView<'_>]) -> PriceVector {
    let m = views.first().map_or(0, |v| v.base().arity());
    let mut prices = vec![0.0; m];
    for (view, held) in views.iter().zip(&state.bundles) {
        if held.is_empty() {
            continue;
        }
        let f = view.base().xos_query(held);
        for &g in held {
            prices[g] = 2.0 * view.beta() * f.weight(g);
        }
    }
    PriceVector::new(prices).expect("prices are nonnegative")
}

/// Candidate set for one agent: demand under prices `q/β`, where `q = p` on
/// pool goods with `v̂(g) ≤ 1/(2√n)` and `q = ∞` elsewhere, trimmed to the
/// shortest ascending prefix reaching `(92/225)/√n`.
pub fn candidate_set(view: &CappedView<'_>, prices: &PriceVector, pool: &Bundle) -> CandidateSet {
    let m = view.base().arity();
    let half_cap = view.cap() / 2.0;
    let scaled: Vec<f64> = (0..m)
        .map(|g| {
            if pool.contains(&g) && at_most(view.single(g), half_cap) {
                prices.get(g) / view.beta()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let scaled = PriceVector::new(scaled).expect("scaled prices are nonnegative");
    let demand: Vec<usize> = view.base().demand(&scaled).into_iter().collect();

    let target = PREFIX_SHARE * view.cap();
    let family = view.base().family();
    let mut running = vec![0.0; family.len()];
    let mut prefix = Bundle::new();
    for &g in &demand {
        prefix.insert(g);
        for (sum, f) in running.iter_mut().zip(family) {
            *sum += f.weight(g);
        }
        let raw = running.iter().copied().fold(0.0, f64::max);
        if at_least(view.from_raw(raw), target) {
            break;
        }
    }
    CandidateSet { demand, prefix }
}

/// The local search itself, bound to an instance, a pool `R′` and scaling
/// factors. The cap uses `n = inst.n()`.
pub struct CappedWelfare<'a> {
    inst: &'a Instance,
    pool: Bundle,
    views: Vec<CappedView<'a>>,
}

impl<'a> CappedWelfare<'a> {
    pub fn new(inst: &'a Instance, pool: &Bundle, betas: &[f64]) -> Result<Self> {
        let n = inst.n();
        if betas.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} scaling factors for {n} agents",
                betas.len()
            )));
        }
        crate::valuations::check_bundle(pool, inst.m())?;
        let views = inst
            .valuations()
            .iter()
            .zip(betas)
            .map(|(v, &b)| CappedView::new(v, b, n))
            .collect::<Result<_>>()?;
        Ok(CappedWelfare {
            inst,
            pool: pool.clone(),
            views,
        })
    }

    pub fn views(&self) -> &[CappedView<'a>] {
        &self.views
    }

    pub fn pool(&self) -> &Bundle {
        &self.pool
    }

    pub fn cap(&self) -> f64 {
        1.0 / (self.inst.n() as f64).sqrt()
    }

    /// Minimum gain `1/(225√n)` a move must achieve.
    pub fn min_gain(&self) -> f64 {
        GAIN_SHARE * self.cap()
    }

    /// Iteration ceiling: the `225n` bound plus `n` of headroom.
    pub fn iteration_cap(&self) -> usize {
        225 * self.inst.n() + self.inst.n()
    }

    pub fn welfare(&self, bundles: &[Bundle]) -> f64 {
        self.views
            .iter()
            .zip(bundles)
            .map(|(v, b)| v.value(b))
            .sum()
    }

    pub fn prices(&self, state: &WelfareState) -> PriceVector {
        compute_prices(state, &self.views)
    }

    pub fn candidate(&self, agent: usize, prices: &PriceVector) -> CandidateSet {
        candidate_set(&self.views[agent], prices, &self.pool)
    }

    /// Welfare after giving `prefix` to `agent` and removing it from everyone else.
    pub fn welfare_if_assigned(&self, state: &WelfareState, agent: usize, prefix: &Bundle) -> f64 {
        self.views
            .iter()
            .zip(&state.bundles)
            .enumerate()
            .map(|(j, (view, held))| {
                if j == agent {
                    view.value(prefix)
                } else {
                    view.value_of(held.difference(prefix).copied())
                }
            })
            .sum()
    }

    /// First agent (lowest index) whose candidate raises welfare by at least
    /// `1/(225√n)`, with its candidate and the resulting welfare.
    pub fn find_improvement(&self, state: &WelfareState) -> Option<(usize, CandidateSet, f64)> {
        let prices = self.prices(state);
        let current = self.welfare(&state.bundles);
        let min_gain = self.min_gain();
        (0..self.inst.n()).find_map(|a| {
            let cand = self.candidate(a, &prices);
            let after = self.welfare_if_assigned(state, a, &cand.prefix);
            at_least(after - current, min_gain).then_some((a, cand, after))
        })
    }

    fn apply(&self, state: &mut WelfareState, agent: usize, prefix: &Bundle) {
        for (j, held) in state.bundles.iter_mut().enumerate() {
            if j == agent {
                *held = prefix.clone();
            } else {
                held.retain(|g| !prefix.contains(g));
            }
        }
        let mut unallocated = self.pool.clone();
        for held in &state.bundles {
            for g in held {
                unallocated.remove(g);
            }
        }
        state.unallocated = unallocated;
        state.iteration += 1;
    }

    pub fn run(&self) -> Result<CappedOutcome> {
        self.run_observed(|_, _| {})
    }

    /// Runs the loop, calling `observe` with the state and prices at the start
    /// of every turn (including the final, non-improving one).
    pub fn run_observed<F>(&self, mut observe: F) -> Result<CappedOutcome>
    where
        F: FnMut(&WelfareState, &PriceVector),
    {
        let mut state = WelfareState::empty(self.inst.n(), &self.pool);
        let mut iterations = Vec::new();
        let cap = self.iteration_cap();
        loop {
            observe(&state, &self.prices(&state));
            let before = self.welfare(&state.bundles);
            let Some((agent, cand, _)) = self.find_improvement(&state) else {
                break;
            };
            if state.iteration >= cap {
                return Err(Error::IterationCapExceeded { cap });
            }
            self.apply(&mut state, agent, &cand.prefix);
            let after = self.welfare(&state.bundles);
            let max_scaled_value = self
                .views
                .iter()
                .zip(&state.bundles)
                .map(|(v, b)| v.beta() * v.base().value(b))
                .fold(0.0, f64::max);
            iterations.push(IterationRecord {
                iteration: state.iteration,
                welfare_before: before,
                welfare_after: after,
                agent,
                candidate_size: cand.prefix.len(),
                max_scaled_value,
            });
        }
        let welfare = self.welfare(&state.bundles);
        Ok(CappedOutcome {
            bundles: state.bundles,
            unallocated: state.unallocated,
            welfare,
            iterations,
        })
    }
}

/// Convenience wrapper: run the local search on `pool` with `betas`.
pub fn capped_social_welfare(inst: &Instance, pool: &Bundle, betas: &[f64]) -> Result<CappedOutcome> {
    CappedWelfare::new(inst, pool, betas)?.run()
}
