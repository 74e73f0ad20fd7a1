//! Discrete moving knife over a pool of goods.
//!
//! Each agent's valuation is first restricted to goods that are individually
//! small for it; then goods are swept (ascending index) into a working bundle
//! that is handed to the first remaining agent whose restricted value for it
//! reaches a `1/16n` share of its restricted value for the whole pool.

use serde::{Deserialize, Serialize};

use crate::numeric::at_least;
use crate::valuations::{Bundle, Instance, XosValuation};

/// Share of the pool an agent must reach: `1/(16n)`.
pub fn knife_share(n: usize) -> f64 {
    1.0 / (16.0 * n as f64)
}

/// Removes goods `g` with `v(g) ≥ v(G)/(16n)` from `G = pool`, lowest index
/// first, recomputing `v(G)` after every removal, until none is left.
pub fn prune_small(v: &XosValuation, pool: &Bundle, n: usize) -> Bundle {
    assert!(n >= 1, "agent count must be at least 1");
    let share = knife_share(n);
    let mut support = pool.clone();
    loop {
        let threshold = share * v.value(&support);
        let heavy = support
            .iter()
            .copied()
            .find(|&g| at_least(v.single(g), threshold));
        match heavy {
            Some(g) => {
                support.remove(&g);
            }
            None => return support,
        }
    }
}

/// Output of [`discrete_moving_knife`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnifeOutcome {
    /// One bundle per agent; disjoint, union equal to the pool.
    pub bundles: Vec<Bundle>,
    /// Pruned support `G_j` of each agent.
    pub supports: Vec<Bundle>,
    /// Whether each agent received its bundle inside the sweep (as opposed to
    /// only receiving leftovers, or nothing).
    pub assigned_in_sweep: Vec<bool>,
}

/// Restricted value `v'(S) = v(S ∩ G)`.
pub fn restricted_value(v: &XosValuation, support: &Bundle, goods: &Bundle) -> f64 {
    v.value_of(goods.intersection(support).copied())
}

/// Runs the moving knife on `pool` for all agents of `inst`; thresholds use
/// `n = inst.n()`. Leftover goods go to the highest-index agent.
pub fn discrete_moving_knife(inst: &Instance, pool: &Bundle) -> KnifeOutcome {
    let n = inst.n();
    let share = knife_share(n);
    let supports: Vec<Bundle> = inst
        .valuations()
        .iter()
        .map(|v| prune_small(v, pool, n))
        .collect();
    let targets: Vec<f64> = inst
        .valuations()
        .iter()
        .zip(&supports)
        .map(|(v, s)| share * restricted_value(v, s, pool))
        .collect();

    let mut bundles = vec![Bundle::new(); n];
    let mut assigned = vec![false; n];
    let mut remaining = n;
    let mut current = Bundle::new();
    let mut goods = pool.iter().copied();
    while remaining > 0 {
        let Some(g) = goods.next() else { break };
        current.insert(g);
        let taker = (0..n).find(|&a| {
            !assigned[a]
                && at_least(
                    restricted_value(inst.valuation(a), &supports[a], &current),
                    targets[a],
                )
        });
        if let Some(a) = taker {
            bundles[a] = std::mem::take(&mut current);
            assigned[a] = true;
            remaining -= 1;
        }
    }
    // Unswept goods, plus a partial bundle nobody claimed, go to the last agent.
    let last = &mut bundles[n - 1];
    last.extend(current);
    last.extend(goods);
    KnifeOutcome {
        bundles,
        supports,
        assigned_in_sweep: assigned,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuations::bundle;

    fn unit_goods(m: usize) -> XosValuation {
        XosValuation::additive(vec![1.0; m]).unwrap()
    }

    #[test]
    fn prune_empty_pool() {
        let v = unit_goods(4);
        assert!(prune_small(&v, &Bundle::new(), 2).is_empty());
    }

    #[test]
    fn prune_thirty_two_units_empties() {
        let v = unit_goods(32);
        let pool: Bundle = (0..32).collect();
        assert!(prune_small(&v, &pool, 2).is_empty());
    }

    #[test]
    fn prune_thirty_three_units_keeps_all() {
        let v = unit_goods(33);
        let pool: Bundle = (0..33).collect();
        assert_eq!(prune_small(&v, &pool, 2), pool);
    }

    #[test]
    fn prune_drops_one_heavy_good() {
        let mut w = vec![1.0; 40];
        w[7] = 50.0;
        let v = XosValuation::additive(w).unwrap();
        let pool: Bundle = (0..40).collect();
        let g = prune_small(&v, &pool, 1);
        assert!(!g.contains(&7));
        assert_eq!(g.len(), 39);
    }

    #[test]
    fn sixty_four_unit_goods_two_agents() {
        let inst = Instance::additive(vec![vec![1.0; 64], vec![1.0; 64]]).unwrap();
        let pool: Bundle = (0..64).collect();
        let out = discrete_moving_knife(&inst, &pool);
        assert_eq!(out.bundles[0], bundle([0, 1]));
        assert_eq!(out.bundles[1], (2..64).collect::<Bundle>());
        assert_eq!(out.assigned_in_sweep, vec![true, true]);
    }

    #[test]
    fn empty_pool_gives_empty_bundles() {
        let inst = Instance::additive(vec![vec![1.0; 3], vec![2.0; 3]]).unwrap();
        let out = discrete_moving_knife(&inst, &Bundle::new());
        assert!(out.bundles.iter().all(Bundle::is_empty));
    }

    #[test]
    fn zero_value_agent_takes_first_good() {
        // Agent 0 values nothing, so its target is 0 and the first swept good
        // already satisfies it. Agent 1 then needs 4 of the remaining units.
        let inst = Instance::additive(vec![vec![0.0; 40], vec![1.0; 40]]).unwrap();
        let pool: Bundle = (0..40).collect();
        let out = discrete_moving_knife(&inst, &pool);
        assert_eq!(out.bundles[0], bundle([0]));
        // Agent 1: G = all 40 (1 < 40/32), target 40/32 = 1.25 → two goods.
        assert_eq!(out.bundles[1], (1..40).collect::<Bundle>());
        assert!(out.assigned_in_sweep[1]);
    }
}
