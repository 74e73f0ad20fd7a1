//! Maximum-product bipartite matchings between agents and goods.
//!
//! The objective is two-level: first maximize the number of agents whose
//! matched value is positive, then maximize the sum of logs of those values.
//! The Hungarian algorithm runs directly on that lexicographic cost, so the
//! cardinality level is exact integer arithmetic and only the log level is
//! floating point. Zero-valued agent/good pairs are never matched.

use std::cmp::Ordering;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::at_least;
use crate::valuations::{Bundle, Instance};

/// Result of a max-product matching. `assignment[i]` is agent `i`'s good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub assignment: Vec<Option<usize>>,
    /// Sum of `ln(value)` over agents whose matched value is positive.
    pub product_log: f64,
    /// Number of agents whose matched value is positive.
    pub positive_count: usize,
}

impl MatchingResult {
    pub fn goods(&self) -> Bundle {
        self.assignment.iter().flatten().copied().collect()
    }

    pub fn good_of(&self, agent: usize) -> Option<usize> {
        self.assignment.get(agent).copied().flatten()
    }
}

/// Lexicographic cost: `count` first, then `log`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lex {
    count: i64,
    log: f64,
}

impl Lex {
    const ZERO: Lex = Lex { count: 0, log: 0.0 };
    const INF: Lex = Lex {
        count: i64::MAX / 4,
        log: 0.0,
    };
    // Larger than any feasible total, far below INF so sums never overflow.
    const FORBIDDEN: Lex = Lex {
        count: 1 << 40,
        log: 0.0,
    };

    /// Cost of giving an agent final value `w`.
    fn of_value(w: f64) -> Lex {
        if w > 0.0 {
            Lex {
                count: -1,
                log: -w.ln(),
            }
        } else {
            Lex::ZERO
        }
    }

    fn close_to(self, other: Lex) -> bool {
        self.count == other.count
            && (self.log - other.log).abs() <= 1e-9 * self.log.abs().max(other.log.abs()).max(1.0)
    }
}

impl Add for Lex {
    type Output = Lex;
    fn add(self, o: Lex) -> Lex {
        Lex {
            count: self.count + o.count,
            log: self.log + o.log,
        }
    }
}

impl Sub for Lex {
    type Output = Lex;
    fn sub(self, o: Lex) -> Lex {
        Lex {
            count: self.count - o.count,
            log: self.log - o.log,
        }
    }
}

impl Neg for Lex {
    type Output = Lex;
    fn neg(self) -> Lex {
        Lex {
            count: -self.count,
            log: -self.log,
        }
    }
}

impl PartialOrd for Lex {
    fn partial_cmp(&self, o: &Lex) -> Option<Ordering> {
        Some(
            self.count
                .cmp(&o.count)
                .then_with(|| self.log.total_cmp(&o.log)),
        )
    }
}

struct Assignment {
    /// Column chosen by each row.
    row_to_col: Vec<usize>,
    total: Lex,
    row_potential: Vec<Lex>,
    col_potential: Vec<Lex>,
}

/// Minimum-cost assignment of every row to a distinct column (rows ≤ cols),
/// shortest augmenting path form of the Hungarian method.
fn hungarian(cost: &[Vec<Lex>], cols: usize) -> Assignment {
    let rows = cost.len();
    debug_assert!(rows <= cols);
    let mut u = vec![Lex::ZERO; rows + 1];
    let mut v = vec![Lex::ZERO; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![Lex::INF; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = Lex::INF;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .fold(Lex::ZERO, |acc, (i, &j)| acc + cost[i][j]);
    Assignment {
        row_to_col,
        total,
        row_potential: u[1..].to_vec(),
        col_potential: v[1..].to_vec(),
    }
}

/// Cost model: agent `i` matched to column `g` reaches `values[i][g]`,
/// unmatched it keeps `base[i]`.
struct Problem<'a> {
    values: &'a [Vec<f64>],
    base: &'a [f64],
    k: usize,
}

impl Problem<'_> {
    fn edge(&self, i: usize, g: usize) -> Lex {
        let w = self.values[i][g];
        if w > 0.0 {
            Lex::of_value(w)
        } else {
            Lex::FORBIDDEN
        }
    }

    fn unmatched(&self, i: usize) -> Lex {
        Lex::of_value(self.base[i])
    }

    /// Optimal cost for `rows` over the real columns in `cols` plus one
    /// "unmatched" column per row.
    fn solve(&self, rows: &[usize], cols: &[usize]) -> Assignment {
        let width = cols.len() + rows.len();
        let cost: Vec<Vec<Lex>> = rows
            .iter()
            .map(|&i| {
                cols.iter()
                    .map(|&g| self.edge(i, g))
                    .chain(std::iter::repeat(self.unmatched(i)).take(rows.len()))
                    .collect()
            })
            .collect();
        hungarian(&cost, width)
    }

    /// Lowest-index optimal assignment: agents in ascending order take the
    /// smallest good (or, failing every good, no good) that still extends to
    /// an optimal matching.
    fn lexicographic(&self) -> Vec<Option<usize>> {
        let n = self.values.len();
        let all_rows: Vec<usize> = (0..n).collect();
        let all_cols: Vec<usize> = (0..self.k).collect();
        if n == 0 {
            return Vec::new();
        }
        let first = self.solve(&all_rows, &all_cols);
        let u = &first.row_potential;
        let v = &first.col_potential;

        let mut assignment = vec![None; n];
        let mut fixed = Lex::ZERO;
        let mut free: Vec<usize> = all_cols.clone();
        for i in 0..n {
            let rest_rows: Vec<usize> = (i + 1..n).collect();
            let target = {
                let mut free_rows = vec![i];
                free_rows.extend(&rest_rows);
                fixed + self.solve(&free_rows, &free).total
            };
            // Any optimal matching uses only edges that are tight under the
            // first optimal duals; test those goods first.
            let tight: Vec<usize> = free
                .iter()
                .copied()
                .filter(|&g| self.values[i][g] > 0.0)
                .filter(|&g| {
                    let reduced = self.edge(i, g) - u[i] - v[g];
                    reduced.count == 0 && reduced.log.abs() <= 1e-7 * (1.0 + self.edge(i, g).log.abs())
                })
                .collect();
            let mut choice: Option<Option<usize>> = None;
            let try_good = |g: usize| -> bool {
                let cols: Vec<usize> = free.iter().copied().filter(|&c| c != g).collect();
                let total = fixed + self.edge(i, g) + self.solve(&rest_rows, &cols).total;
                total.close_to(target)
            };
            for &g in &tight {
                if try_good(g) {
                    choice = Some(Some(g));
                    break;
                }
            }
            if choice.is_none() {
                let total = fixed + self.unmatched(i) + self.solve(&rest_rows, &free).total;
                if total.close_to(target) {
                    choice = Some(None);
                }
            }
            if choice.is_none() {
                // Numerical corner: fall back to scanning every free good.
                choice = free
                    .iter()
                    .copied()
                    .filter(|&g| self.values[i][g] > 0.0 && !tight.contains(&g))
                    .find(|&g| try_good(g))
                    .map(Some);
            }
            let choice = choice.unwrap_or_else(|| {
                // Keep whatever the optimal solver picks for this row.
                let mut rows = vec![i];
                rows.extend(&rest_rows);
                let a = self.solve(&rows, &free);
                let col = a.row_to_col[0];
                (col < free.len()).then(|| free[col])
            });
            match choice {
                Some(g) => {
                    fixed = fixed + self.edge(i, g);
                    free.retain(|&c| c != g);
                }
                None => fixed = fixed + self.unmatched(i),
            }
            assignment[i] = choice;
        }
        assignment
    }
}

/// Max-product matching with per-agent base values: matching agent `i` to
/// column `g` gives it `values[i][g]`, leaving it unmatched gives `base[i]`.
/// Maximizes the number of agents with positive final value, then the
/// product of those values. Columns are `0..k` with `k = values[i].len()`.
pub fn max_product_matching_with_base(values: &[Vec<f64>], base: &[f64]) -> MatchingResult {
    assert_eq!(values.len(), base.len(), "one base value per agent");
    let k = values.first().map_or(0, Vec::len);
    debug_assert!(values
        .iter()
        .all(|row| row.len() == k && row.iter().all(|w| w.is_finite() && *w >= 0.0)));
    let problem = Problem { values, base, k };
    let assignment = problem.lexicographic();
    let finals = assignment
        .iter()
        .enumerate()
        .map(|(i, g)| g.map_or(base[i], |g| values[i][g]));
    let (product_log, positive_count) = finals
        .filter(|w| *w > 0.0)
        .fold((0.0, 0), |(s, c), w| (s + w.ln(), c + 1));
    MatchingResult {
        assignment,
        product_log,
        positive_count,
    }
}

/// Max-product matching on an `n × k` nonnegative value matrix.
pub fn max_product_matching(values: &[Vec<f64>]) -> MatchingResult {
    max_product_matching_with_base(values, &vec![0.0; values.len()])
}

/// Max-product matching of the instance's agents into `goods` using
/// singleton values; the assignment holds global good indices.
pub fn match_into(inst: &Instance, goods: &Bundle) -> MatchingResult {
    let cols: Vec<usize> = goods.iter().copied().collect();
    let values: Vec<Vec<f64>> = inst
        .valuations()
        .iter()
        .map(|v| cols.iter().map(|&g| v.single(g)).collect())
        .collect();
    let mut result = max_product_matching(&values);
    for slot in &mut result.assignment {
        *slot = slot.map(|c| cols[c]);
    }
    result
}

/// Repeated matchings: `rounds` times, match agents into the remaining pool,
/// move the matched goods into `M` and drop them from the pool.
///
/// Agents left unmatched by a round (no positive-valued good remains for
/// them) are completed with the lowest-index pool goods still free in that
/// round, so every round takes `min(n, |pool|)` goods.
pub fn repeated_matchings(
    inst: &Instance,
    goods: &Bundle,
    rounds: usize,
) -> (Bundle, Vec<MatchingResult>) {
    let mut pool = goods.clone();
    let mut kept = Bundle::new();
    let mut matchings = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        if pool.is_empty() {
            break;
        }
        let mut tau = match_into(inst, &pool);
        let taken = tau.goods();
        let mut spare = pool.iter().copied().filter(|g| !taken.contains(g));
        for slot in &mut tau.assignment {
            if slot.is_none() {
                *slot = spare.next();
            }
        }
        for g in tau.goods() {
            pool.remove(&g);
            kept.insert(g);
        }
        matchings.push(tau);
    }
    (kept, matchings)
}

/// Looks for an injective `h: agents → M` with `v_i(h(i)) ≥ v_i(gstar[i])`.
/// `gstar[i] = None` stands for an agent whose reference bundle is empty
/// (threshold zero). Returns the matching, or `None` if none exists.
pub fn verify_matchhigh(
    inst: &Instance,
    kept: &Bundle,
    gstar: &[Option<usize>],
) -> Result<Option<Vec<usize>>> {
    let n = inst.n();
    if gstar.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} reference goods for {n} agents",
            gstar.len()
        )));
    }
    let goods: Vec<usize> = kept.iter().copied().collect();
    let eligible: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let v = inst.valuation(i);
            let threshold = gstar[i].map_or(0.0, |g| v.single(g));
            (0..goods.len())
                .filter(|&c| at_least(v.single(goods[c]), threshold))
                .collect()
        })
        .collect();

    fn augment(
        i: usize,
        eligible: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &c in &eligible[i] {
            if seen[c] {
                continue;
            }
            seen[c] = true;
            if owner[c].map_or(true, |other| augment(other, eligible, owner, seen)) {
                owner[c] = Some(i);
                return true;
            }
        }
        false
    }

    let mut owner: Vec<Option<usize>> = vec![None; goods.len()];
    for i in 0..n {
        let mut seen = vec![false; goods.len()];
        if !augment(i, &eligible, &mut owner, &mut seen) {
            return Ok(None);
        }
    }
    let mut h = vec![0; n];
    for (c, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            h[*i] = goods[c];
        }
    }
    Ok(Some(h))
}
