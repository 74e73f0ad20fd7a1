//! Equicoverings and the reduction from multi-disjointness to NSW instances.
//!
//! An `(n, r, ε)`-equicovering of `[m]` is a list of `r` ordered
//! equipartitions `P^s = (P^s_1, …, P^s_n)` such that for any pairwise
//! distinct `s_1, …, s_n` the union `∪_i P^{s_i}_i` has at most
//! `m(1 − (1 − 1/n)^n + ε)` goods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{brute_force_nsw_with_budget, brute_force_sw_with_budget};
use crate::numeric::at_most;
use crate::rng::{derive_seed, SeededRng};
use crate::valuations::{AdditiveFunction, Bundle, Instance, XosValuation};

/// Default number of sampled tuples in sampled verification.
pub const DEFAULT_SAMPLES: usize = 100_000;

fn check_divides(m: usize, n: usize) -> Result<()> {
    if n == 0 || m % n != 0 {
        return Err(Error::invalid(format!(
            "{n} parts must divide {m} goods evenly"
        )));
    }
    Ok(())
}

/// A uniformly random ordered partition of `[m]` into `n` parts of size
/// `m/n`: Fisher–Yates shuffle of `0..m`, then consecutive chunks.
pub fn random_equipartition(m: usize, n: usize, seed: u64) -> Result<Vec<Bundle>> {
    check_divides(m, n)?;
    let mut goods: Vec<usize> = (0..m).collect();
    SeededRng::new(seed).shuffle(&mut goods);
    let size = m / n;
    Ok((0..n)
        .map(|i| goods[i * size..(i + 1) * size].iter().copied().collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equicovering {
    pub m: usize,
    pub n: usize,
    /// `partitions[s][i]` is `P^s_i`.
    pub partitions: Vec<Vec<Bundle>>,
}

impl Equicovering {
    pub fn new(m: usize, n: usize, partitions: Vec<Vec<Bundle>>) -> Result<Self> {
        check_divides(m, n)?;
        for (s, parts) in partitions.iter().enumerate() {
            if parts.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "equipartition {s} has {} parts, expected {n}",
                    parts.len()
                )));
            }
            let mut seen = Bundle::new();
            for part in parts {
                if part.len() != m / n || part.iter().any(|&g| g >= m || !seen.insert(g)) {
                    return Err(Error::invalid(format!(
                        "equipartition {s} is not a partition of [{m}] into equal parts"
                    )));
                }
            }
        }
        Ok(Equicovering { m, n, partitions })
    }

    pub fn r(&self) -> usize {
        self.partitions.len()
    }

    /// `m(1 − (1 − 1/n)^n + ε)`.
    pub fn bound(&self, eps: f64) -> f64 {
        let n = self.n as f64;
        self.m as f64 * (1.0 - (1.0 - 1.0 / n).powi(self.n as i32) + eps)
    }

    /// `|∪_i P^{s_i}_i|` for a tuple of partition indices.
    pub fn union_size(&self, tuple: &[usize]) -> usize {
        let mut covered = vec![false; self.m];
        let mut count = 0;
        for (i, &s) in tuple.iter().enumerate() {
            for &g in &self.partitions[s][i] {
                if !covered[g] {
                    covered[g] = true;
                    count += 1;
                }
            }
        }
        count
    }
}

/// `r` independent random equipartitions; partition `s` uses seed
/// `derive_seed(seed, s)`.
pub fn build_equicovering(m: usize, n: usize, r: usize, seed: u64) -> Result<Equicovering> {
    check_divides(m, n)?;
    let partitions = (0..r)
        .map(|s| random_equipartition(m, n, derive_seed(seed, s as u64)))
        .collect::<Result<_>>()?;
    Ok(Equicovering { m, n, partitions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyMode {
    /// Every ordered tuple of distinct indices, refused above `budget` tuples.
    Exhaustive { budget: u64 },
    /// `samples` uniformly random tuples of distinct indices.
    Sampled { samples: usize, seed: u64 },
}

impl VerifyMode {
    pub fn exhaustive() -> Self {
        VerifyMode::Exhaustive {
            budget: crate::exact::DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub holds: bool,
    /// Tuple with the largest union (first found on ties); `None` if no
    /// tuple of distinct indices exists (`r < n`).
    pub worst: Option<Vec<usize>>,
    pub worst_size: usize,
    pub bound: f64,
    pub tuples_checked: u64,
}

fn falling_factorial(r: usize, n: usize) -> f64 {
    (0..n).map(|k| r.saturating_sub(k) as f64).product()
}

/// All ordered tuples of `len` distinct values below `r` that start with `prefix`.
fn for_each_tuple<F: FnMut(&[usize])>(r: usize, len: usize, prefix: &mut Vec<usize>, f: &mut F) {
    if prefix.len() == len {
        f(prefix);
        return;
    }
    for s in 0..r {
        if !prefix.contains(&s) {
            prefix.push(s);
            for_each_tuple(r, len, prefix, f);
            prefix.pop();
        }
    }
}

fn worse(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    // (union size, order) pairs: larger union wins, then earlier order.
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

pub fn verify_equicovering(e: &Equicovering, eps: f64, mode: VerifyMode) -> Result<Verification> {
    let (n, r) = (e.n, e.r());
    let bound = e.bound(eps);
    let tuples: Vec<Vec<usize>> = match mode {
        VerifyMode::Exhaustive { budget } => {
            let required = falling_factorial(r, n);
            if required > budget as f64 {
                return Err(Error::BudgetExceeded { required, budget });
            }
            if r < n {
                Vec::new()
            } else {
                // Split on the first index so the halves can be checked in parallel.
                (0..r)
                    .into_par_iter()
                    .flat_map_iter(|first| {
                        let mut out = Vec::new();
                        let mut prefix = vec![first];
                        for_each_tuple(r, n, &mut prefix, &mut |t| out.push(t.to_vec()));
                        out
                    })
                    .collect()
            }
        }
        VerifyMode::Sampled { samples, seed } => {
            if r < n {
                Vec::new()
            } else {
                let mut rng = SeededRng::new(seed);
                let mut pool: Vec<usize> = (0..r).collect();
                (0..samples)
                    .map(|_| {
                        // Partial Fisher–Yates: the first n slots are a uniform ordered draw.
                        for k in 0..n {
                            let j = k + rng.below(r - k);
                            pool.swap(k, j);
                        }
                        pool[..n].to_vec()
                    })
                    .collect()
            }
        }
    };
    let worst = tuples
        .par_iter()
        .enumerate()
        .map(|(k, t)| (e.union_size(t), k))
        .reduce(|| (0, usize::MAX), worse);
    let (worst, worst_size) = if tuples.is_empty() {
        (None, 0)
    } else {
        (Some(tuples[worst.1].clone()), worst.0)
    };
    Ok(Verification {
        holds: at_most(worst_size as f64, bound),
        worst,
        worst_size,
        bound,
        tuples_checked: tuples.len() as u64,
    })
}

/// Builds equicoverings with seeds `seed`, `derive_seed(seed, 1)`, … until
/// one verifies, giving up after `attempts`. Returns the object, its
/// verification and the attempt number that succeeded.
pub fn construct_equicovering(
    m: usize,
    n: usize,
    r: usize,
    eps: f64,
    mode: VerifyMode,
    seed: u64,
    attempts: u64,
) -> Result<Option<(Equicovering, Verification, u64)>> {
    for attempt in 0..attempts {
        let s = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
        let e = build_equicovering(m, n, r, s)?;
        let v = verify_equicovering(&e, eps, mode)?;
        if v.holds {
            return Ok(Some((e, v, attempt)));
        }
    }
    Ok(None)
}

/// Agent `i` holds `B_i ⊆ {0, …, t−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiDisjointnessInstance {
    pub t: usize,
    pub subsets: Vec<Bundle>,
}

impl MultiDisjointnessInstance {
    pub fn new(t: usize, subsets: Vec<Bundle>) -> Result<Self> {
        if let Some(i) = subsets.iter().position(|b| b.iter().any(|&s| s >= t)) {
            return Err(Error::invalid(format!("subset {i} has an element outside [{t}]")));
        }
        Ok(MultiDisjointnessInstance { t, subsets })
    }

    pub fn n(&self) -> usize {
        self.subsets.len()
    }

    /// Some element is common to every subset.
    pub fn totally_intersecting(&self) -> bool {
        (0..self.t).any(|s| self.subsets.iter().all(|b| b.contains(&s)))
    }

    /// The subsets are pairwise disjoint.
    pub fn totally_disjoint(&self) -> bool {
        let mut seen = Bundle::new();
        self.subsets.iter().flatten().all(|&s| seen.insert(s))
    }

    /// Random totally intersecting instance: a common element plus each
    /// other element independently with probability 1/2.
    pub fn random_intersecting(n: usize, t: usize, rng: &mut SeededRng) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("an intersecting instance needs t ≥ 1"));
        }
        let common = rng.below(t);
        let subsets = (0..n)
            .map(|_| {
                (0..t)
                    .filter(|&s| s == common || rng.coin())
                    .collect()
            })
            .collect();
        MultiDisjointnessInstance::new(t, subsets)
    }

    /// Random totally disjoint instance. When `t ≥ n` every subset is
    /// nonempty: a random permutation seeds one element per agent, and the
    /// remaining elements go to a uniform agent or to nobody.
    pub fn random_disjoint(n: usize, t: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut order: Vec<usize> = (0..t).collect();
        rng.shuffle(&mut order);
        let mut subsets = vec![Bundle::new(); n];
        for (k, &s) in order.iter().enumerate() {
            let owner = if k < n { k } else { rng.below(n + 1) };
            if owner < n {
                subsets[owner].insert(s);
            }
        }
        MultiDisjointnessInstance::new(t, subsets)
    }
}

/// Agent `i` gets the indicator functions of `P^s_i` for `s ∈ B_i`, or a
/// single all-zero function when `B_i` is empty.
pub fn reduce_multidisjointness(md: &MultiDisjointnessInstance, e: &Equicovering) -> Result<Instance> {
    if md.t != e.r() {
        return Err(Error::DimensionMismatch(format!(
            "t = {} elements but the equicovering has r = {}",
            md.t,
            e.r()
        )));
    }
    if md.n() != e.n {
        return Err(Error::DimensionMismatch(format!(
            "{} subsets but the equicovering has {} parts",
            md.n(),
            e.n
        )));
    }
    let valuations = md
        .subsets
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let family = if b.is_empty() {
                vec![AdditiveFunction::new(vec![0.0; e.m])?]
            } else {
                b.iter()
                    .map(|&s| {
                        let part: Vec<usize> = e.partitions[s][i].iter().copied().collect();
                        AdditiveFunction::indicator(e.m, &part)
                    })
                    .collect::<Result<_>>()?
            };
            XosValuation::new(family)
        })
        .collect::<Result<_>>()?;
    Instance::new(e.m, valuations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapCase {
    Intersecting,
    Disjoint,
}

impl GapCase {
    pub fn label(self) -> &'static str {
        match self {
            GapCase::Intersecting => "intersecting",
            GapCase::Disjoint => "disjoint",
        }
    }
}

/// One sampled multi-disjointness input. For intersecting inputs the value
/// is the optimal NSW; for disjoint inputs it is the upper bound
/// `max SW / n` on the optimal NSW. `gap` divides it by `m/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub eps: f64,
    pub case: GapCase,
    pub opt_nsw_or_bound: f64,
    pub gap: f64,
    /// Optimal NSW of the reduced instance (equal to `opt_nsw_or_bound`
    /// for intersecting inputs).
    pub opt_nsw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// `1 − (1 − 1/n)^n + ε`.
    pub threshold: f64,
    /// Largest disjoint-case gap; 1 when there are no disjoint rows.
    pub gap: f64,
    /// Smallest intersecting-case NSW divided by `m/n`.
    pub intersecting_ratio: f64,
}

/// Samples `trials` intersecting and `trials` disjoint inputs over `e` and
/// solves each reduced instance exactly.
pub fn gap_report(e: &Equicovering, eps: f64, trials: usize, seed: u64) -> Result<GapReport> {
    gap_report_with_budget(e, eps, trials, seed, crate::exact::DEFAULT_BUDGET)
}

pub fn gap_report_with_budget(
    e: &Equicovering,
    eps: f64,
    trials: usize,
    seed: u64,
    budget: u64,
) -> Result<GapReport> {
    let (n, m, r) = (e.n, e.m, e.r());
    let fair = m as f64 / n as f64;
    let mut rng = SeededRng::new(seed);
    let mut inputs = Vec::with_capacity(2 * trials);
    for _ in 0..trials {
        inputs.push((GapCase::Intersecting, MultiDisjointnessInstance::random_intersecting(n, r, &mut rng)?));
    }
    for _ in 0..trials {
        inputs.push((GapCase::Disjoint, MultiDisjointnessInstance::random_disjoint(n, r, &mut rng)?));
    }
    let rows = inputs
        .par_iter()
        .map(|(case, md)| {
            let inst = reduce_multidisjointness(md, e)?;
            let (_, opt_nsw) = brute_force_nsw_with_budget(&inst, budget)?;
            let value = match case {
                GapCase::Intersecting => opt_nsw,
                GapCase::Disjoint => brute_force_sw_with_budget(&inst, budget)?.1 / n as f64,
            };
            Ok(GapRow {
                n,
                m,
                r,
                eps,
                case: *case,
                opt_nsw_or_bound: value,
                gap: value / fair,
                opt_nsw,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gap = rows
        .iter()
        .filter(|row| row.case == GapCase::Disjoint)
        .map(|row| row.gap)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))))
        .unwrap_or(1.0);
    let intersecting_ratio = rows
        .iter()
        .filter(|row| row.case == GapCase::Intersecting)
        .map(|row| row.gap)
        .fold(f64::INFINITY, f64::min);
    Ok(GapReport {
        rows,
        threshold: 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32) + eps,
        gap,
        intersecting_ratio,
    })
}
