//! Self-checks run by `verify --suite …`. Each suite draws seeded random
//! instances, runs one component and checks its guarantee exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capped_welfare::CappedWelfare;
use crate::error::{Error, Result};
use crate::exact::{best_goods, brute_force_nsw, concentration_experiment, optimal_nsw_subsets, DEFAULT_BUDGET};
use crate::generate::{generate, random_xos, GenParams, GeneratorKind};
use crate::matching::{repeated_matchings, verify_matchhigh};
use crate::moving_knife::{discrete_moving_knife, knife_share, restricted_value};
use crate::numeric::{at_least, at_most, matching_rounds};
use crate::rng::{derive_seed, SeededRng};
use crate::solver::{rematch_bound_check, solve, Allocation};
use crate::valuations::{Bundle, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Matchhigh,
    Movingknife,
    Cappedwelfare,
    Rematch,
    Concentration,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Matchhigh,
        Suite::Movingknife,
        Suite::Cappedwelfare,
        Suite::Rematch,
        Suite::Concentration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Matchhigh => "matchhigh",
            Suite::Movingknife => "movingknife",
            Suite::Cappedwelfare => "cappedwelfare",
            Suite::Rematch => "rematch",
            Suite::Concentration => "concentration",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite `{s}`")))
    }
}

/// Suite parameters; `None` picks the suite's own default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    /// Cases where the suite could not apply its check (for example a
    /// precondition did not hold); not failures.
    pub skipped: usize,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        SuiteReport {
            suite,
            checks: 0,
            skipped: 0,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_suite(suite: Suite, params: SuiteParams) -> Result<SuiteReport> {
    match suite {
        Suite::Matchhigh => matchhigh(params),
        Suite::Movingknife => movingknife(params),
        Suite::Cappedwelfare => cappedwelfare(params),
        Suite::Rematch => rematch(params),
        Suite::Concentration => concentration(params),
    }
}

/// Random XOS instance with `n` agents, `m` goods, up to 3 functions each
/// and a sprinkling of zero weights.
pub fn random_instance(n: usize, m: usize, rng: &mut SeededRng) -> Instance {
    let k = 1 + rng.below(3);
    let valuations = (0..n).map(|_| random_xos(m, k, 0.2, rng)).collect();
    Instance::new(m, valuations).expect("shapes agree")
}

/// An optimal NSW allocation, by enumeration when affordable and by subset
/// search otherwise.
pub fn optimal_allocation(inst: &Instance) -> Result<(Allocation, f64)> {
    if (inst.n() as f64).powi(inst.m() as i32) <= DEFAULT_BUDGET as f64 {
        brute_force_nsw(inst)
    } else {
        optimal_nsw_subsets(inst)
    }
}

/// Smallest good count for which every matching round and `π` can be full.
pub fn matchhigh_goods(n: usize) -> usize {
    n * matching_rounds(n) + n
}

fn matchhigh(params: SuiteParams) -> Result<SuiteReport> {
    let n = params.n.unwrap_or(3);
    let trials = params.trials.unwrap_or(50);
    let mut report = SuiteReport::new(Suite::Matchhigh);
    let mut rng = SeededRng::new(params.seed);
    for t in 0..trials {
        let m = matchhigh_goods(n) + rng.below(2);
        let inst = random_instance(n, m, &mut rng);
        let (opt, _) = optimal_allocation(&inst)?;
        let gstar = best_goods(&inst, &opt);
        let (kept, _) = repeated_matchings(&inst, &inst.all_goods(), matching_rounds(n));
        let h = verify_matchhigh(&inst, &kept, &gstar)?;
        report.check(h.is_some(), || format!("trial {t}: no matching into M dominates g*"));
    }
    Ok(report)
}

fn movingknife(params: SuiteParams) -> Result<SuiteReport> {
    let trials = params.trials.unwrap_or(100);
    let mut report = SuiteReport::new(Suite::Movingknife);
    let mut rng = SeededRng::new(params.seed);
    for t in 0..trials {
        let n = params.n.unwrap_or_else(|| 1 + rng.below(4));
        let m = rng.below(40 * n + 1);
        let inst = random_instance(n, m, &mut rng);
        let pool: Bundle = (0..m).filter(|_| rng.coin()).collect();
        let out = discrete_moving_knife(&inst, &pool);
        let mut union = Bundle::new();
        let mut total = 0;
        for b in &out.bundles {
            total += b.len();
            union.extend(b);
        }
        report.check(union == pool && total == pool.len(), || {
            format!("trial {t}: bundles do not partition the pool")
        });
        for a in (0..n).filter(|&a| out.assigned_in_sweep[a]) {
            let v = inst.valuation(a);
            let got = restricted_value(v, &out.supports[a], &out.bundles[a]);
            let want = knife_share(n) * restricted_value(v, &out.supports[a], &pool);
            report.check(at_least(got, want), || {
                format!("trial {t}: agent {a} holds {got} < {want}")
            });
        }
    }
    Ok(report)
}

fn cappedwelfare(params: SuiteParams) -> Result<SuiteReport> {
    let ns: Vec<usize> = params.n.map_or(vec![4, 9, 16], |n| vec![n]);
    let trials = params.trials.unwrap_or(5);
    let mut report = SuiteReport::new(Suite::Cappedwelfare);
    for n in ns {
        for t in 0..trials {
            let gen = GenParams {
                n,
                distractors: (t * n) / 2,
                ..GenParams::default()
            };
            let g = generate(GeneratorKind::P1p2Witness, &gen, derive_seed(params.seed, t as u64))?;
            let inst = g.instance;
            let witness = g.witness.expect("witness generator");
            let cw = CappedWelfare::new(&inst, &inst.all_goods(), &vec![1.0; n])?;
            let out = cw.run()?;
            let guarantee = witness.guarantee(cw.views());
            report.check(at_least(out.welfare, guarantee), || {
                format!("n={n} trial {t}: welfare {} < guarantee {guarantee}", out.welfare)
            });
            report.check(out.iterations.len() <= 225 * n, || {
                format!("n={n} trial {t}: {} iterations", out.iterations.len())
            });
            for it in &out.iterations {
                let gain = it.welfare_after - it.welfare_before;
                report.check(at_least(gain, cw.min_gain()), || {
                    format!("n={n} trial {t} iteration {}: gain {gain}", it.iteration)
                });
                report.check(it.max_scaled_value < cw.cap(), || {
                    format!(
                        "n={n} trial {t} iteration {}: a bundle reached the cap",
                        it.iteration
                    )
                });
            }
        }
    }
    Ok(report)
}

fn rematch(params: SuiteParams) -> Result<SuiteReport> {
    let trials = params.trials.unwrap_or(50);
    let mut report = SuiteReport::new(Suite::Rematch);
    let mut rng = SeededRng::new(params.seed);
    for t in 0..trials {
        let n = params.n.unwrap_or_else(|| 1 + rng.below(3));
        let m = n + rng.below(9 - n);
        let inst = random_instance(n, m, &mut rng);
        let (opt, _) = optimal_allocation(&inst)?;
        let gstar = best_goods(&inst, &opt);
        let (_, trace) = solve(&inst, rng.next_u64())?;
        if verify_matchhigh(&inst, &trace.kept, &gstar)?.is_none() {
            report.skipped += 1;
            continue;
        }
        let (q, star) = rematch_bound_check(&inst, &trace, &gstar)?;
        report.check(at_least(q, star / 2.0), || {
            format!("trial {t}: NSW(Q) = {q} < NSW(Q*)/2 = {}", star / 2.0)
        });
    }
    Ok(report)
}

fn concentration(params: SuiteParams) -> Result<SuiteReport> {
    let ns: Vec<usize> = params.n.map_or(vec![256, 1024], |n| vec![n]);
    let trials = params.trials.unwrap_or(10_000);
    let mut report = SuiteReport::new(Suite::Concentration);
    for n in ns {
        let mut rng = SeededRng::new(derive_seed(params.seed, n as u64));
        let m = n;
        let family = (0..3)
            .map(|_| (0..m).map(|_| 0.5 + 0.5 * rng.unit()).collect())
            .collect();
        let v = crate::valuations::XosValuation::from_rows(family)?;
        let nbar: Bundle = (0..m).collect();
        let r = concentration_experiment(&v, &nbar, n, trials, rng.next_u64())?;
        let slack = 3.0 * (r.bound * (1.0 - r.bound) / trials as f64).sqrt();
        report.notes.push(format!(
            "n={n}: frequency {} vs bound {} (+{slack})",
            r.frequency, r.bound
        ));
        report.check(at_most(r.frequency, r.bound + slack), || {
            format!("n={n}: frequency {} above {}", r.frequency, r.bound + slack)
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_small() {
        for suite in Suite::ALL {
            let params = SuiteParams {
                n: match suite {
                    Suite::Concentration => Some(64),
                    Suite::Cappedwelfare => Some(4),
                    _ => Some(2),
                },
                trials: Some(if suite == Suite::Concentration { 500 } else { 5 }),
                seed: 1,
            };
            let r = run_suite(suite, params).unwrap();
            assert!(r.passed(), "{suite}: {:?}", r.failures);
            assert!(r.checks > 0, "{suite}");
        }
    }
}
