//! Seeded random instance generators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capped_welfare::WelfareWitness;
use crate::error::{Error, Result};
use crate::gadgets::{build_equicovering, reduce_multidisjointness, MultiDisjointnessInstance};
use crate::rng::SeededRng;
use crate::valuations::{AdditiveFunction, Bundle, Instance, XosValuation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Additive weights uniform in `[0, 1)`.
    UniformAdditive,
    /// `k` additive functions per agent, weights uniform in `[0, 1)`.
    KXosRandom,
    /// Four dedicated goods of value `1/(4√n)` per agent, plus distractors.
    P1p2Witness,
    /// Reduced multi-disjointness input over a random equicovering.
    EquicoverGadget,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::UniformAdditive,
        GeneratorKind::KXosRandom,
        GeneratorKind::P1p2Witness,
        GeneratorKind::EquicoverGadget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::UniformAdditive => "uniform-additive",
            GeneratorKind::KXosRandom => "k-xos-random",
            GeneratorKind::P1p2Witness => "p1p2-witness",
            GeneratorKind::EquicoverGadget => "equicover-gadget",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown generator `{s}`")))
    }
}

/// Generator parameters. Fields a kind does not use are ignored.
///
/// * `uniform-additive`: `n ≥ 1`, any `m`; each weight is zero with
///   probability `zero_prob`.
/// * `k-xos-random`: as above with `1 ≤ k` functions per agent.
/// * `p1p2-witness`: `n ≥ 1`; `m` is `4n + distractors`. Distractor weights
///   are uniform in `[0, 1/(4√n))`.
/// * `equicover-gadget`: `n | m`, `r ≥ 1` equipartitions; `disjoint` picks a
///   totally disjoint input instead of a totally intersecting one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub zero_prob: f64,
    pub distractors: usize,
    pub r: usize,
    pub disjoint: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n: 2,
            m: 4,
            k: 3,
            zero_prob: 0.0,
            distractors: 0,
            r: 2,
            disjoint: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub instance: Instance,
    /// Reference allocation for `p1p2-witness`, with `β = 1` for every agent.
    pub witness: Option<WelfareWitness>,
}

fn random_weights(m: usize, zero_prob: f64, rng: &mut SeededRng) -> Vec<f64> {
    (0..m)
        .map(|_| {
            if zero_prob > 0.0 && rng.unit() < zero_prob {
                0.0
            } else {
                rng.unit()
            }
        })
        .collect()
}

/// A random XOS valuation with `k` functions.
pub fn random_xos(m: usize, k: usize, zero_prob: f64, rng: &mut SeededRng) -> XosValuation {
    let family = (0..k.max(1))
        .map(|_| AdditiveFunction::new(random_weights(m, zero_prob, rng)).expect("weights in [0, 1)"))
        .collect();
    XosValuation::new(family).expect("family is nonempty")
}

pub fn generate(kind: GeneratorKind, params: &GenParams, seed: u64) -> Result<Generated> {
    if params.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&params.zero_prob) {
        return Err(Error::invalid("zero_prob must lie in [0, 1]"));
    }
    let mut rng = SeededRng::new(seed);
    let plain = |instance| Generated {
        instance,
        witness: None,
    };
    match kind {
        GeneratorKind::UniformAdditive | GeneratorKind::KXosRandom => {
            let k = if kind == GeneratorKind::UniformAdditive { 1 } else { params.k };
            if k == 0 {
                return Err(Error::invalid("k must be at least 1"));
            }
            let valuations = (0..params.n)
                .map(|_| random_xos(params.m, k, params.zero_prob, &mut rng))
                .collect();
            Ok(plain(Instance::new(params.m, valuations)?))
        }
        GeneratorKind::P1p2Witness => {
            let n = params.n;
            let quarter = 1.0 / (4.0 * (n as f64).sqrt());
            let m = 4 * n + params.distractors;
            let mut reference = Vec::with_capacity(n);
            let rows = (0..n)
                .map(|i| {
                    let mut w = vec![0.0; m];
                    for g in 4 * i..4 * i + 4 {
                        w[g] = quarter;
                    }
                    for slot in w.iter_mut().skip(4 * n) {
                        *slot = rng.unit() * quarter;
                    }
                    reference.push((4 * i..4 * i + 4).collect::<Bundle>());
                    w
                })
                .collect();
            Ok(Generated {
                instance: Instance::additive(rows)?,
                witness: Some(WelfareWitness {
                    reference,
                    agents: (0..n).collect(),
                }),
            })
        }
        GeneratorKind::EquicoverGadget => {
            let e = build_equicovering(params.m, params.n, params.r, rng.next_u64())?;
            let md = if params.disjoint {
                MultiDisjointnessInstance::random_disjoint(params.n, params.r, &mut rng)?
            } else {
                MultiDisjointnessInstance::random_intersecting(params.n, params.r, &mut rng)?
            };
            Ok(plain(reduce_multidisjointness(&md, &e)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuations::CappedView;

    #[test]
    fn witness_at_four_agents() {
        let params = GenParams { n: 4, ..GenParams::default() };
        let g = generate(GeneratorKind::P1p2Witness, &params, 0).unwrap();
        assert_eq!(g.instance.m(), 16);
        let w = g.witness.unwrap();
        for i in 0..4 {
            assert_eq!(g.instance.valuation(i).value(&w.reference[i]), 0.5);
            assert!(w.reference[i].iter().all(|&h| g.instance.valuation(i).single(h) == 0.125));
        }
        let views: Vec<_> = g
            .instance
            .valuations()
            .iter()
            .map(|v| CappedView::new(v, 1.0, 4).unwrap())
            .collect();
        assert!(w.satisfies_mass(&views));
        assert!(w.satisfies_small_goods(&views));
    }

    #[test]
    fn deterministic_under_seed() {
        let params = GenParams { n: 2, m: 4, ..GenParams::default() };
        let a = generate(GeneratorKind::UniformAdditive, &params, 42).unwrap();
        let b = generate(GeneratorKind::UniformAdditive, &params, 42).unwrap();
        assert_eq!(a, b);
        let c = generate(GeneratorKind::UniformAdditive, &params, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn family_size_respected() {
        let params = GenParams { n: 3, m: 5, k: 4, ..GenParams::default() };
        let g = generate(GeneratorKind::KXosRandom, &params, 1).unwrap();
        assert!(g.instance.valuations().iter().all(|v| v.family().len() == 4));
    }

    #[test]
    fn names_parse_back() {
        for kind in GeneratorKind::ALL {
            assert_eq!(kind.name().parse::<GeneratorKind>().unwrap(), kind);
        }
        assert!("nope".parse::<GeneratorKind>().is_err());
    }
}
