//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::time::{Duration, Instant};

use xos_nsw::capped_welfare::CappedWelfare;
use xos_nsw::exact::{best_goods, brute_force_demand, brute_force_nsw, concentration_experiment};
use xos_nsw::gadgets::{
    construct_equicovering, reduce_multidisjointness, verify_equicovering, MultiDisjointnessInstance,
    VerifyMode,
};
use xos_nsw::generate::{generate, random_xos, GenParams, GeneratorKind};
use xos_nsw::io::{emit_instance, parse_instance, InstanceFile, Metadata, SolveReport};
use xos_nsw::matching::{repeated_matchings, verify_matchhigh};
use xos_nsw::moving_knife::{discrete_moving_knife, knife_share};
use xos_nsw::numeric::{matching_rounds, EPS_NUM};
use xos_nsw::rng::SeededRng;
use xos_nsw::solver::{nsw, rematch_bound_check, solve, solve_with, SolveOptions};
use xos_nsw::suites::{optimal_allocation, random_instance};
use xos_nsw::valuations::{AdditiveFunction, Bundle, Instance, PriceVector, XosValuation};

/// Relative slack on every "≥ threshold" comparison below.
const TOL: f64 = EPS_NUM;
const DEMAND_BUDGET: Duration = Duration::from_secs(30);
const CONCENTRATION_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn geq(value: f64, threshold: f64) -> bool {
    value >= threshold * (1.0 - TOL)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 demand oracle matches exhaustive search", c1_demand),
        ("2 repeated matchings dominate g*", c2_matchhigh),
        ("3 moving knife guarantees", c3_moving_knife),
        ("4 capped welfare guarantees", c4_capped_welfare),
        ("5 random-halving concentration", c5_concentration),
        ("6 rematching loses at most half", c6_rematch),
        ("7 end-to-end ratio vs optimum", c7_end_to_end),
        ("8 equicovering gadget gap", c8_gadget),
        ("9 solve reports are deterministic", c9_determinism),
        ("10 instance files round-trip", c10_round_trip),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        println!(
            "criterion {name}: {} ({}; {:.2}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn random_prices(m: usize, rng: &mut SeededRng) -> PriceVector {
    PriceVector::new(
        (0..m)
            .map(|_| match rng.below(10) {
                0 => f64::INFINITY,
                1 => 0.0,
                _ => rng.unit(),
            })
            .collect(),
    )
    .unwrap()
}

fn c1_demand() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(101);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let m = 1 + rng.below(12);
        let k = 1 + rng.below(5);
        let v = random_xos(m, k, 0.15, &mut rng);
        let p = random_prices(m, &mut rng);
        if v.demand(&p) != brute_force_demand(&v, &p).unwrap() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < DEMAND_BUDGET,
        format!("{mismatches} mismatches in 1000 trials"),
    )
}

fn c2_matchhigh() -> Outcome {
    let mut rng = SeededRng::new(202);
    let mut failures = 0;
    for t in 0..200 {
        let n = 2 + t % 3;
        let ceil_log = (n as f64).log2().ceil() as usize;
        let m = n * (ceil_log + 1) + n;
        let inst = random_instance(n, m, &mut rng);
        let (opt, _) = optimal_allocation(&inst).unwrap();
        let gstar = best_goods(&inst, &opt);
        let (kept, _) = repeated_matchings(&inst, &inst.all_goods(), matching_rounds(n));
        let h = verify_matchhigh(&inst, &kept, &gstar).unwrap();
        // Independent check of the returned matching.
        let ok = h.is_some_and(|h| {
            let distinct: Bundle = h.iter().copied().collect();
            distinct.len() == n
                && h.iter().all(|g| kept.contains(g))
                && (0..n).all(|i| {
                    let v = inst.valuation(i);
                    geq(v.single(h[i]), gstar[i].map_or(0.0, |g| v.single(g)))
                })
        });
        if !ok {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} failures in 200 instances"))
}

/// `n` agents, each with an intended bundle of many goods worth less than
/// `1/(16n)` of the bundle; other goods get random noise.
fn tiny_goods_instance(n: usize, rng: &mut SeededRng) -> (Instance, Vec<Bundle>) {
    let sizes: Vec<usize> = (0..n).map(|_| 20 * n + rng.below(8 * n)).collect();
    let m: usize = sizes.iter().sum();
    let mut intended = Vec::with_capacity(n);
    let mut offset = 0;
    for &s in &sizes {
        intended.push((offset..offset + s).collect::<Bundle>());
        offset += s;
    }
    let valuations = (0..n)
        .map(|i| {
            let k = 1 + rng.below(2);
            let family = (0..k)
                .map(|_| {
                    let w = (0..m)
                        .map(|g| {
                            if intended[i].contains(&g) {
                                0.9 + 0.1 * rng.unit()
                            } else if rng.coin() {
                                rng.unit()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    AdditiveFunction::new(w).unwrap()
                })
                .collect();
            XosValuation::new(family).unwrap()
        })
        .collect();
    (Instance::new(m, valuations).unwrap(), intended)
}

fn c3_moving_knife() -> Outcome {
    let mut rng = SeededRng::new(303);
    let mut failures = 0;
    for _ in 0..500 {
        let n = 1 + rng.below(4);
        let m = rng.below(30 * n + 1);
        let inst = random_instance(n, m, &mut rng);
        let pool: Bundle = (0..m).filter(|_| rng.below(4) != 0).collect();
        let out = discrete_moving_knife(&inst, &pool);
        let total: usize = out.bundles.iter().map(Bundle::len).sum();
        let union: Bundle = out.bundles.iter().flatten().copied().collect();
        if total != pool.len() || union != pool {
            failures += 1;
        }
        for a in (0..n).filter(|&a| out.assigned_in_sweep[a]) {
            let v = inst.valuation(a);
            // v'_a(S) = v_a(S ∩ G_a), recomputed here from the support.
            let mine = v.value_of(out.bundles[a].intersection(&out.supports[a]).copied());
            let all = v.value_of(pool.intersection(&out.supports[a]).copied());
            if !geq(mine, all / (16.0 * n as f64)) {
                failures += 1;
            }
        }
    }
    let mut targeted = 0;
    for _ in 0..100 {
        let n = 1 + rng.below(4);
        let (inst, intended) = tiny_goods_instance(n, &mut rng);
        let out = discrete_moving_knife(&inst, &inst.all_goods());
        for i in 0..n {
            let v = inst.valuation(i);
            let whole = v.value(&intended[i]);
            let top = intended[i].iter().map(|&g| v.single(g)).fold(0.0, f64::max);
            if top < knife_share(n) * whole {
                targeted += 1;
                if !geq(v.value(&out.bundles[i]), knife_share(n) * whole) {
                    failures += 1;
                }
            }
        }
    }
    outcome(
        failures == 0 && targeted > 0,
        format!("{failures} failures; {targeted} targeted agents checked"),
    )
}

fn c4_capped_welfare() -> Outcome {
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut check_run = |inst: &Instance, pool: &Bundle, betas: &[f64], guarantee: Option<(f64, &str)>, label: String| {
        let n = inst.n();
        let cap = 1.0 / (n as f64).sqrt();
        let cw = CappedWelfare::new(inst, pool, betas).unwrap();
        let mut invariant_ok = true;
        let out = cw
            .run_observed(|state, _| {
                for (j, y) in state.bundles.iter().enumerate() {
                    if !(betas[j] * inst.valuation(j).value(y) < cap) {
                        invariant_ok = false;
                    }
                }
            })
            .unwrap();
        runs += 1;
        if !invariant_ok {
            failures.push(format!("{label}: a bundle reached the cap"));
        }
        if out.iterations.len() > 225 * n {
            failures.push(format!("{label}: {} iterations", out.iterations.len()));
        }
        let min_gain = 1.0 / (225.0 * (n as f64).sqrt()) - TOL;
        for it in &out.iterations {
            if it.welfare_after - it.welfare_before < min_gain {
                failures.push(format!("{label}: iteration {} gained too little", it.iteration));
            }
        }
        let recomputed: f64 = (0..n)
            .map(|j| cap.min(betas[j] * inst.valuation(j).value(&out.bundles[j])))
            .sum();
        if (recomputed - out.welfare).abs() > 1e-12 {
            failures.push(format!("{label}: welfare mismatch"));
        }
        if let Some((bound, what)) = guarantee {
            if !geq(out.welfare, bound) {
                failures.push(format!("{label}: welfare {} below {what} {bound}", out.welfare));
            }
        }
    };
    for n in [4, 9, 16] {
        for t in 0..10 {
            let params = GenParams {
                n,
                distractors: t * n,
                ..GenParams::default()
            };
            let g = generate(GeneratorKind::P1p2Witness, &params, 400 + t as u64).unwrap();
            let w = g.witness.unwrap();
            // Σ_Ā v̂_i(O_i), computed from the definition with β = 1.
            let cap = 1.0 / (n as f64).sqrt();
            let benchmark: f64 = w
                .agents
                .iter()
                .map(|&i| cap.min(g.instance.valuation(i).value(&w.reference[i])))
                .sum();
            let pool = g.instance.all_goods();
            check_run(
                &g.instance,
                &pool,
                &vec![1.0; n],
                Some((2.0 / 25.0 * benchmark, "2/25 of benchmark")),
                format!("witness n={n} t={t}"),
            );
        }
    }
    let mut rng = SeededRng::new(404);
    for t in 0..100 {
        let n = 1 + rng.below(6);
        let m = rng.below(25);
        let inst = random_instance(n, m, &mut rng);
        let betas: Vec<f64> = (0..n).map(|_| 0.05 + 2.0 * rng.unit()).collect();
        let pool: Bundle = (0..m).filter(|_| rng.coin()).collect();
        check_run(&inst, &pool, &betas, None, format!("random t={t}"));
    }
    outcome(
        failures.is_empty(),
        format!("{runs} runs, {} failures{}", failures.len(), failures.first().map_or(String::new(), |f| format!(", first: {f}"))),
    )
}

fn c5_concentration() -> Outcome {
    let start = Instant::now();
    let trials = 10_000;
    let mut details = Vec::new();
    let mut pass = true;
    for n in [256usize, 1024] {
        // √n equal goods: every good sits exactly at the v(N̄)/√n limit.
        let m = (n as f64).sqrt() as usize;
        let v = XosValuation::additive(vec![1.0; m]).unwrap();
        let nbar: Bundle = (0..m).collect();
        let r = concentration_experiment(&v, &nbar, n, trials, 7).unwrap();
        let p = (-(n as f64).sqrt() / 18.0).exp();
        let limit = p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
        pass &= r.frequency <= limit && !r.degenerate;
        details.push(format!("n={n}: {} <= {limit:.4}", r.frequency));
    }
    pass &= start.elapsed() < CONCENTRATION_BUDGET;
    outcome(pass, details.join(", "))
}

fn c6_rematch() -> Outcome {
    let mut rng = SeededRng::new(606);
    let mut checked = 0;
    let mut failures = 0;
    let mut drawn = 0;
    while checked < 100 && drawn < 10_000 {
        drawn += 1;
        let n = 1 + rng.below(3);
        let m = n + rng.below(9 - n);
        let inst = random_instance(n, m, &mut rng);
        let (opt, _) = brute_force_nsw(&inst).unwrap();
        let gstar = best_goods(&inst, &opt);
        let (q, trace) = solve(&inst, rng.next_u64()).unwrap();
        if verify_matchhigh(&inst, &trace.kept, &gstar).unwrap().is_none() {
            continue;
        }
        checked += 1;
        let (nsw_q, nsw_star) = rematch_bound_check(&inst, &trace, &gstar).unwrap();
        // Recompute both sides from scratch.
        let direct_q = nsw(&inst, &q);
        let star: Vec<Bundle> = (0..n)
            .map(|i| {
                let mut b = trace.pre_rematch(i);
                b.extend(gstar[i]);
                b
            })
            .collect();
        let values: Vec<f64> = (0..n).map(|i| inst.valuation(i).value(&star[i])).collect();
        let direct_star = if values.iter().any(|&v| v == 0.0) {
            0.0
        } else {
            values.iter().product::<f64>().powf(1.0 / n as f64)
        };
        if (direct_q - nsw_q).abs() > 1e-9 || (direct_star - nsw_star).abs() > 1e-9 {
            failures += 1;
        }
        if !geq(nsw_q, 0.5 * nsw_star) {
            failures += 1;
        }
    }
    outcome(
        failures == 0 && checked == 100,
        format!("{checked} qualifying instances of {drawn} drawn, {failures} failures"),
    )
}

fn c7_end_to_end() -> Outcome {
    let mut rng = SeededRng::new(707);
    let seeds = [1u64, 2, 3, 4, 5];
    let mut failures = 0;
    let mut ratios = Vec::new();
    for _ in 0..300 {
        let n = 1 + rng.below(3);
        let m = n + rng.below(9 - n);
        let inst = random_instance(n, m, &mut rng);
        let (_, opt) = brute_force_nsw(&inst).unwrap();
        let bound = (1.0 / 512.0) * (n as f64).powf(-53.0 / 54.0) * opt;
        for &seed in &seeds {
            let (q, _) = solve(&inst, seed).unwrap();
            let value = nsw(&inst, &q);
            if !geq(value, bound) {
                failures += 1;
            }
            if opt > 0.0 {
                ratios.push(value / opt);
            }
        }
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    outcome(
        failures == 0,
        format!("{failures} failures over 1500 runs; median NSW/OPT {median:.4}"),
    )
}

fn c8_gadget() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let (e, v, _) = construct_equicovering(4, 2, 2, 0.0, VerifyMode::exhaustive(), 8, 50)
        .unwrap()
        .expect("a (2, 2, 0)-equicovering of [4] exists");
    pass &= v.holds;
    let inter = MultiDisjointnessInstance::new(2, vec![[0].into(), [0].into()]).unwrap();
    let case1 = brute_force_nsw(&reduce_multidisjointness(&inter, &e).unwrap()).unwrap().1;
    let disj = MultiDisjointnessInstance::new(2, vec![[0].into(), [1].into()]).unwrap();
    let case2 = brute_force_nsw(&reduce_multidisjointness(&disj, &e).unwrap()).unwrap().1;
    pass &= case1 == 2.0 && case2 <= 1.5 * (1.0 + TOL);
    notes.push(format!("n=2: case1 {case1}, case2 {case2:.4}"));

    let (n, m, r) = (3usize, 9usize, 3usize);
    let bound = (m as f64 / n as f64) * (1.0 - (1.0 - 1.0 / n as f64).powi(n as i32));
    let mut verified = 0;
    for seed in 0..20 {
        let Some((e, _, _)) =
            construct_equicovering(m, n, r, 0.0, VerifyMode::exhaustive(), seed, 2000).unwrap()
        else {
            continue;
        };
        // Re-verify independently of the construction loop.
        if !verify_equicovering(&e, 0.0, VerifyMode::exhaustive()).unwrap().holds {
            pass = false;
            continue;
        }
        verified += 1;
        for x in 0..r {
            let md = MultiDisjointnessInstance::new(r, vec![[x].into(); n]).unwrap();
            let opt = brute_force_nsw(&reduce_multidisjointness(&md, &e).unwrap()).unwrap().1;
            pass &= (opt - 3.0).abs() <= 1e-12;
        }
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for s in orders {
            let md = MultiDisjointnessInstance::new(r, s.iter().map(|&x| [x].into()).collect()).unwrap();
            let opt = brute_force_nsw(&reduce_multidisjointness(&md, &e).unwrap()).unwrap().1;
            pass &= opt <= bound * (1.0 + TOL);
        }
    }
    pass &= verified > 0;
    notes.push(format!("n=3, m=9: {verified} of 20 seeds verified"));
    outcome(pass, notes.join("; "))
}

fn c9_determinism() -> Outcome {
    let mut rng = SeededRng::new(909);
    let mut diffs = 0;
    let mut runs = 0;
    for t in 0..30 {
        let n = 1 + rng.below(5);
        let m = rng.below(40);
        let file = InstanceFile {
            instance: random_instance(n, m, &mut rng),
            metadata: None,
        };
        let seed = rng.next_u64();
        let topup = t % 2 == 1;
        let emit = || {
            let (q, trace) = solve_with(&file.instance, seed, SolveOptions { topup }).unwrap();
            SolveReport::new(&file, &q, trace, SolveOptions { topup }).emit()
        };
        let (a, b) = (emit(), emit());
        runs += 1;
        if a != b {
            diffs += 1;
        }
        let parsed = SolveReport::parse(&a).unwrap();
        if parsed.check(&file).is_err() || parsed.emit() != a {
            diffs += 1;
        }
    }
    outcome(diffs == 0, format!("{runs} instance/seed pairs, {diffs} differences"))
}

fn c10_round_trip() -> Outcome {
    let mut rng = SeededRng::new(1010);
    let mut diffs = 0;
    for t in 0..1000 {
        let n = 1 + rng.below(5);
        let m = rng.below(12);
        let k = 1 + rng.below(4);
        let valuations = (0..n)
            .map(|_| {
                let family = (0..k)
                    .map(|_| {
                        let w = (0..m)
                            .map(|_| match rng.below(6) {
                                0 => 0.0,
                                1 => rng.unit() * 1e-300,
                                2 => rng.unit() * 1e300,
                                3 => rng.below(1000) as f64,
                                _ => rng.unit(),
                            })
                            .collect();
                        AdditiveFunction::new(w).unwrap()
                    })
                    .collect();
                XosValuation::new(family).unwrap()
            })
            .collect();
        let file = InstanceFile {
            instance: Instance::new(m, valuations).unwrap(),
            metadata: (t % 3 == 0).then(|| Metadata {
                name: Some(format!("case \"{t}\"")),
                generator: None,
                seed: Some(rng.next_u64()),
            }),
        };
        let text = emit_instance(&file);
        match parse_instance(&text) {
            Ok(back) if back == file && emit_instance(&back) == text => {}
            _ => diffs += 1,
        }
    }
    outcome(diffs == 0, format!("{diffs} diffs in 1000 instances"))
}
