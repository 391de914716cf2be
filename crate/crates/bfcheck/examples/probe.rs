// Scratch probe for acceptance-criteria numbers. Not part of the deliverable.

use bfcheck::engine::{run_sbc, simulate_probs, EngineConfig};
use bfcheck::fault::FaultSpec;
use bfcheck::history::fp_power_table;
use bfcheck::rng::stream_rng;
use bfcheck::scenario::{build_scenario, ScenarioParams};
use bfcheck::stats::{dap_t_test, miscalibration_test, sbc_sensitivity};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "a10" => a10(),
        "a7" => a7(),
        "a6" => a6(),
        "a11" => a11(),
        "a2" => a2(),
        _ => println!("usage: probe a2|a6|a7|a10|a11"),
    }
}

fn a10() {
    let t = Instant::now();
    for s in [2000, 10_000, 50_000] {
        let d = sbc_sensitivity(s, 0.05).unwrap();
        println!("sensitivity S={s}: {d:.5}  ({:?})", t.elapsed());
    }
}

fn a7() {
    let t = Instant::now();
    let cells = fp_power_table(
        &[
            ("good-cauchy".into(), build_scenario("good-cauchy", None, None, &ScenarioParams::default()).unwrap()),
            ("good-normal".into(), build_scenario("good-normal", None, None, &ScenarioParams::default()).unwrap()),
        ],
        &[10, 100],
        1000,
        41,
    )
    .unwrap();
    for c in &cells {
        println!("{} n={} {}: {:.3}", c.scenario, c.n, c.test, c.rate);
    }
    println!("elapsed {:?}", t.elapsed());
}

fn a6() {
    let t = Instant::now();
    let cells = fp_power_table(
        &[(
            "pnb-bias".into(),
            build_scenario("poisson-nb", Some(FaultSpec::LogBias { bias: 2.0 }), None, &ScenarioParams::default()).unwrap(),
        )],
        &[10, 20, 50],
        1000,
        42,
    )
    .unwrap();
    for c in &cells {
        println!("{} n={} {}: {:.3}", c.scenario, c.n, c.test, c.rate);
    }
    println!("elapsed {:?}", t.elapsed());
}

fn a11() {
    let t = Instant::now();
    // Mismatched prior: rejection rate of the miscalibration test at S=2000.
    let rejects: usize = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let problem = build_scenario(
                "nested-normal-posterior-mismatched",
                None,
                None,
                &ScenarioParams::default(),
            )
            .unwrap();
            let mut rng = stream_rng(1000 + seed, 0);
            let (probs, outcomes) = simulate_probs(&problem, 2000, &mut rng).unwrap();
            let rep = miscalibration_test(&probs, &outcomes, 2000, seed).unwrap();
            let t_rep = dap_t_test(&probs, problem.prior_m1().prob()).unwrap();
            println!(
                "seed {seed}: miscal p={:.4} t p={:.4}",
                rep.threshold_or_pvalue, t_rep.threshold_or_pvalue
            );
            usize::from(rep.decision.is_reject())
        })
        .sum();
    println!("mismatched rejected {rejects}/20  ({:?})", t.elapsed());
    // Correct posterior-stage run: all checks pass rates.
    let problem = build_scenario("nested-normal-posterior", None, None, &ScenarioParams::default()).unwrap();
    let set = run_sbc(&problem, &EngineConfig::new(1000, 7).with_draws(999)).unwrap();
    println!("correct run: {} records, prior {:.4}", set.len(), set.prior_m1);
}

fn a2() {
    let t = Instant::now();
    // Flip fault on binary toy: miscalibration power at a few prefix sizes.
    let problem = build_scenario("binary-toy", Some(FaultSpec::Flip), None, &ScenarioParams::default()).unwrap();
    for s in [50usize, 100, 200] {
        let rejects: usize = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let mut rng = stream_rng(33 + seed, 0);
                let (probs, outcomes) = simulate_probs(&problem, s, &mut rng).unwrap();
                let rep = miscalibration_test(&probs, &outcomes, 2000, seed).unwrap();
                usize::from(rep.decision.is_reject())
            })
            .sum();
        println!("flip S={s}: miscalibration power {}/50", rejects);
    }
    // DAP stays blind.
    let rejects: usize = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream_rng(77 + seed, 0);
            let (probs, _) = simulate_probs(&problem, 200, &mut rng).unwrap();
            usize::from(dap_t_test(&probs, 0.5).unwrap().decision.is_reject())
        })
        .sum();
    println!("flip S=200: dap power {}/50  ({:?})", rejects, t.elapsed());
}
