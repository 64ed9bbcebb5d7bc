use std::time::Instant;

use qst_core::estimators::{constraint_gap, default_epsilon, EpsilonChoice, EstimatorConfig};
use qst_core::experiments::{fit_rate, run_trial, DesignSpec, EstimatorKind, SweepAxis, TrialSpec};
use qst_core::measure::simulate_dataset;
use qst_core::states::random_state;

fn slope_probe(c1: f64) {
    let t0 = Instant::now();
    let ks = [50u64, 100, 200, 400, 800];
    let mut groups = Vec::new();
    let mut kl_groups = Vec::new();
    for &k in &ks {
        let eps = default_epsilon(16, 512, k, c1, (32.0f64).ln());
        let mut errs = Vec::new();
        let mut kls = Vec::new();
        let mut conv = 0;
        for seed in 0..20u64 {
            let spec = TrialSpec {
                m: 16,
                r: 2,
                estimator: EstimatorKind::DantzigEntropy,
                design: DesignSpec::Uniform {
                    n: 512,
                    shots: Some(k),
                },
                epsilon: EpsilonChoice::Fixed(eps),
                seed,
            };
            let t = run_trial(&spec).unwrap();
            errs.push(t.err_frobenius);
            kls.push(t.kl);
            conv += t.converged as u32;
        }
        let med = {
            let mut s = errs.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s[s.len() / 2]
        };
        println!("  C1={c1} K={k}: eps={eps:.3e} median_err2={med:.4e} conv={conv}/20");
        groups.push((512.0 * k as f64, errs));
        kl_groups.push((512.0 * k as f64, kls));
    }
    let fit = fit_rate(SweepAxis::NK, "frobenius", &groups, 0).unwrap();
    let klfit = fit_rate(SweepAxis::NK, "kl", &kl_groups, 0).unwrap();
    println!(
        "  C1={c1}: frob slope {:.3} (stderr {:.3}, r2 {:.3}), kl slope {:.3} in {:.1?}",
        fit.slope, fit.stderr, fit.r2, klfit.slope, t0.elapsed()
    );
}

fn feasibility_probe(c1: f64, m: usize, n: usize, k: u64, trials: u64) {
    let t = (2.0 * m as f64).ln();
    let eps = default_epsilon(m, n, k, c1, t);
    let mut hits = 0;
    for seed in 0..trials {
        let rho = random_state(m, 2, seed).unwrap();
        let ds = simulate_dataset(&rho, n, k, seed).unwrap();
        if constraint_gap(&ds, rho.data()).unwrap().gap <= eps {
            hits += 1;
        }
    }
    println!("  feasibility C1={c1} m={m} n={n} K={k}: {hits}/{trials} (eps={eps:.3e})");
}

fn main() {
    println!("feasibility of the true state at auto-epsilon:");
    for c1 in [1.5, 2.0, 3.0, 4.0] {
        feasibility_probe(c1, 16, 256, 100, 200);
        feasibility_probe(c1, 16, 512, 50, 100);
        feasibility_probe(c1, 16, 512, 800, 100);
    }

    println!("criterion-1 slope vs C1:");
    for c1 in [1.5, 2.0, 3.0] {
        slope_probe(c1);
    }

    // rank sweep probe at m=32 (criterion 2 scale, fewer seeds)
    for c1 in [1.5, 2.0] {
        let t0 = Instant::now();
        let mut frob_groups = Vec::new();
        let mut nuc_groups = Vec::new();
        for r in [1usize, 2, 4, 8] {
            let eps = default_epsilon(32, 1024, 200, c1, (64.0f64).ln());
            let mut frobs = Vec::new();
            let mut nucs = Vec::new();
            for seed in 0..20u64 {
                let spec = TrialSpec {
                    m: 32,
                    r,
                    estimator: EstimatorKind::DantzigEntropy,
                    design: DesignSpec::Uniform {
                        n: 1024,
                        shots: Some(200),
                    },
                    epsilon: EpsilonChoice::Fixed(eps),
                    seed,
                };
                let t = run_trial(&spec).unwrap();
                frobs.push(t.err_frobenius);
                nucs.push(t.err_nuclear);
            }
            let med = {
                let mut s = frobs.clone();
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                s[s.len() / 2]
            };
            println!("  C1={c1} r={r}: median_err2={med:.4e}");
            frob_groups.push((r as f64, frobs));
            nuc_groups.push((r as f64, nucs));
        }
        let f2 = fit_rate(SweepAxis::Rank, "frobenius", &frob_groups, 0).unwrap();
        let f1 = fit_rate(SweepAxis::Rank, "nuclear", &nuc_groups, 0).unwrap();
        println!(
            "  C1={c1} rank sweep: frob slope {:.3}, nuclear slope {:.3} in {:.1?}",
            f2.slope, f1.slope, t0.elapsed()
        );
    }
}
