//! Property-suite battery behind the `check` command: basis algebra,
//! norm and divergence inequalities, packing diagnostics, and sparse/dense
//! route equivalence. Every suite returns a report instead of panicking so
//! the driver can print a full pass/fail table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimators::ResidualOperator;
use crate::linalg::{hermitian_eigen, random_hermitian, CMatrix, C64};
use crate::measure::simulate_dataset;
use crate::pauli::{accumulate, build_basis, densify_kronecker, to_sparse, PauliLabel};
use crate::states::{
    binomial_kl, build_packing, entropy_and_kl, experiment_kl, mix_identity, random_state,
    schatten_norm, PackingParams,
};

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub violations: usize,
    /// Largest deviation observed (suite-specific scale).
    pub worst: f64,
    pub detail: String,
}

impl CheckReport {
    fn from_deviations(name: &'static str, cases: usize, violations: usize, worst: f64) -> Self {
        CheckReport {
            name,
            passed: violations == 0,
            cases,
            violations,
            worst,
            detail: format!("worst deviation {worst:.3e}"),
        }
    }

    fn failed(name: &'static str, detail: String) -> Self {
        CheckReport {
            name,
            passed: false,
            cases: 0,
            violations: 1,
            worst: f64::NAN,
            detail,
        }
    }
}

const TOL: f64 = 1e-10;

fn naive_trace(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Orthonormality tr(E_j E_k) = delta_jk: exhaustive for b <= 2, sampled
/// pairs for b in {3, 4}.
pub fn check_orthonormality(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut record = |value: f64, expect: f64| {
        let dev = (value - expect).abs();
        cases += 1;
        if dev > TOL {
            violations += 1;
        }
        if dev > worst {
            worst = dev;
        }
    };
    for b in 1..=2usize {
        let dense: Vec<CMatrix> = build_basis(b)?
            .iter()
            .map(|l| to_sparse(l).densify())
            .collect();
        for (j, ej) in dense.iter().enumerate() {
            for (k, ek) in dense.iter().enumerate() {
                let v = naive_trace(ej, ek);
                record(v.re, if j == k { 1.0 } else { 0.0 });
                record(v.im, 0.0);
            }
        }
    }
    for b in 3..=4usize {
        let count = 1usize << (2 * b);
        for _ in 0..300 {
            let j = rng.random_range(1..=count);
            let k = rng.random_range(1..=count);
            let ej = to_sparse(&PauliLabel::from_index(b, j)?).densify();
            let ek = to_sparse(&PauliLabel::from_index(b, k)?).densify();
            let v = naive_trace(&ej, &ek);
            record(v.re, if j == k { 1.0 } else { 0.0 });
            record(v.im, 0.0);
        }
        for _ in 0..50 {
            let j = rng.random_range(1..=count);
            let ej = to_sparse(&PauliLabel::from_index(b, j)?).densify();
            record(naive_trace(&ej, &ej).re, 1.0);
        }
    }
    Ok(CheckReport::from_deviations(
        "pauli_orthonormality",
        cases,
        violations,
        worst,
    ))
}

/// Spectrum +-1/sqrt(m) with equal multiplicities (k >= 2), all +1/sqrt(m)
/// for the identity word.
pub fn check_spectrum(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut check_label = |b: usize, k: usize| -> Result<()> {
        let m = 1usize << b;
        let target = 1.0 / (m as f64).sqrt();
        let label = PauliLabel::from_index(b, k)?;
        let eig = hermitian_eigen(&to_sparse(&label).densify())?;
        cases += 1;
        if k == 1 {
            let dev = eig
                .values
                .iter()
                .map(|v| (v - target).abs())
                .fold(0.0f64, f64::max);
            if dev > TOL {
                violations += 1;
            }
            worst = worst.max(dev);
        } else {
            let mut plus = 0usize;
            let mut dev = 0.0f64;
            for &v in &eig.values {
                let d_plus = (v - target).abs();
                let d_minus = (v + target).abs();
                dev = dev.max(d_plus.min(d_minus));
                if d_plus < d_minus {
                    plus += 1;
                }
            }
            if dev > TOL || plus != m / 2 {
                violations += 1;
            }
            worst = worst.max(dev);
        }
        Ok(())
    };
    for b in 1..=2usize {
        for k in 1..=(1usize << (2 * b)) {
            check_label(b, k)?;
        }
    }
    for b in 3..=4usize {
        let count = 1usize << (2 * b);
        check_label(b, 1)?;
        for _ in 0..40 {
            let k = rng.random_range(2..=count);
            check_label(b, k)?;
        }
    }
    Ok(CheckReport::from_deviations(
        "pauli_spectrum",
        cases,
        violations,
        worst,
    ))
}

/// Parseval: sum_k <A, E_k>^2 = ||A||_2^2 for random Hermitian A.
pub fn check_parseval(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for b in 1..=4usize {
        let m = 1 << b;
        let basis = build_basis(b)?;
        let reps = if b <= 2 { 20 } else { 8 };
        for _ in 0..reps {
            let a = random_hermitian(m, 1.0, &mut rng);
            let mut sum = 0.0;
            for label in &basis {
                let c = to_sparse(label).inner(&a)?;
                sum += c * c;
            }
            let target = a.norm_squared();
            let dev = (sum - target).abs() / (1.0 + target);
            cases += 1;
            if dev > TOL {
                violations += 1;
            }
            worst = worst.max(dev);
        }
    }
    Ok(CheckReport::from_deviations(
        "pauli_parseval",
        cases,
        violations,
        worst,
    ))
}

/// Trace-norm cone bound `||S1 - S||_1 <= 2 sqrt(2l) ||S1 - S||_2` for
/// rank(S) <= l, on 1000 random instances.
pub fn check_trace_cone(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let cases = 1000usize;
    for _ in 0..cases {
        let m = 1usize << rng.random_range(1..=3usize);
        let l = rng.random_range(1..=m);
        let s = random_state(m, l, rng.random())?;
        let s1 = random_state(m, rng.random_range(1..=m), rng.random())?;
        let diff = s1.data() - s.data();
        let n1 = schatten_norm(&diff, 1.0)?;
        let n2 = schatten_norm(&diff, 2.0)?;
        let margin = n1 - 2.0 * (2.0 * l as f64).sqrt() * n2;
        if margin > TOL {
            violations += 1;
        }
        worst = worst.max(margin);
    }
    Ok(CheckReport::from_deviations(
        "trace_cone_bound",
        cases,
        violations,
        worst,
    ))
}

/// Interpolation `||A||_q <= ||A||_p^mu ||A||_r^(1-mu)` on 1000 random
/// Hermitian matrices for three (p, q, r) triples.
pub fn check_interpolation(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let combos = [
        (1.0, 2.0, f64::INFINITY),
        (1.0, 4.0 / 3.0, 2.0),
        (2.0, 3.0, f64::INFINITY),
    ];
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = 1usize << rng.random_range(1..=3usize);
        let a = random_hermitian(m, 1.0, &mut rng);
        for &(p, q, r) in &combos {
            let mu = if r.is_infinite() {
                p / q
            } else {
                p * (r - q) / (q * (r - p))
            };
            let lhs = schatten_norm(&a, q)?;
            let rhs = schatten_norm(&a, p)?.powf(mu) * schatten_norm(&a, r)?.powf(1.0 - mu);
            let margin = (lhs - rhs) / (1.0 + rhs);
            cases += 1;
            if margin > TOL {
                violations += 1;
            }
            worst = worst.max(margin);
        }
    }
    Ok(CheckReport::from_deviations(
        "interpolation_bound",
        cases,
        violations,
        worst,
    ))
}

/// `KL(Bin(K,p) || Bin(K,q)) <= 8 K (p-q)^2` on the 50x50 grid of
/// p, q in [0.15, 0.85] for K in {1, 10, 100}.
pub fn check_binomial_kl_bound(_seed: u64) -> Result<CheckReport> {
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for shots in [1u64, 10, 100] {
        for i in 0..50 {
            for j in 0..50 {
                let p = 0.15 + 0.7 * i as f64 / 49.0;
                let q = 0.15 + 0.7 * j as f64 / 49.0;
                let margin = binomial_kl(shots, p, q) - 8.0 * shots as f64 * (p - q) * (p - q);
                cases += 1;
                if margin > TOL {
                    violations += 1;
                }
                worst = worst.max(margin);
            }
        }
    }
    Ok(CheckReport::from_deviations(
        "binomial_kl_quadratic_bound",
        cases,
        violations,
        worst,
    ))
}

/// Experiment divergence dominated by the Frobenius distance,
/// `experiment_kl <= (nK/m) ||r1 - r2||_2^2`, over all ordered pairs of an
/// 8-state packing at b = 3.
pub fn check_packing_experiment_kl(seed: u64) -> Result<CheckReport> {
    let params = PackingParams::new(8, 2, 256, 100, 2.0, 8, seed);
    let inst = match build_packing(&params) {
        Ok(i) => i,
        Err(e) => {
            return Ok(CheckReport::failed(
                "packing_experiment_kl",
                format!("packing generation failed: {e}"),
            ))
        }
    };
    let overlap = inst.max_pauli_overlap()?;
    if overlap > 0.7 {
        return Ok(CheckReport::failed(
            "packing_experiment_kl",
            format!("packing overlap {overlap:.3} exceeds 0.7 (v_quality {:.3})", inst.v_quality),
        ));
    }
    let nk = params.n as f64 * params.shots as f64;
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..inst.states.len() {
        for j in 0..inst.states.len() {
            if i == j {
                continue;
            }
            let kl = experiment_kl(&inst.states[i], &inst.states[j], params.n, params.shots)?;
            let frob = schatten_norm(&(inst.states[i].data() - inst.states[j].data()), 2.0)?;
            let margin = kl - nk / 8.0 * frob * frob;
            cases += 1;
            if margin > 1e-9 {
                violations += 1;
            }
            worst = worst.max(margin);
        }
    }
    Ok(CheckReport::from_deviations(
        "packing_experiment_kl",
        cases,
        violations,
        worst,
    ))
}

/// Mixing bound `K(rho || S) <= (K(rho' || S) + h(delta)) / (1 - delta)` on
/// 200 random triples for delta in {0.1, 0.01}.
pub fn check_mixing_bound(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let m = 1usize << rng.random_range(1..=3usize);
        let rho = random_state(m, rng.random_range(1..=m), rng.random())?;
        let s = random_state(m, m, rng.random())?;
        for delta in [0.1, 0.01] {
            let rho_p = mix_identity(&rho, delta)?;
            let lhs = entropy_and_kl(&rho, &s)?.kl;
            let klp = entropy_and_kl(&rho_p, &s)?.kl;
            let h = delta * (1.0 / delta).ln() + (1.0 - delta) * (1.0 / (1.0 - delta)).ln();
            let margin = lhs - (klp + h) / (1.0 - delta);
            cases += 1;
            if margin > 1e-9 {
                violations += 1;
            }
            worst = worst.max(margin);
        }
    }
    Ok(CheckReport::from_deviations(
        "mixing_divergence_bound",
        cases,
        violations,
        worst,
    ))
}

/// Sparse route against the dense Kronecker oracle for inner products,
/// accumulation, residuals and constraint gaps.
pub fn check_sparse_dense_equivalence(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0usize;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut record = |dev: f64| {
        cases += 1;
        if dev > TOL {
            violations += 1;
        }
        worst = worst.max(dev);
    };

    // inner products
    for b in 1..=4usize {
        let m = 1 << b;
        let count = 1usize << (2 * b);
        for _ in 0..100 {
            let s = random_hermitian(m, 1.0, &mut rng);
            let label = PauliLabel::from_index(b, rng.random_range(1..=count))?;
            let fast = to_sparse(&label).inner(&s)?;
            let slow = naive_trace(&s, &densify_kronecker(&label));
            record((fast - slow.re).abs());
            record(slow.im.abs());
        }
    }

    // accumulation
    for b in 1..=4usize {
        let m = 1 << b;
        let count = 1usize << (2 * b);
        for _ in 0..25 {
            let terms: Vec<(PauliLabel, f64)> = (0..rng.random_range(1..=6usize))
                .map(|_| {
                    let label = PauliLabel::from_index(b, rng.random_range(1..=count))
                        .expect("valid index");
                    (label, rng.random_range(-2.0..2.0))
                })
                .collect();
            let fast = accumulate(m, &terms)?;
            let mut slow = CMatrix::zeros(m, m);
            for (label, c) in &terms {
                slow += densify_kronecker(label).scale(*c);
            }
            record((&fast - &slow).norm());
        }
    }

    // residuals and constraint gaps on simulated datasets
    for b in 1..=3usize {
        let m = 1 << b;
        for _ in 0..10 {
            let rho = random_state(m, 2.min(m), rng.random())?;
            let ds = simulate_dataset(&rho, 40, 8, rng.random())?;
            let s = random_hermitian(m, 0.5, &mut rng);
            let op = ResidualOperator::new(&ds)?;
            let fast = op.residual(&s)?;

            let mut slow = CMatrix::zeros(m, m);
            for (label, &y) in ds.labels().zip(ds.y().iter()) {
                let x = densify_kronecker(label);
                let tr = naive_trace(&s, &x);
                slow += x.scale(y - tr.re);
            }
            slow = slow.unscale(ds.n() as f64);
            record((&fast - &slow).norm());

            let gap = op.gap(&s)?.gap;
            let dense_gap = hermitian_eigen(&slow)?.op_norm();
            record((gap - dense_gap).abs());

            // the subgradient route agrees with the dense per-record sum
            let info = op.gap(&s)?;
            let grad = op.penalty_gradient(&info.eigenvector, info.sign)?;
            let mut reference = CMatrix::zeros(m, m);
            for label in ds.labels() {
                let x = densify_kronecker(label);
                let q = (info.eigenvector.adjoint() * &x * &info.eigenvector)[(0, 0)].re;
                reference += x.scale(q);
            }
            let reference = reference.scale(-info.sign / ds.n() as f64);
            record((&grad - &reference).norm());
        }
    }

    Ok(CheckReport::from_deviations(
        "sparse_dense_equivalence",
        cases,
        violations,
        worst,
    ))
}

/// Runs the whole battery with per-suite derived seeds.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_orthonormality(seed)?,
        check_spectrum(seed.wrapping_add(1))?,
        check_parseval(seed.wrapping_add(2))?,
        check_trace_cone(seed.wrapping_add(3))?,
        check_interpolation(seed.wrapping_add(4))?,
        check_binomial_kl_bound(seed.wrapping_add(5))?,
        check_packing_experiment_kl(seed.wrapping_add(6))?,
        check_mixing_bound(seed.wrapping_add(7))?,
        check_sparse_dense_equivalence(seed.wrapping_add(8))?,
    ])
}
