//! Sweep harness: runs seeded estimation trials over (m, n, K, r) grids,
//! measures Schatten and divergence errors, and fits log-log rate
//! exponents with bootstrap error bars.
//!
//! Outputs are deterministic given the manifest: trials run in a rayon
//! pool but results are reduced in manifest order, and timing never enters
//! the reproducible files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    dantzig_entropy, dantzig_nuclear, least_squares, EpsilonChoice, EstimatorConfig, Objective,
};
use crate::measure::{noiseless_dataset, noiseless_full_basis, simulate_dataset};
use crate::states::{entropy_and_kl, project_spectrahedron, random_state, schatten_norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "entropy")]
    DantzigEntropy,
    #[serde(rename = "nuclear")]
    DantzigNuclear,
    #[serde(rename = "least_squares")]
    LeastSquares,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::DantzigEntropy => "entropy",
            EstimatorKind::DantzigNuclear => "nuclear",
            EstimatorKind::LeastSquares => "least_squares",
        }
    }

    pub fn parse(s: &str) -> Result<EstimatorKind> {
        match s {
            "entropy" => Ok(EstimatorKind::DantzigEntropy),
            "nuclear" => Ok(EstimatorKind::DantzigNuclear),
            "least_squares" => Ok(EstimatorKind::LeastSquares),
            _ => Err(Error::InvalidArgument(format!(
                "unknown estimator '{s}' (expected entropy, nuclear or least_squares)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DesignSpec {
    /// n uniform draws; `shots: None` means noiseless responses.
    Uniform { n: usize, shots: Option<u64> },
    /// Every label measured once, noiselessly.
    FullBasisNoiseless,
}

#[derive(Clone, Debug)]
pub struct TrialSpec {
    pub m: usize,
    pub r: usize,
    pub estimator: EstimatorKind,
    pub design: DesignSpec,
    pub epsilon: EpsilonChoice,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub shots: Option<u64>,
    pub estimator: EstimatorKind,
    pub epsilon: f64,
    pub seed: u64,
    /// Schatten errors of the estimate at p = 1, 2, infinity.
    pub err_nuclear: f64,
    pub err_frobenius: f64,
    pub err_spectral: f64,
    /// `K(rho || rho_hat)`; the nuclear baseline is projected onto the
    /// spectrahedron for this metric only.
    pub kl: f64,
    pub kl_floored: bool,
    pub runtime_s: f64,
    pub converged: bool,
    /// Whether the trial sits in the K <= m regime.
    pub k_le_m: Option<bool>,
    pub dataset_hash: String,
}

impl TrialResult {
    /// Equality of everything that is seeded (runtime excluded).
    pub fn same_outcome(&self, other: &TrialResult) -> bool {
        self.m == other.m
            && self.r == other.r
            && self.n == other.n
            && self.shots == other.shots
            && self.estimator == other.estimator
            && self.epsilon == other.epsilon
            && self.seed == other.seed
            && self.err_nuclear == other.err_nuclear
            && self.err_frobenius == other.err_frobenius
            && self.err_spectral == other.err_spectral
            && self.kl == other.kl
            && self.kl_floored == other.kl_floored
            && self.converged == other.converged
            && self.dataset_hash == other.dataset_hash
    }

    pub fn csv_header() -> &'static str {
        "m,r,n,K,estimator,epsilon,seed,err_p1,err_p2,err_pinf,kl,kl_floored,converged,k_le_m,dataset_hash"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.r,
            self.n,
            self.shots.map(|k| k.to_string()).unwrap_or_default(),
            self.estimator.name(),
            self.epsilon,
            self.seed,
            self.err_nuclear,
            self.err_frobenius,
            self.err_spectral,
            self.kl,
            self.kl_floored,
            self.converged,
            self.k_le_m.map(|b| b.to_string()).unwrap_or_default(),
            self.dataset_hash,
        )
    }
}

/// Runs one seeded trial: state generation, measurement simulation,
/// estimation and all error metrics. Estimator non-convergence is recorded
/// in the result, never raised.
pub fn run_trial(spec: &TrialSpec) -> Result<TrialResult> {
    let rho = random_state(spec.m, spec.r, spec.seed)?;
    let dataset = match spec.design {
        DesignSpec::Uniform { n, shots: Some(k) } => simulate_dataset(&rho, n, k, spec.seed)?,
        DesignSpec::Uniform { n, shots: None } => noiseless_dataset(&rho, n, spec.seed)?,
        DesignSpec::FullBasisNoiseless => noiseless_full_basis(&rho)?,
    };
    let mut config = EstimatorConfig::default();
    config.epsilon = spec.epsilon;

    let started = Instant::now();
    let solution = match spec.estimator {
        EstimatorKind::DantzigEntropy => dantzig_entropy(&dataset, &config)?,
        EstimatorKind::DantzigNuclear => {
            let warm = dantzig_entropy(&dataset, &config)?;
            let mut nuclear_cfg = config.clone();
            nuclear_cfg.objective = Objective::Nuclear;
            dantzig_nuclear(&dataset, &nuclear_cfg, Some(warm.estimate.matrix()))?
        }
        EstimatorKind::LeastSquares => least_squares(&dataset, &config)?,
    };
    let runtime_s = started.elapsed().as_secs_f64();

    let diff = solution.estimate.matrix() - rho.data();
    let err_nuclear = schatten_norm(&diff, 1.0)?;
    let err_frobenius = schatten_norm(&diff, 2.0)?;
    let err_spectral = schatten_norm(&diff, f64::INFINITY)?;

    // per-trial sanity: norm ordering, interpolation consistency, and the
    // trace-norm cone bound for in-model estimates
    const SLACK: f64 = 1e-9;
    assert!(err_spectral <= err_frobenius + SLACK);
    assert!(err_frobenius <= err_nuclear + SLACK);
    assert!(err_frobenius <= (err_nuclear * err_spectral).sqrt() + SLACK);
    assert!(err_nuclear <= 2.0 + SLACK);
    if solution.estimate.as_density().is_some() {
        let cone = 2.0 * (2.0 * spec.r as f64).sqrt();
        assert!(err_nuclear <= cone * err_frobenius + SLACK);
    }

    let density_estimate = match solution.estimate.as_density() {
        Some(d) => d.clone(),
        None => project_spectrahedron(solution.estimate.matrix())?,
    };
    let div = entropy_and_kl(&rho, &density_estimate)?;

    Ok(TrialResult {
        m: spec.m,
        r: spec.r,
        n: dataset.n(),
        shots: dataset.meta().shots,
        estimator: spec.estimator,
        epsilon: solution.epsilon,
        seed: spec.seed,
        err_nuclear,
        err_frobenius,
        err_spectral,
        kl: div.kl,
        kl_floored: div.floored,
        runtime_s,
        converged: solution.converged,
        k_le_m: dataset.meta().shots.map(|k| k as usize <= spec.m),
        dataset_hash: dataset.sha256_hex(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "nK")]
    NK,
    #[serde(rename = "r")]
    Rank,
    #[serde(rename = "m")]
    Dim,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NK => "nK",
            SweepAxis::Rank => "r",
            SweepAxis::Dim => "m",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ValueOrList<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> ValueOrList<T> {
    fn values(&self) -> Vec<T> {
        match self {
            ValueOrList::One(v) => vec![*v],
            ValueOrList::Many(v) => v.clone(),
        }
    }

    fn is_many(&self) -> bool {
        matches!(self, ValueOrList::Many(_))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum EpsilonField {
    Auto(String),
    Fixed(f64),
}

impl EpsilonField {
    fn resolve(&self) -> Result<EpsilonChoice> {
        match self {
            EpsilonField::Fixed(v) => Ok(EpsilonChoice::Fixed(*v)),
            EpsilonField::Auto(s) if s == "auto" => Ok(EpsilonChoice::Auto),
            EpsilonField::Auto(s) => Err(Error::InvalidArgument(format!(
                "epsilon must be a number or \"auto\", got '{s}'"
            ))),
        }
    }
}

fn default_epsilon_field() -> EpsilonField {
    EpsilonField::Auto("auto".to_string())
}

/// Sweep manifest: exactly one of m, r, n, K carries a list (the swept
/// axis); `seeds` trials run per grid point with seeds
/// `seed_base..seed_base+seeds`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub schema_version: u32,
    pub m: ValueOrList<usize>,
    pub r: ValueOrList<usize>,
    pub n: ValueOrList<usize>,
    #[serde(rename = "K", default)]
    pub shots: Option<ValueOrList<u64>>,
    pub estimator: EstimatorKind,
    #[serde(default = "default_epsilon_field")]
    pub epsilon: EpsilonField,
    pub seeds: u64,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl SweepManifest {
    pub fn axis(&self) -> Result<SweepAxis> {
        let mut axes = Vec::new();
        if self.m.is_many() {
            axes.push(SweepAxis::Dim);
        }
        if self.r.is_many() {
            axes.push(SweepAxis::Rank);
        }
        if self.n.is_many() {
            axes.push(SweepAxis::NK);
        }
        if self.shots.as_ref().map(|s| s.is_many()).unwrap_or(false) {
            axes.push(SweepAxis::NK);
        }
        match axes.as_slice() {
            [axis] => Ok(*axis),
            [] => Err(Error::InvalidArgument(
                "sweep manifest must vary exactly one axis (none found)".into(),
            )),
            _ => Err(Error::InvalidArgument(
                "sweep manifest must vary exactly one axis (several found)".into(),
            )),
        }
    }

    /// Grid expansion in manifest order: (x value, specs per seed).
    pub fn expand(&self) -> Result<Vec<(f64, Vec<TrialSpec>)>> {
        if self.schema_version != 1 {
            return Err(Error::InvalidArgument(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("seeds must be >= 1".into()));
        }
        self.axis()?;
        let epsilon = self.epsilon.resolve()?;
        let ms = self.m.values();
        let rs = self.r.values();
        let ns = self.n.values();
        let shots: Vec<Option<u64>> = match &self.shots {
            Some(list) => list.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut grid = Vec::new();
        for &m in &ms {
            for &r in &rs {
                for &n in &ns {
                    for &k in &shots {
                        let x = match k {
                            Some(k) => n as f64 * k as f64,
                            None => n as f64,
                        };
                        let x = match self.axis()? {
                            SweepAxis::NK => x,
                            SweepAxis::Rank => r as f64,
                            SweepAxis::Dim => m as f64,
                        };
                        let specs = (0..self.seeds)
                            .map(|s| TrialSpec {
                                m,
                                r,
                                estimator: self.estimator,
                                design: DesignSpec::Uniform { n, shots: k },
                                epsilon,
                                seed: self.seed_base + s,
                            })
                            .collect();
                        grid.push((x, specs));
                    }
                }
            }
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RatePoint {
    pub x: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Log-log rate fit of median error against the swept axis.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub axis: SweepAxis,
    pub metric: String,
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
    pub points: Vec<RatePoint>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // r^2 from the residuals of this fit
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, r2)
}

/// Fits `log median(err) ~ slope * log x`; needs at least 4 grid points and
/// 20 samples per point. The bootstrap stderr resamples within each point.
pub fn fit_rate(
    axis: SweepAxis,
    metric: &str,
    groups: &[(f64, Vec<f64>)],
    fit_seed: u64,
) -> Result<RateFit> {
    if groups.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs >= 4 grid points, got {}",
            groups.len()
        )));
    }
    for (x, vals) in groups {
        if vals.len() < 20 {
            return Err(Error::InsufficientData(format!(
                "rate fit needs >= 20 seeds per point, got {} at x={x}",
                vals.len()
            )));
        }
    }
    const FLOOR: f64 = 1e-14;
    let mut points = Vec::with_capacity(groups.len());
    let mut lx = Vec::with_capacity(groups.len());
    let mut ly = Vec::with_capacity(groups.len());
    for (x, vals) in groups {
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
        let med = median(&sorted);
        points.push(RatePoint {
            x: *x,
            median: med,
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
        });
        lx.push(x.ln());
        ly.push(med.max(FLOOR).ln());
    }
    let (slope, r2) = ols_slope(&lx, &ly);

    let mut rng = ChaCha8Rng::seed_from_u64(fit_seed);
    const BOOTSTRAP: usize = 200;
    let mut slopes = Vec::with_capacity(BOOTSTRAP);
    for _ in 0..BOOTSTRAP {
        let mut by = Vec::with_capacity(groups.len());
        for (_, vals) in groups {
            let mut sample: Vec<f64> = (0..vals.len())
                .map(|_| vals[rng.random_range(0..vals.len())])
                .collect();
            sample.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
            by.push(median(&sample).max(FLOOR).ln());
        }
        slopes.push(ols_slope(&lx, &by).0);
    }
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let var = slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
        / (slopes.len() - 1) as f64;

    if !slope.is_finite() {
        return Err(Error::Numerical("rate fit slope is not finite".into()));
    }
    Ok(RateFit {
        axis,
        metric: metric.to_string(),
        slope,
        stderr: var.sqrt(),
        r2,
        points,
    })
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub trials: Vec<TrialResult>,
    pub fits: Vec<RateFit>,
}

/// Runs the manifest's grid (parallel over trials, reduced in manifest
/// order) and fits every tracked metric against the swept axis.
pub fn run_sweep(manifest: &SweepManifest) -> Result<SweepOutcome> {
    let axis = manifest.axis()?;
    let grid = manifest.expand()?;
    let flat: Vec<&TrialSpec> = grid.iter().flat_map(|(_, specs)| specs.iter()).collect();
    let results: Vec<Result<TrialResult>> = flat.par_iter().map(|s| run_trial(s)).collect();
    let mut trials = Vec::with_capacity(results.len());
    for r in results {
        trials.push(r?);
    }

    let mut fits = Vec::new();
    let metrics: [(&str, fn(&TrialResult) -> f64); 4] = [
        ("nuclear", |t| t.err_nuclear),
        ("frobenius", |t| t.err_frobenius),
        ("spectral", |t| t.err_spectral),
        ("kl", |t| t.kl),
    ];
    let mut offset = 0usize;
    let mut grouped: Vec<(f64, &[TrialResult])> = Vec::with_capacity(grid.len());
    for (x, specs) in &grid {
        grouped.push((*x, &trials[offset..offset + specs.len()]));
        offset += specs.len();
    }
    for (name, extract) in metrics {
        let groups: Vec<(f64, Vec<f64>)> = grouped
            .iter()
            .map(|(x, slice)| (*x, slice.iter().map(|t| extract(t)).collect()))
            .collect();
        fits.push(fit_rate(axis, name, &groups, manifest.seed_base)?);
    }
    Ok(SweepOutcome { axis, trials, fits })
}

/// Writes trials.csv, rates.json and summary.md into `dir`.
pub fn write_sweep_outputs(outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut csv = String::from(TrialResult::csv_header());
    csv.push('\n');
    for t in &outcome.trials {
        csv.push_str(&t.csv_row());
        csv.push('\n');
    }
    fs::write(dir.join("trials.csv"), csv)?;

    let rates = serde_json::json!({
        "schema_version": 1,
        "axis": outcome.axis.name(),
        "fits": outcome.fits,
    });
    fs::write(dir.join("rates.json"), serde_json::to_string_pretty(&rates)?)?;

    let mut md = String::new();
    md.push_str(&format!(
        "# Sweep summary (axis: {})\n\n| metric | slope | stderr | r2 |\n|---|---|---|---|\n",
        outcome.axis.name()
    ));
    for fit in &outcome.fits {
        md.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} |\n",
            fit.metric, fit.slope, fit.stderr, fit.r2
        ));
    }
    md.push_str("\n| x | metric | median | q1 | q3 |\n|---|---|---|---|---|\n");
    for fit in &outcome.fits {
        for p in &fit.points {
            md.push_str(&format!(
                "| {} | {} | {:.6e} | {:.6e} | {:.6e} |\n",
                p.x, fit.metric, p.median, p.q1, p.q3
            ));
        }
    }
    fs::write(dir.join("summary.md"), md)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ComparisonEntry {
    pub estimator: EstimatorKind,
    /// Median errors at p = 1, 2, infinity.
    pub median_errors: [f64; 3],
    pub median_kl: f64,
    /// Whether this estimator has the smallest median at p = 1, 2, inf.
    pub wins: [bool; 3],
}

#[derive(Clone, Debug)]
pub struct ComparisonCell {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub shots: Option<u64>,
    pub entries: Vec<ComparisonEntry>,
}

#[derive(Clone, Debug)]
pub struct ComparisonTable {
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn markdown(&self) -> String {
        let mut md = String::from(
            "| m | r | n | K | estimator | p1 | p2 | pinf | kl |\n|---|---|---|---|---|---|---|---|---|\n",
        );
        for cell in &self.cells {
            for e in &cell.entries {
                let mark = |i: usize| if e.wins[i] { " *" } else { "" };
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {:.4e}{} | {:.4e}{} | {:.4e}{} | {:.4e} |\n",
                    cell.m,
                    cell.r,
                    cell.n,
                    cell.shots.map(|k| k.to_string()).unwrap_or_default(),
                    e.estimator.name(),
                    e.median_errors[0],
                    mark(0),
                    e.median_errors[1],
                    mark(1),
                    e.median_errors[2],
                    mark(2),
                    e.median_kl,
                ));
            }
        }
        md
    }
}

/// Runs every estimator over the shared grid with paired seeds and tables
/// the median errors side by side, flagging the winner per norm.
pub fn compare_estimators(
    base_grid: &[TrialSpec],
    estimators: &[EstimatorKind],
) -> Result<ComparisonTable> {
    let mut specs = Vec::new();
    for &estimator in estimators {
        for spec in base_grid {
            let mut s = spec.clone();
            s.estimator = estimator;
            specs.push(s);
        }
    }
    let results: Vec<Result<TrialResult>> = specs.par_iter().map(run_trial).collect();
    let mut trials = Vec::with_capacity(results.len());
    for r in results {
        trials.push(r?);
    }

    type CellKey = (usize, usize, usize, Option<u64>);
    let mut by_cell: BTreeMap<CellKey, BTreeMap<&'static str, Vec<&TrialResult>>> = BTreeMap::new();
    for t in &trials {
        by_cell
            .entry((t.m, t.r, t.n, t.shots))
            .or_default()
            .entry(t.estimator.name())
            .or_default()
            .push(t);
    }

    let med = |vals: &mut Vec<f64>| -> f64 {
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        median(vals)
    };

    let mut cells = Vec::new();
    for ((m, r, n, shots), by_est) in by_cell {
        let mut entries = Vec::new();
        for &estimator in estimators {
            let list = by_est
                .get(estimator.name())
                .ok_or_else(|| Error::InsufficientData("estimator missing from cell".into()))?;
            let mut e1: Vec<f64> = list.iter().map(|t| t.err_nuclear).collect();
            let mut e2: Vec<f64> = list.iter().map(|t| t.err_frobenius).collect();
            let mut ei: Vec<f64> = list.iter().map(|t| t.err_spectral).collect();
            let mut kl: Vec<f64> = list.iter().map(|t| t.kl).collect();
            entries.push(ComparisonEntry {
                estimator,
                median_errors: [med(&mut e1), med(&mut e2), med(&mut ei)],
                median_kl: med(&mut kl),
                wins: [false; 3],
            });
        }
        for p in 0..3 {
            let best = entries
                .iter()
                .map(|e| e.median_errors[p])
                .fold(f64::INFINITY, f64::min);
            for e in &mut entries {
                e.wins[p] = e.median_errors[p] <= best;
            }
        }
        cells.push(ComparisonCell {
            m,
            r,
            n,
            shots,
            entries,
        });
    }
    Ok(ComparisonTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless_spec(seed: u64) -> TrialSpec {
        TrialSpec {
            m: 4,
            r: 2,
            estimator: EstimatorKind::LeastSquares,
            design: DesignSpec::FullBasisNoiseless,
            epsilon: EpsilonChoice::Fixed(1e-10),
            seed,
        }
    }

    #[test]
    fn noiseless_trial_recovers_exactly() {
        for estimator in [
            EstimatorKind::DantzigEntropy,
            EstimatorKind::DantzigNuclear,
            EstimatorKind::LeastSquares,
        ] {
            let mut spec = noiseless_spec(1);
            spec.estimator = estimator;
            let t = run_trial(&spec).unwrap();
            assert!(
                t.err_frobenius < 1e-6,
                "{}: err {}",
                estimator.name(),
                t.err_frobenius
            );
        }
    }

    #[test]
    fn duplicate_seed_reproduces_trial() {
        let spec = TrialSpec {
            m: 4,
            r: 2,
            estimator: EstimatorKind::DantzigEntropy,
            design: DesignSpec::Uniform {
                n: 32,
                shots: Some(10),
            },
            epsilon: EpsilonChoice::Auto,
            seed: 5,
        };
        let a = run_trial(&spec).unwrap();
        let b = run_trial(&spec).unwrap();
        assert!(a.same_outcome(&b));
    }

    #[test]
    fn noiseless_sweep_slope_is_flat() {
        // error saturates at the solver floor, so the fitted slope is ~0
        let manifest: SweepManifest = serde_json::from_value(serde_json::json!({
            "schema_version": 1,
            "m": 4,
            "r": 1,
            "n": [64, 128, 256, 512],
            "estimator": "least_squares",
            "epsilon": 1e-10,
            "seeds": 20
        }))
        .unwrap();
        assert_eq!(manifest.axis().unwrap(), SweepAxis::NK);
        let outcome = run_sweep(&manifest).unwrap();
        assert_eq!(outcome.trials.len(), 4 * 20);
        let frob = outcome
            .fits
            .iter()
            .find(|f| f.metric == "frobenius")
            .unwrap();
        assert!(
            frob.slope.abs() < 0.35,
            "expected near-flat slope, got {}",
            frob.slope
        );
    }

    #[test]
    fn manifest_axis_validation() {
        let none: SweepManifest = serde_json::from_value(serde_json::json!({
            "schema_version": 1, "m": 4, "r": 1, "n": 64,
            "estimator": "entropy", "seeds": 2
        }))
        .unwrap();
        assert!(none.axis().is_err());

        let two: SweepManifest = serde_json::from_value(serde_json::json!({
            "schema_version": 1, "m": 4, "r": [1, 2], "n": [64, 128],
            "estimator": "entropy", "seeds": 2
        }))
        .unwrap();
        assert!(two.axis().is_err());

        let unknown = serde_json::from_value::<SweepManifest>(serde_json::json!({
            "schema_version": 1, "m": 4, "r": 1, "n": [64, 128],
            "estimator": "entropy", "seeds": 2, "extra": true
        }));
        assert!(unknown.is_err());
    }

    #[test]
    fn fit_rate_validates_inputs() {
        let groups: Vec<(f64, Vec<f64>)> = (0..3)
            .map(|i| (2f64.powi(i), vec![1.0; 20]))
            .collect();
        assert!(fit_rate(SweepAxis::NK, "frobenius", &groups, 0).is_err());

        let thin: Vec<(f64, Vec<f64>)> = (0..4)
            .map(|i| (2f64.powi(i), vec![1.0; 5]))
            .collect();
        assert!(fit_rate(SweepAxis::NK, "frobenius", &thin, 0).is_err());
    }

    #[test]
    fn fit_rate_recovers_power_law() {
        // exact x^{-1/2} data
        let groups: Vec<(f64, Vec<f64>)> = [100.0, 200.0, 400.0, 800.0]
            .iter()
            .map(|&x: &f64| (x, vec![3.0 * x.powf(-0.5); 25]))
            .collect();
        let fit = fit_rate(SweepAxis::NK, "frobenius", &groups, 1).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-10);
        assert!(fit.stderr < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn comparison_pairs_datasets() {
        let grid: Vec<TrialSpec> = (0..3)
            .map(|s| TrialSpec {
                m: 4,
                r: 1,
                estimator: EstimatorKind::DantzigEntropy,
                design: DesignSpec::Uniform {
                    n: 24,
                    shots: Some(8),
                },
                epsilon: EpsilonChoice::Auto,
                seed: s,
            })
            .collect();
        // paired seeds: identical dataset hashes across estimators
        let mut a = grid.clone();
        for s in &mut a {
            s.estimator = EstimatorKind::DantzigEntropy;
        }
        let mut b = grid.clone();
        for s in &mut b {
            s.estimator = EstimatorKind::LeastSquares;
        }
        for (sa, sb) in a.iter().zip(&b) {
            let ra = run_trial(sa).unwrap();
            let rb = run_trial(sb).unwrap();
            assert_eq!(ra.dataset_hash, rb.dataset_hash);
        }

        let table = compare_estimators(
            &grid,
            &[EstimatorKind::DantzigEntropy, EstimatorKind::LeastSquares],
        )
        .unwrap();
        assert_eq!(table.cells.len(), 1);
        assert_eq!(table.cells[0].entries.len(), 2);
        assert!(!table.markdown().is_empty());
    }

    #[test]
    fn noiseless_comparison_ties_at_floor() {
        let grid: Vec<TrialSpec> = (0..2).map(noiseless_spec).collect();
        let table = compare_estimators(
            &grid,
            &[
                EstimatorKind::DantzigEntropy,
                EstimatorKind::DantzigNuclear,
                EstimatorKind::LeastSquares,
            ],
        )
        .unwrap();
        for cell in &table.cells {
            for e in &cell.entries {
                assert!(e.median_errors[1] < 1e-6);
            }
        }
    }

    #[test]
    fn sweep_outputs_are_reproducible() {
        let manifest: SweepManifest = serde_json::from_value(serde_json::json!({
            "schema_version": 1,
            "m": 4,
            "r": 1,
            "n": [16, 32, 64, 128],
            "estimator": "least_squares",
            "epsilon": 1e-10,
            "seeds": 20
        }))
        .unwrap();
        let out1 = run_sweep(&manifest).unwrap();
        let out2 = run_sweep(&manifest).unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_sweep_outputs(&out1, dir1.path()).unwrap();
        write_sweep_outputs(&out2, dir2.path()).unwrap();
        for file in ["trials.csv", "rates.json", "summary.md"] {
            let a = std::fs::read_to_string(dir1.path().join(file)).unwrap();
            let b = std::fs::read_to_string(dir2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
    }
}
