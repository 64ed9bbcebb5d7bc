//! Binomial observation model: uniform design over the Pauli basis, K-shot
//! two-outcome measurements per design point, and the averaged responses
//! `Y_i = (K_i^+ - K_i^-) / (K sqrt(m))`.
//!
//! Randomness comes from ChaCha8 keyed by the caller's seed with explicit
//! stream separation: stream `STREAM_DESIGN` draws the design labels and
//! stream `STREAM_SHOT_BASE + i` draws the shots of record `i`, so record
//! simulation is reproducible independently of scheduling.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pauli::{build_basis, projector_weights, to_sparse, PauliLabel};
use crate::states::DensityMatrix;

pub const STREAM_DESIGN: u64 = 0;
pub const STREAM_SHOT_BASE: u64 = 1;

/// Shot counts up to this size use exact CDF inversion; larger ones use the
/// standard large-K sampler from `rand_distr`.
const INVERSION_SHOT_LIMIT: u64 = 64;

/// One design point: the measured label, the shot count K, and the number
/// of `+1/sqrt(m)` outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasurementRecord {
    pub label: PauliLabel,
    pub shots: u64,
    pub k_plus: u64,
}

impl MeasurementRecord {
    /// Averaged response `(2 K^+ - K) / (K sqrt(m))`.
    pub fn y(&self) -> f64 {
        let m = self.label.dim() as f64;
        (2.0 * self.k_plus as f64 - self.shots as f64) / (self.shots as f64 * m.sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub rho_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
enum DatasetKind {
    /// Finite-K records; responses recomputable from the counts.
    Sampled(Vec<MeasurementRecord>),
    /// Exact responses `Y_i = <rho, X_i>` (the K = infinity limit).
    Noiseless(Vec<PauliLabel>),
}

/// Trace-regression dataset: n labels with averaged responses.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementDataset {
    m: usize,
    kind: DatasetKind,
    y: Vec<f64>,
    meta: DatasetMeta,
}

impl MeasurementDataset {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self.kind, DatasetKind::Noiseless(_))
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn records(&self) -> Option<&[MeasurementRecord]> {
        match &self.kind {
            DatasetKind::Sampled(r) => Some(r),
            DatasetKind::Noiseless(_) => None,
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &PauliLabel> {
        let slice: Box<dyn Iterator<Item = &PauliLabel>> = match &self.kind {
            DatasetKind::Sampled(r) => Box::new(r.iter().map(|rec| &rec.label)),
            DatasetKind::Noiseless(l) => Box::new(l.iter()),
        };
        slice
    }

    /// Averaged responses; `|Y_i| <= 1/sqrt(m)` always holds.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Per-distinct-label aggregates in label-index order.
    pub fn aggregates(&self) -> Vec<LabelAggregate> {
        use std::collections::BTreeMap;
        let mut map: BTreeMap<usize, (Option<PauliLabel>, usize, f64)> = BTreeMap::new();
        for (label, &y) in self.labels().zip(self.y.iter()) {
            let entry = map.entry(label.index()).or_insert((None, 0, 0.0));
            if entry.0.is_none() {
                entry.0 = Some(label.clone());
            }
            entry.1 += 1;
            entry.2 += y;
        }
        map.into_values()
            .map(|(label, count, y_sum)| LabelAggregate {
                label: label.expect("populated"),
                count,
                y_mean: y_sum / count as f64,
            })
            .collect()
    }

    fn header(&self) -> HeaderLine {
        HeaderLine {
            schema_version: 1,
            m: self.m,
            n: self.n(),
            shots: self.meta.shots,
            seed: self.meta.seed,
            rho_hash: self.meta.rho_hash.clone(),
            noiseless: self.is_noiseless(),
        }
    }

    /// JSON-lines serialization: a header line followed by one record per
    /// line (`{"label", "K", "k_plus"}`, or `{"label", "y"}` when
    /// noiseless).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&self.header()).expect("serializable header"));
        out.push('\n');
        match &self.kind {
            DatasetKind::Sampled(records) => {
                for r in records {
                    let line = RecordLine {
                        label: r.label.to_string(),
                        shots: r.shots,
                        k_plus: r.k_plus,
                    };
                    out.push_str(&serde_json::to_string(&line).expect("serializable record"));
                    out.push('\n');
                }
            }
            DatasetKind::Noiseless(labels) => {
                for (label, &y) in labels.iter().zip(self.y.iter()) {
                    let line = NoiselessLine {
                        label: label.to_string(),
                        y,
                    };
                    out.push_str(&serde_json::to_string(&line).expect("serializable record"));
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<MeasurementDataset> {
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines
            .next()
            .ok_or_else(|| Error::Format("dataset: empty file".into()))?;
        let header: HeaderLine = serde_json::from_str(header_line)
            .map_err(|e| Error::Format(format!("line 1: {e}")))?;
        if header.schema_version != 1 {
            return Err(Error::Format(format!(
                "dataset: unsupported schema_version {}",
                header.schema_version
            )));
        }
        let qubits = dim_to_qubits(header.m)?;
        let mut records = Vec::with_capacity(header.n);
        let mut labels = Vec::with_capacity(header.n);
        let mut ys = Vec::with_capacity(header.n);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            if header.noiseless {
                let parsed: NoiselessLine = serde_json::from_str(line)
                    .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
                let label: PauliLabel = parsed
                    .label
                    .parse()
                    .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
                check_label_dim(&label, qubits, lineno)?;
                ys.push(parsed.y);
                labels.push(label);
            } else {
                let parsed: RecordLine = serde_json::from_str(line)
                    .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
                let label: PauliLabel = parsed
                    .label
                    .parse()
                    .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
                check_label_dim(&label, qubits, lineno)?;
                if parsed.k_plus > parsed.shots {
                    return Err(Error::Format(format!(
                        "line {lineno}: k_plus {} exceeds K {}",
                        parsed.k_plus, parsed.shots
                    )));
                }
                records.push(MeasurementRecord {
                    label,
                    shots: parsed.shots,
                    k_plus: parsed.k_plus,
                });
            }
        }
        let found = if header.noiseless { ys.len() } else { records.len() };
        if found != header.n {
            return Err(Error::Format(format!(
                "dataset: header declares n={}, found {found} records",
                header.n
            )));
        }
        let meta = DatasetMeta {
            shots: header.shots,
            seed: header.seed,
            rho_hash: header.rho_hash,
        };
        if header.noiseless {
            Ok(MeasurementDataset {
                m: header.m,
                kind: DatasetKind::Noiseless(labels),
                y: ys,
                meta,
            })
        } else {
            let y = records.iter().map(MeasurementRecord::y).collect();
            Ok(MeasurementDataset {
                m: header.m,
                kind: DatasetKind::Sampled(records),
                y,
                meta,
            })
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<MeasurementDataset> {
        MeasurementDataset::from_jsonl(&fs::read_to_string(path)?)
    }

    /// CSV export of `(label, Y_i)` for external tools.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("label,y\n");
        for (label, &y) in self.labels().zip(self.y.iter()) {
            out.push_str(&format!("{label},{y}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Hex SHA-256 of the JSON-lines serialization.
    pub fn sha256_hex(&self) -> String {
        let digest = Sha256::digest(self.to_jsonl().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Count and mean response of one distinct label.
#[derive(Clone, Debug)]
pub struct LabelAggregate {
    pub label: PauliLabel,
    pub count: usize,
    pub y_mean: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    schema_version: u32,
    m: usize,
    n: usize,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none", default)]
    shots: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    rho_hash: Option<String>,
    #[serde(default)]
    noiseless: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    label: String,
    #[serde(rename = "K")]
    shots: u64,
    k_plus: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiselessLine {
    label: String,
    y: f64,
}

fn dim_to_qubits(m: usize) -> Result<usize> {
    if !m.is_power_of_two() || m < 2 || m > crate::states::MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dimension {m} is not a power of two in 2..={}",
            crate::states::MAX_DIM
        )));
    }
    Ok(m.trailing_zeros() as usize)
}

fn check_label_dim(label: &PauliLabel, qubits: usize, lineno: usize) -> Result<()> {
    if label.qubits() != qubits {
        return Err(Error::Format(format!(
            "line {lineno}: label acts on {} qubits, dataset has {qubits}",
            label.qubits()
        )));
    }
    Ok(())
}

/// n i.i.d. uniform draws from all m^2 labels, with replacement.
pub fn sample_design(m: usize, n: usize, seed: u64) -> Result<Vec<PauliLabel>> {
    let qubits = dim_to_qubits(m)?;
    if n == 0 {
        return Err(Error::InvalidArgument("design size n must be >= 1".into()));
    }
    let count = m * m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DESIGN);
    (0..n)
        .map(|_| PauliLabel::from_index(qubits, rng.random_range(1..=count)))
        .collect()
}

/// Exact CDF inversion; requires p <= 1/2 so the starting pmf cannot
/// underflow at shots <= 64.
fn sample_binomial_inversion<R: Rng>(rng: &mut R, shots: u64, p: f64) -> u64 {
    debug_assert!(p <= 0.5);
    let u: f64 = rng.random();
    let ratio = p / (1.0 - p);
    let mut pmf = (1.0 - p).powi(shots as i32);
    let mut cdf = pmf;
    let mut j = 0u64;
    while u > cdf && j < shots {
        pmf *= ratio * (shots - j) as f64 / (j + 1) as f64;
        j += 1;
        cdf += pmf;
    }
    j
}

fn sample_binomial<R: Rng>(rng: &mut R, shots: u64, p: f64) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return shots;
    }
    if shots <= INVERSION_SHOT_LIMIT {
        if p > 0.5 {
            shots - sample_binomial_inversion(rng, shots, 1.0 - p)
        } else {
            sample_binomial_inversion(rng, shots, p)
        }
    } else {
        rand_distr::Binomial::new(shots, p)
            .expect("validated probability")
            .sample(rng)
    }
}

fn shot_rng(seed: u64, record_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SHOT_BASE + record_index as u64);
    rng
}

/// K-shot measurement of one label, using the shot stream of
/// `record_index` so datasets can be rebuilt record by record.
pub fn measure_indexed(
    rho: &DensityMatrix,
    label: &PauliLabel,
    shots: u64,
    seed: u64,
    record_index: usize,
) -> Result<MeasurementRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count K must be >= 1".into()));
    }
    let weights = projector_weights(rho, label)?;
    let mut rng = shot_rng(seed, record_index);
    let k_plus = sample_binomial(&mut rng, shots, weights.p_plus);
    Ok(MeasurementRecord {
        label: label.clone(),
        shots,
        k_plus,
    })
}

/// K-shot measurement of one label (record index 0).
pub fn measure(
    rho: &DensityMatrix,
    label: &PauliLabel,
    shots: u64,
    seed: u64,
) -> Result<MeasurementRecord> {
    measure_indexed(rho, label, shots, seed, 0)
}

/// n independent design points, K shots each.
pub fn simulate_dataset(
    rho: &DensityMatrix,
    n: usize,
    shots: u64,
    seed: u64,
) -> Result<MeasurementDataset> {
    let labels = sample_design(rho.m(), n, seed)?;
    let mut records = Vec::with_capacity(n);
    for (i, label) in labels.iter().enumerate() {
        records.push(measure_indexed(rho, label, shots, seed, i)?);
    }
    let y = records.iter().map(MeasurementRecord::y).collect();
    Ok(MeasurementDataset {
        m: rho.m(),
        kind: DatasetKind::Sampled(records),
        y,
        meta: DatasetMeta {
            shots: Some(shots),
            seed: Some(seed),
            rho_hash: Some(rho.sha256_hex()),
        },
    })
}

/// Noiseless variant: same design stream, exact responses
/// `Y_i = <rho, X_i>`.
pub fn noiseless_dataset(rho: &DensityMatrix, n: usize, seed: u64) -> Result<MeasurementDataset> {
    let labels = sample_design(rho.m(), n, seed)?;
    let y = labels
        .iter()
        .map(|l| to_sparse(l).inner(rho.data()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementDataset {
        m: rho.m(),
        kind: DatasetKind::Noiseless(labels),
        y,
        meta: DatasetMeta {
            shots: None,
            seed: Some(seed),
            rho_hash: Some(rho.sha256_hex()),
        },
    })
}

/// Every one of the m^2 labels measured once, noiselessly.
pub fn noiseless_full_basis(rho: &DensityMatrix) -> Result<MeasurementDataset> {
    let qubits = dim_to_qubits(rho.m())?;
    let labels = build_basis(qubits)?;
    let y = labels
        .iter()
        .map(|l| to_sparse(l).inner(rho.data()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementDataset {
        m: rho.m(),
        kind: DatasetKind::Noiseless(labels),
        y,
        meta: DatasetMeta {
            shots: None,
            seed: None,
            rho_hash: Some(rho.sha256_hex()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::inner;
    use crate::states::{random_state, DensityMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn design_determinism_and_bounds() {
        let a = sample_design(4, 100, 9).unwrap();
        let b = sample_design(4, 100, 9).unwrap();
        assert_eq!(a, b);
        let single = sample_design(4, 1, 0).unwrap();
        assert_eq!(single.len(), 1);
        assert!(sample_design(3, 5, 0).is_err());
        assert!(sample_design(4, 0, 0).is_err());
    }

    #[test]
    fn design_frequencies_uniform() {
        let m = 4;
        let n = 100_000;
        let labels = sample_design(m, n, 123).unwrap();
        let mut counts = vec![0usize; m * m + 1];
        for l in &labels {
            counts[l.index()] += 1;
        }
        let p = 1.0 / (m * m) as f64;
        let expect = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for k in 1..=m * m {
            assert!(
                (counts[k] as f64 - expect).abs() <= 4.0 * sigma,
                "label {k} count {} outside 4 sigma of {expect}",
                counts[k]
            );
        }
    }

    #[test]
    fn identity_label_is_deterministic() {
        let rho = random_state(4, 2, 1).unwrap();
        let e1 = PauliLabel::from_index(2, 1).unwrap();
        for seed in 0..20 {
            let rec = measure(&rho, &e1, 50, seed).unwrap();
            assert_eq!(rec.k_plus, 50);
            assert!((rec.y() - 0.5).abs() < 1e-12); // 1/sqrt(4)
        }
    }

    #[test]
    fn fair_coin_at_maximally_mixed() {
        let rho = DensityMatrix::maximally_mixed(4).unwrap();
        let label = PauliLabel::from_index(2, 7).unwrap();
        let rec = measure(&rho, &label, 1_000_000, 3).unwrap();
        let freq = rec.k_plus as f64 / rec.shots as f64;
        assert!((freq - 0.5).abs() < 0.002, "freq {freq}");
    }

    #[test]
    fn measurement_mean_matches_coefficient() {
        let rho = random_state(4, 2, 77).unwrap();
        let label = PauliLabel::from_index(2, 5).unwrap();
        let shots = 25u64;
        let reps = 10_000usize;
        let mut sum = 0.0;
        for i in 0..reps {
            sum += measure_indexed(&rho, &label, shots, 555, i).unwrap().y();
        }
        let mean = sum / reps as f64;
        let expect = inner(rho.data(), &label).unwrap();
        let band = 4.0 * (1.0 / (shots as f64 * 4.0 * reps as f64)).sqrt();
        assert!(
            (mean - expect).abs() <= band,
            "mean {mean} vs {expect} (band {band})"
        );
    }

    #[test]
    fn variance_at_maximally_mixed() {
        // Var(Y | X = E_k) = 1/(Km) when the coefficient vanishes
        let m = 4usize;
        let shots = 20u64;
        let rho = DensityMatrix::maximally_mixed(m).unwrap();
        let label = PauliLabel::from_index(2, 9).unwrap();
        let reps = 40_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..reps {
            let y = measure_indexed(&rho, &label, shots, 777, i).unwrap().y();
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let expect = 1.0 / (shots as f64 * m as f64);
        assert!(
            (var - expect).abs() < 0.1 * expect,
            "var {var} vs {expect}"
        );
    }

    #[test]
    fn response_lattice() {
        let rho = random_state(8, 2, 5).unwrap();
        let ds = simulate_dataset(&rho, 200, 13, 31).unwrap();
        let m_sqrt = 8f64.sqrt();
        for rec in ds.records().unwrap() {
            assert!(rec.k_plus <= rec.shots);
            let j = rec.k_plus as f64;
            let grid = (2.0 * j - rec.shots as f64) / (rec.shots as f64 * m_sqrt);
            assert_eq!(rec.y(), grid);
            assert!(rec.y().abs() <= 1.0 / m_sqrt + 1e-12);
        }
    }

    #[test]
    fn binomial_sampler_agrees_with_mean() {
        // inversion branch (K <= 64) and large-K branch both centered at Kp
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(shots, p) in &[(40u64, 0.3f64), (40, 0.8), (500, 0.3)] {
            let reps = 20_000;
            let mut sum = 0.0;
            for _ in 0..reps {
                sum += sample_binomial(&mut rng, shots, p) as f64;
            }
            let mean = sum / reps as f64;
            let sigma = (shots as f64 * p * (1.0 - p) / reps as f64).sqrt();
            assert!(
                (mean - shots as f64 * p).abs() < 5.0 * sigma,
                "K={shots} p={p}: mean {mean}"
            );
        }
    }

    #[test]
    fn noiseless_residuals_vanish() {
        let rho = random_state(4, 2, 17).unwrap();
        let ds = noiseless_dataset(&rho, 50, 3).unwrap();
        assert!(ds.is_noiseless());
        for (label, &y) in ds.labels().zip(ds.y().iter()) {
            let exact = inner(rho.data(), label).unwrap();
            assert_eq!(y, exact);
        }
    }

    #[test]
    fn noise_mean_zero() {
        let rho = random_state(4, 2, 19).unwrap();
        let shots = 30u64;
        let n = 20_000usize;
        let ds = simulate_dataset(&rho, n, shots, 7).unwrap();
        let mut sum = 0.0;
        for (label, &y) in ds.labels().zip(ds.y().iter()) {
            sum += y - inner(rho.data(), label).unwrap();
        }
        let mean = sum / n as f64;
        let band = 4.0 * (1.0 / (shots as f64 * 4.0 * n as f64)).sqrt();
        assert!(mean.abs() <= band, "xi mean {mean} (band {band})");
    }

    #[test]
    fn empirical_second_moment_isometry() {
        // (1/n) sum <A, X_i>^2 -> ||A||_2^2 / m^2 for fixed Hermitian A
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 4;
        let a = crate::linalg::random_hermitian(m, 1.0, &mut rng);
        let n = 100_000;
        let labels = sample_design(m, n, 33).unwrap();
        let mut vals = Vec::with_capacity(n);
        for l in &labels {
            let v = inner(&a, l).unwrap();
            vals.push(v * v);
        }
        let mean: f64 = vals.iter().sum::<f64>() / n as f64;
        let expect = a.norm_squared() / (m * m) as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let band = 4.0 * (var / n as f64).sqrt();
        assert!((mean - expect).abs() <= band, "{mean} vs {expect} (band {band})");
    }

    #[test]
    fn serialization_byte_identical() {
        let rho = random_state(4, 1, 23).unwrap();
        let a = simulate_dataset(&rho, 25, 10, 99).unwrap();
        let b = simulate_dataset(&rho, 25, 10, 99).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(a.sha256_hex(), b.sha256_hex());

        let back = MeasurementDataset::from_jsonl(&a.to_jsonl()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_jsonl(), a.to_jsonl());
    }

    #[test]
    fn noiseless_round_trip() {
        let rho = random_state(4, 2, 29).unwrap();
        let ds = noiseless_full_basis(&rho).unwrap();
        assert_eq!(ds.n(), 16);
        let back = MeasurementDataset::from_jsonl(&ds.to_jsonl()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn corrupt_lines_report_position() {
        let rho = random_state(4, 1, 31).unwrap();
        let ds = simulate_dataset(&rho, 5, 10, 1).unwrap();
        let mut text = ds.to_jsonl();
        text.push_str("{\"label\": \"XZ\", \"K\": 10}\n"); // missing k_plus
        match MeasurementDataset::from_jsonl(&text) {
            Err(Error::Format(msg)) => assert!(msg.contains("line 7"), "msg: {msg}"),
            other => panic!("expected format error, got {other:?}"),
        }

        let bad_count = RecordLine {
            label: "XZ".into(),
            shots: 10,
            k_plus: 11,
        };
        let mut text = ds.to_jsonl();
        text.push_str(&serde_json::to_string(&bad_count).unwrap());
        text.push('\n');
        assert!(MeasurementDataset::from_jsonl(&text).is_err());
    }

    #[test]
    fn aggregates_group_by_label() {
        let rho = random_state(4, 2, 41).unwrap();
        let ds = simulate_dataset(&rho, 400, 5, 2).unwrap();
        let ags = ds.aggregates();
        let total: usize = ags.iter().map(|a| a.count).sum();
        assert_eq!(total, 400);
        for w in ags.windows(2) {
            assert!(w[0].label.index() < w[1].label.index());
        }
    }

    #[test]
    fn csv_export_shape() {
        let rho = random_state(4, 1, 47).unwrap();
        let ds = simulate_dataset(&rho, 8, 4, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        ds.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "label,y");
    }
}
