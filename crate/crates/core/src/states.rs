//! Density matrices, Schatten norms, entropy/divergence functionals, the
//! spectrahedron projection, and the rotated low-rank packing generator used
//! for hard-instance diagnostics.
//!
//! RNG streams: state generation draws from stream `STREAM_STATE`, packing
//! generation from the single stream `STREAM_PACKING`; both are ChaCha8
//! streams keyed by the caller's seed, disjoint from the measurement
//! streams in [`crate::measure`].

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{
    self, hermitian_eigen, random_unit_vector, symmetrize, CMatrix, CVector, C64,
};
use crate::pauli::{build_basis, to_sparse, SparsePauli};

/// Hard cap on the matrix dimension.
pub const MAX_DIM: usize = 4096;
/// Spectra are floored here before logarithms.
pub const LAMBDA_FLOOR: f64 = 1e-12;
/// Unit-trace tolerance.
pub const TRACE_TOL: f64 = 1e-9;
/// Allowed negative slack on eigenvalues of a valid state.
pub const PSD_TOL: f64 = 1e-9;
/// Eigenvalues above this count towards the rank.
pub const RANK_TOL: f64 = 1e-8;

pub(crate) const STREAM_STATE: u64 = 1 << 32;
pub(crate) const STREAM_PACKING: u64 = (1 << 32) + 1;

/// Dense Hermitian, unit-trace, PSD-within-tolerance state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-10 max-norm), unit trace (1e-9) and
    /// positive semidefiniteness (min eigenvalue >= -1e-9).
    pub fn new(data: CMatrix) -> Result<DensityMatrix> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                got: data.ncols(),
            });
        }
        let m = data.nrows();
        if m == 0 || m > MAX_DIM {
            return Err(Error::ResourceLimit {
                what: "matrix dimension",
                allowed: format!("1..={MAX_DIM}"),
                got: m.to_string(),
            });
        }
        let defect = linalg::hermitian_defect(&data);
        if defect > linalg::HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let tr: C64 = data.diagonal().iter().sum();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace {} + {}i is not 1 within {TRACE_TOL:e}",
                tr.re, tr.im
            )));
        }
        let eig = hermitian_eigen(&data)?;
        let min = *eig.values.last().expect("nonempty spectrum");
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {min:e} below -{PSD_TOL:e}"
            )));
        }
        Ok(DensityMatrix { data })
    }

    /// Constructor for values valid by construction (spectral assembly,
    /// convex mixtures). Full validation still runs in debug builds.
    pub(crate) fn from_valid(data: CMatrix) -> DensityMatrix {
        debug_assert!(
            DensityMatrix::new(data.clone()).is_ok(),
            "from_valid received an invalid state"
        );
        DensityMatrix { data }
    }

    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn maximally_mixed(m: usize) -> Result<DensityMatrix> {
        if m == 0 || m > MAX_DIM {
            return Err(Error::ResourceLimit {
                what: "matrix dimension",
                allowed: format!("1..={MAX_DIM}"),
                got: m.to_string(),
            });
        }
        Ok(DensityMatrix {
            data: CMatrix::identity(m, m).scale(1.0 / m as f64),
        })
    }

    /// Pure state `v v^H / |v|^2`.
    pub fn from_pure(v: &CVector) -> Result<DensityMatrix> {
        let n = v.norm();
        if n < 1e-12 {
            return Err(Error::InvalidArgument("zero vector".into()));
        }
        let u = v.unscale(n);
        Ok(DensityMatrix {
            data: &u * u.adjoint(),
        })
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(hermitian_eigen(&self.data)?.values)
    }

    /// Number of eigenvalues above `RANK_TOL`.
    pub fn rank(&self) -> Result<usize> {
        Ok(self
            .eigenvalues()?
            .iter()
            .filter(|&&v| v > RANK_TOL)
            .count())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let (re, im) = matrix_to_rows(&self.data);
        serde_json::json!({ "m": self.m(), "re": re, "im": im })
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<DensityMatrix> {
        let parsed: MatrixJson = serde_json::from_value(v.clone())?;
        DensityMatrix::new(matrix_from_rows(parsed.m, &parsed.re, &parsed.im)?)
    }

    /// Little-endian binary form: u64 dimension, then row-major
    /// (re, im) f64 pairs. Round-trips bit-exactly.
    pub fn to_binary(&self) -> Vec<u8> {
        let m = self.m();
        let mut buf = Vec::with_capacity(8 + 16 * m * m);
        buf.extend_from_slice(&(m as u64).to_le_bytes());
        for i in 0..m {
            for j in 0..m {
                let z = self.data[(i, j)];
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_binary(bytes: &[u8]) -> Result<DensityMatrix> {
        if bytes.len() < 8 {
            return Err(Error::Format("binary state: missing header".into()));
        }
        let m = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let need = 8 + 16 * m * m;
        if m == 0 || m > MAX_DIM || bytes.len() != need {
            return Err(Error::Format(format!(
                "binary state: expected {need} bytes for m={m}, got {}",
                bytes.len()
            )));
        }
        let mut data = CMatrix::zeros(m, m);
        let mut off = 8;
        for i in 0..m {
            for j in 0..m {
                let re = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().expect("8 bytes"));
                data[(i, j)] = C64::new(re, im);
                off += 16;
            }
        }
        DensityMatrix::new(data)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_json_value())?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<DensityMatrix> {
        let text = fs::read_to_string(path)?;
        DensityMatrix::from_json_value(&serde_json::from_str(&text)?)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_binary())?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<DensityMatrix> {
        DensityMatrix::from_binary(&fs::read(path)?)
    }

    /// Hex SHA-256 of the binary serialization.
    pub fn sha256_hex(&self) -> String {
        let digest = Sha256::digest(self.to_binary());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixJson {
    m: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

pub(crate) fn matrix_to_rows(a: &CMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (rows, cols) = a.shape();
    let mut re = Vec::with_capacity(rows);
    let mut im = Vec::with_capacity(rows);
    for i in 0..rows {
        re.push((0..cols).map(|j| a[(i, j)].re).collect());
        im.push((0..cols).map(|j| a[(i, j)].im).collect());
    }
    (re, im)
}

pub(crate) fn matrix_from_rows(m: usize, re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
    if re.len() != m || im.len() != m || re.iter().chain(im).any(|row| row.len() != m) {
        return Err(Error::Format(format!("matrix rows do not match m={m}")));
    }
    Ok(CMatrix::from_fn(m, m, |i, j| C64::new(re[i][j], im[i][j])))
}

/// Spectrum law for random state generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumLaw {
    /// Flat Dirichlet over the r-simplex.
    Dirichlet,
    /// All r eigenvalues equal to 1/r.
    Equal,
}

/// Rank-r state with a Haar-random eigenframe and Dirichlet spectrum.
pub fn random_state(m: usize, r: usize, seed: u64) -> Result<DensityMatrix> {
    random_state_with(m, r, SpectrumLaw::Dirichlet, seed)
}

pub fn random_state_with(
    m: usize,
    r: usize,
    law: SpectrumLaw,
    seed: u64,
) -> Result<DensityMatrix> {
    if m == 0 || m > MAX_DIM {
        return Err(Error::ResourceLimit {
            what: "matrix dimension",
            allowed: format!("1..={MAX_DIM}"),
            got: m.to_string(),
        });
    }
    if r == 0 || r > m {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_STATE);
    let spectrum = match law {
        SpectrumLaw::Equal => vec![1.0 / r as f64; r],
        SpectrumLaw::Dirichlet => loop {
            let raw: Vec<f64> = (0..r).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            let spec: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // resample until the spectrum clears the rank tolerance
            if spec.iter().all(|&x| x > 10.0 * RANK_TOL) {
                break spec;
            }
        },
    };
    let frame = haar_frame(m, r, &mut rng);
    let mut data = CMatrix::zeros(m, m);
    for (j, &lambda) in spectrum.iter().enumerate() {
        let col = frame.column(j);
        // data += lambda * col col^H
        for a in 0..m {
            for b in 0..m {
                data[(a, b)] += col[a] * col[b].conj() * lambda;
            }
        }
    }
    Ok(DensityMatrix::from_valid(symmetrize(&data)))
}

/// m x r matrix with orthonormal columns, Haar-distributed up to column
/// phases (which cancel in every spectral assembly).
pub(crate) fn haar_frame<R: Rng>(m: usize, r: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(m, r, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    g.qr().q()
}

/// Schatten p-norm of a Hermitian matrix; `p = f64::INFINITY` gives the
/// operator norm.
pub fn schatten_norm(a: &CMatrix, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Schatten index {p} must be >= 1"
        )));
    }
    let eig = hermitian_eigen(a)?;
    if p.is_infinite() {
        return Ok(eig.op_norm());
    }
    let sum: f64 = eig.values.iter().map(|v| v.abs().powf(p)).sum();
    Ok(sum.powf(1.0 / p))
}

/// Entropy of `s1`, divergence `K(s1 || s2)` and its symmetrization, with
/// spectra floored at `LAMBDA_FLOOR` before logarithms.
///
/// `floored` is the finite stand-in for the +infinity convention: it is set
/// when a floored direction of the second argument of a reported divergence
/// carries mass of the first argument (above 1e-9). Zero eigenvalues of the
/// first argument are benign (`0 log 0 = 0`) and do not raise the flag.
#[derive(Clone, Copy, Debug)]
pub struct Divergences {
    /// von Neumann entropy `V(s1) = -tr(s1 log s1)`.
    pub entropy: f64,
    /// `K(s1 || s2)`.
    pub kl: f64,
    /// `K(s1; s2) = K(s1 || s2) + K(s2 || s1)`.
    pub kl_symmetric: f64,
    pub floored: bool,
}

/// Mass of `s` in the floored directions of `eig`.
fn floored_mass(eig: &linalg::HermEigen, s: &DensityMatrix) -> f64 {
    let mut mass = 0.0;
    for (j, &l) in eig.values.iter().enumerate() {
        if l < LAMBDA_FLOOR {
            let u = eig.vectors.column(j);
            let q = (u.adjoint() * s.data() * u)[(0, 0)].re;
            mass += q.max(0.0);
        }
    }
    mass
}

pub fn entropy_and_kl(s1: &DensityMatrix, s2: &DensityMatrix) -> Result<Divergences> {
    if s1.m() != s2.m() {
        return Err(Error::DimensionMismatch {
            expected: s1.m(),
            got: s2.m(),
        });
    }
    let eig1 = hermitian_eigen(s1.data())?;
    let eig2 = hermitian_eigen(s2.data())?;
    const MASS_TOL: f64 = 1e-9;
    let floored = floored_mass(&eig2, s1) > MASS_TOL || floored_mass(&eig1, s2) > MASS_TOL;
    let log1 = eig1.reassemble(|l| l.max(LAMBDA_FLOOR).ln());
    let log2 = eig2.reassemble(|l| l.max(LAMBDA_FLOOR).ln());
    let entropy = -eig1
        .values
        .iter()
        .map(|&l| l * l.max(LAMBDA_FLOOR).ln())
        .sum::<f64>();
    let kl_fwd = linalg::hs_inner(s1.data(), &(&log1 - &log2)).max(0.0);
    let kl_rev = linalg::hs_inner(s2.data(), &(&log2 - &log1)).max(0.0);
    Ok(Divergences {
        entropy,
        kl: kl_fwd,
        kl_symmetric: kl_fwd + kl_rev,
        floored,
    })
}

pub fn von_neumann_entropy(s: &DensityMatrix) -> Result<f64> {
    Ok(entropy_and_kl(s, s)?.entropy)
}

/// Euclidean projection of a real vector onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest density matrix: eigenvalues projected onto the simplex
/// in the eigenbasis of `a`.
pub fn project_spectrahedron(a: &CMatrix) -> Result<DensityMatrix> {
    let eig = hermitian_eigen(a)?;
    let projected = project_simplex(&eig.values);
    let mut data = CMatrix::zeros(a.nrows(), a.ncols());
    for (j, &lambda) in projected.iter().enumerate() {
        if lambda == 0.0 {
            continue;
        }
        let col = eig.vectors.column(j);
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                data[(r, c)] += col[r] * col[c].conj() * lambda;
            }
        }
    }
    Ok(DensityMatrix::from_valid(symmetrize(&data)))
}

/// `(1 - delta) rho + delta I/m`; lifts the spectrum to at least `delta/m`.
pub fn mix_identity(rho: &DensityMatrix, delta: f64) -> Result<DensityMatrix> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} outside (0, 1)"
        )));
    }
    let m = rho.m();
    let mut data = rho.data().scale(1.0 - delta);
    let lift = delta / m as f64;
    for i in 0..m {
        data[(i, i)] += C64::new(lift, 0.0);
    }
    Ok(DensityMatrix::from_valid(data))
}

/// Closed-form `KL(Bin(shots, p) || Bin(shots, q))`.
pub fn binomial_kl(shots: u64, p: f64, q: f64) -> f64 {
    fn part(p: f64, q: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else if q <= 0.0 {
            f64::INFINITY
        } else {
            p * (p.ln() - q.ln())
        }
    }
    shots as f64 * (part(p, q) + part(1.0 - p, 1.0 - q))
}

/// Divergence between the full n-measurement experiments on `rho1` and
/// `rho2`: `(n/m^2) sum_{k>=2} KL(Bin(K, p1k) || Bin(K, p2k))` with
/// `p_ik = (1 + sqrt(m) <rho_i, E_k>)/2`. The k=1 term vanishes and is
/// skipped. Requires `sqrt(m) |<rho_i, E_k>| <= 0.7` for every k >= 2 so
/// all probabilities stay in [3/20, 17/20].
pub fn experiment_kl(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    n: usize,
    shots: u64,
) -> Result<f64> {
    let m = rho1.m();
    if rho2.m() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: rho2.m(),
        });
    }
    if !m.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "dimension {m} is not a power of two"
        )));
    }
    let b = m.trailing_zeros() as usize;
    let sqrt_m = (m as f64).sqrt();
    let basis = build_basis(b)?;
    let mut total = 0.0;
    for label in &basis[1..] {
        let sp = to_sparse(label);
        let a1 = sqrt_m * sp.inner(rho1.data())?;
        let a2 = sqrt_m * sp.inner(rho2.data())?;
        if a1.abs() > 0.7 + 1e-9 || a2.abs() > 0.7 + 1e-9 {
            return Err(Error::Domain(format!(
                "Pauli coefficient {} exceeds 0.7 at label {label}",
                a1.abs().max(a2.abs())
            )));
        }
        total += binomial_kl(shots, 0.5 * (1.0 + a1), 0.5 * (1.0 + a2));
    }
    Ok(n as f64 / (m * m) as f64 * total)
}

/// Parameters of the packing generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingParams {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub shots: u64,
    /// Schatten index of the separation metric.
    #[serde(with = "schatten_index_serde")]
    pub p: f64,
    pub target_count: usize,
    /// Mixing-weight constant; kappa = c1 m (r-1) / sqrt(nK).
    pub c1: f64,
    /// Acceptance gap c': a projector is kept when it is farther than
    /// c' (r-1)^{1/p} from every accepted one.
    pub projector_gap: f64,
    /// Random candidates tried for the frame vector.
    pub vector_trials: usize,
    /// Projector draws allowed before returning a partial instance.
    pub attempt_budget: usize,
    pub seed: u64,
}

impl PackingParams {
    pub fn new(
        m: usize,
        r: usize,
        n: usize,
        shots: u64,
        p: f64,
        target_count: usize,
        seed: u64,
    ) -> PackingParams {
        PackingParams {
            m,
            r,
            n,
            shots,
            p,
            target_count,
            c1: 0.25,
            projector_gap: 0.5,
            vector_trials: 100_000,
            attempt_budget: 200 * target_count.max(1),
            seed,
        }
    }
}

mod schatten_index_serde {
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(D::Error::custom(format!("invalid Schatten index '{t}'"))),
        }
    }
}

/// A family of well-separated rank-<=r states built from rank-(r-1)
/// projectors embedded below a dominant eigenvector and rotated into a
/// frame whose first column has small overlap with every nontrivial Pauli.
#[derive(Clone, Debug)]
pub struct PackingInstance {
    pub states: Vec<DensityMatrix>,
    pub kappa: f64,
    pub separation_p: f64,
    pub min_pairwise_distance: f64,
    /// Unitary frame; column 0 is the overlap-minimizing vector.
    pub frame: CMatrix,
    /// `sqrt(m) max_{k>=2} |<E_k v, v>|` achieved by the frame vector.
    pub v_quality: f64,
    /// Separation constant actually achieved:
    /// `min_pairwise / (m r^{1/p} / sqrt(nK))`.
    pub achieved_separation_constant: f64,
    /// False when the draw budget ran out before `target_count` states.
    pub complete: bool,
    pub params: PackingParams,
}

impl PackingInstance {
    /// Largest `sqrt(m) |<S, E_k>|` over all states and nontrivial labels.
    pub fn max_pauli_overlap(&self) -> Result<f64> {
        let m = self.params.m;
        let b = m.trailing_zeros() as usize;
        let sqrt_m = (m as f64).sqrt();
        let basis = build_basis(b)?;
        let mut worst = 0.0_f64;
        for state in &self.states {
            for label in &basis[1..] {
                let v = sqrt_m * to_sparse(label).inner(state.data())?.abs();
                if v > worst {
                    worst = v;
                }
            }
        }
        Ok(worst)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let (fre, fim) = matrix_to_rows(&self.frame);
        serde_json::json!({
            "schema_version": 1,
            "params": serde_json::to_value(&self.params).expect("serializable params"),
            "kappa": self.kappa,
            "separation_p": if self.separation_p.is_infinite() {
                serde_json::json!("inf")
            } else {
                serde_json::json!(self.separation_p)
            },
            "min_pairwise_distance": self.min_pairwise_distance,
            "v_quality": self.v_quality,
            "achieved_separation_constant": self.achieved_separation_constant,
            "complete": self.complete,
            "frame": { "re": fre, "im": fim },
            "states": self.states.iter().map(|s| s.to_json_value()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<PackingInstance> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("packing instance: expected object".into()))?;
        let version = obj
            .get("schema_version")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::Format("packing instance: missing schema_version".into()))?;
        if version != 1 {
            return Err(Error::Format(format!(
                "packing instance: unsupported schema_version {version}"
            )));
        }
        let params: PackingParams = serde_json::from_value(
            obj.get("params")
                .cloned()
                .ok_or_else(|| Error::Format("packing instance: missing params".into()))?,
        )?;
        let get_f64 = |key: &str| -> Result<f64> {
            obj.get(key)
                .and_then(|x| x.as_f64())
                .ok_or_else(|| Error::Format(format!("packing instance: missing {key}")))
        };
        let separation_p = match obj.get("separation_p") {
            Some(serde_json::Value::String(s)) if s == "inf" => f64::INFINITY,
            Some(x) => x
                .as_f64()
                .ok_or_else(|| Error::Format("packing instance: bad separation_p".into()))?,
            None => return Err(Error::Format("packing instance: missing separation_p".into())),
        };
        let frame_obj = obj
            .get("frame")
            .and_then(|x| x.as_object())
            .ok_or_else(|| Error::Format("packing instance: missing frame".into()))?;
        let fre: Vec<Vec<f64>> =
            serde_json::from_value(frame_obj.get("re").cloned().unwrap_or_default())?;
        let fim: Vec<Vec<f64>> =
            serde_json::from_value(frame_obj.get("im").cloned().unwrap_or_default())?;
        let frame = matrix_from_rows(params.m, &fre, &fim)?;
        let states = obj
            .get("states")
            .and_then(|x| x.as_array())
            .ok_or_else(|| Error::Format("packing instance: missing states".into()))?
            .iter()
            .map(DensityMatrix::from_json_value)
            .collect::<Result<Vec<_>>>()?;
        Ok(PackingInstance {
            states,
            kappa: get_f64("kappa")?,
            separation_p,
            min_pairwise_distance: get_f64("min_pairwise_distance")?,
            frame,
            v_quality: get_f64("v_quality")?,
            achieved_separation_constant: get_f64("achieved_separation_constant")?,
            complete: obj
                .get("complete")
                .and_then(|x| x.as_bool())
                .ok_or_else(|| Error::Format("packing instance: missing complete".into()))?,
            params,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_json_value())?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<PackingInstance> {
        let text = fs::read_to_string(path)?;
        PackingInstance::from_json_value(&serde_json::from_str(&text)?)
    }
}

/// Greedy rejection-sampled packing of rotated block states.
///
/// Projectors of rank r-1 on the (m-1)-dimensional complement are accepted
/// when they are `projector_gap * (r-1)^{1/p}` apart from all previously
/// accepted ones, embedded below a `1 - kappa` eigenvalue, and rotated so
/// the dominant eigenvector is the best of `vector_trials` random unit
/// vectors minimizing the worst nontrivial Pauli overlap.
pub fn build_packing(params: &PackingParams) -> Result<PackingInstance> {
    let m = params.m;
    let r = params.r;
    if !m.is_power_of_two() || m > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dimension {m} must be a power of two at most {MAX_DIM}"
        )));
    }
    if r < 2 || 2 * r > m {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 2..={} for m={m}",
            m / 2
        )));
    }
    if params.target_count < 2 {
        return Err(Error::InvalidArgument(
            "target_count must be at least 2".into(),
        ));
    }
    if !(params.p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Schatten index {} must be >= 1",
            params.p
        )));
    }
    let nk = (params.n as f64) * (params.shots as f64);
    let kappa = params.c1 * m as f64 * (r - 1) as f64 / nk.sqrt();
    if kappa > 0.5 {
        return Err(Error::KappaTooLarge { kappa });
    }

    let b = m.trailing_zeros() as usize;
    let sqrt_m = (m as f64).sqrt();
    let basis = build_basis(b)?;
    let sparse: Vec<SparsePauli> = basis[1..].iter().map(to_sparse).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(STREAM_PACKING);

    // Frame vector: best of `vector_trials` random unit vectors, judged by
    // the worst nontrivial Pauli overlap. The running maximum lets most
    // candidates abort early without changing the winner.
    let mut best_v: Option<CVector> = None;
    let mut best_quality = f64::INFINITY;
    for _ in 0..params.vector_trials.max(1) {
        let v = random_unit_vector(m, &mut rng);
        let mut worst = 0.0_f64;
        let mut pruned = false;
        for sp in &sparse {
            let q = sqrt_m * sp.quad_form(&v).abs();
            if q > worst {
                worst = q;
            }
            if worst >= best_quality {
                pruned = true;
                break;
            }
        }
        if !pruned && worst < best_quality {
            best_quality = worst;
            best_v = Some(v);
        }
    }
    let v = best_v.expect("at least one candidate vector");
    let frame = complete_frame(&v, &mut rng);

    // Greedy projector packing on the (m-1)-dimensional complement.
    let required = params.projector_gap * ((r - 1) as f64).powf(1.0 / params.p);
    let mut projectors: Vec<CMatrix> = Vec::with_capacity(params.target_count);
    let mut attempts = 0usize;
    while projectors.len() < params.target_count && attempts < params.attempt_budget {
        attempts += 1;
        let cols = haar_frame(m - 1, r - 1, &mut rng);
        let q = &cols * cols.adjoint();
        let mut ok = true;
        for accepted in &projectors {
            if schatten_norm(&(&q - accepted), params.p)? <= required {
                ok = false;
                break;
            }
        }
        if ok {
            projectors.push(q);
        }
    }
    let complete = projectors.len() == params.target_count;
    if projectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} projector(s) accepted within {} attempts",
            projectors.len(),
            params.attempt_budget
        )));
    }

    let block_scale = kappa / (r - 1) as f64;
    let mut states = Vec::with_capacity(projectors.len());
    for q in &projectors {
        let mut s = CMatrix::zeros(m, m);
        s[(0, 0)] = C64::new(1.0 - kappa, 0.0);
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                s[(1 + i, 1 + j)] = q[(i, j)].scale(block_scale);
            }
        }
        let rotated = symmetrize(&(&frame * s * frame.adjoint()));
        let state = DensityMatrix::new(rotated)?;
        let rank = state.rank()?;
        if rank > r {
            return Err(Error::Numerical(format!(
                "packed state has rank {rank} > {r}"
            )));
        }
        states.push(state);
    }

    let mut min_pairwise = f64::INFINITY;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = schatten_norm(&(states[i].data() - states[j].data()), params.p)?;
            if d < min_pairwise {
                min_pairwise = d;
            }
        }
    }
    let scale = m as f64 * (r as f64).powf(1.0 / params.p) / nk.sqrt();

    Ok(PackingInstance {
        states,
        kappa,
        separation_p: params.p,
        min_pairwise_distance: min_pairwise,
        frame,
        v_quality: best_quality,
        achieved_separation_constant: min_pairwise / scale,
        complete,
        params: params.clone(),
    })
}

/// Orthonormal completion of a unit vector to a full unitary frame, by
/// modified Gram-Schmidt over random candidates with re-orthogonalization.
fn complete_frame<R: Rng>(v: &CVector, rng: &mut R) -> CMatrix {
    let m = v.len();
    let mut cols: Vec<CVector> = vec![v.clone()];
    while cols.len() < m {
        let mut cand = random_unit_vector(m, rng);
        for _ in 0..2 {
            for c in &cols {
                let overlap = c.dotc(&cand);
                cand -= c.scale_complex(overlap);
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            cols.push(cand.unscale(norm));
        }
    }
    let mut frame = CMatrix::zeros(m, m);
    for (j, c) in cols.iter().enumerate() {
        frame.set_column(j, c);
    }
    frame
}

trait ScaleComplex {
    fn scale_complex(&self, z: C64) -> Self;
}

impl ScaleComplex for CVector {
    fn scale_complex(&self, z: C64) -> CVector {
        self.map(|x| x * z)
    }
}
