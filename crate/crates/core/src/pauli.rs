//! Tensor-product Pauli basis of the Hermitian matrices on `b` qubits.
//!
//! Every basis element `E_k` is a b-fold tensor product of the four
//! normalized single-qubit matrices `W_a = sigma_a / sqrt(2)`, so it is a
//! generalized permutation matrix: one nonzero per row, with a phase from
//! the cyclic group `{1, i, -1, -i}` and a common scale `1/sqrt(m)`. The
//! sparse form gives O(m) inner products and quadratic forms; the dense
//! Kronecker route exists as an independent cross-check.
//!
//! Enumeration: labels are indexed 1..=m^2 by base-4 positional encoding
//! with digits I=0, X=1, Y=2, Z=3 and the first qubit as the most
//! significant digit. Index 1 is the all-identity word `E_1 = I_m/sqrt(m)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::states::DensityMatrix;

/// Resource guard: largest supported qubit count (m = 4096).
pub const MAX_QUBITS: usize = 12;

/// Single-qubit Pauli axis.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
pub enum Axis {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::I, Axis::X, Axis::Y, Axis::Z];

    pub fn from_char(c: char) -> Result<Axis> {
        match c {
            'I' => Ok(Axis::I),
            'X' => Ok(Axis::X),
            'Y' => Ok(Axis::Y),
            'Z' => Ok(Axis::Z),
            _ => Err(Error::Format(format!("invalid Pauli symbol '{c}'"))),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Axis::I => 'I',
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }

    fn from_digit(d: usize) -> Axis {
        match d {
            0 => Axis::I,
            1 => Axis::X,
            2 => Axis::Y,
            3 => Axis::Z,
            _ => unreachable!("base-4 digit"),
        }
    }

    /// Action of the (unnormalized) sigma matrix on basis row `bit`:
    /// the column holding the nonzero entry and its phase.
    ///
    /// sigma_y follows the convention [[0, i], [-i, 0]].
    fn action(self, bit: usize) -> (usize, Phase) {
        match self {
            Axis::I => (bit, Phase::One),
            Axis::X => (bit ^ 1, Phase::One),
            Axis::Y => {
                if bit == 0 {
                    (1, Phase::PosI)
                } else {
                    (0, Phase::NegI)
                }
            }
            Axis::Z => (bit, if bit == 0 { Phase::One } else { Phase::NegOne }),
        }
    }
}

/// Exact element of the 4-cycle `{1, i, -1, -i}`; kept symbolic so long
/// tensor words accumulate no floating-point phase drift.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Phase {
    One = 0,
    PosI = 1,
    NegOne = 2,
    NegI = 3,
}

impl Phase {
    fn from_exponent(e: u8) -> Phase {
        match e & 3 {
            0 => Phase::One,
            1 => Phase::PosI,
            2 => Phase::NegOne,
            _ => Phase::NegI,
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        Phase::from_exponent(self as u8 + other as u8)
    }

    pub fn conj(self) -> Phase {
        Phase::from_exponent((4 - self as u8) & 3)
    }

    pub fn as_c64(self) -> C64 {
        match self {
            Phase::One => C64::new(1.0, 0.0),
            Phase::PosI => C64::new(0.0, 1.0),
            Phase::NegOne => C64::new(-1.0, 0.0),
            Phase::NegI => C64::new(0.0, -1.0),
        }
    }
}

/// A length-b word over {I, X, Y, Z} identifying one Pauli basis element.
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct PauliLabel {
    word: Vec<Axis>,
}

impl PauliLabel {
    pub fn new(word: Vec<Axis>) -> Result<PauliLabel> {
        let b = word.len();
        if b == 0 || b > MAX_QUBITS {
            return Err(Error::ResourceLimit {
                what: "qubit count",
                allowed: format!("1..={MAX_QUBITS}"),
                got: b.to_string(),
            });
        }
        Ok(PauliLabel { word })
    }

    pub fn qubits(&self) -> usize {
        self.word.len()
    }

    /// Hilbert-space dimension `m = 2^b`.
    pub fn dim(&self) -> usize {
        1 << self.word.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.word
    }

    pub fn is_identity(&self) -> bool {
        self.word.iter().all(|&a| a == Axis::I)
    }

    /// 1-based index under the base-4 enumeration (first qubit = most
    /// significant digit); the all-I word maps to 1.
    pub fn index(&self) -> usize {
        let mut k = 0usize;
        for &a in &self.word {
            k = k * 4 + a as usize;
        }
        k + 1
    }

    pub fn from_index(qubits: usize, index: usize) -> Result<PauliLabel> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::ResourceLimit {
                what: "qubit count",
                allowed: format!("1..={MAX_QUBITS}"),
                got: qubits.to_string(),
            });
        }
        let count = 1usize << (2 * qubits);
        if index == 0 || index > count {
            return Err(Error::InvalidArgument(format!(
                "label index {index} outside 1..={count}"
            )));
        }
        let mut rem = index - 1;
        let mut word = vec![Axis::I; qubits];
        for i in (0..qubits).rev() {
            word[i] = Axis::from_digit(rem & 3);
            rem >>= 2;
        }
        Ok(PauliLabel { word })
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in &self.word {
            write!(f, "{}", a.to_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<PauliLabel> {
        let word = s.chars().map(Axis::from_char).collect::<Result<Vec<_>>>()?;
        PauliLabel::new(word)
    }
}

/// All `4^b` labels in index order; position 1 (index 0 of the vec) is the
/// all-I word.
pub fn build_basis(qubits: usize) -> Result<Vec<PauliLabel>> {
    if qubits == 0 || qubits > MAX_QUBITS {
        return Err(Error::ResourceLimit {
            what: "qubit count",
            allowed: format!("1..={MAX_QUBITS}"),
            got: qubits.to_string(),
        });
    }
    let count = 1usize << (2 * qubits);
    (1..=count).map(|k| PauliLabel::from_index(qubits, k)).collect()
}

/// Sparse form of a Pauli basis element: one nonzero per row.
///
/// Row `r` holds the entry `phase[r] * scale` at column `perm[r]`, with
/// `scale = 1/sqrt(m)`. The permutation is an involution and phases satisfy
/// `phase[perm[r]] = conj(phase[r])`, so the encoded matrix is Hermitian.
#[derive(Clone, Debug)]
pub struct SparsePauli {
    m: usize,
    perm: Vec<u32>,
    phase: Vec<Phase>,
    scale: f64,
}

impl SparsePauli {
    pub fn from_label(label: &PauliLabel) -> SparsePauli {
        let b = label.qubits();
        let m = label.dim();
        let mut perm = vec![0u32; m];
        let mut phase = vec![Phase::One; m];
        for r in 0..m {
            let mut col = 0usize;
            let mut ph = Phase::One;
            for (i, &axis) in label.axes().iter().enumerate() {
                let shift = b - 1 - i;
                let bit = (r >> shift) & 1;
                let (cb, pb) = axis.action(bit);
                col |= cb << shift;
                ph = ph.mul(pb);
            }
            perm[r] = col as u32;
            phase[r] = ph;
        }
        SparsePauli {
            m,
            perm,
            phase,
            scale: 1.0 / (m as f64).sqrt(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Expands the sparse form to a dense matrix.
    pub fn densify(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.m, self.m);
        for r in 0..self.m {
            out[(r, self.perm[r] as usize)] = self.phase[r].as_c64().scale(self.scale);
        }
        out
    }

    /// Quadratic form `Re <E v, v> = Re(v^H E v)` in O(m).
    pub fn quad_form(&self, v: &CVector) -> f64 {
        debug_assert_eq!(v.len(), self.m);
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..self.m {
            acc += v[r].conj() * self.phase[r].as_c64() * v[self.perm[r] as usize];
        }
        (acc * self.scale).re
    }

    /// `tr(S E)` for Hermitian `S`, traversing only the m touched entries.
    ///
    /// The entries that enter the trace are checked for Hermitian symmetry
    /// (tolerance 1e-10), which is exactly the part of the contract this
    /// operation depends on; callers with validated matrices pay O(m).
    pub fn inner(&self, s: &CMatrix) -> Result<f64> {
        if s.nrows() != self.m || s.ncols() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: s.nrows(),
            });
        }
        let mut acc = C64::new(0.0, 0.0);
        let mut defect = 0.0_f64;
        for r in 0..self.m {
            let c = self.perm[r] as usize;
            let d = (s[(c, r)] - s[(r, c)].conj()).norm();
            if d > defect {
                defect = d;
            }
            acc += s[(c, r)] * self.phase[r].as_c64();
        }
        if defect > crate::linalg::HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let val = acc * self.scale;
        debug_assert!(val.im.abs() < 1e-9, "imaginary leak {}", val.im);
        Ok(val.re)
    }
}

/// Sparse representation of a label (generalized permutation form).
pub fn to_sparse(label: &PauliLabel) -> SparsePauli {
    SparsePauli::from_label(label)
}

/// `<S, E_k> = tr(S E_k)` computed through the sparse form.
pub fn inner(s: &CMatrix, label: &PauliLabel) -> Result<f64> {
    to_sparse(label).inner(s)
}

/// Dense basis element built by explicit Kronecker products of the 2x2
/// normalized matrices; independent of the sparse route.
pub fn densify_kronecker(label: &PauliLabel) -> CMatrix {
    let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
    let w = |a: Axis| -> CMatrix {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(inv_sqrt2, 0.0);
        let pos_i = C64::new(0.0, inv_sqrt2);
        let neg_i = C64::new(0.0, -inv_sqrt2);
        match a {
            Axis::I => CMatrix::from_row_slice(2, 2, &[one, z, z, one]),
            Axis::X => CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
            Axis::Y => CMatrix::from_row_slice(2, 2, &[z, pos_i, neg_i, z]),
            Axis::Z => CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
        }
    };
    let mut out = CMatrix::identity(1, 1);
    for &a in label.axes() {
        out = out.kronecker(&w(a));
    }
    out
}

/// Two-point spectral weights of measuring `label` on `state`:
/// `p_plus = (1 + sqrt(m) <S, E_k>) / 2` and its complement.
#[derive(Clone, Copy, Debug)]
pub struct ProjectorWeights {
    pub p_plus: f64,
    pub p_minus: f64,
    /// How far the raw probability had to be clamped into [0, 1].
    pub clamp: f64,
}

pub fn projector_weights(state: &DensityMatrix, label: &PauliLabel) -> Result<ProjectorWeights> {
    if state.m() != label.dim() {
        return Err(Error::DimensionMismatch {
            expected: label.dim(),
            got: state.m(),
        });
    }
    let m = state.m() as f64;
    let alpha = m.sqrt() * inner(state.data(), label)?;
    if alpha.abs() > 1.0 + 1e-6 {
        return Err(Error::InvalidState(format!(
            "Pauli coefficient sqrt(m)<S,E> = {alpha} outside [-1, 1]"
        )));
    }
    let raw = 0.5 * (1.0 + alpha);
    let p_plus = raw.clamp(0.0, 1.0);
    Ok(ProjectorWeights {
        p_plus,
        p_minus: 1.0 - p_plus,
        clamp: (raw - p_plus).abs(),
    })
}

/// Forms the Hermitian matrix `sum_k c_k E_k` in O(#labels * m), then
/// symmetrizes. Labels must all act on dimension `m`.
pub fn accumulate(m: usize, terms: &[(PauliLabel, f64)]) -> Result<CMatrix> {
    let sparse: Vec<(SparsePauli, f64)> = terms
        .iter()
        .map(|(l, c)| (to_sparse(l), *c))
        .collect();
    let refs: Vec<(&SparsePauli, f64)> = sparse.iter().map(|(s, c)| (s, *c)).collect();
    accumulate_sparse(m, &refs)
}

/// `accumulate` over pre-built sparse forms (hot path for solvers).
pub fn accumulate_sparse(m: usize, terms: &[(&SparsePauli, f64)]) -> Result<CMatrix> {
    let mut out = CMatrix::zeros(m, m);
    for (sp, c) in terms {
        if sp.m() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: sp.m(),
            });
        }
        if !c.is_finite() {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        let w = sp.scale() * c;
        for r in 0..m {
            out[(r, sp.perm()[r] as usize)] += sp.phases()[r].as_c64().scale(w);
        }
    }
    Ok(crate::linalg::symmetrize(&out))
}
