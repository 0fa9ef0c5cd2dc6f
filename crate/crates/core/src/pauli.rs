//! Pauli strings in symplectic form.
//!
//! An operator on `n` qubits is stored as two bit masks and a phase exponent:
//!
//! ```text
//! P = i^phase * (i^(x_k z_k) X^(x_k) Z^(z_k)) tensored over qubits k
//! ```
//!
//! so that `(x, z) = (1, 1)` on a qubit is the Hermitian `Y = iXZ`. Qubit `k`
//! is bit `k` of the computational basis index (little-endian).
//!
//! Acting on a state vector is a signed permutation of amplitudes,
//! `P|b> = i^(phase + |x & z|) (-1)^|b & z| |b ^ x>`, which is what keeps the
//! engine's pulse application O(2^n).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::StateVector;

/// Largest register a [`PauliString`] can describe.
pub const MAX_QUBITS: usize = 64;

/// Single-qubit Pauli symbol, indexed as `sigma_0 = 1, sigma_1 = X, sigma_2 = Y, sigma_3 = Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(l: u8) -> Option<Self> {
        Self::ALL.get(l as usize).copied()
    }

    pub fn index(self) -> u8 {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    /// `(x, z)` bit pair of the symbol.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// `i^k` for `k` mod 4.
pub(crate) fn i_pow(k: u32) -> C64 {
    match k & 3 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// An `n`-qubit Pauli operator with global phase `i^phase_exp`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x: u64,
    z: u64,
    phase: u8,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        assert!(
            n_qubits >= 1 && n_qubits <= MAX_QUBITS,
            "qubit count must be in 1..={MAX_QUBITS}"
        );
        Self {
            n_qubits,
            x: 0,
            z: 0,
            phase: 0,
        }
    }

    /// Phase-free string from raw masks. Bits at positions `>= n_qubits` are rejected.
    pub fn from_masks(n_qubits: usize, x: u64, z: u64) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        let mask = full_mask(n_qubits);
        if (x | z) & !mask != 0 {
            return Err(Error::invalid("mask has bits beyond the register"));
        }
        Ok(Self {
            n_qubits,
            x,
            z,
            phase: 0,
        })
    }

    pub fn from_symbols(symbols: &[Pauli]) -> Self {
        let mut p = Self::identity(symbols.len());
        for (k, s) in symbols.iter().enumerate() {
            p.set(k, *s);
        }
        p
    }

    /// `sym` on qubit `k`, identity elsewhere.
    pub fn single(n_qubits: usize, k: usize, sym: Pauli) -> Self {
        let mut p = Self::identity(n_qubits);
        p.set(k, sym);
        p
    }

    pub fn with_phase(mut self, phase_exp: u8) -> Self {
        self.phase = phase_exp & 3;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_bits(&self) -> u64 {
        self.x
    }

    pub fn z_bits(&self) -> u64 {
        self.z
    }

    pub fn phase_exp(&self) -> u8 {
        self.phase
    }

    pub fn symbol(&self, k: usize) -> Pauli {
        Pauli::from_bits(self.x >> k & 1 == 1, self.z >> k & 1 == 1)
    }

    pub fn set(&mut self, k: usize, sym: Pauli) {
        assert!(k < self.n_qubits, "qubit {k} out of range");
        let (xb, zb) = sym.bits();
        let bit = 1u64 << k;
        self.x = if xb { self.x | bit } else { self.x & !bit };
        self.z = if zb { self.z | bit } else { self.z & !bit };
    }

    pub fn symbols(&self) -> impl Iterator<Item = Pauli> + '_ {
        (0..self.n_qubits).map(move |k| self.symbol(k))
    }

    /// Number of qubits acted on non-trivially.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    /// True for the identity up to global phase.
    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Same operator with the global phase dropped.
    pub fn phase_free(&self) -> Self {
        Self {
            phase: 0,
            ..self.clone()
        }
    }

    fn check_size(&self, other: &Self) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        Ok(())
    }

    /// Operator product `self * other`, phase included.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_size(other)?;
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        // Work in the X^x Z^z basis: each Y carries an extra i, and moving
        // other's X past self's Z costs (-1)^(z1 . x2).
        let k = self.phase as u32
            + other.phase as u32
            + (self.x & self.z).count_ones()
            + (other.x & other.z).count_ones()
            + 2 * (self.z & other.x).count_ones();
        let k = k + 4 * 64 - (x & z).count_ones();
        Ok(Self {
            n_qubits: self.n_qubits,
            x,
            z,
            phase: (k & 3) as u8,
        })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            phase: (4 - self.phase) & 3,
            ..self.clone()
        }
    }

    pub fn commutes_with(&self, other: &Self) -> Result<bool> {
        self.check_size(other)?;
        Ok(symplectic_product(self, other) == 0)
    }

    /// Sign `s` with `d^dag p d = s p`.
    pub fn conj_sign(d: &Self, p: &Self) -> Result<i8> {
        d.check_size(p)?;
        Ok(if symplectic_product(d, p) == 0 { 1 } else { -1 })
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    /// `self |psi>` as a new state.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        let amps = psi.amplitudes();
        if amps.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: amps.len(),
            });
        }
        let mut out = vec![C64::new(0.0, 0.0); amps.len()];
        self.apply_into(amps, &mut out);
        Ok(StateVector::from_amplitudes_unchecked(out))
    }

    /// Writes `self * src` into `dst`. Both slices must have length `2^n`.
    pub fn apply_into(&self, src: &[C64], dst: &mut [C64]) {
        debug_assert_eq!(src.len(), self.dim());
        debug_assert_eq!(dst.len(), self.dim());
        let base = i_pow(self.phase as u32 + (self.x & self.z).count_ones());
        let signs = [base, -base];
        let (x, z) = (self.x as usize, self.z as usize);
        for (b, a) in src.iter().enumerate() {
            dst[b ^ x] = a * signs[((b & z).count_ones() & 1) as usize];
        }
    }

    /// Uniformly random phase-free string: every qubit independently from `{1, X, Y, Z}`.
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, n_qubits: usize) -> Self {
        let mut p = Self::identity(n_qubits);
        for k in 0..n_qubits {
            let sym = Pauli::ALL[rng.gen_range(0..4usize)];
            p.set(k, sym);
        }
        p
    }
}

fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn symplectic_product(a: &PauliString, b: &PauliString) -> u32 {
    ((a.x & b.z) ^ (a.z & b.x)).count_ones() & 1
}

impl fmt::Display for PauliString {
    /// Phase prefix (`-`, `i`, `-i`) only when non-trivial, then one letter per
    /// qubit starting with qubit 0.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "",
            1 => "i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for s in self.symbols() {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, body) = if let Some(rest) = s.strip_prefix("-i") {
            (3, rest)
        } else if let Some(rest) = s.strip_prefix("+i") {
            (1, rest)
        } else if let Some(rest) = s.strip_prefix('i') {
            (1, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (2, rest)
        } else if let Some(rest) = s.strip_prefix('+') {
            (0, rest)
        } else {
            (0, s)
        };
        if body.is_empty() || body.len() > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "pauli string {s:?} must have 1..={MAX_QUBITS} symbols"
            )));
        }
        let symbols = body
            .chars()
            .map(|c| match c {
                'I' | '1' | '_' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::invalid(format!(
                    "unexpected symbol {other:?} in pauli string {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_symbols(&symbols).with_phase(phase))
    }
}
