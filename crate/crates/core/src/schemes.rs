//! Decoupling cycles and frame sequences.
//!
//! A cycle is an ordered list of Pauli frames `d_0 .. d_{N-1}` held for one
//! pulse interval each. The frames for the 9-qubit memory come from a
//! strength-2 orthogonal array `OA(32, 9, 4, 2)`: reading symbol `l` of each
//! row as `sigma_l` turns "every pair of columns shows every symbol pair
//! equally often" into "every one- and two-local Pauli term is conjugated to
//! `+P` and `-P` equally often", which is the first-order decoupling condition.
//!
//! Four schemes drive the engine through the same frame interface:
//!
//! | scheme     | frame `g_j`                                   |
//! |------------|-----------------------------------------------|
//! | free       | `1`                                           |
//! | bang-bang  | `d_{j mod N}`                                 |
//! | PAREC      | `r_j`, i.i.d. uniform Pauli strings           |
//! | embedded   | `d_{j mod N} r_{floor(j / N)}`                |
//!
//! The physical pulse at step `j` is `g_j g_{j-1}^dag`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::PauliSumHamiltonian;
use crate::pauli::{Pauli, PauliString};

/// Rectangular array over the alphabet `0..q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolArray {
    rows: usize,
    cols: usize,
    q: u8,
    data: Vec<u8>,
}

impl SymbolArray {
    pub fn new(rows: usize, cols: usize, q: u8, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} entries for a {rows}x{cols} array",
                data.len()
            )));
        }
        if q < 2 {
            return Err(Error::invalid("alphabet needs at least two symbols"));
        }
        if let Some(bad) = data.iter().find(|&&s| s >= q) {
            return Err(Error::invalid(format!("symbol {bad} outside 0..{q}")));
        }
        Ok(Self { rows, cols, q, data })
    }

    pub fn from_rows(q: u8, rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, q, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alphabet(&self) -> u8 {
        self.q
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, s: u8) {
        assert!(s < self.q);
        self.data[r * self.cols + c] = s;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Relabels symbols column by column so that row 0 is all zeros. For an
    /// alphabet of size `2^m` the relabelling is `s -> s ^ row0[c]`; otherwise
    /// a cyclic shift. Both are permutations, so strength is preserved.
    pub fn normalize_first_row(&mut self) {
        if self.rows == 0 {
            return;
        }
        let q = self.q;
        let xor = q.is_power_of_two();
        for c in 0..self.cols {
            let s0 = self.get(0, c);
            for r in 0..self.rows {
                let s = self.get(r, c);
                let t = if xor { s ^ s0 } else { (s + q - s0) % q };
                self.set(r, c, t);
            }
        }
    }
}

/// Outcome of [`verify_orthogonal_array`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OaVerdict {
    /// Every `t`-tuple of columns shows every symbol tuple exactly `lambda` times.
    Pass { lambda: usize },
    /// First offending column set and symbol tuple.
    Fail {
        columns: Vec<usize>,
        symbols: Vec<u8>,
        count: usize,
        expected: usize,
    },
}

impl OaVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, OaVerdict::Pass { .. })
    }
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let t = idx.len();
    for i in (0..t).rev() {
        if idx[i] < n - t + i {
            idx[i] += 1;
            for j in i + 1..t {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact counting check of strength `t`.
pub fn verify_orthogonal_array(a: &SymbolArray, strength: usize) -> Result<OaVerdict> {
    if strength == 0 || strength > a.cols {
        return Err(Error::invalid(format!(
            "strength {strength} is not in 1..={}",
            a.cols
        )));
    }
    let q = a.q as usize;
    let cells = q.pow(strength as u32);
    let expected = a.rows / cells;
    let mut cols: Vec<usize> = (0..strength).collect();
    let mut counts = vec![0usize; cells];
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for r in 0..a.rows {
            let cell = cols
                .iter()
                .fold(0usize, |acc, &c| acc * q + a.get(r, c) as usize);
            counts[cell] += 1;
        }
        if let Some((cell, &count)) = counts
            .iter()
            .enumerate()
            .find(|(_, &n)| n * cells != a.rows)
        {
            let mut symbols = vec![0u8; strength];
            let mut rem = cell;
            for s in symbols.iter_mut().rev() {
                *s = (rem % q) as u8;
                rem /= q;
            }
            return Ok(OaVerdict::Fail {
                columns: cols,
                symbols,
                count,
                expected,
            });
        }
        if !next_combination(&mut cols, a.cols) {
            break;
        }
    }
    Ok(OaVerdict::Pass { lambda: expected })
}

/// Arithmetic in GF(2^m) for small `m`, elements as bit patterns.
#[derive(Clone, Copy, Debug)]
struct BinaryField {
    m: u32,
    poly: u32,
}

impl BinaryField {
    fn new(m: u32) -> Option<Self> {
        // primitive polynomials, x^m term included
        let poly = match m {
            1 => 0b11,
            2 => 0b111,
            3 => 0b1011,
            4 => 0b1_0011,
            5 => 0b10_0101,
            6 => 0b100_0011,
            7 => 0b1000_1001,
            _ => return None,
        };
        Some(Self { m, poly })
    }

    fn mul(&self, a: u32, b: u32) -> u32 {
        let mut r = 0u32;
        for i in 0..self.m {
            if b >> i & 1 == 1 {
                r ^= a << i;
            }
        }
        for i in (self.m..2 * self.m).rev() {
            if r >> i & 1 == 1 {
                r ^= self.poly << (i - self.m);
            }
        }
        r
    }
}

/// Strength-2 orthogonal array `OA(2q^2, cols, q, 2)` for `q = 2^m` and
/// `cols <= 2q + 1`.
///
/// Uses the difference scheme `D[a][b] = phi(a * b)` over GF(2q), where `phi`
/// drops the top bit onto the additive group GF(2)^m. Row `(a, g)` holds
/// `phi(a b) ^ g` in column `b` for every `b` in GF(2q), and `phi(a)` in one
/// extra column. The result is GF(2)-linear in `(a, g)`, so row 0 is all zero
/// and the rows are closed under symbolwise XOR.
pub fn construct_oa(q: usize, runs: usize, cols: usize) -> Result<SymbolArray> {
    if !q.is_power_of_two() || q < 2 {
        return Err(Error::Construction(format!(
            "alphabet size {q} is not a power of two"
        )));
    }
    if runs != 2 * q * q {
        return Err(Error::Construction(format!(
            "this construction yields {} runs for q = {q}, not {runs}",
            2 * q * q
        )));
    }
    if cols == 0 || cols > 2 * q + 1 {
        return Err(Error::Construction(format!(
            "at most {} columns are available for q = {q}",
            2 * q + 1
        )));
    }
    let m = q.trailing_zeros();
    let field = BinaryField::new(m + 1)
        .ok_or_else(|| Error::Construction(format!("GF(2^{}) not tabulated", m + 1)))?;
    let big = 2 * q as u32;
    let phi = |v: u32| (v & (q as u32 - 1)) as u8;
    let mut data = Vec::with_capacity(runs * cols);
    for a in 0..big {
        for g in 0..q as u8 {
            let row = (0..big)
                .map(|b| phi(field.mul(a, b)) ^ g)
                .chain(std::iter::once(phi(a)))
                .take(cols);
            data.extend(row);
        }
    }
    let mut oa = SymbolArray::new(runs, cols, q as u8, data)?;
    oa.normalize_first_row();
    match verify_orthogonal_array(&oa, 2)? {
        OaVerdict::Pass { .. } => Ok(oa),
        fail => Err(Error::Construction(format!("verification failed: {fail:?}"))),
    }
}

/// Ordered Pauli frames, each held for `step`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingCycle {
    n_qubits: usize,
    frames: Vec<PauliString>,
    step: f64,
}

impl DecouplingCycle {
    pub fn new(frames: Vec<PauliString>, step: f64) -> Result<Self> {
        let n_qubits = frames
            .first()
            .ok_or_else(|| Error::invalid("a cycle needs at least one frame"))?
            .n_qubits();
        if let Some(bad) = frames.iter().find(|f| f.n_qubits() != n_qubits) {
            return Err(Error::QubitMismatch {
                expected: n_qubits,
                found: bad.n_qubits(),
            });
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(format!("step {step} must be positive")));
        }
        Ok(Self {
            n_qubits,
            frames,
            step,
        })
    }

    /// The trivial cycle `{1}`.
    pub fn trivial(n_qubits: usize, step: f64) -> Self {
        Self::new(vec![PauliString::identity(n_qubits)], step).expect("valid trivial cycle")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn frames(&self) -> &[PauliString] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cycle_time(&self) -> f64 {
        self.frames.len() as f64 * self.step
    }

    /// Same frames with a different step.
    pub fn with_step(&self, step: f64) -> Result<Self> {
        Self::new(self.frames.clone(), step)
    }

    /// Header `"N n_qubits"`, then one Pauli string per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.frames.len(), self.n_qubits);
        for f in &self.frames {
            let _ = writeln!(s, "{f}");
        }
        s
    }

    pub fn from_text(text: &str, step: f64) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty cycle file".into(),
        })?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: hline,
                message: format!("bad header {header:?}"),
            })?;
        let [n_frames, n_qubits] = nums[..] else {
            return Err(Error::Parse {
                line: hline,
                message: "header must be \"N n_qubits\"".into(),
            });
        };
        let mut frames = Vec::with_capacity(n_frames);
        for (line, l) in lines {
            let f: PauliString = l.parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if f.n_qubits() != n_qubits {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {n_qubits} symbols, got {}", f.n_qubits()),
                });
            }
            frames.push(f);
        }
        if frames.len() != n_frames {
            return Err(Error::Parse {
                line: hline,
                message: format!("header announces {n_frames} frames, found {}", frames.len()),
            });
        }
        Self::new(frames, step)
    }
}

/// Row `j` becomes `sigma_{a[j][0]} (x) sigma_{a[j][1]} (x) ...`.
pub fn cycle_from_array(a: &SymbolArray, step: f64) -> Result<DecouplingCycle> {
    if a.alphabet() != 4 {
        return Err(Error::invalid(format!(
            "pauli frames need a 4-symbol alphabet, got {}",
            a.alphabet()
        )));
    }
    let frames = (0..a.rows())
        .map(|r| {
            let syms: Vec<Pauli> = a
                .row(r)
                .iter()
                .map(|&s| Pauli::from_index(s).expect("checked alphabet"))
                .collect();
            PauliString::from_symbols(&syms)
        })
        .collect();
    DecouplingCycle::new(frames, step)
}

/// The 32-frame cycle decoupling every one- and two-local term on 9 qubits.
pub fn oa_cycle_9q(step: f64) -> Result<DecouplingCycle> {
    cycle_from_array(&construct_oa(4, 32, 9)?, step)
}

/// `sum_j s_j` with `d_j^dag P d_j = s_j P`, exact integer.
pub fn first_order_sign_sum(cycle: &DecouplingCycle, p: &PauliString) -> Result<i64> {
    cycle
        .frames
        .iter()
        .map(|d| PauliString::conj_sign(d, p).map(i64::from))
        .sum()
}

/// `sum_j d_j^dag H d_j * step`; zero certifies first-order decoupling.
pub fn verify_decoupling(
    cycle: &DecouplingCycle,
    h: &PauliSumHamiltonian,
) -> Result<PauliSumHamiltonian> {
    if h.n_qubits() != cycle.n_qubits {
        return Err(Error::QubitMismatch {
            expected: cycle.n_qubits,
            found: h.n_qubits(),
        });
    }
    let mut terms = Vec::new();
    for (c, p) in h.terms() {
        let net = first_order_sign_sum(cycle, p)?;
        if net != 0 {
            terms.push((c * net as f64 * cycle.step, p.clone()));
        }
    }
    PauliSumHamiltonian::new(h.n_qubits(), terms)
}

/// Every Pauli string of weight `1..=locality`, lowest weight first, then by
/// qubit positions, then by symbol (X, Y, Z).
pub fn local_pauli_terms(n_qubits: usize, locality: usize) -> Vec<PauliString> {
    let mut out = Vec::new();
    for w in 1..=locality.min(n_qubits) {
        let mut pos: Vec<usize> = (0..w).collect();
        loop {
            for code in 0..3usize.pow(w as u32) {
                let mut p = PauliString::identity(n_qubits);
                let mut rem = code;
                for &k in pos.iter().rev() {
                    p.set(k, [Pauli::X, Pauli::Y, Pauli::Z][rem % 3]);
                    rem /= 3;
                }
                out.push(p);
            }
            if !next_combination(&mut pos, n_qubits) {
                break;
            }
        }
    }
    out
}

/// First term of weight `<= locality` that the cycle fails to average out.
pub fn find_undecoupled_term(
    cycle: &DecouplingCycle,
    locality: usize,
) -> Result<Option<PauliString>> {
    for p in local_pauli_terms(cycle.n_qubits, locality) {
        if first_order_sign_sum(cycle, &p)? != 0 {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Free,
    BangBang,
    Parec,
    Embedded,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Free,
        SchemeKind::BangBang,
        SchemeKind::Parec,
        SchemeKind::Embedded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Free => "free",
            SchemeKind::BangBang => "bang_bang",
            SchemeKind::Parec => "parec",
            SchemeKind::Embedded => "embedded",
        }
    }

    pub fn needs_cycle(self) -> bool {
        matches!(self, SchemeKind::BangBang | SchemeKind::Embedded)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, SchemeKind::Parec | SchemeKind::Embedded)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(SchemeKind::Free),
            "bang_bang" | "bang-bang" | "bangbang" => Ok(SchemeKind::BangBang),
            "parec" => Ok(SchemeKind::Parec),
            "embedded" => Ok(SchemeKind::Embedded),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    kind: SchemeKind,
    cycle: Option<DecouplingCycle>,
    n_qubits: usize,
    pulse_interval: f64,
}

impl SchemeSpec {
    pub fn free(n_qubits: usize, pulse_interval: f64) -> Self {
        Self {
            kind: SchemeKind::Free,
            cycle: None,
            n_qubits,
            pulse_interval,
        }
    }

    pub fn parec(n_qubits: usize, pulse_interval: f64) -> Self {
        Self {
            kind: SchemeKind::Parec,
            cycle: None,
            n_qubits,
            pulse_interval,
        }
    }

    pub fn bang_bang(cycle: DecouplingCycle) -> Self {
        Self::with_cycle(SchemeKind::BangBang, cycle)
    }

    pub fn embedded(cycle: DecouplingCycle) -> Self {
        Self::with_cycle(SchemeKind::Embedded, cycle)
    }

    fn with_cycle(kind: SchemeKind, cycle: DecouplingCycle) -> Self {
        Self {
            kind,
            n_qubits: cycle.n_qubits(),
            pulse_interval: cycle.step(),
            cycle: Some(cycle),
        }
    }

    /// Generic constructor; a cycle is required for bang-bang and embedded.
    pub fn new(
        kind: SchemeKind,
        n_qubits: usize,
        pulse_interval: f64,
        cycle: Option<DecouplingCycle>,
    ) -> Result<Self> {
        match (kind.needs_cycle(), cycle) {
            (true, None) => Err(Error::invalid(format!("scheme {kind} needs a cycle"))),
            (true, Some(c)) => {
                if c.n_qubits() != n_qubits {
                    return Err(Error::QubitMismatch {
                        expected: n_qubits,
                        found: c.n_qubits(),
                    });
                }
                Ok(Self::with_cycle(kind, c.with_step(pulse_interval)?))
            }
            (false, _) => Ok(Self {
                kind,
                cycle: None,
                n_qubits,
                pulse_interval,
            }),
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn cycle(&self) -> Option<&DecouplingCycle> {
        self.cycle.as_ref()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn pulse_interval(&self) -> f64 {
        self.pulse_interval
    }

    /// Steps between natural recording points: the cycle length for
    /// bang-bang and embedded, 1 otherwise.
    pub fn natural_stride(&self) -> usize {
        match (&self.kind, &self.cycle) {
            (SchemeKind::BangBang | SchemeKind::Embedded, Some(c)) => c.len(),
            _ => 1,
        }
    }

    /// Streaming frame generator; draws from `rng` only for stochastic schemes.
    pub fn frames<'a, R: Rng + ?Sized>(&'a self, rng: &'a mut R) -> Frames<'a, R> {
        Frames {
            spec: self,
            rng,
            j: 0,
            random: PauliString::identity(self.n_qubits),
        }
    }
}

/// Infinite iterator over `g_0, g_1, ...` of a scheme.
pub struct Frames<'a, R: ?Sized> {
    spec: &'a SchemeSpec,
    rng: &'a mut R,
    j: usize,
    random: PauliString,
}

impl<R: Rng + ?Sized> Iterator for Frames<'_, R> {
    type Item = PauliString;

    fn next(&mut self) -> Option<PauliString> {
        let n = self.spec.n_qubits;
        let j = self.j;
        self.j += 1;
        let g = match (self.spec.kind, &self.spec.cycle) {
            (SchemeKind::Free, _) => PauliString::identity(n),
            (SchemeKind::Parec, _) => PauliString::sample_uniform(self.rng, n),
            (SchemeKind::BangBang, Some(c)) => c.frames[j % c.len()].clone(),
            (SchemeKind::Embedded, Some(c)) => {
                if j % c.len() == 0 {
                    self.random = PauliString::sample_uniform(self.rng, n);
                }
                c.frames[j % c.len()]
                    .compose(&self.random)
                    .expect("frames share the register size")
            }
            (_, None) => unreachable!("constructor guarantees a cycle"),
        };
        Some(g)
    }
}

/// The first `n_steps` frames of a scheme.
pub fn frame_sequence<R: Rng + ?Sized>(
    spec: &SchemeSpec,
    n_steps: usize,
    rng: &mut R,
) -> Vec<PauliString> {
    spec.frames(rng).take(n_steps).collect()
}

/// Physical pulses `g_j g_{j-1}^dag` with `g_{-1} = 1`.
pub fn pulses(frames: &[PauliString]) -> Result<Vec<PauliString>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let mut out = vec![first.clone()];
    for w in frames.windows(2) {
        out.push(w[1].compose(&w[0].adjoint())?);
    }
    Ok(out)
}
