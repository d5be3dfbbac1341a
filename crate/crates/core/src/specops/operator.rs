use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn times(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Plain: one copy of the Fourier modes [-N, N]. Super: two copies, the
/// first is the even (+) half of the grading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Plain,
    Super,
}

impl Space {
    pub fn dim(self, cutoff: usize) -> usize {
        let d = 2 * cutoff + 1;
        match self {
            Space::Plain => d,
            Space::Super => 2 * d,
        }
    }

    /// +1 on the even half, -1 on the odd half.
    pub fn grading(self, cutoff: usize) -> Vec<f64> {
        let d = 2 * cutoff + 1;
        match self {
            Space::Plain => vec![1.0; d],
            Space::Super => (0..2 * d).map(|i| if i < d { 1.0 } else { -1.0 }).collect(),
        }
    }
}

/// Square band matrix: row i stores columns i-bw ..= i+bw.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    dim: usize,
    bw: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(dim: usize, bw: usize) -> Self {
        let bw = bw.min(dim.saturating_sub(1));
        Self { dim, bw, data: vec![ZERO; dim * (2 * bw + 1)] }
    }

    pub fn from_diagonal(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), 0);
        m.data.copy_from_slice(d);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i.abs_diff(j) > self.bw {
            return ZERO;
        }
        self.data[i * (2 * self.bw + 1) + (j + self.bw - i)]
    }

    /// Panics when (i, j) lies outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(i.abs_diff(j) <= self.bw, "entry outside band");
        self.data[i * (2 * self.bw + 1) + (j + self.bw - i)] = v;
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.bw)..(i + self.bw + 1).min(self.dim)
    }

    fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { dim: self.dim, bw: self.bw, data: self.data.iter().map(|v| f(*v)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpMatrix {
    Banded(BandMatrix),
    Dense(CMat),
}

impl OpMatrix {
    pub fn dim(&self) -> usize {
        match self {
            OpMatrix::Banded(b) => b.dim,
            OpMatrix::Dense(m) => m.nrows(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        match self {
            OpMatrix::Banded(b) => b.get(i, j),
            OpMatrix::Dense(m) => m[(i, j)],
        }
    }

    /// Declared bandwidth; a dense matrix is treated as full.
    pub fn bandwidth(&self) -> usize {
        match self {
            OpMatrix::Banded(b) => b.bw,
            OpMatrix::Dense(m) => m.nrows().saturating_sub(1),
        }
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            OpMatrix::Dense(m) => m.clone(),
            OpMatrix::Banded(b) => {
                let mut m = CMat::zeros(b.dim, b.dim);
                for i in 0..b.dim {
                    for j in b.row_range(i) {
                        m[(i, j)] = b.get(i, j);
                    }
                }
                m
            }
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// Nonzero entries row by row.
    pub fn sparse_rows(&self) -> Vec<Vec<(usize, C64)>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let range = match self {
                    OpMatrix::Banded(b) => b.row_range(i),
                    OpMatrix::Dense(_) => 0..n,
                };
                range
                    .filter_map(|j| {
                        let v = self.get(i, j);
                        (v != ZERO).then_some((j, v))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn mul(&self, other: &OpMatrix) -> OpMatrix {
        match (self, other) {
            (OpMatrix::Banded(a), OpMatrix::Banded(b)) => {
                let n = a.dim;
                let mut c = BandMatrix::zeros(n, a.bw + b.bw);
                for i in 0..n {
                    for k in a.row_range(i) {
                        let aik = a.get(i, k);
                        if aik == ZERO {
                            continue;
                        }
                        for j in b.row_range(k) {
                            let v = c.get(i, j) + aik * b.get(k, j);
                            c.set(i, j, v);
                        }
                    }
                }
                OpMatrix::Banded(c)
            }
            _ => OpMatrix::Dense(self.to_dense() * other.to_dense()),
        }
    }

    pub fn lin_comb(&self, a: C64, other: &OpMatrix, b: C64) -> OpMatrix {
        match (self, other) {
            (OpMatrix::Banded(x), OpMatrix::Banded(y)) => {
                let mut c = BandMatrix::zeros(x.dim, x.bw.max(y.bw));
                for i in 0..x.dim {
                    for j in c.row_range(i) {
                        c.set(i, j, a * x.get(i, j) + b * y.get(i, j));
                    }
                }
                OpMatrix::Banded(c)
            }
            _ => OpMatrix::Dense(self.to_dense() * a + other.to_dense() * b),
        }
    }

    pub fn scale(&self, s: C64) -> OpMatrix {
        match self {
            OpMatrix::Banded(b) => OpMatrix::Banded(b.map(|v| v * s)),
            OpMatrix::Dense(m) => OpMatrix::Dense(m * s),
        }
    }

    pub fn adjoint(&self) -> OpMatrix {
        match self {
            OpMatrix::Dense(m) => OpMatrix::Dense(m.adjoint()),
            OpMatrix::Banded(b) => {
                let mut c = BandMatrix::zeros(b.dim, b.bw);
                for i in 0..b.dim {
                    for j in b.row_range(i) {
                        c.set(j, i, b.get(i, j).conj());
                    }
                }
                OpMatrix::Banded(c)
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            OpMatrix::Banded(b) => b.data.iter().map(|v| v.norm()).fold(0.0, f64::max),
            OpMatrix::Dense(m) => m.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Exact identity test.
    pub fn is_identity(&self) -> bool {
        let n = self.dim();
        match self {
            OpMatrix::Banded(b) => (0..n).all(|i| b.row_range(i).all(|j| b.get(i, j) == if i == j { ONE } else { ZERO })),
            OpMatrix::Dense(m) => (0..n).all(|i| (0..n).all(|j| m[(i, j)] == if i == j { ONE } else { ZERO })),
        }
    }
}

/// Finite section of a PDO on S¹ in the Fourier basis (or its graded
/// double), together with its order and parity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    cutoff: usize,
    space: Space,
    matrix: OpMatrix,
    order: f64,
    parity: Parity,
    self_adjoint: bool,
}

impl SpectralOperator {
    /// Validates shape, parity block structure and the self-adjoint flag.
    pub fn new(cutoff: usize, space: Space, matrix: OpMatrix, order: f64, parity: Parity, self_adjoint: bool) -> Result<Self> {
        let dim = space.dim(cutoff);
        if matrix.dim() != dim {
            return Err(Error::InvalidInput(format!("matrix dimension {} does not match cutoff {cutoff} ({dim})", matrix.dim())));
        }
        let op = Self { cutoff, space, matrix, order, parity, self_adjoint };
        if space == Space::Plain && parity == Parity::Odd {
            return Err(Error::InvalidInput("odd parity needs a graded space".into()));
        }
        if space == Space::Super {
            let half = dim / 2;
            let scale = op.matrix.max_abs().max(1.0);
            for (i, row) in op.matrix.sparse_rows().iter().enumerate() {
                for &(j, v) in row {
                    let same = (i < half) == (j < half);
                    let allowed = same == (parity == Parity::Even);
                    if !allowed && v.norm() > 1e-14 * scale {
                        return Err(Error::InvalidInput(format!("entry ({i},{j}) violates {parity:?} parity")));
                    }
                }
            }
        }
        if self_adjoint {
            let scale = op.matrix.max_abs().max(1.0);
            let adj = op.matrix.adjoint();
            let d = op.matrix.lin_comb(ONE, &adj, -ONE).max_abs();
            if d > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("self-adjoint flag set but defect is {d:.3e}")));
            }
        }
        Ok(op)
    }

    pub(crate) fn from_parts_unchecked(cutoff: usize, space: Space, matrix: OpMatrix, order: f64, parity: Parity, self_adjoint: bool) -> Self {
        Self { cutoff, space, matrix, order, parity, self_adjoint }
    }

    pub fn identity(cutoff: usize, space: Space) -> Self {
        let d = space.dim(cutoff);
        Self::from_parts_unchecked(cutoff, space, OpMatrix::Banded(BandMatrix::from_diagonal(&vec![ONE; d])), 0.0, Parity::Even, true)
    }

    pub fn zero(cutoff: usize, space: Space) -> Self {
        let d = space.dim(cutoff);
        Self::from_parts_unchecked(cutoff, space, OpMatrix::Banded(BandMatrix::zeros(d, 0)), f64::NEG_INFINITY, Parity::Even, true)
    }

    pub fn diagonal_op(cutoff: usize, space: Space, diag: &[C64], order: f64) -> Result<Self> {
        let sa = diag.iter().all(|v| v.im == 0.0);
        Self::new(cutoff, space, OpMatrix::Banded(BandMatrix::from_diagonal(diag)), order, Parity::Even, sa)
    }

    pub fn dense(cutoff: usize, space: Space, m: CMat, order: f64, parity: Parity) -> Result<Self> {
        Self::new(cutoff, space, OpMatrix::Dense(m), order, parity, false)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }
    pub fn space(&self) -> Space {
        self.space
    }
    pub fn matrix(&self) -> &OpMatrix {
        &self.matrix
    }
    pub fn order(&self) -> f64 {
        self.order
    }
    pub fn parity(&self) -> Parity {
        self.parity
    }
    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
    pub fn bandwidth(&self) -> usize {
        self.matrix.bandwidth()
    }
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.matrix.get(i, j)
    }
    pub fn to_dense(&self) -> CMat {
        self.matrix.to_dense()
    }

    /// Index of Fourier mode n in the plain layout.
    pub fn mode_index(&self, n: i64) -> usize {
        (n + self.cutoff as i64) as usize
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.cutoff != other.cutoff {
            return Err(Error::CutoffMismatch { left: self.cutoff, right: other.cutoff });
        }
        if self.space != other.space {
            return Err(Error::InvalidInput("plain and graded operators cannot be combined".into()));
        }
        Ok(())
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_parts_unchecked(
            self.cutoff,
            self.space,
            self.matrix.mul(&other.matrix),
            self.order + other.order,
            self.parity.times(other.parity),
            false,
        ))
    }

    pub fn lin_comb(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_same(other)?;
        if self.parity != other.parity {
            return Err(Error::InvalidInput("cannot add operators of different parity".into()));
        }
        Ok(Self::from_parts_unchecked(
            self.cutoff,
            self.space,
            self.matrix.lin_comb(a, &other.matrix, b),
            self.order.max(other.order),
            self.parity,
            false,
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(ONE, other, ONE)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(ONE, other, -ONE)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut o = self.clone();
        o.matrix = self.matrix.scale(s);
        o.self_adjoint = self.self_adjoint && s.im == 0.0;
        o
    }

    pub fn adjoint(&self) -> Self {
        let mut o = self.clone();
        o.matrix = self.matrix.adjoint();
        o
    }

    /// [A, B] = AB - (-1)^{|A||B|} BA; the sign only matters when `graded`.
    pub fn bracket(&self, other: &Self, graded: bool) -> Result<Self> {
        let ab = self.compose(other)?;
        let ba = other.compose(self)?;
        let both_odd = self.parity == Parity::Odd && other.parity == Parity::Odd;
        let sign = if graded && both_odd { ONE } else { -ONE };
        let mut out = ab.lin_comb(ONE, &ba, sign)?;
        // A commutator lowers the order by at least nothing; keep the sum.
        out.order = self.order + other.order;
        Ok(out)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diagonal().iter().sum()
    }

    /// str = tr on the even half minus tr on the odd half.
    pub fn supertrace(&self) -> C64 {
        if self.parity == Parity::Odd {
            return ZERO;
        }
        let g = self.space.grading(self.cutoff);
        self.matrix.diagonal().iter().zip(&g).map(|(v, s)| v * *s).sum()
    }
}

/// Graded block assembly [[A⁺, Y], [X, A⁻]] with X: ℰ⁺ → ℰ⁻, Y: ℰ⁻ → ℰ⁺.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    pub a_plus: CMat,
    pub a_minus: CMat,
    pub x: CMat,
    pub y: CMat,
}

impl SuperOperator {
    pub fn even(a_plus: CMat, a_minus: CMat) -> Self {
        let d = a_plus.nrows();
        Self { a_plus, a_minus, x: CMat::zeros(d, d), y: CMat::zeros(d, d) }
    }

    pub fn odd(x: CMat, y: CMat) -> Self {
        let d = x.nrows();
        Self { a_plus: CMat::zeros(d, d), a_minus: CMat::zeros(d, d), x, y }
    }

    pub fn to_dense(&self) -> CMat {
        let d = self.a_plus.nrows();
        let mut m = CMat::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.a_plus);
        m.view_mut((d, d), (d, d)).copy_from(&self.a_minus);
        m.view_mut((d, 0), (d, d)).copy_from(&self.x);
        m.view_mut((0, d), (d, d)).copy_from(&self.y);
        m
    }

    pub fn from_dense(m: &CMat) -> Self {
        let d = m.nrows() / 2;
        Self {
            a_plus: m.view((0, 0), (d, d)).into_owned(),
            a_minus: m.view((d, d), (d, d)).into_owned(),
            x: m.view((d, 0), (d, d)).into_owned(),
            y: m.view((0, d), (d, d)).into_owned(),
        }
    }

    pub fn supertrace(&self) -> C64 {
        crate::linalg::trace(&self.a_plus) - crate::linalg::trace(&self.a_minus)
    }

    pub fn is_odd(&self) -> bool {
        self.a_plus.iter().all(|v| *v == ZERO) && self.a_minus.iter().all(|v| *v == ZERO)
    }

    pub fn to_operator(&self, cutoff: usize, order: f64) -> Result<SpectralOperator> {
        let parity = if self.is_odd() { Parity::Odd } else { Parity::Even };
        SpectralOperator::new(cutoff, Space::Super, OpMatrix::Dense(self.to_dense()), order, parity, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn banded(dim: usize, bw: usize, seed: u64) -> OpMatrix {
        let mut b = BandMatrix::zeros(dim, bw);
        let mut s = seed;
        for i in 0..dim {
            for j in b.row_range(i) {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5;
                b.set(i, j, c64(v, 0.3 * v));
            }
        }
        OpMatrix::Banded(b)
    }

    #[test]
    fn banded_product_matches_dense() {
        let a = banded(9, 2, 1);
        let b = banded(9, 1, 2);
        let p = a.mul(&b);
        assert_eq!(p.bandwidth(), 3);
        let d = a.to_dense() * b.to_dense();
        assert!((p.to_dense() - d).norm() < 1e-14);
    }

    #[test]
    fn graded_bracket_of_odd_operators_is_anticommutator() {
        let d = 3;
        let x = CMat::from_fn(d, d, |i, j| c64((i + j) as f64, 0.0));
        let y = CMat::from_fn(d, d, |i, j| c64(i as f64 - j as f64, 1.0));
        let a = SuperOperator::odd(x.clone(), y.clone()).to_operator(1, 1.0).unwrap();
        let b = SuperOperator::odd(y, x).to_operator(1, 1.0).unwrap();
        let br = a.bracket(&b, true).unwrap();
        let expect = a.to_dense() * b.to_dense() + b.to_dense() * a.to_dense();
        assert!((br.to_dense() - expect).norm() < 1e-13);
        assert_eq!(br.parity(), Parity::Even);
        assert_eq!(a.supertrace(), ZERO);
    }

    #[test]
    fn parity_violation_is_rejected() {
        let m = CMat::identity(6, 6);
        assert!(SpectralOperator::dense(1, Space::Super, m, 0.0, Parity::Odd).is_err());
    }
}
