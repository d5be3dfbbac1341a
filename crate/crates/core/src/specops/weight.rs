use super::expr::{OperatorExpr, DEFAULT_SYMBOL_DEPTH};
use super::operator::{BandMatrix, OpMatrix, Parity, Space, SpectralOperator};
use super::symbol::ClassicalSymbol;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMat, C64, ZERO};

/// Strictly positive self-adjoint elliptic operator used to regularize
/// traces. Either diagonal in the Fourier basis (`basis == None`, eigenvalues
/// indexed like the modes) or given by an explicit unitary eigenbasis whose
/// columns are homogeneous for the grading.
#[derive(Debug, Clone)]
pub struct Weight {
    cutoff: usize,
    space: Space,
    eigenvalues: Vec<f64>,
    basis: Option<CMat>,
    grading: Vec<f64>,
    order: f64,
    dim_m: u32,
    symbol: Option<ClassicalSymbol>,
    source: Option<OperatorExpr>,
}

impl Weight {
    /// Diagonal weight from a Fourier-multiplier literal.
    pub fn from_expr(expr: &OperatorExpr, cutoff: usize) -> Result<Self> {
        if !expr.is_multiplier() {
            return Err(Error::InvalidInput("a weight literal must be a Fourier multiplier".into()));
        }
        let order = expr.order()?;
        let n0 = cutoff as i64;
        let mut eigenvalues = Vec::with_capacity(2 * cutoff + 1);
        for n in -n0..=n0 {
            let v = expr.multiplier_at(n)?;
            if v.im != 0.0 || v.re <= 0.0 {
                return Err(Error::InvalidInput(format!("weight eigenvalue at mode {n} is not positive ({v})")));
            }
            eigenvalues.push(v.re);
        }
        let symbol = expr.symbol(DEFAULT_SYMBOL_DEPTH).ok();
        let w = Self {
            cutoff,
            space: Space::Plain,
            eigenvalues,
            basis: None,
            grading: Space::Plain.grading(cutoff),
            order,
            dim_m: 1,
            symbol,
            source: Some(expr.clone()),
        };
        w.check_growth()?;
        Ok(w)
    }

    /// Diagonal weight from explicit mode-indexed eigenvalues.
    pub fn from_diagonal(cutoff: usize, space: Space, eigenvalues: Vec<f64>, order: f64) -> Result<Self> {
        if eigenvalues.len() != space.dim(cutoff) {
            return Err(Error::InvalidInput("eigenvalue count does not match cutoff".into()));
        }
        if order <= 0.0 {
            return Err(Error::InvalidInput("weight order must be positive".into()));
        }
        if let Some(v) = eigenvalues.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidInput(format!("weight eigenvalue {v} is not positive")));
        }
        Ok(Self {
            cutoff,
            space,
            grading: space.grading(cutoff),
            eigenvalues,
            basis: None,
            order,
            dim_m: 1,
            symbol: None,
            source: None,
        })
    }

    /// Weight Q⁺ ⊕ Q⁻ on the graded space from Hermitian blocks. Each block is
    /// diagonalized separately so the eigenbasis respects the grading.
    pub fn from_super_blocks(cutoff: usize, q_plus: &CMat, q_minus: &CMat, order: f64) -> Result<Self> {
        let d = 2 * cutoff + 1;
        if q_plus.nrows() != d || q_minus.nrows() != d {
            return Err(Error::InvalidInput("block size does not match cutoff".into()));
        }
        let (wp, up) = hermitian_eigen(q_plus);
        let (wm, um) = hermitian_eigen(q_minus);
        let mut basis = CMat::zeros(2 * d, 2 * d);
        basis.view_mut((0, 0), (d, d)).copy_from(&up);
        basis.view_mut((d, d), (d, d)).copy_from(&um);
        let eigenvalues: Vec<f64> = wp.into_iter().chain(wm).collect();
        if let Some(v) = eigenvalues.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Singular(format!("weight has non-positive eigenvalue {v:.3e}")));
        }
        Ok(Self {
            cutoff,
            space: Space::Super,
            grading: Space::Super.grading(cutoff),
            eigenvalues,
            basis: Some(basis),
            order,
            dim_m: 1,
            symbol: None,
            source: None,
        })
    }

    /// Plain weight from a Hermitian matrix.
    pub fn from_hermitian(cutoff: usize, q: &CMat, order: f64) -> Result<Self> {
        let (w, u) = hermitian_eigen(q);
        if let Some(v) = w.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Singular(format!("weight has non-positive eigenvalue {v:.3e}")));
        }
        Ok(Self {
            cutoff,
            space: Space::Plain,
            grading: Space::Plain.grading(cutoff),
            eigenvalues: w,
            basis: Some(u),
            order,
            dim_m: 1,
            symbol: None,
            source: None,
        })
    }

    fn check_growth(&self) -> Result<()> {
        // λ_n / |n|^q must stay within a bounded ratio of the leading symbol
        // coefficient for large |n|.
        let Some(sym) = &self.symbol else { return Ok(()) };
        let Some(top) = sym.components().first() else { return Ok(()) };
        let n0 = self.cutoff as i64;
        if n0 < 4 {
            return Ok(());
        }
        for (n, c) in [(n0, top.plus.mean()), (-n0, top.minus.mean())] {
            let lam = self.eigenvalues[(n + n0) as usize];
            let ratio = lam / ((n.unsigned_abs() as f64).powf(self.order) * c.re);
            if !(0.1..10.0).contains(&ratio) {
                return Err(Error::InvalidInput(format!("eigenvalue growth at mode {n} off the leading symbol (ratio {ratio:.3})")));
            }
        }
        Ok(())
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }
    pub fn space(&self) -> Space {
        self.space
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn basis(&self) -> Option<&CMat> {
        self.basis.as_ref()
    }
    pub fn grading(&self) -> &[f64] {
        &self.grading
    }
    pub fn order(&self) -> f64 {
        self.order
    }
    pub fn dim_m(&self) -> u32 {
        self.dim_m
    }
    pub fn symbol(&self) -> Option<&ClassicalSymbol> {
        self.symbol.as_ref()
    }
    pub fn source(&self) -> Option<&OperatorExpr> {
        self.source.as_ref()
    }
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// Same weight restricted to the ungraded trace (grading all +1).
    pub fn ungraded(&self) -> Self {
        let mut w = self.clone();
        w.grading = vec![1.0; w.eigenvalues.len()];
        w
    }

    /// Operator f(Q) as a spectral operator.
    pub fn functional_calculus(&self, f: impl Fn(f64) -> C64, order: f64) -> SpectralOperator {
        let vals: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let m = match &self.basis {
            None => OpMatrix::Banded(BandMatrix::from_diagonal(&vals)),
            Some(u) => {
                let mut scaled = u.clone();
                for (j, v) in vals.iter().enumerate() {
                    scaled.column_mut(j).scale_mut(1.0);
                    for i in 0..u.nrows() {
                        scaled[(i, j)] *= *v;
                    }
                }
                OpMatrix::Dense(scaled * u.adjoint())
            }
        };
        let sa = vals.iter().all(|v| v.im == 0.0);
        SpectralOperator::from_parts_unchecked(self.cutoff, self.space, m, order, Parity::Even, sa)
    }

    /// e^{-εQ}.
    pub fn heat_operator(&self, eps: f64) -> Result<SpectralOperator> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("heat time must be positive, got {eps}")));
        }
        Ok(self.functional_calculus(|l| C64::from((-eps * l).exp()), f64::NEG_INFINITY))
    }

    /// Q^{-z} (the kernel projector is zero since Q > 0).
    pub fn complex_power(&self, z: C64) -> SpectralOperator {
        self.functional_calculus(|l| C64::from(l).powc(-z), -z.re * self.order)
    }

    /// log Q, the z-derivative of Q^{-z} at 0 up to sign.
    pub fn log_weight(&self) -> SpectralOperator {
        self.functional_calculus(|l| C64::from(l.ln()), 0.0)
    }

    /// The operator's matrix in the eigenbasis of Q.
    pub fn to_eigenbasis(&self, a: &SpectralOperator) -> Result<OpMatrix> {
        if a.dim() != self.eigenvalues.len() {
            return Err(Error::CutoffMismatch { left: a.cutoff(), right: self.cutoff });
        }
        Ok(match &self.basis {
            None => a.matrix().clone(),
            // keep I exactly diagonal: roundoff fill-in would make it dense
            Some(_) if a.matrix().is_identity() => a.matrix().clone(),
            Some(u) if self.space == Space::Super => OpMatrix::Dense(blockwise_conjugate(u, &a.to_dense())),
            Some(u) => OpMatrix::Dense(u.adjoint() * a.to_dense() * u),
        })
    }

    /// Diagonal of A in the eigenbasis of Q, computed without forming the
    /// full transformed matrix.
    pub fn eigen_diagonal(&self, a: &SpectralOperator) -> Result<Vec<C64>> {
        if a.dim() != self.eigenvalues.len() {
            return Err(Error::CutoffMismatch { left: a.cutoff(), right: self.cutoff });
        }
        Ok(match &self.basis {
            None => a.matrix().diagonal(),
            Some(u) => {
                let au = a.to_dense() * u;
                (0..u.ncols())
                    .map(|k| u.column(k).iter().zip(au.column(k).iter()).map(|(x, y)| x.conj() * y).sum())
                    .collect()
            }
        })
    }

    /// [A]_Q^j, the j-fold commutator with Q; order ≤ a + j(q-1).
    pub fn iterated_bracket(&self, a: &SpectralOperator, j: u32) -> Result<SpectralOperator> {
        if a.dim() != self.eigenvalues.len() {
            return Err(Error::CutoffMismatch { left: a.cutoff(), right: self.cutoff });
        }
        let order = a.order() + j as f64 * (self.order - 1.0);
        let m = match (&self.basis, a.matrix()) {
            (None, OpMatrix::Banded(b)) => {
                let mut out = BandMatrix::zeros(b.dim(), b.bandwidth());
                for r in 0..b.dim() {
                    for c in b.row_range(r) {
                        let f = (self.eigenvalues[r] - self.eigenvalues[c]).powi(j as i32);
                        out.set(r, c, b.get(r, c) * f);
                    }
                }
                OpMatrix::Banded(out)
            }
            (None, OpMatrix::Dense(d)) => {
                OpMatrix::Dense(CMat::from_fn(d.nrows(), d.ncols(), |r, c| d[(r, c)] * (self.eigenvalues[r] - self.eigenvalues[c]).powi(j as i32)))
            }
            (Some(_), _) => {
                let q = self.functional_calculus(C64::from, self.order).to_dense();
                let mut cur = a.to_dense();
                for _ in 0..j {
                    cur = &q * &cur - &cur * &q;
                }
                OpMatrix::Dense(cur)
            }
        };
        Ok(SpectralOperator::from_parts_unchecked(a.cutoff(), a.space(), m, order, a.parity(), false))
    }

    /// Bound on Σ_{|n| > N} (1 + |n|)^growth e^{-ελ_n}. Exact summation of
    /// the literal when the weight came from one; otherwise a model
    /// λ_n ≈ λ_max (|n|/N)^q extrapolated from the largest eigenvalue.
    pub fn tail_bound(&self, eps: f64, growth: f64) -> f64 {
        let copies = match self.space {
            Space::Plain => 1.0,
            Space::Super => 2.0,
        };
        let n0 = self.cutoff as i64;
        let lam: Box<dyn Fn(i64) -> f64 + '_> = match &self.source {
            Some(expr) => Box::new(move |n| expr.multiplier_at(n).map(|v| v.re).unwrap_or(f64::INFINITY)),
            None => {
                let lmax = self.max_eigenvalue();
                let q = self.order;
                Box::new(move |n| lmax * (n.abs() as f64 / n0.max(1) as f64).powf(q))
            }
        };
        let mut total = 0.0;
        let mut n = n0 + 1;
        loop {
            let t = ((1.0 + n as f64).powf(growth) * (-eps * lam(n)).exp())
                + ((1.0 + n as f64).powf(growth) * (-eps * lam(-n)).exp());
            total += t;
            if t == 0.0 || (t < 1e-17 * total && n > n0 + 8) {
                break;
            }
            n += 1;
            if n > n0 + 50_000_000 {
                return f64::INFINITY;
            }
        }
        copies * total
    }

    /// Smallest cutoff for which the tail bound of a multiplier weight at
    /// `eps` stays below `tol`.
    pub fn cutoff_for_tail(expr: &OperatorExpr, eps: f64, growth: f64, tol: f64) -> Result<usize> {
        let mut terms = Vec::new();
        let mut n: i64 = 1;
        loop {
            let lp = expr.multiplier_at(n)?.re;
            let lm = expr.multiplier_at(-n)?.re;
            let g = (1.0 + n as f64).powf(growth);
            let t = g * ((-eps * lp).exp() + (-eps * lm).exp());
            terms.push(t);
            let head: f64 = terms.iter().sum();
            if n > 8 && t < 1e-3 * tol && t <= 1e-17 * head.max(1.0) {
                break;
            }
            if n > 20_000_000 {
                return Err(Error::TailTooLarge { bound: t, tolerance: tol, cutoff: n as usize });
            }
            n += 1;
        }
        // suffix sums: tail beyond N is Σ_{n > N} terms[n-1]
        let mut suffix = 0.0;
        let mut best = terms.len();
        for (idx, t) in terms.iter().enumerate().rev() {
            // tail for N = idx is Σ terms[idx..]
            suffix += t;
            if suffix < tol {
                best = idx;
            } else {
                break;
            }
        }
        Ok(best.max(4))
    }

    pub fn zero_like(&self) -> SpectralOperator {
        let _ = ZERO;
        SpectralOperator::zero(self.cutoff, self.space)
    }
}

/// U^* A U for block-diagonal U = U⁺ ⊕ U⁻, skipping zero blocks of A.
fn blockwise_conjugate(u: &CMat, a: &CMat) -> CMat {
    let d = u.nrows() / 2;
    let mut out = CMat::zeros(2 * d, 2 * d);
    for (r, c) in [(0, 0), (0, d), (d, 0), (d, d)] {
        let blk = a.view((r, c), (d, d));
        if blk.iter().all(|v| *v == ZERO) {
            continue;
        }
        let ur = u.view((r, r), (d, d));
        let uc = u.view((c, c), (d, d));
        out.view_mut((r, c), (d, d)).copy_from(&(ur.adjoint() * blk * uc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn lap(n: usize) -> Weight {
        Weight::from_expr(&OperatorExpr::laplacian_plus_one(), n).unwrap()
    }

    #[test]
    fn heat_operator_closed_forms() {
        let q = lap(6);
        let h = q.heat_operator(1.0).unwrap();
        let i0 = h.mode_index(0);
        assert_eq!(h.get(i0, i0), C64::from((-1.0f64).exp()));
        assert!(q.heat_operator(0.0).is_err());
        let a = q.heat_operator(0.3).unwrap().compose(&q.heat_operator(0.5).unwrap()).unwrap();
        let b = q.heat_operator(0.8).unwrap();
        assert!((a.to_dense() - b.to_dense()).norm() < 1e-15);
    }

    #[test]
    fn complex_power_special_values() {
        let q = lap(5);
        assert!(q.complex_power(c64(0.0, 0.0)).matrix().is_identity());
        let inv = q.complex_power(c64(1.0, 0.0));
        for (i, l) in q.eigenvalues().iter().enumerate() {
            assert!((inv.get(i, i).re - 1.0 / l).abs() < 1e-15);
        }
    }

    #[test]
    fn log_weight_is_minus_derivative_of_power() {
        let q = lap(5);
        let h = 1e-6;
        let p = q.complex_power(c64(h, 0.0)).to_dense();
        let m = q.complex_power(c64(-h, 0.0)).to_dense();
        let fd = (p - m) / C64::from(2.0 * h);
        let lg = q.log_weight().to_dense();
        assert!((fd + lg).norm() < 1e-8);
    }

    #[test]
    fn iterated_bracket_with_cosine() {
        let q = lap(5);
        let c = OperatorExpr::cos(1).quantize(5).unwrap();
        let b = q.iterated_bracket(&c, 1).unwrap();
        for m in -5i64..=5 {
            for n in -5i64..=5 {
                let want = if (m - n).abs() == 1 { 0.5 * (m * m - n * n) as f64 } else { 0.0 };
                assert_eq!(b.get(b.mode_index(m), b.mode_index(n)), C64::from(want));
            }
        }
        assert!(q.iterated_bracket(&c, 0).unwrap().to_dense() == c.to_dense());
        let d = OperatorExpr::laplacian_plus_one().power_of(-0.5).unwrap().quantize(5).unwrap();
        assert_eq!(q.iterated_bracket(&d, 2).unwrap().matrix().max_abs(), 0.0);
    }

    #[test]
    fn cutoff_policy_meets_tolerance() {
        let e = OperatorExpr::laplacian_plus_one();
        let n = Weight::cutoff_for_tail(&e, 0.01, 0.0, 1e-12).unwrap();
        let w = Weight::from_expr(&e, n).unwrap();
        assert!(w.tail_bound(0.01, 0.0) < 1e-12);
        let w2 = Weight::from_expr(&e, n - 2).unwrap();
        assert!(w2.tail_bound(0.01, 0.0) > 1e-12);
    }
}
