use super::trig::TrigPoly;
use crate::error::{Error, Result};
use crate::linalg::{falling, factorial, C64, LATTICE_EPS};

/// Homogeneous component a_d(x, ξ) recorded by its values at ξ = ±1:
/// a_d(x, ξ) = plus(x)|ξ|^d for ξ > 0 and minus(x)|ξ|^d for ξ < 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolComponent {
    pub degree: f64,
    pub plus: TrigPoly,
    pub minus: TrigPoly,
}

/// Classical symbol as a finite list of homogeneous components with strictly
/// decreasing degrees. Components below `exact_to` were truncated away, so
/// only degrees ≥ `exact_to` are trustworthy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSymbol {
    components: Vec<SymbolComponent>,
    exact_to: f64,
}

impl ClassicalSymbol {
    /// A symbol whose listed components are the complete expansion.
    pub fn exact(components: Vec<SymbolComponent>) -> Self {
        Self::new(components, f64::NEG_INFINITY)
    }

    pub fn new(components: Vec<SymbolComponent>, exact_to: f64) -> Self {
        let mut s = Self { components: Vec::new(), exact_to };
        for c in components {
            s.push(c);
        }
        s
    }

    pub fn zero() -> Self {
        Self::exact(Vec::new())
    }

    pub fn identity() -> Self {
        Self::constant_in_xi(0.0, TrigPoly::constant(C64::from(1.0)), TrigPoly::constant(C64::from(1.0)))
    }

    /// Multiplication operator by f(x): degree 0, same on both half-lines.
    pub fn multiplication(f: TrigPoly) -> Self {
        Self::constant_in_xi(0.0, f.clone(), f)
    }

    fn constant_in_xi(d: f64, p: TrigPoly, m: TrigPoly) -> Self {
        Self::exact(vec![SymbolComponent { degree: d, plus: p, minus: m }])
    }

    fn push(&mut self, c: SymbolComponent) {
        if c.degree < self.exact_to - LATTICE_EPS || (c.plus.is_zero() && c.minus.is_zero()) {
            return;
        }
        if let Some(existing) = self
            .components
            .iter_mut()
            .find(|e| (e.degree - c.degree).abs() < LATTICE_EPS)
        {
            existing.plus = existing.plus.add(&c.plus);
            existing.minus = existing.minus.add(&c.minus);
        } else {
            self.components.push(c);
        }
        self.components.retain(|e| !(e.plus.is_zero() && e.minus.is_zero()));
        self.components.sort_by(|a, b| b.degree.total_cmp(&a.degree));
    }

    pub fn components(&self) -> &[SymbolComponent] {
        &self.components
    }

    pub fn exact_to(&self) -> f64 {
        self.exact_to
    }

    /// Highest degree present; -inf for the zero symbol.
    pub fn order(&self) -> f64 {
        self.components.first().map_or(f64::NEG_INFINITY, |c| c.degree)
    }

    pub fn component(&self, degree: f64) -> Option<&SymbolComponent> {
        self.components.iter().find(|c| (c.degree - degree).abs() < LATTICE_EPS)
    }

    /// Largest Fourier mode in any coefficient polynomial.
    pub fn max_mode(&self) -> u64 {
        self.components
            .iter()
            .map(|c| c.plus.max_mode().max(c.minus.max_mode()))
            .max()
            .unwrap_or(0)
    }

    pub fn truncate(&self, exact_to: f64) -> Self {
        Self::new(self.components.clone(), exact_to.max(self.exact_to))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(
            self.components
                .iter()
                .map(|c| SymbolComponent { degree: c.degree, plus: c.plus.scale(s), minus: c.minus.scale(s) })
                .collect(),
            self.exact_to,
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut s = Self::new(self.components.clone(), self.exact_to.max(other.exact_to));
        for c in &other.components {
            s.push(c.clone());
        }
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::from(-1.0)))
    }

    /// k-th ξ-derivative; the minus side picks up (-1)^k because
    /// |ξ|^d = (-ξ)^d there.
    pub fn d_xi(&self, k: u32) -> Self {
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        Self::new(
            self.components
                .iter()
                .map(|c| {
                    let f = falling(c.degree, k);
                    SymbolComponent {
                        degree: c.degree - k as f64,
                        plus: c.plus.scale(C64::from(f)),
                        minus: c.minus.scale(C64::from(sign * f)),
                    }
                })
                .collect(),
            self.exact_to - k as f64,
        )
    }

    pub fn dx_pow(&self, k: u32) -> Self {
        Self::new(
            self.components
                .iter()
                .map(|c| SymbolComponent { degree: c.degree, plus: c.plus.dx_pow(k), minus: c.minus.dx_pow(k) })
                .collect(),
            self.exact_to,
        )
    }

    /// Pointwise product of symbols (no composition corrections).
    pub fn pointwise(&self, other: &Self) -> Self {
        let mut out = Self::new(Vec::new(), self.exact_floor_for_product(other));
        for a in &self.components {
            for b in &other.components {
                out.push(SymbolComponent {
                    degree: a.degree + b.degree,
                    plus: a.plus.mul(&b.plus),
                    minus: a.minus.mul(&b.minus),
                });
            }
        }
        out
    }

    fn exact_floor_for_product(&self, other: &Self) -> f64 {
        // The product is exact down to min(ord a + exact(b), ord b + exact(a)).
        let (oa, ob) = (self.order(), other.order());
        if !oa.is_finite() || !ob.is_finite() {
            return f64::NEG_INFINITY;
        }
        (oa + other.exact_to).max(ob + self.exact_to)
    }

    /// Symbol of the composition A∘B, Σ_k (1/k!) ∂_ξ^k a · D_x^k b, kept
    /// down to degree `floor`.
    pub fn compose(&self, other: &Self, floor: f64) -> Self {
        let (oa, ob) = (self.order(), other.order());
        if !oa.is_finite() || !ob.is_finite() {
            return Self::zero();
        }
        let top = oa + ob;
        let mut out = Self::new(Vec::new(), floor.max(self.exact_floor_for_product(other)));
        let kmax = (top - floor).floor().max(0.0) as u32;
        for k in 0..=kmax {
            let term = self
                .d_xi(k)
                .pointwise(&other.dx_pow(k))
                .scale(C64::from(1.0 / factorial(k)));
            for c in term.components {
                out.push(c);
            }
        }
        out
    }

    /// Wodzicki residue on S¹: mean of a_{-1}(x, +1) + a_{-1}(x, -1).
    pub fn residue(&self) -> Result<C64> {
        if self.exact_to > -1.0 + LATTICE_EPS {
            return Err(Error::InvalidInput(format!(
                "symbol truncated at degree {} above -1; residue undetermined",
                self.exact_to
            )));
        }
        Ok(self
            .component(-1.0)
            .map_or(C64::from(0.0), |c| c.plus.mean() + c.minus.mean()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mult(terms: &[(i64, f64, f64)]) -> ClassicalSymbol {
        ClassicalSymbol::multiplication(TrigPoly::from_cos_sin(terms))
    }

    fn abs_xi(d: f64) -> ClassicalSymbol {
        let one = TrigPoly::constant(C64::from(1.0));
        ClassicalSymbol::exact(vec![SymbolComponent { degree: d, plus: one.clone(), minus: one }])
    }

    #[test]
    fn residue_of_f_over_abs_xi() {
        // f(x)|ξ|^{-1} → (1/π)∫ f = 2·mean(f)
        let s = mult(&[(0, 0.7, 0.0), (3, 2.0, 1.0)]).compose(&abs_xi(-1.0), -4.0);
        assert!((s.residue().unwrap().re - 1.4).abs() < 1e-15);
    }

    #[test]
    fn multiplier_then_multiplication_has_corrections() {
        // |ξ| ∘ cos x: first correction ∂_ξ|ξ| · D_x cos x = sign(ξ)·(-i)(-sin x)·... of degree 0
        let s = abs_xi(1.0).compose(&mult(&[(1, 1.0, 0.0)]), -3.0);
        let c0 = s.component(0.0).unwrap();
        let dcos = TrigPoly::from_cos_sin(&[(1, 1.0, 0.0)]).dx_pow(1);
        assert_eq!(c0.plus, dcos);
        assert_eq!(c0.minus, dcos.scale(C64::from(-1.0)));
        // |ξ| has no lower-order derivative terms beyond k = 1 (falling(1, 2) = 0)
        assert!(s.component(-1.0).is_none());
    }

    #[test]
    fn differential_operators_have_no_residue() {
        let s = abs_xi(2.0).compose(&mult(&[(2, 1.0, 0.5)]), -5.0);
        assert_eq!(s.residue().unwrap(), C64::from(0.0));
    }
}
