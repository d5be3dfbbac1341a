use crate::linalg::{C64, ZERO};
use std::collections::BTreeMap;

/// Trigonometric polynomial f(x) = Σ_k c_k e^{ikx}; zero modes are pruned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigPoly {
    coeffs: BTreeMap<i64, C64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        let mut p = Self::zero();
        p.add_mode(0, c);
        p
    }

    pub fn from_modes(modes: impl IntoIterator<Item = (i64, C64)>) -> Self {
        let mut p = Self::zero();
        for (k, c) in modes {
            p.add_mode(k, c);
        }
        p
    }

    /// Build from real (mode, cos coefficient, sin coefficient) triples.
    pub fn from_cos_sin(terms: &[(i64, f64, f64)]) -> Self {
        let mut p = Self::zero();
        for &(k, a, b) in terms {
            if k == 0 {
                p.add_mode(0, C64::from(a));
                continue;
            }
            // a cos kx + b sin kx = (a - ib)/2 e^{ikx} + (a + ib)/2 e^{-ikx}
            p.add_mode(k, C64::new(0.5 * a, -0.5 * b));
            p.add_mode(-k, C64::new(0.5 * a, 0.5 * b));
        }
        p
    }

    pub fn add_mode(&mut self, k: i64, c: C64) {
        let e = self.coeffs.entry(k).or_insert(ZERO);
        *e += c;
        if *e == ZERO {
            self.coeffs.remove(&k);
        }
    }

    pub fn coeff(&self, k: i64) -> C64 {
        self.coeffs.get(&k).copied().unwrap_or(ZERO)
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        self.coeffs.iter().map(|(k, c)| (*k, *c))
    }

    /// (1/2π)∫ f dx.
    pub fn mean(&self) -> C64 {
        self.coeff(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_mode(&self) -> u64 {
        self.coeffs.keys().map(|k| k.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.modes().map(|(k, c)| c * C64::new(0.0, k as f64 * x).exp()).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_modes(self.modes().map(|(k, c)| (k, c * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (k, c) in other.modes() {
            p.add_mode(k, c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero();
        for (k, a) in self.modes() {
            for (l, b) in other.modes() {
                p.add_mode(k + l, a * b);
            }
        }
        p
    }

    /// D_x^j with D_x = -i d/dx: e^{ikx} ↦ k^j e^{ikx}.
    pub fn dx_pow(&self, j: u32) -> Self {
        Self::from_modes(self.modes().map(|(k, c)| (k, c * (k as f64).powi(j as i32))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cos_squared_identity() {
        let c = TrigPoly::from_cos_sin(&[(1, 1.0, 0.0)]);
        let c2 = c.mul(&c);
        let expect = TrigPoly::from_cos_sin(&[(0, 0.5, 0.0), (2, 0.5, 0.0)]);
        assert_eq!(c2, expect);
    }

    #[test]
    fn eval_matches_real_form() {
        let p = TrigPoly::from_cos_sin(&[(0, 1.0, 0.0), (2, 0.3, -0.7)]);
        for x in [0.0, 0.4, 2.9] {
            let v = p.eval(x);
            let r = 1.0 + 0.3 * (2.0 * x).cos() - 0.7 * (2.0 * x).sin();
            assert!((v.re - r).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_sine() {
        // D_x sin x = -i cos x
        let s = TrigPoly::from_cos_sin(&[(1, 0.0, 1.0)]);
        let d = s.dx_pow(1);
        let expect = TrigPoly::from_cos_sin(&[(1, 1.0, 0.0)]).scale(C64::new(0.0, -1.0));
        assert_eq!(d, expect);
    }
}
