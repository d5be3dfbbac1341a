//! Dense complex linear algebra helpers, quadrature and special functions.

use nalgebra::DMatrix;
use num_complex::Complex;
use std::f64::consts::PI;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Euler's constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// The input is symmetrized first so round-off asymmetry cannot leak in.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = (m + m.adjoint()).scale(0.5);
    let eig = h.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Matrix exponential (Padé with scaling and squaring).
pub fn expm(m: &CMat) -> CMat {
    m.clone().exp()
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Sum in a fixed pairwise order; used wherever reproducibility of the
/// reduction matters more than speed.
pub fn pairwise_sum(xs: &[C64]) -> C64 {
    match xs.len() {
        0 => ZERO,
        1 => xs[0],
        n if n <= 16 => xs.iter().copied().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p1 = P_n(z), p0 = P_{n-1}(z)
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let pn = p1;
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre quadrature of a complex integrand on [a, b].
pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> C64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = ZERO;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = ZERO;
        for (xi, wi) in x.iter().zip(&w) {
            s += f(mid + 0.5 * h * xi) * *wi;
        }
        total += s * (0.5 * h);
    }
    total
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Complex gamma function (Lanczos, reflection for Re z < 1/2).
pub fn gamma(z: C64) -> C64 {
    if z.re < 0.5 {
        let s = (z * PI).sin();
        return C64::from(PI) / (s * gamma(ONE - z));
    }
    let z = z - 1.0;
    let mut x = C64::from(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

/// 1/Γ(z), entire; exact zeros at the non-positive integers.
pub fn rgamma(z: C64) -> C64 {
    if z.im == 0.0 && z.re <= 0.0 && z.re.fract() == 0.0 {
        return ZERO;
    }
    ONE / gamma(z)
}

/// Real gamma, delegated to statrs.
pub fn gamma_real(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Falling factorial d (d-1) ... (d-k+1).
pub fn falling(d: f64, k: u32) -> f64 {
    (0..k).map(|i| d - i as f64).product()
}

/// Exponential integral E1 for x > 0: power series below 1, Lentz continued
/// fraction above (statrs fails to converge near x ≈ 1.017).
pub fn exp_integral_e1(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return -EULER_GAMMA - x.ln() - sum;
    }
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// Smallest relative gap parameter used when comparing floats for
/// lattice coincidences.
pub const LATTICE_EPS: f64 = 1e-9;

pub fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < LATTICE_EPS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn complex_gamma_matches_known_values() {
        assert!((gamma(c64(0.5, 0.0)).re - PI.sqrt()).abs() < 1e-13);
        assert!((gamma(c64(5.0, 0.0)).re - 24.0).abs() < 1e-11);
        // Γ(-1/2) = -2√π
        assert!((gamma(c64(-0.5, 0.0)).re + 2.0 * PI.sqrt()).abs() < 1e-12);
        // |Γ(i)|² = π / sinh π
        let g = gamma(I);
        assert!((g.norm_sqr() - PI / PI.sinh()).abs() < 1e-12);
        assert_eq!(rgamma(c64(-3.0, 0.0)), ZERO);
    }

    #[test]
    fn e1_small_argument_expansion() {
        let x: f64 = 1e-3;
        let series = -EULER_GAMMA - x.ln() + x - x * x / 4.0;
        assert!((exp_integral_e1(x) - series).abs() < 1e-10);
    }

    #[test]
    fn e1_matches_quadrature_across_branches() {
        for x in [0.3, 0.99, 1.0, 1.0172590340275856, 1.5, 4.0, 30.0] {
            let q = integrate(|u| C64::from((-x * u.exp()).exp()), 0.0, 8.0, 64, 20).re;
            assert!((exp_integral_e1(x) - q).abs() < 1e-14 * q.max(1e-300) + 1e-300, "{x}");
        }
    }

    #[test]
    fn hermitian_eigen_sorted_and_unitary() {
        let m = CMat::from_fn(4, 4, |i, j| {
            let v = c64((i + 2 * j) as f64, (i as f64) - (j as f64));
            if i == j {
                c64(v.re, 0.0)
            } else {
                v
            }
        });
        let h = (&m + m.adjoint()).scale(0.5);
        let (vals, u) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let back = &u * CMat::from_diagonal(&nalgebra::DVector::from_iterator(4, vals.iter().map(|v| C64::from(*v)))) * u.adjoint();
        assert!((back - h).norm() < 1e-12);
    }
}
