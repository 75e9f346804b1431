//! Riemann and Hurwitz zeta values with their s-derivatives.
//!
//! Both are evaluated by Euler–Maclaurin summation carried out in forward-mode
//! dual numbers, which continues analytically to every s ≠ 1.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// B_{2r} for r = 1..12.
const BERNOULLI_EVEN: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

const DIRECT_TERMS: usize = 24;

/// Value and first derivative with respect to one real variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: f64) -> Self {
        Self { re, eps: 0.0 }
    }

    pub fn variable(re: f64) -> Self {
        Self { re, eps: 1.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, e * self.eps)
    }

    /// x^(−self) for a positive constant base x.
    pub fn neg_pow_of(self, x: f64) -> Self {
        let lx = x.ln();
        (-(self * Dual::constant(lx))).exp()
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(
            self.re / o.re,
            (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

/// ζ_H(s, a) = Σ_{j≥0} (j + a)^{−s} and its s-derivative, for a > 0 and s ≠ 1.
pub fn hurwitz_zeta_dual(s: f64, a: f64) -> Dual {
    assert!(a > 0.0, "Hurwitz parameter must be positive, got {a}");
    assert!((s - 1.0).abs() > 1e-12, "pole at s = 1");
    let sd = Dual::variable(s);
    let mut sum = Dual::constant(0.0);
    for j in 0..DIRECT_TERMS {
        sum = sum + sd.neg_pow_of(j as f64 + a);
    }
    let x = DIRECT_TERMS as f64 + a;
    let one = Dual::constant(1.0);
    // ∫_N^∞ (u + a)^{−s} du = x^{1−s}/(s − 1)
    sum = sum + (sd - one).neg_pow_of(x) / (sd - one);
    sum = sum + Dual::constant(0.5) * sd.neg_pow_of(x);
    // Σ B_{2r}/(2r)! · s(s+1)…(s+2r−2) · x^{−s−2r+1}
    let mut rising = sd;
    let mut factorial = 2.0;
    for (r, &b) in BERNOULLI_EVEN.iter().enumerate() {
        let m = 2 * (r + 1);
        let term = Dual::constant(b / factorial)
            * rising
            * (sd + Dual::constant((m - 1) as f64)).neg_pow_of(x);
        sum = sum + term;
        rising = rising * (sd + Dual::constant((m - 1) as f64)) * (sd + Dual::constant(m as f64));
        factorial *= ((m + 1) * (m + 2)) as f64;
    }
    sum
}

pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    hurwitz_zeta_dual(s, a).re
}

pub fn riemann_zeta_dual(s: f64) -> Dual {
    hurwitz_zeta_dual(s, 1.0)
}

pub fn riemann_zeta(s: f64) -> f64 {
    riemann_zeta_dual(s).re
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::new();
        for x in iter {
            k.add(x);
        }
        k
    }
}
