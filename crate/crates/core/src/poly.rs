//! Small dense polynomials in a local time variable.

use smallvec::SmallVec;

/// Coefficients in increasing degree order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly(pub SmallVec<[f64; 8]>);

impl Poly {
    pub fn zero() -> Self {
        Poly(SmallVec::new())
    }

    pub fn constant(c: f64) -> Self {
        let mut v = SmallVec::new();
        v.push(c);
        Poly(v)
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        let mut v = SmallVec::new();
        v.push(c0);
        v.push(c1);
        Poly(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let mut v = SmallVec::with_capacity(n);
        for k in 0..n {
            v.push(self.0.get(k).copied().unwrap_or(0.0) + other.0.get(k).copied().unwrap_or(0.0));
        }
        Poly(v)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|&c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly::zero();
        }
        let mut v: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, self.0.len() + other.0.len() - 1);
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Poly(v)
    }

    /// Antiderivative vanishing at zero, plus `c0`.
    pub fn integral(&self, c0: f64) -> Poly {
        let mut v = SmallVec::with_capacity(self.0.len() + 1);
        v.push(c0);
        for (k, &c) in self.0.iter().enumerate() {
            v.push(c / (k + 1) as f64);
        }
        Poly(v)
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect())
    }

    /// The polynomial `t -> self(t + a)`.
    pub fn shift(&self, a: f64) -> Poly {
        if a == 0.0 || self.0.len() <= 1 {
            return self.clone();
        }
        // Repeated synthetic division (Taylor shift).
        let mut c: SmallVec<[f64; 8]> = self.0.clone();
        let n = c.len();
        for i in 0..n {
            for k in (i..n - 1).rev() {
                c[k] += a * c[k + 1];
            }
        }
        Poly(c)
    }

    /// Integral over `[0, t]`.
    pub fn integrate_to(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.0.iter().enumerate().rev() {
            acc = acc * t + c / (k + 1) as f64;
        }
        acc * t
    }

    /// Sign of the polynomial just to the right of `t`: the sign of the
    /// first derivative that does not vanish up to rounding. Returns 0 for
    /// the zero polynomial.
    pub fn sign_right_of(&self, t: f64) -> i8 {
        let mut p = self.clone();
        loop {
            if p.0.is_empty() {
                return 0;
            }
            let v = p.eval(t);
            let mut scale = 0.0;
            let mut tk = 1.0;
            for &c in p.0.iter() {
                scale += c.abs() * tk;
                tk *= t.abs();
            }
            if v.abs() > 1e-12 * scale || p.0.len() == 1 {
                return if v > 0.0 {
                    1
                } else if v < 0.0 {
                    -1
                } else {
                    0
                };
            }
            p = p.derivative();
        }
    }

    /// Real roots in the open interval `(lo, hi)` at which the polynomial
    /// changes sign or touches zero, sorted ascending.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        self.roots_rec(lo, hi, &mut out);
        out
    }

    fn roots_rec(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        if !(hi > lo) {
            return;
        }
        let d = self.degree();
        if self.is_zero() || d == 0 {
            return;
        }
        if d == 1 {
            let r = -self.0[0] / self.0[1];
            if r > lo && r < hi {
                out.push(r);
            }
            return;
        }
        // Monotone pieces between critical points.
        let crit = self.derivative().roots_in(lo, hi);
        let mut knots = Vec::with_capacity(crit.len() + 2);
        knots.push(lo);
        knots.extend(crit.iter().copied());
        knots.push(hi);
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let fa = self.eval(a);
            let fb = self.eval(b);
            if a > lo && fa == 0.0 {
                if out.last().map_or(true, |&l| l < a) {
                    out.push(a);
                }
                continue;
            }
            if fa * fb < 0.0 {
                out.push(bisect(|t| self.eval(t), a, b, fa));
            }
        }
        // Touching roots at critical points that the sign test misses.
        for &c in &crit {
            let v = self.eval(c);
            let scale = self.0.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
            if v.abs() <= 1e-14 * scale && !out.iter().any(|&r| (r - c).abs() <= 1e-12 * (1.0 + c.abs())) {
                out.push(c);
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
}

/// Bisection to full floating-point resolution. `fa` is `f(a)`; the bracket
/// must have a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    // Either endpoint is within one ulp; prefer the one closer to zero.
    if f(a).abs() <= f(b).abs() {
        a
    } else {
        b
    }
}

/// Eight-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Gauss-Legendre quadrature of `f` over `[a, b]`.
pub fn gauss8<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GAUSS8.iter().map(|&(x, w)| w * f(m + h * x)).sum::<f64>() * h
}
