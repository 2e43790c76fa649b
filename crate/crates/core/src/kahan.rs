//! Compensated summation and deterministic reductions.
//!
//! Every average in the crate is a finite weighted sum evaluated in a fixed
//! index order with Kahan compensation, so results are reproducible bit for
//! bit across runs and independent of any caller-side thread count: callers
//! may parallelize whole experiments (one output slot each), but every
//! reduction inside the library happens sequentially in ascending order.

use num_complex::Complex64;

/// Kahan–Babuška compensated accumulator for `f64`.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Componentwise compensated accumulator for complex terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanComplex {
    re: KahanSum,
    im: KahanSum,
}

impl KahanComplex {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Compensated sum of an iterator of real terms, in iteration order.
pub fn sum_f64<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = KahanSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// Compensated sum of an iterator of complex terms, in iteration order.
pub fn sum_complex<I: IntoIterator<Item = Complex64>>(terms: I) -> Complex64 {
    let mut acc = KahanComplex::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        // 1 + 1e-16 * 10^4 loses every small term under naive summation.
        let mut naive = 1.0f64;
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            naive += 1e-16;
            acc.add(1e-16);
        }
        assert_eq!(naive, 1.0);
        assert!((acc.value() - (1.0 + 1e-12)).abs() < 1e-24);
    }

    #[test]
    fn complex_matches_componentwise() {
        let terms: Vec<Complex64> = (0..100)
            .map(|i| Complex64::new(1.0 / (i as f64 + 1.0), -0.3 * i as f64))
            .collect();
        let z = sum_complex(terms.iter().copied());
        let re = sum_f64(terms.iter().map(|t| t.re));
        let im = sum_f64(terms.iter().map(|t| t.im));
        assert_eq!(z.re, re);
        assert_eq!(z.im, im);
    }
}
