//! Error-free accumulation of sums and sums of products.
//!
//! The residual oracles of the Young calculus compare quantities that agree
//! exactly in real arithmetic. Accumulating with a non-overlapping expansion
//! (Shewchuk's partials) and error-free products makes those cancellations
//! exact in floating point as well, so degenerate cases return a literal zero.

use crate::real::Real;

/// Running sum kept as a non-overlapping floating-point expansion.
#[derive(Clone, Debug, Default)]
pub struct ExactSum<T> {
    partials: Vec<T>,
    special: Option<T>,
}

impl<T: Real> ExactSum<T> {
    pub fn new() -> Self {
        Self {
            partials: Vec::new(),
            special: None,
        }
    }

    pub fn add(&mut self, value: T) {
        if !value.is_finite() {
            self.special = Some(self.special.map_or(value, |s| s + value));
            return;
        }
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds `a * b` without rounding the product.
    pub fn add_product(&mut self, a: T, b: T) {
        let p = a * b;
        if !p.is_finite() {
            self.add(p);
            return;
        }
        let e = a.mul_add(b, -p);
        self.add(p);
        self.add(e);
    }

    /// Subtracts this sum, exactly, from `other`.
    pub fn negate_into(&self, other: &mut ExactSum<T>) {
        if let Some(s) = self.special {
            other.add(-s);
        }
        for &p in &self.partials {
            other.add(-p);
        }
    }

    /// Correctly rounded value of the accumulated sum.
    pub fn value(&self) -> T {
        if let Some(s) = self.special {
            return s;
        }
        let mut n = self.partials.len();
        if n == 0 {
            return T::zero();
        }
        n -= 1;
        let mut hi = self.partials[n];
        let mut lo = T::zero();
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = self.partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != T::zero() {
                break;
            }
        }
        // round-half-even correction across the remaining partials
        if n > 0 {
            let next = self.partials[n - 1];
            let two = T::lit(2.0);
            if (lo < T::zero() && next < T::zero()) || (lo > T::zero() && next > T::zero()) {
                let y = lo * two;
                let x = hi + y;
                let yr = x - hi;
                if y == yr {
                    hi = x;
                }
            }
        }
        hi
    }
}

/// Correctly rounded sum of a slice.
pub fn exact_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancels_catastrophic_terms() {
        let xs = [1e100, 1.0, -1e100, 1e-30];
        assert_eq!(exact_sum(xs), 1.0 + 1e-30);
        let ys = [0.1f64; 10];
        assert_eq!(exact_sum(ys), 1.0);
    }

    #[test]
    fn products_are_error_free() {
        let a = 1.0 + f64::EPSILON;
        let mut acc = ExactSum::new();
        acc.add_product(a, a);
        acc.add(-1.0);
        acc.add(-2.0 * f64::EPSILON);
        // (1+e)^2 - 1 - 2e = e^2
        assert_eq!(acc.value(), f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn telescoping_sum_is_exact() {
        let ys: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 3.3).collect();
        let mut acc = ExactSum::new();
        for w in ys.windows(2) {
            acc.add(w[1]);
            acc.add(-w[0]);
        }
        acc.add(-(ys[999]));
        acc.add(ys[0]);
        assert_eq!(acc.value(), 0.0);
    }

    #[test]
    fn works_for_f32() {
        let xs = [1e20f32, 3.0, -1e20];
        assert_eq!(exact_sum(xs), 3.0f32);
    }
}
