//! Order-independent sums.
//!
//! Every term is rounded once onto a fixed-point grid of 2^-e (chosen from the
//! expected term magnitude, about 52 fractional bits at that magnitude) and added
//! as an `i128`. Integer addition is associative, so any sharding and merge order
//! gives bit-identical totals.

use crate::error::{Error, Result};

fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Scale {
    exp: i32,
    up: f64,
    down: f64,
}

impl Scale {
    /// Grid with ~52 fractional bits at magnitude `m`.
    pub(crate) fn for_magnitude(m: f64) -> Self {
        let e = if m.is_finite() && m > 0.0 {
            52 - m.log2().ceil() as i32
        } else {
            52
        };
        let exp = e.clamp(-900, 900);
        Self {
            exp,
            up: pow2(exp),
            down: pow2(-exp),
        }
    }

    #[inline]
    pub(crate) fn quantize(&self, v: f64) -> Result<i128> {
        let t = v * self.up;
        if t.abs() < 9.0e18 {
            Ok(t as i64 as i128)
        } else if t.abs() < 1.0e38 {
            Ok(t as i128)
        } else {
            Err(Error::AccumulatorOverflow)
        }
    }

    #[inline]
    pub(crate) fn value(&self, s: i128) -> f64 {
        s as f64 * self.down
    }
}

#[inline]
pub(crate) fn add(acc: &mut i128, q: i128) -> Result<()> {
    *acc = acc.checked_add(q).ok_or(Error::AccumulatorOverflow)?;
    Ok(())
}

/// A vector of exact sums sharing one scale.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ExactSums {
    pub(crate) scale: Scale,
    pub(crate) sums: Vec<i128>,
}

impl ExactSums {
    pub(crate) fn new(len: usize, magnitude: f64) -> Self {
        Self {
            scale: Scale::for_magnitude(magnitude),
            sums: vec![0; len],
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, i: usize, v: f64) -> Result<()> {
        let q = self.scale.quantize(v)?;
        add(&mut self.sums[i], q)
    }

    pub(crate) fn merge(&mut self, other: &ExactSums) -> Result<()> {
        if self.scale != other.scale || self.sums.len() != other.sums.len() {
            return Err(Error::ModeMismatch("sum layout differs".into()));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            add(a, *b)?;
        }
        Ok(())
    }

    pub(crate) fn value(&self, i: usize) -> f64 {
        self.scale.value(self.sums[i])
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        self.sums.iter().map(|s| self.scale.value(*s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn powers_of_two_are_exact() {
        assert_eq!(pow2(0), 1.0);
        assert_eq!(pow2(10), 1024.0);
        assert_eq!(pow2(-3), 0.125);
    }

    #[test]
    fn overflow_is_reported() {
        let mut s = ExactSums::new(1, 1.0);
        assert!(s.add(0, 1e300).is_err());
        let mut a: i128 = i128::MAX - 1;
        assert!(add(&mut a, 5).is_err());
    }

    proptest! {
        #[test]
        fn order_independent(mut v in prop::collection::vec(0.0f64..1e3, 1..200), k in 0usize..200) {
            let mut a = ExactSums::new(1, 100.0);
            for x in &v { a.add(0, *x).unwrap(); }
            let k = k % v.len();
            v.rotate_left(k);
            let (l, r) = v.split_at(v.len() / 2);
            let mut b = ExactSums::new(1, 100.0);
            let mut c = ExactSums::new(1, 100.0);
            for x in r { c.add(0, *x).unwrap(); }
            for x in l { b.add(0, *x).unwrap(); }
            c.merge(&b).unwrap();
            prop_assert_eq!(a.sums[0], c.sums[0]);
            let naive: f64 = v.iter().sum();
            prop_assert!((a.value(0) - naive).abs() <= 1e-9 * naive.max(1.0));
        }
    }
}
