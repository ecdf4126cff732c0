//! Arithmetic in a prime field F_q with q < 2^64.
//!
//! Elements always hold the canonical residue in `[0, q)`. Products are
//! widened to 128 bits before reduction, so every 64-bit prime works.
//! The `std::ops` impls panic when operands come from different fields;
//! use the `try_*` methods where that is a recoverable condition.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descriptor of the prime field F_q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldSpec {
    q: u64,
}

impl FieldSpec {
    pub fn new(q: u64) -> Result<Self> {
        if !is_prime(q) {
            return Err(Error::NonPrimeModulus(q));
        }
        Ok(Self { q })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Element with residue `value mod q`.
    #[inline]
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.q,
            q: self.q,
        }
    }

    /// Element for a possibly negative integer.
    pub fn element_i64(&self, value: i64) -> FieldElement {
        let r = (value as i128).rem_euclid(self.q as i128);
        self.element(r as u64)
    }

    #[inline]
    pub fn zero(&self) -> FieldElement {
        FieldElement { value: 0, q: self.q }
    }

    #[inline]
    pub fn one(&self) -> FieldElement {
        FieldElement { value: 1, q: self.q }
    }

    /// Uniform draw by rejection sampling on the smallest power-of-two
    /// window covering `[0, q)`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> FieldElement {
        let mask = u64::MAX >> (self.q - 1).leading_zeros();
        loop {
            let v = rng.next_u64() & mask;
            if v < self.q {
                return FieldElement { value: v, q: self.q };
            }
        }
    }

    /// All q elements in natural order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.q).map(move |v| FieldElement { value: v, q: self.q })
    }

    /// Payload bits carried by one symbol: floor(log2 q).
    pub fn symbol_bits(&self) -> u32 {
        63 - self.q.leading_zeros()
    }

    /// Hex digits needed to print any residue at fixed width.
    pub fn hex_width(&self) -> usize {
        let bits = 64 - (self.q - 1).leading_zeros() as usize;
        bits.div_ceil(8).max(1) * 2
    }

    pub fn to_hex(&self, x: FieldElement) -> String {
        format!("{:0width$x}", x.value, width = self.hex_width())
    }

    /// Parses a hex symbol; the value must already be a canonical residue.
    pub fn from_hex(&self, s: &str) -> Result<FieldElement> {
        let v = u64::from_str_radix(s, 16)
            .map_err(|e| Error::Record(format!("bad hex symbol {s:?}: {e}")))?;
        if v >= self.q {
            return Err(Error::Record(format!(
                "symbol {s} is not a residue mod {}",
                self.q
            )));
        }
        Ok(self.element(v))
    }
}

impl TryFrom<u64> for FieldSpec {
    type Error = Error;
    fn try_from(q: u64) -> Result<Self> {
        FieldSpec::new(q)
    }
}

impl From<FieldSpec> for u64 {
    fn from(f: FieldSpec) -> u64 {
        f.q
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.q)
    }
}

/// A residue in [0, q) tagged with its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement {
    value: u64,
    q: u64,
}

impl FieldElement {
    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn spec(&self) -> FieldSpec {
        FieldSpec { q: self.q }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    #[inline]
    fn check(&self, other: &Self) -> Result<()> {
        if self.q != other.q {
            return Err(Error::FieldMismatch {
                left: self.q,
                right: other.q,
            });
        }
        Ok(())
    }

    pub fn try_add(self, rhs: Self) -> Result<Self> {
        self.check(&rhs)?;
        Ok(Self {
            value: add_mod(self.value, rhs.value, self.q),
            q: self.q,
        })
    }

    pub fn try_sub(self, rhs: Self) -> Result<Self> {
        self.check(&rhs)?;
        Ok(Self {
            value: sub_mod(self.value, rhs.value, self.q),
            q: self.q,
        })
    }

    pub fn try_mul(self, rhs: Self) -> Result<Self> {
        self.check(&rhs)?;
        Ok(Self {
            value: mul_mod(self.value, rhs.value, self.q),
            q: self.q,
        })
    }

    /// Square-and-multiply; `0^0 = 1`.
    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self.value;
        let mut acc = 1 % self.q;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul_mod(acc, base, self.q);
            }
            base = mul_mod(base, base, self.q);
            e >>= 1;
        }
        Self {
            value: acc,
            q: self.q,
        }
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(self) -> Result<Self> {
        if self.value == 0 {
            return Err(Error::DivisionByZero(self.q));
        }
        let (mut r0, mut r1) = (self.q as i128, self.value as i128);
        let (mut s0, mut s1) = (0i128, 1i128);
        while r1 != 0 {
            let quot = r0 / r1;
            (r0, r1) = (r1, r0 - quot * r1);
            (s0, s1) = (s1, s0 - quot * s1);
        }
        debug_assert_eq!(r0, 1);
        Ok(Self {
            value: s0.rem_euclid(self.q as i128) as u64,
            q: self.q,
        })
    }

    pub fn try_div(self, rhs: Self) -> Result<Self> {
        self.check(&rhs)?;
        self.try_mul(rhs.inv()?)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[inline]
pub(crate) fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    let (s, overflow) = a.overflowing_add(b);
    if overflow || s >= q {
        s.wrapping_sub(q)
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a.wrapping_sub(b).wrapping_add(q)
    }
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

macro_rules! binop {
    ($tr:ident, $method:ident, $try:ident, $assign_tr:ident, $assign:ident) => {
        impl $tr for FieldElement {
            type Output = FieldElement;
            #[inline]
            fn $method(self, rhs: Self) -> Self {
                match self.$try(rhs) {
                    Ok(v) => v,
                    Err(e) => panic!("{e}"),
                }
            }
        }
        impl $assign_tr for FieldElement {
            #[inline]
            fn $assign(&mut self, rhs: Self) {
                *self = $tr::$method(*self, rhs);
            }
        }
    };
}

binop!(Add, add, try_add, AddAssign, add_assign);
binop!(Sub, sub, try_sub, SubAssign, sub_assign);
binop!(Mul, mul, try_mul, MulAssign, mul_assign);

impl Neg for FieldElement {
    type Output = FieldElement;
    #[inline]
    fn neg(self) -> Self {
        Self {
            value: sub_mod(0, self.value, self.q),
            q: self.q,
        }
    }
}

impl std::iter::Sum for FieldElement {
    /// Panics on an empty iterator: there is no field to take zero from.
    fn sum<I: Iterator<Item = Self>>(mut iter: I) -> Self {
        let first = iter.next().expect("sum of an empty field iterator");
        iter.fold(first, |acc, x| acc + x)
    }
}

/// Deterministic Miller-Rabin; the first twelve prime bases are exact
/// for every 64-bit integer.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Smallest prime >= n.
pub fn next_prime(mut n: u64) -> u64 {
    if n <= 2 {
        return 2;
    }
    while !is_prime(n) {
        n += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn f(q: u64) -> FieldSpec {
        FieldSpec::new(q).unwrap()
    }

    #[test]
    fn add_examples() {
        let f7 = f(7);
        assert_eq!((f7.element(3) + f7.element(5)).value(), 1);
        for x in f7.elements() {
            assert_eq!(x + f7.zero(), x);
        }
        let f5 = f(5);
        assert_eq!((f5.element(4) + f5.element(4)).value(), 3);
    }

    #[test]
    fn mul_examples() {
        let f7 = f(7);
        assert_eq!((f7.element(3) * f7.element(5)).value(), 1);
        for x in f7.elements() {
            assert_eq!(x * f7.one(), x);
        }
        let f11 = f(11);
        assert_eq!((f11.element(6) * f11.element(6)).value(), 3);
        assert_eq!((f7.element(2) - f7.element(5)).value(), 4);
        assert_eq!((-f7.element(2)).value(), 5);
        assert_eq!((-f7.zero()).value(), 0);
    }

    #[test]
    fn inverse_examples() {
        let f7 = f(7);
        assert_eq!(f7.element(3).inv().unwrap().value(), 5);
        assert_eq!(f7.one().inv().unwrap().value(), 1);
        assert!(matches!(f7.zero().inv(), Err(Error::DivisionByZero(7))));
        for q in [2, 3, 5, 7, 11, 101] {
            let fq = f(q);
            for a in fq.elements().skip(1) {
                assert_eq!(a * a.inv().unwrap(), fq.one());
            }
        }
    }

    #[test]
    fn pow_examples() {
        let f7 = f(7);
        assert_eq!(f7.element(3).pow(2).value(), 2);
        assert_eq!(f7.zero().pow(0).value(), 1);
        assert_eq!(f7.zero().pow(3).value(), 0);
        assert_eq!(f(13).element(2).pow(12).value(), 1);
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let a = f(7).element(3);
        let b = f(11).element(3);
        assert!(matches!(
            a.try_add(b),
            Err(Error::FieldMismatch { left: 7, right: 11 })
        ));
        assert!(a.try_mul(b).is_err());
        assert!(a.try_sub(b).is_err());
    }

    #[test]
    #[should_panic(expected = "field mismatch")]
    fn operator_panics_on_mismatch() {
        let _ = f(7).element(1) + f(5).element(1);
    }

    #[test]
    fn primality() {
        let primes: Vec<u64> = (0..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
        assert!(is_prime((1 << 61) - 1));
        assert!(is_prime((1 << 31) - 1));
        assert!(is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
        assert!(!is_prime(u64::MAX));
        assert!(matches!(FieldSpec::new(9), Err(Error::NonPrimeModulus(9))));
        assert!(FieldSpec::new(1).is_err());
        assert_eq!(next_prime(8), 11);
        assert_eq!(next_prime(11), 11);
    }

    #[test]
    fn large_modulus_does_not_overflow() {
        let fq = f(18_446_744_073_709_551_557);
        let a = fq.element(fq.modulus() - 1);
        assert_eq!((a * a).value(), 1);
        assert_eq!((a + a).value(), fq.modulus() - 2);
        assert_eq!(a * a.inv().unwrap(), fq.one());
    }

    #[test]
    fn field_axioms_on_random_triples() {
        let mut rng = ChaCha20Rng::seed_from_u64(0xa11);
        for q in [5, 7, 11, 101, (1u64 << 61) - 1] {
            let fq = f(q);
            for _ in 0..10_000 {
                let (a, b, c) = (fq.sample(&mut rng), fq.sample(&mut rng), fq.sample(&mut rng));
                assert_eq!((a + b) + c, a + (b + c));
                assert_eq!((a * b) * c, a * (b * c));
                assert_eq!(a + b, b + a);
                assert_eq!(a * b, b * a);
                assert_eq!(a * (b + c), a * b + a * c);
                assert_eq!(a + (-a), fq.zero());
                assert_eq!(a - b + b, a);
                if !a.is_zero() {
                    assert_eq!(a * a.inv().unwrap(), fq.one());
                    assert_eq!((a * b).try_div(a).unwrap(), b);
                }
            }
        }
    }

    #[test]
    fn sampling_regression_fixture() {
        let f7 = f(7);
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let draws: Vec<u64> = (0..3).map(|_| f7.sample(&mut rng).value()).collect();
        assert_eq!(draws, FIXTURE_Q7_SEED2024);
    }
    const FIXTURE_Q7_SEED2024: [u64; 3] = [6, 1, 6];

    #[test]
    fn equal_seeds_give_equal_streams() {
        let f101 = f(101);
        let mut a = ChaCha20Rng::seed_from_u64(9);
        let mut b = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..1000 {
            assert_eq!(f101.sample(&mut a), f101.sample(&mut b));
        }
    }

    #[test]
    fn binary_field_frequency() {
        let f2 = f(2);
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let n = 100_000u64;
        let ones: u64 = (0..n).map(|_| f2.sample(&mut rng).value()).sum();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - n as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn chi_square_uniformity_q7() {
        let f7 = f(7);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 100_000;
        let mut counts = [0u64; 7];
        for _ in 0..n {
            counts[f7.sample(&mut rng).value() as usize] += 1;
        }
        let expected = n as f64 / 7.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square critical value, 6 degrees of freedom, alpha = 1e-3
        assert!(chi2 < 22.458, "chi2 = {chi2}");
    }

    #[test]
    fn hex_round_trip_and_width() {
        let f7 = f(7);
        assert_eq!(f7.hex_width(), 2);
        assert_eq!(f7.to_hex(f7.element(5)), "05");
        let big = f((1 << 31) - 1);
        assert_eq!(big.hex_width(), 8);
        assert_eq!(big.from_hex(&big.to_hex(big.element(123_456))).unwrap().value(), 123_456);
        assert!(f7.from_hex("07").is_err());
        assert!(f7.from_hex("zz").is_err());
        assert_eq!(f7.symbol_bits(), 2);
        assert_eq!(f(2).symbol_bits(), 1);
        assert_eq!(big.symbol_bits(), 30);
    }
}
