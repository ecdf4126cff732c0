//! Scheme parameters and the closed-form rate calculators.
//!
//! All rates are exact rationals. The partition baseline involves a square
//! root and is the only floating-point quantity here.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldSpec};
use crate::tensor::FieldVector;

/// Tolerance for comparisons against the floating-point baseline.
pub const BASELINE_TOLERANCE: f64 = 1e-12;

/// Unvalidated parameters as they appear in a config file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateParams {
    /// N
    pub servers: usize,
    /// K_1..K_M; M is the length.
    pub k: Vec<usize>,
    /// T_1..T_M
    pub t: Vec<usize>,
    #[serde(default)]
    pub x: usize,
    pub q: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<u64>>,
}

impl CandidateParams {
    pub fn new(servers: usize, k: &[usize], t: &[usize], x: usize, q: u64) -> Self {
        Self {
            servers,
            k: k.to_vec(),
            t: t.to_vec(),
            x,
            q,
            f: None,
            alpha: None,
        }
    }

    pub fn validate(&self) -> Result<SchemeParams> {
        SchemeParams::validate(self)
    }
}

/// Validated parameters. Every instance satisfies L >= 1, q >= L + N and
/// pairwise-distinct evaluation points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CandidateParams", into = "CandidateParams")]
pub struct SchemeParams {
    servers: usize,
    k: Vec<usize>,
    t: Vec<usize>,
    x: usize,
    field: FieldSpec,
    l: usize,
    f: FieldVector,
    alpha: FieldVector,
}

impl TryFrom<CandidateParams> for SchemeParams {
    type Error = Error;
    fn try_from(c: CandidateParams) -> Result<Self> {
        Self::validate(&c)
    }
}

impl From<SchemeParams> for CandidateParams {
    fn from(p: SchemeParams) -> Self {
        Self {
            servers: p.servers,
            k: p.k,
            t: p.t,
            x: p.x,
            q: p.field.modulus(),
            f: Some(p.f.as_slice().iter().map(|e| e.value()).collect()),
            alpha: Some(p.alpha.as_slice().iter().map(|e| e.value()).collect()),
        }
    }
}

impl SchemeParams {
    pub fn validate(c: &CandidateParams) -> Result<Self> {
        let m = c.k.len();
        if m == 0 {
            return Err(Error::InfeasibleParams("at least one user (M >= 1) is required".into()));
        }
        if c.t.len() != m {
            return Err(Error::InfeasibleParams(format!(
                "K lists {m} users but T lists {}",
                c.t.len()
            )));
        }
        if c.servers == 0 {
            return Err(Error::InfeasibleParams("N must be at least 1".into()));
        }
        if let Some(i) = c.k.iter().position(|&k| k == 0) {
            return Err(Error::InfeasibleParams(format!("K_{} must be at least 1", i + 1)));
        }
        if let Some(i) = c.t.iter().position(|&t| t == 0) {
            return Err(Error::InfeasibleParams(format!("T_{} must be at least 1", i + 1)));
        }
        let field = FieldSpec::new(c.q)?;
        let used = c.x + c.t.iter().sum::<usize>();
        if used >= c.servers {
            return Err(Error::InfeasibleParams(format!(
                "L = N - X - sum(T) = {} - {} - {} must be at least 1",
                c.servers,
                c.x,
                used - c.x
            )));
        }
        let l = c.servers - used;
        let required = (l + c.servers) as u64;
        if c.q < required {
            return Err(Error::FieldTooSmall { q: c.q, required });
        }
        let f_vals: Vec<u64> = match &c.f {
            Some(v) => v.clone(),
            None => (0..l as u64).collect(),
        };
        let a_vals: Vec<u64> = match &c.alpha {
            Some(v) => v.clone(),
            None => (l as u64..(l + c.servers) as u64).collect(),
        };
        if f_vals.len() != l {
            return Err(Error::InfeasibleParams(format!("expected L = {l} f points, got {}", f_vals.len())));
        }
        if a_vals.len() != c.servers {
            return Err(Error::InfeasibleParams(format!(
                "expected N = {} alpha points, got {}",
                c.servers,
                a_vals.len()
            )));
        }
        if let Some(v) = f_vals.iter().chain(&a_vals).find(|&&v| v >= c.q) {
            return Err(Error::InfeasibleParams(format!("point {v} is not a residue mod {}", c.q)));
        }
        let mut all: Vec<u64> = f_vals.iter().chain(&a_vals).copied().collect();
        all.sort_unstable();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicatePoints(format!("value {} is used twice among f and alpha", w[0])));
        }
        Ok(Self {
            servers: c.servers,
            k: c.k.clone(),
            t: c.t.clone(),
            x: c.x,
            field,
            l,
            f: FieldVector::from_values(field, &f_vals),
            alpha: FieldVector::from_values(field, &a_vals),
        })
    }

    /// N
    pub fn servers(&self) -> usize {
        self.servers
    }

    /// M
    pub fn users(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self) -> &[usize] {
        &self.k
    }

    pub fn t(&self) -> &[usize] {
        &self.t
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    /// Symbols per message block.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of aligned interference dimensions, sum(T) + X.
    pub fn interference_dims(&self) -> usize {
        self.servers - self.l
    }

    pub fn f(&self) -> &FieldVector {
        &self.f
    }

    pub fn alpha(&self) -> &FieldVector {
        &self.alpha
    }

    pub fn f_at(&self, l: usize) -> FieldElement {
        self.f.as_slice()[l]
    }

    pub fn alpha_at(&self, n: usize) -> FieldElement {
        self.alpha.as_slice()[n]
    }

    /// K = K_1 * ... * K_M
    pub fn message_count(&self) -> usize {
        self.k.iter().product()
    }

    pub fn candidate(&self) -> CandidateParams {
        self.clone().into()
    }
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rate L/N of the scheme.
pub fn achievable_rate(p: &SchemeParams) -> BigRational {
    ratio(p.l() as i64, p.servers() as i64)
}

/// 1 - (X + sum T)/N evaluated directly from the raw parameters.
pub fn rate_formula(servers: usize, t: &[usize], x: usize) -> BigRational {
    let used = (x + t.iter().sum::<usize>()) as i64;
    BigRational::one() - ratio(used, servers as i64)
}

/// Asymptotic capacity of the two-user, replicated case: (1 - (T1+T2)/N)^+.
pub fn db_asymptotic_capacity(servers: usize, t1: usize, t2: usize) -> BigRational {
    let r = rate_formula(servers, &[t1, t2], 0);
    if r.is_negative() {
        BigRational::zero()
    } else {
        r
    }
}

/// Lower and upper capacity bounds for general M and X.
///
/// Rejects N <= X and any T_m >= N - X, where the upper-bound denominator
/// is no longer positive. The lower bound is clamped at zero.
pub fn capacity_bounds(servers: usize, k: &[usize], t: &[usize], x: usize) -> Result<(BigRational, BigRational)> {
    if k.is_empty() || k.len() != t.len() {
        return Err(Error::InfeasibleParams("K and T must list the same, nonzero number of users".into()));
    }
    if servers <= x {
        return Err(Error::InfeasibleParams(format!(
            "upper bound needs N > X, got N = {servers}, X = {x}"
        )));
    }
    let nx = (servers - x) as i64;
    let mut upper: Option<BigRational> = None;
    for (m, (&km, &tm)) in k.iter().zip(t).enumerate() {
        if tm as i64 >= nx {
            return Err(Error::InfeasibleParams(format!(
                "upper bound needs T_{} < N - X = {nx}, got {tm}",
                m + 1
            )));
        }
        let exponent = i32::try_from(km)
            .map_err(|_| Error::InfeasibleParams(format!("K_{} = {km} is too large", m + 1)))?;
        let num = BigRational::one() - ratio((tm + x) as i64, servers as i64);
        let den = BigRational::one() - num_traits::pow::Pow::pow(ratio(tm as i64, nx), exponent);
        let b = num / den;
        upper = Some(match upper {
            Some(u) if u <= b => u,
            _ => b,
        });
    }
    let lower = rate_formula(servers, t, x);
    let lower = if lower.is_negative() { BigRational::zero() } else { lower };
    Ok((lower, upper.expect("at least one user")))
}

/// Rate of the partition-based construction, (1 - 1/sqrt(N))^2.
pub fn baseline_partition_rate(servers: u64) -> Result<f64> {
    let r = integer_sqrt(servers).ok_or(Error::NotPerfectSquare(servers))?;
    if r < 2 {
        return Err(Error::NotPerfectSquare(servers));
    }
    let v = 1.0 - 1.0 / r as f64;
    Ok(v * v)
}

fn integer_sqrt(n: u64) -> Option<u64> {
    let guess = (n as f64).sqrt() as u64;
    (guess.saturating_sub(1)..=guess + 1).find(|&r| r.checked_mul(r) == Some(n))
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

mod rational_str {
    use super::BigRational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e| D::Error::custom(format!("bad rational {s:?}: {e}")))
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(r: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
            match r {
                Some(r) => s.serialize_some(&r.to_string()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| s.parse().map_err(|e| D::Error::custom(format!("bad rational {s:?}: {e}"))))
                .transpose()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    #[serde(with = "rational_str")]
    pub achievable_rate: BigRational,
    /// Present only for M = 2, X = 0.
    #[serde(with = "rational_str::opt")]
    pub db_asymptotic_capacity: Option<BigRational>,
    #[serde(with = "rational_str")]
    pub lower_bound: BigRational,
    #[serde(with = "rational_str")]
    pub upper_bound: BigRational,
    /// Present only when N is a perfect square.
    pub baseline_rate: Option<f64>,
}

impl RateReport {
    pub fn for_params(p: &SchemeParams) -> Result<Self> {
        let db = (p.users() == 2 && p.x() == 0).then(|| db_asymptotic_capacity(p.servers(), p.t()[0], p.t()[1]));
        let (lower_bound, upper_bound) = capacity_bounds(p.servers(), p.k(), p.t(), p.x())?;
        Ok(Self {
            achievable_rate: achievable_rate(p),
            db_asymptotic_capacity: db,
            lower_bound,
            upper_bound,
            baseline_rate: baseline_partition_rate(p.servers() as u64).ok(),
        })
    }

    /// Relative improvement of the achievable rate over the baseline, in percent.
    pub fn improvement_over_baseline(&self) -> Option<f64> {
        self.baseline_rate
            .map(|b| (rational_to_f64(&self.achievable_rate) / b - 1.0) * 100.0)
    }
}
