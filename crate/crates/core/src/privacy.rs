//! Privacy and security audits.
//!
//! Exact audits enumerate every realization of the relevant randomness and
//! compare integer count tables, so a PASS is an exact equality of
//! probability distributions. The inter-user audit additionally reports
//! conditional mutual information in q-ary units, either exactly or from a
//! Monte-Carlo estimate when enumeration is out of budget.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldSpec};
use crate::protocol::{
    answer_at, query_at, storage_at, CommonRandomness, MessageDatabase, StorageNoise, UserSecret,
};
use crate::scheme::SchemeParams;
use crate::tensor::{FieldVector, Tensor};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Largest count table the inter-user engine will allocate.
const MAX_TABLE_CELLS: u128 = 1 << 22;

/// Tolerance on total probability mass.
const MASS_TOLERANCE: f64 = 1e-12;

/// Exact distribution of an adversary's view, as integer counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ViewDistribution {
    pub label: String,
    counts: BTreeMap<Vec<u64>, u64>,
    total: u64,
}

impl ViewDistribution {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Default::default()
        }
    }

    pub fn record(&mut self, view: Vec<u64>) {
        *self.counts.entry(view).or_default() += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn support(&self) -> usize {
        self.counts.len()
    }

    pub fn probability(&self, view: &[u64]) -> num_rational::BigRational {
        use num_bigint::BigInt;
        let c = self.counts.get(view).copied().unwrap_or(0);
        num_rational::BigRational::new(BigInt::from(c), BigInt::from(self.total.max(1)))
    }

    /// Exact equality of the two probability tables.
    pub fn same_distribution(&self, other: &Self) -> bool {
        if self.counts.len() != other.counts.len() {
            return false;
        }
        let (ta, tb) = (self.total as u128, other.total as u128);
        self.counts.iter().all(|(v, &a)| {
            other
                .counts
                .get(v)
                .is_some_and(|&b| a as u128 * tb == b as u128 * ta)
        })
    }
}

/// Joint probability table over (secret, view) pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointDistribution {
    cells: BTreeMap<(Vec<u64>, Vec<u64>), f64>,
}

impl JointDistribution {
    pub fn from_probabilities(cells: impl IntoIterator<Item = (Vec<u64>, Vec<u64>, f64)>) -> Self {
        let mut out = Self::default();
        for (s, v, p) in cells {
            *out.cells.entry((s, v)).or_default() += p;
        }
        out
    }

    pub fn from_counts(cells: impl IntoIterator<Item = (Vec<u64>, Vec<u64>, u64)>) -> Self {
        let raw: Vec<_> = cells.into_iter().collect();
        let total: u64 = raw.iter().map(|c| c.2).sum();
        Self::from_probabilities(raw.into_iter().map(|(s, v, c)| (s, v, c as f64 / total as f64)))
    }

    /// The same table with secret and view exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            cells: self.cells.iter().map(|((s, v), &p)| ((v.clone(), s.clone()), p)).collect(),
        }
    }
}

/// I(S; V) in base-q units, with 0 log 0 = 0.
pub fn mi_estimate(joint: &JointDistribution, q: u64) -> Result<f64> {
    let mass: f64 = joint.cells.values().sum();
    if (mass - 1.0).abs() > MASS_TOLERANCE || joint.cells.values().any(|&p| p < 0.0) {
        return Err(Error::UnnormalizedDistribution(mass));
    }
    let mut ps: HashMap<&[u64], f64> = HashMap::new();
    let mut pv: HashMap<&[u64], f64> = HashMap::new();
    for ((s, v), &p) in &joint.cells {
        *ps.entry(s).or_default() += p;
        *pv.entry(v).or_default() += p;
    }
    let ln_q = (q as f64).ln();
    Ok(joint
        .cells
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|((s, v), &p)| p * (p / (ps[s.as_slice()] * pv[v.as_slice()])).ln() / ln_q)
        .sum())
}

/// Analytic ceiling on inter-user leakage without common randomness,
/// 2 (1 - (1 - q^-(K-1)) (1 - 1/q)^K), in q-ary units.
pub fn leakage_bound(q: u64, k: u32) -> f64 {
    let qf = q as f64;
    2.0 * (1.0 - (1.0 - qf.powi(1 - k as i32)) * (1.0 - 1.0 / qf).powi(k as i32))
}

/// The bound applies to two users with T = (1, 1), K_1 = K_2 and no
/// storage noise.
pub fn bound_for(params: &SchemeParams) -> Option<f64> {
    (params.users() == 2 && params.t() == [1, 1] && params.k()[0] == params.k()[1] && params.x() == 0)
        .then(|| leakage_bound(params.field().modulus(), params.k()[0] as u32))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub audit: String,
    pub passed: bool,
    /// Realizations enumerated.
    pub enumerated: u64,
    pub detail: String,
}

fn saturate(n: u128) -> u64 {
    u64::try_from(n).unwrap_or(u64::MAX)
}

fn checked_pow(q: u64, e: usize) -> u128 {
    let mut r: u128 = 1;
    for _ in 0..e {
        r = r.saturating_mul(q as u128);
    }
    r
}

fn ensure_budget(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// Calls `visit` with every vector in F_q^len, in odometer order.
fn for_each_digits(q: u64, len: usize, mut visit: impl FnMut(&[u64])) {
    let mut d = vec![0u64; len];
    loop {
        visit(&d);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            d[i] += 1;
            if d[i] < q {
                break;
            }
            d[i] = 0;
            i += 1;
        }
    }
}

/// Query privacy for a single user with K messages, privacy level t and
/// Cauchy points f, observed at the evaluation points `observed`. t = 0
/// gives the unprotected query e(theta).
pub fn audit_query_privacy(
    field: FieldSpec,
    k: usize,
    t: usize,
    f: &[FieldElement],
    observed: &[FieldElement],
    budget: u128,
) -> Result<AuditVerdict> {
    let l = f.len();
    let noise_digits = k * t * l;
    let space = checked_pow(field.modulus(), noise_digits);
    ensure_budget(space, budget)?;
    let dists: Vec<ViewDistribution> = (1..=k)
        .map(|theta| {
            let mut dist = ViewDistribution::new(format!("theta={theta}"));
            for_each_digits(field.modulus(), noise_digits, |z| {
                let mut view = Vec::with_capacity(observed.len() * l * k);
                for &a in observed {
                    for (li, &fl) in f.iter().enumerate() {
                        let d = fl - a;
                        for kk in 0..k {
                            let mut v = if kk + 1 == theta { field.one() } else { field.zero() };
                            let mut coeff = d;
                            for tt in 0..t {
                                v += coeff * field.element(z[(li * t + tt) * k + kk]);
                                coeff *= d;
                            }
                            view.push(v.value());
                        }
                    }
                }
                dist.record(view);
            });
            dist
        })
        .collect();
    let passed = dists.windows(2).all(|w| w[0].same_distribution(&w[1]));
    Ok(AuditVerdict {
        audit: format!("query-privacy K={k} T={t} |observed|={}", observed.len()),
        passed,
        enumerated: saturate(space * k as u128),
        detail: if passed {
            format!("{k} index distributions identical over {space} noise realizations")
        } else {
            "query distribution depends on the index".into()
        },
    })
}

/// T-privacy of user `m` (1-based) against the servers in `subset` (1-based).
pub fn audit_t_privacy(params: &SchemeParams, m: usize, subset: &[usize], budget: u128) -> Result<AuditVerdict> {
    check_user(params, m)?;
    let observed = servers_to_points(params, subset)?;
    let mut v = audit_query_privacy(
        params.field(),
        params.k()[m - 1],
        params.t()[m - 1],
        params.f().as_slice(),
        &observed,
        budget,
    )?;
    v.audit = format!("t-privacy user={m} servers={subset:?}");
    Ok(v)
}

fn check_user(params: &SchemeParams, m: usize) -> Result<()> {
    if m == 0 || m > params.users() {
        return Err(Error::IndexOutOfRange {
            index: m,
            bound: params.users(),
        });
    }
    Ok(())
}

fn servers_to_points(params: &SchemeParams, subset: &[usize]) -> Result<Vec<FieldElement>> {
    subset
        .iter()
        .map(|&n| {
            if n == 0 || n > params.servers() {
                Err(Error::IndexOutOfRange {
                    index: n,
                    bound: params.servers(),
                })
            } else {
                Ok(params.alpha_at(n - 1))
            }
        })
        .collect()
}

/// The two databases compared by the X-security audit: all zeros, and
/// entry (l, i) = i + 1 mod q with i the row-major message index.
pub fn x_security_databases(params: &SchemeParams) -> (MessageDatabase, MessageDatabase) {
    let f = params.field();
    let p = params.message_count();
    let ramp = (0..params.l())
        .map(|_| {
            let data = (0..p as u64).map(|i| f.element((i + 1) % f.modulus())).collect();
            Tensor::from_elements(f, params.k(), data).expect("validated dims")
        })
        .collect();
    (
        MessageDatabase::zeros(params),
        MessageDatabase::new(params, ramp).expect("validated dims"),
    )
}

/// X-security against the servers in `subset` (1-based).
pub fn audit_x_security(params: &SchemeParams, subset: &[usize], budget: u128) -> Result<AuditVerdict> {
    let observed = servers_to_points(params, subset)?;
    let f = params.field();
    let p = params.message_count();
    let digits = params.l() * params.x() * p;
    let space = checked_pow(f.modulus(), digits);
    ensure_budget(space, budget)?;
    let (wa, wb) = x_security_databases(params);
    let dist = |db: &MessageDatabase, label: &str| -> Result<ViewDistribution> {
        let mut dist = ViewDistribution::new(label);
        let mut err = None;
        for_each_digits(f.modulus(), digits, |z| {
            let noise = StorageNoise::from_tensors(
                (0..params.l())
                    .map(|l| {
                        (0..params.x())
                            .map(|x| {
                                let off = (l * params.x() + x) * p;
                                let data = z[off..off + p].iter().map(|&v| f.element(v)).collect();
                                Tensor::from_elements(f, params.k(), data).expect("validated dims")
                            })
                            .collect()
                    })
                    .collect(),
            );
            let mut view = Vec::new();
            for &a in &observed {
                match storage_at(params, db, &noise, a) {
                    Ok(shares) => view.extend(shares.iter().flat_map(|s| s.as_slice().iter().map(|e| e.value()))),
                    Err(e) => err = Some(e),
                }
            }
            dist.record(view);
        });
        err.map_or(Ok(dist), Err)
    };
    let da = dist(&wa, "zero database")?;
    let db = dist(&wb, "ramp database")?;
    let passed = da.same_distribution(&db);
    Ok(AuditVerdict {
        audit: format!("x-security servers={subset:?}"),
        passed,
        enumerated: saturate(space * 2),
        detail: if passed {
            format!("share distributions identical over {space} noise realizations")
        } else {
            "share distribution depends on the database".into()
        },
    })
}

/// Prior over the database entries other than the retrieved one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatabasePrior {
    /// Every symbol i.i.d. uniform over F_q.
    Uniform,
    /// A single known database.
    Fixed(MessageDatabase),
}

impl DatabasePrior {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Fixed(_) => "fixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Estimate {
    Exact {
        realizations: u64,
        /// True iff every conditional table factorizes exactly.
        exact_zero: bool,
    },
    Sampled {
        samples: usize,
        /// Plug-in estimate before bias correction.
        raw: f64,
        null_mean: f64,
        null_std: f64,
    },
}

/// Leakage of the other users' indices to one observing user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub observer: usize,
    pub common_randomness: bool,
    pub prior: String,
    pub q: u64,
    pub k: Vec<usize>,
    /// I(theta_-m ; A_1..A_N | theta_m, Z_m, W(theta)) in q-ary units.
    pub mi: f64,
    pub bound: Option<f64>,
    pub estimate: Estimate,
}

impl LeakageReport {
    pub fn exact_zero(&self) -> Option<bool> {
        match self.estimate {
            Estimate::Exact { exact_zero, .. } => Some(exact_zero),
            Estimate::Sampled { .. } => None,
        }
    }

    /// Half-width used when comparing sampled estimates.
    pub fn uncertainty(&self) -> f64 {
        match self.estimate {
            Estimate::Exact { .. } => 0.0,
            Estimate::Sampled { null_std, .. } => 3.0 * null_std,
        }
    }

    pub fn within_bound(&self) -> Option<bool> {
        self.bound.map(|b| self.mi <= b + self.uncertainty())
    }
}

/// Count table indexed by (conditioning class, secret, view).
struct CountTable {
    classes: usize,
    secrets: usize,
    views: usize,
    counts: Vec<u64>,
}

impl CountTable {
    fn new(classes: usize, secrets: usize, views: usize) -> Self {
        Self {
            classes,
            secrets,
            views,
            counts: vec![0; classes * secrets * views],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }

    fn cell(&self, c: usize, s: usize, v: usize) -> u64 {
        self.counts[(c * self.secrets + s) * self.views + v]
    }

    /// Exact conditional independence of secret and view given the class,
    /// checked as n(c,s,v) n(c) = n(c,s) n(c,v) for every cell.
    fn factorizes(&self) -> bool {
        (0..self.classes).all(|c| {
            let ncs: Vec<u128> = (0..self.secrets)
                .map(|s| (0..self.views).map(|v| self.cell(c, s, v) as u128).sum())
                .collect();
            let nc: u128 = ncs.iter().sum();
            if nc == 0 {
                return true;
            }
            (0..self.views).all(|v| {
                let ncv: u128 = (0..self.secrets).map(|s| self.cell(c, s, v) as u128).sum();
                (0..self.secrets).all(|s| self.cell(c, s, v) as u128 * nc == ncs[s] * ncv)
            })
        })
    }

    /// sum p(c,s,v) log_q [ n(c,s,v) n(c) / (n(c,s) n(c,v)) ]
    fn conditional_mi(&self, q: u64) -> f64 {
        let total: f64 = self.counts.iter().map(|&c| c as f64).sum();
        let ln_q = (q as f64).ln();
        let mut mi = 0.0;
        for c in 0..self.classes {
            let ncs: Vec<f64> = (0..self.secrets)
                .map(|s| (0..self.views).map(|v| self.cell(c, s, v) as f64).sum())
                .collect();
            let nc: f64 = ncs.iter().sum();
            if nc == 0.0 {
                continue;
            }
            for v in 0..self.views {
                let ncv: f64 = (0..self.secrets).map(|s| self.cell(c, s, v) as f64).sum();
                for (s, &ncs_s) in ncs.iter().enumerate() {
                    let n = self.cell(c, s, v) as f64;
                    if n > 0.0 {
                        mi += n / total * (n * nc / (ncs_s * ncv)).ln() / ln_q;
                    }
                }
            }
        }
        mi
    }
}

/// Mixed-radix index of a 1-based index tuple, skipping `skip` (0-based).
fn tuple_index(thetas: &[usize], dims: &[usize], skip: Option<usize>) -> usize {
    thetas
        .iter()
        .zip(dims)
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .fold(0, |acc, (_, (&t, &d))| acc * d + (t - 1))
}

fn all_tuples(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (1..=d).map(move |i| {
                    let mut v = p.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

/// Exact inter-user leakage to `observer` (1-based) by enumeration of all
/// index tuples, all users' query noise, the database (under `prior`) and
/// the storage noise. Common randomness is folded in afterwards as an
/// exact convolution with its additive mask distribution.
pub fn audit_inter_user_privacy(
    params: &SchemeParams,
    observer: usize,
    common_randomness: bool,
    prior: &DatabasePrior,
    budget: u128,
) -> Result<LeakageReport> {
    check_user(params, observer)?;
    let f = params.field();
    let q = f.modulus();
    let (n_srv, l, dims) = (params.servers(), params.l(), params.k());
    let mo = observer - 1;
    let p = params.message_count();
    if let DatabasePrior::Fixed(db) = prior {
        if db.tensors().len() != l || db.tensors().iter().any(|t| t.dims() != dims) {
            return Err(Error::DimensionMismatch("fixed database does not match parameters".into()));
        }
    }
    let uniform = matches!(prior, DatabasePrior::Uniform);

    // noise digit layout: user j, then l, t, k
    let user_digits: Vec<usize> = (0..params.users()).map(|j| dims[j] * params.t()[j] * l).collect();
    let user_offset: Vec<usize> = user_digits
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let noise_digits: usize = user_digits.iter().sum();
    let w_digits = if uniform { l * p } else { 0 };
    let storage_digits = w_digits + l * p * params.x();

    let tuples = all_tuples(dims);
    let realizations = (tuples.len() as u128)
        .saturating_mul(checked_pow(q, noise_digits))
        .saturating_mul(checked_pow(q, storage_digits));
    ensure_budget(realizations, budget)?;

    let classes = (dims[mo] as u128) * checked_pow(q, user_digits[mo]) * checked_pow(q, l);
    let secrets: u128 = dims.iter().enumerate().filter(|(j, _)| *j != mo).map(|(_, &d)| d as u128).product();
    let views = checked_pow(q, n_srv);
    let cells = classes.saturating_mul(secrets).saturating_mul(views);
    ensure_budget(cells, MAX_TABLE_CELLS)?;
    let (classes, secrets, views) = (classes as usize, secrets as usize, views as usize);

    let inv_d: Vec<Vec<FieldElement>> = (0..l)
        .map(|li| (0..n_srv).map(|n| (params.f_at(li) - params.alpha_at(n)).inv()).collect())
        .collect::<Result<_>>()?;
    let d_pow: Vec<Vec<Vec<FieldElement>>> = (0..l)
        .map(|li| {
            (0..n_srv)
                .map(|n| {
                    let d = params.f_at(li) - params.alpha_at(n);
                    (0..=params.t().iter().copied().max().unwrap_or(0).max(params.x()))
                        .map(|e| d.pow(e as u64))
                        .collect()
                })
                .collect()
        })
        .collect();
    let all_idx = all_tuples(dims);
    let noise_space = checked_pow(q, noise_digits) as u64;

    let tasks: Vec<(usize, u64)> = (0..tuples.len())
        .flat_map(|ti| (0..noise_space).map(move |z| (ti, z)))
        .collect();

    let table = tasks
        .par_iter()
        .fold(
            || CountTable::new(classes, secrets, views),
            |mut table, &(ti, zi)| {
                let thetas = &tuples[ti];
                let mut z = vec![0u64; noise_digits];
                let mut rem = zi;
                for d in z.iter_mut() {
                    *d = rem % q;
                    rem /= q;
                }
                // queries[j][n][l] as raw vectors
                let queries: Vec<Vec<Vec<Vec<FieldElement>>>> = (0..params.users())
                    .map(|j| {
                        let (kj, tj) = (dims[j], params.t()[j]);
                        (0..n_srv)
                            .map(|n| {
                                (0..l)
                                    .map(|li| {
                                        (0..kj)
                                            .map(|kk| {
                                                let mut v = if kk + 1 == thetas[j] { f.one() } else { f.zero() };
                                                for tt in 0..tj {
                                                    let digit = z[user_offset[j] + (li * tj + tt) * kj + kk];
                                                    v += d_pow[li][n][tt + 1] * f.element(digit);
                                                }
                                                v
                                            })
                                            .collect()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                // product of query entries for every (n, l, message index)
                let prod = |n: usize, li: usize, idx: &[usize]| -> FieldElement {
                    idx.iter()
                        .enumerate()
                        .fold(f.one(), |acc, (j, &kk)| acc * queries[j][n][li][kk - 1])
                };
                let mut g: Vec<Vec<u64>> = Vec::with_capacity(storage_digits);
                if uniform {
                    for li in 0..l {
                        for idx in &all_idx {
                            g.push((0..n_srv).map(|n| (inv_d[li][n] * prod(n, li, idx)).value()).collect());
                        }
                    }
                }
                for li in 0..l {
                    for x in 1..=params.x() {
                        for idx in &all_idx {
                            g.push((0..n_srv).map(|n| (d_pow[li][n][x - 1] * prod(n, li, idx)).value()).collect());
                        }
                    }
                }
                let mut a = vec![0u64; n_srv];
                let fixed_w: Vec<u64> = match prior {
                    DatabasePrior::Fixed(db) => {
                        for (n, an) in a.iter_mut().enumerate() {
                            let mut acc = f.zero();
                            for li in 0..l {
                                for idx in &all_idx {
                                    acc += inv_d[li][n] * prod(n, li, idx) * db.tensors()[li].get(idx).expect("in range");
                                }
                            }
                            *an = acc.value();
                        }
                        db.lookup(thetas).expect("in range").iter().map(|e| e.value()).collect()
                    }
                    DatabasePrior::Uniform => Vec::new(),
                };
                let lin = tuple_index(thetas, dims, None);
                let s = tuple_index(thetas, dims, Some(mo));
                let zm = z[user_offset[mo]..user_offset[mo] + user_digits[mo]]
                    .iter()
                    .rev()
                    .fold(0usize, |acc, &d| acc * q as usize + d as usize);
                let class_base = ((thetas[mo] - 1) * checked_pow(q, user_digits[mo]) as usize + zm) * checked_pow(q, l) as usize;

                let mut digits = vec![0u64; storage_digits];
                loop {
                    let wt = (0..l).rev().fold(0usize, |acc, li| {
                        let sym = if uniform { digits[li * p + lin] } else { fixed_w[li] };
                        acc * q as usize + sym as usize
                    });
                    let v = a.iter().rev().fold(0usize, |acc, &x| acc * q as usize + x as usize);
                    table.counts[((class_base + wt) * secrets + s) * views + v] += 1;
                    let mut i = 0;
                    loop {
                        if i == storage_digits {
                            return table;
                        }
                        for (an, &gn) in a.iter_mut().zip(&g[i]) {
                            *an += gn;
                            if *an >= q {
                                *an -= q;
                            }
                        }
                        digits[i] += 1;
                        if digits[i] < q {
                            break;
                        }
                        digits[i] = 0;
                        i += 1;
                    }
                }
            },
        )
        .reduce(|| CountTable::new(classes, secrets, views), CountTable::merge);

    let table = if common_randomness {
        convolve_mask(params, table, budget)?
    } else {
        table
    };
    let exact_zero = table.factorizes();
    let mi = if exact_zero { 0.0 } else { table.conditional_mi(q).max(0.0) };
    Ok(LeakageReport {
        observer,
        common_randomness,
        prior: prior.name().into(),
        q,
        k: dims.to_vec(),
        mi,
        bound: bound_for(params),
        estimate: Estimate::Exact {
            realizations: saturate(realizations),
            exact_zero,
        },
    })
}

/// Adds the server mask sum_i alpha_n^i Z~_i for every Z~ in F_q^D.
fn convolve_mask(params: &SchemeParams, table: CountTable, budget: u128) -> Result<CountTable> {
    let q = params.field().modulus();
    let n_srv = params.servers();
    let d = params.interference_dims();
    ensure_budget(checked_pow(q, d), budget)?;
    let mut masks: Vec<Vec<u64>> = Vec::new();
    for_each_digits(q, d, |zt| {
        let cr = CommonRandomness {
            z_tilde: zt.iter().map(|&v| params.field().element(v)).collect(),
        };
        masks.push((0..n_srv).map(|n| cr.mask_at(params.alpha_at(n)).value()).collect());
    });
    let mut out = CountTable::new(table.classes, table.secrets, table.views);
    let mut digits = vec![0u64; n_srv];
    for block in 0..table.classes * table.secrets {
        let base = block * table.views;
        for v in 0..table.views {
            let c = table.counts[base + v];
            if c == 0 {
                continue;
            }
            let mut rem = v as u64;
            for dgt in digits.iter_mut() {
                *dgt = rem % q;
                rem /= q;
            }
            for m in &masks {
                let w = digits
                    .iter()
                    .zip(m)
                    .rev()
                    .fold(0usize, |acc, (&a, &b)| acc * q as usize + ((a + b) % q) as usize);
                out.counts[base + w] += c;
            }
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate of the same leakage, for parameters beyond the
/// enumeration budget. The plug-in conditional MI is bias-corrected by
/// subtracting its mean under `null_rounds` within-class shuffles of the
/// secret; the null spread is the reported uncertainty.
pub fn sample_inter_user_privacy(
    params: &SchemeParams,
    observer: usize,
    common_randomness: bool,
    prior: &DatabasePrior,
    samples: usize,
    seed: u64,
) -> Result<LeakageReport> {
    const NULL_ROUNDS: usize = 8;
    check_user(params, observer)?;
    let f = params.field();
    let q = f.modulus();
    let mo = observer - 1;
    let dims = params.k();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rows: Vec<(Vec<u64>, usize, Vec<u64>)> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let thetas: Vec<usize> = dims.iter().map(|&k| rng.random_range(1..=k)).collect();
        let secrets: Vec<UserSecret> = thetas
            .iter()
            .enumerate()
            .map(|(j, &th)| crate::protocol::gen_user_secret(params, j + 1, th, &mut rng))
            .collect::<Result<_>>()?;
        let db = match prior {
            DatabasePrior::Uniform => MessageDatabase::random(params, &mut rng),
            DatabasePrior::Fixed(db) => db.clone(),
        };
        let noise = StorageNoise::draw(params, &mut rng);
        let cr = if common_randomness {
            CommonRandomness::draw(params, &mut rng)
        } else {
            CommonRandomness::zeroed(params)
        };
        let mut view = Vec::with_capacity(params.servers());
        for n in 0..params.servers() {
            let a = params.alpha_at(n);
            let s = storage_at(params, &db, &noise, a)?;
            let qs: Vec<Vec<FieldVector>> = secrets.iter().map(|u| query_at(params, u, a)).collect::<Result<_>>()?;
            let qr: Vec<&[FieldVector]> = qs.iter().map(Vec::as_slice).collect();
            view.push(answer_at(params, &s, &qr, &cr, a)?.value());
        }
        let mut class = vec![thetas[mo] as u64];
        class.extend(secrets[mo].noise.iter().flatten().flat_map(|v| v.as_slice().iter().map(|e| e.value())));
        class.extend(db.lookup(&thetas)?.iter().map(|e| e.value()));
        rows.push((class, tuple_index(&thetas, dims, Some(mo)), view));
    }
    let raw = plug_in_cmi(&rows, q);
    let mut by_class: HashMap<&[u64], Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_class.entry(&r.0).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_class.into_values().collect();
    groups.sort();
    let nulls: Vec<f64> = (0..NULL_ROUNDS)
        .map(|_| {
            let mut shuffled = rows.clone();
            for g in &groups {
                let mut labels: Vec<usize> = g.iter().map(|&i| rows[i].1).collect();
                labels.shuffle(&mut rng);
                for (&i, s) in g.iter().zip(labels) {
                    shuffled[i].1 = s;
                }
            }
            plug_in_cmi(&shuffled, q)
        })
        .collect();
    let null_mean = nulls.iter().sum::<f64>() / NULL_ROUNDS as f64;
    let null_std = (nulls.iter().map(|x| (x - null_mean).powi(2)).sum::<f64>() / (NULL_ROUNDS - 1) as f64).sqrt();
    Ok(LeakageReport {
        observer,
        common_randomness,
        prior: prior.name().into(),
        q,
        k: dims.to_vec(),
        mi: (raw - null_mean).max(0.0),
        bound: bound_for(params),
        estimate: Estimate::Sampled {
            samples,
            raw,
            null_mean,
            null_std,
        },
    })
}

fn plug_in_cmi(rows: &[(Vec<u64>, usize, Vec<u64>)], q: u64) -> f64 {
    let mut n_csv: HashMap<(&[u64], usize, &[u64]), f64> = HashMap::new();
    let mut n_cs: HashMap<(&[u64], usize), f64> = HashMap::new();
    let mut n_cv: HashMap<(&[u64], &[u64]), f64> = HashMap::new();
    let mut n_c: HashMap<&[u64], f64> = HashMap::new();
    for (c, s, v) in rows {
        *n_csv.entry((c, *s, v)).or_default() += 1.0;
        *n_cs.entry((c, *s)).or_default() += 1.0;
        *n_cv.entry((c, v)).or_default() += 1.0;
        *n_c.entry(c).or_default() += 1.0;
    }
    let total = rows.len() as f64;
    let ln_q = (q as f64).ln();
    n_csv
        .iter()
        .map(|(&(c, s, v), &n)| n / total * (n * n_c[c] / (n_cs[&(c, s)] * n_cv[&(c, v)])).ln() / ln_q)
        .sum()
}

/// All size-`r` subsets of 1..=n, lexicographic.
pub fn subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if r <= n {
        go(1, n, r, &mut Vec::new(), &mut out);
    }
    out
}

/// A fixed, rank-deficient database that leaks without common randomness:
/// zero wherever some index equals 1, entry (l, i) = i + l + 1 mod q
/// elsewhere, with i the row-major message index. Against a full-rank
/// database the unmasked answers reveal nothing beyond W(theta).
pub fn demo_database(params: &SchemeParams) -> MessageDatabase {
    let f = params.field();
    let tensors = (0..params.l() as u64)
        .map(|l| {
            let mut i = 0u64;
            Tensor::from_fn(f, params.k(), |idx| {
                let v = if idx.contains(&1) { f.zero() } else { f.element((i + l + 1) % f.modulus()) };
                i += 1;
                v
            })
            .expect("validated dims")
        })
        .collect();
    MessageDatabase::new(params, tensors).expect("validated dims")
}
