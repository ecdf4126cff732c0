//! The retrieval protocol: secret-shared storage, Shamir-style queries,
//! cross-subspace-aligned answers and Cauchy-Vandermonde decoding.
//!
//! Servers and users are numbered from 1. Every per-server quantity is a
//! function of the server's evaluation point, so the `*_at` variants can
//! evaluate a share at a point that belongs to no configured server.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldSpec};
use crate::rng::SeedSchedule;
use crate::scheme::SchemeParams;
use crate::tensor::{cv_matrix, FieldVector, Tensor};

/// One L-symbol block of the database: W^(1), ..., W^(L).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageDatabase {
    tensors: Vec<Tensor>,
}

impl MessageDatabase {
    pub fn new(params: &SchemeParams, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != params.l() {
            return Err(Error::DimensionMismatch(format!(
                "expected L = {} tensors, got {}",
                params.l(),
                tensors.len()
            )));
        }
        for t in &tensors {
            if t.dims() != params.k() || t.spec() != params.field() {
                return Err(Error::DimensionMismatch(format!(
                    "database tensor has dims {:?}, expected {:?}",
                    t.dims(),
                    params.k()
                )));
            }
        }
        Ok(Self { tensors })
    }

    pub fn random<R: RngCore + ?Sized>(params: &SchemeParams, rng: &mut R) -> Self {
        let tensors = (0..params.l())
            .map(|_| Tensor::random(params.field(), params.k(), rng).expect("validated dims"))
            .collect();
        Self { tensors }
    }

    pub fn zeros(params: &SchemeParams) -> Self {
        let tensors = (0..params.l())
            .map(|_| Tensor::zeros(params.field(), params.k()).expect("validated dims"))
            .collect();
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// The L symbols of message (theta_1, ..., theta_M).
    pub fn lookup(&self, thetas: &[usize]) -> Result<Vec<FieldElement>> {
        self.tensors.iter().map(|t| t.get(thetas)).collect()
    }
}

/// K_1 * ... * K_M messages of equal symbol length, split into L-symbol
/// blocks on demand. The final block is zero-padded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageStore {
    field: FieldSpec,
    dims: Vec<usize>,
    messages: Vec<Vec<FieldElement>>,
}

impl MessageStore {
    /// `messages` is in row-major index order (last index fastest).
    pub fn new(field: FieldSpec, dims: &[usize], messages: Vec<Vec<FieldElement>>) -> Result<Self> {
        let count: usize = dims.iter().product();
        if messages.len() != count {
            return Err(Error::DimensionMismatch(format!(
                "{} messages for dims {:?} (need {count})",
                messages.len(),
                dims
            )));
        }
        let len = messages.first().map_or(0, Vec::len);
        if messages.iter().any(|m| m.len() != len) {
            return Err(Error::DimensionMismatch("messages differ in length".into()));
        }
        if messages.iter().flatten().any(|s| s.spec() != field) {
            return Err(Error::DimensionMismatch("message symbol from another field".into()));
        }
        Ok(Self {
            field,
            dims: dims.to_vec(),
            messages,
        })
    }

    pub fn random<R: RngCore + ?Sized>(field: FieldSpec, dims: &[usize], symbols: usize, rng: &mut R) -> Self {
        let count: usize = dims.iter().product();
        let messages = (0..count)
            .map(|_| (0..symbols).map(|_| field.sample(rng)).collect())
            .collect();
        Self {
            field,
            dims: dims.to_vec(),
            messages,
        }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Symbols per message.
    pub fn message_len(&self) -> usize {
        self.messages.first().map_or(0, Vec::len)
    }

    pub fn messages(&self) -> &[Vec<FieldElement>] {
        &self.messages
    }

    pub fn block_count(&self, l: usize) -> usize {
        self.message_len().div_ceil(l)
    }

    pub fn message(&self, thetas: &[usize]) -> Result<&[FieldElement]> {
        let probe = Tensor::zeros(self.field, &self.dims)?;
        Ok(&self.messages[probe.offset(thetas)?])
    }

    pub fn block(&self, params: &SchemeParams, b: usize) -> Result<MessageDatabase> {
        if params.k() != self.dims.as_slice() || params.field() != self.field {
            return Err(Error::DimensionMismatch("store does not match scheme parameters".into()));
        }
        let l = params.l();
        let tensors = (0..l)
            .map(|i| {
                let pos = b * l + i;
                let data = self
                    .messages
                    .iter()
                    .map(|m| m.get(pos).copied().unwrap_or(self.field.zero()))
                    .collect();
                Tensor::from_elements(self.field, &self.dims, data)
            })
            .collect::<Result<Vec<_>>>()?;
        MessageDatabase::new(params, tensors)
    }
}

/// Storage noise Z^_{l,x}, indexed `[l][x]`, x = 1..X.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageNoise {
    z_hat: Vec<Vec<Tensor>>,
}

impl StorageNoise {
    pub fn draw<R: RngCore + ?Sized>(params: &SchemeParams, rng: &mut R) -> Self {
        let z_hat = (0..params.l())
            .map(|_| {
                (0..params.x())
                    .map(|_| Tensor::random(params.field(), params.k(), rng).expect("validated dims"))
                    .collect()
            })
            .collect();
        Self { z_hat }
    }

    pub fn from_tensors(z_hat: Vec<Vec<Tensor>>) -> Self {
        Self { z_hat }
    }

    pub fn tensors(&self) -> &[Vec<Tensor>] {
        &self.z_hat
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageShare {
    pub server: usize,
    pub shares: Vec<Tensor>,
}

/// S^(l)(alpha) = W^(l) + sum_x (f_l - alpha)^x Z^_{l,x} for every l.
pub fn storage_at(
    params: &SchemeParams,
    db: &MessageDatabase,
    noise: &StorageNoise,
    alpha: FieldElement,
) -> Result<Vec<Tensor>> {
    db.tensors()
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let d = params.f_at(l) - alpha;
            let mut share = w.clone();
            let mut coeff = d;
            for z in noise.z_hat.get(l).map_or(&[][..], Vec::as_slice) {
                share = share.add_scaled(z, coeff)?;
                coeff *= d;
            }
            Ok(share)
        })
        .collect()
}

pub fn encode_with_noise(
    params: &SchemeParams,
    db: &MessageDatabase,
    noise: &StorageNoise,
) -> Result<Vec<StorageShare>> {
    (0..params.servers())
        .map(|n| {
            Ok(StorageShare {
                server: n + 1,
                shares: storage_at(params, db, noise, params.alpha_at(n))?,
            })
        })
        .collect()
}

pub fn encode_storage<R: RngCore + ?Sized>(
    params: &SchemeParams,
    db: &MessageDatabase,
    rng: &mut R,
) -> Result<Vec<StorageShare>> {
    let noise = StorageNoise::draw(params, rng);
    encode_with_noise(params, db, &noise)
}

/// User m's index and private noise Z_{m,t}^(l), indexed `[l][t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSecret {
    pub user: usize,
    pub theta: usize,
    pub noise: Vec<Vec<FieldVector>>,
}

pub fn gen_user_secret<R: RngCore + ?Sized>(
    params: &SchemeParams,
    m: usize,
    theta: usize,
    rng: &mut R,
) -> Result<UserSecret> {
    if m == 0 || m > params.users() {
        return Err(Error::IndexOutOfRange {
            index: m,
            bound: params.users(),
        });
    }
    let km = params.k()[m - 1];
    if theta == 0 || theta > km {
        return Err(Error::IndexOutOfRange { index: theta, bound: km });
    }
    let noise = (0..params.l())
        .map(|_| {
            (0..params.t()[m - 1])
                .map(|_| FieldVector::random(params.field(), km, rng))
                .collect()
        })
        .collect();
    Ok(UserSecret { user: m, theta, noise })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryShare {
    pub user: usize,
    pub server: usize,
    /// Q_{n,1}, ..., Q_{n,L}
    pub vectors: Vec<FieldVector>,
}

/// Q_l(alpha) = e(theta) + sum_t (f_l - alpha)^t Z_{m,t}^(l) for every l.
pub fn query_at(params: &SchemeParams, secret: &UserSecret, alpha: FieldElement) -> Result<Vec<FieldVector>> {
    let km = params.k()[secret.user - 1];
    let e = FieldVector::basis(params.field(), km, secret.theta)?;
    secret
        .noise
        .iter()
        .enumerate()
        .map(|(l, zs)| {
            let d = params.f_at(l) - alpha;
            let mut q = e.clone();
            let mut coeff = d;
            for z in zs {
                q = q.add_scaled(z, coeff)?;
                coeff *= d;
            }
            Ok(q)
        })
        .collect()
}

pub fn gen_queries(params: &SchemeParams, secret: &UserSecret) -> Result<Vec<QueryShare>> {
    (0..params.servers())
        .map(|n| {
            Ok(QueryShare {
                user: secret.user,
                server: n + 1,
                vectors: query_at(params, secret, params.alpha_at(n))?,
            })
        })
        .collect()
}

/// Z~_0, ..., Z~_{sum T + X - 1}, shared by all servers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommonRandomness {
    pub z_tilde: Vec<FieldElement>,
}

impl CommonRandomness {
    pub fn draw<R: RngCore + ?Sized>(params: &SchemeParams, rng: &mut R) -> Self {
        Self {
            z_tilde: (0..params.interference_dims())
                .map(|_| params.field().sample(rng))
                .collect(),
        }
    }

    pub fn zeroed(params: &SchemeParams) -> Self {
        Self {
            z_tilde: vec![params.field().zero(); params.interference_dims()],
        }
    }

    /// sum_i alpha^i Z~_i
    pub fn mask_at(&self, alpha: FieldElement) -> FieldElement {
        self.z_tilde
            .iter()
            .rev()
            .fold(alpha.spec().zero(), |acc, &z| acc * alpha + z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnswerShare {
    pub server: usize,
    pub value: FieldElement,
}

/// A(alpha) = sum_l (f_l - alpha)^{-1} S^(l) x_1 Q_l^(1) ... x_M Q_l^(M) + Z~(alpha).
///
/// `queries[m][l]` is user m's l-th query vector for this evaluation point.
pub fn answer_at(
    params: &SchemeParams,
    storage: &[Tensor],
    queries: &[&[FieldVector]],
    cr: &CommonRandomness,
    alpha: FieldElement,
) -> Result<FieldElement> {
    if storage.len() != params.l() || queries.len() != params.users() {
        return Err(Error::DimensionMismatch(format!(
            "answer needs L = {} shares and M = {} query sets",
            params.l(),
            params.users()
        )));
    }
    if cr.z_tilde.len() != params.interference_dims() {
        return Err(Error::DimensionMismatch(format!(
            "common randomness has {} symbols, expected {}",
            cr.z_tilde.len(),
            params.interference_dims()
        )));
    }
    let mut acc = cr.mask_at(alpha);
    for (l, s) in storage.iter().enumerate() {
        let vs = queries
            .iter()
            .map(|q| {
                q.get(l)
                    .ok_or_else(|| Error::DimensionMismatch("query set shorter than L".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let d = params.f_at(l) - alpha;
        let inv = d.inv().map_err(|_| {
            Error::DegenerateEvaluationPoints(format!("f_{} equals the evaluation point", l + 1))
        })?;
        acc += inv * s.contract(&vs)?;
    }
    Ok(acc)
}

pub fn server_answer(
    params: &SchemeParams,
    storage: &StorageShare,
    queries: &[&QueryShare],
    cr: &CommonRandomness,
) -> Result<AnswerShare> {
    let n = storage.server;
    if n == 0 || n > params.servers() {
        return Err(Error::IndexOutOfRange {
            index: n,
            bound: params.servers(),
        });
    }
    if let Some(q) = queries.iter().find(|q| q.server != n) {
        return Err(Error::DimensionMismatch(format!(
            "query for server {} handed to server {n}",
            q.server
        )));
    }
    for (m, q) in queries.iter().enumerate() {
        if q.user != m + 1 {
            return Err(Error::DimensionMismatch(format!(
                "query from user {} in slot {}",
                q.user,
                m + 1
            )));
        }
    }
    let vecs: Vec<&[FieldVector]> = queries.iter().map(|q| q.vectors.as_slice()).collect();
    Ok(AnswerShare {
        server: n,
        value: answer_at(params, &storage.shares, &vecs, cr, params.alpha_at(n - 1))?,
    })
}

/// Solves the Cauchy-Vandermonde system: the first L entries are the
/// desired symbols, the remaining sum T + X are the aligned interference.
pub fn decode_all(params: &SchemeParams, answers: &[AnswerShare]) -> Result<Vec<FieldElement>> {
    if answers.len() != params.servers() {
        return Err(Error::DimensionMismatch(format!(
            "need {} answers, got {}",
            params.servers(),
            answers.len()
        )));
    }
    let mut a = vec![None; params.servers()];
    for ans in answers {
        let slot = ans
            .server
            .checked_sub(1)
            .and_then(|i| a.get_mut(i))
            .ok_or(Error::IndexOutOfRange {
                index: ans.server,
                bound: params.servers(),
            })?;
        if slot.replace(ans.value).is_some() {
            return Err(Error::DimensionMismatch(format!("two answers from server {}", ans.server)));
        }
    }
    let y = FieldVector::new(params.field(), a.into_iter().map(|v| v.expect("all slots filled")).collect())?;
    let c = cv_matrix(params.f(), params.alpha(), params.interference_dims())?;
    Ok(c.solve(&y)?.into_vec())
}

pub fn decode(params: &SchemeParams, answers: &[AnswerShare]) -> Result<Vec<FieldElement>> {
    let mut x = decode_all(params, answers)?;
    x.truncate(params.l());
    Ok(x)
}

/// Packs bytes into symbols of floor(log2 q) bits, least significant bit first.
pub fn pack_bytes(field: FieldSpec, bytes: &[u8]) -> Vec<FieldElement> {
    let bits = field.symbol_bits() as usize;
    let total = bytes.len() * 8;
    (0..total.div_ceil(bits))
        .map(|s| {
            let mut v = 0u64;
            for j in 0..bits {
                let pos = s * bits + j;
                if pos < total && (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                    v |= 1 << j;
                }
            }
            field.element(v)
        })
        .collect()
}

/// Inverse of [`pack_bytes`] for a known byte length.
pub fn unpack_bytes(field: FieldSpec, symbols: &[FieldElement], byte_len: usize) -> Vec<u8> {
    let bits = field.symbol_bits() as usize;
    let mut out = vec![0u8; byte_len];
    for pos in 0..(byte_len * 8).min(symbols.len() * bits) {
        if (symbols[pos / bits].value() >> (pos % bits)) & 1 == 1 {
            out[pos / 8] |= 1 << (pos % 8);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RetrievalOptions {
    /// Use zeroed common randomness (the ablation without server-side masking).
    pub without_common_randomness: bool,
    /// Adds one to the answer of `(block, server)` (0-based block, 1-based server).
    pub corrupt_answer: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRecord {
    pub block: usize,
    pub answers: Vec<AnswerShare>,
    pub decoded: Vec<FieldElement>,
}

/// Complete record of one retrieval session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub params: SchemeParams,
    pub master_seed: u64,
    pub thetas: Vec<usize>,
    pub common_randomness: bool,
    /// Symbols per message before padding.
    pub message_len: usize,
    /// `queries[m][n]`, reused by every block.
    pub queries: Vec<Vec<QueryShare>>,
    pub blocks: Vec<BlockRecord>,
    /// None when no plaintext was available for checking.
    pub verified: Option<bool>,
}

impl Transcript {
    /// Field symbols downloaded over the whole session.
    pub fn download_count(&self) -> usize {
        self.blocks.iter().map(|b| b.answers.len()).sum()
    }

    /// Desired symbols per downloaded symbol; None for an empty session.
    pub fn rate(&self) -> Option<BigRational> {
        let d = self.download_count();
        (d > 0).then(|| {
            BigRational::new(
                BigInt::from(self.blocks.len() * self.params.l()),
                BigInt::from(d),
            )
        })
    }

    /// Decoded blocks concatenated and trimmed to the message length.
    pub fn message(&self) -> Vec<FieldElement> {
        let mut out: Vec<FieldElement> = self.blocks.iter().flat_map(|b| b.decoded.iter().copied()).collect();
        out.truncate(self.message_len);
        out
    }

    pub fn ensure_verified(&self) -> Result<()> {
        match self.verified {
            Some(false) => Err(Error::VerificationFailed(
                "decoded message differs from the plaintext lookup".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Runs every block of the session with seeds derived from `seeds`.
/// Queries are generated once; storage noise and common randomness are
/// fresh for each block. The decoded message is compared against the
/// plaintext store.
pub fn retrieve(
    params: &SchemeParams,
    store: &MessageStore,
    thetas: &[usize],
    seeds: SeedSchedule,
    opts: RetrievalOptions,
) -> Result<Transcript> {
    if thetas.len() != params.users() {
        return Err(Error::DimensionMismatch(format!(
            "{} indices for {} users",
            thetas.len(),
            params.users()
        )));
    }
    let secrets = thetas
        .iter()
        .enumerate()
        .map(|(m, &theta)| gen_user_secret(params, m + 1, theta, &mut seeds.user(m + 1)))
        .collect::<Result<Vec<_>>>()?;
    let queries = secrets
        .iter()
        .map(|s| gen_queries(params, s))
        .collect::<Result<Vec<_>>>()?;

    let blocks = (0..store.block_count(params.l()))
        .map(|b| {
            let db = store.block(params, b)?;
            let storage = encode_storage(params, &db, &mut seeds.storage(b))?;
            let cr = if opts.without_common_randomness {
                CommonRandomness::zeroed(params)
            } else {
                CommonRandomness::draw(params, &mut seeds.common(b))
            };
            let mut answers = storage
                .par_iter()
                .map(|s| {
                    let qs: Vec<&QueryShare> = queries.iter().map(|q| &q[s.server - 1]).collect();
                    server_answer(params, s, &qs, &cr)
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some((cb, cn)) = opts.corrupt_answer {
                if cb == b {
                    if let Some(a) = answers.iter_mut().find(|a| a.server == cn) {
                        a.value += params.field().one();
                    }
                }
            }
            Ok(BlockRecord {
                block: b,
                decoded: decode(params, &answers)?,
                answers,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut transcript = Transcript {
        params: params.clone(),
        master_seed: seeds.master,
        thetas: thetas.to_vec(),
        common_randomness: !opts.without_common_randomness,
        message_len: store.message_len(),
        queries,
        blocks,
        verified: None,
    };
    transcript.verified = Some(transcript.message() == store.message(thetas)?);
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{achievable_rate, CandidateParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params(n: usize, k: &[usize], t: &[usize], x: usize, q: u64) -> SchemeParams {
        CandidateParams::new(n, k, t, x, q).validate().unwrap()
    }

    fn all_thetas(k: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &km in k {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (1..=km).map(move |i| {
                        let mut v = p.clone();
                        v.push(i);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// One full block: returns (answers, desired + interference solve outputs).
    fn run_block(
        p: &SchemeParams,
        db: &MessageDatabase,
        thetas: &[usize],
        seed: u64,
        cr: Option<&CommonRandomness>,
    ) -> (Vec<AnswerShare>, Vec<FieldElement>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let storage = encode_storage(p, db, &mut rng).unwrap();
        let queries: Vec<Vec<QueryShare>> = thetas
            .iter()
            .enumerate()
            .map(|(m, &th)| gen_queries(p, &gen_user_secret(p, m + 1, th, &mut rng).unwrap()).unwrap())
            .collect();
        let drawn = CommonRandomness::draw(p, &mut rng);
        let cr = cr.unwrap_or(&drawn);
        let answers: Vec<AnswerShare> = storage
            .iter()
            .map(|s| {
                let qs: Vec<&QueryShare> = queries.iter().map(|q| &q[s.server - 1]).collect();
                server_answer(p, s, &qs, cr).unwrap()
            })
            .collect();
        let x = decode_all(p, &answers).unwrap();
        (answers, x)
    }

    #[test]
    fn decode_matches_lookup_exhaustively() {
        for p in [
            params(3, &[2, 3], &[1, 1], 0, 7),
            params(8, &[2, 2, 2], &[1, 1, 2], 2, 11),
        ] {
            for thetas in all_thetas(p.k()) {
                for seed in 0..20 {
                    let db = MessageDatabase::random(&p, &mut ChaCha20Rng::seed_from_u64(1000 + seed));
                    let (_, x) = run_block(&p, &db, &thetas, seed, None);
                    assert_eq!(&x[..p.l()], db.lookup(&thetas).unwrap().as_slice());
                }
            }
        }
    }

    #[test]
    fn replicated_storage_is_the_database() {
        let p = params(3, &[2, 3], &[1, 1], 0, 7);
        let db = MessageDatabase::random(&p, &mut ChaCha20Rng::seed_from_u64(1));
        for s in encode_storage(&p, &db, &mut ChaCha20Rng::seed_from_u64(2)).unwrap() {
            assert_eq!(s.shares, db.tensors());
        }
    }

    #[test]
    fn secure_storage_matches_share_polynomial() {
        let p = params(8, &[2, 2, 2], &[1, 1, 2], 2, 13);
        let db = MessageDatabase::random(&p, &mut ChaCha20Rng::seed_from_u64(1));
        let noise = StorageNoise::draw(&p, &mut ChaCha20Rng::seed_from_u64(2));
        let shares = encode_with_noise(&p, &db, &noise).unwrap();
        for s in &shares {
            let a = p.alpha_at(s.server - 1);
            for l in 0..2 {
                let d = p.f_at(l) - a;
                for idx in all_thetas(p.k()) {
                    let z = &noise.tensors()[l];
                    let want = db.tensors()[l].get(&idx).unwrap()
                        + d * z[0].get(&idx).unwrap()
                        + d * d * z[1].get(&idx).unwrap();
                    assert_eq!(s.shares[l].get(&idx).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn single_secure_share_is_uniform() {
        // X=1, L=1, one message: S_n = W + (f - alpha_n) Z^
        let p = params(3, &[1], &[1], 1, 5);
        assert_eq!(p.l(), 1);
        for w in 0..5 {
            let db = MessageDatabase::new(
                &p,
                vec![Tensor::from_elements(p.field(), &[1], vec![p.field().element(w)]).unwrap()],
            )
            .unwrap();
            let mut seen = [0; 5];
            for z in 0..5 {
                let noise = StorageNoise::from_tensors(vec![vec![
                    Tensor::from_elements(p.field(), &[1], vec![p.field().element(z)]).unwrap(),
                ]]);
                let s = encode_with_noise(&p, &db, &noise).unwrap();
                seen[s[0].shares[0].as_slice()[0].value() as usize] += 1;
            }
            assert_eq!(seen, [1; 5]);
        }
    }

    #[test]
    fn user_secret_shapes() {
        let p = params(3, &[2, 3], &[1, 1], 0, 7);
        let s = gen_user_secret(&p, 2, 3, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.noise.len(), 1);
        assert_eq!(s.noise[0].len(), 1);
        assert_eq!(s.noise[0][0].len(), 3);
        assert_eq!(s, gen_user_secret(&p, 2, 3, &mut ChaCha20Rng::seed_from_u64(0)).unwrap());
        assert!(matches!(
            gen_user_secret(&p, 1, 3, &mut ChaCha20Rng::seed_from_u64(0)),
            Err(Error::IndexOutOfRange { index: 3, bound: 2 })
        ));
        let p = params(5, &[3, 3], &[1, 2], 0, 11);
        let s = gen_user_secret(&p, 2, 1, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.noise.iter().map(Vec::len).sum::<usize>(), 4);
    }

    #[test]
    fn query_at_secret_point_is_basis_vector() {
        let p = params(5, &[3, 3], &[1, 2], 0, 11);
        let s = gen_user_secret(&p, 2, 2, &mut ChaCha20Rng::seed_from_u64(4)).unwrap();
        for l in 0..p.l() {
            let q = query_at(&p, &s, p.f_at(l)).unwrap();
            assert_eq!(q[l], FieldVector::basis(p.field(), 3, 2).unwrap());
        }
    }

    #[test]
    fn query_shares_follow_table() {
        let p = params(3, &[3, 3], &[1, 1], 0, 7);
        let s = gen_user_secret(&p, 1, 2, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let e = FieldVector::basis(p.field(), 3, 2).unwrap();
        for q in gen_queries(&p, &s).unwrap() {
            let d = p.f_at(0) - p.alpha_at(q.server - 1);
            assert_eq!(q.vectors[0], e.add(&s.noise[0][0].scale(d)).unwrap());
        }
    }

    #[test]
    fn summed_queries_share_summed_secrets() {
        let p = params(5, &[3, 3], &[1, 2], 0, 11);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = gen_user_secret(&p, 2, 1, &mut rng).unwrap();
        let b = gen_user_secret(&p, 2, 3, &mut rng).unwrap();
        let qa = gen_queries(&p, &a).unwrap();
        let qb = gen_queries(&p, &b).unwrap();
        let e_sum = FieldVector::basis(p.field(), 3, 1)
            .unwrap()
            .add(&FieldVector::basis(p.field(), 3, 3).unwrap())
            .unwrap();
        for n in 0..p.servers() {
            for l in 0..p.l() {
                let d = p.f_at(l) - p.alpha_at(n);
                let mut want = e_sum.clone();
                for t in 0..2 {
                    let z = a.noise[l][t].add(&b.noise[l][t]).unwrap();
                    want = want.add_scaled(&z, d.pow(t as u64 + 1)).unwrap();
                }
                assert_eq!(qa[n].vectors[l].add(&qb[n].vectors[l]).unwrap(), want);
            }
        }
    }

    #[test]
    fn common_randomness_lengths() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(CommonRandomness::draw(&params(3, &[2, 2], &[1, 1], 0, 7), &mut rng).z_tilde.len(), 2);
        let p = params(8, &[2, 2, 2], &[1, 1, 2], 2, 13);
        assert_eq!(CommonRandomness::draw(&p, &mut rng).z_tilde.len(), 6);
        let z = CommonRandomness::zeroed(&p);
        assert!(z.z_tilde.iter().all(|v| v.is_zero()));
        assert!(z.mask_at(p.alpha_at(3)).is_zero());
    }

    #[test]
    fn noiseless_answer_is_scaled_lookup() {
        let p = params(3, &[3, 3], &[1, 1], 0, 7);
        let db = MessageDatabase::random(&p, &mut ChaCha20Rng::seed_from_u64(3));
        let zero_secret = |m: usize, theta: usize| UserSecret {
            user: m,
            theta,
            noise: vec![vec![FieldVector::zeros(p.field(), 3)]],
        };
        let queries = [zero_secret(1, 2), zero_secret(2, 3)].map(|s| gen_queries(&p, &s).unwrap());
        let cr = CommonRandomness::zeroed(&p);
        for s in encode_storage(&p, &db, &mut ChaCha20Rng::seed_from_u64(0)).unwrap() {
            let qs: Vec<&QueryShare> = queries.iter().map(|q| &q[s.server - 1]).collect();
            let a = server_answer(&p, &s, &qs, &cr).unwrap();
            let inv = (p.f_at(0) - p.alpha_at(s.server - 1)).inv().unwrap();
            assert_eq!(a.value, inv * db.lookup(&[2, 3]).unwrap()[0]);
        }
    }

    #[test]
    fn two_user_answer_expansion() {
        // A_n = W(theta)/(f - alpha_n) + J_0 + alpha_n J_1
        let p = params(3, &[3, 3], &[1, 1], 0, 7);
        let db = MessageDatabase::random(&p, &mut ChaCha20Rng::seed_from_u64(8));
        let (answers, x) = run_block(&p, &db, &[3, 1], 77, None);
        for a in answers {
            let al = p.alpha_at(a.server - 1);
            assert_eq!(a.value, x[0] * (p.f_at(0) - al).inv().unwrap() + x[1] + al * x[2]);
        }
    }

    #[test]
    fn interference_moves_with_common_randomness() {
        let p = params(5, &[3, 3], &[1, 2], 0, 11);
        let db = MessageDatabase::random(&p, &mut ChaCha20Rng::seed_from_u64(2));
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let cr1 = CommonRandomness::draw(&p, &mut rng);
        let cr2 = CommonRandomness::draw(&p, &mut rng);
        assert_ne!(cr1, cr2);
        let (_, x1) = run_block(&p, &db, &[2, 2], 5, Some(&cr1));
        let (_, x2) = run_block(&p, &db, &[2, 2], 5, Some(&cr2));
        assert_eq!(x1[..2], x2[..2]);
        assert_ne!(x1[2..], x2[2..]);
        // the shift is exactly the difference of the masks
        for i in 0..3 {
            assert_eq!(x1[2 + i] - x2[2 + i], cr1.z_tilde[i] - cr2.z_tilde[i]);
        }
    }

    #[test]
    fn answers_are_linear_in_the_database() {
        let p = params(8, &[2, 2, 2], &[1, 1, 2], 2, 13);
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for _ in 0..10 {
            let w1 = MessageDatabase::random(&p, &mut rng);
            let w2 = MessageDatabase::random(&p, &mut rng);
            let sum = MessageDatabase::new(
                &p,
                w1.tensors().iter().zip(w2.tensors()).map(|(a, b)| a.add(b).unwrap()).collect(),
            )
            .unwrap();
            let zero_noise = StorageNoise::from_tensors(vec![vec![]; p.l()]);
            let cr = CommonRandomness::zeroed(&p);
            let secrets: Vec<UserSecret> = [1, 2, 1]
                .iter()
                .enumerate()
                .map(|(m, &th)| gen_user_secret(&p, m + 1, th, &mut rng).unwrap())
                .collect();
            let answer = |db: &MessageDatabase, n: usize| {
                let a = p.alpha_at(n);
                let s = storage_at(&p, db, &zero_noise, a).unwrap();
                let qs: Vec<Vec<FieldVector>> = secrets.iter().map(|s| query_at(&p, s, a).unwrap()).collect();
                let qr: Vec<&[FieldVector]> = qs.iter().map(Vec::as_slice).collect();
                answer_at(&p, &s, &qr, &cr, a).unwrap()
            };
            for n in 0..p.servers() {
                assert_eq!(answer(&sum, n), answer(&w1, n) + answer(&w2, n));
            }
        }
    }

    #[test]
    fn all_zero_database_decodes_to_zero() {
        let p = params(8, &[2, 2, 2], &[1, 1, 2], 2, 13);
        let db = MessageDatabase::zeros(&p);
        for seed in 0..5 {
            let (_, x) = run_block(&p, &db, &[2, 1, 2], seed, None);
            assert!(x[..2].iter().all(|v| v.is_zero()));
        }
    }

    #[test]
    fn any_n_answers_determine_a_fresh_point() {
        // evaluate the same session at alpha* = 12, outside f and alpha
        let p = params(8, &[2, 2, 2], &[1, 1, 2], 2, 13);
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        let db = MessageDatabase::random(&p, &mut rng);
        let noise = StorageNoise::draw(&p, &mut rng);
        let secrets: Vec<UserSecret> = [2, 2, 1]
            .iter()
            .enumerate()
            .map(|(m, &th)| gen_user_secret(&p, m + 1, th, &mut rng).unwrap())
            .collect();
        let cr = CommonRandomness::draw(&p, &mut rng);
        let eval = |a: FieldElement| {
            let s = storage_at(&p, &db, &noise, a).unwrap();
            let qs: Vec<Vec<FieldVector>> = secrets.iter().map(|s| query_at(&p, s, a).unwrap()).collect();
            let qr: Vec<&[FieldVector]> = qs.iter().map(Vec::as_slice).collect();
            answer_at(&p, &s, &qr, &cr, a).unwrap()
        };
        let answers: Vec<AnswerShare> = (0..p.servers())
            .map(|n| AnswerShare {
                server: n + 1,
                value: eval(p.alpha_at(n)),
            })
            .collect();
        let x = decode_all(&p, &answers).unwrap();
        let fresh = p.field().element(12);
        let row = crate::tensor::cv_row(p.f().as_slice(), fresh, p.interference_dims()).unwrap();
        let predicted: FieldElement = row.iter().zip(&x).map(|(c, v)| *c * *v).sum();
        assert_eq!(predicted, eval(fresh));
    }

    #[test]
    fn decode_rejects_malformed_answer_sets() {
        let p = params(3, &[2, 2], &[1, 1], 0, 7);
        let a = |s| AnswerShare {
            server: s,
            value: p.field().one(),
        };
        assert!(decode(&p, &[a(1), a(2)]).is_err());
        assert!(decode(&p, &[a(1), a(2), a(2)]).is_err());
        assert!(decode(&p, &[a(1), a(2), a(4)]).is_err());
        assert!(decode(&p, &[a(3), a(1), a(2)]).is_ok());
    }

    #[test]
    fn multi_block_session_accounts_downloads() {
        let p = params(5, &[3, 3], &[1, 2], 0, 11);
        let store = MessageStore::random(p.field(), p.k(), 10, &mut ChaCha20Rng::seed_from_u64(1));
        let t = retrieve(&p, &store, &[3, 2], SeedSchedule::new(7), RetrievalOptions::default()).unwrap();
        assert_eq!(t.blocks.len(), 5);
        assert_eq!(t.download_count(), 25);
        assert_eq!(t.rate().unwrap(), achievable_rate(&p));
        assert_eq!(t.verified, Some(true));
        assert_eq!(t.message(), store.message(&[3, 2]).unwrap());

        let odd = MessageStore::random(p.field(), p.k(), 7, &mut ChaCha20Rng::seed_from_u64(2));
        let t = retrieve(&p, &odd, &[1, 1], SeedSchedule::new(7), RetrievalOptions::default()).unwrap();
        assert_eq!(t.blocks.len(), 4);
        assert_eq!(t.message().len(), 7);
        assert_eq!(t.verified, Some(true));
    }

    #[test]
    fn empty_and_corrupted_sessions() {
        let p = params(3, &[2, 2], &[1, 1], 0, 7);
        let empty = MessageStore::new(p.field(), p.k(), vec![vec![]; 4]).unwrap();
        let t = retrieve(&p, &empty, &[1, 2], SeedSchedule::new(0), RetrievalOptions::default()).unwrap();
        assert_eq!(t.download_count(), 0);
        assert_eq!(t.rate(), None);
        assert!(t.ensure_verified().is_ok());

        let store = MessageStore::random(p.field(), p.k(), 3, &mut ChaCha20Rng::seed_from_u64(5));
        let opts = RetrievalOptions {
            corrupt_answer: Some((1, 2)),
            ..Default::default()
        };
        let t = retrieve(&p, &store, &[2, 2], SeedSchedule::new(0), opts).unwrap();
        assert!(matches!(t.ensure_verified(), Err(Error::VerificationFailed(_))));
    }

    #[test]
    fn sessions_are_reproducible() {
        let p = params(8, &[2, 2, 2], &[1, 1, 2], 2, 13);
        let store = MessageStore::random(p.field(), p.k(), 6, &mut ChaCha20Rng::seed_from_u64(1));
        let run = || retrieve(&p, &store, &[1, 2, 2], SeedSchedule::new(11), RetrievalOptions::default()).unwrap();
        assert_eq!(run(), run());
        let other = retrieve(&p, &store, &[1, 2, 2], SeedSchedule::new(12), RetrievalOptions::default()).unwrap();
        assert_ne!(run().blocks[0].answers, other.blocks[0].answers);
    }

    #[test]
    fn store_rejects_ragged_messages() {
        let f = FieldSpec::new(7).unwrap();
        assert!(MessageStore::new(f, &[2], vec![vec![f.one()], vec![]]).is_err());
        assert!(MessageStore::new(f, &[2], vec![vec![f.one()]]).is_err());
    }

    #[test]
    fn byte_packing_examples() {
        let f7 = FieldSpec::new(7).unwrap();
        // 2 bits per symbol: 0b1110_0100 -> 0, 1, 2, 3
        let s = pack_bytes(f7, &[0b1110_0100]);
        assert_eq!(s.iter().map(|e| e.value()).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(unpack_bytes(f7, &s, 1), vec![0b1110_0100]);
        assert!(pack_bytes(f7, &[]).is_empty());
    }

    proptest! {
        #[test]
        fn byte_packing_round_trips(bytes in prop::collection::vec(any::<u8>(), 0..64), q in prop::sample::select(vec![2u64, 3, 7, 11, 257, 65537, 2_147_483_647])) {
            let f = FieldSpec::new(q).unwrap();
            let s = pack_bytes(f, &bytes);
            prop_assert_eq!(s.len(), (bytes.len() * 8).div_ceil(f.symbol_bits() as usize));
            prop_assert_eq!(unpack_bytes(f, &s, bytes.len()), bytes);
        }
    }
}
