//! Dense vectors, matrices and M-way tensors over F_q.
//!
//! Tensors are stored row-major (last mode varies fastest). Mode numbers
//! and the index tuples accepted by [`Tensor::get`] are 1-based; slices
//! returned by `as_slice` are plain 0-based storage.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldSpec};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldVector {
    spec: FieldSpec,
    data: Vec<FieldElement>,
}

impl FieldVector {
    pub fn new(spec: FieldSpec, data: Vec<FieldElement>) -> Result<Self> {
        for x in &data {
            if x.spec() != spec {
                return Err(Error::FieldMismatch {
                    left: spec.modulus(),
                    right: x.spec().modulus(),
                });
            }
        }
        Ok(Self { spec, data })
    }

    pub fn from_values(spec: FieldSpec, values: &[u64]) -> Self {
        Self {
            spec,
            data: values.iter().map(|&v| spec.element(v)).collect(),
        }
    }

    pub fn zeros(spec: FieldSpec, len: usize) -> Self {
        Self {
            spec,
            data: vec![spec.zero(); len],
        }
    }

    /// `e_K(theta)`: the theta-th column of the K x K identity (1-based).
    pub fn basis(spec: FieldSpec, len: usize, theta: usize) -> Result<Self> {
        if theta == 0 || theta > len {
            return Err(Error::IndexOutOfRange {
                index: theta,
                bound: len,
            });
        }
        let mut v = Self::zeros(spec, len);
        v.data[theta - 1] = spec.one();
        Ok(v)
    }

    pub fn random<R: RngCore + ?Sized>(spec: FieldSpec, len: usize, rng: &mut R) -> Self {
        Self {
            spec,
            data: (0..len).map(|_| spec.sample(rng)).collect(),
        }
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[FieldElement] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<FieldElement> {
        self.data
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::FieldMismatch {
                left: self.spec.modulus(),
                right: other.spec.modulus(),
            });
        }
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "vector lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            spec: self.spec,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect(),
        })
    }

    pub fn scale(&self, c: FieldElement) -> Self {
        Self {
            spec: self.spec,
            data: self.data.iter().map(|a| *a * c).collect(),
        }
    }

    /// `self + c * other`
    pub fn add_scaled(&self, other: &Self, c: FieldElement) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            spec: self.spec,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a + c * *b)
                .collect(),
        })
    }

    pub fn dot(&self, other: &Self) -> Result<FieldElement> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(self.spec.zero(), |acc, (a, b)| acc + *a * *b))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldMatrix {
    spec: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl FieldMatrix {
    pub fn from_rows(spec: FieldSpec, rows: Vec<Vec<FieldElement>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch("ragged matrix rows".into()));
            }
            data.extend(row);
        }
        if let Some(x) = data.iter().find(|x| x.spec() != spec) {
            return Err(Error::FieldMismatch {
                left: spec.modulus(),
                right: x.spec().modulus(),
            });
        }
        Ok(Self {
            spec,
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn identity(spec: FieldSpec, n: usize) -> Self {
        let mut data = vec![spec.zero(); n * n];
        for i in 0..n {
            data[i * n + i] = spec.one();
        }
        Self {
            spec,
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    /// 0-based entry access.
    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[FieldElement] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &FieldVector) -> Result<FieldVector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let data = (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x.as_slice())
                    .fold(self.spec.zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect();
        FieldVector::new(self.spec, data)
    }

    /// Row echelon form in place; returns the rank.
    fn eliminate(data: &mut [FieldElement], rows: usize, cols: usize, pivot_cols: usize) -> usize {
        let mut rank = 0;
        for col in 0..pivot_cols {
            let Some(p) = (rank..rows).find(|&r| !data[r * cols + col].is_zero()) else {
                continue;
            };
            if p != rank {
                for c in 0..cols {
                    data.swap(p * cols + c, rank * cols + c);
                }
            }
            let inv = data[rank * cols + col].inv().expect("pivot is nonzero");
            for c in col..cols {
                data[rank * cols + c] *= inv;
            }
            for r in 0..rows {
                if r == rank {
                    continue;
                }
                let factor = data[r * cols + col];
                if factor.is_zero() {
                    continue;
                }
                for c in col..cols {
                    let sub = factor * data[rank * cols + c];
                    data[r * cols + c] -= sub;
                }
            }
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }

    pub fn rank(&self) -> usize {
        let mut data = self.data.clone();
        Self::eliminate(&mut data, self.rows, self.cols, self.cols)
    }

    pub fn is_invertible(&self) -> bool {
        self.rows == self.cols && self.rank() == self.rows
    }

    /// Solves `self * x = y` by Gauss-Jordan elimination.
    pub fn solve(&self, y: &FieldVector) -> Result<FieldVector> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "solve needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has length {}, expected {}",
                y.len(),
                self.rows
            )));
        }
        if y.spec() != self.spec {
            return Err(Error::FieldMismatch {
                left: self.spec.modulus(),
                right: y.spec().modulus(),
            });
        }
        let n = self.rows;
        let w = n + 1;
        let mut aug = Vec::with_capacity(n * w);
        for r in 0..n {
            aug.extend_from_slice(self.row(r));
            aug.push(y.as_slice()[r]);
        }
        if Self::eliminate(&mut aug, n, w, n) < n {
            return Err(Error::SingularMatrix);
        }
        FieldVector::new(self.spec, (0..n).map(|r| aug[r * w + n]).collect())
    }
}

/// One row of the Cauchy-Vandermonde system for evaluation point `alpha`:
/// `(1/(f_1 - alpha), ..., 1/(f_L - alpha), 1, alpha, ..., alpha^(D-1))`.
pub fn cv_row(f: &[FieldElement], alpha: FieldElement, interference_dims: usize) -> Result<Vec<FieldElement>> {
    let spec = alpha.spec();
    let mut row = Vec::with_capacity(f.len() + interference_dims);
    for &fl in f {
        let diff = fl.try_sub(alpha)?;
        row.push(diff.inv().map_err(|_| {
            Error::DegenerateEvaluationPoints(format!("f = alpha = {}", alpha.value()))
        })?);
    }
    let mut p = spec.one();
    for _ in 0..interference_dims {
        row.push(p);
        p *= alpha;
    }
    Ok(row)
}

/// The N x N Cauchy-Vandermonde matrix with N = L + D.
pub fn cv_matrix(f: &FieldVector, alpha: &FieldVector, interference_dims: usize) -> Result<FieldMatrix> {
    let (l, n) = (f.len(), alpha.len());
    if l + interference_dims != n {
        return Err(Error::DimensionMismatch(format!(
            "L + D = {} + {} but N = {n}",
            l, interference_dims
        )));
    }
    if f.spec() != alpha.spec() {
        return Err(Error::FieldMismatch {
            left: f.spec().modulus(),
            right: alpha.spec().modulus(),
        });
    }
    let mut all: Vec<u64> = f.as_slice().iter().chain(alpha.as_slice()).map(|x| x.value()).collect();
    all.sort_unstable();
    if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DegenerateEvaluationPoints(format!(
            "value {} appears twice",
            w[0]
        )));
    }
    let rows = alpha
        .as_slice()
        .iter()
        .map(|&a| cv_row(f.as_slice(), a, interference_dims))
        .collect::<Result<Vec<_>>>()?;
    FieldMatrix::from_rows(f.spec(), rows)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tensor {
    spec: FieldSpec,
    dims: Vec<usize>,
    data: Vec<FieldElement>,
}

impl Tensor {
    pub fn zeros(spec: FieldSpec, dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            spec,
            dims: dims.to_vec(),
            data: vec![spec.zero(); dims.iter().product()],
        })
    }

    pub fn from_elements(spec: FieldSpec, dims: &[usize], data: Vec<FieldElement>) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{} elements for dims {:?}",
                data.len(),
                dims
            )));
        }
        if let Some(x) = data.iter().find(|x| x.spec() != spec) {
            return Err(Error::FieldMismatch {
                left: spec.modulus(),
                right: x.spec().modulus(),
            });
        }
        Ok(Self {
            spec,
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds a tensor from a function of the 1-based index tuple.
    pub fn from_fn(
        spec: FieldSpec,
        dims: &[usize],
        mut f: impl FnMut(&[usize]) -> FieldElement,
    ) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        let mut idx = vec![1usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for m in (0..dims.len()).rev() {
                if idx[m] < dims[m] {
                    idx[m] += 1;
                    break;
                }
                idx[m] = 1;
            }
        }
        Self::from_elements(spec, dims, data)
    }

    pub fn random<R: RngCore + ?Sized>(spec: FieldSpec, dims: &[usize], rng: &mut R) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        Ok(Self {
            spec,
            dims: dims.to_vec(),
            data: (0..len).map(|_| spec.sample(rng)).collect(),
        })
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[FieldElement] {
        &self.data
    }

    /// Row-major offset of a 1-based index tuple.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "index of order {} into tensor of order {}",
                index.len(),
                self.dims.len()
            )));
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i == 0 || i > d {
                return Err(Error::IndexOutOfRange { index: i, bound: d });
            }
            off = off * d + (i - 1);
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<FieldElement> {
        Ok(self.data[self.offset(index)?])
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::FieldMismatch {
                left: self.spec.modulus(),
                right: other.spec.modulus(),
            });
        }
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, self.spec.one())
    }

    /// `self + c * other`
    pub fn add_scaled(&self, other: &Self, c: FieldElement) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            spec: self.spec,
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a + c * *b)
                .collect(),
        })
    }

    /// Mode-m tensor-vector product `self x_m b`. The result keeps order M
    /// with mode m collapsed to extent 1:
    /// `C(k_1..1..k_M) = sum_{k_m} A(k_1..k_m..k_M) * b(k_m)`.
    pub fn mode_mul(&self, mode: usize, b: &FieldVector) -> Result<Tensor> {
        if mode == 0 || mode > self.dims.len() {
            return Err(Error::IndexOutOfRange {
                index: mode,
                bound: self.dims.len(),
            });
        }
        let m = mode - 1;
        let km = self.dims[m];
        if b.len() != km {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} extent {km} but vector length {}",
                b.len()
            )));
        }
        if b.spec() != self.spec {
            return Err(Error::FieldMismatch {
                left: self.spec.modulus(),
                right: b.spec().modulus(),
            });
        }
        let outer: usize = self.dims[..m].iter().product();
        let inner: usize = self.dims[m + 1..].iter().product();
        let bv = b.as_slice();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = self.spec.zero();
                for (k, &bk) in bv.iter().enumerate() {
                    acc += self.data[(o * km + k) * inner + i] * bk;
                }
                out.push(acc);
            }
        }
        let mut dims = self.dims.clone();
        dims[m] = 1;
        Ok(Tensor {
            spec: self.spec,
            dims,
            data: out,
        })
    }

    /// `self x_1 v_1 x_2 v_2 ... x_M v_M`, a scalar.
    pub fn contract(&self, vectors: &[&FieldVector]) -> Result<FieldElement> {
        if vectors.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} vectors for a tensor of order {}",
                vectors.len(),
                self.dims.len()
            )));
        }
        let mut t = std::borrow::Cow::Borrowed(self);
        for (m, v) in vectors.iter().enumerate() {
            t = std::borrow::Cow::Owned(t.mode_mul(m + 1, v)?);
        }
        debug_assert_eq!(t.data.len(), 1);
        Ok(t.data[0])
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!(
            "tensor extents must be positive, got {dims:?}"
        )));
    }
    Ok(())
}
