//! Dense complex morphisms between ordered lists of tensor factors.
//!
//! A [`WireType`] is a flat list of factor dimensions; the empty list is the
//! monoidal unit. A [`Morphism`] is a complex matrix together with its domain
//! and codomain wire types. Multi-indices are mixed-radix and big-endian (the
//! first factor is the most significant digit); matrices are indexed with the
//! codomain multi-index as row and the domain multi-index as column.
//!
//! Associators and unitors are identities because objects are flat factor
//! lists, so tensoring is plain concatenation plus a Kronecker product.

use std::fmt;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Absolute tolerance on the max-entry norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs_tol: f64,
}

impl Tolerance {
    pub const DEFAULT: Tolerance = Tolerance { abs_tol: 1e-9 };

    pub fn new(abs_tol: f64) -> Result<Self> {
        if !abs_tol.is_finite() || abs_tol < 0.0 {
            return Err(Error::Invalid(format!("tolerance must be finite and >= 0, got {abs_tol}")));
        }
        Ok(Tolerance { abs_tol })
    }

    /// Tolerance scaled by a dimension, used where perturbations grow with size.
    pub fn scaled(self, dim: usize) -> f64 {
        self.abs_tol * dim.max(1) as f64
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// An ordered list of tensor factors. Equality compares dimensions only.
#[derive(Clone, Debug, Default, Eq)]
pub struct WireType {
    factors: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl PartialEq for WireType {
    fn eq(&self, other: &Self) -> bool {
        self.factors == other.factors
    }
}

impl Hash for WireType {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.factors.hash(state);
    }
}

impl WireType {
    /// Panics on a zero dimension; use [`WireType::try_new`] for untrusted input.
    pub fn new(factors: impl Into<Vec<usize>>) -> Self {
        Self::try_new(factors).expect("wire dimensions must be positive")
    }

    pub fn try_new(factors: impl Into<Vec<usize>>) -> Result<Self> {
        let factors = factors.into();
        if factors.contains(&0) {
            return Err(Error::ZeroDimension);
        }
        Ok(WireType { factors, labels: None })
    }

    pub fn unit() -> Self {
        WireType::default()
    }

    pub fn qudit(d: usize) -> Self {
        WireType::new(vec![d])
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.factors.len() {
            return Err(Error::Invalid(format!(
                "{} labels for {} factors",
                labels.len(),
                self.factors.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_unit(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn total(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn concat(&self, other: &WireType) -> WireType {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        WireType { factors, labels }
    }

    pub fn concat_all<'a>(parts: impl IntoIterator<Item = &'a WireType>) -> WireType {
        parts
            .into_iter()
            .fold(WireType::unit(), |acc, w| acc.concat(w))
    }

    /// The factors at positions `range`, as a new wire type.
    pub fn slice(&self, range: std::ops::Range<usize>) -> WireType {
        WireType {
            factors: self.factors[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    /// Reorders factors so that new position `k` holds old factor `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<WireType> {
        check_permutation(perm, self.len())?;
        Ok(WireType {
            factors: perm.iter().map(|&p| self.factors[p]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| perm.iter().map(|&p| l[p].clone()).collect()),
        })
    }
}

impl Serialize for WireType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.factors.serialize(s)
    }
}

impl<'de> Deserialize<'de> for WireType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let factors = Vec::<usize>::deserialize(d)?;
        WireType::try_new(factors).map_err(serde::de::Error::custom)
    }
}

impl From<Vec<usize>> for WireType {
    fn from(v: Vec<usize>) -> Self {
        WireType::new(v)
    }
}

impl From<&[usize]> for WireType {
    fn from(v: &[usize]) -> Self {
        WireType::new(v.to_vec())
    }
}

impl fmt::Display for WireType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.factors)
    }
}

pub(crate) fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    let bad = || Error::BadPermutation { perm: perm.to_vec(), len };
    if perm.len() != len {
        return Err(bad());
    }
    for &p in perm {
        if p >= len || seen[p] {
            return Err(bad());
        }
        seen[p] = true;
    }
    Ok(())
}

/// A permutation listing `front` first (in the given order) and the remaining
/// indices after it in ascending order; also returns the remaining indices.
pub fn bring_to_front(front: &[usize], len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut used = vec![false; len];
    for &k in front {
        if k >= len {
            return Err(Error::FactorOutOfRange { index: k, len });
        }
        if used[k] {
            return Err(Error::BadPermutation { perm: front.to_vec(), len });
        }
        used[k] = true;
    }
    let rest: Vec<usize> = (0..len).filter(|&k| !used[k]).collect();
    let perm = front.iter().copied().chain(rest.iter().copied()).collect();
    Ok((perm, rest))
}

/// Expands a permutation of contiguous blocks (with `sizes` factors each)
/// into a factor-level permutation: new block `k` is old block `order[k]`.
pub fn block_permutation(sizes: &[usize], order: &[usize]) -> Vec<usize> {
    let mut starts = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for &s in sizes {
        starts.push(acc);
        acc += s;
    }
    order
        .iter()
        .flat_map(|&b| starts[b]..starts[b] + sizes[b])
        .collect()
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Big-endian strides: the last factor varies fastest.
pub(crate) fn strides(factors: &[usize]) -> Vec<usize> {
    let mut s = vec![1; factors.len()];
    for k in (0..factors.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * factors[k + 1];
    }
    s
}

/// Flat offsets of every multi-index over `factors`, each digit weighted by
/// the matching entry of `weights`.
fn weighted_offsets(factors: &[usize], weights: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for (&d, &w) in factors.iter().zip(weights) {
        let mut next = Vec::with_capacity(out.len() * d);
        for &base in &out {
            for a in 0..d {
                next.push(base + a * w);
            }
        }
        out = next;
    }
    out
}

/// For each flat index of the permuted layout, the flat index in the original.
fn permutation_index_map(factors: &[usize], perm: &[usize]) -> Vec<usize> {
    let old = strides(factors);
    let new_factors: Vec<usize> = perm.iter().map(|&p| factors[p]).collect();
    let weights: Vec<usize> = perm.iter().map(|&p| old[p]).collect();
    weighted_offsets(&new_factors, &weights)
}

/// A linear map between finite-dimensional Hilbert spaces with typed wires.
#[derive(Clone, Debug)]
pub struct Morphism {
    dom: WireType,
    cod: WireType,
    mat: Mat,
}

impl PartialEq for Morphism {
    fn eq(&self, other: &Self) -> bool {
        self.dom == other.dom && self.cod == other.cod && self.mat == other.mat
    }
}

impl Morphism {
    pub fn new(dom: WireType, cod: WireType, mat: Mat) -> Result<Self> {
        if mat.nrows() != cod.total() || mat.ncols() != dom.total() {
            return Err(Error::Shape {
                rows: mat.nrows(),
                cols: mat.ncols(),
                cod_total: cod.total(),
                dom_total: dom.total(),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Morphism { dom, cod, mat })
    }

    /// Skips validation; callers guarantee the shape.
    pub(crate) fn from_parts(dom: WireType, cod: WireType, mat: Mat) -> Self {
        debug_assert_eq!(mat.nrows(), cod.total());
        debug_assert_eq!(mat.ncols(), dom.total());
        Morphism { dom, cod, mat }
    }

    /// Builds a morphism from row-major entries.
    pub fn from_rows(dom: WireType, cod: WireType, entries: &[C64]) -> Result<Self> {
        let (r, c) = (cod.total(), dom.total());
        if entries.len() != r * c {
            return Err(Error::Shape { rows: entries.len(), cols: 1, cod_total: r, dom_total: c });
        }
        Morphism::new(dom, cod, Mat::from_row_slice(r, c, entries))
    }

    /// Builds an endomorphism on `w` from real row-major entries.
    pub fn real(w: &WireType, entries: &[f64]) -> Result<Self> {
        let e: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Morphism::from_rows(w.clone(), w.clone(), &e)
    }

    pub fn dom(&self) -> &WireType {
        &self.dom
    }

    pub fn cod(&self) -> &WireType {
        &self.cod
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn identity(w: &WireType) -> Self {
        let n = w.total();
        Morphism::from_parts(w.clone(), w.clone(), Mat::identity(n, n))
    }

    pub fn zero(dom: &WireType, cod: &WireType) -> Self {
        Morphism::from_parts(dom.clone(), cod.clone(), Mat::zeros(cod.total(), dom.total()))
    }

    pub fn scalar(z: C64) -> Self {
        Morphism::from_parts(WireType::unit(), WireType::unit(), Mat::from_element(1, 1, z))
    }

    /// Computational basis ket `|index⟩` as a state `I → w`.
    pub fn ket(w: &WireType, index: usize) -> Result<Self> {
        if index >= w.total() {
            return Err(Error::Invalid(format!("basis index {index} out of range for {w}")));
        }
        let mut m = Mat::zeros(w.total(), 1);
        m[(index, 0)] = ONE;
        Ok(Morphism::from_parts(WireType::unit(), w.clone(), m))
    }

    /// `self ∘ f`.
    pub fn compose(&self, f: &Morphism) -> Result<Morphism> {
        if f.cod != self.dom {
            return Err(Error::TypeMismatch {
                context: "compose",
                expected: self.dom.factors.clone(),
                found: f.cod.factors.clone(),
            });
        }
        Ok(Morphism::from_parts(f.dom.clone(), self.cod.clone(), &self.mat * &f.mat))
    }

    /// Kronecker product, `self`'s factors first.
    pub fn tensor(&self, g: &Morphism) -> Morphism {
        Morphism::from_parts(
            self.dom.concat(&g.dom),
            self.cod.concat(&g.cod),
            self.mat.kronecker(&g.mat),
        )
    }

    pub fn tensor_all<'a>(parts: impl IntoIterator<Item = &'a Morphism>) -> Morphism {
        parts
            .into_iter()
            .fold(Morphism::scalar(ONE), |acc, m| acc.tensor(m))
    }

    pub fn dagger(&self) -> Morphism {
        Morphism::from_parts(self.cod.clone(), self.dom.clone(), self.mat.adjoint())
    }

    /// Entrywise complex conjugate.
    pub fn conjugate(&self) -> Morphism {
        Morphism::from_parts(self.dom.clone(), self.cod.clone(), self.mat.conjugate())
    }

    pub fn transpose(&self) -> Morphism {
        Morphism::from_parts(self.cod.clone(), self.dom.clone(), self.mat.transpose())
    }

    pub fn scale(&self, z: C64) -> Morphism {
        Morphism::from_parts(self.dom.clone(), self.cod.clone(), &self.mat * z)
    }

    pub fn add(&self, other: &Morphism) -> Result<Morphism> {
        self.check_same_type(other, "add")?;
        Ok(Morphism::from_parts(self.dom.clone(), self.cod.clone(), &self.mat + &other.mat))
    }

    pub fn sub(&self, other: &Morphism) -> Result<Morphism> {
        self.check_same_type(other, "sub")?;
        Ok(Morphism::from_parts(self.dom.clone(), self.cod.clone(), &self.mat - &other.mat))
    }

    fn check_same_type(&self, other: &Morphism, context: &'static str) -> Result<()> {
        if self.dom != other.dom {
            return Err(Error::TypeMismatch {
                context,
                expected: self.dom.factors.clone(),
                found: other.dom.factors.clone(),
            });
        }
        if self.cod != other.cod {
            return Err(Error::TypeMismatch {
                context,
                expected: self.cod.factors.clone(),
                found: other.cod.factors.clone(),
            });
        }
        Ok(())
    }

    /// The symmetry `a ⊗ b → b ⊗ a`.
    pub fn braid(a: &WireType, b: &WireType) -> Morphism {
        let n_a = a.len();
        let n_b = b.len();
        let perm: Vec<usize> = (n_a..n_a + n_b).chain(0..n_a).collect();
        let dom = a.concat(b);
        Morphism::identity(&dom)
            .permute_factors(&(0..n_a + n_b).collect::<Vec<_>>(), &perm)
            .expect("block permutation is valid")
    }

    /// Reorders domain and codomain factors. New domain factor `k` is old
    /// domain factor `in_perm[k]`, and likewise for the codomain.
    pub fn permute_factors(&self, in_perm: &[usize], out_perm: &[usize]) -> Result<Morphism> {
        check_permutation(in_perm, self.dom.len())?;
        check_permutation(out_perm, self.cod.len())?;
        let rows = permutation_index_map(&self.cod.factors, out_perm);
        let cols = permutation_index_map(&self.dom.factors, in_perm);
        let mat = Mat::from_fn(rows.len(), cols.len(), |r, c| self.mat[(rows[r], cols[c])]);
        Ok(Morphism::from_parts(
            self.dom.permuted(in_perm)?,
            self.cod.permuted(out_perm)?,
            mat,
        ))
    }

    /// Block-level [`Morphism::permute_factors`]: the domain is split into
    /// contiguous blocks of `dom_sizes` factors and reassembled as
    /// `dom_order`, likewise for the codomain.
    pub fn reorder_blocks(
        &self,
        dom_sizes: &[usize],
        dom_order: &[usize],
        cod_sizes: &[usize],
        cod_order: &[usize],
    ) -> Result<Morphism> {
        self.permute_factors(
            &block_permutation(dom_sizes, dom_order),
            &block_permutation(cod_sizes, cod_order),
        )
    }

    pub fn permute_dom(&self, in_perm: &[usize]) -> Result<Morphism> {
        let id: Vec<usize> = (0..self.cod.len()).collect();
        self.permute_factors(in_perm, &id)
    }

    pub fn permute_cod(&self, out_perm: &[usize]) -> Result<Morphism> {
        let id: Vec<usize> = (0..self.dom.len()).collect();
        self.permute_factors(&id, out_perm)
    }

    /// The unnormalized maximally entangled state `Σ_i |i⟩|i⟩ : I → w ⊗ w`.
    pub fn cup(w: &WireType) -> Morphism {
        let n = w.total();
        let mut m = Mat::zeros(n * n, 1);
        for i in 0..n {
            m[(i * n + i, 0)] = ONE;
        }
        Morphism::from_parts(WireType::unit(), w.concat(w), m)
    }

    /// The transpose of [`Morphism::cup`], an effect `w ⊗ w → I`.
    pub fn cap(w: &WireType) -> Morphism {
        Morphism::cup(w).transpose()
    }

    /// Feeds output factor `out_factor` back into input factor `in_factor`,
    /// summing over the shared index.
    pub fn contract_wire(&self, out_factor: usize, in_factor: usize) -> Result<Morphism> {
        self.contract_pairs(&[(out_factor, in_factor)])
    }

    /// Simultaneous contraction of several (output factor, input factor) pairs.
    pub fn contract_pairs(&self, pairs: &[(usize, usize)]) -> Result<Morphism> {
        let (cod, dom) = (&self.cod.factors, &self.dom.factors);
        let mut out_used = vec![false; cod.len()];
        let mut in_used = vec![false; dom.len()];
        for &(o, i) in pairs {
            if o >= cod.len() {
                return Err(Error::FactorOutOfRange { index: o, len: cod.len() });
            }
            if i >= dom.len() {
                return Err(Error::FactorOutOfRange { index: i, len: dom.len() });
            }
            if out_used[o] || in_used[i] {
                return Err(Error::Invalid("factor contracted twice".into()));
            }
            if cod[o] != dom[i] {
                return Err(Error::DimensionMismatch { out_dim: cod[o], in_dim: dom[i] });
            }
            out_used[o] = true;
            in_used[i] = true;
        }
        let out_strides = strides(cod);
        let in_strides = strides(dom);
        let keep_out: Vec<usize> = (0..cod.len()).filter(|&k| !out_used[k]).collect();
        let keep_in: Vec<usize> = (0..dom.len()).filter(|&k| !in_used[k]).collect();

        let row_base = weighted_offsets(
            &keep_out.iter().map(|&k| cod[k]).collect::<Vec<_>>(),
            &keep_out.iter().map(|&k| out_strides[k]).collect::<Vec<_>>(),
        );
        let col_base = weighted_offsets(
            &keep_in.iter().map(|&k| dom[k]).collect::<Vec<_>>(),
            &keep_in.iter().map(|&k| in_strides[k]).collect::<Vec<_>>(),
        );
        let loop_dims: Vec<usize> = pairs.iter().map(|&(o, _)| cod[o]).collect();
        let loop_rows = weighted_offsets(
            &loop_dims,
            &pairs.iter().map(|&(o, _)| out_strides[o]).collect::<Vec<_>>(),
        );
        let loop_cols = weighted_offsets(
            &loop_dims,
            &pairs.iter().map(|&(_, i)| in_strides[i]).collect::<Vec<_>>(),
        );

        let mat = Mat::from_fn(row_base.len(), col_base.len(), |r, c| {
            loop_rows
                .iter()
                .zip(&loop_cols)
                .map(|(&lr, &lc)| self.mat[(row_base[r] + lr, col_base[c] + lc)])
                .sum()
        });
        let new_cod = WireType::new(keep_out.iter().map(|&k| cod[k]).collect::<Vec<_>>());
        let new_dom = WireType::new(keep_in.iter().map(|&k| dom[k]).collect::<Vec<_>>());
        Ok(Morphism::from_parts(new_dom, new_cod, mat))
    }

    /// `self ∘ (op on the domain factors `at`)`. `op` must map its domain onto
    /// exactly the selected factors and keep the factor count, so positions
    /// are preserved.
    pub fn precompose_on(&self, at: &[usize], op: &Morphism) -> Result<Morphism> {
        let (perm, _) = bring_to_front(at, self.dom.len())?;
        let selected = self.dom.permuted(&perm)?.slice(0..at.len());
        if op.cod != selected || op.dom.len() != op.cod.len() {
            return Err(Error::TypeMismatch {
                context: "precompose_on",
                expected: selected.factors.clone(),
                found: op.cod.factors.clone(),
            });
        }
        let front = self.permute_dom(&perm)?;
        let rest_w = front.dom.slice(at.len()..front.dom.len());
        let dressed = front.compose(&op.tensor(&Morphism::identity(&rest_w)))?;
        dressed.permute_dom(&invert_permutation(&perm))
    }

    /// `(op on the codomain factors `at`) ∘ self`; the dual of
    /// [`Morphism::precompose_on`].
    pub fn postcompose_on(&self, at: &[usize], op: &Morphism) -> Result<Morphism> {
        Ok(self
            .dagger()
            .precompose_on(at, &op.dagger())?
            .dagger())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Morphism) -> Result<f64> {
        self.check_same_type(other, "approx_eq")?;
        Ok(self
            .mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn approx_eq(&self, other: &Morphism, tol: Tolerance) -> Result<bool> {
        Ok(self.max_abs_diff(other)? <= tol.abs_tol)
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Trace of an endomorphism on a single total space.
    pub fn trace(&self) -> Result<C64> {
        if self.dom.total() != self.cod.total() {
            return Err(Error::Invalid("trace of a non-square morphism".into()));
        }
        Ok(self.mat.trace())
    }

    /// Reinterprets the matrix with new wire types of the same totals.
    pub fn retype(&self, dom: WireType, cod: WireType) -> Result<Morphism> {
        Morphism::new(dom, cod, self.mat.clone())
    }

    /// Stable hash of wire types and entry bit patterns.
    pub fn content_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.dom.factors.hash(&mut h);
        self.cod.factors.hash(&mut h);
        for z in self.mat.transpose().iter() {
            z.re.to_bits().hash(&mut h);
            z.im.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn to_json(&self) -> MorphismJson {
        let (re, im) = row_major_parts(&self.mat);
        MorphismJson {
            kind: None,
            dom: self.dom.factors.clone(),
            cod: self.cod.factors.clone(),
            re,
            im,
        }
    }

    pub fn from_json(j: &MorphismJson) -> Result<Morphism> {
        if let Some(kind) = &j.kind {
            if kind != "morphism" {
                return Err(Error::Invalid(format!("expected a morphism, found kind {kind:?}")));
            }
        }
        let dom = WireType::try_new(j.dom.clone())?;
        let cod = WireType::try_new(j.cod.clone())?;
        let mat = mat_from_parts(cod.total(), dom.total(), &j.re, &j.im)?;
        Morphism::new(dom, cod, mat)
    }
}

pub(crate) fn row_major_parts(mat: &Mat) -> (Vec<f64>, Vec<f64>) {
    let mut re = Vec::with_capacity(mat.len());
    let mut im = Vec::with_capacity(mat.len());
    for r in 0..mat.nrows() {
        for c in 0..mat.ncols() {
            re.push(mat[(r, c)].re);
            im.push(mat[(r, c)].im);
        }
    }
    (re, im)
}

pub(crate) fn mat_from_parts(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<Mat> {
    if re.len() != rows * cols || im.len() != rows * cols {
        return Err(Error::Shape { rows: re.len(), cols: im.len(), cod_total: rows, dom_total: cols });
    }
    Ok(Mat::from_fn(rows, cols, |r, c| C64::new(re[r * cols + c], im[r * cols + c])))
}

/// Wire format: `{"dom": [...], "cod": [...], "re": [...], "im": [...]}`,
/// row-major, rows indexed by the codomain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphismJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub dom: Vec<usize>,
    pub cod: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Serialize for Morphism {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Morphism {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MorphismJson::deserialize(d)?;
        Morphism::from_json(&j).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Morphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} -> {}", self.dom, self.cod)?;
        for r in 0..self.mat.nrows() {
            let row: Vec<String> = (0..self.mat.ncols())
                .map(|c| {
                    let z = self.mat[(r, c)];
                    format!("{:>7.3}{:+.3}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// `self ∘ f` as a free function.
pub fn compose(g: &Morphism, f: &Morphism) -> Result<Morphism> {
    g.compose(f)
}

pub fn tensor(f: &Morphism, g: &Morphism) -> Morphism {
    f.tensor(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;

    fn q() -> WireType {
        WireType::qudit(2)
    }

    #[test]
    fn identity_shapes() {
        assert_eq!(Morphism::identity(&q()).mat(), &Mat::identity(2, 2));
        let unit = Morphism::identity(&WireType::unit());
        assert_eq!(unit.mat(), &Mat::from_element(1, 1, ONE));
        let id6 = Morphism::identity(&WireType::new(vec![2, 3]));
        assert_eq!(id6.mat(), &Mat::identity(6, 6));
    }

    #[test]
    fn compose_laws_and_mismatch() {
        let x = gates::pauli_x();
        let id = Morphism::identity(&q());
        assert_eq!(id.compose(&x).unwrap(), x);
        assert!(x.compose(&x).unwrap().approx_eq(&id, Tolerance::DEFAULT).unwrap());
        let h = gates::hadamard();
        let zh = gates::pauli_z().compose(&h).unwrap();
        // H Z H = X, checked entrywise against a hand-computed product.
        let hzh = h.compose(&zh).unwrap();
        assert!(hzh.approx_eq(&x, Tolerance::new(1e-15).unwrap()).unwrap());
        let bad = Morphism::identity(&WireType::qudit(3));
        assert!(matches!(x.compose(&bad), Err(Error::TypeMismatch { .. })));
    }

    #[test]
    fn tensor_entry_and_unit() {
        let id2 = Morphism::identity(&q());
        let id3 = Morphism::identity(&WireType::qudit(3));
        assert_eq!(id2.tensor(&id3), Morphism::identity(&WireType::new(vec![2, 3])));
        let x = gates::pauli_x();
        assert_eq!(x.tensor(&Morphism::identity(&WireType::unit())), x);
        // Brute-force Kronecker: (X⊗Z)[(r1 r2),(c1 c2)] = X[r1,c1] Z[r2,c2].
        let xz = x.tensor(&gates::pauli_z());
        let z = gates::pauli_z();
        for r in 0..4 {
            for c in 0..4 {
                let expect = x.entry(r / 2, c / 2) * z.entry(r % 2, c % 2);
                assert_eq!(xz.entry(r, c), expect);
            }
        }
        assert_eq!(xz.entry(1, 3), C64::new(-1.0, 0.0));
    }

    #[test]
    fn dagger_phase_gate() {
        let s = gates::phase_s();
        let sd = s.dagger();
        assert_eq!(sd.entry(0, 0), ONE);
        assert_eq!(sd.entry(1, 1), -I);
        assert_eq!(sd.dagger(), s);
    }

    #[test]
    fn braid_is_swap() {
        let sw = Morphism::braid(&q(), &q());
        let mut expect = Mat::zeros(4, 4);
        expect[(0, 0)] = ONE;
        expect[(3, 3)] = ONE;
        expect[(1, 2)] = ONE;
        expect[(2, 1)] = ONE;
        assert_eq!(sw.mat(), &expect);
        let w = WireType::new(vec![2, 3]);
        assert_eq!(Morphism::braid(&w, &WireType::unit()), Morphism::identity(&w));
        let a = WireType::new(vec![2]);
        let b = WireType::new(vec![3, 2]);
        let round = Morphism::braid(&b, &a).compose(&Morphism::braid(&a, &b)).unwrap();
        assert_eq!(round, Morphism::identity(&a.concat(&b)));
    }

    #[test]
    fn permute_factors_cases() {
        let sw = gates::swap(2);
        assert_eq!(sw.permute_factors(&[0, 1], &[0, 1]).unwrap(), sw);
        assert_eq!(sw.permute_factors(&[1, 0], &[1, 0]).unwrap(), sw);
        let f = gates::hadamard();
        let g = Morphism::from_rows(
            WireType::qudit(3),
            WireType::qudit(2),
            &(0..6).map(|k| C64::new(k as f64, -(k as f64))).collect::<Vec<_>>(),
        )
        .unwrap();
        let fg = f.tensor(&g);
        let gf = g.tensor(&f);
        assert_eq!(fg.permute_factors(&[1, 0], &[1, 0]).unwrap(), gf);
        assert!(matches!(
            sw.permute_factors(&[0, 0], &[0, 1]),
            Err(Error::BadPermutation { .. })
        ));
    }

    #[test]
    fn cup_cap_snake_and_scalar() {
        let cup = Morphism::cup(&q());
        let col: Vec<C64> = cup.mat().iter().cloned().collect();
        assert_eq!(col, vec![ONE, ZERO, ZERO, ONE]);
        for d in 1..=5 {
            let w = WireType::qudit(d);
            let id = Morphism::identity(&w);
            let snake = Morphism::cap(&w)
                .tensor(&id)
                .compose(&id.tensor(&Morphism::cup(&w)))
                .unwrap();
            assert_eq!(snake.max_abs_diff(&id).unwrap(), 0.0);
        }
        let s = Morphism::cap(&q()).compose(&cup).unwrap();
        assert_eq!(s.entry(0, 0), C64::new(2.0, 0.0));
    }

    #[test]
    fn contract_wire_cases() {
        let sw = gates::swap(2);
        assert_eq!(sw.contract_wire(0, 0).unwrap(), Morphism::identity(&q()));
        let id23 = Morphism::identity(&WireType::new(vec![2, 3]));
        let c = id23.contract_wire(0, 0).unwrap();
        assert_eq!(c, Morphism::identity(&WireType::qudit(3)).scale(C64::new(2.0, 0.0)));
        let u = Morphism::from_rows(q(), q(), &[C64::new(1.0, 2.0), ONE, I, C64::new(-3.0, 0.5)]).unwrap();
        let g = gates::hadamard();
        let c = u.tensor(&g).contract_wire(0, 0).unwrap();
        // Explicit summation oracle: Σ_a u[a,a] g.
        let tr = u.entry(0, 0) + u.entry(1, 1);
        assert!(c.approx_eq(&g.scale(tr), Tolerance::new(1e-14).unwrap()).unwrap());
        assert!(matches!(
            Morphism::identity(&WireType::new(vec![2, 3])).contract_wire(0, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn approx_eq_cases() {
        let h = gates::hadamard();
        assert!(h.approx_eq(&h, Tolerance::DEFAULT).unwrap());
        let id = Morphism::identity(&q());
        assert!(!id.approx_eq(&gates::pauli_x(), Tolerance::DEFAULT).unwrap());
        let pert = Morphism::real(&q(), &[1e-12, -1e-12, 0.0, 1e-12]).unwrap();
        assert!(h.approx_eq(&h.add(&pert).unwrap(), Tolerance::DEFAULT).unwrap());
        assert!(h.approx_eq(&Morphism::identity(&WireType::qudit(3)), Tolerance::DEFAULT).is_err());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let f = gates::phase_s().tensor(&gates::hadamard());
        let s = serde_json::to_string(&f).unwrap();
        let back: Morphism = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"dom":[2],"cod":[2],"re":[1,0,0],"im":[0,0,0]}"#;
        assert!(serde_json::from_str::<Morphism>(bad).is_err());
        let j = gates::pauli_x().to_json();
        assert_eq!(j.re, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn non_finite_rejected() {
        let m = Mat::from_element(1, 1, C64::new(f64::NAN, 0.0));
        assert!(matches!(
            Morphism::new(WireType::unit(), WireType::unit(), m),
            Err(Error::NonFinite)
        ));
        assert!(WireType::try_new(vec![2, 0]).is_err());
    }
}
