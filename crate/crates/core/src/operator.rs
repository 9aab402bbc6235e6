//! Sparse operators on composite spaces.
//!
//! Operators are stored in compressed-row form. Products of operators on an
//! excitation-capped space are exact as long as the right factor never leaves
//! the manifold, which holds for every normally ordered product used here
//! (`c^dag c`, `S+ S-`, `L^dag L`, ...).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::space::{CompositeSpace, FactorKind};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    space: CompositeSpace,
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(space: &CompositeSpace, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let dim = space.dim();
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); dim];
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            *rows[r].entry(c).or_insert(ZERO) += v;
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if v != ZERO {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        OperatorMatrix { space: space.clone(), dim, row_ptr, col_idx, values, hermitian: false }
    }

    pub fn zero(space: &CompositeSpace) -> Self {
        Self::from_triplets(space, std::iter::empty())
    }

    pub fn identity(space: &CompositeSpace) -> Self {
        let mut op = Self::from_triplets(space, (0..space.dim()).map(|i| (i, i, ONE)));
        op.hermitian = true;
        op
    }

    /// Tensor product of local operators on the named factors, identity on the
    /// rest. Each local matrix acts in the factor's own basis.
    pub fn embed(space: &CompositeSpace, locals: &[(&str, &CMatrix)]) -> Result<Self> {
        let mut placed = Vec::with_capacity(locals.len());
        for (label, m) in locals {
            let pos = space.position(label)?;
            let d = space.factors()[pos].dim();
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.nrows() });
            }
            if placed.iter().any(|&(p, _)| p == pos) {
                return Err(Error::DuplicateLabel(label.to_string()));
            }
            placed.push((pos, *m));
        }
        let nf = space.factors().len();
        let mut triplets = Vec::new();
        let mut digits = vec![0usize; nf];
        for col in 0..space.dim() {
            let flat = space.flat_index(col);
            space.decode_into(flat, &mut digits);
            // expand the product of local columns
            let mut branches: Vec<(usize, C64)> = vec![(flat, ONE)];
            for &(pos, m) in &placed {
                let d = digits[pos];
                let stride = space.stride(pos);
                let mut next = Vec::with_capacity(branches.len() * 2);
                for &(f, amp) in &branches {
                    for i in 0..m.nrows() {
                        let v = m[(i, d)];
                        if v != ZERO {
                            next.push((f - d * stride + i * stride, amp * v));
                        }
                    }
                }
                branches = next;
            }
            for (f, amp) in branches {
                if let Some(row) = space.index_of_flat(f) {
                    triplets.push((row, col, amp));
                }
            }
        }
        let mut op = Self::from_triplets(space, triplets);
        op.hermitian = op.max_hermitian_deviation() < HERMITIAN_TOL
            && placed.iter().all(|(_, m)| is_hermitian_dense(m));
        Ok(op)
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Set the Hermitian flag after verifying it.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let dev = self.max_hermitian_deviation();
        if dev >= HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.values[lo + k],
            Err(_) => ZERO,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn adjoint(&self) -> Self {
        let mut op = Self::from_triplets(&self.space, self.triplets().map(|(r, c, v)| (c, r, v.conj())));
        op.hermitian = self.hermitian;
        op
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut op = self.clone();
        op.values.iter_mut().for_each(|v| *v *= c);
        op.hermitian = self.hermitian && c.im == 0.0;
        op
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        let mut op = Self::from_triplets(&self.space, self.triplets().chain(other.triplets()));
        op.hermitian = self.hermitian && other.hermitian;
        op
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        let mut triplets = Vec::new();
        let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
        for r in 0..self.dim {
            acc.clear();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (mid, a) = (self.col_idx[k], self.values[k]);
                for q in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    *acc.entry(other.col_idx[q]).or_insert(ZERO) += a * other.values[q];
                }
            }
            triplets.extend(acc.iter().map(|(&c, &v)| (r, c, v)));
        }
        Self::from_triplets(&self.space, triplets)
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        self.triplets().map(|(r, c, v)| (v - self.get(c, r).conj()).norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum; bounds the spectral radius.
    pub fn row_sum_norm(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.values[k] * v[self.col_idx[k]]).sum())
            .collect()
    }

    /// `out += c * self * x` for a dense square `x`.
    pub fn mul_dense_acc(&self, c: C64, x: &CMatrix, out: &mut CMatrix) {
        csr_mul_acc(&self.row_ptr, &self.col_idx, &self.values, c, x, out);
    }

    /// `tr(self * rho)`.
    pub fn expectation(&self, rho: &CMatrix) -> C64 {
        self.triplets().map(|(r, c, v)| v * rho[(c, r)]).sum()
    }
}

/// `out += c * A * x` for the CSR matrix `A = (row_ptr, col_idx, values)`.
pub(crate) fn csr_mul_acc(row_ptr: &[usize], col_idx: &[usize], values: &[C64], c: C64, x: &CMatrix, out: &mut CMatrix) {
    let d = row_ptr.len() - 1;
    debug_assert_eq!(x.nrows(), d);
    let xs = x.as_slice();
    let os = out.as_mut_slice();
    for j in 0..x.ncols() {
        let xcol = &xs[j * d..(j + 1) * d];
        let ocol = &mut os[j * d..(j + 1) * d];
        for (r, o) in ocol.iter_mut().enumerate() {
            let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
            if lo == hi {
                continue;
            }
            let mut s = ZERO;
            for k in lo..hi {
                s += values[k] * xcol[col_idx[k]];
            }
            *o += c * s;
        }
    }
}

pub(crate) fn is_hermitian_dense(m: &CMatrix) -> bool {
    (m - m.adjoint()).iter().all(|v| v.norm() < HERMITIAN_TOL)
}

/// Dicke-ladder operators on the `N + 1` dimensional symmetric space.
/// Index `i` corresponds to `m = N/2 - i`.
pub mod dicke {
    use super::*;

    pub fn m_of(emitters: usize, index: usize) -> f64 {
        emitters as f64 / 2.0 - index as f64
    }

    pub fn lowering(emitters: usize) -> CMatrix {
        let s = emitters as f64 / 2.0;
        let mut m = CMatrix::zeros(emitters + 1, emitters + 1);
        for i in 0..emitters {
            let mz = m_of(emitters, i);
            m[(i + 1, i)] = C64::new((s * (s + 1.0) - mz * (mz - 1.0)).sqrt(), 0.0);
        }
        m
    }

    pub fn sz(emitters: usize) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_fn(emitters + 1, |i, _| C64::new(m_of(emitters, i), 0.0)))
    }
}

/// Single two-level system in the `(|e>, |g>)` basis.
pub mod qubit {
    use super::*;

    /// `sigma- = |g><e|`.
    pub fn lowering() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
    }

    /// Pauli z, `+1` on `|e>`.
    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }
}

pub mod boson {
    use super::*;

    pub fn annihilation(cutoff: usize) -> CMatrix {
        let mut m = CMatrix::zeros(cutoff, cutoff);
        for n in 1..cutoff {
            m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Collective {
    Sz,
    Plus,
    Minus,
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Uniform,
    PerEmitter(Vec<f64>),
}

/// Collective spin operator. On a space with a collective-spin factor this is
/// the Dicke-ladder operator; otherwise it is the weighted sum of single-site
/// operators over every qubit factor, in factor order.
pub fn collective_operator(space: &CompositeSpace, which: Collective, weights: &Weights) -> Result<OperatorMatrix> {
    let lower = collective_lowering(space, weights)?;
    let op = match which {
        Collective::Minus => lower,
        Collective::Plus => lower.adjoint(),
        Collective::X => lower.add(&lower.adjoint()).scale(C64::new(0.5, 0.0)),
        Collective::Y => lower.adjoint().add(&lower.scale(-ONE)).scale(C64::new(0.0, -0.5)),
        Collective::Sz => collective_sz(space, weights)?,
    };
    Ok(match which {
        Collective::X | Collective::Y | Collective::Sz => {
            let mut op = op;
            op.hermitian = op.max_hermitian_deviation() < HERMITIAN_TOL;
            op
        }
        _ => op,
    })
}

fn spin_factor(space: &CompositeSpace) -> Option<(String, usize)> {
    space.factors().iter().find_map(|f| match f.kind {
        FactorKind::CollectiveSpin { emitters } => Some((f.label.clone(), emitters)),
        _ => None,
    })
}

fn qubit_labels(space: &CompositeSpace) -> Vec<String> {
    space.factors().iter().filter(|f| f.kind == FactorKind::Qubit).map(|f| f.label.clone()).collect()
}

fn qubit_weights(n: usize, weights: &Weights) -> Result<Vec<f64>> {
    match weights {
        Weights::Uniform => Ok(vec![1.0; n]),
        Weights::PerEmitter(w) if w.len() == n => Ok(w.clone()),
        Weights::PerEmitter(w) => Err(Error::DimensionMismatch { expected: n, got: w.len() }),
    }
}

fn single_site_sum(space: &CompositeSpace, local: &CMatrix, weights: &Weights) -> Result<OperatorMatrix> {
    let labels = qubit_labels(space);
    if labels.is_empty() {
        return Err(Error::InvalidParameter("space has no emitter factor".into()));
    }
    let w = qubit_weights(labels.len(), weights)?;
    let mut acc = OperatorMatrix::zero(space);
    for (label, wn) in labels.iter().zip(w) {
        if wn != 0.0 {
            acc = acc.add(&OperatorMatrix::embed(space, &[(label, local)])?.scale(C64::new(wn, 0.0)));
        }
    }
    Ok(acc)
}

fn collective_lowering(space: &CompositeSpace, weights: &Weights) -> Result<OperatorMatrix> {
    if let Some((label, n)) = spin_factor(space) {
        if *weights != Weights::Uniform {
            return Err(Error::WeightedCollectiveSpin(label));
        }
        return OperatorMatrix::embed(space, &[(&label, &dicke::lowering(n))]);
    }
    single_site_sum(space, &qubit::lowering(), weights)
}

fn collective_sz(space: &CompositeSpace, weights: &Weights) -> Result<OperatorMatrix> {
    if let Some((label, n)) = spin_factor(space) {
        if *weights != Weights::Uniform {
            return Err(Error::WeightedCollectiveSpin(label));
        }
        return OperatorMatrix::embed(space, &[(&label, &dicke::sz(n))]);
    }
    single_site_sum(space, &(qubit::pauli_z() * C64::new(0.5, 0.0)), weights)
}

/// Annihilation and creation operators of a boson factor.
pub fn boson_ladder(space: &CompositeSpace, label: &str) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let f = space.require_kind(label, "boson")?;
    let FactorKind::Boson { cutoff } = f.kind else { unreachable!() };
    let a = OperatorMatrix::embed(space, &[(label, &boson::annihilation(cutoff))])?;
    let adag = a.adjoint();
    Ok((a, adag))
}

/// Single-site operator on a qubit factor.
pub fn site_operator(space: &CompositeSpace, label: &str, local: &CMatrix) -> Result<OperatorMatrix> {
    space.require_kind(label, "qubit")?;
    OperatorMatrix::embed(space, &[(label, local)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_space, Factor};

    fn close(a: C64, b: f64) -> bool {
        (a - C64::new(b, 0.0)).norm() < 1e-12
    }

    #[test]
    fn dicke_sz_and_lowering() {
        let s = build_space(vec![Factor::collective_spin("e", 2)]).unwrap();
        let sz = collective_operator(&s, Collective::Sz, &Weights::Uniform).unwrap();
        assert!(sz.is_hermitian());
        // index 0 is m = +1
        assert!(close(sz.get(0, 0), 1.0));

        let s10 = build_space(vec![Factor::collective_spin("e", 10)]).unwrap();
        let sm = collective_operator(&s10, Collective::Minus, &Weights::Uniform).unwrap();
        assert!(close(sm.get(1, 0), 10f64.sqrt()));
    }

    #[test]
    fn weighted_request_on_dicke_factor_fails() {
        let s = build_space(vec![Factor::collective_spin("e", 3)]).unwrap();
        let r = collective_operator(&s, Collective::Minus, &Weights::PerEmitter(vec![1.0; 3]));
        assert!(matches!(r, Err(Error::WeightedCollectiveSpin(_))));
    }

    #[test]
    fn zero_weight_site_drops_out() {
        let s = build_space(vec![Factor::qubit("q0"), Factor::qubit("q1")]).unwrap();
        let w = (2.0 * std::f64::consts::PI * 0.25).cos();
        assert!(w.abs() < 1e-15);
        let sm = collective_operator(&s, Collective::Minus, &Weights::PerEmitter(vec![1.0, 0.0])).unwrap();
        let q1 = site_operator(&s, "q1", &qubit::lowering()).unwrap();
        // no entry of sigma-_1 survives
        for (r, c, _) in q1.triplets() {
            if s.decode(c)[0] == s.decode(r)[0] && s.decode(c)[0] == 1 {
                assert_eq!(sm.get(r, c), ZERO);
            }
        }
        assert_eq!(sm.nnz(), 2);
    }

    #[test]
    fn boson_ladder_matrices() {
        let s = build_space(vec![Factor::boson("c", 3)]).unwrap();
        let (a, adag) = boson_ladder(&s, "c").unwrap();
        let expect = [[0.0, 1.0, 0.0], [0.0, 0.0, 2f64.sqrt()], [0.0, 0.0, 0.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert!(close(a.get(r, c), expect[r][c]));
            }
        }
        let comm = a.mul(&adag).add(&adag.mul(&a).scale(-ONE));
        for n in 0..2 {
            assert!(close(comm.get(n, n), 1.0));
        }
        // a|0> = 0
        let v = a.apply(&[ONE, ZERO, ZERO]);
        assert!(v.iter().all(|x| x.norm() == 0.0));
        let num = adag.mul(&a);
        for n in 0..3 {
            assert!(close(num.get(n, n), n as f64));
        }
    }

    #[test]
    fn non_boson_label_rejected() {
        let s = build_space(vec![Factor::qubit("q"), Factor::boson("c", 3)]).unwrap();
        assert!(matches!(boson_ladder(&s, "q"), Err(Error::WrongFactorKind { .. })));
        assert!(matches!(boson_ladder(&s, "x"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn disjoint_factors_commute() {
        let s = build_space(vec![Factor::collective_spin("e", 3), Factor::boson("c", 4), Factor::boson("m", 3)])
            .unwrap();
        let sp = collective_operator(&s, Collective::Plus, &Weights::Uniform).unwrap();
        let (a, _) = boson_ladder(&s, "c").unwrap();
        let (b, bd) = boson_ladder(&s, "m").unwrap();
        for (x, y) in [(&sp, &a), (&a, &bd), (&sp, &b)] {
            let d = x.mul(y).to_dense() - y.mul(x).to_dense();
            assert!(d.iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn hermitian_flags_hold() {
        let s = build_space(vec![Factor::collective_spin("e", 4), Factor::boson("c", 3)]).unwrap();
        for w in [Collective::X, Collective::Y, Collective::Sz] {
            let op = collective_operator(&s, w, &Weights::Uniform).unwrap();
            assert!(op.is_hermitian());
            assert!(op.max_hermitian_deviation() < HERMITIAN_TOL);
        }
        let (a, _) = boson_ladder(&s, "c").unwrap();
        assert!(!a.is_hermitian());
        assert!(a.clone().into_hermitian().is_err());
    }

    #[test]
    fn capped_space_products_are_exact_for_normal_order() {
        let full = build_space(vec![Factor::collective_spin("e", 3), Factor::boson("c", 4)]).unwrap();
        let capped = full.with_excitation_cap(3);
        let n_full = {
            let (a, ad) = boson_ladder(&full, "c").unwrap();
            let sm = collective_operator(&full, Collective::Minus, &Weights::Uniform).unwrap();
            ad.mul(&sm).add(&ad.mul(&a))
        };
        let (a, ad) = boson_ladder(&capped, "c").unwrap();
        let sm = collective_operator(&capped, Collective::Minus, &Weights::Uniform).unwrap();
        let n_cap = ad.mul(&sm).add(&ad.mul(&a));
        for (r, c, v) in n_cap.triplets() {
            let (fr, fc) = (capped.flat_index(r), capped.flat_index(c));
            assert!((n_full.get(fr, fc) - v).norm() < 1e-14);
        }
    }
}
