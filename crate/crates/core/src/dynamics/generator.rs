//! Time-dependent sparse operators `sum_r c_r(t) M_r` stored on one union
//! sparsity pattern, so each evaluation costs a single sparse product.

use std::collections::BTreeMap;

use super::Envelope;
use crate::operator::{CMatrix, OperatorMatrix, C64};

/// `scale * prod_i f_i(t)` with each factor optionally conjugated.
#[derive(Clone, Debug)]
pub(crate) struct Coeff {
    scale: C64,
    factors: Vec<(Envelope, bool)>,
}

impl Coeff {
    pub(crate) fn constant(scale: C64) -> Self {
        Coeff { scale, factors: vec![] }
    }

    pub(crate) fn with(mut self, e: &Envelope, conjugate: bool) -> Self {
        match e {
            Envelope::Constant(c) => self.scale *= if conjugate { c.conj() } else { *c },
            _ => self.factors.push((e.clone(), conjugate)),
        }
        self
    }

    fn conj(&self) -> Self {
        Coeff { scale: self.scale.conj(), factors: self.factors.iter().map(|(e, c)| (e.clone(), !c)).collect() }
    }

    fn at(&self, t: f64) -> C64 {
        self.factors.iter().fold(self.scale, |acc, (e, c)| {
            let v = e.at(t);
            acc * if *c { v.conj() } else { v }
        })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Combo {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Per term: coefficient and `(union position, value)` entries.
    terms: Vec<(Coeff, Vec<(usize, C64)>)>,
}

impl Combo {
    pub(crate) fn new(dim: usize, terms: Vec<(Coeff, OperatorMatrix)>) -> Self {
        let mut pattern: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (_, op) in &terms {
            for (r, c, _) in op.triplets() {
                pattern.insert((r, c), 0);
            }
        }
        let mut rows = Vec::with_capacity(pattern.len());
        let mut cols = Vec::with_capacity(pattern.len());
        for (k, ((r, c), slot)) in pattern.iter_mut().enumerate() {
            *slot = k;
            rows.push(*r);
            cols.push(*c);
        }
        debug_assert!(rows.iter().all(|&r| r < dim));
        let terms = terms
            .into_iter()
            .map(|(coeff, op)| {
                let entries = op.triplets().map(|(r, c, v)| (pattern[&(r, c)], v)).collect();
                (coeff, entries)
            })
            .collect();
        Combo { rows, cols, terms }
    }

    /// Term-wise adjoint: `sum conj(c_r) M_r^dag`.
    pub(crate) fn adjoint_of(dim: usize, terms: &[(Coeff, OperatorMatrix)]) -> Self {
        Combo::new(dim, terms.iter().map(|(c, m)| (c.conj(), m.adjoint())).collect())
    }

    pub(crate) fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Values of the combination at `t`.
    pub(crate) fn eval(&self, t: f64, values: &mut Vec<C64>) {
        values.clear();
        values.resize(self.nnz(), C64::new(0.0, 0.0));
        for (coeff, entries) in &self.terms {
            let c = coeff.at(t);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for &(k, v) in entries {
                values[k] += c * v;
            }
        }
    }

    /// `out += M x` with `M` given by `values` from [`eval`](Self::eval).
    /// Visits only stored entries, column by column.
    pub(crate) fn mul_acc(&self, values: &[C64], x: &CMatrix, out: &mut CMatrix) {
        let d = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for j in 0..x.ncols() {
            let xcol = &xs[j * d..(j + 1) * d];
            let ocol = &mut os[j * d..(j + 1) * d];
            for ((&r, &c), v) in self.rows.iter().zip(&self.cols).zip(values) {
                ocol[r] += v * xcol[c];
            }
        }
    }
}

/// `dst = src^dag` without allocating.
pub(crate) fn adjoint_into(src: &CMatrix, dst: &mut CMatrix) {
    let d = src.nrows();
    let s = src.as_slice();
    let o = dst.as_mut_slice();
    for j in 0..d {
        for i in 0..d {
            o[j * d + i] = s[i * d + j].conj();
        }
    }
}
