use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operator::{CMatrix, OperatorMatrix, C64, ZERO};
use crate::space::CompositeSpace;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Dense density matrix on a composite space.
#[derive(Clone, Debug)]
pub struct DensityState {
    space: CompositeSpace,
    matrix: CMatrix,
}

impl DensityState {
    pub fn new(space: &CompositeSpace, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: matrix.nrows() });
        }
        Ok(DensityState { space: space.clone(), matrix })
    }

    /// `|psi><psi|` for a normalized vector.
    pub fn pure(space: &CompositeSpace, psi: &[C64]) -> Result<Self> {
        if psi.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: psi.len() });
        }
        let v = DVector::from_column_slice(psi);
        Self::new(space, &v * v.adjoint())
    }

    /// Product of per-factor states given in factor order. Each local state is
    /// a dense matrix on that factor; entries falling outside an excitation
    /// cap are dropped.
    pub fn product(space: &CompositeSpace, locals: &[CMatrix]) -> Result<Self> {
        let factors = space.factors();
        if locals.len() != factors.len() {
            return Err(Error::DimensionMismatch { expected: factors.len(), got: locals.len() });
        }
        for (f, m) in factors.iter().zip(locals) {
            if m.nrows() != f.dim() {
                return Err(Error::DimensionMismatch { expected: f.dim(), got: m.nrows() });
            }
        }
        let d = space.dim();
        let digits: Vec<Vec<usize>> = (0..d).map(|i| space.decode(space.flat_index(i))).collect();
        let mat = CMatrix::from_fn(d, d, |r, c| {
            let mut v = C64::new(1.0, 0.0);
            for (k, m) in locals.iter().enumerate() {
                v *= m[(digits[r][k], digits[c][k])];
                if v == ZERO {
                    break;
                }
            }
            v
        });
        Self::new(space, mat)
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        op.expectation(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// Full validity check: Hermiticity, unit trace and positivity.
    /// Positivity costs an eigenvalue solve, so it is only run here.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > HERMITICITY_TOL {
            return Err(Error::NotHermitian(h));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Reduced state on the factors named in `keep`.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityState> {
        TraceMap::new(&self.space, keep)?.apply(self)
    }

    /// Trace distance `½ ||a - b||_1`.
    pub fn trace_distance(&self, other: &DensityState) -> Result<f64> {
        if self.matrix.nrows() != other.matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), got: other.matrix.nrows() });
        }
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>())
    }
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Replace `m` by its Hermitian part in place.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m[(j, j)] = C64::new(m[(j, j)].re, 0.0);
    }
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut h = m.clone();
    hermitize(&mut h);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}


/// Precomputed index bookkeeping for repeated partial traces over the same
/// factor split.
#[derive(Clone, Debug)]
pub struct TraceMap {
    source: CompositeSpace,
    target: CompositeSpace,
    /// `(source index, target index)` grouped by the traced-out multi-index.
    groups: Vec<Vec<(usize, usize)>>,
}

impl TraceMap {
    pub fn new(space: &CompositeSpace, keep: &[&str]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidParameter("partial trace must keep at least one factor".into()));
        }
        let target = space.subspace(keep)?;
        let positions: Vec<usize> = target.factors().iter().map(|f| space.position(&f.label).unwrap()).collect();
        let nf = space.factors().len();
        let traced: Vec<usize> = (0..nf).filter(|p| !positions.contains(p)).collect();
        let mut groups: std::collections::BTreeMap<Vec<usize>, Vec<(usize, usize)>> = Default::default();
        let mut digits = vec![0usize; nf];
        for i in 0..space.dim() {
            space.decode_into(space.flat_index(i), &mut digits);
            let t: Vec<usize> = traced.iter().map(|&p| digits[p]).collect();
            let kept: Vec<usize> = positions.iter().map(|&p| digits[p]).collect();
            groups.entry(t).or_default().push((i, target.encode(&kept)));
        }
        Ok(TraceMap { source: space.clone(), target, groups: groups.into_values().collect() })
    }

    pub fn target(&self) -> &CompositeSpace {
        &self.target
    }

    pub fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        let dk = self.target.dim();
        let mut out = CMatrix::zeros(dk, dk);
        for g in &self.groups {
            for &(i, ki) in g {
                for &(j, kj) in g {
                    out[(ki, kj)] += m[(i, j)];
                }
            }
        }
        out
    }

    pub fn apply(&self, rho: &DensityState) -> Result<DensityState> {
        if rho.space != self.source {
            return Err(Error::DimensionMismatch { expected: self.source.dim(), got: rho.space.dim() });
        }
        DensityState::new(&self.target, self.apply_matrix(&rho.matrix))
    }
}
