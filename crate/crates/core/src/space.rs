//! Composite Hilbert spaces built from collective spins, qubits and truncated
//! bosonic modes.
//!
//! Basis states are enumerated in Kronecker order: the first factor is the
//! most significant digit of the flat index. Within each factor index 0 is
//! the most excited state for spins (fully inverted Dicke state, `|e>` for a
//! qubit) and the vacuum for bosons, so that "excitation number" is
//! `N - i` for a Dicke index `i`, `1 - i` for a qubit and `n` for a boson.
//!
//! A space may optionally be restricted to the manifold of states whose total
//! excitation number does not exceed a cap. Every generator used in this
//! crate either conserves or lowers the total excitation number, so this
//! restriction is exact for states that start inside the manifold.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    /// Symmetric (Dicke) ladder of `emitters` two-level systems, dim `emitters + 1`.
    CollectiveSpin { emitters: usize },
    Qubit,
    /// Fock levels `0..cutoff`.
    Boson { cutoff: usize },
}

impl FactorKind {
    pub fn dim(&self) -> usize {
        match *self {
            FactorKind::CollectiveSpin { emitters } => emitters + 1,
            FactorKind::Qubit => 2,
            FactorKind::Boson { cutoff } => cutoff,
        }
    }

    /// Excitation number carried by local basis state `index`.
    pub fn excitations(&self, index: usize) -> usize {
        match *self {
            FactorKind::CollectiveSpin { emitters } => emitters - index,
            FactorKind::Qubit => 1 - index,
            FactorKind::Boson { .. } => index,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            FactorKind::CollectiveSpin { .. } => "collective-spin",
            FactorKind::Qubit => "qubit",
            FactorKind::Boson { .. } => "boson",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub label: String,
    pub kind: FactorKind,
}

impl Factor {
    pub fn collective_spin(label: impl Into<String>, emitters: usize) -> Self {
        Factor { label: label.into(), kind: FactorKind::CollectiveSpin { emitters } }
    }

    pub fn qubit(label: impl Into<String>) -> Self {
        Factor { label: label.into(), kind: FactorKind::Qubit }
    }

    pub fn boson(label: impl Into<String>, cutoff: usize) -> Self {
        Factor { label: label.into(), kind: FactorKind::Boson { cutoff } }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }
}

/// Ordered registry of tensor factors, optionally restricted to an
/// excitation-number manifold.
#[derive(Clone)]
pub struct CompositeSpace {
    factors: Arc<Vec<Factor>>,
    strides: Arc<Vec<usize>>,
    cap: Option<usize>,
    /// Retained flat product indices, ascending. `None` means the full product.
    basis: Option<Arc<Vec<usize>>>,
}

impl PartialEq for CompositeSpace {
    fn eq(&self, other: &Self) -> bool {
        self.factors == other.factors && self.cap == other.cap
    }
}

impl fmt::Debug for CompositeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeSpace")
            .field("factors", &self.factors)
            .field("cap", &self.cap)
            .field("dim", &self.dim())
            .finish()
    }
}

/// Validate factor specs and assemble the space.
pub fn build_space(factors: Vec<Factor>) -> Result<CompositeSpace> {
    if factors.is_empty() {
        return Err(Error::InvalidParameter("a space needs at least one factor".into()));
    }
    let mut seen = HashSet::new();
    for f in &factors {
        if !seen.insert(f.label.clone()) {
            return Err(Error::DuplicateLabel(f.label.clone()));
        }
        match f.kind {
            FactorKind::CollectiveSpin { emitters } if emitters < 1 => {
                return Err(Error::InvalidFactor {
                    label: f.label.clone(),
                    reason: "collective spin needs N >= 1 emitters".into(),
                })
            }
            FactorKind::Boson { cutoff } if cutoff < 2 => {
                return Err(Error::InvalidFactor {
                    label: f.label.clone(),
                    reason: format!("boson cutoff must be >= 2, got {cutoff}"),
                })
            }
            _ => {}
        }
    }
    let mut strides = vec![1usize; factors.len()];
    for i in (0..factors.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * factors[i + 1].dim();
    }
    Ok(CompositeSpace { factors: Arc::new(factors), strides: Arc::new(strides), cap: None, basis: None })
}

impl CompositeSpace {
    /// Restrict to basis states with at most `cap` total excitations.
    pub fn with_excitation_cap(&self, cap: usize) -> CompositeSpace {
        let full = self.full_dim();
        let mut digits = vec![0usize; self.factors.len()];
        let basis: Vec<usize> = (0..full)
            .filter(|&flat| {
                self.decode_into(flat, &mut digits);
                self.excitations_of(&digits) <= cap
            })
            .collect();
        CompositeSpace {
            factors: self.factors.clone(),
            strides: self.strides.clone(),
            cap: Some(cap),
            basis: Some(Arc::new(basis)),
        }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn excitation_cap(&self) -> Option<usize> {
        self.cap
    }

    /// Product of factor dimensions.
    pub fn full_dim(&self) -> usize {
        self.factors.iter().map(Factor::dim).product()
    }

    /// Dimension of the (possibly restricted) space.
    pub fn dim(&self) -> usize {
        match &self.basis {
            Some(b) => b.len(),
            None => self.full_dim(),
        }
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn factor(&self, label: &str) -> Result<&Factor> {
        Ok(&self.factors[self.position(label)?])
    }

    pub(crate) fn stride(&self, position: usize) -> usize {
        self.strides[position]
    }

    /// Flat product index of the `index`-th retained basis state.
    pub fn flat_index(&self, index: usize) -> usize {
        match &self.basis {
            Some(b) => b[index],
            None => index,
        }
    }

    /// Inverse of [`flat_index`](Self::flat_index); `None` if the product
    /// state lies outside the retained manifold.
    pub fn index_of_flat(&self, flat: usize) -> Option<usize> {
        match &self.basis {
            Some(b) => b.binary_search(&flat).ok(),
            None => (flat < self.full_dim()).then_some(flat),
        }
    }

    pub fn decode_into(&self, flat: usize, digits: &mut [usize]) {
        for (i, f) in self.factors.iter().enumerate() {
            digits[i] = (flat / self.strides[i]) % f.dim();
        }
    }

    pub fn decode(&self, flat: usize) -> Vec<usize> {
        let mut d = vec![0; self.factors.len()];
        self.decode_into(flat, &mut d);
        d
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        digits.iter().zip(self.strides.iter()).map(|(d, s)| d * s).sum()
    }

    pub fn excitations_of(&self, digits: &[usize]) -> usize {
        self.factors.iter().zip(digits).map(|(f, &d)| f.kind.excitations(d)).sum()
    }

    /// The unrestricted space made of the factors named in `keep`, in the
    /// original factor order.
    pub fn subspace(&self, keep: &[&str]) -> Result<CompositeSpace> {
        for l in keep {
            self.position(l)?;
        }
        let factors: Vec<Factor> =
            self.factors.iter().filter(|f| keep.contains(&f.label.as_str())).cloned().collect();
        build_space(factors)
    }

    pub(crate) fn require_kind(&self, label: &str, expected: &'static str) -> Result<&Factor> {
        let f = self.factor(label)?;
        if f.kind.name() != expected {
            return Err(Error::WrongFactorKind { label: label.to_string(), expected });
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_multiply() {
        let s = build_space(vec![
            Factor::collective_spin("emitters", 10),
            Factor::boson("cavity", 11),
            Factor::boson("mode", 11),
        ])
        .unwrap();
        assert_eq!(s.dim(), 1331);

        let mut f: Vec<Factor> = (0..6).map(|i| Factor::qubit(format!("q{i}"))).collect();
        f.push(Factor::boson("mode", 7));
        assert_eq!(build_space(f).unwrap().dim(), 448);

        assert_eq!(build_space(vec![Factor::collective_spin("e", 1)]).unwrap().dim(), 2);
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(matches!(
            build_space(vec![Factor::qubit("a"), Factor::qubit("a")]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(build_space(vec![Factor::boson("c", 1)]).is_err());
        assert!(build_space(vec![Factor::boson("c", 0)]).is_err());
        assert!(build_space(vec![Factor::collective_spin("e", 0)]).is_err());
    }

    #[test]
    fn excitation_manifold_counts() {
        let s = build_space(vec![
            Factor::collective_spin("emitters", 10),
            Factor::boson("cavity", 11),
            Factor::boson("mode", 11),
        ])
        .unwrap();
        // compositions of at most 10 excitations into 3 parts: C(13, 3)
        assert_eq!(s.with_excitation_cap(10).dim(), 286);

        let mut f: Vec<Factor> = (0..6).map(|i| Factor::qubit(format!("q{i}"))).collect();
        f.push(Factor::boson("mode", 7));
        assert_eq!(build_space(f).unwrap().with_excitation_cap(6).dim(), 256);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let s = build_space(vec![Factor::qubit("a"), Factor::boson("b", 3), Factor::collective_spin("c", 2)])
            .unwrap();
        for flat in 0..s.full_dim() {
            assert_eq!(s.encode(&s.decode(flat)), flat);
        }
        assert_eq!(s.decode(0), vec![0, 0, 0]);
        assert_eq!(s.decode(1), vec![0, 0, 1]);
    }
}
