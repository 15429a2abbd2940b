//! Tensor-product layout bookkeeping and the operator type shared by every
//! Hamiltonian builder.

use faer::{Mat, MatRef};

use crate::linalg::{c64, hermiticity_error, identity, kron};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subsystem {
    Fluxonium,
    Resonator,
    Tls,
}

/// Ordered list of tensor factors. The first factor is the slowest index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertLayout {
    factors: Vec<(Subsystem, usize)>,
}

impl HilbertLayout {
    pub fn new(factors: Vec<(Subsystem, usize)>) -> Result<Self> {
        for (k, &(s, d)) in factors.iter().enumerate() {
            if d == 0 {
                return Err(Error::Dimension(format!("{s:?} factor has dimension 0")));
            }
            if factors[..k].iter().any(|&(t, _)| t == s) {
                return Err(Error::Dimension(format!("{s:?} appears twice in the layout")));
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[(Subsystem, usize)] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.1).product()
    }

    pub fn factor_dim(&self, s: Subsystem) -> Option<usize> {
        self.factors.iter().find(|f| f.0 == s).map(|f| f.1)
    }

    pub fn contains(&self, s: Subsystem) -> bool {
        self.factor_dim(s).is_some()
    }

    /// Flat index of a product state given one local index per factor.
    pub fn index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.factors.len());
        digits
            .iter()
            .zip(&self.factors)
            .fold(0, |acc, (&d, &(_, n))| acc * n + d)
    }

    pub fn digits(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (k, &(_, n)) in self.factors.iter().enumerate().rev() {
            out[k] = idx % n;
            idx /= n;
        }
        out
    }

    /// `local` on factor `s`, identity on every other factor.
    pub fn embed(&self, s: Subsystem, local: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let n = self
            .factor_dim(s)
            .ok_or_else(|| Error::Dimension(format!("{s:?} is not part of the layout")))?;
        if local.nrows() != n || local.ncols() != n {
            return Err(Error::Dimension(format!(
                "{s:?} operator is {}x{}, factor has dimension {n}",
                local.nrows(),
                local.ncols()
            )));
        }
        let mut out = Mat::<c64>::identity(1, 1);
        for &(t, d) in &self.factors {
            out = if t == s {
                kron(out.as_ref(), local)
            } else {
                kron(out.as_ref(), identity(d).as_ref())
            };
        }
        Ok(out)
    }

    pub fn with_factor(&self, s: Subsystem, d: usize) -> Result<Self> {
        let mut f = self.factors.clone();
        f.push((s, d));
        Self::new(f)
    }
}

/// A dense operator together with the layout it acts on.
#[derive(Clone, Debug)]
pub struct ComposedOperator {
    pub layout: HilbertLayout,
    pub matrix: Mat<c64>,
}

impl ComposedOperator {
    pub fn new(layout: HilbertLayout, matrix: Mat<c64>) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, layout dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(self.matrix.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complexify;

    #[test]
    fn index_roundtrip() {
        let l = HilbertLayout::new(vec![
            (Subsystem::Fluxonium, 3),
            (Subsystem::Resonator, 4),
            (Subsystem::Tls, 2),
        ])
        .unwrap();
        for idx in 0..l.dim() {
            assert_eq!(l.index(&l.digits(idx)), idx);
        }
        assert_eq!(l.index(&[1, 2, 1]), 13);
    }

    #[test]
    fn embed_acts_on_its_factor_only() {
        let l = HilbertLayout::new(vec![(Subsystem::Fluxonium, 2), (Subsystem::Resonator, 3)])
            .unwrap();
        let a = complexify(crate::linalg::destroy(3).as_ref());
        let big = l.embed(Subsystem::Resonator, a.as_ref()).unwrap();
        // <f=1, n=0| a |f=1, n=1> = 1
        assert_eq!(big[(l.index(&[1, 0]), l.index(&[1, 1]))].re, 1.0);
        assert_eq!(big[(l.index(&[0, 0]), l.index(&[1, 1]))].re, 0.0);
    }

    #[test]
    fn duplicate_factor_rejected() {
        assert!(HilbertLayout::new(vec![(Subsystem::Tls, 2), (Subsystem::Tls, 2)]).is_err());
    }
}
