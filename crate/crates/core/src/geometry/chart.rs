use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;

pub type DomainGuard = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// A single coordinate chart, optionally with periodic identifications.
///
/// The chart carries a reference point (the origin unless stated otherwise)
/// that the guard must accept, and an axis-aligned box used when probes need
/// to sample base points.
#[derive(Clone)]
pub struct ChartSpec {
    dim: usize,
    guard: DomainGuard,
    periods: Option<Vec<f64>>,
    reference: Vector,
    sample_box: Vec<(f64, f64)>,
}

impl fmt::Debug for ChartSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartSpec")
            .field("dim", &self.dim)
            .field("periods", &self.periods)
            .field("reference", &self.reference.as_slice())
            .field("sample_box", &self.sample_box)
            .finish()
    }
}

impl ChartSpec {
    pub fn new(dim: usize, guard: DomainGuard) -> Result<Self> {
        Self::with_reference(dim, guard, Vector::zeros(dim))
    }

    pub fn with_reference(dim: usize, guard: DomainGuard, reference: Vector) -> Result<Self> {
        if dim < 2 {
            return Err(Error::BadDimension(format!("chart dimension {dim} < 2")));
        }
        if reference.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: reference.len(),
            });
        }
        if !guard(&reference) {
            return Err(Error::InvalidConfig(
                "domain guard rejects the chart reference point".into(),
            ));
        }
        let sample_box = reference.iter().map(|c| (c - 0.5, c + 0.5)).collect();
        Ok(ChartSpec {
            dim,
            guard,
            periods: None,
            reference,
            sample_box,
        })
    }

    /// The whole coordinate space.
    pub fn unbounded(dim: usize) -> Result<Self> {
        Self::new(dim, Arc::new(|_| true))
    }

    pub fn with_periods(mut self, periods: Vec<f64>) -> Result<Self> {
        if periods.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: periods.len(),
            });
        }
        if periods.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig(
                "periods must be strictly positive".into(),
            ));
        }
        self.sample_box = periods.iter().map(|p| (0.0, *p)).collect();
        self.periods = Some(periods);
        Ok(self)
    }

    pub fn with_sample_box(mut self, sample_box: Vec<(f64, f64)>) -> Result<Self> {
        if sample_box.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: sample_box.len(),
            });
        }
        self.sample_box = sample_box;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periods(&self) -> Option<&[f64]> {
        self.periods.as_deref()
    }

    pub fn reference(&self) -> &Vector {
        &self.reference
    }

    pub fn sample_box(&self) -> &[(f64, f64)] {
        &self.sample_box
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim && x.iter().all(|c| c.is_finite()) && (self.guard)(x)
    }

    pub fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                point: x.iter().cloned().collect(),
            })
        }
    }

    /// Coordinate displacement `b - a`, reduced into `(-L/2, L/2]` along periodic axes.
    pub fn displacement(&self, a: &Vector, b: &Vector) -> Vector {
        let mut d = b - a;
        if let Some(periods) = &self.periods {
            for (di, &p) in d.iter_mut().zip(periods) {
                *di -= p * (*di / p).round();
            }
        }
        d
    }

    /// Maps coordinates into the fundamental domain `[0, L)` along periodic axes.
    pub fn wrap(&self, x: &Vector) -> Vector {
        let mut y = x.clone();
        if let Some(periods) = &self.periods {
            for (yi, &p) in y.iter_mut().zip(periods) {
                *yi = yi.rem_euclid(p);
            }
        }
        y
    }

    /// Draws a point uniformly from the sample box, rejecting points the guard refuses.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        loop {
            let x = Vector::from_iterator(
                self.dim,
                self.sample_box
                    .iter()
                    .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()),
            );
            if self.contains(&x) {
                return x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_dimension() {
        assert!(matches!(
            ChartSpec::unbounded(1),
            Err(Error::BadDimension(_))
        ));
    }

    #[test]
    fn periodic_displacement_wraps() {
        let c = ChartSpec::unbounded(2)
            .unwrap()
            .with_periods(vec![1.0, 2.0])
            .unwrap();
        let a = Vector::from_vec(vec![0.05, 0.0]);
        let b = Vector::from_vec(vec![0.95, 1.5]);
        let d = c.displacement(&a, &b);
        assert!((d[0] + 0.1).abs() < 1e-12);
        assert!((d[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_period_rejected() {
        let c = ChartSpec::unbounded(2).unwrap();
        assert!(c.with_periods(vec![1.0, 0.0]).is_err());
    }
}
