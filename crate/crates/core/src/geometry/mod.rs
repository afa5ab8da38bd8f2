//! Chart-based Riemannian geometry: metrics, Christoffel symbols, curvature,
//! and tangent-space linear algebra.

pub mod chart;
pub mod field;
pub mod metric;
pub mod models;
pub mod tensors;

pub use chart::{ChartSpec, DomainGuard};
pub use field::{DerivativeScheme, FnField, MatrixField, SchemedField};
pub use metric::{Manifold, MetricField, PointGeometry, TangentSplit};
pub use models::{ConformalFactor, ConformalMetric, PolarSphereMetric};
pub use tensors::{Christoffel, ChristoffelGradient, CurvatureTensor};
