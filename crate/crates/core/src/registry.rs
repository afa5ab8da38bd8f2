//! Builtin manifolds and 2-forms addressable by name.

use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Manifold;
use crate::magnetic::{MagneticSystem, MobiusRecentering, TwoFormField};

/// Radius beyond which Poincaré-model orbits are pulled back to the origin.
pub const RECENTER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SphereChart {
    #[default]
    Stereographic,
    Polar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean {
        dim: usize,
    },
    FlatTorus {
        periods: Vec<f64>,
    },
    PoincareDisk {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    PoincareBall {
        dim: usize,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    RoundSphere {
        #[serde(default = "default_sphere_dim")]
        dim: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        chart: SphereChart,
        /// Pole guard of the polar chart.
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_sphere_dim() -> usize {
    2
}

fn default_radius() -> f64 {
    1.0
}

fn default_plane() -> (usize, usize) {
    (0, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormSpec {
    Zero {},
    /// `b dx^i ∧ dx^j` with `plane = [i, j]`.
    Constant {
        b: f64,
        #[serde(default = "default_plane")]
        plane: (usize, usize),
    },
    /// `b` times the Riemannian area form of a surface.
    AreaForm {
        b: f64,
    },
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<Manifold> {
        match self {
            ManifoldSpec::Euclidean { dim } => Manifold::euclidean(*dim),
            ManifoldSpec::FlatTorus { periods } => Manifold::flat_torus(periods.clone()),
            ManifoldSpec::PoincareDisk { epsilon } => Manifold::poincare_disk(*epsilon),
            ManifoldSpec::PoincareBall { dim, epsilon } => Manifold::poincare_ball(*dim, *epsilon),
            ManifoldSpec::RoundSphere {
                dim,
                radius,
                chart,
                epsilon,
            } => match chart {
                SphereChart::Stereographic => Manifold::round_sphere_stereographic(*dim, *radius),
                SphereChart::Polar if *dim != 2 => Err(Error::BadDimension(format!(
                    "the polar sphere chart is 2-dimensional, got dim = {dim}"
                ))),
                SphereChart::Polar if *radius != 1.0 => Err(Error::InvalidConfig(
                    "the polar sphere chart supports radius 1 only".into(),
                )),
                SphereChart::Polar => Manifold::round_sphere_polar(*epsilon),
            },
        }
    }

    fn is_poincare(&self) -> bool {
        matches!(
            self,
            ManifoldSpec::PoincareDisk { .. } | ManifoldSpec::PoincareBall { .. }
        )
    }
}

impl FormSpec {
    pub fn build(&self, manifold: &Manifold) -> Result<TwoFormField> {
        match self {
            FormSpec::Zero {} => Ok(TwoFormField::zero(manifold.dim())),
            FormSpec::Constant { b, plane } => TwoFormField::constant(manifold.dim(), *b, *plane),
            FormSpec::AreaForm { b } => TwoFormField::area_form(manifold, *b),
        }
    }
}

/// Builds the system, attaching Möbius recentering on Poincaré models whenever
/// the 2-form is invariant under it (zero, or the area form of the disk).
pub fn build_system(manifold: &ManifoldSpec, form: &FormSpec) -> Result<MagneticSystem> {
    let m = manifold.build()?;
    let sigma = form.build(&m)?;
    let sys = MagneticSystem::new(m, sigma)?;
    let invariant = matches!(form, FormSpec::Zero {} | FormSpec::AreaForm { .. });
    Ok(if manifold.is_poincare() && invariant {
        sys.with_symmetry(Arc::new(MobiusRecentering {
            threshold: RECENTER_THRESHOLD,
        }))
    } else {
        sys
    })
}
