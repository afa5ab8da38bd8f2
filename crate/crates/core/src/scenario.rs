//! JSON scenario files driving the command-line front end.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::IntegratorConfig;
use crate::registry::{FormSpec, ManifoldSpec};

/// Relative speed mismatch accepted between `speed` and `‖initial.v‖_g`.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub manifold: ManifoldSpec,
    #[serde(default = "zero_form")]
    pub magnetic: FormSpec,
    /// Speed `s`; when `initial` is also given, `‖v‖_g` must match it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Initial>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Output>,
}

fn zero_form() -> FormSpec {
    FormSpec::Zero {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

/// Command-specific parameters. Each command reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Random samples for `sec`, `anosov-report`, `defect` and `regimes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Second vector `w` for `curvature`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    /// Vectors carried along by `transport`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submanifold: Option<SubmanifoldSpec>,
    /// Plane dimension for `cartan-probe`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planes: Option<usize>,
    /// Candidate radius for `cartan-probe`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Period guess for `holonomy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// QR interval for `lyapunov`, `angle`, `volume` and `regimes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    /// Scan direction for `conjugate-scan`; defaults to `initial.v`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Speeds swept by `regimes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubmanifoldSpec {
    /// `a ↦ origin + Σ a_i basis_i` sampled over `bounds`.
    Affine {
        origin: Vec<f64>,
        basis: Vec<Vec<f64>>,
        bounds: Vec<(f64, f64)>,
    },
    /// Round 2-sphere in a 3-dimensional chart.
    Sphere {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// Image of a g-orthonormal `k`-plane at `initial.x` under the dynamical exponential.
    ExpImage {
        basis: Vec<Vec<f64>>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
    /// Hyperplane at `initial.x` with the given normal; probed by the fiber quadrature.
    Hypersurface {
        normal: Vec<f64>,
        radius: f64,
        #[serde(default = "default_radii")]
        radii: usize,
    },
}

fn default_margin() -> f64 {
    0.3
}

fn default_radii() -> usize {
    4
}

fn invalid(field: &str, message: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {message}"))
}

fn positive(field: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(invalid(field, format!("must be positive, got {x}")))
        }
        _ => Ok(()),
    }
}

fn nonzero(field: &str, value: Option<usize>) -> Result<()> {
    match value {
        Some(0) => Err(invalid(field, "must be at least 1")),
        _ => Ok(()),
    }
}

fn length(field: &str, values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        return Err(invalid(
            field,
            format!("expected {n} components, got {}", values.len()),
        ));
    }
    if values.iter().any(|c| !c.is_finite()) {
        return Err(invalid(field, "components must be finite"));
    }
    Ok(())
}

impl Scenario {
    /// Parses and validates a scenario. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("scenario: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("scenario: cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    /// Chart dimension named by the manifold spec.
    pub fn dim(&self) -> usize {
        match &self.manifold {
            ManifoldSpec::Euclidean { dim } | ManifoldSpec::PoincareBall { dim, .. } => *dim,
            ManifoldSpec::RoundSphere { dim, .. } => *dim,
            ManifoldSpec::FlatTorus { periods } => periods.len(),
            ManifoldSpec::PoincareDisk { .. } => 2,
        }
    }

    /// Field-level checks that do not need the manifold to be built.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("manifold", "dimension must be at least 1"));
        }
        positive("speed", self.speed)?;
        positive("horizon", self.horizon)?;
        positive("tolerance", self.tolerance)?;
        self.integrator.validate()?;
        if let Some(init) = &self.initial {
            length("initial.x", &init.x, n)?;
            length("initial.v", &init.v, n)?;
        }
        let p = &self.params;
        nonzero("params.samples", p.samples)?;
        nonzero("params.planes", p.planes)?;
        nonzero("params.steps", p.steps)?;
        positive("params.radius", p.radius)?;
        positive("params.period", p.period)?;
        positive("params.interval", p.interval)?;
        positive("params.t_max", p.t_max)?;
        if let Some(k) = p.k {
            if k < 2 || k >= n {
                return Err(invalid(
                    "params.k",
                    format!("must satisfy 1 < k < {n}, got {k}"),
                ));
            }
        }
        if let Some(w) = &p.vector {
            length("params.vector", w, n)?;
        }
        if let Some(d) = &p.direction {
            length("params.direction", d, n)?;
        }
        if let Some(ws) = &p.vectors {
            for (i, w) in ws.iter().enumerate() {
                length(&format!("params.vectors[{i}]"), w, n)?;
            }
        }
        if let Some(ss) = &p.s_values {
            if ss.is_empty() {
                return Err(invalid("params.s_values", "must not be empty"));
            }
            for (i, s) in ss.iter().enumerate() {
                positive(&format!("params.s_values[{i}]"), Some(*s))?;
            }
        }
        if let Some(sub) = &p.submanifold {
            sub.validate(n)?;
        }
        Ok(())
    }
}

impl SubmanifoldSpec {
    fn validate(&self, n: usize) -> Result<()> {
        const F: &str = "params.submanifold";
        match self {
            SubmanifoldSpec::Affine {
                origin,
                basis,
                bounds,
            } => {
                length(&format!("{F}.origin"), origin, n)?;
                if basis.is_empty() {
                    return Err(invalid(&format!("{F}.basis"), "must not be empty"));
                }
                for (i, b) in basis.iter().enumerate() {
                    length(&format!("{F}.basis[{i}]"), b, n)?;
                }
                if bounds.len() != basis.len() {
                    return Err(invalid(
                        &format!("{F}.bounds"),
                        format!("expected {} intervals, got {}", basis.len(), bounds.len()),
                    ));
                }
                if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
                    return Err(invalid(
                        &format!("{F}.bounds"),
                        "every interval needs lo < hi",
                    ));
                }
            }
            SubmanifoldSpec::Sphere {
                center,
                radius,
                margin,
            } => {
                length(&format!("{F}.center"), center, n)?;
                positive(&format!("{F}.radius"), Some(*radius))?;
                if !(*margin >= 0.0 && *margin < std::f64::consts::FRAC_PI_2) {
                    return Err(invalid(
                        &format!("{F}.margin"),
                        format!("must lie in [0, π/2), got {margin}"),
                    ));
                }
            }
            SubmanifoldSpec::ExpImage {
                basis,
                radius,
                grid,
            } => {
                if basis.is_empty() || basis.len() >= n {
                    return Err(invalid(
                        &format!("{F}.basis"),
                        format!("needs between 1 and {} vectors", n - 1),
                    ));
                }
                for (i, b) in basis.iter().enumerate() {
                    length(&format!("{F}.basis[{i}]"), b, n)?;
                }
                positive(&format!("{F}.radius"), Some(*radius))?;
                if matches!(grid, Some(g) if *g < 2) {
                    return Err(invalid(&format!("{F}.grid"), "must be at least 2"));
                }
            }
            SubmanifoldSpec::Hypersurface {
                normal,
                radius,
                radii,
            } => {
                length(&format!("{F}.normal"), normal, n)?;
                positive(&format!("{F}.radius"), Some(*radius))?;
                nonzero(&format!("{F}.radii"), Some(*radii))?;
            }
        }
        Ok(())
    }
}

/// JSON schema of the scenario format.
pub fn schema() -> String {
    let schema = schemars::schema_for!(Scenario);
    serde_json::to_string_pretty(&schema).expect("schemas serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const LARMOR: &str = r#"{
        "manifold": {"name": "euclidean", "dim": 2},
        "magnetic": {"name": "constant", "b": 1.0},
        "speed": 1.0,
        "initial": {"x": [0.0, 0.0], "v": [1.0, 0.0]},
        "horizon": 6.283185307179586
    }"#;

    fn message(e: Error) -> String {
        assert_eq!(e.exit_code(), 2);
        e.to_string()
    }

    #[test]
    fn parses_minimal_scenario() {
        let s = Scenario::from_json(LARMOR).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.integrator, IntegratorConfig::default());
        assert_eq!(s.seed, 0);
    }

    #[test]
    fn negative_speed_names_the_field() {
        let text = LARMOR.replace("\"speed\": 1.0", "\"speed\": -1.0");
        let msg = message(Scenario::from_json(&text).unwrap_err());
        assert!(msg.contains("speed: must be positive"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = LARMOR
            .replace("\"seed\"", "\"sed\"")
            .replace("\"horizon\"", "\"horizn\"");
        let msg = message(Scenario::from_json(&text).unwrap_err());
        assert!(msg.contains("unknown field `horizn`"), "{msg}");
        let text = LARMOR.replace(
            "\"speed\": 1.0",
            "\"speed\": 1.0, \"params\": {\"sample\": 3}",
        );
        assert!(message(Scenario::from_json(&text).unwrap_err()).contains("sample"));
    }

    #[test]
    fn lengths_checked_against_manifold() {
        let text = LARMOR.replace("\"x\": [0.0, 0.0]", "\"x\": [0.0, 0.0, 0.0]");
        let msg = message(Scenario::from_json(&text).unwrap_err());
        assert!(
            msg.contains("initial.x: expected 2 components, got 3"),
            "{msg}"
        );
    }

    #[test]
    fn nested_fields_are_named() {
        let text = LARMOR.replace(
            "\"speed\": 1.0",
            r#""speed": 1.0, "params": {"submanifold": {"name": "exp_image", "basis": [[1, 0]], "radius": -2}}"#,
        );
        let msg = message(Scenario::from_json(&text).unwrap_err());
        assert!(msg.contains("params.submanifold.radius"), "{msg}");
        let text = LARMOR.replace(
            "\"speed\": 1.0",
            r#""speed": 1.0, "integrator": {"step": 0}"#,
        );
        assert!(message(Scenario::from_json(&text).unwrap_err()).contains("integrator.step"));
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::from_json(LARMOR).unwrap();
        let again = Scenario::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn published_schema_is_current() {
        let shipped = include_str!("../schema/scenario.schema.json");
        assert_eq!(
            shipped.trim_end(),
            schema().trim_end(),
            "regenerate with `magflow schema`"
        );
    }
}
