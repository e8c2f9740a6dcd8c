//! Versioned JSON instance schema with strict field validation, and the
//! conversion into core mapping and query objects.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use regulab_core::{Matrix64, SetValuedMap64, Vector64};

use crate::expr::FunctionSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON in {path}: {message}")]
    Json { path: String, message: String },
    #[error("unsupported schema version {got} (expected {SCHEMA_VERSION})")]
    Version { got: u32 },
    #[error("duplicate instance id \"{0}\"")]
    DuplicateId(String),
    #[error("instance \"{id}\": {message}")]
    Invalid { id: String, message: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchFile {
    pub schema: u32,
    pub instances: Vec<ExperimentInstance>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    EstimateRg,
    EstimateLip,
    VerifyLg,
    CheckSlope,
    CheckCoderivative,
    Newton,
    Duality,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::EstimateRg => "estimate-rg",
            Task::EstimateLip => "estimate-lip",
            Task::VerifyLg => "verify-lg",
            Task::CheckSlope => "check-slope",
            Task::CheckCoderivative => "check-coderivative",
            Task::Newton => "newton",
            Task::Duality => "duality",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentInstance {
    pub id: String,
    pub task: Task,
    pub mapping: MappingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<FunctionSpec>,
    pub base_point: BasePoint,
    pub q: f64,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coderivative: Option<CoderivativeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<Vec<f64>>,
    /// Optional expected value turning a plain estimate into a PASS/FAIL row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<ExpectSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_cap: Option<f64>,
    pub resolution: usize,
    pub refinement_levels: usize,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self { delta: 0.5, mu: None, residual_cap: None, resolution: 21, refinement_levels: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSpec {
    pub x0: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    50
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeSpec {
    pub tau: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoderivativeSpec {
    pub tau: f64,
    pub eta: f64,
    pub alpha: f64,
    #[serde(default = "default_directions")]
    pub direction_samples: usize,
    #[serde(default = "default_perturbations")]
    pub dual_perturbations: usize,
}

fn default_directions() -> usize {
    32
}

fn default_perturbations() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectSpec {
    pub value: f64,
    pub tol: f64,
}

/// Box bound: a number, or the strings "inf" / "-inf".
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Bound {
    Number(f64),
    Named(NamedBound),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum NamedBound {
    #[serde(rename = "inf")]
    PlusInf,
    #[serde(rename = "-inf")]
    MinusInf,
}

impl Bound {
    pub fn value(&self) -> f64 {
        match self {
            Bound::Number(v) => *v,
            Bound::Named(NamedBound::PlusInf) => f64::INFINITY,
            Bound::Named(NamedBound::MinusInf) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MappingSpec {
    Linear { matrix: Vec<Vec<f64>> },
    PolyhedralGraph { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<f64> },
    NormalConeBox { lower: Vec<Bound>, upper: Vec<Bound> },
    Smooth { function: FunctionSpec },
    SampledGraph { pairs: Vec<BasePoint> },
    Sum { base: Box<MappingSpec>, function: FunctionSpec },
    Zero { dim_in: usize, dim_out: usize },
}

impl MappingSpec {
    pub fn dims(&self) -> Result<(usize, usize), String> {
        match self {
            MappingSpec::Linear { matrix } => {
                let rows = matrix.len();
                let cols = matrix.first().map_or(0, Vec::len);
                if rows == 0 || cols == 0 || matrix.iter().any(|r| r.len() != cols) {
                    return Err("linear matrix must be rectangular and nonempty".into());
                }
                Ok((cols, rows))
            }
            MappingSpec::PolyhedralGraph { a, b, c } => {
                let k = c.len();
                if a.len() != k || b.len() != k {
                    return Err("polyhedral graph blocks must have matching row counts".into());
                }
                let n = a.first().map_or(0, Vec::len);
                let m = b.first().map_or(0, Vec::len);
                if n == 0 || m == 0 || a.iter().any(|r| r.len() != n) || b.iter().any(|r| r.len() != m)
                {
                    return Err("polyhedral graph blocks must be rectangular".into());
                }
                Ok((n, m))
            }
            MappingSpec::NormalConeBox { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err("box bounds must be nonempty and of equal length".into());
                }
                for (l, u) in lower.iter().zip(upper) {
                    if l.value() > u.value() {
                        return Err("box bounds must satisfy lower <= upper".into());
                    }
                }
                Ok((lower.len(), lower.len()))
            }
            MappingSpec::Smooth { function } => {
                function.validate()?;
                Ok((function.inputs, function.outputs))
            }
            MappingSpec::SampledGraph { pairs } => {
                let Some(first) = pairs.first() else {
                    return Err("sampled graph must be nonempty".into());
                };
                let (n, m) = (first.x.len(), first.y.len());
                if pairs.iter().any(|p| p.x.len() != n || p.y.len() != m) {
                    return Err("sampled graph pairs must have consistent dimensions".into());
                }
                Ok((n, m))
            }
            MappingSpec::Sum { base, function } => {
                let (n, m) = base.dims()?;
                function.validate()?;
                if function.inputs != n || function.outputs != m {
                    return Err("sum perturbation dimensions must match the base mapping".into());
                }
                Ok((n, m))
            }
            MappingSpec::Zero { dim_in, dim_out } => {
                if *dim_in == 0 || *dim_out == 0 {
                    return Err("zero map dimensions must be positive".into());
                }
                Ok((*dim_in, *dim_out))
            }
        }
    }

    pub fn build(&self) -> Result<SetValuedMap64, String> {
        self.dims()?;
        Ok(match self {
            MappingSpec::Linear { matrix } => {
                SetValuedMap64::linear(Matrix64::from_rows(matrix))
            }
            MappingSpec::PolyhedralGraph { a, b, c } => SetValuedMap64::polyhedral_graph(
                Matrix64::from_rows(a),
                Matrix64::from_rows(b),
                c.clone(),
            ),
            MappingSpec::NormalConeBox { lower, upper } => SetValuedMap64::normal_cone_of_box(
                lower.iter().map(Bound::value).collect(),
                upper.iter().map(Bound::value).collect(),
            ),
            MappingSpec::Smooth { function } => {
                SetValuedMap64::smooth(function.to_vector_fn(), function.to_jacobian_fn())
            }
            MappingSpec::SampledGraph { pairs } => SetValuedMap64::sampled(
                pairs
                    .iter()
                    .map(|p| (Vector64::new(p.x.clone()), Vector64::new(p.y.clone())))
                    .collect(),
            ),
            MappingSpec::Sum { base, function } => regulab_core::mappings::sum_with_function(
                &base.build()?,
                function.to_vector_fn(),
                Some(function.to_jacobian_fn()),
            ),
            MappingSpec::Zero { .. } => SetValuedMap64::Zero,
        })
    }
}

impl ExperimentInstance {
    pub fn validate(&self) -> Result<(), String> {
        let (n, m) = self.mapping.dims()?;
        if self.base_point.x.len() != n {
            return Err(format!(
                "base point x has dimension {}, mapping expects {n}",
                self.base_point.x.len()
            ));
        }
        if self.base_point.y.len() != m {
            return Err(format!(
                "base point y has dimension {}, mapping expects {m}",
                self.base_point.y.len()
            ));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err("order q must be positive and finite".into());
        }
        if !(self.estimator.delta > 0.0) {
            return Err("estimator delta must be positive".into());
        }
        if self.estimator.resolution < 5 {
            return Err("estimator resolution must be at least 5".into());
        }
        if self.estimator.refinement_levels < 1 {
            return Err("estimator refinement_levels must be at least 1".into());
        }
        if let Some(mu) = self.estimator.mu {
            if !(mu > 0.0) {
                return Err("estimator mu must be positive".into());
            }
        }
        if let Some(f) = &self.perturbation {
            f.validate()?;
            if f.inputs != n || f.outputs != m {
                return Err("perturbation dimensions must match the mapping".into());
            }
        }
        if let Some(r) = &self.reference_solution {
            if r.len() != n {
                return Err("reference solution dimension mismatch".into());
            }
        }
        match self.task {
            Task::VerifyLg | Task::Newton => {
                if self.perturbation.is_none() {
                    return Err(format!("task {} requires a perturbation", self.task.name()));
                }
            }
            Task::CheckSlope => {
                if self.slope.is_none() {
                    return Err("task check-slope requires the slope block".into());
                }
            }
            Task::CheckCoderivative => {
                if self.coderivative.is_none() {
                    return Err("task check-coderivative requires the coderivative block".into());
                }
                if !matches!(self.mapping, MappingSpec::PolyhedralGraph { .. }) {
                    return Err("task check-coderivative requires a polyhedral-graph mapping".into());
                }
            }
            _ => {}
        }
        if self.task == Task::Newton {
            if self.newton.is_none() {
                return Err("task newton requires the newton block".into());
            }
            if n != m {
                return Err("task newton requires a square mapping".into());
            }
        }
        Ok(())
    }

    pub fn xbar(&self) -> Vector64 {
        Vector64::new(self.base_point.x.clone())
    }

    pub fn ybar(&self) -> Vector64 {
        Vector64::new(self.base_point.y.clone())
    }
}

/// Parses and validates a batch file; instances come back in file order.
pub fn parse_instance_file(path: &Path) -> Result<Vec<ExperimentInstance>, SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instances_str(&text, &path.display().to_string())
}

/// Parses batch text: either the `{"schema":1,"instances":[...]}` wrapper or
/// a bare single-instance object.
pub fn parse_instances_str(
    text: &str,
    origin: &str,
) -> Result<Vec<ExperimentInstance>, SchemaError> {
    let batch: BatchFile = match serde_json::from_str(text) {
        Ok(b) => b,
        Err(first_err) => match serde_json::from_str::<ExperimentInstance>(text) {
            Ok(inst) => BatchFile { schema: SCHEMA_VERSION, instances: vec![inst] },
            Err(_) => {
                return Err(SchemaError::Json {
                    path: origin.to_string(),
                    message: first_err.to_string(),
                })
            }
        },
    };
    if batch.schema != SCHEMA_VERSION {
        return Err(SchemaError::Version { got: batch.schema });
    }
    let mut seen = BTreeSet::new();
    for inst in &batch.instances {
        if !seen.insert(inst.id.clone()) {
            return Err(SchemaError::DuplicateId(inst.id.clone()));
        }
        inst.validate().map_err(|message| SchemaError::Invalid {
            id: inst.id.clone(),
            message,
        })?;
    }
    Ok(batch.instances)
}

/// Canonical serialized form of a batch (pretty JSON, stable field order).
#[cfg_attr(not(test), allow(dead_code))]
pub fn canonical_batch(instances: &[ExperimentInstance]) -> String {
    let batch =
        BatchFile { schema: SCHEMA_VERSION, instances: instances.to_vec() };
    let mut s = serde_json::to_string_pretty(&batch).expect("batch serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_identity() -> String {
        r#"{
  "schema": 1,
  "instances": [
    {
      "id": "id-rg",
      "task": "estimate-rg",
      "mapping": { "kind": "linear", "matrix": [[1.0]] },
      "base_point": { "x": [0.0], "y": [0.0] },
      "q": 1.0,
      "estimator": { "delta": 0.5, "resolution": 21, "refinement_levels": 1 }
    }
  ]
}"#
        .to_string()
    }

    #[test]
    fn parses_minimal_instance() {
        let instances = parse_instances_str(&minimal_identity(), "test").unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].task, Task::EstimateRg);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let one = minimal_identity();
        let two = one.replace(
            "\"instances\": [\n    {",
            "\"instances\": [\n    {\n      \"placeholder\": 0,",
        );
        let _ = two; // duplicate built explicitly below
        let batch = format!(
            r#"{{"schema":1,"instances":[{inst},{inst}]}}"#,
            inst = r#"{"id":"a","task":"estimate-rg","mapping":{"kind":"zero","dim_in":1,"dim_out":1},"base_point":{"x":[0.0],"y":[0.0]},"q":1.0}"#
        );
        let err = parse_instances_str(&batch, "test").unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = minimal_identity().replace("\"q\": 1.0,", "\"q\": 1.0, \"mystery\": 3,");
        assert!(parse_instances_str(&text, "test").is_err());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let text = minimal_identity().replace("\"x\": [0.0]", "\"x\": [0.0, 1.0]");
        let err = parse_instances_str(&text, "test").unwrap_err();
        assert!(matches!(err, SchemaError::Invalid { .. }));
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let text = minimal_identity().replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(parse_instances_str(&text, "test"), Err(SchemaError::Version { got: 2 })));
    }

    #[test]
    fn box_bounds_accept_inf_strings() {
        let spec: MappingSpec = serde_json::from_str(
            r#"{"kind":"normal-cone-box","lower":[0.0],"upper":["inf"]}"#,
        )
        .unwrap();
        let (n, m) = spec.dims().unwrap();
        assert_eq!((n, m), (1, 1));
        spec.build().unwrap();
    }

    #[test]
    fn canonical_form_is_parse_stable() {
        let instances = parse_instances_str(&minimal_identity(), "test").unwrap();
        let canon = canonical_batch(&instances);
        let reparsed = parse_instances_str(&canon, "test").unwrap();
        assert_eq!(canon, canonical_batch(&reparsed));
    }

    // Round-trip: serialize(parse(file)) must be byte-identical for the
    // bundled canonical-form files. Set REGULAB_BLESS=1 to rewrite them.
    #[test]
    fn bundled_instances_are_canonical() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances");
        for name in ["cubic.json", "newton_sqrt2.json", "acceptance_batch.json"] {
            let path = root.join(name);
            let instances = parse_instance_file(&path).unwrap();
            let canon = canonical_batch(&instances);
            if std::env::var("REGULAB_BLESS").is_ok() {
                std::fs::write(&path, &canon).unwrap();
            }
            let on_disk = std::fs::read_to_string(&path).unwrap();
            assert_eq!(on_disk, canon, "{name} is not in canonical form");
        }
    }
}
