//! Closed, auditable function format: per output coordinate a polynomial
//! (coefficient + exponent vector terms) plus named nonlinear terms applied
//! to a single input coordinate. No embedded code execution; Jacobians are
//! derived analytically.

use serde::{Deserialize, Serialize};

use regulab_core::{JacobianFn, Matrix64, Vector64, VectorFn};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub components: Vec<ComponentSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nonlinear: Vec<NonlinearTermSpec>,
}

/// Monomial `coef · Π x_i^{powers[i]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// `coef · kind(x_arg)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearTermSpec {
    pub kind: Nonlinearity,
    pub coef: f64,
    pub arg: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Sin,
    Cos,
    SqrtAbs,
    Cube,
}

impl Nonlinearity {
    fn eval(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Sin => u.sin(),
            Nonlinearity::Cos => u.cos(),
            Nonlinearity::SqrtAbs => u.abs().sqrt(),
            Nonlinearity::Cube => u * u * u,
        }
    }

    fn derivative(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Sin => u.cos(),
            Nonlinearity::Cos => -u.sin(),
            Nonlinearity::SqrtAbs => {
                if u == 0.0 {
                    0.0
                } else {
                    u.signum() / (2.0 * u.abs().sqrt())
                }
            }
            Nonlinearity::Cube => 3.0 * u * u,
        }
    }
}

impl FunctionSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.components.len() != self.outputs {
            return Err(format!(
                "function declares {} outputs but has {} components",
                self.outputs,
                self.components.len()
            ));
        }
        for (ci, comp) in self.components.iter().enumerate() {
            for term in &comp.terms {
                if term.powers.len() != self.inputs {
                    return Err(format!(
                        "component {ci}: term has {} powers, expected {}",
                        term.powers.len(),
                        self.inputs
                    ));
                }
                if !term.coef.is_finite() {
                    return Err(format!("component {ci}: non-finite coefficient"));
                }
            }
            for nl in &comp.nonlinear {
                if nl.arg >= self.inputs {
                    return Err(format!(
                        "component {ci}: nonlinear argument index {} out of range",
                        nl.arg
                    ));
                }
                if !nl.coef.is_finite() {
                    return Err(format!("component {ci}: non-finite coefficient"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|comp| {
                let mut s = 0.0;
                for term in &comp.terms {
                    let mut v = term.coef;
                    for (i, &p) in term.powers.iter().enumerate() {
                        v *= x[i].powi(p as i32);
                    }
                    s += v;
                }
                for nl in &comp.nonlinear {
                    s += nl.coef * nl.kind.eval(x[nl.arg]);
                }
                s
            })
            .collect()
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.components
            .iter()
            .map(|comp| {
                let mut row = vec![0.0; self.inputs];
                for term in &comp.terms {
                    for (j, cell) in row.iter_mut().enumerate() {
                        let p = term.powers[j];
                        if p == 0 {
                            continue;
                        }
                        let mut v = term.coef * p as f64 * x[j].powi(p as i32 - 1);
                        for (i, &pi) in term.powers.iter().enumerate() {
                            if i != j {
                                v *= x[i].powi(pi as i32);
                            }
                        }
                        *cell += v;
                    }
                }
                for nl in &comp.nonlinear {
                    row[nl.arg] += nl.coef * nl.kind.derivative(x[nl.arg]);
                }
                row
            })
            .collect()
    }

    /// Compiles into a function oracle for the core.
    pub fn to_vector_fn(&self) -> VectorFn<f64> {
        let spec = self.clone();
        VectorFn::new(self.inputs, self.outputs, move |x: &Vector64| {
            Vector64::new(spec.eval(x.coords()))
        })
    }

    /// Analytic Jacobian oracle.
    pub fn to_jacobian_fn(&self) -> JacobianFn<f64> {
        let spec = self.clone();
        let (n, m) = (self.inputs, self.outputs);
        JacobianFn::new(n, m, move |x: &Vector64| {
            Matrix64::from_rows(&spec.jacobian(x.coords()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> FunctionSpec {
        serde_json::from_str(
            r#"{"inputs":1,"outputs":1,"components":[{"terms":[{"coef":1.0,"powers":[3]}]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn evaluates_polynomials_and_jacobians() {
        let f = cubic();
        f.validate().unwrap();
        assert_eq!(f.eval(&[2.0]), vec![8.0]);
        assert_eq!(f.jacobian(&[2.0]), vec![vec![12.0]]);
    }

    #[test]
    fn named_nonlinearities() {
        let f: FunctionSpec = serde_json::from_str(
            r#"{"inputs":2,"outputs":2,"components":[
                {"nonlinear":[{"kind":"sin","coef":0.1,"arg":0}]},
                {"nonlinear":[{"kind":"cos","coef":2.0,"arg":1}]}]}"#,
        )
        .unwrap();
        f.validate().unwrap();
        let v = f.eval(&[0.5, 0.25]);
        assert!((v[0] - 0.1 * 0.5f64.sin()).abs() < 1e-15);
        assert!((v[1] - 2.0 * 0.25f64.cos()).abs() < 1e-15);
        let j = f.jacobian(&[0.5, 0.25]);
        assert!((j[0][0] - 0.1 * 0.5f64.cos()).abs() < 1e-15);
        assert!((j[1][1] + 2.0 * 0.25f64.sin()).abs() < 1e-15);
        assert_eq!(j[0][1], 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let f: FunctionSpec = serde_json::from_str(
            r#"{"inputs":2,"outputs":1,"components":[{"terms":[{"coef":1.0,"powers":[1]}]}]}"#,
        )
        .unwrap();
        assert!(f.validate().is_err());
        let f: FunctionSpec = serde_json::from_str(
            r#"{"inputs":1,"outputs":1,"components":[{"nonlinear":[{"kind":"sin","coef":1.0,"arg":3}]}]}"#,
        )
        .unwrap();
        assert!(f.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: Result<FunctionSpec, _> = serde_json::from_str(
            r#"{"inputs":1,"outputs":1,"components":[],"extra":true}"#,
        );
        assert!(r.is_err());
    }
}
