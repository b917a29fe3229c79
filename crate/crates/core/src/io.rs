//! JSON instance files:
//!
//! ```json
//! {"lambda": 1.0, "sigma": [[y, w], ...], "mu": [[x, t, w], ...]}
//! ```
//!
//! `lambda` may be omitted when the caller supplies one. Errors name the
//! offending field, e.g. `mu[3][1]`.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{DiscreteMeasure1D, DiscreteMeasure2D};
use crate::kernel::BesselParam;
use crate::operators::TwoWeightInstance;

fn bad(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidMeasure {
        field: field.into(),
        reason: reason.into(),
    }
}

fn rows<const N: usize>(doc: &Value, key: &str) -> Result<Vec<[f64; N]>> {
    let list = doc
        .get(key)
        .ok_or_else(|| bad(key, "missing"))?
        .as_array()
        .ok_or_else(|| bad(key, "expected an array"))?;
    list.iter()
        .enumerate()
        .map(|(i, row)| {
            let cells = row
                .as_array()
                .filter(|c| c.len() == N)
                .ok_or_else(|| bad(format!("{key}[{i}]"), format!("expected an array of {N} numbers")))?;
            let mut out = [0.0; N];
            for (k, c) in cells.iter().enumerate() {
                out[k] = c
                    .as_f64()
                    .ok_or_else(|| bad(format!("{key}[{i}][{k}]"), "expected a number"))?;
            }
            Ok(out)
        })
        .collect()
}

/// `lambda` overrides the file's value when given.
pub fn parse_instance(text: &str, lambda: Option<f64>) -> Result<TwoWeightInstance> {
    let doc: Value = serde_json::from_str(text)?;
    if !doc.is_object() {
        return Err(bad("$", "expected an object"));
    }
    let lambda = match (lambda, doc.get("lambda")) {
        (Some(l), _) => l,
        (None, Some(v)) => v.as_f64().ok_or_else(|| bad("lambda", "expected a number"))?,
        (None, None) => return Err(bad("lambda", "missing")),
    };
    let sigma: Vec<(f64, f64)> = rows::<2>(&doc, "sigma")?.into_iter().map(|[y, w]| (y, w)).collect();
    let mu: Vec<(f64, f64, f64)> = rows::<3>(&doc, "mu")?
        .into_iter()
        .map(|[x, t, w]| (x, t, w))
        .collect();
    TwoWeightInstance::new(
        BesselParam::new(lambda)?,
        DiscreteMeasure1D::from_pairs(&sigma)?,
        DiscreteMeasure2D::from_triples(&mu)?,
    )
}

pub fn load_instance(path: impl AsRef<Path>, lambda: Option<f64>) -> Result<TwoWeightInstance> {
    parse_instance(&std::fs::read_to_string(path)?, lambda)
}

pub fn instance_to_json(inst: &TwoWeightInstance) -> Value {
    json!({
        "lambda": inst.param.lambda(),
        "sigma": inst.sigma.atoms().iter().map(|a| [a.y, a.w]).collect::<Vec<_>>(),
        "mu": inst.mu.atoms().iter().map(|a| [a.x, a.t, a.w]).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: Error) -> String {
        match err {
            Error::InvalidMeasure { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn round_trip() {
        let text = r#"{"lambda": 1.5, "sigma": [[1, 2], [3.5, 0.25]], "mu": [[1, 0.5, 1]]}"#;
        let inst = parse_instance(text, None).unwrap();
        assert_eq!(inst.param.lambda(), 1.5);
        assert_eq!(inst.sigma.len(), 2);
        let again = parse_instance(&instance_to_json(&inst).to_string(), None).unwrap();
        assert_eq!(again, inst);
        assert_eq!(parse_instance(text, Some(0.5)).unwrap().param.lambda(), 0.5);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let cases = [
            (r#"{"sigma": [[1, 1]], "mu": [[1, 1, 1]]}"#, "lambda"),
            (r#"{"lambda": 1, "mu": [[1, 1, 1]]}"#, "sigma"),
            (r#"{"lambda": 1, "sigma": [[1, 1], [2]], "mu": [[1, 1, 1]]}"#, "sigma[1]"),
            (r#"{"lambda": 1, "sigma": [[1, 1]], "mu": [[1, "a", 1]]}"#, "mu[0][1]"),
            (r#"{"lambda": 1, "sigma": [[1, -1]], "mu": [[1, 1, 1]]}"#, "sigma[0][1]"),
            (r#"{"lambda": 1, "sigma": [[1, 1]], "mu": [[1, 1, 1], [2, 0, 1]]}"#, "mu[1][1]"),
        ];
        for (text, field) in cases {
            assert_eq!(field_of(parse_instance(text, None).unwrap_err()), field, "{text}");
        }
        assert!(matches!(parse_instance("not json", None), Err(Error::Json(_))));
        assert!(parse_instance(r#"{"lambda": 1, "sigma": [], "mu": [[1, 1, 1]]}"#, None).is_err());
    }
}
