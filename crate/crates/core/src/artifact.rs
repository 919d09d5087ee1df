//! Versioned JSON documents for built models and perturbations.
//!
//! A model document stores every construction datum. Loading rebuilds the
//! model from the stored parameters and requires the stored data to agree
//! bit for bit, so a hand-edited coordinate is rejected rather than silently
//! changing the map.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::anosov::{build_model, MapModel, ModelParams};
use crate::error::{Error, Result};
use crate::perturb::Patch;

pub const MODEL_FORMAT: &str = "semithick-model";
pub const PERTURBATION_FORMAT: &str = "semithick-perturbation";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    model: MapModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationDocument {
    pub format: String,
    pub version: u32,
    /// Parameters of the base model the patches refer to.
    pub base: ModelParams,
    pub patches: Vec<Patch>,
}

/// Serialize a model as pretty-printed JSON.
pub fn model_to_string(m: &MapModel) -> Result<String> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: VERSION,
        model: m.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn check_header(v: &Value, format: &str) -> Result<()> {
    let found = v.get("format").and_then(Value::as_str).unwrap_or("");
    if found != format {
        return Err(Error::Artifact(format!("expected a {format} document, found format {found:?}")));
    }
    let version = v
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Artifact("missing version".into()))?;
    if version != VERSION as u64 {
        return Err(Error::Version {
            found: version as u32,
            expected: VERSION,
        });
    }
    Ok(())
}

/// First path at which two JSON values differ.
fn first_difference(a: &Value, b: &Value, path: &str) -> Option<String> {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = format!("{path}.{k}");
                match y.get(k) {
                    Some(vb) => {
                        if let Some(d) = first_difference(va, vb, &p) {
                            return Some(d);
                        }
                    }
                    None => return Some(p),
                }
            }
            y.keys().find(|k| !x.contains_key(*k)).map(|k| format!("{path}.{k}"))
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Some(format!("{path} (length {} vs {})", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .find_map(|(i, (va, vb))| first_difference(va, vb, &format!("{path}[{i}]")))
        }
        _ => (a != b).then(|| format!("{path}: stored {a}, rebuilt {b}")),
    }
}

/// Parse a model document, rebuild from its parameters and check that every
/// stored datum matches the rebuilt model exactly.
pub fn model_from_str(text: &str) -> Result<MapModel> {
    let v: Value = serde_json::from_str(text)?;
    check_header(&v, MODEL_FORMAT)?;
    let doc: ModelDocument = serde_json::from_value(v.clone())?;
    let rebuilt = build_model(&doc.model.params)?;
    let fresh = serde_json::to_value(&rebuilt)?;
    if let Some(d) = first_difference(&v["model"], &fresh, "model") {
        return Err(Error::Artifact(format!("stored model does not match its parameters at {d}")));
    }
    Ok(rebuilt)
}

pub fn perturbation_to_string(base: &ModelParams, patches: &[Patch]) -> Result<String> {
    let doc = PerturbationDocument {
        format: PERTURBATION_FORMAT.into(),
        version: VERSION,
        base: base.clone(),
        patches: patches.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn perturbation_from_str(text: &str) -> Result<PerturbationDocument> {
    let v: Value = serde_json::from_str(text)?;
    check_header(&v, PERTURBATION_FORMAT)?;
    Ok(serde_json::from_value(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anosov::FiberMap;
    use crate::torus::TorusPoint;
    use std::sync::OnceLock;

    fn text() -> &'static (MapModel, String) {
        static T: OnceLock<(MapModel, String)> = OnceLock::new();
        T.get_or_init(|| {
            let m = build_model(&ModelParams::default()).unwrap();
            let s = model_to_string(&m).unwrap();
            (m, s)
        })
    }

    #[test]
    fn round_trip_is_exact() {
        let (m, s) = text();
        let back = model_from_str(s).unwrap();
        assert_eq!(&back, m);
        assert_eq!(model_to_string(&back).unwrap(), *s);
        let p = TorusPoint::new(0.123, 0.456);
        assert_eq!(back.apply(&p), m.apply(&p));
    }

    #[test]
    fn tampered_coordinate_is_rejected() {
        let (_, s) = text();
        let mut v: Value = serde_json::from_str(s).unwrap();
        let x = v["model"]["regions"]["uk"]["x"][1].as_f64().unwrap();
        v["model"]["regions"]["uk"]["x"][1] = Value::from(x * (1.0 + 1e-15));
        let err = model_from_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("model.regions.uk.x[1]"), "{err}");
    }

    #[test]
    fn headers_are_checked() {
        let (_, s) = text();
        let mut v: Value = serde_json::from_str(s).unwrap();
        v["version"] = Value::from(7);
        assert!(matches!(model_from_str(&v.to_string()), Err(Error::Version { found: 7, .. })));
        v["format"] = Value::from("something-else");
        assert!(matches!(model_from_str(&v.to_string()), Err(Error::Artifact(_))));
        assert!(matches!(model_from_str("{not json"), Err(Error::Json(_))));
    }

    #[test]
    fn perturbations_round_trip() {
        let (m, _) = text();
        let (lo, hi) = m.regions.q_i[0];
        let s = crate::perturb::RoughStripe::new(
            m,
            m.regions.rh[0].x,
            crate::perturb::Graph::Affine { c: lo + 0.2 * (hi - lo), slope: 0.0 },
            crate::perturb::Graph::Sine { c: lo + 0.5 * (hi - lo), amp: 1e-9, freq: 300.0, phase: 0.1 },
        )
        .unwrap();
        let map = crate::perturb::linearize_on_stripe(m, &s).unwrap();
        let text = perturbation_to_string(&m.params, &map.patches).unwrap();
        let doc = perturbation_from_str(&text).unwrap();
        assert_eq!(doc.patches, map.patches);
        assert!(model_from_str(&text).is_err());
    }
}
