//! Field construction for `qvl generate` and for scenario generators.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use qvl_core::competitor::{radial_extension, SphereField};
use qvl_core::grid::{DomainSpec, GridDomain};
use qvl_core::minimize::{solve_dirichlet, SolveOutput};
use qvl_core::qfield::QField;
use qvl_core::samples::Family;
use qvl_core::QvlError;

use crate::scenario::Generator;

pub const FAMILIES: [&str; 6] = ["constant", "linear", "harmonic", "branch_pair", "complex_branch_pair", "radial_extension"];

/// A built field and what is known about how it was built.
pub struct Built {
    pub field: QField,
    pub info: Value,
    pub solve: Option<SolveOutput>,
    /// The closed-form map behind the field, when there is one.
    pub family: Option<Family>,
}

/// `g(u) = trace(R u)` on the unit sphere, extended with exponent `alpha`
/// about the domain center.
pub fn radial_extension_field(domain: Arc<GridDomain>, trace: &Family, alpha: f64, resolution: usize) -> Result<QField, QvlError> {
    let radius = domain
        .outer_radius()
        .ok_or_else(|| QvlError::Domain("radial extensions need a ball, annulus or polar domain".into()))?;
    let center = domain.center().to_vec();
    let eval = |u: &[f64]| {
        let x: Vec<f64> = u.iter().zip(&center).map(|(a, c)| c + radius * a).collect();
        trace.eval(&x)
    };
    let g = match domain.m() {
        2 => SphereField::circle(resolution, eval)?,
        3 => SphereField::latlong(resolution / 2, resolution, eval)?,
        m => return Err(QvlError::Unsupported(format!("radial extension traces are sampled for m = 2, 3, got {m}"))),
    };
    radial_extension(&g, alpha, domain, &center, radius)
}

pub fn build(generator: &Generator, domain: Option<&DomainSpec>) -> Result<Built, QvlError> {
    let domain = || -> Result<Arc<GridDomain>, QvlError> {
        let spec = domain.ok_or_else(|| QvlError::Parameter("generator needs a domain".into()))?;
        Ok(Arc::new(GridDomain::new(spec.clone())?))
    };
    match generator {
        Generator::Family(f) => {
            let field = f.sample(domain()?)?;
            Ok(Built { field, info: json!({ "generator": "family", "family": f }), solve: None, family: Some(f.clone()) })
        }
        Generator::Solve { boundary, options } => {
            let d = domain()?;
            let zero = qvl_core::QPoint::zero(boundary.q(), boundary.n());
            let b = QField::from_fn(d.clone(), |x, c| if d.is_boundary(x) { boundary.eval(c) } else { Ok(zero.clone()) })?;
            let out = solve_dirichlet(&b, options)?;
            let info = json!({
                "generator": "solve",
                "boundary": boundary,
                "options": options,
                "energy": out.energy,
                "sweeps": out.trace.len() - 1,
                "restart": out.restart,
            });
            Ok(Built { field: out.field.clone(), info, solve: Some(out), family: None })
        }
        Generator::RadialExtension { trace, alpha, resolution } => {
            let field = radial_extension_field(domain()?, trace, *alpha, *resolution)?;
            let info = json!({ "generator": "radial_extension", "trace": trace, "alpha": alpha, "resolution": resolution });
            Ok(Built { field, info, solve: None, family: None })
        }
        Generator::File(path) => {
            let (field, meta) = QField::read_json(Path::new(path))?;
            Ok(Built { field, info: json!({ "generator": "file", "meta": meta }), solve: None, family: None })
        }
    }
}

/// `qvl generate`: `params` holds `domain` plus the family's own fields.
pub fn generate(family: &str, params: &Value) -> Result<(QField, Value), String> {
    let obj = params.as_object().ok_or("--params must be a JSON object")?;
    let domain: DomainSpec =
        serde_json::from_value(obj.get("domain").cloned().ok_or("--params needs a domain")?).map_err(|e| format!("bad domain: {e}"))?;
    let mut rest: Map<String, Value> = obj.clone();
    rest.remove("domain");
    let generator = match family {
        "radial_extension" => {
            let trace: Family =
                serde_json::from_value(rest.get("trace").cloned().ok_or("radial_extension needs a trace family")?).map_err(|e| format!("bad trace: {e}"))?;
            let alpha = rest.get("alpha").and_then(Value::as_f64).ok_or("radial_extension needs alpha")?;
            let resolution = rest.get("resolution").and_then(Value::as_u64).unwrap_or(256) as usize;
            Generator::RadialExtension { trace, alpha, resolution }
        }
        f if FAMILIES.contains(&f) => {
            rest.insert("family".into(), Value::String(f.into()));
            Generator::Family(serde_json::from_value(Value::Object(rest)).map_err(|e| format!("bad parameters for {f}: {e}"))?)
        }
        other => return Err(format!("unknown family '{other}'; known: {}", FAMILIES.join(", "))),
    };
    let built = build(&generator, Some(&domain)).map_err(|e| e.to_string())?;
    let meta = json!({ "family": family, "params": params });
    Ok((built.field, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polar() -> Value {
        json!({"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": 8, "ntheta": 16})
    }

    #[test]
    fn families_by_direct_evaluation() {
        let (f, meta) = generate("harmonic", &json!({"k": 2, "domain": polar()})).unwrap();
        for x in 0..f.domain().len() {
            let c = f.domain().coord(x);
            assert!((f.raw(x)[0] - (c[0] * c[0] - c[1] * c[1])).abs() < 1e-14);
        }
        assert_eq!(meta["family"], "harmonic");
        let (b, _) = generate("branch_pair", &json!({"k": 1, "domain": polar()})).unwrap();
        assert_eq!(b.q(), 2);
        let (c, _) = generate("constant", &json!({"value": [[1.0], [2.0]], "domain": polar()})).unwrap();
        assert!((0..c.domain().len()).all(|x| c.raw(x) == [1.0, 2.0]));
        let (r, _) = generate("radial_extension", &json!({"trace": {"family": "harmonic", "k": 1}, "alpha": 1.0, "domain": polar()})).unwrap();
        let x = r.domain().polar_node(4, 0);
        assert!((r.raw(x)[0] - 0.5).abs() < 1e-12);
        assert!(generate("nope", &json!({"domain": polar()})).unwrap_err().contains("unknown family"));
    }
}
