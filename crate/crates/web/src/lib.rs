//! Browser bindings for the catalog: axiom residuals, transport along an
//! A-path, and the gap between the two transport orders over a homotopy.
//! Every entry point returns a JSON string.

use invalg::algebroid::{check_axioms, check_yang_baxter, random_base};
use invalg::flow::{
    ahomotopy_transport, apath_transport, inf_ahomotopy_vee, inf_ahomotopy_wedge, SURFACE_CELLS,
};
use invalg::sampling::rng_for;
use invalg::{catalog, InvolutionAlgebroid, Report};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

fn checks(report: &Report) -> Vec<Value> {
    report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "max_residual": c.max_residual,
                "tolerance": c.tolerance,
                "passed": c.passed,
            })
        })
        .collect()
}

/// Catalog keys grouped by kind.
#[wasm_bindgen]
pub fn catalog_keys() -> String {
    let entries: Vec<Value> = catalog::list()
        .into_iter()
        .map(|(kind, key, summary)| json!({ "kind": kind, "key": key, "summary": summary }))
        .collect();
    Value::Array(entries).to_string()
}

/// Sampled residuals of the involution axioms and Yang-Baxter.
#[wasm_bindgen]
pub fn axiom_residuals(key: &str, samples: usize, seed: u32) -> String {
    let spec = match catalog::algebroid(key) {
        Ok(s) => s,
        Err(e) => return err(e),
    };
    let inv = InvolutionAlgebroid::from_spec(&spec);
    let mut report = Report::new(key);
    report.absorb("", check_axioms(&inv, samples, seed.into()));
    report.absorb("", check_yang_baxter(&inv, samples, seed.into()));
    json!({ "subject": key, "passed": report.passed(), "checks": checks(&report) }).to_string()
}

/// Transport along a catalog path. Returns times, base points and fiber
/// values at every step.
#[wasm_bindgen]
pub fn path_transport(key: &str, step: f64) -> String {
    let run = || -> invalg::Result<Value> {
        let (phi, a0, alg) = catalog::path(key)?;
        let spec = catalog::algebroid(&alg)?;
        let inv = InvolutionAlgebroid::from_spec(&spec);
        let tr = apath_transport(&inv, &phi, &a0, step)?;
        let dim_m = spec.dim_m();
        let (m, b): (Vec<_>, Vec<_>) = tr
            .trajectory
            .states
            .iter()
            .map(|x| (x[..dim_m].to_vec(), x[dim_m..].to_vec()))
            .unzip();
        Ok(json!({
            "algebroid": alg,
            "times": tr.trajectory.times,
            "m": m,
            "b": b,
            "anchor_residual": tr.anchor_residual,
        }))
    };
    run().map_or_else(err, |v| v.to_string())
}

/// Both transport orders over a homotopy and their pointwise gap. `key` is
/// a catalog homotopy, or an algebroid key, in which case the surface is
/// the infinitesimal homotopy of a random fiber surface drawn from `seed`.
#[wasm_bindgen]
pub fn homotopy_discrepancy(key: &str, step: f64, seed: u32) -> String {
    let run = || -> invalg::Result<Value> {
        let (tr, alg, dim_m) = match catalog::homotopy(key) {
            Ok((hv, a0, alg)) => {
                let spec = catalog::algebroid(&alg)?;
                let inv = InvolutionAlgebroid::from_spec(&spec);
                (ahomotopy_transport(&inv, &hv, &a0, step, SURFACE_CELLS)?, alg, spec.dim_m())
            }
            Err(_) => {
                let spec = catalog::algebroid(key)?;
                let inv = InvolutionAlgebroid::from_spec(&spec);
                let mut rng = rng_for(seed.into(), 0);
                let m = random_base(&mut rng, spec.dim_m());
                let eta = catalog::random_fiber_surface(&mut rng, spec.dim_a(), 3);
                let hv = inf_ahomotopy_vee(&inv, &eta, &m)?;
                (inf_ahomotopy_wedge(&inv, &hv, step, SURFACE_CELLS)?, key.to_string(), spec.dim_m())
            }
        };
        let gap: Vec<Vec<f64>> = tr
            .phi0
            .iter()
            .zip(&tr.phi1)
            .map(|(r0, r1)| {
                r0.iter()
                    .zip(r1)
                    .map(|(p, q)| p[dim_m..].iter().zip(&q[dim_m..]).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())))
                    .collect()
            })
            .collect();
        Ok(json!({
            "algebroid": alg,
            "grid": tr.grid,
            "gap": gap,
            "discrepancy": tr.discrepancy,
            "anchor_residual": tr.anchor_residual,
        }))
    };
    run().map_or_else(err, |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn so3_passes_and_broken_jacobi_does_not() {
        assert_eq!(parse(&axiom_residuals("so3", 10, 1))["passed"], true);
        assert_eq!(parse(&axiom_residuals("broken-jacobi", 10, 1))["passed"], false);
        assert!(parse(&axiom_residuals("nope", 10, 1))["error"].is_string());
    }

    #[test]
    fn transport_has_one_row_per_step() {
        let v = parse(&path_transport("tangent-path(2)", 0.1));
        assert_eq!(v["times"].as_array().unwrap().len(), 11);
        assert_eq!(v["b"][0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn invalid_homotopy_shows_a_gap() {
        let v = parse(&homotopy_discrepancy("tangent-homotopy-invalid", 0.05, 0));
        assert!(v["discrepancy"].as_f64().unwrap() > 1e-3);
        let v = parse(&homotopy_discrepancy("tangent-homotopy", 0.05, 0));
        assert!(v["discrepancy"].as_f64().unwrap() < 1e-8);
    }

    #[test]
    fn infinitesimal_surface_over_so3_is_consistent() {
        let v = parse(&homotopy_discrepancy("so3", 0.02, 7));
        assert!(v["discrepancy"].as_f64().unwrap() < 1e-6, "{v}");
    }
}
