//! JSON fixture files.
//!
//! Every object is either a catalog key or explicit polynomial tables. A
//! polynomial map is `{"in_dim", "out_dim", "terms"}` with one list of
//! `{"coeff", "exponents"}` per output coordinate. Indices are zero-based.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "kind": "algebroid",
//!   "name": "so3",
//!   "dim_m": 0,
//!   "dim_a": 3,
//!   "structure": [
//!     {"i": 0, "j": 1, "k": 2, "terms": [{"coeff": 1.0, "exponents": []}]}
//!   ]
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algebroid::{flip_from_bracket, pair_count, pair_index, AlgebroidSpec, Anchor, InvolutionAlgebroid};
use crate::bundle::{AElement, ConnectionSpec, ScalarFieldSpec, SectionSpec};
use crate::catalog;
use crate::error::{Error, Result};
use crate::flow::{AHomotopyVariation, APathVariation};
use crate::groupoid::MatrixGroupSpec;
use crate::poly::{PolyMap, Term};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: Fixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fixture {
    Algebroid(AlgebroidData),
    InvolutionFlip(FlipData),
    Group(GroupData),
    Section(SectionData),
    ScalarField(ScalarFieldData),
    Apath(PathData),
    Ahomotopy(HomotopyData),
    Connection(ConnectionData),
}

/// One structure function `C^k_{ij}(m)`. Giving `(j, i)` stores its
/// negative; giving both requires them to agree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgebroidData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_a: Option<usize>,
    /// `ρ^α_j` at output `α·dim_A + j`; zero if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<PolyMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub structure: Vec<StructureEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipData {
    pub algebroid: AlgebroidData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<ConnectionData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub algebra_basis: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionData {
    pub poly: PolyMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldData {
    pub poly: PolyMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementData {
    pub m: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebroid: Option<AlgebroidData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// `1 → 2·dim_M + 2·dim_A`, blocks `m, a, ṁ, ȧ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PolyMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<ElementData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebroid: Option<AlgebroidData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<PolyMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<PolyMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<ElementData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionData {
    pub dim_m: usize,
    pub dim_a: usize,
    /// `Γ^k_{αj}` at output `(α·dim_A + j)·dim_A + k`.
    pub gamma: PolyMap,
}

fn missing(what: &str) -> Error {
    Error::InvalidFixture(format!("missing field `{what}`"))
}

impl AlgebroidData {
    pub fn catalog(key: &str) -> Self {
        AlgebroidData {
            catalog: Some(key.to_string()),
            ..Default::default()
        }
    }

    pub fn to_spec(&self) -> Result<AlgebroidSpec> {
        if let Some(key) = &self.catalog {
            return catalog::algebroid(key);
        }
        let dim_m = self.dim_m.ok_or_else(|| missing("dim_m"))?;
        let dim_a = self.dim_a.ok_or_else(|| missing("dim_a"))?;
        let name = self.name.clone().unwrap_or_else(|| "fixture".to_string());
        let anchor = match &self.anchor {
            Some(p) => p.clone(),
            None => PolyMap::zero(dim_m, dim_m * dim_a),
        };
        let anchor = Anchor::new(dim_m, dim_a, anchor)
            .map_err(|e| Error::InvalidFixture(format!("anchor: {e}")))?;
        // (i, j, k) with i < j ↦ (terms, sign-normalised)
        let mut table: BTreeMap<(usize, usize, usize), PolyMap> = BTreeMap::new();
        for e in &self.structure {
            if e.i >= dim_a || e.j >= dim_a || e.k >= dim_a {
                return Err(Error::InvalidFixture(format!(
                    "structure index ({}, {}, {}) out of range",
                    e.i, e.j, e.k
                )));
            }
            let p = PolyMap::new(dim_m, 1, vec![e.terms.clone()])
                .map_err(|err| Error::InvalidFixture(format!("structure ({}, {}, {}): {err}", e.i, e.j, e.k)))?;
            if e.i == e.j {
                if p.eval(&vec![0.0; dim_m]) != vec![0.0] || p.degree() > 0 || !p.terms()[0].iter().all(|t| t.coeff == 0.0) {
                    return Err(Error::InvalidFixture(format!("C({0}, {0}) must vanish", e.i)));
                }
                continue;
            }
            let (key, p) = if e.i < e.j { ((e.i, e.j, e.k), p) } else { ((e.j, e.i, e.k), p.scale(-1.0)) };
            match table.get(&key) {
                Some(prev) if !same_poly(prev, &p) => {
                    return Err(Error::InvalidFixture(format!(
                        "structure functions for ({}, {}) and ({}, {}) are not antisymmetric at k = {}",
                        key.0, key.1, key.1, key.0, key.2
                    )))
                }
                Some(_) => {}
                None => {
                    table.insert(key, p);
                }
            }
        }
        let mut terms = vec![Vec::new(); pair_count(dim_a) * dim_a];
        for ((i, j, k), p) in table {
            terms[pair_index(dim_a, i, j) * dim_a + k] = p.terms()[0].clone();
        }
        AlgebroidSpec::new(name, anchor, PolyMap::new(dim_m, terms.len(), terms)?)
    }
}

/// Equality of polynomials up to term order and zero coefficients.
fn same_poly(a: &PolyMap, b: &PolyMap) -> bool {
    let canon = |p: &PolyMap| -> BTreeMap<Vec<u32>, u64> {
        let mut m: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in &p.terms()[0] {
            *m.entry(t.exponents.clone()).or_insert(0.0) += t.coeff;
        }
        m.into_iter().filter(|(_, c)| *c != 0.0).map(|(e, c)| (e, c.to_bits())).collect()
    };
    canon(a) == canon(b)
}

impl ConnectionData {
    pub fn to_connection(&self) -> Result<ConnectionSpec> {
        ConnectionSpec::new(self.dim_m, self.dim_a, self.gamma.clone())
    }
}

impl FlipData {
    pub fn to_involution(&self) -> Result<InvolutionAlgebroid> {
        let spec = self.algebroid.to_spec()?;
        match &self.connection {
            Some(c) => flip_from_bracket(&spec, &c.to_connection()?),
            None => Ok(InvolutionAlgebroid::from_spec(&spec)),
        }
    }
}

impl GroupData {
    pub fn to_spec(&self) -> Result<MatrixGroupSpec> {
        if let Some(key) = &self.catalog {
            return catalog::group(key);
        }
        let n = self.n.ok_or_else(|| missing("n"))?;
        MatrixGroupSpec::new(
            self.name.clone().unwrap_or_else(|| "group".to_string()),
            n,
            self.algebra_basis.clone(),
        )
    }
}

impl ElementData {
    fn to_element(&self) -> AElement<f64> {
        AElement::new(self.m.clone(), self.a.clone())
    }
}

impl PathData {
    pub fn resolve(&self) -> Result<(AlgebroidSpec, APathVariation, AElement<f64>)> {
        if let Some(key) = &self.catalog {
            let (p, a0, alg) = catalog::path(key)?;
            return Ok((catalog::algebroid(&alg)?, p, a0));
        }
        let spec = self.algebroid.as_ref().ok_or_else(|| missing("algebroid"))?.to_spec()?;
        let phi = self.phi.clone().ok_or_else(|| missing("phi"))?;
        let a0 = self.a0.as_ref().ok_or_else(|| missing("a0"))?.to_element();
        let path = APathVariation::new(spec.dim_m(), spec.dim_a(), self.t_end.unwrap_or(1.0), phi)?;
        Ok((spec, path, a0))
    }
}

impl HomotopyData {
    pub fn resolve(&self) -> Result<(AlgebroidSpec, AHomotopyVariation, AElement<f64>)> {
        if let Some(key) = &self.catalog {
            let (h, a0, alg) = catalog::homotopy(key)?;
            return Ok((catalog::algebroid(&alg)?, h, a0));
        }
        let spec = self.algebroid.as_ref().ok_or_else(|| missing("algebroid"))?.to_spec()?;
        let h0 = self.h0.clone().ok_or_else(|| missing("h0"))?;
        let h1 = self.h1.clone().ok_or_else(|| missing("h1"))?;
        let a0 = self.a0.as_ref().ok_or_else(|| missing("a0"))?.to_element();
        Ok((spec.clone(), AHomotopyVariation::new(spec.dim_m(), spec.dim_a(), h0, h1)?, a0))
    }
}

impl SectionData {
    pub fn to_section(&self) -> SectionSpec {
        SectionSpec::new(self.poly.clone())
    }
}

impl ScalarFieldData {
    pub fn to_field(&self) -> Result<ScalarFieldSpec> {
        ScalarFieldSpec::new(self.poly.clone())
    }
}

impl FixtureFile {
    pub fn new(body: Fixture) -> Self {
        FixtureFile {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: FixtureFile = serde_json::from_str(text)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidFixture(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        f.validate()?;
        Ok(f)
    }

    /// Builds every object once so malformed data is rejected at load.
    pub fn validate(&self) -> Result<()> {
        match &self.body {
            Fixture::Algebroid(a) => a.to_spec().map(|_| ()),
            Fixture::InvolutionFlip(f) => f.to_involution().map(|_| ()),
            Fixture::Group(g) => g.to_spec().map(|_| ()),
            Fixture::Section(_) => Ok(()),
            Fixture::ScalarField(s) => s.to_field().map(|_| ()),
            Fixture::Apath(p) => p.resolve().map(|_| ()),
            Fixture::Ahomotopy(h) => h.resolve().map(|_| ()),
            Fixture::Connection(c) => c.to_connection().map(|_| ()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }
}

/// Writes a spec as explicit tables, listing each `i < j` pair once.
pub fn algebroid_data(spec: &AlgebroidSpec) -> AlgebroidData {
    let n = spec.dim_a();
    let mut structure = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                let terms = spec.c.terms()[pair_index(n, i, j) * n + k].clone();
                if !terms.is_empty() {
                    structure.push(StructureEntry { i, j, k, terms });
                }
            }
        }
    }
    AlgebroidData {
        catalog: None,
        name: Some(spec.name.clone()),
        dim_m: Some(spec.dim_m()),
        dim_a: Some(n),
        anchor: Some(spec.anchor.rho.clone()),
        structure,
    }
}
