//! JSON forms of words and run certificates. Every double is a
//! hexadecimal float ([`Hf`]), so a stored run reloads bit for bit.

use std::fmt;

use holodense_core::autword::{AffineMap, AutWord, Overshear, Primitive, Shear};
use holodense_core::engine::{
    EngineKind, Hit, KRule, LabyrinthParams, OmegaReport, RunCertificate, StageFailure, StageMargins, StageRecord,
};
use holodense_core::linalg::CMatrix;
use holodense_core::{CPoint, Poly, C64};
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{Pair, Settings};
use crate::hexfloat::Hf;

pub const FORMAT: &str = "holodense-certificate/1";

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid word: {0}")]
    Word(String),
    #[error("unsupported certificate format `{0}`")]
    Format(String),
    #[error("{0}")]
    Invalid(String),
}

fn pair(z: C64) -> Pair {
    [Hf(z.re), Hf(z.im)]
}

fn unpair(p: &Pair) -> C64 {
    C64::new(p[0].0, p[1].0)
}

fn pairs(z: &[C64]) -> Vec<Pair> {
    z.iter().map(|&c| pair(c)).collect()
}

fn unpairs(p: &[Pair]) -> Vec<C64> {
    p.iter().map(unpair).collect()
}

fn matrix(m: &CMatrix) -> Vec<Vec<Pair>> {
    m.data.chunks(m.cols.max(1)).map(pairs).collect()
}

fn unmatrix(rows: &[Vec<Pair>]) -> Result<CMatrix, WireError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(WireError::Word("ragged matrix".into()));
    }
    Ok(CMatrix::from_rows(&rows.iter().map(|r| unpairs(r)).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveWire {
    Shear { v: Vec<Pair>, form: Vec<Pair>, h: Vec<Pair> },
    Overshear { v: Vec<Pair>, form: Vec<Pair>, mu: Vec<Pair>, h: Vec<Pair> },
    Affine { l: Vec<Vec<Pair>>, l_inv: Vec<Vec<Pair>>, t: Vec<Pair> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordWire {
    pub n: usize,
    pub primitives: Vec<PrimitiveWire>,
}

impl From<&AutWord> for WordWire {
    fn from(w: &AutWord) -> Self {
        let primitives = w
            .primitives()
            .iter()
            .map(|p| match p {
                Primitive::Shear(s) => PrimitiveWire::Shear {
                    v: pairs(s.direction()),
                    form: pairs(s.form()),
                    h: pairs(&s.poly().coeffs),
                },
                Primitive::Overshear(s) => PrimitiveWire::Overshear {
                    v: pairs(s.direction()),
                    form: pairs(s.form()),
                    mu: pairs(s.mu()),
                    h: pairs(&s.poly().coeffs),
                },
                Primitive::Affine(a) => PrimitiveWire::Affine {
                    l: matrix(a.matrix()),
                    l_inv: matrix(a.inverse_matrix()),
                    t: pairs(a.offset()),
                },
            })
            .collect();
        WordWire { n: w.dim(), primitives }
    }
}

impl TryFrom<&WordWire> for AutWord {
    type Error = WireError;

    fn try_from(w: &WordWire) -> Result<Self, WireError> {
        let bad = |e: holodense_core::autword::AutError| WireError::Word(e.to_string());
        let prims = w
            .primitives
            .iter()
            .map(|p| {
                Ok(match p {
                    PrimitiveWire::Shear { v, form, h } => {
                        Primitive::Shear(Shear::from_parts(&unpairs(v), &unpairs(form), Poly::new(unpairs(h))).map_err(bad)?)
                    }
                    PrimitiveWire::Overshear { v, form, mu, h } => Primitive::Overshear(
                        Overshear::from_parts(&unpairs(v), &unpairs(form), &unpairs(mu), Poly::new(unpairs(h))).map_err(bad)?,
                    ),
                    PrimitiveWire::Affine { l, l_inv, t } => {
                        Primitive::Affine(AffineMap::from_parts(unmatrix(l)?, unmatrix(l_inv)?, unpairs(t)).map_err(bad)?)
                    }
                })
            })
            .collect::<Result<Vec<_>, WireError>>()?;
        AutWord::from_primitives(w.n, prims).map_err(bad)
    }
}

pub fn word_to_json(w: &AutWord) -> String {
    let mut s = serde_json::to_string_pretty(&WordWire::from(w)).expect("words serialize");
    s.push('\n');
    s
}

pub fn word_from_json(text: &str) -> Result<AutWord, WireError> {
    let w: WordWire = serde_json::from_str(text)?;
    AutWord::try_from(&w)
}

/// Named doubles kept in insertion order, written as a JSON object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Named(pub Vec<(String, Hf)>);

impl Serialize for Named {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

struct NamedVisitor;

impl<'de> Visitor<'de> for NamedVisitor {
    type Value = Named;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object of named numbers")
    }
    fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> Result<Named, A::Error> {
        let mut out = Vec::new();
        while let Some((k, v)) = a.next_entry::<String, Hf>()? {
            out.push((k, v));
        }
        Ok(Named(out))
    }
}

impl<'de> Deserialize<'de> for Named {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_map(NamedVisitor)
    }
}

impl From<&StageMargins> for Named {
    fn from(m: &StageMargins) -> Self {
        Named(m.entries().into_iter().map(|(k, v)| (k.to_string(), Hf(v))).collect())
    }
}

impl TryFrom<&Named> for StageMargins {
    type Error = WireError;

    fn try_from(n: &Named) -> Result<Self, WireError> {
        let entries: Vec<(String, f64)> = n.0.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        StageMargins::from_entries(&entries).map_err(WireError::Invalid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabyrinthWire {
    pub inner: Hf,
    pub outer: Hf,
    pub target: Hf,
    pub seed: u64,
    pub gap_fraction: Hf,
    pub max_balls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KRuleWire {
    pub threshold: Hf,
    pub component_seed: Option<usize>,
    pub dilation_hops: usize,
    pub b_hops: usize,
}

/// Word file names, relative to the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageWords {
    pub theta: String,
    pub phi_base: String,
    pub phi: String,
}

impl StageWords {
    pub fn for_stage(i: usize) -> Self {
        StageWords {
            theta: format!("words/stage_{i:02}_theta.json"),
            phi_base: format!("words/stage_{i:02}_phi_base.json"),
            phi: format!("words/stage_{i:02}_phi.json"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageWire {
    pub index: usize,
    pub eps_prev: Hf,
    pub eps: Hf,
    pub r: Hf,
    pub r_prime: Hf,
    pub r_outer: Hf,
    pub rho: Option<Hf>,
    pub labyrinth: LabyrinthWire,
    pub k0: usize,
    pub words: StageWords,
    pub prime_threshold: Hf,
    pub component_seed: Option<usize>,
    pub v_threshold: Option<Hf>,
    pub k_rule: KRuleWire,
    pub b: usize,
    pub b_param: Pair,
    pub a: Vec<Pair>,
    pub arc: Vec<usize>,
    pub margins: Named,
    pub certified: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitWire {
    pub stage: usize,
    pub a: Vec<Pair>,
    pub b: usize,
    pub b_param: Pair,
    pub residual: Hf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaWire {
    pub samples: usize,
    pub connected: bool,
    pub margin: Hf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureWire {
    pub stage: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateWire {
    pub format: String,
    pub config: Settings,
    /// The single seed every generator of the run is derived from.
    pub seed: u64,
    pub engine: String,
    pub grid_samples: usize,
    pub k0_samples: usize,
    pub eps0: Hf,
    pub targets: Vec<Vec<Pair>>,
    pub stages: Vec<StageWire>,
    pub hits: Vec<HitWire>,
    pub ledger: Hf,
    pub omega: Option<OmegaWire>,
    pub failure: Option<FailureWire>,
    pub certified: bool,
}

fn stage_wire(s: &StageRecord) -> StageWire {
    let l = &s.labyrinth;
    StageWire {
        index: s.index,
        eps_prev: Hf(s.eps_prev),
        eps: Hf(s.eps),
        r: Hf(s.r),
        r_prime: Hf(s.r_prime),
        r_outer: Hf(s.r_outer),
        rho: s.rho.map(Hf),
        labyrinth: LabyrinthWire {
            inner: Hf(l.inner),
            outer: Hf(l.outer),
            target: Hf(l.target),
            seed: l.seed,
            gap_fraction: Hf(l.gap_fraction),
            max_balls: l.max_balls,
        },
        k0: s.k0,
        words: StageWords::for_stage(s.index),
        prime_threshold: Hf(s.prime_threshold),
        component_seed: s.component_seed,
        v_threshold: s.v_threshold.map(Hf),
        k_rule: KRuleWire {
            threshold: Hf(s.k_rule.threshold),
            component_seed: s.k_rule.component_seed,
            dilation_hops: s.k_rule.dilation_hops,
            b_hops: s.k_rule.b_hops,
        },
        b: s.b,
        b_param: pair(s.b_param),
        a: pairs(&s.a.0),
        arc: s.arc.clone(),
        margins: Named::from(&s.margins),
        certified: s.certified,
        failures: s.failures.clone(),
    }
}

impl CertificateWire {
    pub fn new(config: &Settings, cert: &RunCertificate) -> Self {
        CertificateWire {
            format: FORMAT.into(),
            config: config.clone(),
            seed: cert.seed,
            engine: cert.engine.id().into(),
            grid_samples: cert.grid_samples,
            k0_samples: cert.k0_samples,
            eps0: Hf(cert.eps0),
            targets: cert.targets.iter().map(|a| pairs(&a.0)).collect(),
            stages: cert.stages.iter().map(stage_wire).collect(),
            hits: cert
                .hits
                .iter()
                .map(|h| HitWire { stage: h.stage, a: pairs(&h.a.0), b: h.b, b_param: pair(h.b_param), residual: Hf(h.residual) })
                .collect(),
            ledger: Hf(cert.ledger),
            omega: cert.omega.as_ref().map(|o| OmegaWire { samples: o.samples, connected: o.connected, margin: Hf(o.margin) }),
            failure: cert.failure.as_ref().map(|f| FailureWire { stage: f.stage, reason: f.reason.clone() }),
            certified: cert.certified,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificates serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, WireError> {
        let c: CertificateWire = serde_json::from_str(text)?;
        if c.format != FORMAT {
            return Err(WireError::Format(c.format));
        }
        Ok(c)
    }

    /// Rebuilds the stage records, taking the words from `words(stage)`,
    /// which returns `(theta, phi_base, phi)`.
    pub fn records(
        &self,
        mut words: impl FnMut(&StageWire) -> Result<(AutWord, AutWord, AutWord), WireError>,
    ) -> Result<Vec<StageRecord>, WireError> {
        self.stages
            .iter()
            .map(|s| {
                let (theta, phi_base, phi) = words(s)?;
                let l = &s.labyrinth;
                Ok(StageRecord {
                    index: s.index,
                    eps_prev: s.eps_prev.0,
                    eps: s.eps.0,
                    r: s.r.0,
                    r_prime: s.r_prime.0,
                    r_outer: s.r_outer.0,
                    rho: s.rho.map(|x| x.0),
                    labyrinth: LabyrinthParams {
                        inner: l.inner.0,
                        outer: l.outer.0,
                        target: l.target.0,
                        seed: l.seed,
                        gap_fraction: l.gap_fraction.0,
                        max_balls: l.max_balls,
                    },
                    k0: s.k0,
                    theta,
                    phi_base,
                    phi,
                    prime_threshold: s.prime_threshold.0,
                    component_seed: s.component_seed,
                    v_threshold: s.v_threshold.map(|x| x.0),
                    k_rule: KRule {
                        threshold: s.k_rule.threshold.0,
                        component_seed: s.k_rule.component_seed,
                        dilation_hops: s.k_rule.dilation_hops,
                        b_hops: s.k_rule.b_hops,
                    },
                    b: s.b,
                    b_param: unpair(&s.b_param),
                    a: CPoint(unpairs(&s.a)),
                    arc: s.arc.clone(),
                    margins: StageMargins::try_from(&s.margins)?,
                    certified: s.certified,
                    failures: s.failures.clone(),
                })
            })
            .collect()
    }

    /// The certificate as the engine produced it.
    pub fn certificate(&self, records: Vec<StageRecord>) -> Result<RunCertificate, WireError> {
        let engine = crate::config::engine_kind(&self.engine).map_err(|e| WireError::Invalid(e.to_string()))?;
        Ok(RunCertificate {
            engine,
            seed: self.seed,
            grid_samples: self.grid_samples,
            eps0: self.eps0.0,
            targets: self.targets.iter().map(|a| CPoint(unpairs(a))).collect(),
            k0_samples: self.k0_samples,
            stages: records,
            hits: self
                .hits
                .iter()
                .map(|h| Hit { stage: h.stage, a: CPoint(unpairs(&h.a)), b: h.b, b_param: unpair(&h.b_param), residual: h.residual.0 })
                .collect(),
            ledger: self.ledger.0,
            omega: self.omega.as_ref().map(|o| OmegaReport { samples: o.samples, connected: o.connected, margin: o.margin.0 }),
            failure: self.failure.as_ref().map(|f| StageFailure { stage: f.stage, reason: f.reason.clone() }),
            certified: self.certified,
        })
    }

    pub fn kind(&self) -> Result<EngineKind, WireError> {
        crate::config::engine_kind(&self.engine).map_err(|e| WireError::Invalid(e.to_string()))
    }
}
