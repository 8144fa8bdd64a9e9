//! JSON bodies exchanged on `/sparql`.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use preemptql_core::client::{PageStats, Request};
use preemptql_core::{SolutionMapping, Term, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonTerm {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub datatype: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lang: Option<String>,
}

impl From<&Term> for JsonTerm {
    fn from(t: &Term) -> Self {
        JsonTerm {
            kind: t.kind().as_str().to_string(),
            value: t.lexical().to_string(),
            datatype: t.datatype().map(str::to_string),
            lang: t.language().map(str::to_string),
        }
    }
}

impl JsonTerm {
    pub fn to_term(&self) -> Result<Term, String> {
        Ok(match (self.kind.as_str(), &self.datatype, &self.lang) {
            ("iri", None, None) => Term::iri(&self.value),
            ("blank", None, None) => Term::blank(&self.value),
            ("literal", None, None) => Term::literal(&self.value),
            ("literal", Some(dt), None) => Term::typed_literal(&self.value, dt),
            ("literal", None, Some(lang)) => Term::lang_literal(&self.value, lang),
            (kind, ..) => return Err(format!("malformed {kind} term")),
        })
    }
}

pub type JsonMapping = BTreeMap<String, JsonTerm>;

pub fn mapping_to_json(m: &SolutionMapping) -> JsonMapping {
    m.iter().map(|(v, t)| (v.name().to_string(), JsonTerm::from(t))).collect()
}

pub fn mapping_from_json(m: &JsonMapping) -> Result<SolutionMapping, String> {
    let mut out = SolutionMapping::new();
    for (v, t) in m {
        out.insert(Variable::new(v.as_str()), t.to_term()?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestBody {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<String>,
}

impl RequestBody {
    pub fn from_request(r: &Request) -> Self {
        match r {
            Request::Query(q) => RequestBody { query: Some(q.clone()), plan: None },
            Request::Plan(p) => RequestBody { query: None, plan: Some(B64.encode(p)) },
        }
    }

    /// Exactly one of `query` and `plan` must be present.
    pub fn into_request(self) -> Result<Request, String> {
        match (self.query, self.plan) {
            (Some(q), None) => Ok(Request::Query(q)),
            (None, Some(p)) => B64.decode(p.as_bytes()).map(Request::Plan).map_err(|e| format!("plan is not base64: {e}")),
            _ => Err("body needs exactly one of \"query\" and \"plan\"".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonStats {
    pub suspend_ns: u64,
    pub resume_ns: u64,
    pub plan_bytes: u64,
    pub quantum_used_ns: u64,
    #[serde(default)]
    pub quantum_seq: u64,
}

impl From<PageStats> for JsonStats {
    fn from(s: PageStats) -> Self {
        JsonStats {
            suspend_ns: s.suspend_ns,
            resume_ns: s.resume_ns,
            plan_bytes: s.plan_bytes,
            quantum_used_ns: s.quantum_used_ns,
            quantum_seq: s.quantum_seq,
        }
    }
}

impl From<JsonStats> for PageStats {
    fn from(s: JsonStats) -> Self {
        PageStats {
            suspend_ns: s.suspend_ns,
            resume_ns: s.resume_ns,
            plan_bytes: s.plan_bytes,
            quantum_used_ns: s.quantum_used_ns,
            quantum_seq: s.quantum_seq,
        }
    }
}

/// Rows, the saved plan when more remain, and the server's stats.
pub type DecodedPage = (Vec<SolutionMapping>, Option<Vec<u8>>, PageStats);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseBody {
    pub bindings: Vec<JsonMapping>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<String>,
    pub complete: bool,
    pub stats: JsonStats,
}

impl ResponseBody {
    pub fn new(bindings: &[SolutionMapping], plan: Option<&[u8]>, stats: PageStats) -> Self {
        ResponseBody {
            bindings: bindings.iter().map(mapping_to_json).collect(),
            plan: plan.map(|p| B64.encode(p)),
            complete: plan.is_none(),
            stats: stats.into(),
        }
    }

    pub fn decode(self) -> Result<DecodedPage, String> {
        let bindings = self.bindings.iter().map(mapping_from_json).collect::<Result<Vec<_>, _>>()?;
        let plan = match self.plan {
            Some(p) => Some(B64.decode(p.as_bytes()).map_err(|e| format!("plan is not base64: {e}"))?),
            None => None,
        };
        if plan.is_some() == self.complete {
            return Err("complete flag disagrees with plan presence".into());
        }
        Ok((bindings, plan, self.stats.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
