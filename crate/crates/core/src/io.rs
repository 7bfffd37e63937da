//! On-disk forms: `prepared/v1`, the amplitude sidecar and `povm/v1`.

use crate::error::{Error, Result};
use crate::graphstate::{DecorationCase, DomainGraph, PovmOutcome, Recovery};
use crate::lattice::{from_json, to_json, SiteGraph};
use crate::protocol::{prepare, FusionRecord, PreparedState, Strategy};
use crate::qstate::{PureState, C64};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

pub const PREPARED_SCHEMA: &str = "prepared/v1";
pub const POVM_SCHEMA: &str = "povm/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedDoc {
    pub schema: String,
    /// Input graph as a `sitegraph/v1` object.
    pub graph: Value,
    /// Graph the state lives on, as a `sitegraph/v1` object.
    pub realized_graph: Value,
    pub strategy: Strategy,
    pub deformation: f64,
    pub seed: u64,
    pub run: u64,
    pub num_qubits: usize,
    pub transcript: Vec<FusionRecord>,
    /// File name of the amplitude sidecar, relative to the document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<String>,
}

fn graph_value(g: &SiteGraph) -> Value {
    serde_json::from_str(&to_json(g)).expect("sitegraph JSON parses")
}

impl PreparedDoc {
    pub fn new(input: &SiteGraph, p: &PreparedState, sidecar: Option<&str>) -> Self {
        PreparedDoc {
            schema: PREPARED_SCHEMA.into(),
            graph: graph_value(input),
            realized_graph: graph_value(&p.realized_graph),
            strategy: p.strategy,
            deformation: p.deformation,
            seed: p.seed,
            run: p.run,
            num_qubits: p.state.num_qubits(),
            transcript: p.transcript.clone(),
            amplitudes: sidecar.map(str::to_string),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PreparedDoc = serde_json::from_str(text)?;
        if doc.schema != PREPARED_SCHEMA {
            return Err(Error::UnknownFormat(doc.schema));
        }
        Ok(doc)
    }

    pub fn input_graph(&self) -> Result<SiteGraph> {
        from_json(&self.graph.to_string())
    }

    /// Rebuild the state by replaying `prepare` from the recorded seed and
    /// run. The replayed transcript and realized graph must match the file.
    pub fn replay(&self) -> Result<PreparedState> {
        let g = self.input_graph()?;
        let p = prepare(&g, self.strategy, self.deformation, self.seed, self.run)?;
        if p.transcript != self.transcript {
            return Err(Error::Parse("replayed transcript differs from the recorded one".into()));
        }
        if graph_value(&p.realized_graph) != self.realized_graph {
            return Err(Error::Parse("replayed realized graph differs from the recorded one".into()));
        }
        Ok(p)
    }
}

/// Little-endian complex64 pairs (f32 real, f32 imaginary), qubit 0 most
/// significant.
pub fn amplitudes_to_bytes(state: &PureState) -> Vec<u8> {
    let mut out = Vec::with_capacity(state.amplitudes().len() * 8);
    for c in state.amplitudes() {
        out.extend_from_slice(&(c.re as f32).to_le_bytes());
        out.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    out
}

/// Inverse of `amplitudes_to_bytes`, renormalized.
pub fn amplitudes_from_bytes(bytes: &[u8]) -> Result<PureState> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!("sidecar length {} is not a multiple of 8", bytes.len())));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    let amps: Vec<C64> = bytes.chunks_exact(8).map(|c| C64::new(f(&c[..4]), f(&c[4..]))).collect();
    PureState::from_amplitudes(amps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDoc {
    pub id: usize,
    pub axis: char,
    pub sites: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityDoc {
    pub domains: [usize; 2],
    /// Number of lattice edges between the two domains.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDoc {
    pub decoration: usize,
    pub case: u8,
    pub kind: DecorationCase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredDoc {
    /// Surviving vertices keyed by their smallest retained site.
    pub vertices: BTreeMap<usize, Vec<usize>>,
    pub edges: Vec<[usize; 2]>,
    pub cases: Vec<CaseDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmSampleDoc {
    pub sample: usize,
    /// One letter per site, `-` for boundary qubits.
    pub outcome: String,
    pub probability: f64,
    /// Domain index per site, `null` for boundary qubits.
    pub site_domain: Vec<Option<usize>>,
    pub domains: Vec<DomainDoc>,
    /// Simple edges of the domain graph (odd multiplicity).
    pub edges: Vec<[usize; 2]>,
    pub multiplicities: Vec<MultiplicityDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered: Option<RecoveredDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_equal: Option<bool>,
}

impl PovmSampleDoc {
    pub fn new(sample: usize, o: &PovmOutcome, probability: f64, g: &SiteGraph, dg: &DomainGraph) -> Self {
        let domains: Vec<DomainDoc> = dg
            .domains()
            .iter()
            .enumerate()
            .map(|(id, d)| DomainDoc { id, axis: d.axis.letter(), sites: d.sites.clone() })
            .collect();
        let n = domains.len();
        let mut multiplicities = Vec::new();
        for p in 0..n {
            for q in p + 1..n {
                let count = dg.multiplicity(p, q);
                if count > 0 {
                    multiplicities.push(MultiplicityDoc { domains: [p, q], count });
                }
            }
        }
        PovmSampleDoc {
            sample,
            outcome: o.letters(),
            probability,
            site_domain: (0..g.num_vertices()).map(|v| dg.domain_of(v)).collect(),
            domains,
            edges: dg.edges().into_iter().map(|(p, q)| [p, q]).collect(),
            multiplicities,
            recovered: None,
            graph_equal: None,
        }
    }

    pub fn set_recovered(&mut self, rec: &Recovery, realized: &SiteGraph) {
        let c = rec.graph.canonical(|v| realized.vertex(v).decoration_of.is_none());
        self.recovered = Some(RecoveredDoc {
            vertices: c.vertices,
            edges: c.edges.into_iter().map(|(p, q)| [p, q]).collect(),
            cases: rec.cases.iter().map(|&(decoration, kind)| CaseDoc { decoration, case: kind.number(), kind }).collect(),
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmDoc {
    pub schema: String,
    pub seed: u64,
    pub samples: Vec<PovmSampleDoc>,
}

impl PovmDoc {
    pub fn new(seed: u64, samples: Vec<PovmSampleDoc>) -> Self {
        PovmDoc { schema: POVM_SCHEMA.into(), seed, samples }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}
