use aklt_prep::circuits::{
    export_circuit, reference_block_state, simulate_zero, synth_block, synth_psi_b, DeformationProfile, ExportFormat, PSI_B_ORDER,
};
use aklt_prep::graphstate::{
    build_domain_graph, encoded_stabilizers, matches_undecorated, recover_undecorated, sample_povm, verify_stabilizers, LogicalFrame,
};
use aklt_prep::io::{amplitudes_to_bytes, PovmDoc, PovmSampleDoc, PreparedDoc};
use aklt_prep::lattice::{from_json, make_lattice, LatticeSpec, SiteGraph};
use aklt_prep::mps::string_order_tm;
use aklt_prep::pauli::Axis;
use aklt_prep::percolation::{patch_for_size, reference_constants, run_percolation, BondChoice, PatchFamily, PercolationSpec};
use aklt_prep::protocol::{prepare, FusionOutcome, Strategy};
use aklt_prep::qstate::fidelity;
use aklt_prep::rng::stream;
use aklt_prep::vbs::vbs_state;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SUBCOMMANDS: [&str; 6] = ["prepare", "string-order", "povm", "percolate", "export-circuit", "verify"];
const FIDELITY_TOL: f64 = 1e-8;
const MANIFEST_SCHEMA: &str = "manifest/v1";

#[derive(Parser, Debug, Serialize)]
#[command(name = "aklt-prep", version, about = "Fusion-based AKLT state preparation experiments")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for trial-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory (default: runs/<subcommand>-<timestamp>).
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// JSON file whose keys mirror the long flags.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Prepare a state by fusing blocks and write it as prepared/v1.
    Prepare(PrepareArgs),
    /// String order parameter from the transfer matrices.
    StringOrder(StringOrderArgs),
    /// Sample POVM outcomes on a prepared state.
    Povm(PovmArgs),
    /// Domain-graph percolation on patches of growing size.
    Percolate(PercolateArgs),
    /// Synthesize and export a block circuit.
    ExportCircuit(ExportArgs),
    /// Re-run a manifest and compare output digests.
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::StringOrder(_) => "string-order",
            Command::Povm(_) => "povm",
            Command::Percolate(_) => "percolate",
            Command::ExportCircuit(_) => "export-circuit",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct LatticeArgs {
    /// Family (chain-open, chain-ring, hex, square, bethe, star, quasichain)
    /// or a compact spec such as hex_patch:1x2.
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long, default_value_t = 4)]
    length: usize,
    #[arg(long, default_value_t = 1)]
    rows: usize,
    #[arg(long, default_value_t = 1)]
    cols: usize,
    /// Bethe coordination number.
    #[arg(long, default_value_t = 3)]
    z: usize,
    /// Bethe depth.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Terminate dangling bonds with boundary qubits.
    #[arg(long)]
    terminated: bool,
    /// sitegraph/v1 file instead of a family.
    #[arg(long, conflicts_with = "lattice")]
    graph: Option<PathBuf>,
}

impl LatticeArgs {
    fn spec(&self) -> Result<Option<LatticeSpec>> {
        let Some(name) = &self.lattice else { return Ok(None) };
        if name.contains(':') {
            return Ok(Some(name.parse()?));
        }
        let (length, rows, cols, terminated) = (self.length, self.rows, self.cols, self.terminated);
        Ok(Some(match name.replace('_', "-").as_str() {
            "chain-open" | "chain" => LatticeSpec::ChainOpen { length, terminated },
            "chain-ring" | "ring" => LatticeSpec::ChainRing { length },
            "hex" | "hex-patch" => LatticeSpec::HexPatch { rows, cols, terminated },
            "square" | "square-patch" => LatticeSpec::SquarePatch { rows, cols, terminated },
            "bethe" | "bethe-tree" => LatticeSpec::BetheTree { z: self.z, depth: self.depth, terminated },
            "star" | "star-patch" => LatticeSpec::StarPatch { rows, cols, terminated },
            "quasichain" => LatticeSpec::Quasichain { length, terminated },
            other => bail!("unknown lattice family `{other}`"),
        }))
    }

    fn resolve(&self) -> Result<(SiteGraph, String)> {
        if let Some(path) = &self.graph {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok((from_json(&text)?, path.display().to_string()));
        }
        let spec = self.spec()?.ok_or_else(|| anyhow!("either --lattice or --graph is required"))?;
        Ok((make_lattice(&spec)?, spec.to_string()))
    }
}

#[derive(Args, Debug, Serialize)]
struct PrepareArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    /// bsm-corrected, bsm-randombond or ht-decorated.
    #[arg(long, default_value = "bsm-corrected")]
    strategy: Strategy,
    /// Deformation parameter a (1 is the undeformed state).
    #[arg(long, default_value_t = 1.0)]
    deform: f64,
    /// Independent runs; run r uses stream (seed, r). The state of run 0 is written.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Compare every run with the projector-built reference state.
    #[arg(long)]
    verify: bool,
    /// Write the amplitude sidecar for run 0.
    #[arg(long)]
    amplitudes: bool,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct StringOrderArgs {
    /// Deformation parameter a.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Separation of the two end operators.
    #[arg(long, default_value_t = 6)]
    r: usize,
    /// Axis; repeat for several.
    #[arg(long, value_enum)]
    axis: Vec<AxisArg>,
    /// Compare with 4a^4/(1+2a^2)^2.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug, Serialize)]
struct PovmArgs {
    /// prepared/v1 file; the state is rebuilt by replaying its seed and run.
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of outcomes; sample s uses stream (seed, s).
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Check every encoded stabilizer on the post-measurement state.
    #[arg(long)]
    verify_stabilizers: bool,
    /// Remove decorations from the domain graph.
    #[arg(long)]
    recover: bool,
    /// Compare the recovered graph with the undecorated domain graph (implies --recover).
    #[arg(long)]
    compare_undecorated: bool,
}

#[derive(Args, Debug, Serialize)]
struct PercolateArgs {
    /// hex, star or square.
    #[arg(long, default_value = "hex")]
    lattice: PatchFamily,
    /// Patch sizes L.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// singlet or random.
    #[arg(long, default_value = "singlet")]
    bonds: BondChoice,
    /// Probability that an edge carries a decoration.
    #[arg(long, default_value_t = 0.0)]
    decorate: f64,
    /// Check monotone spanning and the rejection rate against its estimate.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    /// Block size n (spin n/2), 2n qubits.
    #[arg(long)]
    block: usize,
    /// Sector weights a_0..a_n.
    #[arg(long, value_delimiter = ',', conflicts_with = "a")]
    deform: Option<Vec<f64>>,
    /// One-parameter deformation (weight a on the extreme sectors).
    #[arg(long)]
    a: Option<f64>,
    /// text or json.
    #[arg(long, default_value = "text")]
    format: String,
    /// Use the generic construction for n = 2 as well.
    #[arg(long)]
    generic: bool,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// manifest.json of an earlier run.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct OutputDigest {
    file: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize, Deserialize)]
struct Check {
    name: String,
    pass: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema: String,
    tool: String,
    version: String,
    subcommand: String,
    /// Effective arguments (config merged, --out removed).
    argv: Vec<String>,
    parameters: Value,
    seed: u64,
    threads: usize,
    started_at: String,
    finished_at: String,
    outputs: Vec<OutputDigest>,
    verifications: Vec<Check>,
    #[serde(default)]
    annotations: Vec<Value>,
}

/// Files and checks collected by a subcommand before anything is written.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    checks: Vec<Check>,
    annotations: Vec<Value>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    fn check(&mut self, name: impl Into<String>, pass: bool) {
        self.checks.push(Check { name: name.into(), pass });
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("csv: {e}"))?)
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

/// Insert config-file flags right after the subcommand. Flags given on the
/// command line win.
fn merge_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" && i + 1 < args.len() {
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let Value::Object(map) = serde_json::from_str::<Value>(&text)? else {
        bail!("config {path} is not a JSON object");
    };
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .ok_or_else(|| anyhow!("no subcommand given"))?;
    let given = |flag: &str| args.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    let scalar = |v: &Value| match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(anyhow!("unsupported config value {other}")),
    };
    let mut extra = Vec::new();
    for (key, value) in &map {
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&flag) {
            continue;
        }
        match value {
            Value::Bool(true) => extra.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for v in items {
                    extra.push(flag.clone());
                    extra.push(scalar(v)?);
                }
            }
            v => {
                extra.push(flag);
                extra.push(scalar(v)?);
            }
        }
    }
    args.splice(at + 1..at + 1, extra);
    Ok(args)
}

/// Arguments without the program name and `--out`.
fn reproducible_argv(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args.iter().skip(1) {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

fn run_prepare(cli: &Cli, a: &PrepareArgs, o: &mut Outputs) -> Result<()> {
    let (g, label) = a.lattice.resolve()?;
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    struct Row {
        fusions: usize,
        singlets: usize,
        decorations: usize,
        qubits: usize,
        probability: f64,
        fidelity: Option<f64>,
    }
    let pool = thread_pool(cli.threads)?;
    let one = |run: u64| -> Result<(Row, Option<aklt_prep::protocol::PreparedState>)> {
        let p = prepare(&g, a.strategy, a.deform, cli.seed, run)?;
        let fidelity = if a.verify { Some(fidelity(&p.state, &vbs_state(&p.realized_graph, a.deform)?)?) } else { None };
        let row = Row {
            fusions: p.transcript.len(),
            singlets: p
                .transcript
                .iter()
                .filter(|r| matches!(r.outcome, FusionOutcome::Singlet | FusionOutcome::Bell(aklt_prep::bell::BellKind::PsiMinus)))
                .count(),
            decorations: p.transcript.iter().filter(|r| r.outcome == FusionOutcome::Triplet).count(),
            qubits: p.state.num_qubits(),
            probability: p.transcript.iter().map(|r| r.probability).product(),
            fidelity,
        };
        Ok((row, if run == 0 { Some(p) } else { None }))
    };
    let results: Vec<_> = pool.install(|| (0..a.trials).into_par_iter().map(one).collect::<Result<Vec<_>>>())?;
    let mut rows = Vec::new();
    let mut first = None;
    for (row, p) in results {
        if p.is_some() {
            first = p;
        }
        rows.push(row);
    }
    let first = first.expect("run 0 present");

    let sidecar = a.amplitudes.then_some("amplitudes.bin");
    o.add("prepared.json", PreparedDoc::new(&g, &first, sidecar).to_json());
    if a.amplitudes {
        o.add("amplitudes.bin", amplitudes_to_bytes(&first.state));
    }

    let mut header = strings(&["run", "qubits", "fusions", "singlet_outcomes", "decorations", "transcript_probability"]);
    if a.verify {
        header.extend(strings(&["fidelity", "pass"]));
    }
    let run_rows: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(run, r)| {
            let mut v = vec![
                run.to_string(),
                r.qubits.to_string(),
                r.fusions.to_string(),
                r.singlets.to_string(),
                r.decorations.to_string(),
                format!("{:.12e}", r.probability),
            ];
            if let Some(f) = r.fidelity {
                v.push(format!("{f:.12}"));
                v.push((f >= 1.0 - FIDELITY_TOL).to_string());
            }
            v
        })
        .collect();
    o.add("runs.csv", csv_bytes(&header, &run_rows)?);

    let fusions: usize = rows.iter().map(|r| r.fusions).sum();
    let rate = |k: usize| if fusions == 0 { 0.0 } else { k as f64 / fusions as f64 };
    let stderr = |p: f64| if fusions == 0 { 0.0 } else { (p * (1.0 - p) / fusions as f64).sqrt() };
    let singlet_rate = rate(rows.iter().map(|r| r.singlets).sum());
    let decoration_rate = rate(rows.iter().map(|r| r.decorations).sum());
    let mut header = strings(&[
        "lattice",
        "strategy",
        "deformation",
        "trials",
        "fusions",
        "singlet_rate",
        "singlet_stderr",
        "decoration_rate",
        "decoration_stderr",
    ]);
    let mut row = vec![
        label.clone(),
        a.strategy.to_string(),
        a.deform.to_string(),
        a.trials.to_string(),
        fusions.to_string(),
        format!("{singlet_rate:.6}"),
        format!("{:.6}", stderr(singlet_rate)),
        format!("{decoration_rate:.6}"),
        format!("{:.6}", stderr(decoration_rate)),
    ];
    println!("lattice {label}, strategy {}, {} run(s), {} qubits in run 0", a.strategy, a.trials, first.state.num_qubits());
    println!("singlet rate {singlet_rate:.6} ± {:.6} over {fusions} fusions", stderr(singlet_rate));
    if a.strategy == Strategy::HtDecorated {
        println!("decoration rate {decoration_rate:.6} ± {:.6}", stderr(decoration_rate));
    }
    if a.verify {
        let min = rows.iter().filter_map(|r| r.fidelity).fold(f64::INFINITY, f64::min);
        let pass = min >= 1.0 - FIDELITY_TOL;
        header.extend(strings(&["min_fidelity", "pass"]));
        row.push(format!("{min:.12}"));
        row.push(pass.to_string());
        println!("fidelity-vs-oracle: {min:.12}");
        o.check("fidelity-vs-oracle", pass);
    }
    o.add("summary.csv", csv_bytes(&header, &[row])?);
    Ok(())
}

fn run_string_order(a: &StringOrderArgs, o: &mut Outputs) -> Result<()> {
    let axes: Vec<AxisArg> = if a.axis.is_empty() { vec![AxisArg::Z] } else { a.axis.clone() };
    let closed = 4.0 * a.a.powi(4) / (1.0 + 2.0 * a.a * a.a).powi(2);
    let mut header = strings(&["axis", "a", "r", "value"]);
    if a.verify {
        header.extend(strings(&["closed_form", "deviation", "pass"]));
    }
    let mut rows = Vec::new();
    for ax in axes {
        let axis = Axis::from(ax);
        let value = string_order_tm(a.a, a.r, axis)?;
        println!("{axis} {value:.12}");
        let mut row = vec![axis.to_string(), a.a.to_string(), a.r.to_string(), format!("{value:.15}")];
        if a.verify {
            let dev = (value - closed).abs();
            let pass = dev <= 1e-10;
            row.extend([format!("{closed:.15}"), format!("{dev:.3e}"), pass.to_string()]);
            o.check(format!("closed-form-{axis}"), pass);
        }
        rows.push(row);
    }
    o.add("string_order.csv", csv_bytes(&header, &rows)?);
    Ok(())
}

fn run_povm(cli: &Cli, a: &PovmArgs, o: &mut Outputs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let prep = PreparedDoc::from_json(&text)?.replay()?;
    let g = &prep.realized_graph;
    let recover = a.recover || a.compare_undecorated;
    struct Sample {
        doc: PovmSampleDoc,
        stabilizers: Vec<(String, String, f64)>,
        report: Option<(bool, usize, f64, bool)>,
        cases: [usize; 4],
    }
    let one = |s: usize| -> Result<Sample> {
        let (outcome, post, probability) = sample_povm(&prep, &mut stream(cli.seed, s as u64))?;
        let dg = build_domain_graph(g, &outcome)?;
        let mut doc = PovmSampleDoc::new(s, &outcome, probability, g, &dg);
        let mut cases = [0; 4];
        if recover {
            let rec = recover_undecorated(&dg, g, &outcome)?;
            for (_, c) in &rec.cases {
                cases[c.number() as usize - 1] += 1;
            }
            doc.set_recovered(&rec, g);
            if a.compare_undecorated {
                doc.graph_equal = Some(matches_undecorated(&rec, g, &outcome)?);
            }
        }
        let mut stabilizers = Vec::new();
        let mut report = None;
        if a.verify_stabilizers {
            let frame = LogicalFrame::select(g, &dg)?;
            let set = encoded_stabilizers(g, &outcome, &frame)?;
            let groups = [("code", &set.code), ("bond", &set.bond), ("graph", &set.graph)];
            let all = set.all();
            let r = verify_stabilizers(&post, &all)?;
            let mut k = 0;
            for (group, list) in groups {
                for p in list.iter() {
                    stabilizers.push((group.to_string(), p.to_string(), r.expectations[k]));
                    k += 1;
                }
            }
            report = Some((r.commuting, r.rank, r.max_deviation, r.pass));
        }
        Ok(Sample { doc, stabilizers, report, cases })
    };
    let pool = thread_pool(cli.threads)?;
    let samples: Vec<Sample> = pool.install(|| (0..a.samples).into_par_iter().map(one).collect::<Result<_>>())?;

    let mut header = strings(&["sample", "outcome", "probability", "domains", "edges"]);
    if recover {
        header.extend(strings(&["recovered_vertices", "recovered_edges", "case1", "case2", "case3", "case4"]));
    }
    if a.verify_stabilizers {
        header.extend(strings(&["stabilizers", "commuting", "rank", "max_deviation", "stabilizers_pass"]));
    }
    if a.compare_undecorated {
        header.push("graph_equal".into());
    }
    let mut rows = Vec::new();
    let mut stab_rows = Vec::new();
    for s in &samples {
        let d = &s.doc;
        let mut row = vec![
            d.sample.to_string(),
            d.outcome.clone(),
            format!("{:.12e}", d.probability),
            d.domains.len().to_string(),
            d.edges.len().to_string(),
        ];
        if let Some(r) = &d.recovered {
            row.push(r.vertices.len().to_string());
            row.push(r.edges.len().to_string());
            row.extend(s.cases.iter().map(|c| c.to_string()));
        }
        if let Some((commuting, rank, dev, pass)) = s.report {
            row.extend([s.stabilizers.len().to_string(), commuting.to_string(), rank.to_string(), format!("{dev:.3e}"), pass.to_string()]);
        }
        if let Some(eq) = d.graph_equal {
            row.push(eq.to_string());
        }
        rows.push(row);
        for (id, (group, pauli, e)) in s.stabilizers.iter().enumerate() {
            let pass = (e - 1.0).abs() <= FIDELITY_TOL;
            stab_rows.push(vec![d.sample.to_string(), id.to_string(), group.clone(), pauli.clone(), format!("{e:.12}"), pass.to_string()]);
        }
    }
    let docs: Vec<PovmSampleDoc> = samples.iter().map(|s| s.doc.clone()).collect();
    o.add("povm.json", PovmDoc::new(cli.seed, docs).to_json());
    o.add("samples.csv", csv_bytes(&header, &rows)?);
    println!("{} sample(s) on {} sites", samples.len(), g.num_vertices());
    if recover {
        let mut totals = [0; 4];
        for s in &samples {
            for k in 0..4 {
                totals[k] += s.cases[k];
            }
        }
        println!("decoration cases: 1={} 2={} 3={} 4={}", totals[0], totals[1], totals[2], totals[3]);
    }
    if a.verify_stabilizers {
        let passed = samples.iter().filter(|s| s.report.is_some_and(|r| r.3)).count();
        println!("stabilizers: {passed}/{} pass", samples.len());
        o.add("stabilizers.csv", csv_bytes(&strings(&["sample", "stabilizer", "group", "pauli", "expectation", "pass"]), &stab_rows)?);
        o.check("stabilizers", passed == samples.len());
    }
    if a.compare_undecorated {
        let equal = samples.iter().all(|s| s.doc.graph_equal == Some(true));
        println!("graph-equal: {equal}");
        o.check("graph-equal", equal);
    }
    Ok(())
}

fn run_percolate(cli: &Cli, a: &PercolateArgs, o: &mut Outputs) -> Result<()> {
    let mut header = strings(&[
        "lattice",
        "size",
        "patch",
        "bonds",
        "decoration_rate",
        "trials",
        "spanning_frequency",
        "spanning_stderr",
        "mean_largest_cluster",
        "rejection_rate",
        "predicted_rejection_rate",
        "rejection_stderr",
        "status",
    ]);
    if a.verify {
        header.extend(strings(&["rejection_z", "spanning_monotone", "pass"]));
    }
    let family = format!("{:?}", a.lattice).to_lowercase();
    let bonds = format!("{:?}", a.bonds).to_lowercase();
    let mut rows = Vec::new();
    let mut last_spanning = f64::NEG_INFINITY;
    let mut all_pass = true;
    for &l in &a.sizes {
        let spec = PercolationSpec { lattice: patch_for_size(a.lattice, l)?, bonds: a.bonds, decoration_rate: a.decorate };
        let run = match run_percolation(&spec, a.trials, cli.seed, cli.threads) {
            Ok(run) => run,
            Err(aklt_prep::Error::RejectionRate { rate, draws }) => {
                println!("{family} L={l} ({}) bonds={bonds}: aborted, rejection rate {rate:.4} after {draws} draws", spec.lattice);
                let mut row = vec![family.clone(), l.to_string(), spec.lattice.to_string(), bonds.clone(), a.decorate.to_string()];
                row.extend([a.trials.to_string(), String::new(), String::new(), String::new(), format!("{rate:.6}")]);
                row.extend([String::new(), String::new(), "aborted".into()]);
                if a.verify {
                    all_pass = false;
                    row.extend([String::new(), String::new(), "false".into()]);
                }
                rows.push(row);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let (span, rej, pred, se) = (run.spanning_frequency(), run.rejection_rate(), run.predicted_rejection_rate(), run.rejection_stderr());
        println!(
            "{family} L={l} ({}) bonds={bonds}: spanning {span:.4} ± {:.4}, largest cluster {:.4}, rejection {rej:.4} (estimate {pred:.4} ± {se:.4})",
            spec.lattice,
            run.spanning_stderr(),
            run.mean_largest_cluster()
        );
        let mut row = vec![
            family.clone(),
            l.to_string(),
            spec.lattice.to_string(),
            bonds.clone(),
            a.decorate.to_string(),
            a.trials.to_string(),
            format!("{span:.6}"),
            format!("{:.6}", run.spanning_stderr()),
            format!("{:.6}", run.mean_largest_cluster()),
            format!("{rej:.6}"),
            format!("{pred:.6}"),
            format!("{se:.6}"),
            "ok".into(),
        ];
        if a.verify {
            let z = if se > 0.0 { (rej - pred).abs() / se } else if rej == pred { 0.0 } else { f64::INFINITY };
            let monotone = span >= last_spanning;
            let pass = z <= 3.0 && monotone;
            all_pass &= pass;
            row.extend([format!("{z:.3}"), monotone.to_string(), pass.to_string()]);
        }
        last_spanning = span;
        rows.push(row);
    }
    o.add("percolation.csv", csv_bytes(&header, &rows)?);
    for c in reference_constants() {
        println!("reference {} = {:.6} ({})", c.name, c.value, c.note);
        o.annotations.push(json!({ "name": c.name, "value": c.value, "note": c.note }));
    }
    if a.verify {
        o.check("percolation", all_pass);
    }
    Ok(())
}

fn run_export(a: &ExportArgs, o: &mut Outputs) -> Result<()> {
    let n = a.block;
    let format: ExportFormat = a.format.parse()?;
    let profile = match (&a.deform, a.a) {
        (Some(c), _) => DeformationProfile::new(c.clone(), false)?,
        (None, Some(x)) => DeformationProfile::from_parameter(n, x)?,
        (None, None) => DeformationProfile::uniform(n),
    };
    let reference = reference_block_state(n, &profile)?;
    let c = profile.coefficients();
    let dedicated = n == 2 && !a.generic && c[1] > 0.0 && (c[0] - c[2]).abs() <= 1e-12;
    let (mut circuit, reference) = if dedicated {
        (synth_psi_b(c[0] / c[1])?, reference.permute_qubits(&PSI_B_ORDER)?)
    } else {
        (synth_block(n, &profile)?, reference)
    };
    let f = fidelity(&simulate_zero(&circuit)?, &reference)?;
    let pass = f >= 1.0 - 1e-9;
    circuit.label = format!("{} verified fidelity {f:.12}", circuit.label);
    let name = match format {
        ExportFormat::Text => "circuit.txt",
        ExportFormat::Json => "circuit.json",
    };
    o.add(name, export_circuit(&circuit, format));
    println!("{}: {} qubits, {} gates, depth {}", circuit.label, circuit.num_qubits(), circuit.gates().len(), circuit.depth());
    o.check("circuit-fidelity", pass);
    Ok(())
}

fn run_verify(a: &VerifyArgs, out: &Path, o: &mut Outputs) -> Result<()> {
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.schema != MANIFEST_SCHEMA {
        bail!("unknown manifest schema {}", m.schema);
    }
    let replay = out.join("replay");
    let mut argv = vec!["aklt-prep".to_string()];
    argv.extend(m.argv.iter().cloned());
    argv.extend(["--out".to_string(), replay.display().to_string()]);
    println!("replaying: {}", m.argv.join(" "));
    execute(argv)?;
    let mut rows = Vec::new();
    let mut all = true;
    for d in &m.outputs {
        let actual = std::fs::read(replay.join(&d.file)).map(|b| sha256_hex(&b)).unwrap_or_default();
        let same = actual == d.sha256;
        all &= same;
        println!("{} {}", d.file, if same { "identical" } else { "DIFFERS" });
        rows.push(vec![d.file.clone(), d.sha256.clone(), actual, same.to_string()]);
    }
    println!("reproduced: {all}");
    o.add("verify.csv", csv_bytes(&strings(&["file", "expected_sha256", "actual_sha256", "match"]), &rows)?);
    o.check("reproduced", all);
    Ok(())
}

/// Run one invocation. Returns whether every requested verification passed.
fn execute(args: Vec<String>) -> Result<bool> {
    let args = merge_config(args)?;
    let cli = Cli::parse_from(&args);
    let started = chrono::Utc::now();
    let name = cli.command.name();
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{name}-{}", started.format("%Y%m%dT%H%M%S%.3fZ"))));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut o = Outputs::default();
    match &cli.command {
        Command::Prepare(a) => run_prepare(&cli, a, &mut o)?,
        Command::StringOrder(a) => run_string_order(a, &mut o)?,
        Command::Povm(a) => run_povm(&cli, a, &mut o)?,
        Command::Percolate(a) => run_percolate(&cli, a, &mut o)?,
        Command::ExportCircuit(a) => run_export(a, &mut o)?,
        Command::Verify(a) => run_verify(a, &out, &mut o)?,
    }
    let mut outputs = Vec::new();
    for (file, bytes) in &o.files {
        std::fs::write(out.join(file), bytes).with_context(|| format!("writing {file}"))?;
        outputs.push(OutputDigest { file: file.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
    }
    let pass = o.checks.iter().all(|c| c.pass);
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.into(),
        argv: reproducible_argv(&args),
        parameters: serde_json::to_value(&cli)?,
        seed: cli.seed,
        threads: cli.threads,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
        verifications: o.checks,
        annotations: o.annotations,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;
    println!("outputs in {}", out.display());
    Ok(pass)
}

fn main() -> ExitCode {
    match execute(std::env::args().collect()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
