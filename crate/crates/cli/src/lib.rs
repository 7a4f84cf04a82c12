//! Batch front end: parse JSON documents, dispatch to the library and
//! produce a [`CliReport`] with an exit status.
//!
//! Exit status is `0` when every check passes, `1` when a check fails or
//! the inputs cannot be turned into the requested object, and `2` for
//! command-line or document errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use limstruct::bundle::{check_cocycle, check_reduction, IsotropyGroupSpec};
use limstruct::calculus::{
    curvature, is_integrable_structure, is_metric_integrable, levi_civita, StructureKind, DEFAULT_FD_STEP,
};
use limstruct::compat::{complete_triple, is_compatible, Flavor};
use limstruct::docs::{
    self, AtlasDoc, ConnectionTowerDoc, DocError, FieldDoc, LoopDoc, MetricDoc, PairDoc, StructureDoc,
    StructureDocKind, TowerDoc, TripleDoc,
};
use limstruct::limits::{check_coherent, check_connection_coherence, validate_bonding};
use limstruct::linstruct::{darboux_basis, SymplecticForm};
use limstruct::loopspace::{self, induced_forms};
use limstruct::numkernel::Tolerance;
use limstruct::report::{CheckEntry, Report};
use limstruct::sample;
use limstruct::tensor::Role;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_PARSE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "limstruct",
    version,
    about = "Validate and construct tensor structures from JSON documents"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Absolute tolerance.
    #[arg(long, global = true, default_value_t = Tolerance::DEFAULT_ATOL)]
    pub atol: f64,
    /// Relative tolerance.
    #[arg(long, global = true, default_value_t = Tolerance::DEFAULT_RTOL)]
    pub rtol: f64,
    /// Finite-difference step for fields without exact derivatives.
    #[arg(long = "fd-step", global = true, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
    /// Emit the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for randomized subcommands; required with --json.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every defining invariant of a structure document.
    Validate { structure: PathBuf },
    /// Compatible triples.
    #[command(subcommand)]
    Triple(TripleCommand),
    /// Symplectic Gram-Schmidt basis of a skew form.
    Darboux { form: PathBuf },
    /// Cocycle condition of an atlas's transitions.
    Cocycle { atlas: PathBuf },
    /// Transitions take values in the isotropy group of a model tensor.
    Reduce { atlas: PathBuf, tensor: PathBuf },
    /// Nijenhuis tensor of a structure field over a grid.
    Nijenhuis { field: PathBuf },
    /// Curvature of a metric field over a grid.
    Curvature { metric: PathBuf },
    /// Coherence of a tower of structures.
    #[command(subcommand)]
    Tower(TowerCommand),
    /// Coherence of a tower of connection forms.
    #[command(subcommand)]
    Connection(ConnectionCommand),
    /// Induced structures on discretized loop spaces.
    #[command(subcommand)]
    Loopspace(LoopCommand),
}

#[derive(Debug, Subcommand)]
pub enum TripleCommand {
    /// Complete a compatible pair to a triple.
    Complete { pair: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum TowerCommand {
    Check { tower: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum ConnectionCommand {
    Check { tower: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum LoopCommand {
    /// Canonical targets on R^2, R^4, ...: induced compatibility per level
    /// and ascending coherence.
    Demo {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, value_parser = parse_flavor, default_value = "kahler")]
        flavor: Flavor,
    },
    /// Induced forms on the tangent arrays of a loop document.
    Eval { document: PathBuf },
}

fn parse_flavor(s: &str) -> Result<Flavor, String> {
    match s {
        "kahler" => Ok(Flavor::Kahler),
        "para_kahler" => Ok(Flavor::ParaKahler),
        _ => Err(format!("unknown flavor `{s}` (kahler or para_kahler)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceEcho {
    pub atol: f64,
    pub rtol: f64,
    pub fd_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// The command's outcome. `exit_status` is `0` iff every entry passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliReport {
    pub command: String,
    /// SHA-256 over the command, its input files and the tolerances.
    pub inputs_digest: String,
    pub tolerance: ToleranceEcho,
    #[serde(default)]
    pub subjects: Vec<String>,
    pub entries: Vec<CheckEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Constructed objects, when the command builds any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_status: i32,
}

impl CliReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn render(&self, as_json: bool) -> String {
        if as_json {
            let mut s = serde_json::to_string_pretty(self).expect("report serializes");
            s.push('\n');
            return s;
        }
        let mut out = format!("{}  (inputs {})\n", self.command, &self.inputs_digest[..16]);
        for s in &self.subjects {
            out.push_str(&format!("  {s}\n"));
        }
        for e in &self.entries {
            let status = if e.passed { "pass" } else { "FAIL" };
            out.push_str(&format!("  [{status}] {} residual={:.3e}", e.name, e.residual));
            if let Some(loc) = &e.location {
                out.push_str(&format!(" at {loc}"));
            }
            out.push('\n');
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        if let Some(err) = &self.error {
            out.push_str(&format!("  error: {err}\n"));
        }
        if let Some(v) = &self.output {
            out.push_str(&format!(
                "  output: {}",
                serde_json::to_string(v).expect("output serializes")
            ));
            out.push('\n');
        }
        let verdict = match self.exit_status {
            EXIT_PASS => "pass",
            EXIT_FAIL => "FAIL",
            _ => "ERROR",
        };
        out.push_str(&format!("status: {verdict} (exit {})\n", self.exit_status));
        out
    }
}

/// Errors that stop a command before a report exists.
#[derive(Debug)]
enum Failure {
    /// Unreadable or malformed input: exit 2.
    Parse(String),
    /// Well-formed input the library refuses: exit 1.
    Check(String),
}

impl From<DocError> for Failure {
    fn from(e: DocError) -> Self {
        match e {
            DocError::Invalid(m) => Failure::Parse(m),
            DocError::Construction(m) => Failure::Check(m),
        }
    }
}

struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    fn new(command: &str, g: &GlobalOpts) -> Self {
        let mut hasher = Sha256::new();
        for part in [
            command.to_string(),
            format!("{:e}|{:e}|{:e}|{:?}", g.atol, g.rtol, g.fd_step, g.seed),
        ] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        Self { hasher }
    }

    fn read<T: for<'de> Deserialize<'de>>(&mut self, path: &Path) -> Result<T, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        serde_json::from_slice(&bytes).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
    }

    fn digest(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

/// What a command produced: reports plus an optional constructed value.
#[derive(Default)]
struct Outcome {
    reports: Vec<Report>,
    output: Option<Value>,
}

impl Outcome {
    fn report(mut self, r: Report) -> Self {
        self.reports.push(r);
        self
    }
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Validate { .. } => "validate",
        Command::Triple(TripleCommand::Complete { .. }) => "triple complete",
        Command::Darboux { .. } => "darboux",
        Command::Cocycle { .. } => "cocycle",
        Command::Reduce { .. } => "reduce",
        Command::Nijenhuis { .. } => "nijenhuis",
        Command::Curvature { .. } => "curvature",
        Command::Tower(_) => "tower check",
        Command::Connection(_) => "connection check",
        Command::Loopspace(LoopCommand::Demo { .. }) => "loopspace demo",
        Command::Loopspace(LoopCommand::Eval { .. }) => "loopspace eval",
    }
    .to_string()
}

/// Parse the command line and run it. Never exits the process.
pub fn run_args<I, T>(args: I) -> (String, i32)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => {
            let report = run(&cli);
            (report.render(cli.global.json), report.exit_status)
        }
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_PASS };
            (e.render().to_string(), code)
        }
    }
}

pub fn run(cli: &Cli) -> CliReport {
    let g = &cli.global;
    let command = command_name(&cli.command);
    let mut inputs = Inputs::new(&command, g);
    let echo = ToleranceEcho {
        atol: g.atol,
        rtol: g.rtol,
        fd_step: g.fd_step,
        seed: g.seed,
    };
    let result = Tolerance::new(g.atol, g.rtol)
        .map_err(|e| Failure::Parse(e.to_string()))
        .and_then(|tol| {
            if !(g.fd_step > 0.0 && g.fd_step.is_finite()) {
                return Err(Failure::Parse("--fd-step must be positive".into()));
            }
            dispatch(&cli.command, g, tol, &mut inputs)
        });
    let digest = inputs.digest();
    let mut report = CliReport {
        command,
        inputs_digest: digest,
        tolerance: echo,
        subjects: Vec::new(),
        entries: Vec::new(),
        notes: Vec::new(),
        output: None,
        error: None,
        exit_status: EXIT_PASS,
    };
    match result {
        Ok(outcome) => {
            for r in outcome.reports {
                report.subjects.push(r.subject);
                report.entries.extend(r.entries);
                report.notes.extend(r.notes);
            }
            report.output = outcome.output;
            report.exit_status = if report.passed() { EXIT_PASS } else { EXIT_FAIL };
        }
        Err(Failure::Parse(m)) => {
            report.error = Some(m);
            report.exit_status = EXIT_PARSE;
        }
        Err(Failure::Check(m)) => {
            report.entries.push(CheckEntry {
                name: "inputs accepted".into(),
                passed: false,
                residual: 1.0,
                location: None,
            });
            report.error = Some(m);
            report.exit_status = EXIT_FAIL;
        }
    }
    report
}

fn check(e: impl std::fmt::Display) -> Failure {
    Failure::Check(e.to_string())
}

fn dispatch(command: &Command, g: &GlobalOpts, tol: Tolerance, inputs: &mut Inputs) -> Result<Outcome, Failure> {
    match command {
        Command::Validate { structure } => {
            let doc: StructureDoc = inputs.read(structure)?;
            Ok(Outcome::default().report(doc.to_structure(tol)?.validate(tol)))
        }
        Command::Triple(TripleCommand::Complete { pair }) => {
            let doc: PairDoc = inputs.read(pair)?;
            let pair = doc.to_pair()?;
            let pre = is_compatible(&pair, doc.flavor, tol);
            if !pre.passed() {
                return Ok(Outcome::default().report(pre));
            }
            let triple = complete_triple(&pair, doc.flavor, tol).map_err(check)?;
            let post = triple.validate(tol);
            Ok(Outcome {
                output: Some(json!({ "triple": TripleDoc::from_triple(&triple) })),
                ..Outcome::default()
            }
            .report(pre)
            .report(post))
        }
        Command::Darboux { form } => {
            let doc: StructureDoc = inputs.read(form)?;
            if !matches!(
                doc.kind,
                StructureDocKind::Symplectic | StructureDocKind::Skew | StructureDocKind::Cotangent
            ) {
                return Err(Failure::Parse(
                    "darboux needs a symplectic or skew form document".into(),
                ));
            }
            let m = doc.to_structure_matrix()?.matrix;
            let omega = SymplecticForm::new(m).map_err(check)?;
            let basis = darboux_basis(&omega, tol).map_err(check)?;
            let mut report = Report::new("darboux basis");
            report.check(
                "A^T S A = S_can",
                basis.residual,
                tol.threshold(omega.matrix().norm().max(1.0)),
            );
            Ok(Outcome {
                output: Some(json!({ "basis": docs::vectors(&basis.basis) })),
                ..Outcome::default()
            }
            .report(report))
        }
        Command::Cocycle { atlas } => {
            let doc: AtlasDoc = inputs.read(atlas)?;
            let atlas = doc.to_atlas()?;
            Ok(Outcome::default()
                .report(atlas.validate(tol))
                .report(check_cocycle(&atlas, tol)))
        }
        Command::Reduce { atlas, tensor } => {
            let doc: AtlasDoc = inputs.read(atlas)?;
            let model: StructureDoc = inputs.read(tensor)?;
            let atlas = doc.to_atlas()?;
            let model = model.to_structure_matrix()?;
            if model.dim() != atlas.fiber_dim {
                return Err(Failure::Parse(format!(
                    "model tensor has dimension {}, atlas fiber dimension is {}",
                    model.dim(),
                    atlas.fiber_dim
                )));
            }
            let spec = IsotropyGroupSpec::new(model, tol).map_err(check)?;
            Ok(Outcome::default()
                .report(atlas.validate(tol))
                .report(check_reduction(&atlas, &spec, tol)))
        }
        Command::Nijenhuis { field } => {
            let doc: FieldDoc = inputs.read(field)?;
            let f = doc.field.build(Role::Endomorphism, doc.mode, g.fd_step)?;
            let grid = doc.grid.to_grid(f.dim())?;
            let verdict = is_integrable_structure(&f, doc.kind, &grid, tol).map_err(check)?;
            let kind = match doc.kind {
                StructureKind::Tangent => "tangent",
                StructureKind::ParaComplex => "para-complex",
                StructureKind::Complex => "complex",
            };
            let mut report = Report::new(format!("{kind} structure field"));
            report.push_at(
                "Nijenhuis tensor vanishes",
                verdict.holds,
                verdict.max_residual,
                Some(format!("{:?}", verdict.worst_point)),
            );
            Ok(Outcome {
                output: Some(serde_json::to_value(&verdict).expect("verdict serializes")),
                ..Outcome::default()
            }
            .report(report))
        }
        Command::Curvature { metric } => {
            let doc: MetricDoc = inputs.read(metric)?;
            let f = doc.field.build(Role::SymmetricForm, doc.mode, g.fd_step)?;
            let grid = doc.grid.to_grid(f.dim())?;
            curvature_report(&f, &grid, &doc, tol)
        }
        Command::Tower(TowerCommand::Check { tower }) => {
            let doc: TowerDoc = inputs.read(tower)?;
            let seq = doc.to_sequence()?;
            let bonding = validate_bonding(&seq.bonding, tol).map_err(check)?;
            let coherent = check_coherent(&seq, tol).map_err(check)?;
            Ok(Outcome::default().report(bonding).report(coherent))
        }
        Command::Connection(ConnectionCommand::Check { tower }) => {
            let doc: ConnectionTowerDoc = inputs.read(tower)?;
            let seq = doc.to_sequence()?;
            let bonding = validate_bonding(&seq.base, tol).map_err(check)?;
            let coherent = check_connection_coherence(&seq, &doc.samples, tol).map_err(check)?;
            Ok(Outcome::default().report(bonding).report(coherent))
        }
        Command::Loopspace(LoopCommand::Demo {
            levels,
            samples,
            flavor,
        }) => {
            if *levels == 0 || *samples == 0 {
                return Err(Failure::Parse("--levels and --samples must be positive".into()));
            }
            let seed = match (g.seed, g.json) {
                (Some(s), _) => s,
                (None, true) => {
                    return Err(Failure::Parse(
                        "--seed is required with --json for randomized commands".into(),
                    ))
                }
                (None, false) => 0,
            };
            let mut rng = sample::rng(seed);
            let mut report = loopspace::demo(*levels, *samples, *flavor, &mut rng, tol).map_err(check)?;
            if g.seed.is_none() {
                report.note("seed 0 (default)");
            }
            Ok(Outcome::default().report(report))
        }
        Command::Loopspace(LoopCommand::Eval { document }) => {
            let doc: LoopDoc = inputs.read(document)?;
            let (space, tangents) = doc.to_space()?;
            let mut report = space.target.validate(tol);
            let k = tangents.len();
            let mut omega = vec![vec![0.0; k]; k];
            let mut metric = vec![vec![0.0; k]; k];
            let mut structure = Vec::new();
            for (a, x) in tangents.iter().enumerate() {
                for (b, y) in tangents.iter().enumerate() {
                    let v = induced_forms(&space, x, y).map_err(check)?;
                    omega[a][b] = v.omega;
                    metric[a][b] = v.metric;
                    if b == 0 {
                        structure.push(docs::rows(&v.structure_x));
                    }
                }
            }
            let mut asym = 0.0_f64;
            for a in 0..k {
                for b in 0..k {
                    asym = asym.max((omega[a][b] + omega[b][a]).abs());
                }
            }
            let scale = omega.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
            report.check("Omega_f antisymmetric", asym, tol.threshold(scale));
            Ok(Outcome {
                output: Some(json!({ "omega": omega, "metric": metric, "structure_applied": structure })),
                ..Outcome::default()
            }
            .report(report))
        }
    }
}

fn curvature_report(
    f: &limstruct::calculus::TensorFieldOnChart,
    grid: &limstruct::calculus::Grid,
    doc: &MetricDoc,
    tol: Tolerance,
) -> Result<Outcome, Failure> {
    let mut report = Report::new("metric field");
    let Some(expected) = doc.expected_sectional else {
        let verdict = is_metric_integrable(f, grid, tol).map_err(check)?;
        report.push_at(
            "curvature vanishes",
            verdict.holds,
            verdict.max_residual,
            Some(format!("{:?}", verdict.worst_point)),
        );
        return Ok(Outcome {
            output: Some(serde_json::to_value(&verdict).expect("verdict serializes")),
            ..Outcome::default()
        }
        .report(report));
    };
    let limit = doc.sectional_tolerance.unwrap_or(1e-4);
    let conn = levi_civita(f, tol).map_err(check)?;
    let n = f.dim();
    let (mut worst, mut at) = (0.0_f64, Vec::new());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in grid.points() {
        let r = curvature(&conn, &x).map_err(check)?;
        let gx = f.value(&x);
        for a in 0..n {
            for b in a + 1..n {
                let k = r.sectional(&gx, a, b);
                lo = lo.min(k);
                hi = hi.max(k);
                let d = (k - expected).abs();
                if !(d < worst) {
                    worst = d;
                    at = x.clone();
                }
            }
        }
    }
    report.push_at(
        format!("sectional curvature = {expected}"),
        worst <= limit,
        worst,
        Some(format!("{at:?}")),
    );
    Ok(Outcome {
        output: Some(json!({ "sectional_min": lo, "sectional_max": hi })),
        ..Outcome::default()
    }
    .report(report))
}
