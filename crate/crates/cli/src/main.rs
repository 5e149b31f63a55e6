//! Command line driver for exact finite-window computations on the
//! Bruhat-Tits tree of GL2 over a local field: window exports, orbit tables,
//! invariant sigma matrices with Smith normal forms, cohomology certificates,
//! Van der Put currents, and finite-quotient oracle cross-checks.
//!
//! Exit codes: 0 = all checks pass, 1 = a certificate or cross-check failed,
//! 2 = usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use btlab_core::bttree::{
    canonical_end, window_to_dot, window_to_json, End, Mat2, Tree, Window, WindowKind,
};
use btlab_core::cochains::{edge_orbit_basis, vertex_orbit_basis, OrbitBasis};
use btlab_core::groups::{self, GroupElement, SubgroupTag};
use btlab_core::intlin::{cokernel_structure, snf, Int, IntMatrix};
use btlab_core::localfield::{Backend, Field};
use btlab_core::oracle::{
    class_order_in_h1, delta_cocycle_of_base_orbit, h0, h1, FiniteGroupAction,
};
use btlab_core::vdput::{
    beta_cocycle, j_cocycle, standard_base_line, theta_cocycle, FormalUnit, LineCurrent,
};
use btlab_core::verify::{
    cert_coker_g0, cert_crt_and_diagram, cert_g0_global, cert_iwahori, cert_pstar_j,
    cert_sigma_closed_forms, load_certificate, reverify, write_certificate, Certificate,
    VerifyError,
};

#[derive(Error, Debug)]
enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Tree(#[from] btlab_core::bttree::TreeError),
    #[error(transparent)]
    Cochain(#[from] btlab_core::cochains::CochainError),
    #[error(transparent)]
    Group(#[from] btlab_core::groups::GroupError),
    #[error(transparent)]
    Vdp(#[from] btlab_core::vdput::VdpError),
    #[error(transparent)]
    Oracle(#[from] btlab_core::oracle::OracleError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Exact computations on finite windows of the Bruhat-Tits tree of GL2.
#[derive(Parser)]
#[command(name = "btlab", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Residue characteristic p (a prime).
    #[arg(long, global = true, default_value_t = 2)]
    p: u64,
    /// Residue degree f; the residue field has q = p^f elements.
    #[arg(long, global = true, default_value_t = 1)]
    f: usize,
    /// Monic modulus for F_{p^f} over F_p as comma-separated coefficients,
    /// constant term first (built-in defaults cover small f).
    #[arg(long, global = true)]
    modulus: Option<String>,
    /// Scalar backend; `rational` requires f = 1.
    #[arg(long, global = true, value_enum, default_value = "rational")]
    backend: BackendArg,
    /// Window radius n.
    #[arg(long, global = true, default_value_t = 2)]
    n: usize,
    /// Seed for sampled group elements.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "btlab-out")]
    out: PathBuf,
    /// Concurrency bound for certificate dispatch (0 = one thread per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Rational,
    Laurent,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Rational => Backend::RationalP,
            BackendArg::Laurent => Backend::LaurentQ,
        }
    }
}

impl BackendArg {
    fn name(self) -> &'static str {
        match self {
            BackendArg::Rational => "rational",
            BackendArg::Laurent => "laurent",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// The ball T_n around the base vertex.
    Radius,
    /// The doubled window T'_n, the union of the balls around both base vertices.
    #[value(alias = "double")]
    Tprime,
}

impl KindArg {
    fn window_kind(self) -> WindowKind {
        match self {
            KindArg::Radius => WindowKind::Radius,
            KindArg::Tprime => WindowKind::Double,
        }
    }

    fn name(self) -> &'static str {
        match self {
            KindArg::Radius => "radius",
            KindArg::Tprime => "tprime",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CocycleArg {
    /// Boundary pair of the standard line and its translate.
    J,
    /// Sum of the boundary pairs over the q standard lines.
    Theta,
    /// Level-n coset-averaged difference cocycle.
    Beta,
}

impl CocycleArg {
    fn name(self) -> &'static str {
        match self {
            CocycleArg::J => "j",
            CocycleArg::Theta => "theta",
            CocycleArg::Beta => "beta",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Export a finite window of the tree as DOT and/or JSON.
    Tree {
        /// Window shape.
        #[arg(long, value_enum, default_value = "radius")]
        kind: KindArg,
        /// Write a Graphviz DOT rendering.
        #[arg(long)]
        dot: bool,
        /// Write a JSON description.
        #[arg(long)]
        json: bool,
    },
    /// Tabulate vertex and edge orbits of the standard subgroups on a window.
    Orbits,
    /// Print the invariant sigma matrices with Smith normal forms and cokernels.
    Sigma,
    /// Build, verify and store the cohomology certificates.
    Cohom,
    /// Evaluate a formal unit or an explicit cocycle as a current on a window.
    Vdp {
        /// Formal unit as weighted ends `[x:y]^w`, comma separated; the
        /// weights must sum to zero.
        #[arg(long)]
        unit: Option<String>,
        /// Cocycle family to evaluate at a group element.
        #[arg(long, value_enum)]
        cocycle: Option<CocycleArg>,
        /// Group element with row-major integer entries `a,b,c,d`; when
        /// omitted, a seeded random integral element is used.
        #[arg(long)]
        g: Option<String>,
        /// Write a DOT rendering with edge labels carrying the current values.
        #[arg(long)]
        dot: bool,
    },
    /// Compute invariants, first cohomology and the delta-class order through
    /// the finite-quotient oracle and compare with the certified predictions.
    /// Cost grows quickly with n.
    Oracle,
    /// Run the full certificate suite plus oracle cross-checks and write a
    /// summary report keyed by anchor.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, AppError> {
    let field = build_field(&cli.flags)?;
    let tree = Tree::new(field);
    let fl = &cli.flags;
    match &cli.cmd {
        Cmd::Tree { kind, dot, json } => run_tree(&tree, fl, *kind, *dot, *json),
        Cmd::Orbits => run_orbits(&tree, fl),
        Cmd::Sigma => run_sigma(&tree, fl),
        Cmd::Cohom => run_cohom(&tree, fl),
        Cmd::Vdp { unit, cocycle, g, dot } => {
            run_vdp(&tree, fl, unit.as_deref(), *cocycle, g.as_deref(), *dot)
        }
        Cmd::Oracle => run_oracle(&tree, fl),
        Cmd::All => run_all(&tree, fl),
    }
}

// ---- configuration and IO helpers ---------------------------------------

fn build_field(fl: &RunFlags) -> Result<Field, AppError> {
    let modulus = fl.modulus.as_deref().map(parse_modulus).transpose()?;
    Field::from_parts(fl.backend.into(), fl.p, fl.f, modulus)
        .map_err(|e| AppError::Usage(e.to_string()))
}

fn parse_modulus(s: &str) -> Result<Vec<u16>, AppError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u16>()
                .map_err(|_| AppError::Usage(format!("bad modulus coefficient `{t}`")))
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!("{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_failure(out: &Path, failures: &[Value]) -> Result<(), AppError> {
    let path = out.join("failure.json");
    write_json(&path, &json!({ "failures": failures, "status": "fail" }))?;
    eprintln!("failures recorded in {}", path.display());
    Ok(())
}

// ---- tree ----------------------------------------------------------------

fn run_tree(
    tree: &Tree,
    fl: &RunFlags,
    kind: KindArg,
    dot: bool,
    json: bool,
) -> Result<bool, AppError> {
    let w = tree.window(kind.window_kind(), fl.n);
    println!(
        "window {} n={} over q={}: {} vertices, {} edges",
        kind.name(),
        fl.n,
        tree.q(),
        w.vertices.len(),
        w.edges.len()
    );
    let (want_dot, want_json) = if dot || json { (dot, json) } else { (true, true) };
    if want_dot {
        let path = fl
            .out
            .join(format!("tree.q{}.{}.n{}.dot", tree.q(), kind.name(), fl.n));
        write_atomic(&path, window_to_dot(&w).as_bytes())?;
        println!("wrote {}", path.display());
    }
    if want_json {
        let path = fl
            .out
            .join(format!("tree.q{}.{}.n{}.json", tree.q(), kind.name(), fl.n));
        let v = json!({
            "kind": kind.name(),
            "n": fl.n,
            "q": tree.q(),
            "window": window_to_json(&w),
        });
        write_json(&path, &v)?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

// ---- orbits and sigma ----------------------------------------------------

/// The standard subgroup families with their window shape and generator sets
/// sized to the window: the generated image then equals the full image of the
/// group on the window, since the action factors through a finite level.
fn family_gens(
    tree: &Tree,
    n: usize,
) -> Result<Vec<(&'static str, WindowKind, Vec<Mat2>)>, AppError> {
    let f = &tree.field;
    let mats = |g: Vec<GroupElement>| g.into_iter().map(|e| e.m).collect::<Vec<_>>();
    Ok(vec![
        (
            "max-compact",
            WindowKind::Radius,
            mats(groups::generators(f, SubgroupTag::MaxCompact, n + 2)?),
        ),
        (
            "iwahori",
            WindowKind::Double,
            mats(groups::generators(f, SubgroupTag::Iwahori, n + 3)?),
        ),
        (
            "det-zero",
            WindowKind::Double,
            mats(groups::detzero_window_generators(f, n + 3)),
        ),
    ])
}

fn basis_json(b: &OrbitBasis) -> Value {
    json!({
        "orbit_count": b.orbits.len(),
        "sizes": b.orbits.iter().map(|o| o.len()).collect::<Vec<_>>(),
        "apartment_keys": b.apartment_index,
    })
}

fn sizes_text(b: &OrbitBasis) -> String {
    let sizes: Vec<String> = b.orbits.iter().map(|o| o.len().to_string()).collect();
    format!("[{}]", sizes.join(", "))
}

fn run_orbits(tree: &Tree, fl: &RunFlags) -> Result<bool, AppError> {
    let mut families = BTreeMap::new();
    for (name, kind, gens) in family_gens(tree, fl.n)? {
        let vb = vertex_orbit_basis(tree, kind, fl.n, &gens)?;
        let eb = edge_orbit_basis(tree, kind, fl.n + 1, &gens)?;
        println!(
            "{:<12} on {:<6} window: {} vertex orbits {} at n={}, {} edge orbits {} at n={}",
            name,
            kind_name(kind),
            vb.orbits.len(),
            sizes_text(&vb),
            fl.n,
            eb.orbits.len(),
            sizes_text(&eb),
            fl.n + 1,
        );
        families.insert(
            name,
            json!({
                "window": kind_name(kind),
                "vertex_orbits": basis_json(&vb),
                "edge_orbits": basis_json(&eb),
            }),
        );
    }
    let path = fl.out.join(format!("orbits.q{}.n{}.json", tree.q(), fl.n));
    write_json(&path, &json!({ "q": tree.q(), "n": fl.n, "families": families }))?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn kind_name(kind: WindowKind) -> &'static str {
    match kind {
        WindowKind::Radius => "radius",
        WindowKind::Double => "tprime",
    }
}

fn mat_rows(m: &IntMatrix) -> Vec<Vec<String>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.at(i, j).to_string()).collect())
        .collect()
}

fn run_sigma(tree: &Tree, fl: &RunFlags) -> Result<bool, AppError> {
    let mut families = BTreeMap::new();
    for (name, kind, gens) in family_gens(tree, fl.n)? {
        let (m, vb, eb) =
            btlab_core::cochains::sigma_matrix_on_invariants(tree, kind, fl.n, &gens)?;
        let diag: Vec<String> = snf(&m).diagonal().iter().map(Int::to_string).collect();
        let ck = cokernel_structure(&m);
        println!(
            "{:<12} on {:<6} window n={}: sigma matrix {}x{}",
            name,
            kind_name(kind),
            fl.n,
            m.rows(),
            m.cols()
        );
        for row in mat_rows(&m) {
            println!("    [{}]", row.join(", "));
        }
        println!("    snf diagonal [{}], cokernel {}", diag.join(", "), ck.describe());
        families.insert(
            name,
            json!({
                "window": kind_name(kind),
                "matrix": mat_rows(&m),
                "vertex_keys": vb.apartment_index,
                "edge_keys": eb.apartment_index,
                "snf_diagonal": diag,
                "cokernel": ck.describe(),
            }),
        );
    }
    let path = fl.out.join(format!("sigma.q{}.n{}.json", tree.q(), fl.n));
    write_json(&path, &json!({ "q": tree.q(), "n": fl.n, "families": families }))?;
    println!("wrote {}", path.display());
    Ok(true)
}

// ---- certificates ---------------------------------------------------------

type CertBuilder = fn(&Tree, usize) -> Result<Certificate, VerifyError>;

fn cohom_builders() -> Vec<CertBuilder> {
    vec![
        cert_coker_g0 as CertBuilder,
        cert_iwahori as CertBuilder,
        (|t, _| cert_g0_global(t)) as CertBuilder,
        cert_crt_and_diagram as CertBuilder,
        cert_pstar_j as CertBuilder,
    ]
}

fn all_builders() -> Vec<CertBuilder> {
    let mut v = vec![cert_sigma_closed_forms as CertBuilder];
    v.extend(cohom_builders());
    v
}

fn build_certs(
    tree: &Tree,
    n: usize,
    jobs: usize,
    builders: &[CertBuilder],
) -> Result<Vec<Certificate>, AppError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| AppError::Internal(format!("thread pool: {e}")))?;
    let certs: Result<Vec<Certificate>, VerifyError> = pool.install(|| {
        use rayon::prelude::*;
        builders.par_iter().map(|b| b(tree, n)).collect()
    });
    Ok(certs?)
}

fn payload_str(c: &Certificate, key: &str) -> String {
    c.payload
        .get(key)
        .and_then(Value::as_str)
        .unwrap_or("?")
        .to_string()
}

fn payload_factors(c: &Certificate) -> String {
    match c.payload.get("invariant_factors").and_then(Value::as_array) {
        Some(a) => a
            .iter()
            .map(|v| v.as_str().unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" x "),
        None => "?".to_string(),
    }
}

fn payload_pair(c: &Certificate, key: &str) -> (String, String) {
    let arr = c.payload.get(key).and_then(Value::as_array);
    let get = |i: usize| -> String {
        arr.and_then(|a| a.get(i))
            .and_then(Value::as_str)
            .unwrap_or("?")
            .to_string()
    };
    (get(0), get(1))
}

fn gist(c: &Certificate) -> String {
    match c.name.as_str() {
        "sigma-closed-forms" => "matrices match the closed forms".to_string(),
        "coker-g0" => format!(
            "cokernel Z/{}, base class order {}",
            payload_factors(c),
            payload_str(c, "class_order")
        ),
        "iwahori-kernel" => format!("kernel Z*psi_n, cokernel Z/{}", payload_factors(c)),
        "g0-global" => format!("cokernel Z + Z/{}", payload_factors(c)),
        "crt-diagram" => format!(
            "b = {}, c = {} (mod {})",
            payload_str(c, "b_class"),
            payload_str(c, "c_class"),
            payload_str(c, "modulus")
        ),
        "pstar-j" => {
            let (a, b) = payload_pair(c, "crt_pair");
            format!(
                "class order {}, CRT pair ({}, {})",
                payload_str(c, "class_order"),
                a,
                b
            )
        }
        _ => String::new(),
    }
}

fn run_cohom(tree: &Tree, fl: &RunFlags) -> Result<bool, AppError> {
    let certs = build_certs(tree, fl.n, fl.jobs, &cohom_builders())?;
    let mut failures = Vec::new();
    for cert in &certs {
        let path = write_certificate(&fl.out, cert)?;
        println!("{:<20} [{}] {}  {}", cert.name, cert.anchor, cert.status, gist(cert));
        println!("  -> {}", path.display());
        if cert.status != "pass" {
            failures.push(json!({
                "kind": "certificate",
                "name": cert.name,
                "anchor": cert.anchor,
                "file": path.display().to_string(),
            }));
        }
    }
    if failures.is_empty() {
        return Ok(true);
    }
    write_failure(&fl.out, &failures)?;
    Ok(false)
}

// ---- vdput ----------------------------------------------------------------

fn parse_mat(field: &Field, text: &str) -> Result<Mat2, AppError> {
    let parts: Vec<i64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|_| AppError::Usage(format!("bad matrix entry `{t}`")))
        })
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err(AppError::Usage(
            "expected four row-major matrix entries `a,b,c,d`".to_string(),
        ));
    }
    let m = Mat2::from_i64(field, [[parts[0], parts[1]], [parts[2], parts[3]]]);
    GroupElement::new(field, m.clone())
        .map_err(|_| AppError::Usage("matrix is singular".to_string()))?;
    Ok(m)
}

fn parse_unit(field: &Field, spec: &str) -> Result<FormalUnit, AppError> {
    let bad = |t: &str| AppError::Usage(format!("cannot parse unit term `{t}`; expected `[x:y]^w`"));
    let mut terms = Vec::new();
    for raw in spec.split(',') {
        let t = raw.trim();
        let rest = t.strip_prefix('[').ok_or_else(|| bad(t))?;
        let (coords, tail) = rest.split_once(']').ok_or_else(|| bad(t))?;
        let (xs, ys) = coords.split_once(':').ok_or_else(|| bad(t))?;
        let x: i64 = xs.trim().parse().map_err(|_| bad(t))?;
        let y: i64 = ys.trim().parse().map_err(|_| bad(t))?;
        let w: i64 = match tail.trim() {
            "" => 1,
            tt => tt
                .strip_prefix('^')
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(t))?,
        };
        let end = canonical_end(field, &field.from_i64(x), &field.from_i64(y))
            .map_err(|_| AppError::Usage(format!("`[{x}:{y}]` is the zero point")))?;
        terms.push((end, w));
    }
    FormalUnit::new(terms)
        .map_err(|_| AppError::Usage("total multiplicity of a formal unit must be zero".to_string()))
}

/// Readable end label: residue digits mod pi^level, least significant first.
fn end_text(field: &Field, e: &End, level: usize) -> String {
    let (z, unit_side) = match e {
        End::Unit(z) => (z, true),
        End::Pi(w) => (w, false),
    };
    let digits = match field.reduce(z, level) {
        Ok(qe) => qe
            .digits
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(""),
        Err(_) => format!("{z:?}"),
    };
    if unit_side {
        format!("[1:{digits}]")
    } else {
        format!("[{digits}:1]")
    }
}

fn mat2_json(m: &Mat2) -> Value {
    let row = |r: usize| vec![format!("{:?}", m.e[r][0]), format!("{:?}", m.e[r][1])];
    json!([row(0), row(1)])
}

fn current_dot(w: &Window, values: &[Int]) -> String {
    let mut s = String::from("digraph current {\n  node [shape=circle fontsize=10];\n");
    for (i, v) in w.vertices.iter().enumerate() {
        s.push_str(&format!("  v{} [label=\"{}\"];\n", i, v.describe()));
    }
    for (e, &(i, j)) in w.edges.iter().enumerate() {
        // Direction of the recorded value: out of the even-depth endpoint.
        let (src, dst) = if w.depth[i] % 2 == 0 { (i, j) } else { (j, i) };
        s.push_str(&format!("  v{} -> v{} [label=\"{}\"];\n", src, dst, values[e]));
    }
    s.push_str("}\n");
    s
}

fn run_vdp(
    tree: &Tree,
    fl: &RunFlags,
    unit: Option<&str>,
    cocycle: Option<CocycleArg>,
    g: Option<&str>,
    dot: bool,
) -> Result<bool, AppError> {
    let field = &tree.field;
    if unit.is_some() && cocycle.is_some() {
        return Err(AppError::Usage(
            "pass at most one of --unit and --cocycle".to_string(),
        ));
    }
    let (current, source): (LineCurrent, Value) = if let Some(spec) = unit {
        (parse_unit(field, spec)?.transform(), json!({ "unit": spec }))
    } else if let Some(kind) = cocycle {
        let (gm, gtext) = match g {
            Some(t) => (parse_mat(field, t)?, t.to_string()),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(fl.seed);
                let e = groups::random_element_with(field, SubgroupTag::MaxCompact, &mut rng);
                (e.m, format!("seeded sample (seed {})", fl.seed))
            }
        };
        let cur = match kind {
            CocycleArg::J => j_cocycle(tree, &standard_base_line(field), &gm)?,
            CocycleArg::Theta => theta_cocycle(tree, &gm)?,
            CocycleArg::Beta => {
                if !groups::member(field, &gm, SubgroupTag::G0Det) {
                    return Err(AppError::Usage(
                        "beta expects g with determinant of valuation zero".to_string(),
                    ));
                }
                beta_cocycle(tree, fl.n, &gm)?
            }
        };
        (
            cur,
            json!({ "cocycle": kind.name(), "g": gtext, "g_matrix": mat2_json(&gm) }),
        )
    } else {
        // Default: the unit y/x, divisor [1:0] - [0:1].
        let fu = FormalUnit::new(vec![
            (End::Unit(field.zero()), 1),
            (End::Pi(field.zero()), -1),
        ])
        .expect("balanced divisor");
        (fu.transform(), json!({ "unit": "[1:0]^1,[0:1]^-1 (default)" }))
    };

    let w = tree.window(WindowKind::Radius, fl.n);
    let edge_vals = current.to_edge_cochain(tree, WindowKind::Radius, fl.n)?;
    let level = fl.n + 2;
    let terms: Vec<Value> = current
        .terms
        .iter()
        .map(|(l, lp, wt)| {
            json!({
                "l": end_text(field, l, level),
                "lp": end_text(field, lp, level),
                "weight": wt.to_string(),
            })
        })
        .collect();
    let edges: Vec<Value> = w
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let (src, dst) = if w.depth[i] % 2 == 0 { (i, j) } else { (j, i) };
            json!({
                "src": src,
                "dst": dst,
                "src_label": w.vertices[src].describe(),
                "dst_label": w.vertices[dst].describe(),
                "value": edge_vals.values[e].to_string(),
            })
        })
        .collect();
    let nonzero = edge_vals
        .values
        .iter()
        .filter(|v| **v != Int::from(0))
        .count();
    println!(
        "current with {} boundary terms; {} of {} window edges carry nonzero flow",
        current.terms.len(),
        nonzero,
        w.edges.len()
    );
    let path = fl.out.join(format!("vdp.q{}.n{}.json", tree.q(), fl.n));
    write_json(
        &path,
        &json!({
            "q": tree.q(),
            "n": fl.n,
            "kind": "radius",
            "source": source,
            "terms": terms,
            "edges": edges,
        }),
    )?;
    println!("wrote {}", path.display());
    if dot {
        let dpath = fl.out.join(format!("vdp.q{}.n{}.dot", tree.q(), fl.n));
        write_atomic(&dpath, current_dot(&w, &edge_vals.values).as_bytes())?;
        println!("wrote {}", dpath.display());
    }
    Ok(true)
}

// ---- oracle ----------------------------------------------------------------

#[derive(Serialize)]
struct OracleSection {
    group: String,
    h1_n: usize,
    h1_level: usize,
    group_order: usize,
    harmonic_rank: usize,
    h0_rank: usize,
    h1: String,
    h1_predicted: String,
    h1_match: bool,
    class_n: usize,
    class_level: usize,
    class_group_order: usize,
    class_order: String,
    class_target: String,
    class_match: bool,
}

/// q^n (q + 1), the predicted single invariant factor at level n.
fn target_factor(q: u64, n: usize) -> Int {
    let mut x = Int::from(q + 1);
    for _ in 0..n {
        x *= Int::from(q);
    }
    x
}

fn oracle_section(tree: &Tree, n_h1: usize, n_cls: usize) -> Result<OracleSection, AppError> {
    let q = tree.q();
    let h1_level = n_h1 + 1;
    let action =
        FiniteGroupAction::harmonic(tree, SubgroupTag::MaxCompact, h1_level, WindowKind::Radius, n_h1)?;
    let invs = h0(tree, &action)?;
    let coh = h1(tree, &action)?;
    let predicted = target_factor(q, n_h1);
    let h1_match = coh.free_rank == 0
        && coh.invariant_factors.len() == 1
        && coh.invariant_factors[0] == predicted;

    let class_level = if n_cls == 0 { 1 } else { n_cls + 2 };
    let storage;
    let class_action: &FiniteGroupAction = if n_cls == n_h1 && class_level == h1_level {
        &action
    } else {
        storage = FiniteGroupAction::harmonic(
            tree,
            SubgroupTag::MaxCompact,
            class_level,
            WindowKind::Radius,
            n_cls,
        )?;
        &storage
    };
    let z = delta_cocycle_of_base_orbit(tree, class_action)?;
    let order = class_order_in_h1(tree, class_action, &z)?;
    let target = target_factor(q, n_cls);
    Ok(OracleSection {
        group: "max-compact".to_string(),
        h1_n: n_h1,
        h1_level,
        group_order: action.order(),
        harmonic_rank: action.rank,
        h0_rank: invs.rank,
        h1: coh.describe(),
        h1_predicted: format!("Z/{predicted}"),
        h1_match,
        class_n: n_cls,
        class_level,
        class_group_order: class_action.order(),
        class_order: order.to_string(),
        class_target: target.to_string(),
        class_match: order == target,
    })
}

fn print_oracle(sec: &OracleSection) {
    println!(
        "oracle group {}, quotient order {} at level {}, harmonic rank {}",
        sec.group, sec.group_order, sec.h1_level, sec.harmonic_rank
    );
    println!("H^0 rank {}", sec.h0_rank);
    println!(
        "H^1 = {} (predicted {}): {}",
        sec.h1,
        sec.h1_predicted,
        if sec.h1_match { "match" } else { "MISMATCH" }
    );
    println!(
        "delta-class order {} at n={} (target {}): {}",
        sec.class_order,
        sec.class_n,
        sec.class_target,
        if sec.class_match { "match" } else { "MISMATCH" }
    );
}

fn oracle_failures(sec: &OracleSection, failures: &mut Vec<Value>) {
    if !sec.h1_match {
        failures.push(json!({
            "kind": "oracle",
            "check": "h1",
            "computed": sec.h1,
            "predicted": sec.h1_predicted,
        }));
    }
    if !sec.class_match {
        failures.push(json!({
            "kind": "oracle",
            "check": "class_order",
            "computed": sec.class_order,
            "target": sec.class_target,
        }));
    }
}

fn run_oracle(tree: &Tree, fl: &RunFlags) -> Result<bool, AppError> {
    let sec = oracle_section(tree, fl.n, fl.n)?;
    print_oracle(&sec);
    let path = fl.out.join(format!("oracle.q{}.n{}.json", tree.q(), fl.n));
    write_json(&path, &serde_json::to_value(&sec)?)?;
    println!("wrote {}", path.display());
    if sec.h1_match && sec.class_match {
        return Ok(true);
    }
    let mut failures = Vec::new();
    oracle_failures(&sec, &mut failures);
    write_failure(&fl.out, &failures)?;
    Ok(false)
}

// ---- all -------------------------------------------------------------------

fn run_all(tree: &Tree, fl: &RunFlags) -> Result<bool, AppError> {
    let certs = build_certs(tree, fl.n, fl.jobs, &all_builders())?;
    let mut entries: BTreeMap<String, Value> = BTreeMap::new();
    let mut failures = Vec::new();
    println!("{:<26} {:<20} {:<6} summary", "anchor", "certificate", "status");
    for cert in &certs {
        let path = write_certificate(&fl.out, cert)?;
        let stored = load_certificate(&path)?;
        let rev = reverify(&stored)?;
        println!(
            "{:<26} {:<20} {:<6} {}",
            cert.anchor,
            cert.name,
            cert.status,
            gist(cert)
        );
        if cert.status != "pass" || !rev {
            failures.push(json!({
                "kind": "certificate",
                "name": cert.name,
                "anchor": cert.anchor,
                "file": path.display().to_string(),
                "reverified": rev,
            }));
        }
        let rel = path
            .strip_prefix(&fl.out)
            .unwrap_or(&path)
            .display()
            .to_string();
        entries.insert(
            cert.anchor.clone(),
            json!({
                "checksum": cert.checksum,
                "file": rel,
                "n": cert.config.n,
                "name": cert.name,
                "q": cert.config.q,
                "reverified": rev,
                "status": cert.status,
                "summary": gist(cert),
            }),
        );
    }

    // Oracle cross-checks at sizes independent of the certificate grid: the
    // brute-force group cohomology is only feasible for small quotients.
    let n_cls = if tree.q() <= 3 { fl.n.min(1) } else { 0 };
    let sec = oracle_section(tree, 0, n_cls)?;
    print_oracle(&sec);
    oracle_failures(&sec, &mut failures);

    let status = if failures.is_empty() { "pass" } else { "fail" };
    let report = json!({
        "certificates": entries,
        "config": {
            "backend": fl.backend.name(),
            "f": fl.f,
            "n": fl.n,
            "p": fl.p,
            "q": tree.q(),
            "seed": fl.seed,
        },
        "oracle": serde_json::to_value(&sec)?,
        "status": status,
    });
    let rpath = fl.out.join("report.json");
    write_json(&rpath, &report)?;
    println!("report: {}", rpath.display());
    if failures.is_empty() {
        Ok(true)
    } else {
        write_failure(&fl.out, &failures)?;
        Ok(false)
    }
}
