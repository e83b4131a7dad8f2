//! Command-line front end for `polyslot`.
//!
//! [`run`] parses arguments, executes one subcommand and returns the exit
//! code: 0 on success, 1 when a verification fails, 2 on usage or input
//! errors. Every randomized command reports its seed.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use polyslot::comb::{action_residual, comb_action_distance, comb_to_internal, slot_to_comb, SLOT_BATTERY};
use polyslot::fixtures::{check_fixtures, write_fixtures};
use polyslot::lat::{both_orders, check_slot_commutation, identity_lat, interchange_demo_with, s_loop, s_v};
use polyslot::pathing::{check_no_path_unitary, extract_witness, signalling_deviation, witness_isometry_defect};
use polyslot::polycat::{haar_plain_args, NetworkSpec};
use polyslot::supermap::{default_ext_schedule, loop_rejection_demo, pair_state, sequential_composition, verify};
use polyslot::switch::{build_n_switch, cyclic_orderings, switch_demo, Control};
use polyslot::tensor::Mat;
use polyslot::{
    category::unitarity_defect, gates, rng, CategoryTag, Comb, Error, HigherObject, InternalSupermap, Lat, Morphism,
    PathConstraint, Tolerance, WireType,
};

pub const DEFAULT_SEED: u64 = 20240611;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Pretty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Cat {
    Fu,
    Fqc,
    Fhilb,
}

impl From<Cat> for CategoryTag {
    fn from(c: Cat) -> Self {
        match c {
            Cat::Fu => CategoryTag::FU,
            Cat::Fqc => CategoryTag::FQC,
            Cat::Fhilb => CategoryTag::FHilb,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LatKind {
    Loop,
    V,
    Id,
}

#[derive(Debug, Parser)]
#[command(name = "polyslot", version, about = "Verify, decompose and compose higher-order quantum processes")]
struct Cli {
    /// Absolute tolerance on max-entry norms.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for every randomized battery.
    #[arg(long, global = true, env = "POLYSLOT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Random trials per battery.
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Pretty)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a supermap preserves a category on all extensions.
    Verify(VerifyArgs),
    /// Extract a comb from a single-slot supermap.
    Decompose { file: String },
    /// No-path checks and witness extraction.
    #[command(subcommand)]
    Pathing(PathingCmd),
    /// Worked examples with seeded inputs.
    #[command(subcommand)]
    Demo(DemoCmd),
    /// Build and evaluate composite networks.
    #[command(subcommand)]
    Polycat(PolycatCmd),
    /// Internal supermaps.
    #[command(subcommand)]
    Supermap(SupermapCmd),
    /// Comb decomposition and round trips.
    #[command(subcommand)]
    Comb(CombCmd),
    /// Commutation of slot-local transformations.
    #[command(subcommand)]
    Lat(LatCmd),
    /// The n-party switch.
    #[command(subcommand)]
    Switch(SwitchCmd),
    /// Regenerate or check the fixture corpus.
    #[command(subcommand)]
    Fixtures(FixturesCmd),
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Cat::Fu)]
    cat: Cat,
    /// Supermap JSON, or `-` for stdin.
    file: String,
}

#[derive(Debug, Subcommand)]
enum PathingCmd {
    /// Decide whether a unitary has no path from source to target.
    Check(PathingArgs),
    /// Extract a staircase witness.
    Extract(PathingArgs),
}

#[derive(Debug, Args)]
struct PathingArgs {
    /// Constraint JSON `{"source":[..],"target":[..]}`, inline or a file path.
    #[arg(long)]
    constraint: String,
    /// Morphism JSON, or `-` for stdin.
    file: String,
}

#[derive(Debug, Subcommand)]
enum DemoCmd {
    /// Both orders of S^V and S^loop on the swap.
    Interchange {
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// The pair state wired twice into sequential composition.
    Loop {
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// The switch on Haar inputs, its blocks and its verification.
    Switch(SwitchArgs),
}

#[derive(Debug, Args)]
struct SwitchArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Number of parties.
    #[arg(long, default_value_t = 2)]
    n: usize,
}

#[derive(Debug, Subcommand)]
enum PolycatCmd {
    /// Build a network and evaluate each component on Haar inputs.
    Eval { file: String },
    /// Build a network and check its composition plans.
    Check { file: String },
}

#[derive(Debug, Subcommand)]
enum SupermapCmd {
    /// Same as the top-level `verify`.
    Verify(VerifyArgs),
}

#[derive(Debug, Subcommand)]
enum CombCmd {
    /// Comb → supermap → comb, reporting the action residual.
    Roundtrip { file: String },
    /// Same as the top-level `decompose`.
    Decompose { file: String },
}

#[derive(Debug, Subcommand)]
enum LatCmd {
    /// Same as `demo interchange`.
    DemoInterchange {
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Apply two transformations to disjoint holes in both orders.
    Commute {
        #[arg(long, value_enum)]
        left: LatKind,
        #[arg(long, value_enum)]
        right: LatKind,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
}

#[derive(Debug, Subcommand)]
enum SwitchCmd {
    /// Same as `demo switch`, with a party count.
    Demo(SwitchArgs),
}

#[derive(Debug, Subcommand)]
enum FixturesCmd {
    /// Write the fixture corpus and manifest.
    Regen { dir: PathBuf },
    /// Regenerate in memory and compare digests.
    Check { dir: PathBuf },
}

struct Config {
    tol: Tolerance,
    seed: u64,
    trials: usize,
}

/// A command result: the JSON report, its human-readable form, and whether
/// the command's check passed.
struct Report {
    json: Value,
    pretty: String,
    passed: bool,
}

/// Errors that mean "the check ran and failed" rather than "bad input".
fn is_verification_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NotAComb { .. }
            | Error::ReassemblyFail { .. }
            | Error::ConstraintFails { .. }
            | Error::ExtractionUnstable { .. }
            | Error::InconsistentBackend { .. }
            | Error::PathViolation { .. }
            | Error::NotClosed { .. }
            | Error::DigestMismatch { .. }
    )
}

/// Runs the CLI on `argv` (including the program name).
pub fn run<I, T>(argv: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let format = cli.format;
    let report = Tolerance::new(cli.tol)
        .map_err(anyhow::Error::from)
        .and_then(|tol| {
            let cfg = Config { tol, seed: cli.seed, trials: cli.trials as usize };
            dispatch(cli.command, &cfg, stdin)
        });
    match report {
        Ok(r) => {
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&r.json).expect("report serializes") + "\n",
                Format::Pretty => r.pretty,
            };
            if out.write_all(text.as_bytes()).is_err() {
                return 2;
            }
            if r.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(pe) if is_verification_failure(pe) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cmd: Command, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    match cmd {
        Command::Verify(a) | Command::Supermap(SupermapCmd::Verify(a)) => cmd_verify(&a, cfg, stdin),
        Command::Decompose { file } | Command::Comb(CombCmd::Decompose { file }) => cmd_decompose(&file, cfg, stdin),
        Command::Comb(CombCmd::Roundtrip { file }) => cmd_roundtrip(&file, cfg, stdin),
        Command::Pathing(PathingCmd::Check(a)) => cmd_pathing_check(&a, cfg, stdin),
        Command::Pathing(PathingCmd::Extract(a)) => cmd_pathing_extract(&a, cfg, stdin),
        Command::Demo(DemoCmd::Interchange { dim }) | Command::Lat(LatCmd::DemoInterchange { dim }) => cmd_interchange(dim, cfg),
        Command::Demo(DemoCmd::Loop { dim }) => cmd_loop(dim, cfg),
        Command::Demo(DemoCmd::Switch(a)) | Command::Switch(SwitchCmd::Demo(a)) => cmd_switch(&a, cfg),
        Command::Lat(LatCmd::Commute { left, right, dim }) => cmd_commute(left, right, dim, cfg),
        Command::Polycat(PolycatCmd::Eval { file }) => cmd_polycat_eval(&file, cfg, stdin),
        Command::Polycat(PolycatCmd::Check { file }) => cmd_polycat_check(&file, cfg, stdin),
        Command::Fixtures(FixturesCmd::Regen { dir }) => cmd_fixtures_regen(&dir, cfg),
        Command::Fixtures(FixturesCmd::Check { dir }) => cmd_fixtures_check(&dir),
    }
}

fn read_input(file: &str, stdin: &mut dyn Read) -> anyhow::Result<String> {
    if file == "-" {
        let mut s = String::new();
        stdin.read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        std::fs::read_to_string(file).with_context(|| format!("reading {file}"))
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> anyhow::Result<T> {
    serde_json::from_str(text).map_err(Error::from).with_context(|| format!("parsing {what}"))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn fmt_matrix(m: &Mat) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| {
                let z = m[(r, c)];
                let (re, im) = (clean(z.re), clean(z.im));
                format!("{re:>7.4}{}{:.4}i", if im < 0.0 { '-' } else { '+' }, im.abs())
            })
            .collect();
        s.push_str("  [");
        s.push_str(&row.join("  "));
        s.push_str("]\n");
    }
    s
}

/// Rounds values that print as zero to positive zero.
fn clean(x: f64) -> f64 {
    if x.abs() < 5e-5 {
        0.0
    } else {
        x
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_verify(a: &VerifyArgs, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let s: InternalSupermap = parse(&read_input(&a.file, stdin)?, "supermap")?;
    let report = verify(&s, a.cat.into(), cfg.trials, &default_ext_schedule(), cfg.seed, cfg.tol);
    let mut pretty = format!(
        "verify {}: {}\nseed: {} ({})\ntrials: {} + {} structured\nmax defect: {:.3e} (tol {:e})\n",
        report.category,
        verdict(report.passed()),
        report.seed,
        report.generator,
        report.trials,
        report.structured_cases,
        report.max_defect(),
        report.tol
    );
    if let Some(w) = &report.worst_case {
        pretty.push_str(&format!("worst case: {} ext {:?} defect {:.3e}\n", w.label, w.ext_dims, w.defect));
    }
    for n in &report.notes {
        pretty.push_str(&format!("note: {n}\n"));
    }
    Ok(Report { json: to_json(&report), pretty, passed: report.passed() })
}

fn cmd_decompose(file: &str, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let s: InternalSupermap = parse(&read_input(file, stdin)?, "supermap")?;
    let c = slot_to_comb(&s, cfg.tol)?;
    let residual = action_residual(&c, &s, SLOT_BATTERY, cfg.seed)?;
    let passed = residual <= cfg.tol.scaled(c.outer().output.total());
    let json = json!({
        "seed": cfg.seed,
        "battery": SLOT_BATTERY,
        "memory": c.memory(),
        "action_residual": residual,
        "passed": passed,
        "comb": c,
    });
    let pretty = format!(
        "decompose: {}\nseed: {}\nmemory: {:?}\naction residual over {} samples: {:.3e}\npre:\n{}post:\n{}",
        verdict(passed),
        cfg.seed,
        c.memory().factors(),
        SLOT_BATTERY,
        residual,
        fmt_matrix(c.pre().mat()),
        fmt_matrix(c.post().mat()),
    );
    Ok(Report { json, pretty, passed })
}

fn cmd_roundtrip(file: &str, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let c: Comb = parse(&read_input(file, stdin)?, "comb")?;
    let back = slot_to_comb(&comb_to_internal(&c), cfg.tol)?;
    let residual = comb_action_distance(&c, &back, SLOT_BATTERY, cfg.seed)?;
    let passed = residual <= cfg.tol.scaled(c.outer().output.total());
    let json = json!({
        "seed": cfg.seed,
        "battery": SLOT_BATTERY,
        "memory_in": c.memory(),
        "memory_out": back.memory(),
        "action_residual": residual,
        "passed": passed,
    });
    let pretty = format!(
        "comb roundtrip: {}\nseed: {}\nmemory {:?} -> {:?}\naction residual over {} samples: {:.3e}\n",
        verdict(passed),
        cfg.seed,
        c.memory().factors(),
        back.memory().factors(),
        SLOT_BATTERY,
        residual
    );
    Ok(Report { json, pretty, passed })
}

fn read_constraint(arg: &str) -> anyhow::Result<PathConstraint> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    };
    parse(&text, "constraint")
}

fn cmd_pathing_check(a: &PathingArgs, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let c = read_constraint(&a.constraint)?;
    let phi: Morphism = parse(&read_input(&a.file, stdin)?, "morphism")?;
    let holds = check_no_path_unitary(&phi, &c, cfg.tol)?;
    let deviation = signalling_deviation(&phi, &c)?;
    let json = json!({ "constraint": c, "deviation": deviation, "tol": cfg.tol.abs_tol, "holds": holds });
    let pretty = format!(
        "no path from inputs {:?} to outputs {:?}: {}\nsignalling deviation: {:.3e}\n",
        c.source,
        c.target,
        if holds { "holds" } else { "violated" },
        deviation
    );
    Ok(Report { json, pretty, passed: holds })
}

fn cmd_pathing_extract(a: &PathingArgs, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let c = read_constraint(&a.constraint)?;
    let phi: Morphism = parse(&read_input(&a.file, stdin)?, "morphism")?;
    let w = extract_witness(&phi, &c, cfg.tol)?;
    let residual = w.reassemble()?.max_abs_diff(&phi)?;
    let defect = witness_isometry_defect(&w);
    let passed = residual <= cfg.tol.scaled(phi.dom().total());
    let json = json!({
        "constraint": c,
        "memory": w.memory,
        "first": w.first,
        "second": w.second,
        "reassembly_residual": residual,
        "isometry_defect": defect,
    });
    let pretty = format!(
        "witness memory: {:?}\nreassembly residual: {:.3e}\nisometry defect: {:.3e}\nfirst:\n{}second:\n{}",
        w.memory.factors(),
        residual,
        defect,
        fmt_matrix(w.first.mat()),
        fmt_matrix(w.second.mat())
    );
    Ok(Report { json, pretty, passed })
}

fn cmd_interchange(dim: usize, _cfg: &Config) -> anyhow::Result<Report> {
    let a = WireType::qudit(dim);
    let demo = interchange_demo_with(dim, &gates::dft(dim), &Morphism::identity(&a))?;
    let id = Morphism::identity(&a);
    let trivial = interchange_demo_with(dim, &id, &id)?.max_difference;
    let passed = demo.max_difference > 0.1;
    let mut json = to_json(&demo);
    json["trivial_difference"] = json!(trivial);
    let pretty = format!(
        "S^V (V = DFT, W = id) and S^loop on the swap, dim {dim}\nV then loop:\n{}loop then V:\n{}max difference: {:.6}\nwith V = W = id: {:.3e}\n",
        fmt_matrix(demo.v_then_loop.mat()),
        fmt_matrix(demo.loop_then_v.mat()),
        demo.max_difference,
        trivial
    );
    Ok(Report { json, pretty, passed })
}

fn rejection_kind(e: &Error) -> &'static str {
    match e {
        Error::AlreadyConnected { .. } => "already_connected",
        Error::SelfComposition(_) => "self_composition",
        Error::BadLeg { .. } => "bad_leg",
        _ => "other",
    }
}

fn cmd_loop(dim: usize, cfg: &Config) -> anyhow::Result<Report> {
    if dim == 0 {
        return Err(anyhow!("dim must be positive"));
    }
    let a = WireType::qudit(dim);
    let demo = loop_rejection_demo(&sequential_composition(&a, &a, &a), &pair_state(&a))?;
    let expected = 1.0 / dim as f64;
    let passed = matches!(demo.rejection, Error::AlreadyConnected { .. })
        && (demo.scalar - expected).abs() <= cfg.tol.abs_tol
        && demo.residual_defect <= cfg.tol.scaled(dim);
    let json = json!({
        "dim": dim,
        "rejection": rejection_kind(&demo.rejection),
        "raw": demo.raw,
        "scalar": demo.scalar,
        "expected_scalar": expected,
        "residual_defect": demo.residual_defect,
    });
    let pretty = format!(
        "second wire between pair state and sequential composition: rejected ({})\nraw double contraction:\n{}scalar: {:.6} (1/d = {:.6})\nunitarity defect after rescaling: {:.3e}\n",
        demo.rejection,
        fmt_matrix(demo.raw.mat()),
        demo.scalar,
        expected,
        demo.residual_defect
    );
    Ok(Report { json, pretty, passed })
}

fn cmd_switch(a: &SwitchArgs, cfg: &Config) -> anyhow::Result<Report> {
    if a.n < 2 || a.dim == 0 {
        return Err(anyhow!("the switch needs n >= 2 parties and dim >= 1"));
    }
    let demo = switch_demo(a.dim, a.n, cfg.seed)?;
    let s = build_n_switch(Control::computational(a.n), &WireType::qudit(a.dim), cyclic_orderings(a.n))?;
    let report = verify(&s.to_internal()?, CategoryTag::FU, cfg.trials, &default_ext_schedule(), cfg.seed, cfg.tol);
    let bound = cfg.tol.scaled(a.dim * a.n);
    let passed = demo.unitarity_defect <= bound
        && demo.closed_form_deviation <= bound
        && demo.max_party_deviation <= bound
        && report.passed();
    let json = json!({ "demo": demo, "verification": report, "passed": passed });
    let mut pretty = format!("switch: {} parties on dim {}\nseed: {}\n", a.n, a.dim, cfg.seed);
    for (k, (b, order)) in demo.blocks.iter().zip(cyclic_orderings(a.n)).enumerate() {
        pretty.push_str(&format!("block {k} (order {order:?}):\n{}", fmt_matrix(b.mat())));
    }
    pretty.push_str(&format!(
        "unitarity defect: {:.3e}\nclosed-form deviation: {:.3e}\nparty comb deviation: {:.3e}\nverify fu: {} (max defect {:.3e} over {} trials)\n",
        demo.unitarity_defect,
        demo.closed_form_deviation,
        demo.max_party_deviation,
        verdict(report.passed()),
        report.max_defect(),
        report.trials
    ));
    Ok(Report { json, pretty, passed })
}

fn make_lat(kind: LatKind, a: &WireType) -> anyhow::Result<Lat> {
    Ok(match kind {
        LatKind::Loop => s_loop(a),
        LatKind::V => s_v(a, &gates::dft(a.total()), &Morphism::identity(a))?,
        LatKind::Id => identity_lat(&HigherObject::square(a)),
    })
}

fn cmd_commute(left: LatKind, right: LatKind, dim: usize, cfg: &Config) -> anyhow::Result<Report> {
    if dim < 2 {
        return Err(anyhow!("dim must be at least 2"));
    }
    let a = WireType::qudit(dim);
    let (l, r) = (make_lat(left, &a)?, make_lat(right, &a)?);
    let report = check_slot_commutation(&l, &r, cfg.seed, cfg.trials, cfg.tol)?;
    let swap = Morphism::braid(&a, &a);
    let (lr, rl) = both_orders(&l, &r, &swap, &WireType::unit(), &WireType::unit())?;
    let swap_difference = lr.max_abs_diff(&rl)?;
    let json = json!({
        "report": report,
        "on_swap": { "left_then_right": lr, "right_then_left": rl, "max_difference": swap_difference },
    });
    let pretty = format!(
        "{} on hole 1, {} on hole 2: {}\nseed: {}\nmax deviation over {} trials: {:.3e}{}\ndifference on the swap: {:.6}\n",
        l.name(),
        r.name(),
        if report.passed { "commute" } else { "do not commute" },
        cfg.seed,
        report.trials,
        report.max_deviation,
        report.worst_case.as_ref().map(|w| format!(" ({w})")).unwrap_or_default(),
        swap_difference
    );
    Ok(Report { json, pretty, passed: report.passed })
}

fn rejection_json(spec: &NetworkSpec, index: usize, e: &Error) -> Value {
    let c = &spec.compositions[index];
    json!({
        "composition": index,
        "from": c.from,
        "from_leg": c.from_leg,
        "to": c.to,
        "to_leg": c.to_leg,
        "kind": rejection_kind(e),
    })
}

fn cmd_polycat_eval(file: &str, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let spec = NetworkSpec::from_json(&read_input(file, stdin)?)?;
    let net = spec.build()?;
    if let Some((i, e)) = &net.rejected {
        let json = json!({ "seed": cfg.seed, "rejected": rejection_json(&spec, *i, e) });
        let pretty = format!("composition {i} rejected: {e}\n");
        return Ok(Report { json, pretty, passed: false });
    }
    let mut components = Vec::new();
    let mut pretty = format!("seed: {}\n", cfg.seed);
    for (k, t) in net.components.iter().enumerate() {
        let args = haar_plain_args(t, rng::child_seed(cfg.seed, k as u64))?;
        let out = t.evaluate(&args)?;
        let defect = unitarity_defect(&out);
        pretty.push_str(&format!(
            "{}: {} inputs, {} outputs, unitarity defect {:.3e}\n{}",
            t.name(),
            t.inputs().len(),
            t.outputs().len(),
            defect,
            fmt_matrix(out.mat())
        ));
        components.push(json!({
            "name": t.name(),
            "inputs": t.inputs(),
            "outputs": t.outputs(),
            "arguments": args.iter().map(|a| &a.phi).collect::<Vec<_>>(),
            "result": out,
            "unitarity_defect": defect,
        }));
    }
    Ok(Report { json: json!({ "seed": cfg.seed, "components": components }), pretty, passed: true })
}

fn cmd_polycat_check(file: &str, cfg: &Config, stdin: &mut dyn Read) -> anyhow::Result<Report> {
    let spec = NetworkSpec::from_json(&read_input(file, stdin)?)?;
    let net = spec.build()?;
    let mut passed = net.rejected.is_none();
    let mut components = Vec::new();
    let mut pretty = String::new();
    for (k, t) in net.components.iter().enumerate() {
        let well_formed = t.plan().is_well_formed();
        let defect = match haar_plain_args(t, rng::child_seed(cfg.seed, k as u64)) {
            Ok(args) => Some(unitarity_defect(&t.evaluate(&args)?)),
            Err(_) => None,
        };
        passed &= well_formed;
        pretty.push_str(&format!(
            "{}: {} terms, {} wires, acyclic: {well_formed}{}\n",
            t.name(),
            t.plan().nodes.len(),
            t.plan().edges.len(),
            defect.map(|d| format!(", unitarity defect {d:.3e}")).unwrap_or_default()
        ));
        components.push(json!({
            "name": t.name(),
            "terms": t.plan().nodes.len(),
            "wires": t.plan().edges.len(),
            "well_formed": well_formed,
            "unitarity_defect": defect,
        }));
    }
    let rejected = net.rejected.as_ref().map(|(i, e)| {
        pretty.push_str(&format!("composition {i} rejected: {e}\n"));
        rejection_json(&spec, *i, e)
    });
    pretty.insert_str(0, &format!("network: {}\nseed: {}\n", verdict(passed), cfg.seed));
    let json = json!({ "seed": cfg.seed, "passed": passed, "rejected": rejected, "components": components });
    Ok(Report { json, pretty, passed })
}

fn cmd_fixtures_regen(dir: &std::path::Path, cfg: &Config) -> anyhow::Result<Report> {
    let m = write_fixtures(dir, cfg.seed)?;
    let pretty = format!("wrote {} fixtures to {} (seed {})\n", m.fixtures.len(), dir.display(), m.seed);
    Ok(Report { json: to_json(&m), pretty, passed: true })
}

fn cmd_fixtures_check(dir: &std::path::Path) -> anyhow::Result<Report> {
    let m = check_fixtures(dir)?;
    let pretty = format!("{} fixtures match the manifest (seed {})\n", m.fixtures.len(), m.seed);
    Ok(Report { json: to_json(&m), pretty, passed: true })
}
