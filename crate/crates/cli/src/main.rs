use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use invalg::algebroid::{
    self, bracket_from_flip, check_axioms, check_bracket_laws, check_leibniz, check_well_formed, check_yang_baxter,
    compare_flips, flip_from_bracket, random_sections, recover_lie_algebra, roundtrip_bracket, sample_prolongation,
    InvolutionAlgebroid,
};
use invalg::bundle::{ConnectionSpec, ScalarFieldSpec, SectionSpec};
use invalg::fixture::{algebroid_data, AlgebroidData, Fixture, FixtureFile, FlipData, GroupData, HomotopyData, PathData};
use invalg::flow::{
    ahomotopy_membership, ahomotopy_transport, apath_membership, apath_transport, tangent_closed_form_residual,
    MEMBERSHIP_GRID, MEMBERSHIP_TOL, SURFACE_CELLS,
};
use invalg::groupoid::{compare_pair_groupoid, differentiate_group};
use invalg::{catalog, jet, sampling, AlgebroidSpec, CheckResult, Error, PolyMap, Report};

/// Anchor identity along a transport.
const ANCHOR_TOL: f64 = 1e-6;
/// Closed-form agreement for tangent-algebroid transport.
const CLOSED_FORM_TOL: f64 = 1e-8;
/// `Φ₀ = Φ₁` for homotopy transport.
const DISCREPANCY_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "invalg", version, about = "Numerical verification of involution algebroids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every applicable residual suite on a fixture.
    Check {
        /// Fixture file or catalog key.
        fixture: String,
        /// Section fixtures used by the bracket laws (three are needed).
        #[arg(long)]
        section: Vec<PathBuf>,
        /// Scalar-field fixture used by the Leibniz check.
        #[arg(long)]
        field: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Convert between bracket and flip descriptions.
    Convert {
        #[arg(value_enum)]
        direction: Direction,
        fixture: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Integrate A-path or A-homotopy transport.
    Transport {
        fixture: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Differentiate a matrix group or pair groupoid.
    DifferentiateGroup {
        fixture: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Built-in fixtures.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
}

#[derive(Subcommand)]
enum CatalogCommand {
    List {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args, Clone)]
struct Opts {
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Per-check tolerance override, `name=value`.
    #[arg(long = "tolerance", value_parser = parse_tolerance)]
    tolerance: Vec<(String, f64)>,
    /// Report path for `check`; CSV path for `transport`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    ToFlip,
    ToBracket,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad tolerance `{v}`: {e}"))?;
    if !(v > 0.0) {
        return Err(format!("tolerance must be positive, got {v}"));
    }
    Ok((k.to_string(), v))
}

/// Exit 2 for bad input, exit 1 for runtime failures.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Composability { .. } | Error::Divergence { .. } | Error::Membership { .. } => {
                Failure::Runtime(e.into())
            }
            _ => Failure::Input(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check {
            fixture,
            section,
            field,
            opts,
        } => cmd_check(&fixture, &section, field.as_deref(), &opts),
        Command::Convert {
            direction,
            fixture,
            opts,
        } => cmd_convert(direction, &fixture, &opts),
        Command::Transport { fixture, opts } => cmd_transport(&fixture, &opts),
        Command::DifferentiateGroup { fixture, opts } => cmd_differentiate(&fixture, &opts),
        Command::Catalog {
            command: CatalogCommand::List { format },
        } => cmd_catalog(format),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Prefer {
    Algebroid,
    Group,
}

/// A file path if one exists, otherwise a catalog key. Keys shared by
/// algebroids and groups (`so3`, `sl2`) resolve by command.
fn load(arg: &str, prefer: Prefer) -> Result<Fixture, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        let file = FixtureFile::parse(&text).with_context(|| format!("parsing {arg}"))?;
        return Ok(file.body);
    }
    let is_algebroid = catalog::algebroid(arg).is_ok();
    let is_group = catalog::group(arg).is_ok() || catalog::pair_groupoid_dim(arg).is_some();
    let fixture = if is_group && (prefer == Prefer::Group || !is_algebroid) {
        Fixture::Group(GroupData {
            catalog: Some(arg.to_string()),
            name: None,
            n: None,
            algebra_basis: Vec::new(),
        })
    } else if is_algebroid {
        Fixture::Algebroid(AlgebroidData::catalog(arg))
    } else if catalog::path(arg).is_ok() {
        Fixture::Apath(PathData {
            catalog: Some(arg.to_string()),
            algebroid: None,
            t_end: None,
            phi: None,
            a0: None,
        })
    } else if catalog::homotopy(arg).is_ok() {
        Fixture::Ahomotopy(HomotopyData {
            catalog: Some(arg.to_string()),
            algebroid: None,
            h0: None,
            h1: None,
            a0: None,
        })
    } else {
        return Err(Failure::Input(anyhow!(
            "`{arg}` is neither a readable file nor a catalog key (see `invalg catalog list`)"
        )));
    };
    Ok(fixture)
}

fn load_kind<T>(path: &Path, pick: impl Fn(Fixture) -> Option<T>, kind: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = FixtureFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    pick(file.body).ok_or_else(|| Failure::Input(anyhow!("{} is not a {kind} fixture", path.display())))
}

fn emit(report: &mut Report, opts: &Opts) -> Outcome {
    let overrides: BTreeMap<String, f64> = opts.tolerance.iter().cloned().collect();
    report.apply_tolerances(&overrides);
    let text = match opts.format {
        Format::Json => report.to_json() + "\n",
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    };
    match &opts.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(report.passed())
}

fn cmd_check(arg: &str, sections: &[PathBuf], field: Option<&Path>, opts: &Opts) -> Outcome {
    let fixture = load(arg, Prefer::Algebroid)?;
    let sections: Vec<SectionSpec> = sections
        .iter()
        .map(|p| {
            load_kind(
                p,
                |f| match f {
                    Fixture::Section(s) => Some(s.to_section()),
                    _ => None,
                },
                "section",
            )
        })
        .collect::<Result<_, _>>()?;
    let field = field
        .map(|p| {
            load_kind(
                p,
                |f| match f {
                    Fixture::ScalarField(s) => Some(s.to_field()),
                    _ => None,
                },
                "scalar-field",
            )
        })
        .transpose()?
        .transpose()?;

    let mut report = Report::new(arg);
    if opts.samples == 0 {
        return emit(&mut report, opts);
    }
    let (n, seed) = (opts.samples, opts.seed);
    match fixture {
        Fixture::Algebroid(a) => {
            let spec = a.to_spec()?;
            algebroid_suite(&mut report, &spec, None, &sections, field.as_ref(), opts)?;
        }
        Fixture::InvolutionFlip(f) => {
            let spec = f.algebroid.to_spec()?;
            let conn = f.connection.as_ref().map(|c| c.to_connection()).transpose()?;
            algebroid_suite(&mut report, &spec, conn.as_ref(), &sections, field.as_ref(), opts)?;
        }
        Fixture::Group(g) => group_suite(&mut report, &g, n, seed)?,
        Fixture::Apath(p) => {
            let (spec, phi, _) = p.resolve()?;
            let inv = InvolutionAlgebroid::from_spec(&spec);
            report.push(CheckResult::new("apath-membership", n, seed, apath_membership(&inv, &phi, n), MEMBERSHIP_TOL));
        }
        Fixture::Ahomotopy(h) => {
            let (spec, hv, _) = h.resolve()?;
            let inv = InvolutionAlgebroid::from_spec(&spec);
            let m = ahomotopy_membership(&inv, &hv, MEMBERSHIP_GRID);
            let grid = (MEMBERSHIP_GRID + 1) * (MEMBERSHIP_GRID + 1);
            report.push(CheckResult::new("horizontal", grid, seed, m.horizontal, MEMBERSHIP_TOL));
            report.push(CheckResult::new("vertical", grid, seed, m.vertical, MEMBERSHIP_TOL));
            report.push(CheckResult::new("compatible", grid, seed, m.compatible, MEMBERSHIP_TOL));
        }
        Fixture::Section(_) | Fixture::ScalarField(_) | Fixture::Connection(_) => {
            return Err(Failure::Input(anyhow!(
                "section, scalar-field and connection fixtures are checked together with an algebroid \
                 (use --section/--field, or an involution-flip fixture)"
            )));
        }
    }
    emit(&mut report, opts)
}

fn algebroid_suite(
    report: &mut Report,
    spec: &AlgebroidSpec,
    conn: Option<&ConnectionSpec>,
    sections: &[SectionSpec],
    field: Option<&ScalarFieldSpec>,
    opts: &Opts,
) -> Result<(), Failure> {
    let (n, seed) = (opts.samples, opts.seed);
    let inv = match conn {
        Some(c) => flip_from_bracket(spec, c)?,
        None => InvolutionAlgebroid::from_spec(spec),
    };
    let sections = if sections.is_empty() {
        random_sections(spec.dim_m(), spec.dim_a(), 3, 3, seed)
    } else {
        sections.to_vec()
    };
    let field = match field {
        Some(f) => f.clone(),
        None => ScalarFieldSpec::random(&mut sampling::rng_for(seed, usize::MAX - 1), spec.dim_m(), 3),
    };
    report.absorb("tangent", jet::check_tangent_axioms(n, seed));
    report.absorb("spec", check_well_formed(spec, n, seed));
    report.absorb("axioms", check_axioms(&inv, n, seed));
    report.absorb("axioms", check_yang_baxter(&inv, n, seed));
    if let Some(c) = conn {
        let flat = flip_from_bracket(spec, &ConnectionSpec::flat(c.dim_m, c.dim_a))?;
        report.extend(compare_flips(&flat, &inv, "connection-independence", n, seed));
    }
    report.absorb("bracket", check_bracket_laws(&inv, &sections, n, seed)?);
    if sections.len() >= 2 {
        report.absorb("bracket", check_leibniz(&inv, &sections[0], &sections[1], &field, n, seed));
    }
    report.absorb("roundtrip", roundtrip_bracket(spec, &sections, n, seed));
    Ok(())
}

fn group_suite(report: &mut Report, g: &GroupData, n: usize, seed: u64) -> Result<(), Failure> {
    if let Some(dim) = g.catalog.as_deref().and_then(catalog::pair_groupoid_dim) {
        report.absorb("", compare_pair_groupoid(dim, n, seed)?);
    } else {
        let (_, r) = differentiate_group(&g.to_spec()?, n, seed)?;
        report.absorb("", r);
    }
    Ok(())
}

fn cmd_differentiate(arg: &str, opts: &Opts) -> Outcome {
    let Fixture::Group(g) = load(arg, Prefer::Group)? else {
        return Err(Failure::Input(anyhow!("`{arg}` is not a group fixture")));
    };
    let mut report = Report::new(arg);
    group_suite(&mut report, &g, opts.samples, opts.seed)?;
    emit(&mut report, opts)
}

fn cmd_transport(arg: &str, opts: &Opts) -> Outcome {
    let mut report = Report::new(arg);
    let csv = match load(arg, Prefer::Algebroid)? {
        Fixture::Apath(p) => {
            let (spec, phi, a0) = p.resolve()?;
            let inv = InvolutionAlgebroid::from_spec(&spec);
            let tr = apath_transport(&inv, &phi, &a0, opts.step)?;
            let steps = tr.trajectory.times.len() - 1;
            report.push(CheckResult::new("anchor-relation", steps, opts.seed, tr.anchor_residual, ANCHOR_TOL));
            report.push(CheckResult::new(
                "apath-membership",
                steps,
                opts.seed,
                apath_membership(&inv, &phi, steps),
                MEMBERSHIP_TOL,
            ));
            if spec.is_tangent() {
                let r = tangent_closed_form_residual(&phi, &a0, &tr.trajectory);
                report.push(CheckResult::new("closed-form", steps, opts.seed, r, CLOSED_FORM_TOL));
            }
            report.note("step", format!("{:e}", opts.step));
            report.note("final", format!("{:?}", tr.trajectory.last()));
            let header: Vec<String> = (0..spec.dim_m())
                .map(|k| format!("m{k}"))
                .chain((0..spec.dim_a()).map(|k| format!("b{k}")))
                .collect();
            tr.trajectory.to_csv(&header)
        }
        Fixture::Ahomotopy(h) => {
            let (spec, hv, a0) = h.resolve()?;
            let inv = InvolutionAlgebroid::from_spec(&spec);
            let m = ahomotopy_membership(&inv, &hv, MEMBERSHIP_GRID);
            let grid = (MEMBERSHIP_GRID + 1) * (MEMBERSHIP_GRID + 1);
            report.push(CheckResult::new("horizontal", grid, opts.seed, m.horizontal, MEMBERSHIP_TOL));
            report.push(CheckResult::new("vertical", grid, opts.seed, m.vertical, MEMBERSHIP_TOL));
            report.push(CheckResult::new("compatible", grid, opts.seed, m.compatible, MEMBERSHIP_TOL));
            let tr = ahomotopy_transport(&inv, &hv, &a0, opts.step, SURFACE_CELLS)?;
            let points = tr.grid.len() * tr.grid.len();
            report.push(CheckResult::new("anchor-relation", points, opts.seed, tr.anchor_residual, ANCHOR_TOL));
            report.push(CheckResult::new("discrepancy", points, opts.seed, tr.discrepancy, DISCREPANCY_TOL));
            report.note("step", format!("{:e}", opts.step));
            tr.to_csv(spec.dim_m())
        }
        _ => return Err(Failure::Input(anyhow!("transport needs an apath or ahomotopy fixture"))),
    };
    if let Some(p) = &opts.out {
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    let overrides: BTreeMap<String, f64> = opts.tolerance.iter().cloned().collect();
    report.apply_tolerances(&overrides);
    print!(
        "{}",
        match opts.format {
            Format::Json => report.to_json() + "\n",
            Format::Text => report.to_text(),
            Format::Csv => report.to_csv(),
        }
    );
    Ok(report.passed())
}

fn frame_section(dim_m: usize, dim_a: usize, i: usize) -> SectionSpec {
    let mut e = vec![0.0; dim_a];
    e[i] = 1.0;
    SectionSpec::new(PolyMap::constant(dim_m, &e))
}

fn cmd_convert(direction: Direction, arg: &str, opts: &Opts) -> Outcome {
    let fixture = load(
        arg,
        match direction {
            Direction::ToFlip => Prefer::Algebroid,
            Direction::ToBracket => Prefer::Group,
        },
    )?;
    let out = match (direction, fixture) {
        (Direction::ToFlip, Fixture::Algebroid(a)) => {
            let spec = a.to_spec()?;
            let inv = InvolutionAlgebroid::from_spec(&spec);
            let mut rows = Vec::with_capacity(opts.samples);
            for i in 0..opts.samples {
                let mut rng = sampling::rng_for(opts.seed, i);
                let m = algebroid::random_base(&mut rng, spec.dim_m());
                let pe = sample_prolongation(&inv.anchor, &m, &mut rng);
                let alpha = inv.alpha(&pe.v, &pe.w)?;
                let correction: Vec<f64> = alpha.da.iter().zip(&pe.w.da).map(|(x, y)| x - y).collect();
                rows.push(json!({
                    "m": m, "a_v": pe.v.a, "a_w": pe.w.a, "dm_w": pe.w.dm, "da_w": pe.w.da,
                    "alpha": {"m": alpha.m, "a": alpha.a, "dm": alpha.dm, "da": alpha.da},
                    "correction": correction,
                }));
            }
            json!({
                "fixture": FixtureFile::new(Fixture::InvolutionFlip(FlipData {
                    algebroid: algebroid_data(&spec),
                    connection: None,
                })),
                "samples": opts.samples,
                "seed": opts.seed,
                "table": rows,
            })
        }
        (Direction::ToBracket, Fixture::InvolutionFlip(f)) => {
            let inv = f.to_involution()?;
            bracket_table(&inv, opts)?
        }
        (Direction::ToBracket, Fixture::Group(g)) => {
            if g.catalog.as_deref().and_then(catalog::pair_groupoid_dim).is_some() {
                return Err(Failure::Input(anyhow!(
                    "the pair groupoid's algebroid is the tangent bundle; convert `tangent(m)` instead"
                )));
            }
            let (inv, _) = differentiate_group(&g.to_spec()?, opts.samples.max(1), opts.seed)?;
            bracket_table(&inv, opts)?
        }
        (Direction::ToFlip, _) => return Err(Failure::Input(anyhow!("to-flip needs an algebroid fixture"))),
        (Direction::ToBracket, _) => {
            return Err(Failure::Input(anyhow!("to-bracket needs an involution-flip or group fixture")))
        }
    };
    let text = serde_json::to_string_pretty(&out).expect("json") + "\n";
    match &opts.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(true)
}

/// Brackets of frame sections read off the flip at sampled base points,
/// plus the fitted constants when the base is a point.
fn bracket_table(inv: &InvolutionAlgebroid, opts: &Opts) -> Result<Value, Failure> {
    let (dm, da) = (inv.dim_m(), inv.dim_a());
    let frame: Vec<SectionSpec> = (0..da).map(|i| frame_section(dm, da, i)).collect();
    let points = if dm == 0 { 1 } else { opts.samples };
    let mut rows = Vec::new();
    for p in 0..points {
        let m = algebroid::random_base(&mut sampling::rng_for(opts.seed, p), dm);
        for i in 0..da {
            for j in (i + 1)..da {
                let b = bracket_from_flip(inv, &frame[i], &frame[j], &m)?;
                rows.push(json!({"m": m, "i": i, "j": j, "bracket": b}));
            }
        }
    }
    let mut out = json!({ "name": inv.name, "seed": opts.seed, "table": rows });
    if dm == 0 {
        let spec = recover_lie_algebra(inv)?;
        out["structure_constants"] = json!(spec.constants_at(&[]));
        out["fixture"] = serde_json::to_value(FixtureFile::new(Fixture::Algebroid(algebroid_data(&spec)))).expect("json");
    }
    Ok(out)
}

fn cmd_catalog(format: Format) -> Outcome {
    let entries = catalog::list();
    match format {
        Format::Json => {
            let v: Vec<Value> = entries
                .iter()
                .map(|(kind, key, desc)| json!({"kind": kind, "key": key, "description": desc}))
                .collect();
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        }
        Format::Csv => {
            println!("kind,key,description");
            for (kind, key, desc) in &entries {
                println!("{kind},{key},{desc}");
            }
        }
        Format::Text => {
            for (kind, key, desc) in &entries {
                println!("{kind:<10} {key:<24} {desc}");
            }
        }
    }
    Ok(true)
}
