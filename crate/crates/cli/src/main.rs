use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use padic_cells::cells::{Ball, Decomposition};
use padic_cells::decompose::{decompose_set, prepare, MAX_DEPTH_ENV};
use padic_cells::dim::{dim_of, dim_of_products, dim_product, dim_union, product_cells, Dim};
use padic_cells::kgroup::{chi, cv_check_report};
use padic_cells::measure::{igusa_zeta, measure, measure_of_order};
use padic_cells::oracle::{verify_laws_seeded, verify_partition, RootCounts, DEFAULT_SEED};
use padic_cells::padic::{Prime, Rat};
use padic_cells::par::{set_execution, Execution};
use padic_cells::parse::{parse_formula, parse_poly};
use padic_cells::Error;

const SCHEMA: &str = "padic-cells/1";

#[derive(Parser)]
#[command(name = "padic-cells", version, about = "Cell decomposition, measures and zeta functions over Z_p")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    prime: u64,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Center of the domain ball.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    center: String,
    /// The domain is `center + p^min_ord Z_p`.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    min_ord: i64,
    /// Cap on the decomposition recursion depth.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct Input {
    #[arg(long, allow_hyphen_values = true)]
    poly: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    formula: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DimOp {
    Each,
    Product,
    Union,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose Z_p for a polynomial, or the set defined by a formula.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Measure of a definable set, or of the level sets of ord f.
    Measure {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        /// Largest m in the ord f = m table.
        #[arg(long, default_value_t = 5)]
        upto: u32,
    },
    /// Igusa local zeta function of a polynomial as a rational function of t = p^-s.
    Zeta {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        poly: String,
    },
    /// Check a decomposition of Z_p against brute-force root counting and sampling.
    OracleCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        poly: String,
        #[arg(long, default_value_t = 5)]
        k: u32,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Class of a decomposition in the auxiliary semiring.
    Chi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Compare the classes of two decompositions of the same set.
    CvCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        left: String,
        #[arg(long, allow_hyphen_values = true)]
        right: String,
    },
    /// Dimension of definable sets, their product or their disjoint union.
    Dim {
        #[command(flatten)]
        common: Common,
        #[arg(long = "formula", required = true, allow_hyphen_values = true)]
        formulas: Vec<String>,
        #[arg(long, value_enum, default_value = "each")]
        op: DimOp,
    },
}

/// A finished command: its payload and whether the verdict was positive.
struct Outcome {
    json: Value,
    text: String,
    ok: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::InvalidPrime(_) | Error::InvalidInput(_) => 2,
        Error::QuantifierNotSupported | Error::ZeroPolynomial | Error::PDenominator => 3,
        Error::BoundExceeded(_) => 4,
        _ => 1,
    }
}

fn setup(c: &Common) -> Result<(Prime, Ball), Error> {
    if c.sequential {
        set_execution(Execution::Sequential);
    }
    if let Some(d) = c.max_depth {
        if d == 0 {
            return Err(Error::InvalidInput("--max-depth must be positive".into()));
        }
        std::env::set_var(MAX_DEPTH_ENV, d.to_string());
    }
    let p = Prime::new(c.prime)?;
    let center = parse_rational(&c.center)?;
    Ok((p, Ball { center, min_ord: c.min_ord }))
}

fn parse_rational(text: &str) -> Result<Rat, Error> {
    let f = parse_poly(text)?;
    if f.degree() > 0 {
        return Err(Error::InvalidInput(format!("{text} is not a rational number")));
    }
    Ok(f.coeffs().first().cloned().unwrap_or_default())
}

fn to_json<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

/// The decomposition named by `--poly` or `--formula`, with the kept flags for a formula.
fn build(input: &Input, p: Prime, domain: &Ball) -> Result<(Decomposition, Option<Vec<bool>>), Error> {
    match &input.formula {
        Some(phi) => {
            let sd = decompose_set(&parse_formula(phi)?, p, domain)?;
            Ok((sd.decomposition, Some(sd.kept)))
        }
        None => Ok((prepare(&parse_poly(input.poly.as_deref().unwrap_or_default())?, p, domain)?, None)),
    }
}

fn input_json(input: &Input) -> Value {
    match (&input.poly, &input.formula) {
        (Some(f), _) => json!({ "poly": f }),
        (_, Some(phi)) => json!({ "formula": phi }),
        _ => Value::Null,
    }
}

fn cell_lines(d: &Decomposition, kept: Option<&[bool]>) -> String {
    let mut out = String::new();
    for (i, c) in d.cells.iter().enumerate() {
        let mark = match kept {
            Some(k) if k[i] => "+ ",
            Some(_) => "- ",
            None => "",
        };
        out.push_str(&format!("{mark}[{i}] {}\n", serde_json::to_string(c).expect("serializable")));
    }
    out
}

fn decompose_cmd(common: &Common, input: &Input) -> Result<Outcome, Error> {
    let (p, domain) = setup(common)?;
    let (d, kept) = build(input, p, &domain)?;
    let text = format!("{} cells over {}\n{}", d.cells.len(), fmt_ball(&domain), cell_lines(&d, kept.as_deref()));
    let mut json = json!({
        "prime": p.get(),
        "input": input_json(input),
        "domain": to_json(&domain),
        "cells": to_json(&d.cells),
        "k": d.k.iter().map(|(f, k)| json!({ "poly": f.to_string(), "k": k })).collect::<Vec<_>>(),
    });
    if let Some(k) = kept {
        json["kept"] = to_json(&k);
    }
    Ok(Outcome { json, text, ok: true })
}

fn fmt_ball(b: &Ball) -> String {
    format!("{} + p^{} Z_p", b.center, b.min_ord)
}

fn measure_cmd(common: &Common, input: &Input, upto: u32) -> Result<Outcome, Error> {
    let (p, domain) = setup(common)?;
    if let Some(phi) = &input.formula {
        let set = decompose_set(&parse_formula(phi)?, p, &domain)?;
        let mu = measure(&set.as_set())?;
        return Ok(Outcome {
            json: json!({ "prime": p.get(), "input": input_json(input), "measure": mu.to_string() }),
            text: format!("measure: {mu}\n"),
            ok: true,
        });
    }
    let f = parse_poly(input.poly.as_deref().unwrap_or_default())?;
    let d = prepare(&f, p, &domain)?;
    let mut rows = Vec::new();
    let mut text = String::new();
    for m in 0..=upto as i64 {
        let mu = measure_of_order(&d, &f, m)?;
        text.push_str(&format!("ord f = {m}: {mu}\n"));
        rows.push(json!({ "m": m, "measure": mu.to_string() }));
    }
    let total = measure(&d)?;
    text.push_str(&format!("domain: {total}\n"));
    Ok(Outcome {
        json: json!({ "prime": p.get(), "input": input_json(input), "domain_measure": total.to_string(), "orders": rows }),
        text,
        ok: true,
    })
}

fn zeta_cmd(common: &Common, poly: &str) -> Result<Outcome, Error> {
    let (p, domain) = setup(common)?;
    let f = parse_poly(poly)?;
    let z = igusa_zeta(&prepare(&f, p, &domain)?, &f, p)?;
    let z_json = to_json(&z);
    let text = format!("num: {}\nden: {}\nt = p^-s\n", z_json["num"], z_json["den"]);
    Ok(Outcome { json: json!({ "prime": p.get(), "poly": poly, "zeta": z_json }), text, ok: true })
}

fn oracle_cmd(common: &Common, poly: &str, k: u32, samples: usize, seed: u64) -> Result<Outcome, Error> {
    let (p, _) = setup(common)?;
    let f = parse_poly(poly)?;
    let d = prepare(&f, p, &Ball::zp())?;
    let counts = RootCounts::compute(&f, p, k + 1)?;
    let mut rows = Vec::new();
    let mut text = String::from("m  cells  oracle\n");
    let mut table_ok = true;
    for m in 0..=k {
        let ours = measure_of_order(&d, &f, m as i64)?;
        let theirs = counts.measure_of_order(m);
        table_ok &= ours == theirs;
        text.push_str(&format!("{m}  {ours}  {theirs}\n"));
        rows.push(json!({ "m": m, "cells": ours.to_string(), "oracle": theirs.to_string(), "agree": ours == theirs }));
    }
    let partition = verify_partition(&d, k);
    let laws = verify_laws_seeded(&d, &f, samples, seed);
    let agree = table_ok && partition.ok() && laws.ok();
    text.push_str(&format!(
        "partition mod p^{k}: {} ({} undecided classes)\nlaws: {} of {} samples failed\nagree: {agree}\n",
        if partition.ok() { "ok" } else { "violated" },
        partition.undecided,
        laws.failures.len(),
        laws.checked,
    ));
    let json = json!({
        "prime": p.get(),
        "poly": poly,
        "k": k,
        "table": rows,
        "partition": to_json(&partition),
        "laws": { "seed": laws.seed, "checked": laws.checked, "failures": to_json(&laws.failures) },
        "agree": agree,
    });
    Ok(Outcome { json, text, ok: agree })
}

fn chi_cmd(common: &Common, input: &Input) -> Result<Outcome, Error> {
    let (p, domain) = setup(common)?;
    let d = match &input.formula {
        Some(phi) => decompose_set(&parse_formula(phi)?, p, &domain)?.as_set(),
        None => prepare(&parse_poly(input.poly.as_deref().unwrap_or_default())?, p, &domain)?,
    };
    let c = chi(&d);
    Ok(Outcome {
        json: json!({ "prime": p.get(), "input": input_json(input), "chi": to_json(&c) }),
        text: format!("{c}\n"),
        ok: true,
    })
}

fn cv_cmd(common: &Common, left: &str, right: &str) -> Result<Outcome, Error> {
    let (p, domain) = setup(common)?;
    let a = decompose_set(&parse_formula(left)?, p, &domain)?.as_set();
    let b = decompose_set(&parse_formula(right)?, p, &domain)?.as_set();
    let base = json!({ "prime": p.get(), "left": left, "right": right });
    match cv_check_report(&a, &b) {
        Ok(r) => {
            let text = format!("left: {}\nright: {}\nrefined: {}\nagree: {}\n", r.chi_left, r.chi_right, r.chi_refined, r.agree);
            let mut json = base;
            json["report"] = to_json(&r);
            json["agree"] = json!(r.agree);
            Ok(Outcome { json, text, ok: r.agree })
        }
        Err(e @ (Error::DifferentSets | Error::Overlap)) => {
            let mut json = base;
            json["agree"] = json!(false);
            json["reason"] = json!(e.to_string());
            Ok(Outcome { json, text: format!("agree: false ({e})\n"), ok: false })
        }
        Err(e) => Err(e),
    }
}

fn dim_cmd(common: &Common, formulas: &[String], op: DimOp) -> Result<Outcome, Error> {
    let (p, domain) = setup(common)?;
    let mut sets = Vec::new();
    for phi in formulas {
        sets.push(decompose_set(&parse_formula(phi)?, p, &domain)?.as_set());
    }
    let each: Vec<Dim> = sets.iter().map(dim_of).collect();
    let each_json: Vec<Value> = each.iter().map(to_json).collect();
    let base = json!({ "prime": p.get(), "formulas": formulas, "each": each_json });
    let each_text: Vec<String> = each.iter().map(|d| d.to_string()).collect();
    match op {
        DimOp::Each => Ok(Outcome { json: base, text: format!("{}\n", each_text.join("\n")), ok: true }),
        DimOp::Product => {
            let summed = each.iter().copied().fold(Dim::Fin(0), dim_product);
            let refs: Vec<&Decomposition> = sets.iter().collect();
            let direct = dim_of_products(&product_cells(&refs)?);
            let mut json = base;
            json["product"] = to_json(&direct);
            json["consistent"] = json!(summed == direct);
            Ok(Outcome { json, text: format!("product: {direct}\nsum of factors: {summed}\n"), ok: summed == direct })
        }
        DimOp::Union => match dim_union(&sets) {
            Ok(u) => {
                let mut json = base;
                json["union"] = to_json(&u);
                Ok(Outcome { json, text: format!("union: {u}\n"), ok: true })
            }
            Err(Error::Overlap) => {
                let mut json = base;
                json["union"] = Value::Null;
                json["reason"] = json!(Error::Overlap.to_string());
                Ok(Outcome { json, text: "union: sets overlap\n".into(), ok: false })
            }
            Err(e) => Err(e),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (as_json, outcome) = match &cli.command {
        Command::Decompose { common, input } => (common.json, decompose_cmd(common, input)),
        Command::Measure { common, input, upto } => (common.json, measure_cmd(common, input, *upto)),
        Command::Zeta { common, poly } => (common.json, zeta_cmd(common, poly)),
        Command::OracleCompare { common, poly, k, samples, seed } => {
            (common.json, oracle_cmd(common, poly, *k, *samples, *seed))
        }
        Command::Chi { common, input } => (common.json, chi_cmd(common, input)),
        Command::CvCheck { common, left, right } => (common.json, cv_cmd(common, left, right)),
        Command::Dim { common, formulas, op } => (common.json, dim_cmd(common, formulas, *op)),
    };
    match outcome {
        Ok(o) => {
            if as_json {
                let mut json = json!({ "schema": SCHEMA });
                json.as_object_mut().expect("object").extend(o.json.as_object().cloned().unwrap_or_default());
                println!("{}", serde_json::to_string_pretty(&json).expect("serializable"));
            } else {
                print!("{}", o.text);
            }
            ExitCode::from(if o.ok { 0 } else { 1 })
        }
        Err(e) => {
            let code = exit_code(&e);
            if as_json {
                let json = json!({ "schema": SCHEMA, "error": { "code": code, "message": e.to_string() } });
                println!("{}", serde_json::to_string_pretty(&json).expect("serializable"));
            }
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
