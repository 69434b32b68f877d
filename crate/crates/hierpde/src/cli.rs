//! Command-line surface. Subcommands mirror the pipeline: `generate`,
//! `check`, `numcheck`, `variety`, `bound`, `reverse`, `compose`, `tenn`.
//!
//! Exit codes: `check`/`numcheck` return 0 (pass/consistent), 1
//! (fail/violated) or 2 (inconclusive); other subcommands return 0 on
//! success. Usage errors exit 64, input/parse errors 65, internal invariant
//! breaches 70.

use crate::arch::{parse_arch, tenn, tree_to_json, Arch, Regime};
use crate::bounds::{order_bound, order_bound_ode};
use crate::checker::{check, reverse_weights};
use crate::constraints::{preset, tree_activation, tree_smooth, ConstraintSet, Preset};
use crate::diffpoly::DiffPoly;
use crate::expr::poly::Rat;
use crate::expr::{parse_expr, ParseMode, ParsedExpr};
use crate::numcheck::{num_check, sample_points, FDConfig};
use crate::oracle::{compose_arch, parse_assignment};
use crate::varieties::variety_equations;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::fs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Parser, Debug)]
#[command(
    name = "hierpde",
    about = "Generate and verify the derivative constraints of hierarchically composed functions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct ArchOrPreset {
    /// Architecture JSON file.
    #[arg(long)]
    arch: Option<String>,
    /// Named constraint family, e.g. `symmetric(4)`, `toy2`, `wave2`.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Emit the constraint set of an architecture or preset as JSON.
    Generate {
        #[command(flatten)]
        source: ArchOrPreset,
        /// `smooth` (lower-arity nodes) or `activation` (weighted sums).
        #[arg(long, default_value = "smooth")]
        regime: Regime,
        /// Render with subscript derivative names instead of JSON.
        #[arg(long)]
        pretty: bool,
    },
    /// Exact verification of a polynomial against generated constraints.
    Check {
        #[command(flatten)]
        source: ArchOrPreset,
        #[arg(long, default_value = "smooth")]
        regime: Regime,
        /// Candidate function (exact polynomial expression).
        #[arg(long)]
        function: String,
        /// Optional rational point "p1,p2,..." for pointwise clause checks.
        #[arg(long)]
        at: Option<String>,
    },
    /// Finite-difference verification of a closed-form smooth function.
    Numcheck {
        /// Candidate function (may use sin, cos, exp, tanh, log).
        #[arg(long)]
        function: String,
        #[command(flatten)]
        source: ArchOrPreset,
        #[arg(long, default_value = "smooth")]
        regime: Regime,
        /// Constraint JSON file (as produced by `generate`).
        #[arg(long)]
        constraints: Option<String>,
        /// Points file: one whitespace-separated float vector per line.
        #[arg(long)]
        points: Option<String>,
        /// Sample this many random points instead.
        #[arg(long)]
        random: Option<usize>,
        /// Random seed (default: the HIERPDE_SEED environment variable).
        #[arg(long)]
        seed: Option<u64>,
        /// Sampling box bounds, two values: lo hi.
        #[arg(long, num_args = 2, default_values_t = [0.25f64, 1.25f64])]
        r#box: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = false)]
        no_richardson: bool,
        #[arg(long, default_value_t = 1e-4)]
        rel_tol: f64,
        #[arg(long, default_value_t = 1e-9)]
        abs_tol: f64,
    },
    /// Coefficient equations for degree-bounded polynomial candidates.
    Variety {
        #[command(flatten)]
        source: ArchOrPreset,
        #[arg(long, default_value = "smooth")]
        regime: Regime,
        #[arg(long)]
        degree: u32,
    },
    /// Derivative-order bound and guaranteed relation count.
    Bound {
        #[arg(long)]
        arch: String,
        #[arg(long, default_value = "smooth")]
        regime: Regime,
        /// With k: use the sharper budget for activations satisfying an
        /// autonomous ODE of order at most k.
        #[arg(long)]
        kmax: Option<u64>,
    },
    /// Recover the constant first-partial ratios of sibling leaves.
    Reverse {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        function: String,
    },
    /// Compose an architecture with concrete node functions.
    Compose {
        #[arg(long)]
        arch: String,
        /// Assignment JSON file.
        #[arg(long)]
        assign: String,
    },
    /// Expand a network into its tree with repeated inputs.
    Tenn {
        #[arg(long)]
        arch: String,
    },
}

pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            eprint!("{e}");
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_DATA
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Cmd::Generate {
            source,
            regime,
            pretty,
        } => {
            let cs = load_constraints(&source, regime)?;
            if pretty {
                print!("{}", render_pretty(&cs));
            } else {
                println!("{}", cs.to_json());
            }
            Ok(EXIT_OK)
        }
        Cmd::Check {
            source,
            regime,
            function,
            at,
        } => {
            let cs = load_constraints(&source, regime)?;
            let f = match parse_expr(&function, cs.nvars, ParseMode::Exact)
                .map_err(|e| e.to_string())?
            {
                ParsedExpr::Poly(p) => p,
                _ => unreachable!(),
            };
            let point = at.map(|s| parse_point(&s)).transpose()?;
            let report =
                check(&f, &cs, point.as_deref()).map_err(|e| e.to_string())?;
            println!("{}", report.to_json());
            Ok(report.exit_code())
        }
        Cmd::Numcheck {
            function,
            source,
            regime,
            constraints,
            points,
            random,
            seed,
            r#box,
            step,
            no_richardson,
            rel_tol,
            abs_tol,
        } => {
            let cs = if let Some(path) = constraints {
                let doc = fs::read_to_string(&path)
                    .map_err(|e| format!("cannot read {path}: {e}"))?;
                ConstraintSet::from_json(&doc).map_err(|e| e.to_string())?
            } else {
                load_constraints(&source, regime)?
            };
            let f = match parse_expr(&function, cs.nvars, ParseMode::Numeric)
                .map_err(|e| e.to_string())?
            {
                ParsedExpr::Smooth(e) => e,
                _ => unreachable!(),
            };
            let pts = if let Some(path) = points {
                parse_points_file(&path, cs.nvars)?
            } else {
                let k = random.ok_or("provide --points FILE or --random K")?;
                let seed = seed.or_else(env_seed).unwrap_or(0);
                sample_points(k, seed, r#box[0], r#box[1], cs.nvars)
            };
            let cfg = FDConfig {
                h: step,
                richardson: !no_richardson,
                rel_tol,
                abs_tol,
                points: pts,
                seed: seed.or_else(env_seed).unwrap_or(0),
                ..FDConfig::default()
            };
            let report = num_check(&f, &cs, &cfg).map_err(|e| e.to_string())?;
            println!("{}", report.to_json());
            Ok(report.exit_code())
        }
        Cmd::Variety {
            source,
            regime,
            degree,
        } => {
            let cs = load_constraints(&source, regime)?;
            let sys = variety_equations(&cs, degree);
            print!("{}", sys.to_text());
            Ok(EXIT_OK)
        }
        Cmd::Bound { arch, regime, kmax } => {
            let a = load_arch(&arch)?;
            let report = match kmax {
                Some(k) => order_bound_ode(&a, k).map_err(|e| e.to_string())?,
                None => order_bound(&a, regime).map_err(|e| e.to_string())?,
            };
            println!(
                "{}",
                serde_json::to_value(&report).expect("bound report serialization")
            );
            Ok(EXIT_OK)
        }
        Cmd::Reverse { arch, function } => {
            let a = load_arch(&arch)?;
            let t = match a {
                Arch::Tree(t) => t,
                Arch::Network(_) => {
                    return Err("ratio recovery expects a tree architecture".to_string())
                }
            };
            let f = match parse_expr(&function, t.nvars, ParseMode::Exact)
                .map_err(|e| e.to_string())?
            {
                ParsedExpr::Poly(p) => p,
                _ => unreachable!(),
            };
            let ratios = reverse_weights(&f, &t).map_err(|e| e.to_string())?;
            println!("{}", ratios.to_json());
            Ok(EXIT_OK)
        }
        Cmd::Compose { arch, assign } => {
            let a = load_arch(&arch)?;
            let doc = fs::read_to_string(&assign)
                .map_err(|e| format!("cannot read {assign}: {e}"))?;
            let asg = parse_assignment(&doc).map_err(|e| e.to_string())?;
            let f = compose_arch(&a, &asg).map_err(|e| e.to_string())?;
            println!("{f}");
            Ok(EXIT_OK)
        }
        Cmd::Tenn { arch } => {
            let a = load_arch(&arch)?;
            let t = match a {
                Arch::Tree(t) => t,
                Arch::Network(net) => tenn(&net),
            };
            println!("{}", tree_to_json(&t));
            Ok(EXIT_OK)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("HIERPDE_SEED").ok()?.parse().ok()
}

fn load_arch(path: &str) -> Result<Arch, String> {
    let doc = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    parse_arch(&doc).map_err(|e| e.to_string())
}

fn load_constraints(source: &ArchOrPreset, regime: Regime) -> Result<ConstraintSet, String> {
    match (&source.arch, &source.preset) {
        (Some(path), None) => {
            let a = load_arch(path)?;
            let t = match a {
                Arch::Tree(t) => t,
                Arch::Network(_) => {
                    return Err(
                        "tree generators need a tree; expand networks with `tenn` first, or \
                         use a --preset for the supported repeated-input families"
                            .to_string(),
                    )
                }
            };
            match regime {
                Regime::Smooth => tree_smooth(&t).map_err(|e| e.to_string()),
                Regime::Activation => tree_activation(&t).map_err(|e| e.to_string()),
            }
        }
        (None, Some(name)) => {
            let p: Preset = name.parse().map_err(|e: crate::constraints::ConstraintError| e.to_string())?;
            preset(&p).map_err(|e| e.to_string())
        }
        _ => Err("provide exactly one of --arch or --preset".to_string()),
    }
}

fn parse_point(text: &str) -> Result<Vec<Rat>, String> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            match parse_expr(part, 0, ParseMode::Exact) {
                Ok(ParsedExpr::Poly(p)) => {
                    if p.total_degree() == 0 {
                        Ok(p.eval(&[]))
                    } else {
                        Err(format!("`{part}` is not a rational constant"))
                    }
                }
                _ => Err(format!("`{part}` is not a rational constant")),
            }
        })
        .collect()
}

fn parse_points_file(path: &str, nvars: usize) -> Result<Vec<Vec<f64>>, String> {
    let doc = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let mut out = Vec::new();
    for (lineno, line) in doc.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if vals.len() != nvars {
            return Err(format!(
                "line {}: expected {nvars} coordinates, found {}",
                lineno + 1,
                vals.len()
            ));
        }
        out.push(vals);
    }
    if out.is_empty() {
        return Err("points file contains no points".to_string());
    }
    Ok(out)
}

/// Subscript rendering, e.g. `F_xy*F_x - F_xx*F_y`.
fn render_pretty(cs: &ConstraintSet) -> String {
    let names: Vec<String> = match &cs.var_names {
        Some(n) => n.clone(),
        None => (0..cs.nvars)
            .map(|v| crate::expr::poly::var_name(cs.nvars, v))
            .collect(),
    };
    let mut out = String::new();
    for c in &cs.equalities {
        out.push_str(&format!(
            "eq   [{}]: {} = 0\n",
            c.provenance,
            pretty_expr(&c.expr, &names)
        ));
    }
    for c in &cs.inequalities {
        out.push_str(&format!(
            "gt0  [{}]: {} > 0\n",
            c.provenance,
            pretty_expr(&c.expr, &names)
        ));
    }
    for c in &cs.nonvanishing {
        let atoms: Vec<String> = c.atoms.iter().map(|a| pretty_diffpoly(a, &names)).collect();
        out.push_str(&format!(
            "nz   [{}]: {} != 0\n",
            c.provenance,
            atoms.join("  or  ")
        ));
    }
    out
}

fn pretty_expr(expr: &crate::constraints::DiffExpr, names: &[String]) -> String {
    use num_traits::{One, Signed};
    let mut out = String::new();
    for (idx, p) in expr.products.iter().enumerate() {
        let neg = p.coef.is_negative();
        let mag = p.coef.abs();
        if idx == 0 {
            if neg {
                out.push('-');
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mut parts = Vec::new();
        if !mag.is_one() || p.factors.is_empty() {
            parts.push(crate::expr::poly::format_rat(&mag));
        }
        for f in &p.factors {
            let inner = pretty_diffpoly(&f.resolved(), names);
            if f.base.num_terms() == 1 && f.deriv.is_unit() {
                parts.push(inner);
            } else {
                parts.push(format!("({inner})"));
            }
        }
        out.push_str(&parts.join("*"));
    }
    out
}

fn pretty_diffpoly(dp: &DiffPoly, names: &[String]) -> String {
    use num_traits::{One, Signed};
    if dp.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    let mut first = true;
    for (m, c) in dp.terms.iter().rev() {
        let neg = c.is_negative();
        let mag = c.abs();
        if first {
            if neg {
                out.push('-');
            }
            first = false;
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mut parts = Vec::new();
        if !mag.is_one() || m.is_unit() {
            parts.push(crate::expr::poly::format_rat(&mag));
        }
        for (s, e) in m.0.iter().rev() {
            let mut sub = String::new();
            for (v, &k) in s.0.iter().enumerate() {
                for _ in 0..k {
                    sub.push_str(&names[v]);
                }
            }
            let body = if sub.is_empty() {
                "F".to_string()
            } else {
                format!("F_{sub}")
            };
            if *e == 1 {
                parts.push(body);
            } else {
                parts.push(format!("{body}^{e}"));
            }
        }
        out.push_str(&parts.join("*"));
    }
    out
}
