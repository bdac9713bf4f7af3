use std::path::Path;

use incompat_core::classify::{
    classify_cg_with, classify_dcm, CgOptions, DcmScanOptions, LayerEntry, PartitionFamily,
    WeightSearch,
};
use incompat_core::jm::{solve_jm_with, JmOptions};
use incompat_core::measurement::{
    add_white_noise, make_cglmp, make_noisy_mub, make_noisy_pauli, make_trine_xyz, pad_assemblage,
    Assemblage, BlochMeasurement, MubBasis, Party,
};
use incompat_core::robustness::{
    bisect_threshold, table1_with, table2_with, BisectOptions, NoiseFamily, RowStatus,
};
use incompat_core::tol::Tolerances;
use incompat_core::witness::{
    best_ch_violation, chsh_max_qubit, club_pair, rac_success_pair, table3, trine_dcm_scan_with,
    witness_full_cg_rac, witness_full_dcm_rac, BellScenario,
};
use serde_json::json;

use crate::args::{BasisArg, BisectArgs, CgFamilyArg, ClassifyOp, Cli, Command, ExportCmd, WitnessCmd};
use crate::error::{CliError, Result};
use crate::povm_file::{parse_povm_file, PovmFile};
use crate::report::{Cell, Report};
use crate::selfcheck;

/// Environment overrides for the runtime tolerances.
pub const ENV_PSD_TOL: &str = "INCOMPAT_PSD_TOL";
pub const ENV_COMPLETENESS_TOL: &str = "INCOMPAT_COMPLETENESS_TOL";
pub const ENV_DECIDE_EPS: &str = "INCOMPAT_DECIDE_EPS";

pub fn tolerances_from_env() -> Result<Tolerances> {
    let mut t = Tolerances::default();
    for (name, slot) in [
        (ENV_PSD_TOL, &mut t.psd),
        (ENV_COMPLETENESS_TOL, &mut t.completeness),
        (ENV_DECIDE_EPS, &mut t.decide_eps),
    ] {
        if let Ok(v) = std::env::var(name) {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{name}={v} is not a number")))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
            }
            *slot = x;
        }
    }
    Ok(t)
}

struct Ctx {
    tol: Tolerances,
    jm: JmOptions,
}

impl Ctx {
    fn load(&self, file: &Path) -> Result<Assemblage> {
        parse_povm_file(file, &self.tol)
    }
}

fn bisect_opts(b: &BisectArgs) -> BisectOptions {
    BisectOptions {
        tol: b.tol,
        monotonicity_guard: !b.no_guard,
    }
}

fn cg_family(f: CgFamilyArg) -> PartitionFamily {
    match f {
        CgFamilyArg::All => PartitionFamily::All,
        CgFamilyArg::SingletonsPlusRest => PartitionFamily::SingletonsPlusRest,
    }
}

fn basis(b: BasisArg) -> MubBasis {
    match b {
        BasisArg::Computational => MubBasis::Computational,
        BasisArg::Fourier => MubBasis::Fourier,
        BasisArg::Third => MubBasis::Third,
    }
}

/// Runs a parsed command and returns its report.
pub fn execute(cli: &Cli) -> Result<Report> {
    let tol = tolerances_from_env()?;
    let ctx = Ctx {
        tol,
        jm: JmOptions {
            tol,
            ..Default::default()
        },
    };
    match &cli.command {
        Command::Validate { file } => validate(&ctx, file),
        Command::Jm {
            file,
            nu,
            bisect,
            bisection,
        } => jm(&ctx, file, *nu, *bisect, bisection),
        Command::Classify { op } => classify(&ctx, op),
        Command::Robustness {
            table,
            bisection,
            cg_family: fam,
            grid,
        } => robustness(&ctx, *table, bisection, *fam, *grid),
        Command::Witness { kind } => witness(&ctx, kind),
        Command::Export { family } => export(family),
        Command::Selfcheck { cases } => run_selfcheck(cli.seed, *cases),
    }
}

fn validate(ctx: &Ctx, file: &Path) -> Result<Report> {
    let a = ctx.load(file)?;
    let mut r = Report::new("validate", &["index", "label", "outcomes", "projective", "valid"]);
    for (x, p) in a.povms().iter().enumerate() {
        r.row(vec![x.into(), p.label().into(), p.num_outcomes().into(), p.is_projective().into(), true.into()]);
    }
    r.details(&json!({ "dim": a.dim(), "measurements": a.len(), "padded_outcomes": a.outcomes() }));
    Ok(r)
}

fn with_noise(a: &Assemblage, nu: f64) -> incompat_core::error::Result<Assemblage> {
    pad_assemblage(
        a.povms()
            .iter()
            .map(|p| add_white_noise(p, nu))
            .collect::<incompat_core::error::Result<Vec<_>>>()?,
    )
}

fn jm(ctx: &Ctx, file: &Path, nu: Option<f64>, bisect: bool, b: &BisectArgs) -> Result<Report> {
    let base = ctx.load(file)?;
    let a = match nu {
        Some(v) => with_noise(&base, v)?,
        None => base.clone(),
    };
    let res = solve_jm_with(&a, &ctx.jm)?;
    let mut r = Report::new(
        "jm",
        &["mu_star", "verdict", "certified", "marginal_residual", "strategies", "iterations"],
    );
    r.row(vec![
        res.mu_star.into(),
        res.verdict.as_str().into(),
        res.certified.into(),
        res.marginal_residual.into(),
        res.strategies.len().into(),
        res.iterations.into(),
    ]);
    let mut details = json!({ "parent": res.parent, "strategies": res.strategies });
    if bisect {
        let src = base.clone();
        let fam = NoiseFamily::new(file.display().to_string(), move |v| with_noise(&src, v));
        let jm = ctx.jm;
        let t = bisect_threshold(
            &fam,
            "incompatible",
            |x| Ok(solve_jm_with(x, &jm)?.verdict == incompat_core::jm::JmVerdict::Incompatible),
            &bisect_opts(b),
        )?;
        r.note(format!("white-noise threshold nu* = {}", crate::report::format_num(t.nu_star)));
        details["threshold"] = serde_json::to_value(&t).expect("serializable");
    }
    r.details(&details);
    Ok(r)
}

fn layer_row(r: &mut Report, e: &LayerEntry) {
    r.row(vec![
        e.k.into(),
        e.verdict.as_str().into(),
        e.best_mu.into(),
        e.witness.as_ref().map(|p| p.to_string()).into(),
        e.witness_mu.into(),
        e.borderline_cases.len().into(),
        e.solves.into(),
    ]);
}

const LAYER_COLUMNS: [&str; 7] = ["k", "verdict", "best_mu", "witness_plan", "witness_mu", "borderline", "solves"];

fn classify(ctx: &Ctx, op: &ClassifyOp) -> Result<Report> {
    match op {
        ClassifyOp::Cg {
            file,
            k,
            exhaustive,
            cg_family: fam,
        } => {
            let a = ctx.load(file)?;
            let opts = CgOptions {
                exhaustive: *exhaustive,
                family: cg_family(*fam),
                jm: ctx.jm,
            };
            let ks: Vec<usize> = match k {
                Some(k) => vec![*k],
                None => (2..=a.outcomes()).collect(),
            };
            let mut r = Report::new("classify cg", &LAYER_COLUMNS);
            let mut entries = Vec::new();
            for k in ks {
                let e = classify_cg_with(&a, k, &opts)?;
                layer_row(&mut r, &e);
                entries.push(e);
            }
            r.details(&entries);
            Ok(r)
        }
        ClassifyOp::Dcm { file, k, no_perms, grid } => {
            let a = ctx.load(file)?;
            let opts = DcmScanOptions {
                include_permutations: !no_perms,
                search: if grid.is_some() { WeightSearch::Grid } else { WeightSearch::Joint },
                grid_points: grid.unwrap_or(101),
                jm: ctx.jm,
                ..Default::default()
            };
            let ks: Vec<usize> = match k {
                Some(k) => vec![*k],
                None => (2..=a.len()).collect(),
            };
            let mut r = Report::new("classify dcm", &LAYER_COLUMNS);
            let mut entries = Vec::new();
            for k in ks {
                let e = classify_dcm(&a, k, &opts)?;
                layer_row(&mut r, &e);
                entries.push(e);
            }
            r.details(&entries);
            Ok(r)
        }
    }
}

fn robustness(
    ctx: &Ctx,
    table: u8,
    b: &BisectArgs,
    fam: CgFamilyArg,
    grid: Option<usize>,
) -> Result<Report> {
    let opts = bisect_opts(b);
    if table == 1 {
        let cg = CgOptions {
            family: cg_family(fam),
            jm: ctx.jm,
            ..Default::default()
        };
        let rows = table1_with(&cg, &opts)?;
        let mut r = Report::new(
            "robustness --table 1",
            &["d", "k", "nu_star", "bracket_lo", "bracket_hi", "evaluations"],
        );
        for row in &rows {
            match &row.status {
                RowStatus::NotApplicable => {}
                RowStatus::Threshold(t) => r.row(vec![
                    row.d.into(),
                    row.k.into(),
                    t.nu_star.into(),
                    t.bracket.0.into(),
                    t.bracket.1.into(),
                    t.evaluations.into(),
                ]),
                RowStatus::NeverIncompatible(msg) => {
                    r.row(vec![row.d.into(), row.k.into(), Cell::Empty, Cell::Empty, Cell::Empty, 2usize.into()]);
                    r.note(format!("d={} k={}: still compatible at nu = 1 ({msg})", row.d, row.k));
                }
            }
        }
        r.details(&rows);
        return Ok(r);
    }
    let dcm = DcmScanOptions {
        search: if grid.is_some() { WeightSearch::Grid } else { WeightSearch::Joint },
        grid_points: grid.unwrap_or(101),
        jm: ctx.jm,
        ..Default::default()
    };
    let rows = table2_with(&dcm, &opts)?;
    let mut r = Report::new(
        "robustness --table 2",
        &[
            "d",
            "k",
            "nu_star_perms",
            "bracket_lo_perms",
            "bracket_hi_perms",
            "nu_star_no_perms",
            "bracket_lo_no_perms",
            "bracket_hi_no_perms",
        ],
    );
    for row in &rows {
        let (w, o) = (&row.with_permutations, &row.without_permutations);
        r.row(vec![
            row.d.into(),
            row.k.into(),
            w.nu_star.into(),
            w.bracket.0.into(),
            w.bracket.1.into(),
            o.nu_star.into(),
            o.bracket.0.into(),
            o.bracket.1.into(),
        ]);
    }
    r.details(&rows);
    Ok(r)
}

fn parse_pair_spec(s: &str) -> Result<(usize, usize)> {
    let digits: Vec<usize> = s
        .trim()
        .chars()
        .map(|ch| ch.to_digit(10).map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Usage(format!("clubbing '{s}' must be two outcome digits")))?;
    match digits[..] {
        [a, b] if a < 3 && b < 3 && a != b => Ok((a.min(b), a.max(b))),
        _ => Err(CliError::Usage(format!("clubbing '{s}' must name two distinct outcomes in 0..3"))),
    }
}

const BELL_COLUMNS: [&str; 8] = [
    "a1",
    "a2",
    "s_theory",
    "delta_s_theory",
    "s_experiment",
    "delta_s_experiment",
    "state_optimized_s",
    "witnessed",
];

fn pair_label(p: (usize, usize)) -> String {
    format!("{}{}", p.0, p.1)
}

fn witness(ctx: &Ctx, kind: &WitnessCmd) -> Result<Report> {
    match kind {
        WitnessCmd::Rac { file, all_cg, pair } => {
            let a = ctx.load(file)?;
            let [x, y] = pair[..] else {
                return Err(CliError::Usage("--pair takes two indices".into()));
            };
            if x >= a.len() || y >= a.len() {
                return Err(CliError::Usage(format!("--pair {x},{y} out of range for {} measurements", a.len())));
            }
            if *all_cg {
                let rep = witness_full_cg_rac(a.povm(x), a.povm(y))?;
                let mut r = Report::new("witness rac --all-cg", &["i", "j", "overlap", "success", "bound", "advantage"]);
                for ch in &rep.choices {
                    r.row(vec![ch.i.into(), ch.j.into(), ch.overlap.into(), ch.success.into(), rep.bound.into(), ch.advantage.into()]);
                }
                r.note(format!("witnessed fully incompatible: {}", rep.witnessed));
                r.note(format!("overlap window 0 < c < 4/5 for all pairs: {}", rep.analytic));
                r.details(&rep);
                Ok(r)
            } else {
                let res = rac_success_pair(a.povm(x), a.povm(y))?;
                let mut r = Report::new("witness rac", &["x", "y", "success", "bound", "advantage"]);
                r.row(vec![x.into(), y.into(), res.success.into(), res.bound.into(), res.advantage.into()]);
                r.details(&res);
                Ok(r)
            }
        }
        WitnessCmd::DcmRac { file, grid } => {
            let a = ctx.load(file)?;
            let rep = witness_full_dcm_rac(&a, *grid)?;
            let mut r = Report::new(
                "witness dcm-rac",
                &["witnessed", "min_success", "bound", "alone", "pairing", "p", "closed_form_deviation"],
            );
            let m = rep.minimum;
            r.row(vec![
                rep.witnessed.into(),
                m.success.into(),
                rep.bound.into(),
                m.alone.into(),
                m.pairing.into(),
                m.p.into(),
                rep.closed_form_deviation.into(),
            ]);
            r.details(&rep);
            Ok(r)
        }
        WitnessCmd::Trine { grid } => {
            let rep = trine_dcm_scan_with(*grid)?;
            let mut r = Report::new("witness trine", &["all_above", "min_success", "bound", "alone", "pairing", "p", "evaluations"]);
            let m = rep.minimum;
            r.row(vec![
                rep.all_above.into(),
                m.success.into(),
                rep.bound.into(),
                m.alone.into(),
                m.pairing.into(),
                m.p.into(),
                rep.evaluations.into(),
            ]);
            r.details(&rep);
            Ok(r)
        }
        WitnessCmd::Bell { table3: _, row } => {
            let mut r = Report::new("witness bell", &BELL_COLUMNS);
            let rows = match row {
                None => table3()?,
                Some(spec) => {
                    let parts: Vec<&str> = spec.split(',').collect();
                    let [s1, s2] = parts[..] else {
                        return Err(CliError::Usage(format!("--row '{spec}' must be A1SPEC,A2SPEC")));
                    };
                    let (a1, a2) = (parse_pair_spec(s1)?, parse_pair_spec(s2)?);
                    let cg = [club_pair(a1)?, club_pair(a2)?];
                    let theory = best_ch_violation(&BellScenario::cglmp()?, &cg)?;
                    let experiment = best_ch_violation(&BellScenario::experiment()?, &cg)?;
                    vec![incompat_core::witness::Table3Row {
                        a1,
                        a2,
                        witnessed: theory.delta_s > 0.0,
                        theory,
                        experiment,
                    }]
                }
            };
            for t in &rows {
                r.row(vec![
                    pair_label(t.a1).into(),
                    pair_label(t.a2).into(),
                    t.theory.s.into(),
                    t.theory.delta_s.into(),
                    t.experiment.s.into(),
                    t.experiment.delta_s.into(),
                    t.theory.state_optimized_s.into(),
                    t.witnessed.into(),
                ]);
            }
            r.details(&rows);
            Ok(r)
        }
        WitnessCmd::Chsh { file } => {
            let a = ctx.load(file)?;
            if a.len() < 2 {
                return Err(CliError::Usage("two measurements required".into()));
            }
            let b0 = BlochMeasurement::from_povm(a.povm(0))?;
            let b1 = BlochMeasurement::from_povm(a.povm(1))?;
            let s = chsh_max_qubit(&b0, &b1);
            let mut r = Report::new("witness chsh", &["chsh_max", "local_bound", "violation"]);
            r.row(vec![s.into(), 2.0.into(), (s > 2.0).into()]);
            Ok(r)
        }
    }
}

fn export(family: &ExportCmd) -> Result<Report> {
    let a = match family {
        ExportCmd::Mub { d, bases, nu } => {
            let b: Vec<MubBasis> = bases.iter().map(|&x| basis(x)).collect();
            make_noisy_mub(*d, &b, *nu)?
        }
        ExportCmd::Pauli { nu } => {
            let v = match nu[..] {
                [x] => [x; 3],
                [x, y, z] => [x, y, z],
                _ => return Err(CliError::Usage("--nu takes one or three values".into())),
            };
            make_noisy_pauli(v)?
        }
        ExportCmd::Trine => make_trine_xyz()?,
        ExportCmd::Cglmp => pad_assemblage(vec![
            make_cglmp(Party::Alice, 1)?,
            make_cglmp(Party::Alice, 2)?,
            make_cglmp(Party::Bob, 1)?,
            make_cglmp(Party::Bob, 2)?,
        ])?,
    };
    let mut r = Report::new("export", &[]);
    r.raw = Some(PovmFile::from_assemblage(&a).to_json());
    Ok(r)
}

fn run_selfcheck(seed: u64, cases: usize) -> Result<Report> {
    let s = selfcheck::run_all(seed, cases)?;
    let mut r = Report::new("selfcheck", &["check", "cases", "agreements", "disagreements", "skipped"]);
    for (name, t) in &s.checks {
        r.row(vec![name.as_str().into(), t.cases.into(), t.agreements.into(), t.disagreements.into(), t.skipped.into()]);
    }
    r.note(format!("seed {seed}"));
    r.details(&s);
    Ok(r)
}
