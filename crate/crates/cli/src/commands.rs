use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use padic_salem::analysis::report::{
    counting_csv, decay_csv, decay_plot, energy_csv, regularity_csv, restriction_csv, summary,
};
use padic_salem::analysis::restriction::{default_test_level, DEFAULT_TEST_GRID};
use padic_salem::analysis::{
    counting_checks, decay_profile, fourier_dim_estimate, regularity_scan, restriction_ratio, riesz_energy,
    riesz_energy_fourier, scalar_endpoint, shell_points_sampled, verify_lemma_fm, verify_lemma_muk, ClauseReport,
    LemmaOptions, Sampling,
};
use padic_salem::construction::{
    build_psi0, ft_fm_closed, manifest_hash, BuildOptions, ConstructionParams, KaufmanMeasure,
};
use padic_salem::fourier::{
    brute_ft_oracle, coordinate_label, ft_table_with_budget, DualPoint, COMPLEX_TOLERANCE, DEFAULT_ORACLE_CAP,
    DEFAULT_TABLE_BUDGET,
};
use padic_salem::numeric::fmt_f64;
use padic_salem::stepfn::StepDensity;
use padic_salem::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Cli, Command, Format};

/// Toy schedules with every `M_j` up to this are also run through the
/// counting checks by `verify`.
const COUNTING_MAX_M: u32 = 3;

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// An exact clause or an oracle comparison failed.
    Failed,
}

struct Ctx<'a> {
    cli: &'a Cli,
    params: ConstructionParams,
    km: KaufmanMeasure,
    hash: String,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> std::path::PathBuf {
        self.cli.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        Ok(())
    }

    /// `<stem>.csv` or `<stem>.json` depending on `--format`.
    fn emit<T: Serialize>(&self, stem: &str, kind: &str, csv: impl FnOnce() -> String, report: &T) -> Result<()> {
        match self.cli.format {
            Format::Csv => self.write(&format!("{stem}.csv"), &csv()),
            Format::Json => {
                let doc = summary(kind, &self.hash, report)?;
                self.write(&format!("{stem}.json"), &serde_json::to_string_pretty(&doc)?)
            }
        }
    }

    fn levels(&self) -> Result<Vec<usize>> {
        let depth = self.km.depth();
        match self.cli.k {
            Some(k) if k == 0 || k > depth => Err(Error::InvalidParams(format!(
                "--k {k} is outside the built levels 1..={depth}"
            ))),
            Some(k) => Ok(vec![k]),
            None => Ok((1..=depth).collect()),
        }
    }

    fn sampling(&self) -> Sampling {
        Sampling {
            cap: self.cli.cap_shell,
            samples: self.cli.samples,
            seed: self.cli.seed,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let params = cli.params()?;
    let (km, truncation) = KaufmanMeasure::build_truncated(&params, BuildOptions::default())?;
    if let Some(e) = &truncation {
        eprintln!("warning: {e}");
    }
    let hashed = json!({
        "config": cli.echo(),
        "build": km.manifest(),
        "truncation": truncation.as_ref().map(|e| e.to_string()),
    });
    let hash = manifest_hash(&hashed);
    fs::create_dir_all(&cli.out)?;
    let mut doc = hashed;
    doc["hash"] = Value::from(hash.clone());
    fs::write(cli.out.join("manifest.json"), serde_json::to_string_pretty(&doc)?)?;
    let ctx = Ctx { cli, params, km, hash };
    println!("manifest {}", ctx.hash);
    match cli.command {
        Command::Build => build(&ctx),
        Command::Verify => verify(&ctx),
        Command::Decay => decay(&ctx),
        Command::Regularity => regularity(&ctx),
        Command::Energy => energy(&ctx),
        Command::Restrict => restrict(&ctx),
        Command::Dim => dim(&ctx),
        Command::OracleDiff => oracle_diff(&ctx),
        Command::Dump => dump(&ctx),
    }
}

fn write_density(ctx: &Ctx, name: &str, f: &StepDensity) -> Result<()> {
    let mut text = format!("# manifest {}\n", ctx.hash);
    text.push_str(&f.to_text());
    ctx.write(name, &text)
}

fn build(ctx: &Ctx) -> Result<Outcome> {
    let km = &ctx.km;
    write_density(ctx, "psi0.txt", km.psi0())?;
    for k in 1..=km.depth() {
        let (m, l) = (km.schedule().m_of(k), km.schedule().l_of(k));
        if let Some(f) = km.fm_density(k) {
            write_density(ctx, &format!("fm_{k}.txt"), f)?;
        }
        let rep = match km.mu(k) {
            Some(mu) => {
                write_density(ctx, &format!("mu_{k}.txt"), mu.density())?;
                format!("spatial, {} cells", mu.density().support_len())
            }
            None => "dual-only".to_string(),
        };
        println!("level {k}: M = {m}, L = {l}, |Q_M| = {}, {rep}", km.fm(k).primes.len());
    }
    Ok(Outcome::Ok)
}

fn clause_rows(out: &mut Vec<Vec<String>>, k: usize, object: &str, clauses: &[ClauseReport]) {
    for c in clauses {
        out.push(vec![
            k.to_string(),
            object.to_string(),
            c.name.clone(),
            c.hard.to_string(),
            c.method.clone(),
            c.points.to_string(),
            c.exhaustive.to_string(),
            c.failure_count.to_string(),
            c.failures.first().cloned().unwrap_or_default(),
        ]);
    }
}

fn csv_table(hash: &str, header: &str, rows: &[Vec<String>]) -> String {
    let mut out = format!("# manifest {hash}\n{header}\n");
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .map(|c| {
                if c.contains([',', '"', '\n']) {
                    format!("\"{}\"", c.replace('"', "\"\""))
                } else {
                    c.clone()
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn verify(ctx: &Ctx) -> Result<Outcome> {
    let km = &ctx.km;
    let opts = LemmaOptions {
        decay: ctx.sampling(),
        ..LemmaOptions::default()
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut ok = true;
    for k in ctx.levels()? {
        let fm = verify_lemma_fm(&ctx.params, km.schedule().m_of(k), &opts)?;
        let mu = verify_lemma_muk(km, k, &opts)?;
        clause_rows(&mut rows, k, "F_M", &fm.clauses);
        clause_rows(&mut rows, k, "mu_k", &mu.clauses);
        println!(
            "level {k}: F_M {} (constant {}), mu_k {} (constant {}, {})",
            if fm.passed() { "ok" } else { "FAILED" },
            fmt_f64(fm.constant),
            if mu.passed() { "ok" } else { "FAILED" },
            fmt_f64(mu.constant),
            mu.constant_label
        );
        ok &= fm.passed() && mu.passed();
        reports.push(json!({"k": k, "fm": fm, "mu": mu}));
    }
    let ms = km.schedule().ms();
    let counting = if ctx.params.shape.is_scalar() && ms.iter().all(|&m| m <= COUNTING_MAX_M) {
        let c = counting_checks(&ctx.params)?;
        println!("counting: {} violations", c.violations());
        ok &= c.violations() == 0;
        Some(c)
    } else {
        None
    };
    let header = "k,object,clause,hard,method,points,exhaustive,failure_count,first_failure";
    ctx.emit("lemmas", "lemmas", || csv_table(&ctx.hash, header, &rows), &reports)?;
    if let Some(c) = &counting {
        ctx.emit("counting", "counting", || counting_csv(c, &ctx.hash), c)?;
    }
    Ok(if ok { Outcome::Ok } else { Outcome::Failed })
}

fn decay(ctx: &Ctx) -> Result<Outcome> {
    for k in ctx.levels()? {
        let profile = decay_profile(&ctx.km, k, &ctx.sampling())?;
        ctx.emit(&format!("decay_{k}"), "decay", || decay_csv(&profile, &ctx.hash), &profile)?;
        ctx.write(&format!("decay_{k}_plot.csv"), &decay_plot(&profile, &ctx.hash))?;
        println!("level {k}: window constant {}", fmt_f64(profile.window_constant()));
    }
    Ok(Outcome::Ok)
}

fn regularity(ctx: &Ctx) -> Result<Outcome> {
    for k in ctx.levels()? {
        if ctx.km.mu(k).is_none() {
            eprintln!("level {k}: no spatial density, skipped");
            continue;
        }
        let report = regularity_scan(&ctx.km, k)?;
        ctx.emit(&format!("regularity_{k}"), "regularity", || regularity_csv(&report, &ctx.hash), &report)?;
        println!("level {k}: constant {}", fmt_f64(report.constant));
    }
    Ok(Outcome::Ok)
}

fn energy(ctx: &Ctx) -> Result<Outcome> {
    let alpha = ctx.cli.alpha.unwrap_or(ctx.params.dim() as f64 / 2.0);
    let mut rows = Vec::new();
    for k in ctx.levels()? {
        let Some(mu) = ctx.km.mu(k) else {
            eprintln!("level {k}: no spatial density, skipped");
            continue;
        };
        let spatial = riesz_energy(mu, alpha)?;
        let fourier = riesz_energy_fourier(mu, alpha, DEFAULT_TABLE_BUDGET)?;
        println!("level {k}: energy {} (fourier {})", fmt_f64(spatial.energy), fmt_f64(fourier.energy));
        rows.push((k, spatial, Some(fourier)));
    }
    ctx.emit("energy", "energy", || energy_csv(&rows, &ctx.hash), &rows)?;
    Ok(Outcome::Ok)
}

fn restrict(ctx: &Ctx) -> Result<Outcome> {
    let q = match (ctx.cli.q, ctx.params.shape.is_scalar()) {
        (Some(q), _) => q,
        (None, true) => ratio_f64(&scalar_endpoint(ctx.params.tau)?),
        (None, false) => return Err(Error::InvalidParams("--q is required for the matrix shape".into())),
    };
    for k in ctx.levels()? {
        let Some(mu) = ctx.km.mu(k) else {
            eprintln!("level {k}: no spatial density, skipped");
            continue;
        };
        let level = default_test_level(mu, DEFAULT_TEST_GRID);
        let report = restriction_ratio(mu, q, level, ctx.cli.tests, ctx.cli.seed)?;
        ctx.emit(&format!("restrict_{k}"), "restriction", || restriction_csv(&report, &ctx.hash), &report)?;
        println!(
            "level {k}: q = {}, max ratio {} at {}",
            fmt_f64(q),
            fmt_f64(report.max_ratio),
            report.argmax
        );
    }
    Ok(Outcome::Ok)
}

fn ratio_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn dim(ctx: &Ctx) -> Result<Outcome> {
    let k = match ctx.cli.k {
        Some(_) => ctx.levels()?[0],
        None => ctx.km.depth(),
    };
    let profile = decay_profile(&ctx.km, k, &ctx.sampling())?;
    let est = fourier_dim_estimate(&profile)?;
    let header = "k,shells_used,raw_exponent,corrected_exponent,dim_raw,dim_corrected,target_exponent";
    let shells: Vec<String> = est.shells_used.iter().map(|s| s.to_string()).collect();
    let row = vec![
        k.to_string(),
        shells.join(" "),
        fmt_f64(est.raw_exponent),
        fmt_f64(est.corrected_exponent),
        fmt_f64(est.dim_raw),
        fmt_f64(est.dim_corrected),
        fmt_f64(est.target_exponent),
    ];
    ctx.emit("dim", "dim", || csv_table(&ctx.hash, header, &[row]), &est)?;
    println!(
        "level {k}: exponent {} (raw {}), target {}",
        fmt_f64(est.corrected_exponent),
        fmt_f64(est.raw_exponent),
        fmt_f64(est.target_exponent)
    );
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct DiffRow {
    k: usize,
    check: String,
    points: usize,
    max_err: f64,
}

fn points_up_to(ctx: &Ctx, level: u32) -> Result<Vec<DualPoint>> {
    let mut out = Vec::new();
    for ell in 0..=level {
        out.extend(shell_points_sampled(ctx.params.prime, ctx.params.dim(), ell, &ctx.sampling(), &[])?.0);
    }
    Ok(out)
}

fn oracle_diff(ctx: &Ctx) -> Result<Outcome> {
    let km = &ctx.km;
    let mut rows = Vec::new();
    let psi0 = build_psi0(&ctx.params)?;
    let mut worst: f64 = 0.0;
    for s in points_up_to(ctx, psi0.level())? {
        let a = km.ft_mu(0, &s)?;
        let b = brute_ft_oracle(&psi0, &s.to_rationals(), DEFAULT_ORACLE_CAP)?;
        worst = worst.max((a - b).norm());
    }
    rows.push(DiffRow {
        k: 0,
        check: "psi0 table vs oracle".into(),
        points: points_up_to(ctx, psi0.level())?.len(),
        max_err: worst,
    });
    for k in ctx.levels()? {
        let m = km.schedule().m_of(k);
        if let Some(f) = km.fm_density(k) {
            let pts = points_up_to(ctx, f.level() + 1)?;
            let mut worst: f64 = 0.0;
            for s in &pts {
                let closed = ft_fm_closed(&ctx.params, m, s)?;
                let brute = brute_ft_oracle(f, &s.to_rationals(), DEFAULT_ORACLE_CAP)?;
                worst = worst.max((closed - brute).norm());
            }
            rows.push(DiffRow {
                k,
                check: "F_M closed form vs oracle".into(),
                points: pts.len(),
                max_err: worst,
            });
        }
        if km.mu(k).is_some() && km.dual(k - 1).is_some() {
            let pts = points_up_to(ctx, km.dual_level(k))?;
            let mut worst: f64 = 0.0;
            for s in &pts {
                worst = worst.max((km.ft_mu_recursive(k, s)? - km.ft_mu_direct(k, s)?).norm());
            }
            rows.push(DiffRow {
                k,
                check: "mu_k recursion vs direct".into(),
                points: pts.len(),
                max_err: worst,
            });
        }
    }
    let mut ok = true;
    for r in &rows {
        let pass = r.max_err <= COMPLEX_TOLERANCE;
        ok &= pass;
        println!(
            "level {}: {}: max err {} over {} points{}",
            r.k,
            r.check,
            fmt_f64(r.max_err),
            r.points,
            if pass { "" } else { " EXCEEDS TOLERANCE" }
        );
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.k.to_string(), r.check.clone(), r.points.to_string(), fmt_f64(r.max_err)])
        .collect();
    ctx.emit(
        "oracle_diff",
        "oracle-diff",
        || csv_table(&ctx.hash, "k,check,points,max_err", &table),
        &rows,
    )?;
    Ok(if ok { Outcome::Ok } else { Outcome::Failed })
}

fn support_csv(hash: &str, f: &StepDensity) -> String {
    let cols: Vec<String> = (1..=f.dim()).map(|i| format!("c{i}")).collect();
    let header = format!("{},value", cols.join(","));
    let rows: Vec<Vec<String>> = f
        .iter()
        .map(|(c, v)| {
            let mut r: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            r.push(v.to_string());
            r
        })
        .collect();
    csv_table(hash, &header, &rows)
}

fn dump(ctx: &Ctx) -> Result<Outcome> {
    let km = &ctx.km;
    for k in ctx.levels()? {
        let Some(mu) = km.mu(k) else {
            eprintln!("level {k}: no spatial density; dumping the cached transform only");
            if let Some(d) = km.dual(k) {
                let p = ctx.params.prime;
                let cols: Vec<String> = (1..=ctx.params.dim()).map(|i| format!("s{i}")).collect();
                let rows: Vec<Vec<String>> = d
                    .entries()
                    .iter()
                    .map(|(s, v)| {
                        let mut r: Vec<String> = s.coords().iter().map(|&(a, l)| coordinate_label(a, l, p)).collect();
                        r.extend([fmt_f64(v.re), fmt_f64(v.im), fmt_f64(v.norm())]);
                        r
                    })
                    .collect();
                let header = format!("{},real,imag,abs", cols.join(","));
                ctx.write(&format!("fourier_{k}.csv"), &csv_table(&ctx.hash, &header, &rows))?;
            }
            continue;
        };
        ctx.write(&format!("support_{k}.csv"), &support_csv(&ctx.hash, mu.density()))?;
        match ft_table_with_budget(mu.density(), DEFAULT_TABLE_BUDGET) {
            Ok(table) => {
                let mut buf = format!("# manifest {}\n", ctx.hash).into_bytes();
                table.write_csv(&mut buf)?;
                write_bytes(&ctx.path(&format!("fourier_{k}.csv")), &buf)?;
            }
            Err(e @ Error::TableTooLarge { .. }) => eprintln!("level {k}: {e}"),
            Err(e) => return Err(e),
        }
        println!("level {k}: {} support cells", mu.density().support_len());
    }
    Ok(Outcome::Ok)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}
