//! CSV tables, plot dumps and JSON summaries for the scans. Every CSV opens
//! with a `# manifest <hash>` line naming the build it came from.

use serde::Serialize;
use serde_json::{json, Value};

use super::counting::CountingReport;
use super::decay::DecayProfile;
use super::energy::{FourierEnergy, RieszEnergy};
use super::regularity::RegularityReport;
use super::restriction::RestrictionReport;
use crate::error::Result;
use crate::numeric::fmt_f64;

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn table(manifest: &str, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("# manifest {manifest}\n{header}\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| field(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn decay_csv(profile: &DecayProfile, manifest: &str) -> String {
    table(
        manifest,
        "ell,abs_s,samples,exhaustive,max_abs,ratio,argmax",
        profile.shells.iter().map(|s| {
            vec![
                s.ell.to_string(),
                (profile.prime as u128).pow(s.ell).to_string(),
                s.samples.to_string(),
                s.exhaustive.to_string(),
                fmt_f64(s.max_abs),
                fmt_f64(s.ratio),
                s.argmax.clone(),
            ]
        }),
    )
}

/// `(ln |s|, ln max |μ̂|)` for the shells with a nonzero maximum.
pub fn decay_plot(profile: &DecayProfile, manifest: &str) -> String {
    let ln_p = (profile.prime as f64).ln();
    table(
        manifest,
        "log_abs_s,log_max_abs",
        profile
            .shells
            .iter()
            .filter(|s| s.max_abs > 0.0)
            .map(|s| vec![fmt_f64(s.ell as f64 * ln_p), fmt_f64(s.max_abs.ln())]),
    )
}

pub fn regularity_csv(report: &RegularityReport, manifest: &str) -> String {
    table(
        manifest,
        "ell,max_mass,max_mass_exact,argmax_center,bound,ratio,case",
        report.rows.iter().map(|r| {
            let center: Vec<String> = r.argmax_center.iter().map(|c| c.to_string()).collect();
            vec![
                r.ell.to_string(),
                fmt_f64(r.max_mass),
                r.max_mass_exact.clone(),
                center.join(" "),
                fmt_f64(r.bound),
                fmt_f64(r.ratio),
                r.case.clone(),
            ]
        }),
    )
}

/// One row per level `k`: spatial and Fourier-side energies.
pub fn energy_csv(rows: &[(usize, RieszEnergy, Option<FourierEnergy>)], manifest: &str) -> String {
    table(
        manifest,
        "k,alpha,level,spatial,truncated,fourier,fourier_method",
        rows.iter().map(|(k, e, f)| {
            vec![
                k.to_string(),
                fmt_f64(e.alpha),
                e.level.to_string(),
                fmt_f64(e.energy),
                e.truncated.to_string(),
                f.as_ref().map(|f| fmt_f64(f.energy)).unwrap_or_default(),
                f.as_ref().map(|f| f.method.clone()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn restriction_csv(report: &RestrictionReport, manifest: &str) -> String {
    table(
        manifest,
        "index,level,l2_mu,lq_norm,ratio,function",
        report.rows.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.level.to_string(),
                fmt_f64(r.l2_mu),
                fmt_f64(r.lq_norm),
                fmt_f64(r.ratio),
                r.function.clone(),
            ]
        }),
    )
}

pub fn counting_csv(report: &CountingReport, manifest: &str) -> String {
    let mut rows = Vec::new();
    for r in &report.disjoint {
        rows.push(vec![
            "disjoint".into(),
            r.j.to_string(),
            String::new(),
            String::new(),
            r.pairs_checked.to_string(),
            r.distinct_fractions.to_string(),
            String::new(),
            r.violations.to_string(),
        ]);
    }
    for r in &report.non_i_ball {
        rows.push(vec![
            "non-i-ball".into(),
            r.j.to_string(),
            String::new(),
            r.ell.to_string(),
            r.centers.to_string(),
            r.max_j.to_string(),
            format!("{} {}", fmt_f64(r.bound_a), fmt_f64(r.bound_b)),
            r.violations.to_string(),
        ]);
    }
    for r in &report.i_ball {
        rows.push(vec![
            "i-ball".into(),
            r.j.to_string(),
            r.k.to_string(),
            String::new(),
            r.j_balls.to_string(),
            r.max_count.to_string(),
            fmt_f64(r.bound),
            r.violations.to_string(),
        ]);
    }
    table(manifest, "check,j,k,ell,instances,max_count,bound,violations", rows)
}

/// `{"kind", "manifest", "report"}` document.
pub fn summary<T: Serialize>(kind: &str, manifest: &str, report: &T) -> Result<Value> {
    Ok(json!({
        "kind": kind,
        "manifest": manifest,
        "report": serde_json::to_value(report)?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::decay::ShellStat;

    #[test]
    fn csv_quotes_and_manifest_line() {
        let profile = DecayProfile {
            prime: 3,
            dim: 2,
            k: 1,
            m_k: 1,
            l_k: 2,
            beta: 0.5,
            log_power: 2,
            growth: "sqrt".into(),
            theorem: false,
            seed: 0,
            shells: vec![ShellStat {
                ell: 1,
                max_abs: 0.25,
                argmax: "(1/3, 2/3)".into(),
                samples: 8,
                exhaustive: true,
                ratio: 1.5,
            }],
        };
        let csv = decay_csv(&profile, "abc");
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# manifest abc"));
        assert_eq!(lines.next(), Some("ell,abs_s,samples,exhaustive,max_abs,ratio,argmax"));
        assert!(lines.next().unwrap().ends_with(",\"(1/3, 2/3)\""));
        let plot = decay_plot(&profile, "abc");
        assert_eq!(plot.lines().count(), 3);
    }
}
