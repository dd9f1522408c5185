//! Plain-text tables for people.

use std::fmt::Write;

use mprfrail_core::estimation::{ModelFit, Warning};
use mprfrail_core::selection::{LrtResult, SelectionReport};
use mprfrail_core::simulation::ScenarioSummary;

fn cell(est: f64, se: Option<f64>) -> String {
    match se {
        Some(s) => format!("{est:>10.4} ({s:.4})"),
        None => format!("{est:>10.4} (  -   )"),
    }
}

fn block(out: &mut String, title: &str, names: &[String], est: &[f64], se: &[Option<f64>]) {
    let _ = writeln!(out, "{title}");
    let labels = std::iter::once("Intercept").chain(names.iter().map(String::as_str));
    for ((name, e), s) in labels.zip(est).zip(se) {
        let _ = writeln!(out, "  {name:<22}{}", cell(*e, *s));
    }
}

fn describe(w: &Warning) -> String {
    match w {
        Warning::SingleCluster => "only one cluster: frailty variance is not identifiable".into(),
        Warning::Boundary { parameter, value } => {
            format!("{parameter} = {value:.3e} is on the boundary; consider the reduced structure")
        }
        Warning::MissingStandardError { parameter } => format!("no standard error for {parameter}"),
        Warning::StepHalvingExhausted => "step halving exhausted in the Newton loop".into(),
        Warning::Ridge => "information matrix needed a ridge".into(),
        Warning::OptimizerNotConverged => "dispersion search hit its iteration cap".into(),
    }
}

/// Coefficient table: Scale, Shape and Frailty parameters blocks followed by
/// deviances and degrees of freedom.
pub fn fit_table(fit: &ModelFit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} MPR model, frailty structure {}", fit.family, fit.structure);
    let _ = writeln!(out, "n = {}, events = {}, clusters = {}", fit.n, fit.events, fit.cluster_labels.len());
    let _ = writeln!(out, "estimate (standard error)");
    block(&mut out, "Scale", &fit.scale_names, &fit.theta.beta, &fit.se_beta);
    block(&mut out, "Shape", &fit.shape_names, &fit.theta.alpha, &fit.se_alpha);
    let _ = writeln!(out, "Frailty parameters");
    for (name, v, se) in fit.dispersion_table() {
        let _ = writeln!(out, "  {name:<22}{}", cell(v, se));
    }
    let _ = writeln!(out, "-2 p(h)                 {:>10.4}", fit.deviance_profile);
    let _ = writeln!(out, "-2 sum l1               {:>10.4}", fit.cond_deviance);
    let _ = writeln!(out, "df_r                    {:>10}", fit.df_r);
    let _ = writeln!(out, "df_c                    {:>10.4}", fit.df_c);
    let _ = writeln!(out, "converged               {:>10}", fit.converged);
    if fit.df_r > 0 {
        let _ = writeln!(out, "note: Wald tests on frailty variances are unreliable; use the likelihood-ratio test");
    }
    for w in &fit.warnings {
        let _ = writeln!(out, "warning: {}", describe(w));
    }
    out
}

/// Comparison table with the best rows marked, failures and LRT lines appended.
pub fn selection_table(
    report: &SelectionReport,
    failures: &[(String, String)],
    lrts: &[(String, LrtResult)],
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>11} {:>4} {:>11} {:>9} {:>11} {:>8} {:>11} {:>9}",
        "model", "-2p(h)", "df_r", "rAIC", "d_rAIC", "-2sum(l1)", "df_c", "cAIC", "d_cAIC"
    );
    for (k, r) in report.rows.iter().enumerate() {
        let mark = match (k == report.best_raic, k == report.best_caic) {
            (true, true) => "  <- rAIC, cAIC",
            (true, false) => "  <- rAIC",
            (false, true) => "  <- cAIC",
            _ => "",
        };
        let _ = writeln!(
            out,
            "{:<6} {:>11.2} {:>4} {:>11.2} {:>9.2} {:>11.2} {:>8.2} {:>11.2} {:>9.2}{mark}",
            r.model, r.deviance_r, r.df_r, r.raic, r.delta_raic, r.deviance_c, r.df_c, r.caic, r.delta_caic
        );
    }
    for (model, why) in failures {
        let _ = writeln!(out, "{model:<6} failed: {why}");
    }
    for (label, t) in lrts {
        let _ = writeln!(
            out,
            "LRT {label}: statistic {:.3}, 5% critical value {:.2}, p = {:.4}{}",
            t.statistic,
            t.critical_value,
            t.p_value,
            if t.significant { ", significant" } else { "" }
        );
    }
    out
}

pub fn summary_table(label: &str, s: &ScenarioSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {label}: {} replicates, {} converged, {} failed; censoring target {:.2}, realized {:.3}",
        s.replicates, s.converged, s.failed, s.target_censoring, s.realized_censoring
    );
    let _ = writeln!(out, "{:<12} {:>8} {:>9} {:>8} {:>8}", "parameter", "true", "mean", "SE", "SEE");
    let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for p in &s.parameters {
        let _ = writeln!(out, "{:<12} {:>8} {:>9.3} {:>8} {:>8}", p.name, f(p.truth), p.mean, f(p.se), f(p.see));
    }
    out
}
