//! CSV output for sweeps and robustness reports.

use crngame_core::game::ConditionResult;
use crngame_core::RobustnessReport;

use crate::config::{Settings, Sweep};

pub const SWEEP_COLUMNS: [&str; 16] = [
    "d",
    "n",
    "trials",
    "succ_with",
    "succ_without",
    "p_with",
    "p_with_lo",
    "p_with_hi",
    "p_without",
    "p_without_lo",
    "p_without_hi",
    "ratio",
    "ratio_lo",
    "trunc_with",
    "trunc_without",
    "error",
];

pub const ROBUSTNESS_COLUMNS: [&str; 13] = [
    "condition",
    "trials",
    "p_with",
    "p_with_lo",
    "p_with_hi",
    "p_without",
    "p_without_lo",
    "p_without_hi",
    "ratio",
    "ratio_lo",
    "ratio_hi",
    "verdict",
    "error",
];

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn finish(mut out: Vec<u8>, rows: Vec<Vec<String>>, header: &[&str]) -> String {
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(header).expect("write to memory");
        for row in rows {
            w.write_record(&row).expect("write to memory");
        }
        w.flush().expect("write to memory");
    }
    String::from_utf8(out).expect("csv output is UTF-8")
}

fn header_comments(kind: &str, settings: &Settings, rejected: &[i64], n: Option<u64>) -> Vec<u8> {
    let mut s = format!(
        "# crngame {kind}: trials={} seed={} confidence={} paired={}",
        settings.trials, settings.seed, settings.confidence, settings.paired
    );
    if let Some(n) = n {
        s.push_str(&format!(" n={n}"));
    }
    s.push('\n');
    if !rejected.is_empty() {
        let ds: Vec<String> = rejected.iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("# rejected (n + d odd): {}\n", ds.join(" ")));
    }
    s.into_bytes()
}

/// One row per accepted sweep condition; rejected ones go in a header comment.
pub fn sweep_csv(sweep: &Sweep, settings: &Settings, report: &RobustnessReport) -> String {
    let rows = sweep
        .conditions
        .iter()
        .zip(&report.conditions)
        .map(|((d, _), c)| sweep_row(*d, sweep.n, report.trials, c))
        .collect();
    finish(
        header_comments("sweep", settings, &sweep.rejected, Some(sweep.n)),
        rows,
        &SWEEP_COLUMNS,
    )
}

fn sweep_row(d: i64, n: u64, trials: usize, c: &ConditionResult) -> Vec<String> {
    let w = c.with.as_ref();
    let wo = c.without.as_ref();
    vec![
        d.to_string(),
        n.to_string(),
        trials.to_string(),
        opt(w, |e| e.successes.to_string()),
        opt(wo, |e| e.successes.to_string()),
        opt(w, |e| num(e.mean)),
        opt(w, |e| num(e.interval.lo)),
        opt(w, |e| num(e.interval.hi)),
        opt(wo, |e| num(e.mean)),
        opt(wo, |e| num(e.interval.lo)),
        opt(wo, |e| num(e.interval.hi)),
        opt(c.ratio, |r| num(r.point)),
        opt(c.ratio, |r| num(r.interval.lo)),
        opt(w, |e| e.truncated.to_string()),
        opt(wo, |e| e.truncated.to_string()),
        c.error.clone().unwrap_or_default(),
    ]
}

pub fn robustness_csv(settings: &Settings, rejected: &[i64], report: &RobustnessReport) -> String {
    let rows = report
        .conditions
        .iter()
        .map(|c| {
            let w = c.with.as_ref();
            let wo = c.without.as_ref();
            vec![
                c.label.clone(),
                report.trials.to_string(),
                opt(w, |e| num(e.mean)),
                opt(w, |e| num(e.interval.lo)),
                opt(w, |e| num(e.interval.hi)),
                opt(wo, |e| num(e.mean)),
                opt(wo, |e| num(e.interval.lo)),
                opt(wo, |e| num(e.interval.hi)),
                opt(c.ratio, |r| num(r.point)),
                opt(c.ratio, |r| num(r.interval.lo)),
                opt(c.ratio, |r| num(r.interval.hi)),
                opt(c.verdict, |v| v.as_str().to_owned()),
                match (&c.error, c.ratio) {
                    (Some(e), _) => e.clone(),
                    (None, None) => "ratio undefined: baseline lower bound is 0".to_owned(),
                    (None, Some(_)) => String::new(),
                },
            ]
        })
        .collect();
    finish(
        header_comments("robustness", settings, rejected, None),
        rows,
        &ROBUSTNESS_COLUMNS,
    )
}

/// Final human-readable line of a robustness run.
pub fn robustness_summary(report: &RobustnessReport) -> String {
    let min = opt(report.min_ratio, num);
    let min = if min.is_empty() { "undefined".to_owned() } else { min };
    match (report.alpha, report.verdict) {
        (Some(a), Some(v)) => format!(
            "{} alpha={a} min_ratio={min} confidence={} conditions={}",
            v.as_str(),
            report.confidence,
            report.conditions.len()
        ),
        _ => format!(
            "min_ratio={min} confidence={} conditions={}",
            report.confidence,
            report.conditions.len()
        ),
    }
}
