//! CSV summary tables: methods as rows, model × metric (or model × factor)
//! as columns. Timed-out cells print `T/O`.

use dpdsyn_core::eval::{DownstreamModelKind, EvalReport};

fn cell(report: Option<&EvalReport>, metric: impl Fn(&EvalReport) -> f64) -> String {
    match report {
        None => String::new(),
        Some(r) if r.timed_out => "T/O".to_string(),
        Some(r) => format!("{:.4}", metric(r)),
    }
}

fn find<'a>(
    reports: &'a [EvalReport],
    synthesizer: &str,
    kind: DownstreamModelKind,
    factor: usize,
) -> Option<&'a EvalReport> {
    reports
        .iter()
        .find(|r| r.synthesizer == synthesizer && r.model == kind && r.scale_factor == factor)
}

fn methods(reports: &[EvalReport]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in reports {
        if !out.contains(&r.synthesizer) {
            out.push(r.synthesizer.clone());
        }
    }
    out
}

/// Utility table: one row per method, accuracy and F1 per model kind, plus
/// the mean synthesis wall-clock when measured.
pub fn utility_table(reports: &[EvalReport], kinds: &[DownstreamModelKind]) -> String {
    let mut out = String::from("method");
    for kind in kinds {
        out.push_str(&format!(",{kind}_acc,{kind}_f1"));
    }
    out.push_str(",synth_runtime_s\n");
    for method in methods(reports) {
        out.push_str(&method);
        let mut runtime = String::new();
        for &kind in kinds {
            let r = find(reports, &method, kind, 1);
            out.push(',');
            out.push_str(&cell(r, |r| r.accuracy));
            out.push(',');
            out.push_str(&cell(r, |r| r.f1));
            if let Some(r) = r {
                if let Some(s) = r.synth_runtime_s {
                    runtime = format!("{s:.3}");
                }
            }
        }
        out.push(',');
        out.push_str(&runtime);
        out.push('\n');
    }
    out
}

/// Scalability table: one row per method, accuracy per model kind × factor.
pub fn scale_table(
    reports: &[EvalReport],
    kinds: &[DownstreamModelKind],
    factors: &[usize],
) -> String {
    let mut out = String::from("method");
    for kind in kinds {
        for factor in factors {
            out.push_str(&format!(",{kind}_{factor}x_acc"));
        }
    }
    out.push('\n');
    for method in methods(reports) {
        out.push_str(&method);
        for &kind in kinds {
            for &factor in factors {
                out.push(',');
                out.push_str(&cell(find(reports, &method, kind, factor), |r| r.accuracy));
            }
        }
        out.push('\n');
    }
    out
}
