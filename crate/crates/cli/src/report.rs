//! Fixed-width metric table followed by a key=value block.

use hflow_core::metrics::ClipReport;

const HEADERS: [&str; 8] = [
    "EPE", "1−Cos", "Acc.S", "Acc.R", "MPJPE", "PA", "MAE", "SiLog",
];
const COL: usize = 8;

fn mm(x: f64) -> String {
    format!("{:.1}", x * 1000.0)
}

fn cells(r: &ClipReport) -> [String; 8] {
    [
        mm(r.flow.epe),
        format!("{:.3}", r.flow.one_minus_cos),
        format!("{:.3}", r.flow.acc_strict),
        format!("{:.3}", r.flow.acc_relaxed),
        mm(r.pose.mpjpe),
        mm(r.pose.pa_mpjpe),
        mm(r.depth.mae),
        format!("{:.2}", r.depth.silog),
    ]
}

/// One table row per labelled report. EPE, MPJPE, PA and MAE are in
/// millimeters; the key=value block keeps meters at full precision, with
/// keys prefixed by the row label.
pub fn render_report(rows: &[(&str, &ClipReport)]) -> String {
    let label_w = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    let mut out = format!("{:<label_w$}", "");
    for h in HEADERS {
        out.push_str(&format!("{h:>COL$}"));
    }
    out.push('\n');
    out.push_str(&format!("{:<label_w$}", "units"));
    for u in ["mm", "", "", "", "mm", "mm", "mm", ""] {
        out.push_str(&format!("{u:>COL$}"));
    }
    out.push('\n');
    for (label, r) in rows {
        out.push_str(&format!("{label:<label_w$}"));
        for c in cells(r) {
            out.push_str(&format!("{c:>COL$}"));
        }
        out.push('\n');
    }
    out.push('\n');
    for (label, r) in rows {
        for line in r.to_key_values().lines() {
            out.push_str(&format!("{label}.{line}\n"));
        }
    }
    out
}
