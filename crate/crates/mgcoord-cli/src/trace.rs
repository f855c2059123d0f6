//! Harness-level trace rows and CSV rendering.

/// One step of one experiment's error trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub experiment: String,
    pub step: usize,
    pub error_w: f64,
    pub error_primal_owned: f64,
    pub wall_time_ms: f64,
}

/// Render rows as CSV. Footer lines (prefixed `#`) flag conditions like
/// non-convergence without disturbing the column schema.
pub fn rows_to_csv(rows: &[TraceRow], footers: &[String]) -> String {
    let mut out = String::from("experiment,step,error_w,error_primal_owned,wall_time_ms\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:e},{:e},{}\n",
            row.experiment, row.step, row.error_w, row.error_primal_owned, row.wall_time_ms
        ));
    }
    for footer in footers {
        out.push_str(&format!("# {footer}\n"));
    }
    out
}
