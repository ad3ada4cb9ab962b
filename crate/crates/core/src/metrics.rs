//! Metrics persistence: the run CSV schema and a digit-stable float format.
//!
//! The header and cell formats are part of the artifact contract — two runs
//! with the same configuration and seed must produce byte-identical files,
//! so every cell is rendered through one deterministic code path. Real
//! columns carry 9 significant digits; the `wall_ms` column is always 0 in
//! the reference path (timing is reported out of band so the file stays
//! reproducible); the eureka column is `NaN` for tasks without a rare
//! token, and the parser accepts it back.

use crate::error::{Error, Result};
use crate::trainer::MetricsRow;

/// Exact first line of every metrics CSV.
pub const CSV_HEADER: &str = "iteration,cumulative_rollouts,mean_reward,ratio_variance,\
                              lambda,clipped_fraction,clamp_events,eureka_prob,wall_ms";

/// Render with 9 significant digits: plain decimal notation while the
/// magnitude is moderate, scientific notation outside that range, trailing
/// zeros trimmed.
pub fn format_significant(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..9).contains(&magnitude) {
        let decimals = (8 - magnitude).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_trailing_zeros(fixed)
    } else {
        let sci = format!("{x:.8e}");
        trim_exponent_zeros(sci)
    }
}

fn trim_trailing_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn trim_exponent_zeros(s: String) -> String {
    match s.split_once('e') {
        Some((mantissa, exponent)) => {
            format!("{}e{exponent}", trim_trailing_zeros(mantissa.to_string()))
        }
        None => s,
    }
}

/// Serialize rows under the fixed header. The output ends with a newline.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.iteration,
            row.cumulative_rollouts,
            format_significant(row.mean_reward),
            format_significant(row.ratio_variance),
            format_significant(row.lambda),
            format_significant(row.clipped_fraction),
            row.clamp_events,
            format_significant(row.eureka_prob),
            row.wall_ms,
        ));
    }
    out
}

/// Parse a metrics CSV produced by [`metrics_to_csv`]. The header must
/// match exactly.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        Some(header) => {
            return Err(Error::InvalidArgument(format!(
                "metrics header mismatch: got {header:?}"
            )))
        }
        None => return Err(Error::InvalidArgument("empty metrics file".to_string())),
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::InvalidArgument(format!(
                "metrics row {} has {} fields, expected 9",
                line_no + 2,
                fields.len()
            )));
        }
        let parse_u64 = |i: usize| -> Result<u64> {
            fields[i].parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "metrics row {}: cannot parse {:?} as an integer",
                    line_no + 2,
                    fields[i]
                ))
            })
        };
        let parse_f64 = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "metrics row {}: cannot parse {:?} as a real",
                    line_no + 2,
                    fields[i]
                ))
            })
        };
        rows.push(MetricsRow {
            iteration: parse_u64(0)?,
            cumulative_rollouts: parse_u64(1)?,
            mean_reward: parse_f64(2)?,
            ratio_variance: parse_f64(3)?,
            lambda: parse_f64(4)?,
            clipped_fraction: parse_f64(5)?,
            clamp_events: parse_u64(6)?,
            eureka_prob: parse_f64(7)?,
            wall_ms: parse_u64(8)?,
        });
    }
    Ok(rows)
}
