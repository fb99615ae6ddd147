use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::model::Variant;
use super::train::SweepRow;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub const HISTORY_HEADER: &str = "step,objective";
pub const SWEEP_HEADER: &str = "variant,d,seed,final_loss,equiv_gap,status";
pub const SWEEP_SUMMARY_HEADER: &str = "d,rank,variant,median_final_loss,median_equiv_gap,seeds";

pub fn history_csv(history: &[(usize, f64)]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for (step, obj) in history {
        let _ = writeln!(s, "{step},{}", format_float(*obj));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub variant: Variant,
    pub d: usize,
    pub final_loss: f64,
    pub equiv_gap: f64,
    pub seed: u64,
}

fn json_number(v: f64) -> String {
    if v.is_finite() {
        format_float(v)
    } else {
        "null".into()
    }
}

impl Summary {
    /// Flat JSON object with the fields in declaration order.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"variant\": \"{}\", \"d\": {}, \"final_loss\": {}, \"equiv_gap\": {}, \"seed\": {}}}\n",
            self.variant,
            self.d,
            json_number(self.final_loss),
            json_number(self.equiv_gap),
            self.seed
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.variant,
            r.d,
            r.seed,
            format_float(r.final_loss),
            format_float(r.equiv_gap),
            r.status
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct MedianRow {
    pub d: usize,
    pub variant: Variant,
    pub median_final_loss: f64,
    pub median_equiv_gap: f64,
    /// Seeds that completed.
    pub seeds: usize,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Medians over seeds of the successful cells, ordered by median loss
/// within each dimension.
pub fn median_summary(rows: &[SweepRow]) -> Vec<MedianRow> {
    let mut groups: BTreeMap<(usize, Variant), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.d, r.variant)).or_default();
        if r.status == "ok" {
            entry.0.push(r.final_loss);
            entry.1.push(r.equiv_gap);
        }
    }
    let mut out: Vec<MedianRow> = groups
        .into_iter()
        .map(|((d, variant), (mut l, mut g))| MedianRow {
            d,
            variant,
            seeds: l.len(),
            median_final_loss: median(&mut l),
            median_equiv_gap: median(&mut g),
        })
        .collect();
    out.sort_by(|a, b| {
        a.d.cmp(&b.d)
            .then(a.median_final_loss.total_cmp(&b.median_final_loss))
            .then(a.variant.cmp(&b.variant))
    });
    out
}

pub fn median_summary_csv(rows: &[MedianRow]) -> String {
    let mut s = format!("{SWEEP_SUMMARY_HEADER}\n");
    let mut rank = 0;
    let mut last_d = None;
    for r in rows {
        if last_d != Some(r.d) {
            rank = 0;
            last_d = Some(r.d);
        }
        rank += 1;
        let _ = writeln!(
            s,
            "{},{rank},{},{},{},{}",
            r.d,
            r.variant,
            format_float(r.median_final_loss),
            format_float(r.median_equiv_gap),
            r.seeds
        );
    }
    s
}
