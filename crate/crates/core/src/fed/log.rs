//! Per-round records and their CSV / line-delimited JSON encodings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Metrics and defense diagnostics for one aggregation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    /// FNV-1a checksum of the new global parameters, hex encoded.
    pub checksum: String,
    pub clean_acc: f64,
    /// ASR against the composed trigger; `None` when no test graph can host it.
    pub asr_global: Option<f64>,
    /// ASR per local trigger, in malicious-client order.
    pub asr_local: Vec<Option<f64>>,
    /// Aggregation weight per client (0/1 indicator under model filtering);
    /// `None` without a defense.
    pub weights: Option<Vec<f64>>,
    pub losses: Vec<Option<f64>>,
    /// Graphs poisoned by each client this round.
    pub poisoned: Vec<usize>,
    /// Number of clients whose update entered the aggregate.
    pub accepted: usize,
    /// Min / mean / max off-diagonal cosine similarity seen by the defense.
    pub cosine: Option<[f64; 3]>,
    /// Free-form notes: fail-open filtering, fallbacks, skipped poisoning.
    pub events: Vec<String>,
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

pub fn csv_header(n_local: usize, n_clients: usize) -> String {
    let mut cols = vec!["t".to_string(), "clean_acc".into(), "asr_global".into()];
    cols.extend((1..=n_local).map(|i| format!("asr_local_{i}")));
    cols.extend((1..=n_clients).map(|i| format!("weight_{i}")));
    cols.extend((1..=n_clients).map(|i| format!("loss_{i}")));
    cols.extend(["accepted", "cos_min", "cos_mean", "cos_max"].map(String::from));
    cols.join(",")
}

pub fn csv_row(log: &RoundLog, n_clients: usize) -> String {
    let mut row = vec![log.round.to_string(), fmt_sig6(log.clean_acc), opt(log.asr_global)];
    row.extend(log.asr_local.iter().map(|&a| opt(a)));
    match &log.weights {
        Some(w) => row.extend(w.iter().map(|&v| fmt_sig6(v))),
        None => row.extend(std::iter::repeat_n(String::new(), n_clients)),
    }
    row.extend(log.losses.iter().map(|&l| opt(l)));
    row.push(log.accepted.to_string());
    match log.cosine {
        Some(c) => row.extend(c.iter().map(|&v| fmt_sig6(v))),
        None => row.extend(std::iter::repeat_n(String::new(), 3)),
    }
    row.join(",")
}

pub fn to_csv(logs: &[RoundLog], n_local: usize, n_clients: usize) -> String {
    let mut out = csv_header(n_local, n_clients);
    out.push('\n');
    for log in logs {
        writeln!(out, "{}", csv_row(log, n_clients)).unwrap();
    }
    out
}

pub fn to_jsonl(logs: &[RoundLog]) -> String {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log).expect("round log serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.85), "0.85");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig6(9.9999996), "10");
        assert_eq!(fmt_sig6(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_sig6(0.0001), "0.0001");
    }

    #[test]
    fn csv_shape() {
        let log = RoundLog {
            round: 1,
            checksum: "00".into(),
            clean_acc: 0.5,
            asr_global: None,
            asr_local: vec![Some(0.25), None],
            weights: None,
            losses: vec![Some(1.0), None, Some(2.0)],
            poisoned: vec![0; 3],
            accepted: 3,
            cosine: None,
            events: vec![],
        };
        let header = csv_header(2, 3);
        let row = csv_row(&log, 3);
        assert_eq!(header.split(',').count(), row.split(',').count());
        assert_eq!(row, "1,0.5,,0.25,,,,,1,,2,3,,,");
    }
}
