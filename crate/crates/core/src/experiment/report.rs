use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fed::fmt_sig6;
use crate::metrics::mean_stderr;

/// A comma-separated table as written by this crate (no quoting).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| Error::parse(file, 1, "empty file"))?;
        let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(Error::parse(
                    file,
                    i + 1,
                    format!("{} fields, header has {}", row.len(), header.len()),
                ));
            }
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column; empty cells are `None`.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self
            .index(name)
            .ok_or_else(|| Error::Config(format!("no column named {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                let cell = &r[i];
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse()
                        .map(Some)
                        .map_err(|_| Error::Config(format!("column {name}: {cell:?} is not a number")))
                }
            })
            .collect()
    }
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
        writeln!(out, "{}", padded.join("  ").trim_end()).unwrap();
    };
    line(header, &mut out);
    for r in rows {
        line(r, &mut out);
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_else(|| "-".into())
}

fn pm(x: Option<(f64, f64)>) -> String {
    x.map(|(m, s)| format!("{} ± {}", fmt_sig6(m), fmt_sig6(s)))
        .unwrap_or_else(|| "-".into())
}

fn summarize_rounds(t: &CsvTable) -> Result<String> {
    let metrics: Vec<String> = t
        .header
        .iter()
        .filter(|h| *h == "clean_acc" || h.starts_with("asr_"))
        .cloned()
        .collect();
    let tail = 10.min(t.rows.len());
    let header = ["metric", "final", "max", "argmax_t", "mean_last_10"].map(String::from);
    let rounds = t.column("t")?;
    let mut rows = Vec::new();
    for m in metrics {
        let col = t.column(&m)?;
        let last = col.last().copied().flatten();
        let best = col.iter().zip(&rounds).filter_map(|(v, r)| v.map(|v| (v, *r))).fold(
            None,
            |acc: Option<(f64, Option<f64>)>, (v, r)| match acc {
                Some((b, _)) if b >= v => acc,
                _ => Some((v, r)),
            },
        );
        let recent: Vec<f64> = col[col.len() - tail..].iter().flatten().copied().collect();
        rows.push(vec![
            m,
            opt(last),
            opt(best.map(|b| b.0)),
            opt(best.and_then(|b| b.1)),
            opt(mean_stderr(&recent).map(|p| p.0)),
        ]);
    }
    Ok(format!("{} rounds\n{}", t.rows.len(), render(&header, &rows)))
}

fn summarize_sweep(t: &CsvTable) -> Result<String> {
    let key = t.header[0].clone();
    let status = t.index("status").expect("checked by caller");
    let mut values: Vec<String> = Vec::new();
    for r in &t.rows {
        if !values.contains(&r[0]) {
            values.push(r[0].clone());
        }
    }
    let metrics = ["clean_acc", "asr_global", "asr_local_mean"];
    let cols: Vec<Vec<Option<f64>>> = metrics.iter().map(|m| t.column(m)).collect::<Result<_>>()?;
    let mut header = vec![key, "ok".to_string(), "failed".to_string()];
    header.extend(metrics.iter().map(|m| format!("{m} (mean ± se)")));
    let mut rows = Vec::new();
    for v in values {
        let idx: Vec<usize> = (0..t.rows.len()).filter(|&i| t.rows[i][0] == v).collect();
        let ok: Vec<usize> = idx.iter().copied().filter(|&i| t.rows[i][status] == "ok").collect();
        let mut row = vec![v, ok.len().to_string(), (idx.len() - ok.len()).to_string()];
        for col in &cols {
            let xs: Vec<f64> = ok.iter().filter_map(|&i| col[i]).collect();
            row.push(pm(mean_stderr(&xs)));
        }
        rows.push(row);
    }
    Ok(render(&header, &rows))
}

/// Text summary of a rounds, sweep or aggregate CSV written by this crate.
pub fn summarize_csv(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let t = CsvTable::read(path)?;
    let body = if t.header.first().map(String::as_str) == Some("t") {
        summarize_rounds(&t)?
    } else if t.index("status").is_some() {
        summarize_sweep(&t)?
    } else {
        render(&t.header, &t.rows)
    };
    Ok(format!("== {}\n{body}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_summary_finds_peak() {
        let t = CsvTable::parse("t,clean_acc,asr_global\n1,0.5,0.1\n2,0.6,0.4\n3,0.7,\n", "x.csv").unwrap();
        let s = summarize_rounds(&t).unwrap();
        assert!(s.starts_with("3 rounds"));
        let asr = s.lines().find(|l| l.trim_start().starts_with("asr_global")).unwrap();
        let cells: Vec<&str> = asr.split_whitespace().collect();
        assert_eq!(cells, ["asr_global", "-", "0.4", "2", "0.25"]);
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let err = CsvTable::parse("a,b\n1,2\n3\n", "r.csv").unwrap_err();
        assert!(err.to_string().contains("r.csv:3"), "{err}");
    }

    #[test]
    fn sweep_summary_counts_failures() {
        let text = "gamma,replication,seed,status,clean_acc,asr_global,asr_local_mean,wall_s,error\n\
                    0.1,0,0,ok,0.5,0.2,0.1,1,\n0.1,1,1,failed,,,,,boom\n0.2,0,0,ok,0.4,0.6,0.3,1,\n";
        let s = summarize_sweep(&CsvTable::parse(text, "s.csv").unwrap()).unwrap();
        let first = s.lines().nth(1).unwrap();
        assert!(first.contains("0.1") && first.contains("0.5 ± 0"), "{s}");
        assert!(first.split_whitespace().nth(2) == Some("1"), "{s}");
    }
}
