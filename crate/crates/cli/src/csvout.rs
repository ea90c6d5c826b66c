//! CSV emission and parsing.
//!
//! The results table is the experiment's contract: exact header
//! `method,epsilon,seed,excess_mse,zero_one_loss,dist_to_ustar,wall_time_ms,clip_rate`,
//! RFC-4180 quoting, `NA` for cells a method does not produce, `inf` for the
//! ε of non-private rows outside a sweep. Per-client dataset dumps
//! (`x_1..x_d,y`) live here too.

use std::io::{self, Write};
use std::path::Path;

use privrep_core::mat::Mat;
use privrep_core::synth::ClientDataset;

use crate::runner::{ExperimentResult, ResultRow};

pub const RESULT_HEADER: &str =
    "method,epsilon,seed,excess_mse,zero_one_loss,dist_to_ustar,wall_time_ms,clip_rate";

/// RFC-4180 field quoting: quote when the field contains a comma, quote, or
/// line break; double embedded quotes.
fn quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn float_field(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v}")
    }
}

fn opt_field(v: Option<f64>) -> String {
    match v {
        Some(x) => float_field(x),
        None => "NA".to_string(),
    }
}

pub fn write_results(result: &ExperimentResult, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for row in &result.rows {
        let fields = [
            quote(row.method),
            float_field(row.epsilon),
            format!("{}", row.seed),
            opt_field(row.excess_mse),
            opt_field(row.zero_one_loss),
            opt_field(row.dist_to_ustar),
            opt_field(row.wall_time_ms),
            opt_field(row.clip_rate),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn emit_csv(result: &ExperimentResult, path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_results(result, &mut buf)?;
    std::fs::write(path, buf)
}

fn parse_float(tok: &str) -> Result<f64, String> {
    match tok {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| format!("bad float `{tok}`")),
    }
}

fn parse_opt(tok: &str) -> Result<Option<f64>, String> {
    if tok == "NA" {
        Ok(None)
    } else {
        parse_float(tok).map(Some)
    }
}

/// Splits one CSV record honoring RFC-4180 quoting.
fn split_record(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes => {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            }
            '"' => in_quotes = true,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut cur));
            }
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Parses a results table emitted by [`write_results`]. Used by the
/// round-trip tests; the training path never reads it back.
pub fn parse_results(text: &str) -> Result<ExperimentResult, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULT_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let method_name = |m: &str| -> Result<&'static str, String> {
        Ok(match m {
            "private_fedrep" => "private_fedrep",
            "fedrep" => "fedrep",
            "local_gd" => "local_gd",
            "jl_classify" => "jl_classify",
            other => return Err(format!("unknown method `{other}`")),
        })
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f = split_record(line);
        if f.len() != 8 {
            return Err(format!("expected 8 fields, got {} in `{line}`", f.len()));
        }
        rows.push(ResultRow {
            method: method_name(&f[0])?,
            epsilon: parse_float(&f[1])?,
            seed: f[2].parse().map_err(|_| format!("bad seed `{}`", f[2]))?,
            excess_mse: parse_opt(&f[3])?,
            zero_one_loss: parse_opt(&f[4])?,
            dist_to_ustar: parse_opt(&f[5])?,
            wall_time_ms: parse_opt(&f[6])?,
            clip_rate: parse_opt(&f[7])?,
        });
    }
    Ok(ExperimentResult { rows })
}

/// Dumps one client's samples as `x_1,..,x_d,y` rows.
pub fn dump_client_csv(ds: &ClientDataset, path: &Path) -> io::Result<()> {
    let d = ds.features.cols();
    let mut buf = String::new();
    let header: Vec<String> = (1..=d)
        .map(|j| format!("x_{j}"))
        .chain(["y".to_string()])
        .collect();
    buf.push_str(&header.join(","));
    buf.push('\n');
    for i in 0..ds.n_samples() {
        let mut fields: Vec<String> = ds.features.row(i).iter().map(|v| float_field(*v)).collect();
        fields.push(float_field(ds.labels[i]));
        buf.push_str(&fields.join(","));
        buf.push('\n');
    }
    std::fs::write(path, buf)
}

/// Loads a client dump back into `(features, labels)`.
pub fn load_client_csv(path: &Path) -> Result<(Mat, Vec<f64>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let cols = header.split(',').count();
    if cols < 2 {
        return Err("need at least one feature column and y".to_string());
    }
    let d = cols - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f = split_record(line);
        if f.len() != cols {
            return Err(format!("expected {cols} fields, got {}", f.len()));
        }
        for tok in &f[..d] {
            features.push(parse_float(tok)?);
        }
        labels.push(parse_float(&f[d])?);
    }
    let rows = labels.len();
    Ok((Mat::from_flat(rows, d, features), labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> ExperimentResult {
        ExperimentResult {
            rows: vec![
                ResultRow {
                    method: "private_fedrep",
                    epsilon: 1.0,
                    seed: 3,
                    excess_mse: Some(0.125),
                    zero_one_loss: None,
                    dist_to_ustar: Some(0.25),
                    wall_time_ms: None,
                    clip_rate: Some(0.5),
                },
                ResultRow {
                    method: "local_gd",
                    epsilon: f64::INFINITY,
                    seed: 3,
                    excess_mse: Some(1.5),
                    zero_one_loss: None,
                    dist_to_ustar: None,
                    wall_time_ms: None,
                    clip_rate: None,
                },
            ],
        }
    }

    #[test]
    fn empty_result_is_header_only() {
        let mut buf = Vec::new();
        write_results(&ExperimentResult::default(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{RESULT_HEADER}\n")
        );
    }

    #[test]
    fn round_trip_preserves_rows() {
        let result = sample_rows();
        let mut buf = Vec::new();
        write_results(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("local_gd,inf,3,1.5,NA,NA,NA,NA"));
        let parsed = parse_results(&text).unwrap();
        assert_eq!(parsed.rows, result.rows);
    }

    #[test]
    fn quoting_escapes_commas_and_quotes() {
        assert_eq!(quote(r#"a,b"#), r#""a,b""#);
        assert_eq!(quote(r#"say "hi""#), r#""say ""hi""""#);
        assert_eq!(quote("plain"), "plain");
        let rec = split_record(r#""a,b",2,"say ""hi""""#);
        assert_eq!(rec, vec!["a,b", "2", r#"say "hi""#]);
    }
}
