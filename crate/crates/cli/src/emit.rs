//! Table serialization. Reruns of the same configuration must produce
//! byte-identical output, so ordering and float formatting are pinned here:
//! rows sort by (n, replicate) upstream, floats print at 17 significant
//! digits (enough to round-trip every f64), and the column order never
//! changes.

use std::io::Write;
use std::path::Path;

use locdep::{Error, Result};

use crate::config::OutputFormat;
use crate::experiment::Table;
use crate::fit::RateFit;

pub const CSV_HEADER: &str = "model,n,param,replicate,distance,bound,baseline,seed";

/// 17 significant digits, lowercase scientific: round-trips any f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn sanitize(message: &str) -> String {
    message.replace(['\n', '\r'], " ")
}

/// CSV with the fixed header; error records trail as `#`-prefixed comment
/// lines so the row section stays machine-readable.
pub fn to_csv(table: &Table) -> Result<String> {
    if table.rows.is_empty() && table.errors.is_empty() {
        return Err(Error::InvalidInput("empty table: nothing to emit".into()));
    }
    let mut out = String::with_capacity(64 * (table.rows.len() + 2));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.model,
            row.n,
            fmt_float(row.param),
            row.replicate,
            fmt_float(row.distance),
            fmt_float(row.bound),
            fmt_float(row.baseline),
            row.seed,
        ));
    }
    for err in &table.errors {
        out.push_str(&format!("# error n={}: {}\n", err.n, sanitize(&err.message)));
    }
    Ok(out)
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn json_float(x: f64) -> String {
    if x.is_finite() {
        fmt_float(x)
    } else {
        "null".into()
    }
}

/// JSON object with `rows`, `errors`, and (when a fit ran) `fit`. Key order
/// is fixed by construction.
pub fn to_json(table: &Table, fit: Option<&RateFit>) -> Result<String> {
    if table.rows.is_empty() && table.errors.is_empty() {
        return Err(Error::InvalidInput("empty table: nothing to emit".into()));
    }
    let mut out = String::from("{\"rows\":[");
    for (i, row) in table.rows.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "{{\"model\":{},\"n\":{},\"param\":{},\"replicate\":{},\"distance\":{},\"bound\":{},\"baseline\":{},\"seed\":{}}}",
            json_string(&row.model),
            row.n,
            json_float(row.param),
            row.replicate,
            json_float(row.distance),
            json_float(row.bound),
            json_float(row.baseline),
            row.seed,
        ));
    }
    out.push_str("],\"errors\":[");
    for (i, err) in table.errors.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "{{\"n\":{},\"message\":{}}}",
            err.n,
            json_string(&err.message)
        ));
    }
    out.push_str("],\"fit\":");
    match fit {
        None => out.push_str("null"),
        Some(f) => {
            out.push_str(&format!(
                "{{\"slope\":{},\"intercept\":{},\"r_squared\":{},\"baseline_floor\":[",
                json_float(f.slope),
                json_float(f.intercept),
                json_float(f.r_squared),
            ));
            for (i, (n, b)) in f.baseline_floor.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{{\"n\":{},\"floor\":{}}}", n, json_float(*b)));
            }
            out.push_str("],\"used\":[");
            for (i, n) in f.used.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&n.to_string());
            }
            out.push_str("],\"dropped\":[");
            for (i, n) in f.dropped.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&n.to_string());
            }
            out.push_str("]}");
        }
    }
    out.push('}');
    Ok(out)
}

/// Renders the table in the requested format and writes it to the given
/// path, or to stdout when no path is set.
pub fn write_table(
    table: &Table,
    fit: Option<&RateFit>,
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<()> {
    let rendered = match format {
        OutputFormat::Csv => to_csv(table)?,
        OutputFormat::Json => {
            let mut s = to_json(table, fit)?;
            s.push('\n');
            s
        }
    };
    match out {
        Some(path) => std::fs::write(path, rendered)?,
        None => {
            let stdout = std::io::stdout();
            stdout.lock().write_all(rendered.as_bytes())?;
        }
    }
    Ok(())
}
