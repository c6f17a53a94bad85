//! Parsing of command-line values and input files.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use jsq_core::{EventTarget, PiecewisePath};

/// `"1, 2.5"`, `"1 2.5"` or `"[1, 2.5]"`.
pub fn vector(s: &str) -> Result<Vec<f64>> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad number `{t}` in `{s}`")))
        .collect()
}

/// Accepts integers and float notation such as `1e6`.
pub fn count(s: &str) -> Result<u64> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.trim().parse().with_context(|| format!("bad count `{s}`"))?;
    if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        bail!("bad count `{s}`");
    }
    Ok(v as u64)
}

pub fn counts(s: &str) -> Result<Vec<u64>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(count).collect()
}

/// `terminal:k=1,c=1,T=1` or `max:k=1,c=1,T=1`, with a 1-based queue index.
/// Returns the target and the horizon.
pub fn event(s: &str) -> Result<(EventTarget, f64)> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("event `{s}` should look like `terminal:k=1,c=1,T=1`"))?;
    let (mut k, mut c, mut horizon) = (None, None, None);
    for part in rest.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("bad event field `{part}`"))?;
        match key.trim() {
            "k" => k = Some(value.trim().parse::<usize>()?),
            "c" => c = Some(value.trim().parse::<f64>()?),
            "T" => horizon = Some(value.trim().parse::<f64>()?),
            other => bail!("unknown event field `{other}`"),
        }
    }
    let k = k.ok_or_else(|| anyhow!("event needs k"))?;
    if k == 0 {
        bail!("queue indices start at 1");
    }
    let threshold = c.ok_or_else(|| anyhow!("event needs c"))?;
    let horizon = horizon.ok_or_else(|| anyhow!("event needs T"))?;
    let target = match kind.trim() {
        "terminal" => EventTarget::Terminal {
            queue: k - 1,
            threshold,
        },
        "max" | "running-max" => EventTarget::RunningMax {
            queue: k - 1,
            threshold,
        },
        other => bail!("unknown event kind `{other}`"),
    };
    Ok((target, horizon))
}

/// Numeric rows of a CSV file; a non-numeric first line is a header.
fn csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match cells {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(e) => bail!("{}:{}: {e}", path.display(), i + 1),
        }
    }
    if rows.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok(rows)
}

fn split_columns(rows: &[Vec<f64>], width: usize, path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width + 1 {
            bail!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                i + 1,
                r.len(),
                width + 1
            );
        }
        times.push(r[0]);
        values.push(r[1..].to_vec());
    }
    Ok((times, values))
}

/// Queue path as columns `t, q_1, …, q_K`.
pub fn path_file(path: &Path, k_count: usize) -> Result<PiecewisePath> {
    let rows = csv_rows(path)?;
    let (times, values) = split_columns(&rows, k_count, path)?;
    Ok(PiecewisePath::new(times, values)?)
}

/// Cumulative inputs as columns `t, a_1, …, a_M, b_1, …, b_K`.
pub fn inputs_file(path: &Path, m_count: usize, k_count: usize) -> Result<(PiecewisePath, PiecewisePath)> {
    let rows = csv_rows(path)?;
    let (times, values) = split_columns(&rows, m_count + k_count, path)?;
    let a = values.iter().map(|v| v[..m_count].to_vec()).collect();
    let b = values.iter().map(|v| v[m_count..].to_vec()).collect();
    Ok((
        PiecewisePath::new(times.clone(), a)?,
        PiecewisePath::new(times, b)?,
    ))
}

/// Appends `--key value` for every entry of the subcommand's table in the
/// `--config` file that is not already given on the command line.
pub fn merge_config(argv: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>> {
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    for (i, a) in strings.iter().enumerate() {
        if a == "--config" {
            config_path = strings.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(config_path) = config_path else {
        return Ok(argv);
    };
    let Some(sub) = strings.iter().skip(1).find(|a| subcommands.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&config_path).with_context(|| format!("reading config {config_path}"))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing config {config_path}"))?;
    let Some(section) = table.get(sub.as_str()) else {
        return Ok(argv);
    };
    let section = section
        .as_table()
        .ok_or_else(|| anyhow!("config entry `{sub}` must be a table"))?;
    let mut out = argv;
    for (key, value) in section {
        let flag = format!("--{key}");
        let given = strings
            .iter()
            .any(|a| a == &flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => {
                out.push(flag.into());
                out.push(s.into());
            }
            toml::Value::Integer(i) => {
                out.push(flag.into());
                out.push(i.to_string().into());
            }
            toml::Value::Float(f) => {
                out.push(flag.into());
                out.push(format!("{f:?}").into());
            }
            toml::Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(format!("{f:?}")),
                        toml::Value::String(s) => Ok(s.clone()),
                        _ => Err(anyhow!("unsupported array entry for `{key}`")),
                    })
                    .collect::<Result<_>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            _ => bail!("unsupported config value for `{key}`"),
        }
    }
    Ok(out)
}
