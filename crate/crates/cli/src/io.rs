//! Dataset and artifact file formats.
//!
//! CSV files carry full-precision decimal floats (17 significant digits) so
//! simulate -> fit round trips are bit-exact. Every JSON artifact embeds the
//! resolved configuration and a format version; readers reject unknown major
//! versions.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};
use ssflrd_core::{
    make_irregular, make_lattice, Dataset, FunctionalCurve, Grid, LatticeDesign,
};

use crate::config::FORMAT_VERSION;
use crate::errors::{CliError, CliResult};

/// Full-precision decimal encoding of an f64 (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(path: &Path, lineno: usize, field: &str, raw: &str) -> CliResult<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{}:{}: invalid number in column {field}: {raw:?}",
            path.display(),
            lineno
        ))
    })
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(&format!("creating {}", parent.display()), e))?;
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::io(&format!("creating {}", path.display()), e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Lattice site ids encode the multi-index as `i1-i2-...`.
pub fn encode_site_id(index: &[usize]) -> String {
    index
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn decode_site_id(id: &str) -> Option<Vec<usize>> {
    let parts: Vec<&str> = id.split('-').collect();
    let mut out = Vec::with_capacity(parts.len());
    for part in parts {
        match part.parse::<usize>() {
            Ok(v) if v >= 1 => out.push(v),
            _ => return None,
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// curves.csv / responses.csv
// ---------------------------------------------------------------------------

pub struct CurveRow {
    pub site_id: String,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
    pub deriv: Option<Vec<f64>>,
}

/// Write curves.csv: header `site_id,c1..cd,t_1..t_p,d_1..d_p`, one row per
/// site in design order, derivatives included.
pub fn write_curves(
    path: &Path,
    design: &LatticeDesign,
    curves: &[FunctionalCurve],
) -> CliResult<()> {
    let d = design.dim();
    let p = curves.first().map_or(0, |c| c.grid().len());
    let mut out = String::new();
    out.push_str("site_id");
    for k in 1..=d {
        out.push_str(&format!(",c{k}"));
    }
    for j in 1..=p {
        out.push_str(&format!(",t_{j}"));
    }
    for j in 1..=p {
        out.push_str(&format!(",d_{j}"));
    }
    out.push('\n');
    for (l, curve) in curves.iter().enumerate() {
        out.push_str(&encode_site_id(&design.sites()[l]));
        for &c in &design.coords()[l] {
            out.push(',');
            out.push_str(&fmt_f64(c));
        }
        for &v in curve.values().iter() {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        for &v in curve.deriv().iter() {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read curves.csv. Returns the rows plus the inferred (d, p).
pub fn read_curves(path: &Path) -> CliResult<(Vec<CurveRow>, usize, usize)> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(CliError::Data(format!("{}: empty file", path.display())));
    }
    let header: Vec<&str> = lines[0].split(',').collect();
    if header.first() != Some(&"site_id") {
        return Err(CliError::Data(format!(
            "{}:1: header must start with site_id",
            path.display()
        )));
    }
    let d = header.iter().skip(1).take_while(|h| h.starts_with('c')).count();
    let p = header.iter().filter(|h| h.starts_with("t_")).count();
    let has_deriv = header.iter().any(|h| h.starts_with("d_"));
    let expected = 1 + d + p + if has_deriv { p } else { 0 };
    if p < 3 {
        return Err(CliError::Data(format!(
            "{}:1: need at least 3 sample columns t_1..t_p, found {p}",
            path.display()
        )));
    }
    if header.len() != expected {
        return Err(CliError::Data(format!(
            "{}:1: expected {expected} columns, found {}",
            path.display(),
            header.len()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(CliError::Data(format!(
                "{}:{}: expected {expected} fields, found {}",
                path.display(),
                lineno,
                fields.len()
            )));
        }
        let mut coords = Vec::with_capacity(d);
        for k in 0..d {
            coords.push(parse_f64(path, lineno, &format!("c{}", k + 1), fields[1 + k])?);
        }
        let mut values = Vec::with_capacity(p);
        for j in 0..p {
            values.push(parse_f64(path, lineno, &format!("t_{}", j + 1), fields[1 + d + j])?);
        }
        let deriv = if has_deriv {
            let mut dv = Vec::with_capacity(p);
            for j in 0..p {
                dv.push(parse_f64(path, lineno, &format!("d_{}", j + 1), fields[1 + d + p + j])?);
            }
            Some(dv)
        } else {
            None
        };
        rows.push(CurveRow {
            site_id: fields[0].to_string(),
            coords,
            values,
            deriv,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok((rows, d, p))
}

pub fn write_responses(path: &Path, design: &LatticeDesign, responses: &[f64]) -> CliResult<()> {
    let mut out = String::from("site_id,y\n");
    for (l, &y) in responses.iter().enumerate() {
        out.push_str(&encode_site_id(&design.sites()[l]));
        out.push(',');
        out.push_str(&fmt_f64(y));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_responses(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let lines = read_lines(path)?;
    if lines.first().map(String::as_str) != Some("site_id,y") {
        return Err(CliError::Data(format!(
            "{}:1: expected header `site_id,y`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (id, y) = line.split_once(',').ok_or_else(|| {
            CliError::Data(format!("{}:{}: expected `site_id,y`", path.display(), lineno))
        })?;
        out.push((id.to_string(), parse_f64(path, lineno, "y", y)?));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

/// Join curves and responses by site id and rebuild the design.
///
/// When every id decodes as a multi-index and the ids cover the full box
/// {1..n_1} x ... x {1..n_d}, the result is that lattice in lexicographic
/// order; otherwise the sites are irregular, keeping the curve-file order
/// and its coordinate columns.
pub fn assemble_dataset(
    curves_path: &Path,
    responses_path: &Path,
) -> CliResult<(Dataset, Vec<String>)> {
    let (rows, d, p) = read_curves(curves_path)?;
    let responses = read_responses(responses_path)?;
    let mut y_by_id: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, y) in &responses {
        if y_by_id.insert(id.as_str(), *y).is_some() {
            return Err(CliError::Data(format!("duplicate site id {id:?} in responses")));
        }
    }

    let grid = Grid::new(p).map_err(|e| CliError::Data(e.to_string()))?;
    let make_curve = |row: &CurveRow| -> CliResult<FunctionalCurve> {
        match &row.deriv {
            Some(dv) => FunctionalCurve::new(grid.clone(), row.values.clone(), dv.clone()),
            None => FunctionalCurve::from_values(grid.clone(), row.values.clone()),
        }
        .map_err(|e| CliError::Data(format!("site {}: {e}", row.site_id)))
    };

    // lattice detection
    let decoded: Option<Vec<Vec<usize>>> = rows
        .iter()
        .map(|r| decode_site_id(&r.site_id).filter(|ix| ix.len() == d.max(1)))
        .collect();
    let lattice_dims = decoded.as_ref().and_then(|ids| {
        let dd = ids[0].len();
        let mut dims = vec![0usize; dd];
        for ix in ids {
            for (k, &c) in ix.iter().enumerate() {
                dims[k] = dims[k].max(c);
            }
        }
        let count: usize = dims.iter().product();
        if count == ids.len() {
            let mut seen: Vec<Vec<usize>> = ids.clone();
            seen.sort();
            seen.dedup();
            if seen.len() == count {
                return Some(dims);
            }
        }
        None
    });

    match (lattice_dims, decoded) {
        (Some(dims), Some(_)) => {
            let design = make_lattice(&dims).map_err(|e| CliError::Data(e.to_string()))?;
            let mut by_id: BTreeMap<String, &CurveRow> = BTreeMap::new();
            for row in &rows {
                by_id.insert(row.site_id.clone(), row);
            }
            let mut curves = Vec::with_capacity(rows.len());
            let mut ys = Vec::with_capacity(rows.len());
            let mut ids = Vec::with_capacity(rows.len());
            for site in design.sites() {
                let id = encode_site_id(site);
                let row = by_id.get(&id).ok_or_else(|| {
                    CliError::Data(format!("lattice site {id} missing from curves file"))
                })?;
                let y = y_by_id
                    .get(id.as_str())
                    .ok_or_else(|| CliError::Data(format!("no response for site {id}")))?;
                curves.push(make_curve(row)?);
                ys.push(*y);
                ids.push(id);
            }
            let data = Dataset::new(design, curves, ys).map_err(|e| CliError::Data(e.to_string()))?;
            Ok((data, ids))
        }
        _ => {
            if d == 0 {
                return Err(CliError::Data(
                    "irregular sites need coordinate columns c1..cd".into(),
                ));
            }
            let coords: Vec<Vec<f64>> = rows.iter().map(|r| r.coords.clone()).collect();
            let design = make_irregular(coords).map_err(|e| CliError::Data(e.to_string()))?;
            let mut curves = Vec::with_capacity(rows.len());
            let mut ys = Vec::with_capacity(rows.len());
            let mut ids = Vec::with_capacity(rows.len());
            for row in &rows {
                let y = y_by_id.get(row.site_id.as_str()).ok_or_else(|| {
                    CliError::Data(format!("no response for site {}", row.site_id))
                })?;
                curves.push(make_curve(row)?);
                ys.push(*y);
                ids.push(row.site_id.clone());
            }
            let data = Dataset::new(design, curves, ys).map_err(|e| CliError::Data(e.to_string()))?;
            Ok((data, ids))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON artifacts
// ---------------------------------------------------------------------------

fn config_value(config: &BTreeMap<String, String>) -> Value {
    let mut m = Map::new();
    for (k, v) in config {
        m.insert(k.clone(), Value::String(v.clone()));
    }
    Value::Object(m)
}

fn vec_value(v: &[f64]) -> Value {
    Value::Array(
        v.iter()
            .map(|&x| {
                if x.is_finite() {
                    json!(x)
                } else {
                    Value::Null
                }
            })
            .collect(),
    )
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid JSON: {e}", path.display())))?;
    check_format_version(path, &value)?;
    Ok(value)
}

/// Readers accept any minor revision of the current major format version.
fn check_format_version(path: &Path, value: &Value) -> CliResult<()> {
    let version = value
        .get("format_version")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Data(format!("{}: missing format_version", path.display())))?;
    let major = version.split('.').next().unwrap_or("");
    let current_major = FORMAT_VERSION.split('.').next().unwrap_or("");
    if major != current_major {
        return Err(CliError::Data(format!(
            "{}: unsupported format version {version} (supported major: {current_major})",
            path.display()
        )));
    }
    Ok(())
}

pub fn manifest_value(command: &str, config: &BTreeMap<String, String>) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": config_value(config),
    })
}

pub fn truth_value(
    config: &BTreeMap<String, String>,
    truth: &ssflrd_core::ScenarioTruth,
) -> Value {
    let phi_vals: Vec<f64> = truth.phi.values().iter().copied().collect();
    let phi_deriv: Vec<f64> = truth.phi.deriv().iter().copied().collect();
    let gamma_vals: Vec<f64> = truth.gamma.values().iter().copied().collect();
    let gamma_deriv: Vec<f64> = truth.gamma.deriv().iter().copied().collect();
    json!({
        "format_version": FORMAT_VERSION,
        "config": config_value(config),
        "phi": vec_value(&phi_vals),
        "phi_deriv": vec_value(&phi_deriv),
        "gamma": vec_value(&gamma_vals),
        "gamma_deriv": vec_value(&gamma_deriv),
        "r_values": vec_value(&truth.r_values),
        "eps": vec_value(&truth.eps),
    })
}

pub fn fit_value(
    config: &BTreeMap<String, String>,
    model: &str,
    fit: &ssflrd_core::SsflrdFit,
    site_ids: &[String],
) -> Value {
    let phi = &fit.coeffs.phi_hat;
    let gamma = &fit.coeffs.gamma_hat;
    let design = if fit.design.is_irregular() {
        json!({
            "type": "irregular",
            "coords": fit.design.coords().iter().map(|c| vec_value(c)).collect::<Vec<_>>(),
        })
    } else {
        json!({
            "type": "lattice",
            "dims": fit.design.dims(),
        })
    };
    let cvmsep_scores: Vec<Value> = fit
        .reg_selection
        .scores
        .iter()
        .map(|&((psi, w), s)| {
            json!({
                "psi": psi,
                "w": w,
                "score": if s.is_finite() { json!(s) } else { Value::Null },
            })
        })
        .collect();
    let mut root = Map::new();
    root.insert("format_version".into(), json!(FORMAT_VERSION));
    root.insert("config".into(), config_value(config));
    root.insert("model".into(), json!(model));
    root.insert("p".into(), json!(phi.grid().len()));
    root.insert("design".into(), design);
    root.insert("site_ids".into(), json!(site_ids));
    root.insert("psi".into(), json!(fit.coeffs.params.psi));
    root.insert("w".into(), json!(fit.coeffs.params.w));
    root.insert(
        "phi_hat".into(),
        vec_value(&phi.values().iter().copied().collect::<Vec<f64>>()),
    );
    root.insert(
        "phi_hat_deriv".into(),
        vec_value(&phi.deriv().iter().copied().collect::<Vec<f64>>()),
    );
    root.insert(
        "gamma_hat".into(),
        vec_value(&gamma.values().iter().copied().collect::<Vec<f64>>()),
    );
    root.insert(
        "gamma_hat_deriv".into(),
        vec_value(&gamma.deriv().iter().copied().collect::<Vec<f64>>()),
    );
    root.insert("residuals".into(), vec_value(&fit.residuals));
    root.insert("cvmsep_scores".into(), Value::Array(cvmsep_scores));
    if let Some(sm) = &fit.smoother {
        root.insert("h".into(), json!(sm.h));
        let gcv_scores: Vec<Value> = fit
            .bw_selection
            .as_ref()
            .map(|sel| {
                sel.scores
                    .iter()
                    .map(|&(h, s)| {
                        json!({
                            "h": h,
                            "score": if s.is_finite() { json!(s) } else { Value::Null },
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        root.insert("gcv_scores".into(), Value::Array(gcv_scores));
    }
    Value::Object(root)
}

// ---------------------------------------------------------------------------
// predictions.csv / table1.csv
// ---------------------------------------------------------------------------

pub fn write_predictions(
    path: &Path,
    dim: usize,
    rows: &[(String, ssflrd_core::Prediction)],
) -> CliResult<()> {
    let mut out = String::from("site_id");
    for k in 1..=dim {
        out.push_str(&format!(",c{k}"));
    }
    out.push_str(",y_hat,linear_h,linear_g,spatial\n");
    for (id, pred) in rows {
        out.push_str(id);
        for &c in &pred.coords {
            out.push(',');
            out.push_str(&fmt_f64(c));
        }
        for v in [pred.y_hat, pred.linear_h, pred.linear_g, pred.spatial] {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn write_table1(path: &Path, table: &ssflrd_core::BenchmarkTable) -> CliResult<()> {
    let mut out = String::from("n2,a,metric,mean,sd,replications,failures\n");
    for c in &table.cells {
        for (metric, mean, sd) in [
            ("mse1", c.mse1_mean, c.mse1_sd),
            ("mse2", c.mse2_mean, c.mse2_sd),
        ] {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.n * c.n,
                c.a,
                metric,
                fmt_f64(mean),
                fmt_f64(sd),
                c.replications,
                c.failures
            ));
        }
    }
    write_file(path, &out)
}

pub fn write_cell_series(dir: &Path, cell: &ssflrd_core::BenchmarkCell) -> CliResult<()> {
    let mut out = String::from("replication,mse1,mse2\n");
    for (i, (m1, m2)) in cell.per_replication.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, fmt_f64(*m1), fmt_f64(*m2)));
    }
    write_file(&dir.join(format!("cell_n{}_a{}.csv", cell.n, cell.a)), &out)
}
