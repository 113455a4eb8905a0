//! Diagnostics and field-snapshot serialization.
//!
//! Everything is written with 17 significant digits so conservation defects
//! at the 1e-12 level survive a round trip through disk, and every format has
//! a matching reader used by the round-trip tests.

use std::fmt::Write as _;
use std::path::Path;

use thermophase::diagnostics::DiagnosticsRecord;
use thermophase::fem::FemSpace;
use thermophase::scheme::State;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    std::fs::write(path, contents).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, OutputError> {
    std::fs::read_to_string(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn bad(path: &Path, reason: impl Into<String>) -> OutputError {
    OutputError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub const DIAGNOSTICS_HEADER: &str =
    "t,mass,energy,entropy,dissipation,numdiss,newton_iters,residual";

/// Writes one CSV row per time step with the conservation and entropy
/// quantities of [`DiagnosticsRecord`].
pub fn write_diagnostics(records: &[DiagnosticsRecord], path: &Path) -> Result<(), OutputError> {
    let mut out = String::with_capacity(64 + 160 * records.len());
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.t,
            r.total_mass,
            r.total_internal_energy,
            r.total_entropy,
            r.dissipation_rate,
            r.numerical_dissipation,
            r.newton_iters,
            r.final_residual
        )
        .expect("writing to a String cannot fail");
    }
    write_file(path, &out)
}

/// Reads a diagnostics CSV produced by [`write_diagnostics`].
pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>, OutputError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == DIAGNOSTICS_HEADER => {}
        other => return Err(bad(path, format!("bad header {other:?}"))),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(path, format!("row {} has {} fields", i + 2, fields.len())));
        }
        let num = |k: usize| -> Result<f64, OutputError> {
            fields[k]
                .parse()
                .map_err(|e| bad(path, format!("row {} field {k}: {e}", i + 2)))
        };
        records.push(DiagnosticsRecord {
            t: num(0)?,
            total_mass: num(1)?,
            total_internal_energy: num(2)?,
            total_entropy: num(3)?,
            dissipation_rate: num(4)?,
            numerical_dissipation: num(5)?,
            newton_iters: fields[6]
                .parse()
                .map_err(|e| bad(path, format!("row {} field 6: {e}", i + 2)))?,
            final_residual: num(7)?,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    GridCsv,
    VtkLegacy,
}

impl std::str::FromStr for SnapshotFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "grid-csv" => Ok(SnapshotFormat::GridCsv),
            "vtk" | "vtk-legacy" => Ok(SnapshotFormat::VtkLegacy),
            other => Err(format!("unknown snapshot format `{other}` (grid-csv | vtk)")),
        }
    }
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::GridCsv => "csv",
            SnapshotFormat::VtkLegacy => "vtk",
        }
    }
}

const SNAPSHOT_FIELDS: [&str; 6] = ["rho", "theta", "eta", "mu_rho", "mu_eta", "grain"];

fn field_columns(state: &State) -> [Vec<f64>; 6] {
    let grain: Vec<f64> = state
        .rho
        .coeffs
        .iter()
        .zip(&state.eta.coeffs)
        .map(|(r, e)| r * (2.0 * e - 1.0))
        .collect();
    [
        state.rho.coeffs.clone(),
        state.theta.coeffs.clone(),
        state.eta.coeffs.clone(),
        state.mu_rho.coeffs.clone(),
        state.mu_eta.coeffs.clone(),
        grain,
    ]
}

/// Writes the five fields plus the grain marker ρ(2η−1) at every mesh node,
/// in lattice order.
pub fn write_snapshot(
    space: &FemSpace,
    state: &State,
    path: &Path,
    format: SnapshotFormat,
) -> Result<(), OutputError> {
    let nodes = &space.mesh.nodes;
    let cols = field_columns(state);
    let mut out = String::new();
    match format {
        SnapshotFormat::GridCsv => {
            out.push_str("x,y,rho,theta,eta,mu_rho,mu_eta,grain\n");
            for (i, node) in nodes.iter().enumerate() {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    node[0], node[1], cols[0][i], cols[1][i], cols[2][i], cols[3][i], cols[4][i], cols[5][i]
                )
                .expect("writing to a String cannot fail");
            }
        }
        SnapshotFormat::VtkLegacy => {
            let n = space.mesh.n;
            out.push_str("# vtk DataFile Version 3.0\n");
            writeln!(out, "thermophase fields at t = {:.16e}", state.t).unwrap();
            out.push_str("ASCII\nDATASET STRUCTURED_GRID\n");
            writeln!(out, "DIMENSIONS {n} {n} 1").unwrap();
            writeln!(out, "POINTS {} double", n * n).unwrap();
            for node in nodes {
                writeln!(out, "{:.16e} {:.16e} 0.0", node[0], node[1]).unwrap();
            }
            writeln!(out, "POINT_DATA {}", n * n).unwrap();
            for (name, col) in SNAPSHOT_FIELDS.iter().zip(&cols) {
                writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
                for v in col {
                    writeln!(out, "{v:.16e}").unwrap();
                }
            }
        }
    }
    write_file(path, &out)
}

/// A snapshot read back from disk: point coordinates plus named scalar
/// columns in lattice order.
#[derive(Debug, Clone)]
pub struct GridSnapshot {
    pub points: Vec<[f64; 2]>,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl GridSnapshot {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|(f, _)| f == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Reads a grid CSV written by [`write_snapshot`].
pub fn read_grid_csv(path: &Path) -> Result<GridSnapshot, OutputError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(path, "empty file"))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.first() != Some(&"x") || names.get(1) != Some(&"y") {
        return Err(bad(path, "header must start with x,y"));
    }
    let mut points = Vec::new();
    let mut fields: Vec<(String, Vec<f64>)> =
        names[2..].iter().map(|n| (n.to_string(), Vec::new())).collect();
    for (i, line) in lines.enumerate() {
        let vals: Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        let vals = vals.map_err(|e| bad(path, format!("row {}: {e}", i + 2)))?;
        if vals.len() != names.len() {
            return Err(bad(path, format!("row {} has {} fields", i + 2, vals.len())));
        }
        points.push([vals[0], vals[1]]);
        for (col, v) in fields.iter_mut().zip(&vals[2..]) {
            col.1.push(*v);
        }
    }
    Ok(GridSnapshot { points, fields })
}

/// Independent reader for legacy ASCII `STRUCTURED_GRID` files; tokenizes the
/// whole file rather than mirroring the writer's line layout.
pub fn read_vtk_legacy(path: &Path) -> Result<GridSnapshot, OutputError> {
    let text = read_file(path)?;
    let mut lines = text.lines().peekable();
    for expect in ["# vtk DataFile", "", "ASCII", "DATASET STRUCTURED_GRID"] {
        let line = lines.next().ok_or_else(|| bad(path, "truncated preamble"))?;
        if !expect.is_empty() && !line.starts_with(expect) {
            return Err(bad(path, format!("expected `{expect}`, found `{line}`")));
        }
    }
    let tokens: Vec<&str> = lines.flat_map(str::split_whitespace).collect();
    let mut pos = 0usize;
    let mut next = |pos: &mut usize| -> Option<&str> {
        let t = tokens.get(*pos).copied();
        *pos += 1;
        t
    };
    let expect_tok = |pos: &mut usize, want: &str| -> Result<(), OutputError> {
        match tokens.get(*pos).copied() {
            Some(t) if t == want => {
                *pos += 1;
                Ok(())
            }
            other => Err(bad(path, format!("expected `{want}`, found {other:?}"))),
        }
    };
    let parse_tok = |pos: &mut usize, what: &str| -> Result<f64, OutputError> {
        let t = tokens
            .get(*pos)
            .copied()
            .ok_or_else(|| bad(path, format!("truncated {what}")))?;
        *pos += 1;
        t.parse()
            .map_err(|e| bad(path, format!("bad {what} token `{t}`: {e}")))
    };
    expect_tok(&mut pos, "DIMENSIONS")?;
    let mut dim = [0usize; 3];
    for d in &mut dim {
        *d = parse_tok(&mut pos, "DIMENSIONS")? as usize;
    }
    let npoints = dim[0] * dim[1] * dim[2];
    expect_tok(&mut pos, "POINTS")?;
    let count = parse_tok(&mut pos, "POINTS count")? as usize;
    if count != npoints {
        return Err(bad(path, format!("POINTS count {count} vs dims {npoints}")));
    }
    next(&mut pos); // value type
    let mut points = Vec::with_capacity(npoints);
    for _ in 0..npoints {
        let x = parse_tok(&mut pos, "POINTS")?;
        let y = parse_tok(&mut pos, "POINTS")?;
        parse_tok(&mut pos, "POINTS")?;
        points.push([x, y]);
    }
    expect_tok(&mut pos, "POINT_DATA")?;
    next(&mut pos);
    let mut fields = Vec::new();
    while let Some(tok) = next(&mut pos) {
        if tok != "SCALARS" {
            return Err(bad(path, format!("expected SCALARS, found `{tok}`")));
        }
        let name = next(&mut pos)
            .ok_or_else(|| bad(path, "SCALARS without a name"))?
            .to_string();
        next(&mut pos); // value type
        next(&mut pos); // component count
        expect_tok(&mut pos, "LOOKUP_TABLE")?;
        next(&mut pos); // table name
        let mut col = Vec::with_capacity(npoints);
        for _ in 0..npoints {
            col.push(parse_tok(&mut pos, &format!("SCALARS `{name}`"))?);
        }
        fields.push((name, col));
    }
    Ok(GridSnapshot { points, fields })
}
