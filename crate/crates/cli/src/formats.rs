//! Plain-text artifact formats: mesh, observation record, dataset with its
//! metadata sidecar, network, training history, iterate trace, and objective
//! surface.
//!
//! Every floating-point number is written with 17 significant digits, which
//! round-trips any f64 exactly; regenerated artifacts are therefore
//! byte-identical whenever the producing computation is.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use elastid_core::elastic::ParameterPoint;
use elastid_core::estimator::{IterateTrace, ObjectiveSurface};
use elastid_core::geometry::{BoundaryEdge, BoundaryTag, Mesh};
use elastid_core::linalg::Vec2;
use elastid_core::network::{
    Dataset, DatasetProvenance, DenseNetwork, NormalizationStats, TrainingHistory,
};
use elastid_core::observe::{ObservationVector, OBSERVATION_LEN};

use crate::{CliError, Result};

/// Format version stamped into network files.
pub const NETWORK_FORMAT_VERSION: &str = "elastid-net-v1";

/// Full-precision decimal: 17 significant digits round-trip every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(token: &str, path: &Path, line: usize) -> Result<f64> {
    token.trim().parse().map_err(|_| {
        CliError::format(path, format!("line {line}: `{token}` is not a number"))
    })
}

fn parse_usize(token: &str, path: &Path, line: usize) -> Result<usize> {
    token.trim().parse().map_err(|_| {
        CliError::format(path, format!("line {line}: `{token}` is not an index"))
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------------------
// Mesh

fn tag_name(tag: BoundaryTag) -> &'static str {
    match tag {
        BoundaryTag::Left => "left",
        BoundaryTag::Right => "right",
        BoundaryTag::TopBottom => "top_bottom",
    }
}

fn tag_from(name: &str, path: &Path, line: usize) -> Result<BoundaryTag> {
    match name {
        "left" => Ok(BoundaryTag::Left),
        "right" => Ok(BoundaryTag::Right),
        "top_bottom" => Ok(BoundaryTag::TopBottom),
        other => Err(CliError::format(path, format!("line {line}: unknown boundary tag `{other}`"))),
    }
}

/// Header `vertices N triangles M boundary K`, then one line per vertex
/// (`x y`), per triangle (three vertex indices), and per boundary edge
/// (two vertex indices, adjacent triangle, tag).
pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "vertices {} triangles {} boundary {}",
        mesh.vertices().len(),
        mesh.triangles().len(),
        mesh.boundary_edges().len()
    );
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {}", fmt_f64(v.x), fmt_f64(v.y));
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    for e in mesh.boundary_edges() {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            e.vertices[0],
            e.vertices[1],
            e.triangle,
            tag_name(e.tag)
        );
    }
    write_text(path, &out)
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::format(path, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let counts = match fields.as_slice() {
        ["vertices", n, "triangles", m, "boundary", k] => {
            (parse_usize(n, path, 1)?, parse_usize(m, path, 1)?, parse_usize(k, path, 1)?)
        }
        _ => return Err(CliError::format(path, "header must be `vertices N triangles M boundary K`")),
    };
    fn expect<'a>(
        path: &Path,
        got: Option<(usize, &'a str)>,
        what: &str,
    ) -> Result<(usize, &'a str)> {
        got.map(|(i, l)| (i + 1, l))
            .ok_or_else(|| CliError::format(path, format!("file ends before all {what} lines")))
    }

    let mut vertices = Vec::with_capacity(counts.0);
    for _ in 0..counts.0 {
        let (ln, line) = expect(path, lines.next(), "vertex")?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 2 {
            return Err(CliError::format(path, format!("line {ln}: vertex needs `x y`")));
        }
        vertices.push(Vec2::new(parse_f64(t[0], path, ln)?, parse_f64(t[1], path, ln)?));
    }
    let mut triangles = Vec::with_capacity(counts.1);
    for _ in 0..counts.1 {
        let (ln, line) = expect(path, lines.next(), "triangle")?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(CliError::format(path, format!("line {ln}: triangle needs 3 indices")));
        }
        triangles.push([
            parse_usize(t[0], path, ln)?,
            parse_usize(t[1], path, ln)?,
            parse_usize(t[2], path, ln)?,
        ]);
    }
    let mut boundary = Vec::with_capacity(counts.2);
    for _ in 0..counts.2 {
        let (ln, line) = expect(path, lines.next(), "boundary")?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(CliError::format(
                path,
                format!("line {ln}: boundary edge needs `v0 v1 triangle tag`"),
            ));
        }
        boundary.push(BoundaryEdge {
            vertices: [parse_usize(t[0], path, ln)?, parse_usize(t[1], path, ln)?],
            triangle: parse_usize(t[2], path, ln)?,
            tag: tag_from(t[3], path, ln)?,
        });
    }
    Mesh::from_parts(vertices, triangles, boundary)
        .map_err(|e| CliError::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Observation record

/// One-row CSV carrying a single observation record under the canonical
/// 50-column header.
pub fn write_observation(path: &Path, record: &ObservationVector) -> Result<()> {
    let mut out = ObservationVector::column_names().join(",");
    out.push('\n');
    let row: Vec<String> = record.as_slice().iter().copied().map(fmt_f64).collect();
    out.push_str(&row.join(","));
    out.push('\n');
    write_text(path, &out)
}

pub fn read_observation(path: &Path) -> Result<ObservationVector> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::format(path, "empty file"))?;
    let expected = ObservationVector::column_names().join(",");
    if header != expected {
        return Err(CliError::format(path, "observation header does not match the canonical columns"));
    }
    let row = lines
        .next()
        .ok_or_else(|| CliError::format(path, "missing data row"))?;
    let mut values = Vec::with_capacity(OBSERVATION_LEN);
    for token in row.split(',') {
        values.push(parse_f64(token, path, 2)?);
    }
    ObservationVector::new(values).map_err(|e| CliError::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Dataset

/// Sidecar metadata describing how a dataset file was produced.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetMeta {
    /// "grid" for the training sweep, "random" for validation pairs.
    pub kind: String,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_young: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_poisson: Option<usize>,
    pub provenance: DatasetProvenance,
}

/// The metadata sidecar sits next to the dataset: `train.csv` →
/// `train.meta.toml`.
pub fn dataset_meta_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("meta.toml")
}

/// CSV with columns `E,nu` followed by the 50 canonical observation
/// columns; the sidecar records configuration and seed.
pub fn write_dataset(path: &Path, dataset: &Dataset, meta: Option<&DatasetMeta>) -> Result<()> {
    let mut out = String::from("E,nu,");
    out.push_str(&ObservationVector::column_names().join(","));
    out.push('\n');
    for (input, output) in dataset.inputs.iter().zip(&dataset.outputs) {
        out.push_str(&fmt_f64(input[0]));
        out.push(',');
        out.push_str(&fmt_f64(input[1]));
        for v in output {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_text(path, &out)?;
    if let Some(meta) = meta {
        let text = toml::to_string(meta)
            .map_err(|e| CliError::format(path, format!("metadata serialization: {e}")))?;
        write_text(&dataset_meta_path(path), &text)?;
    }
    Ok(())
}

/// Reads a dataset and, when the sidecar exists, its provenance.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CliError::format(path, "empty file"))?;
    let expected = format!("E,nu,{}", ObservationVector::column_names().join(","));
    if header != expected {
        return Err(CliError::format(path, "dataset header does not match the canonical columns"));
    }
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != 2 + OBSERVATION_LEN {
            return Err(CliError::format(
                path,
                format!("line {ln}: expected {} fields, got {}", 2 + OBSERVATION_LEN, tokens.len()),
            ));
        }
        inputs.push([parse_f64(tokens[0], path, ln)?, parse_f64(tokens[1], path, ln)?]);
        let mut row = Vec::with_capacity(OBSERVATION_LEN);
        for t in &tokens[2..] {
            row.push(parse_f64(t, path, ln)?);
        }
        outputs.push(row);
    }
    let mut dataset =
        Dataset::new(inputs, outputs).map_err(|e| CliError::format(path, e.to_string()))?;
    let meta_path = dataset_meta_path(path);
    if meta_path.exists() {
        let meta: DatasetMeta = toml::from_str(&read_text(&meta_path)?)
            .map_err(|e| CliError::format(&meta_path, e.to_string()))?;
        dataset.provenance = Some(meta.provenance);
        dataset.validate().map_err(|e| CliError::format(path, e.to_string()))?;
    }
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Network

#[derive(serde::Serialize, serde::Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct NetworkFile {
    version: String,
    layer_sizes: Vec<usize>,
    /// One activation name per layer transition; hidden layers are
    /// softplus, the output layer is identity.
    activations: Vec<String>,
    normalization: NormalizationStats,
    layers: Vec<LayerFile>,
}

/// Single TOML document holding architecture, activations, weights and
/// normalization, stamped with [`NETWORK_FORMAT_VERSION`].
pub fn save_network(path: &Path, net: &DenseNetwork) -> Result<()> {
    net.validate().map_err(CliError::Numeric)?;
    let transitions = net.layer_sizes.len() - 1;
    let mut activations = vec![String::from("softplus"); transitions];
    if let Some(last) = activations.last_mut() {
        *last = String::from("identity");
    }
    let layers = (0..transitions)
        .map(|l| LayerFile {
            rows: net.layer_sizes[l + 1],
            cols: net.layer_sizes[l],
            weights: net.weights[l].clone(),
            biases: net.biases[l].clone(),
        })
        .collect();
    let file = NetworkFile {
        version: NETWORK_FORMAT_VERSION.into(),
        layer_sizes: net.layer_sizes.clone(),
        activations,
        normalization: net.norm.clone(),
        layers,
    };
    let text = toml::to_string(&file)
        .map_err(|e| CliError::format(path, format!("network serialization: {e}")))?;
    write_text(path, &text)
}

pub fn load_network(path: &Path) -> Result<DenseNetwork> {
    let file: NetworkFile = toml::from_str(&read_text(path)?)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    if file.version != NETWORK_FORMAT_VERSION {
        return Err(CliError::format(
            path,
            format!("unsupported version `{}` (expected {NETWORK_FORMAT_VERSION})", file.version),
        ));
    }
    let transitions = file.layer_sizes.len().saturating_sub(1);
    if file.activations.len() != transitions || file.layers.len() != transitions {
        return Err(CliError::format(path, "layer tables do not match layer_sizes"));
    }
    for (l, name) in file.activations.iter().enumerate() {
        let expected = if l + 1 == transitions { "identity" } else { "softplus" };
        if name != expected {
            return Err(CliError::format(
                path,
                format!("layer {l} activation `{name}` unsupported (expected {expected})"),
            ));
        }
    }
    for (l, layer) in file.layers.iter().enumerate() {
        if layer.rows != file.layer_sizes[l + 1] || layer.cols != file.layer_sizes[l] {
            return Err(CliError::format(path, format!("layer {l} shape disagrees with layer_sizes")));
        }
    }
    let net = DenseNetwork {
        layer_sizes: file.layer_sizes,
        weights: file.layers.iter().map(|l| l.weights.clone()).collect(),
        biases: file.layers.iter().map(|l| l.biases.clone()).collect(),
        norm: file.normalization,
    };
    net.validate().map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(net)
}

// ---------------------------------------------------------------------------
// Training history

/// Per-epoch CSV over both optimizer branches; `winner` repeats each
/// block's selected branch on every row of that block.
pub fn write_history(path: &Path, history: &TrainingHistory) -> Result<()> {
    let mut out = String::from("block,branch,epoch,learning_rate,train_loss,val_loss,winner\n");
    for block in &history.blocks {
        let winner = match block.winner {
            elastid_core::network::Branch::Sgd => "sgd",
            elastid_core::network::Branch::Adam => "adam",
        };
        for (branch, records) in [("sgd", &block.sgd), ("adam", &block.adam)] {
            for r in records {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    block.index,
                    branch,
                    r.epoch,
                    fmt_f64(r.learning_rate),
                    fmt_f64(r.train_loss),
                    fmt_f64(r.val_loss),
                    winner
                );
            }
        }
    }
    write_text(path, &out)
}

// ---------------------------------------------------------------------------
// Iterate trace

/// CSV with columns `iter,E,nu,objective,grad_norm,eta,ls_trials`.
pub fn write_trace(path: &Path, trace: &IterateTrace) -> Result<()> {
    let mut out = String::from("iter,E,nu,objective,grad_norm,eta,ls_trials\n");
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            fmt_f64(r.parameters.young),
            fmt_f64(r.parameters.poisson),
            fmt_f64(r.objective),
            fmt_f64(r.grad_norm),
            fmt_f64(r.eta),
            r.ls_trials
        );
    }
    write_text(path, &out)
}

// ---------------------------------------------------------------------------
// Objective surface

/// CSV with columns `E,nu,F_value`, rows in young-major grid order —
/// directly pivotable into a contour grid.
pub fn write_surface(path: &Path, surface: &ObjectiveSurface) -> Result<()> {
    let mut out = String::from("E,nu,F_value\n");
    for (i, e) in surface.young.iter().enumerate() {
        for (j, nu) in surface.poisson.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_f64(*e),
                fmt_f64(*nu),
                fmt_f64(surface.value(i, j))
            );
        }
    }
    write_text(path, &out)
}

/// Parse a surface CSV back into memory (used by tests and tooling).
pub fn read_surface(path: &Path) -> Result<Vec<(ParameterPoint, f64)>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CliError::format(path, "empty file"))?;
    if header != "E,nu,F_value" {
        return Err(CliError::format(path, "surface header must be `E,nu,F_value`"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != 3 {
            return Err(CliError::format(path, format!("line {ln}: expected 3 fields")));
        }
        rows.push((
            ParameterPoint {
                young: parse_f64(t[0], path, ln)?,
                poisson: parse_f64(t[1], path, ln)?,
            },
            parse_f64(t[2], path, ln)?,
        ));
    }
    Ok(rows)
}
