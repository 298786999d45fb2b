//! On-disk bundle format: one directory holding a dataset and optionally a
//! checkpoint trace.
//!
//! Layout:
//! - `meta.json`: `{"task", "num_classes"?, "horizon"?, "checkpoints", "checksum"}`
//! - `labels.csv`: header `id,label,region[,posterior_0..][,sigma][,x_0..]`
//!   with region in {0,1}; series labels join values with `;`
//! - `outputs.ndjson`: one `{"id", "t", "out"}` object per line, 0-based
//!   checkpoint index, any line order
//!
//! All reals are written with 17 significant digits so a load/save round
//! trip is bit-exact, and the writer orders examples by id and checkpoints
//! ascending so repeated saves of the same objects are byte-identical. The
//! checksum in `meta.json` is the SHA-256 of `labels.csv` followed by
//! `outputs.ndjson` and is verified on load.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numfmt::{fmt_f64, parse_f64};
use crate::trace::{Dataset, Label, LabeledExample, PredictionTrace, Task};

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    checkpoints: usize,
    checksum: String,
}

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(contents.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn format_label(label: &Label) -> String {
    match label {
        Label::Class(c) => c.to_string(),
        Label::Scalar(v) => fmt_f64(*v),
        Label::Series(s) => s.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";"),
    }
}

fn render_labels_csv(dataset: &Dataset) -> String {
    let task = dataset.task();
    let classes = match task {
        Task::Classification { classes } => classes,
        _ => 0,
    };
    let with_posterior = dataset.examples().iter().any(|e| e.true_posterior.is_some());
    let with_sigma = dataset.examples().iter().any(|e| e.noise_scale.is_some());
    let dim = dataset.feature_dim();

    let mut header = String::from("id,label,region");
    if with_posterior {
        for c in 0..classes {
            header.push_str(&format!(",posterior_{c}"));
        }
    }
    if with_sigma {
        header.push_str(",sigma");
    }
    for d in 0..dim {
        header.push_str(&format!(",x_{d}"));
    }

    let mut out = header;
    out.push('\n');
    for ex in dataset.examples() {
        out.push_str(&ex.id);
        out.push(',');
        out.push_str(&format_label(&ex.label));
        out.push(',');
        out.push_str(if ex.region_flag { "1" } else { "0" });
        if with_posterior {
            match &ex.true_posterior {
                Some(post) => {
                    for &p in post {
                        out.push(',');
                        out.push_str(&fmt_f64(p));
                    }
                }
                None => {
                    for _ in 0..classes {
                        out.push(',');
                    }
                }
            }
        }
        if with_sigma {
            out.push(',');
            if let Some(s) = ex.noise_scale {
                out.push_str(&fmt_f64(s));
            }
        }
        for &x in &ex.features {
            out.push(',');
            out.push_str(&fmt_f64(x));
        }
        out.push('\n');
    }
    out
}

fn render_outputs_ndjson(trace: &PredictionTrace) -> String {
    let mut out = String::new();
    for (idx, id) in trace.ids().iter().enumerate() {
        for t in 0..trace.checkpoints() {
            let row = trace.output(idx, t);
            let vals: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&format!(
                "{{\"id\": {}, \"t\": {t}, \"out\": [{}]}}\n",
                serde_json::to_string(id).expect("string encodes"),
                vals.join(", ")
            ));
        }
    }
    out
}

fn checksum_hex(labels_csv: &str, outputs_ndjson: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(labels_csv.as_bytes());
    hasher.update(outputs_ndjson.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write a dataset (and optional trace) as a bundle directory.
///
/// Canonical ordering: examples sorted by id, checkpoints ascending. Two
/// saves of equal objects produce byte-identical files.
pub fn save_bundle(dataset: &Dataset, trace: Option<&PredictionTrace>, dir: &Path) -> Result<()> {
    if let Some(tr) = trace {
        tr.matches_dataset(dataset)?;
        if tr.task() != dataset.task() {
            return Err(Error::invalid("bundle", "trace task does not match dataset"));
        }
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let sorted = dataset.sorted_by_id();
    let labels_csv = render_labels_csv(&sorted);
    let outputs_ndjson = match trace {
        Some(tr) => render_outputs_ndjson(&tr.sorted_by_id()),
        None => String::new(),
    };

    let (num_classes, horizon) = match dataset.task() {
        Task::Classification { classes } => (Some(classes), None),
        Task::Regression => (None, None),
        Task::Timeseries { horizon } => (None, Some(horizon)),
    };
    let meta = Meta {
        task: dataset.task().kind_name().to_string(),
        num_classes,
        horizon,
        checkpoints: trace.map_or(0, |t| t.checkpoints()),
        checksum: checksum_hex(&labels_csv, &outputs_ndjson),
    };

    write_file(&dir.join("labels.csv"), &labels_csv)?;
    if trace.is_some() {
        write_file(&dir.join("outputs.ndjson"), &outputs_ndjson)?;
    }
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta encodes");
    write_file(&dir.join("meta.json"), &format!("{meta_json}\n"))
}

fn parse_label(task: Task, text: &str, line: usize) -> Result<Label> {
    let bad = |message: String| Error::Schema {
        file: "labels.csv".into(),
        line,
        message,
    };
    match task {
        Task::Classification { .. } => {
            let c: usize = text
                .parse()
                .map_err(|_| bad(format!("class label {text:?} is not an integer")))?;
            Ok(Label::Class(c))
        }
        Task::Regression => {
            let v = parse_f64(text).ok_or_else(|| bad(format!("label {text:?} is not a finite real")))?;
            Ok(Label::Scalar(v))
        }
        Task::Timeseries { .. } => {
            let vals: Option<Vec<f64>> = text.split(';').map(parse_f64).collect();
            let vals = vals.ok_or_else(|| bad(format!("series label {text:?} has a non-real entry")))?;
            Ok(Label::Series(vals))
        }
    }
}

fn parse_labels_csv(task: Task, contents: &str) -> Result<Vec<LabeledExample>> {
    let bad = |line: usize, message: String| Error::Schema {
        file: "labels.csv".into(),
        line,
        message,
    };
    let mut lines = contents.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(1, "empty labels.csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"id") || cols.get(1) != Some(&"label") || cols.get(2) != Some(&"region") {
        return Err(bad(1, format!("header must start with id,label,region, got {header:?}")));
    }
    let posterior_cols: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("posterior_"))
        .map(|(i, _)| i)
        .collect();
    let sigma_col = cols.iter().position(|c| *c == "sigma");
    let feature_cols: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("x_"))
        .map(|(i, _)| i)
        .collect();

    let mut examples = Vec::new();
    for (lineno0, line) in lines {
        let line_no = lineno0 + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(line_no, format!("expected {} fields, got {}", cols.len(), fields.len())));
        }
        let id = fields[0].to_string();
        let label = parse_label(task, fields[1], line_no)?;
        let region_flag = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(bad(line_no, format!("region must be 0 or 1, got {other:?}"))),
        };
        let true_posterior = if posterior_cols.is_empty() || fields[posterior_cols[0]].is_empty() {
            None
        } else {
            let vals: Option<Vec<f64>> = posterior_cols.iter().map(|&i| parse_f64(fields[i])).collect();
            Some(vals.ok_or_else(|| bad(line_no, format!("bad posterior entry for {id:?}")))?)
        };
        let noise_scale = match sigma_col {
            Some(i) if !fields[i].is_empty() => {
                Some(parse_f64(fields[i]).ok_or_else(|| bad(line_no, format!("bad sigma for {id:?}")))?)
            }
            _ => None,
        };
        let features: Option<Vec<f64>> = feature_cols.iter().map(|&i| parse_f64(fields[i])).collect();
        let features = features.ok_or_else(|| bad(line_no, format!("bad feature entry for {id:?}")))?;
        examples.push(LabeledExample {
            id,
            features,
            label,
            region_flag,
            true_posterior,
            noise_scale,
        });
    }
    Ok(examples)
}

#[derive(Deserialize)]
struct OutputLine {
    id: String,
    t: usize,
    out: Vec<f64>,
}

fn parse_outputs_ndjson(
    task: Task,
    checkpoints: usize,
    dataset: &Dataset,
    contents: &str,
) -> Result<PredictionTrace> {
    use std::collections::BTreeMap;
    let mut per_id: BTreeMap<&str, Vec<Option<Vec<f64>>>> = dataset
        .examples()
        .iter()
        .map(|e| (e.id.as_str(), vec![None; checkpoints]))
        .collect();

    for (lineno0, line) in contents.lines().enumerate() {
        let line_no = lineno0 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: OutputLine = serde_json::from_str(line).map_err(|e| Error::Schema {
            file: "outputs.ndjson".into(),
            line: line_no,
            message: format!("bad record: {e}"),
        })?;
        let slot = per_id.get_mut(parsed.id.as_str()).ok_or_else(|| Error::Schema {
            file: "outputs.ndjson".into(),
            line: line_no,
            message: format!("unknown example id {:?}", parsed.id),
        })?;
        if parsed.t >= checkpoints {
            return Err(Error::Schema {
                file: "outputs.ndjson".into(),
                line: line_no,
                message: format!("checkpoint {} out of range for T={checkpoints}", parsed.t),
            });
        }
        if slot[parsed.t].is_some() {
            return Err(Error::Schema {
                file: "outputs.ndjson".into(),
                line: line_no,
                message: format!("duplicate output for ({:?}, t={})", parsed.id, parsed.t),
            });
        }
        slot[parsed.t] = Some(parsed.out);
    }

    let mut ids = Vec::with_capacity(per_id.len());
    let mut outputs = Vec::with_capacity(per_id.len());
    for (id, rows) in per_id {
        let got = rows.iter().filter(|r| r.is_some()).count();
        if got != checkpoints {
            return Err(Error::RaggedTrace {
                id: id.to_string(),
                got,
                expected: checkpoints,
            });
        }
        ids.push(id.to_string());
        outputs.push(rows.into_iter().map(|r| r.expect("checked")).collect());
    }
    PredictionTrace::new(task, ids, outputs)
}

/// Load and fully validate a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<(Dataset, Option<PredictionTrace>)> {
    let meta_text = read_file(&dir.join("meta.json"))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|source| Error::Json {
        path: dir.join("meta.json").display().to_string(),
        source,
    })?;
    let task = match meta.task.as_str() {
        "classification" => Task::Classification {
            classes: meta.num_classes.ok_or_else(|| Error::invalid("meta.json", "classification requires num_classes"))?,
        },
        "regression" => Task::Regression,
        "timeseries" => Task::Timeseries {
            horizon: meta.horizon.ok_or_else(|| Error::invalid("meta.json", "timeseries requires horizon"))?,
        },
        other => return Err(Error::invalid("meta.json", format!("unknown task {other:?}"))),
    };

    let labels_csv = read_file(&dir.join("labels.csv"))?;
    let outputs_ndjson = if meta.checkpoints > 0 {
        read_file(&dir.join("outputs.ndjson"))?
    } else {
        String::new()
    };
    if checksum_hex(&labels_csv, &outputs_ndjson) != meta.checksum {
        return Err(Error::ChecksumMismatch);
    }

    let examples = parse_labels_csv(task, &labels_csv)?;
    let dataset = Dataset::new(task, examples)?;
    let trace = if meta.checkpoints > 0 {
        Some(parse_outputs_ndjson(task, meta.checkpoints, &dataset, &outputs_ndjson)?)
    } else {
        None
    };
    Ok((dataset, trace))
}
