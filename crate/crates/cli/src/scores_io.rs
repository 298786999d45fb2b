//! Score-table CSV: `id,prediction,score,orientation` with one row per
//! example. Series predictions join entries with `;`; orientation is
//! `higher` or `lower`.

use std::path::Path;

use abstain_core::numfmt::{fmt_f64, parse_f64};
use abstain_core::{Label, Orientation, ScoreEntry, ScoreTable};
use anyhow::{bail, Context, Result};

fn format_prediction(label: &Label) -> String {
    match label {
        Label::Class(c) => c.to_string(),
        Label::Scalar(v) => fmt_f64(*v),
        Label::Series(s) => s.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";"),
    }
}

pub fn write_scores(table: &ScoreTable, path: &Path) -> Result<()> {
    let mut out = String::from("id,prediction,score,orientation\n");
    let orientation = match table.orientation {
        Orientation::HigherMoreConfident => "higher",
        Orientation::LowerMoreConfident => "lower",
    };
    let mut entries: Vec<&ScoreEntry> = table.entries().iter().collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{orientation}\n",
            e.id,
            format_prediction(&e.prediction),
            fmt_f64(e.score)
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty score file")?;
    if header != "id,prediction,score,orientation" {
        bail!("unexpected score header {header:?}");
    }
    let mut orientation = None;
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("score line {} has {} fields", lineno + 2, fields.len());
        }
        let prediction = if fields[1].contains(';') {
            let vals: Option<Vec<f64>> = fields[1].split(';').map(parse_f64).collect();
            Label::Series(vals.with_context(|| format!("bad series prediction on line {}", lineno + 2))?)
        } else if let Ok(c) = fields[1].parse::<usize>() {
            Label::Class(c)
        } else {
            Label::Scalar(parse_f64(fields[1]).with_context(|| format!("bad prediction on line {}", lineno + 2))?)
        };
        let score = parse_f64(fields[2]).with_context(|| format!("bad score on line {}", lineno + 2))?;
        let this_orientation = match fields[3] {
            "higher" => Orientation::HigherMoreConfident,
            "lower" => Orientation::LowerMoreConfident,
            other => bail!("unknown orientation {other:?} on line {}", lineno + 2),
        };
        if *orientation.get_or_insert(this_orientation) != this_orientation {
            bail!("mixed orientations in score file");
        }
        entries.push(ScoreEntry {
            id: fields[0].to_string(),
            prediction,
            score,
        });
    }
    let orientation = orientation.context("score file has no rows")?;
    Ok(ScoreTable::new(orientation, entries)?)
}
