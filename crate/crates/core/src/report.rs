//! Markdown and CSV tables for score and curation reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CurationReport;
use crate::error::{Error, Result};
use crate::metrics::{ScoreReport, SubsetKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Markdown,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (markdown|csv)"
            ))),
        }
    }
}

/// Which cells to render. Values are shown as percentages with two decimals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderSpec {
    pub ks: Vec<usize>,
    pub subsets: Vec<SubsetKey>,
    pub format: Format,
}

impl RenderSpec {
    /// Every subset appearing in `reports`, in first-seen order.
    pub fn covering(reports: &[ScoreReport], ks: Vec<usize>, format: Format) -> Self {
        let mut subsets: Vec<SubsetKey> = Vec::new();
        for r in reports {
            for s in &r.subsets {
                if !subsets.contains(&s.key) {
                    subsets.push(s.key.clone());
                }
            }
        }
        RenderSpec {
            ks,
            subsets,
            format,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Render(format!(
                "ks {:?} must be non-empty and strictly ascending",
                self.ks
            )));
        }
        if self.subsets.is_empty() {
            return Err(Error::Render("at least one subset is required".into()));
        }
        Ok(())
    }
}

pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[derive(Clone, Copy)]
enum Metric {
    Pass,
    Rouge,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Pass => "pass@k",
            Metric::Rouge => "rouge@k",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Pass => "Pass@k",
            Metric::Rouge => "Rouge@k",
        }
    }
}

fn cells(report: &ScoreReport, spec: &RenderSpec, metric: Metric) -> Result<Vec<String>> {
    let mut row = Vec::with_capacity(spec.subsets.len() * spec.ks.len());
    for key in &spec.subsets {
        for &k in &spec.ks {
            let value = report.subset(key).and_then(|s| match metric {
                Metric::Pass => s.pass_at_k.get(&k),
                Metric::Rouge => s.rouge_at_k.get(&k),
            });
            let value = value.ok_or_else(|| {
                Error::Render(format!(
                    "run {:?} has no {} cell for subset {} at k={k}",
                    report.run_label,
                    metric.name(),
                    key.label()
                ))
            })?;
            row.push(percent(*value));
        }
    }
    Ok(row)
}

fn column_names(spec: &RenderSpec) -> Vec<String> {
    spec.subsets
        .iter()
        .flat_map(|s| spec.ks.iter().map(move |k| format!("{}@{k}", s.label())))
        .collect()
}

/// Two tables (pass@k then rouge@k), one row per run.
pub fn render(reports: &[ScoreReport], spec: &RenderSpec) -> Result<String> {
    spec.validate()?;
    let columns = column_names(spec);
    match spec.format {
        Format::Markdown => {
            let mut out = String::new();
            for (i, metric) in [Metric::Pass, Metric::Rouge].into_iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let ks: Vec<String> = spec.ks.iter().map(usize::to_string).collect();
                writeln!(out, "### {} for k = {}\n", metric.title(), ks.join(", ")).unwrap();
                writeln!(out, "| Run | {} |", columns.join(" | ")).unwrap();
                writeln!(out, "|---|{}", "---:|".repeat(columns.len())).unwrap();
                for r in reports {
                    writeln!(
                        out,
                        "| {} | {} |",
                        r.run_label,
                        cells(r, spec, metric)?.join(" | ")
                    )
                    .unwrap();
                }
            }
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let header: Vec<&str> = ["metric", "run"]
                .into_iter()
                .chain(columns.iter().map(String::as_str))
                .collect();
            w.write_record(&header).map_err(csv_err)?;
            for metric in [Metric::Pass, Metric::Rouge] {
                for r in reports {
                    let mut row = vec![metric.name().to_string(), r.run_label.clone()];
                    row.extend(cells(r, spec, metric)?);
                    w.write_record(&row).map_err(csv_err)?;
                }
            }
            finish_csv(w)
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Render(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Render(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Render(e.to_string()))
}

/// Stage rows in applied order, then split sizes when the corpus was split.
pub fn render_curation(report: &CurationReport, format: Format) -> Result<String> {
    let unparseable = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
    match format {
        Format::Markdown => {
            let mut out = String::from(
                "| Stage | Before | After | Problems | Unparseable |\n|---|---:|---:|---:|---:|\n",
            );
            for s in &report.stages {
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    s.name,
                    s.before,
                    s.after,
                    s.problems_after,
                    unparseable(s.dropped_unparseable)
                )
                .unwrap();
            }
            if !report.splits.is_empty() {
                out.push_str("\n| Split | Submissions |\n|---|---:|\n");
                for (name, count) in &report.splits {
                    writeln!(out, "| {name} | {count} |").unwrap();
                }
            }
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "stage",
                "before",
                "after",
                "problems_after",
                "dropped_unparseable",
            ])
            .map_err(csv_err)?;
            for s in &report.stages {
                w.write_record([
                    s.name.clone(),
                    s.before.to_string(),
                    s.after.to_string(),
                    s.problems_after.to_string(),
                    unparseable(s.dropped_unparseable),
                ])
                .map_err(csv_err)?;
            }
            finish_csv(w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CurationStage, Difficulty};
    use crate::metrics::{RougeVariant, SubsetScores};
    use std::collections::BTreeMap;

    fn report(label: &str, pass: f64, rouge: f64) -> ScoreReport {
        ScoreReport {
            run_label: label.into(),
            n: 10,
            ks: vec![1],
            rouge_variant: RougeVariant::F,
            subsets: vec![SubsetScores {
                key: SubsetKey::new("falconcode", Difficulty::Easy),
                programs: 3,
                pass_at_k: BTreeMap::from([(1, pass)]),
                rouge_at_k: BTreeMap::from([(1, rouge)]),
            }],
        }
    }

    fn spec(format: Format) -> RenderSpec {
        RenderSpec {
            ks: vec![1],
            subsets: vec![SubsetKey::new("falconcode", Difficulty::Easy)],
            format,
        }
    }

    #[test]
    fn single_cell_formatting() {
        let md = render(&[report("m", 0.190, 0.1)], &spec(Format::Markdown)).unwrap();
        assert!(md.contains("| m | 19.00 |"), "{md}");
        assert!(md.contains("| m | 10.00 |"));
        assert_eq!(percent(0.19114), "19.11");
    }

    #[test]
    fn empty_run_list_is_header_only() {
        let md = render(&[], &spec(Format::Markdown)).unwrap();
        assert_eq!(md.lines().filter(|l| l.starts_with("| ")).count(), 2);
        let csv = render(&[], &spec(Format::Csv)).unwrap();
        assert_eq!(csv, "metric,run,falconcode_easy@1\n");
    }

    #[test]
    fn missing_cell_names_subset_and_k() {
        let mut s = spec(Format::Markdown);
        s.ks = vec![1, 5];
        let err = render(&[report("m", 0.5, 0.5)], &s).unwrap_err();
        assert!(err.to_string().contains("falconcode_easy at k=5"), "{err}");
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(Format::Csv);
        s.ks = vec![5, 1];
        assert!(matches!(render(&[], &s), Err(Error::Render(_))));
        s.ks = vec![1];
        s.subsets.clear();
        assert!(matches!(render(&[], &s), Err(Error::Render(_))));
    }

    #[test]
    fn csv_round_trips_to_two_decimals() {
        let runs = [report("a,b", 0.123456, 0.0456), report("c", 1.0, 0.999)];
        let text = render(&runs, &spec(Format::Csv)).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(&rows[0][1], "a,b");
        let parsed: f64 = rows[0][2].parse().unwrap();
        assert!((parsed - 12.35).abs() < 1e-9);
        let parsed: f64 = rows[2][2].parse().unwrap();
        assert!((parsed - 4.56).abs() < 1e-9);
    }

    #[test]
    fn curation_tables() {
        let empty = CurationReport::default();
        let md = render_curation(&empty, Format::Markdown).unwrap();
        assert_eq!(md.lines().count(), 2);
        let one = CurationReport {
            stages: vec![CurationStage {
                name: "zero-score".into(),
                before: 10,
                after: 7,
                problems_after: 2,
                dropped_unparseable: None,
            }],
            splits: BTreeMap::new(),
        };
        let md = render_curation(&one, Format::Markdown).unwrap();
        assert!(md.contains("| zero-score | 10 | 7 | 2 |  |"));
        let csv = render_curation(&one, Format::Csv).unwrap();
        assert_eq!(
            csv,
            "stage,before,after,problems_after,dropped_unparseable\nzero-score,10,7,2,\n"
        );
    }
}
