//! Table rendering: markdown, CSV and LaTeX. Rows are prefix models and
//! columns suffix models; every number is printed with three decimals.
//! Output depends only on the inputs, so regenerating is byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::FactorReport;
use crate::model::{StarLevel, SwitchMatrix, Task};
use crate::stats::factor::Residual;
use crate::stats::matrix::{DeltaTable, MeansTable, Table};
use crate::tasks::verifiers::REGISTRY;
use crate::TOOL_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Markdown,
    Csv,
    Latex,
}

/// Everything a report can show. Sections without data are omitted.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    /// `(file name, sha256)` of every input.
    pub inputs: Vec<(String, String)>,
    pub task: Option<Task>,
    pub models: Vec<String>,
    pub deltas: Option<DeltaTable>,
    pub means: Option<MeansTable>,
    pub mean_level: f64,
    pub notes: Vec<String>,
    pub factor: Option<FactorReport>,
}

impl ReportBundle {
    pub fn from_matrix(m: &SwitchMatrix, name: &str, digest: &str) -> Self {
        fn square<T>(m: &SwitchMatrix, f: impl Fn(&str, &str) -> Option<T>) -> Table<T> {
            let cells = m
                .models
                .iter()
                .map(|a| m.models.iter().map(|b| f(a, b)).collect())
                .collect();
            Table {
                models: m.models.clone(),
                cells,
            }
        }
        let deltas = square(m, |a, b| {
            m.cell(a, b)
                .and_then(|c| c.delta.as_ref())
                .map(|d| (d.delta, d.star))
        });
        let means = square(m, |a, b| {
            m.cell(a, b).map(|c| (c.mean, c.mean_ci.lo, c.mean_ci.hi))
        });
        Self {
            inputs: vec![(name.to_string(), digest.to_string())],
            task: m.task,
            models: m.models.clone(),
            deltas: Some(deltas),
            means: Some(means),
            mean_level: m.mean_ci_level,
            notes: vec![
                format!("episodes: {}", m.n),
                format!("bootstrap resamples: {}, seed {}", m.resamples, m.seed),
                format!(
                    "failed cell-episodes: {} (excluded from that cell only)",
                    m.failure_policy
                ),
            ],
            factor: None,
        }
    }

    pub fn from_delta_table(t: DeltaTable, name: &str, digest: &str) -> Self {
        Self {
            inputs: vec![(name.to_string(), digest.to_string())],
            models: t.models.clone(),
            deltas: Some(t),
            mean_level: 0.95,
            ..Self::default()
        }
    }

    pub fn with_factor(mut self, f: FactorReport, name: &str, digest: &str) -> Self {
        self.inputs.push((name.to_string(), digest.to_string()));
        if self.models.is_empty() {
            self.models = f.model.models.clone();
        }
        self.task = self.task.or(f.task);
        self.factor = Some(f);
        self
    }

    fn provenance(&self) -> Vec<String> {
        let mut lines = vec![format!("generated by {TOOL_VERSION}")];
        for (name, digest) in &self.inputs {
            lines.push(format!("input {name} sha256 {digest}"));
        }
        lines
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.3}")
}

fn signed(x: f64) -> String {
    if x.is_sign_negative() {
        num(x)
    } else {
        format!("+{}", num(x))
    }
}

fn delta_cell(cell: Option<&(f64, StarLevel)>) -> String {
    cell.map_or_else(
        || "n/a".into(),
        |(d, s)| format!("{}{}", num(*d), s.stars()),
    )
}

fn mean_cell(cell: Option<&(f64, f64, f64)>) -> String {
    cell.map_or_else(
        || "n/a".into(),
        |(m, lo, hi)| format!("{} [{}, {}]", num(*m), num(*lo), num(*hi)),
    )
}

fn grid<T>(t: &Table<T>, render: impl Fn(Option<&T>) -> String) -> Vec<Vec<String>> {
    t.cells
        .iter()
        .map(|row| row.iter().map(|c| render(c.as_ref())).collect())
        .collect()
}

fn predictions(f: &FactorReport) -> Vec<&Residual> {
    f.model.residuals.iter().collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), num)
}

fn factor_summary(f: &FactorReport) -> Vec<String> {
    vec![
        format!("mu = {}", num(f.model.mu)),
        format!("R2 in-sample = {}", opt(f.model.r2_in_sample)),
        format!("R2 leave-one-out = {}", opt(f.model.r2_loo)),
    ]
}

// ---------- markdown ----------

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>], numeric_from: usize) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let align: Vec<&str> = (0..header.len())
        .map(|i| if i >= numeric_from { "---:" } else { "---" })
        .collect();
    let _ = writeln!(out, "| {} |", align.join(" | "));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn square_rows(models: &[String], cells: Vec<Vec<String>>) -> Vec<Vec<String>> {
    models
        .iter()
        .zip(cells)
        .map(|(m, row)| std::iter::once(m.clone()).chain(row).collect())
        .collect()
}

pub fn render_markdown(b: &ReportBundle) -> String {
    let mut out = String::new();
    let title = b.task.map_or("Switch matrix report".to_string(), |t| {
        format!("Switch matrix report: {t}")
    });
    let _ = writeln!(out, "# {title}\n");
    for line in b.provenance().iter().chain(&b.notes) {
        let _ = writeln!(out, "- {line}");
    }
    out.push('\n');
    let header: Vec<String> = std::iter::once("prefix \\ suffix".to_string())
        .chain(b.models.iter().cloned())
        .collect();
    if let Some(d) = &b.deltas {
        let _ = writeln!(out, "## Switch effects\n");
        if d.models.len() < 2 {
            let _ = writeln!(out, "No off-diagonal cells.\n");
        }
        md_table(
            &mut out,
            &header,
            &square_rows(&d.models, grid(d, delta_cell)),
            1,
        );
        let _ = writeln!(
            out,
            "Stars: interval excludes 0 at 90% (*), 95% (**), 99% (***).\n"
        );
    }
    if let Some(m) = &b.means {
        let _ = writeln!(
            out,
            "## Mean score with {:.0}% interval\n",
            b.mean_level * 100.0
        );
        md_table(
            &mut out,
            &header,
            &square_rows(&m.models, grid(m, mean_cell)),
            1,
        );
    }
    if let Some(f) = &b.factor {
        let _ = writeln!(out, "## Additive factors\n");
        for line in factor_summary(f) {
            let _ = writeln!(out, "- {line}");
        }
        out.push('\n');
        let rows: Vec<Vec<String>> = f
            .model
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| vec![m.clone(), signed(f.model.alpha[i]), signed(f.model.beta[i])])
            .collect();
        md_table(
            &mut out,
            &[
                "model".into(),
                "alpha (prefix)".into(),
                "beta (suffix)".into(),
            ],
            &rows,
            1,
        );

        let _ = writeln!(out, "## Observed vs predicted\n");
        let rows: Vec<Vec<String>> = predictions(f)
            .iter()
            .map(|r| {
                vec![
                    r.prefix.clone(),
                    r.suffix.clone(),
                    signed(r.observed),
                    signed(r.predicted),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &[
                "prefix".into(),
                "suffix".into(),
                "observed".into(),
                "predicted".into(),
            ],
            &rows,
            2,
        );

        let _ = writeln!(out, "## Largest residuals\n");
        let rows: Vec<Vec<String>> = f
            .top_residuals
            .iter()
            .map(|r| {
                vec![
                    r.prefix.clone(),
                    r.suffix.clone(),
                    signed(r.observed),
                    signed(r.predicted),
                    signed(r.epsilon),
                    num(r.epsilon.abs()),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &[
                "prefix".into(),
                "suffix".into(),
                "observed".into(),
                "predicted".into(),
                "residual".into(),
                "abs".into(),
            ],
            &rows,
            2,
        );
    }
    out
}

// ---------- csv ----------

fn csv_file(b: &ReportBundle, header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    // Comment lines are written raw; the table readers skip them.
    let mut buf = Vec::new();
    for p in b.provenance() {
        buf.extend_from_slice(format!("# {p}\n").as_bytes());
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf);
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// One CSV document per table, keyed by file name.
pub fn render_csv(b: &ReportBundle) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let header: Vec<String> = std::iter::once("prefix".to_string())
        .chain(b.models.iter().cloned())
        .collect();
    if let Some(d) = &b.deltas {
        files.push((
            "delta.csv".into(),
            csv_file(
                b,
                header.clone(),
                square_rows(&d.models, grid(d, delta_cell)),
            ),
        ));
    }
    if let Some(m) = &b.means {
        files.push((
            "means.csv".into(),
            csv_file(
                b,
                header.clone(),
                square_rows(&m.models, grid(m, mean_cell)),
            ),
        ));
    }
    if let Some(f) = &b.factor {
        let mut rows = vec![
            vec!["mu".into(), num(f.model.mu), String::new()],
            vec![
                "r2_in_sample".into(),
                opt(f.model.r2_in_sample),
                String::new(),
            ],
            vec!["r2_loo".into(), opt(f.model.r2_loo), String::new()],
        ];
        rows.extend(
            f.model
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| vec![m.clone(), num(f.model.alpha[i]), num(f.model.beta[i])]),
        );
        files.push((
            "factors.csv".into(),
            csv_file(b, vec!["model".into(), "alpha".into(), "beta".into()], rows),
        ));
        let rows = predictions(f)
            .iter()
            .map(|r| {
                vec![
                    r.prefix.clone(),
                    r.suffix.clone(),
                    num(r.observed),
                    num(r.predicted),
                ]
            })
            .collect();
        files.push((
            "predictions.csv".into(),
            csv_file(
                b,
                vec![
                    "prefix".into(),
                    "suffix".into(),
                    "observed".into(),
                    "predicted".into(),
                ],
                rows,
            ),
        ));
        let rows = f
            .top_residuals
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    (i + 1).to_string(),
                    r.prefix.clone(),
                    r.suffix.clone(),
                    num(r.observed),
                    num(r.predicted),
                    num(r.epsilon),
                    num(r.epsilon.abs()),
                ]
            })
            .collect();
        files.push((
            "residuals.csv".into(),
            csv_file(
                b,
                [
                    "rank",
                    "prefix",
                    "suffix",
                    "observed",
                    "predicted",
                    "residual",
                    "abs_residual",
                ]
                .map(String::from)
                .to_vec(),
                rows,
            ),
        ));
    }
    files
}

// ---------- latex ----------

fn tex_escape(s: &str) -> String {
    s.replace('\\', "\\textbackslash{}")
        .replace('_', "\\_")
        .replace('%', "\\%")
        .replace('&', "\\&")
        .replace('#', "\\#")
}

fn tex_num(x: f64) -> String {
    let s = num(x);
    match s.strip_prefix('-') {
        Some(rest) => format!("$-${rest}"),
        None => s,
    }
}

fn tex_signed(x: f64) -> String {
    if x.is_sign_negative() {
        tex_num(x)
    } else {
        format!("$+${}", num(x))
    }
}

fn tex_table(out: &mut String, header: &[String], rows: &[Vec<String>], left_cols: usize) {
    let spec: String = (0..header.len())
        .map(|i| if i < left_cols { 'l' } else { 'r' })
        .collect();
    let _ = writeln!(out, "\\begin{{tabular}}{{{spec}}}\n\\toprule");
    let _ = writeln!(out, "{} \\\\\n\\midrule", header.join(" & "));
    for r in rows {
        let _ = writeln!(out, "{} \\\\", r.join(" & "));
    }
    let _ = writeln!(out, "\\bottomrule\n\\end{{tabular}}\n");
}

pub fn render_latex(b: &ReportBundle) -> String {
    let mut out = String::new();
    for p in b.provenance() {
        let _ = writeln!(out, "% {p}");
    }
    out.push('\n');
    let header: Vec<String> = std::iter::once(String::new())
        .chain(b.models.iter().map(|m| tex_escape(m)))
        .collect();
    let label = |m: &String| tex_escape(m);
    if let Some(d) = &b.deltas {
        let rows: Vec<Vec<String>> = d
            .models
            .iter()
            .zip(&d.cells)
            .map(|(m, row)| {
                std::iter::once(label(m))
                    .chain(row.iter().map(|c| match c {
                        Some((v, s)) if *s != StarLevel::None => {
                            format!("{}\\textsuperscript{{{}}}", tex_num(*v), s.stars())
                        }
                        Some((v, _)) => tex_num(*v),
                        None => "n/a".into(),
                    }))
                    .collect()
            })
            .collect();
        tex_table(&mut out, &header, &rows, 1);
    }
    if let Some(m) = &b.means {
        let rows: Vec<Vec<String>> = m
            .models
            .iter()
            .zip(&m.cells)
            .map(|(name, row)| {
                std::iter::once(label(name))
                    .chain(row.iter().map(|c| match c {
                        Some((v, lo, hi)) => format!("{} [{},{}]", num(*v), num(*lo), num(*hi)),
                        None => "n/a".into(),
                    }))
                    .collect()
            })
            .collect();
        tex_table(&mut out, &header, &rows, 1);
    }
    if let Some(f) = &b.factor {
        for line in factor_summary(f) {
            let _ = writeln!(out, "% {line}");
        }
        let rows: Vec<Vec<String>> = f
            .model
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                vec![
                    label(m),
                    tex_signed(f.model.alpha[i]),
                    tex_signed(f.model.beta[i]),
                ]
            })
            .collect();
        tex_table(
            &mut out,
            &["Model".into(), "$\\alpha$".into(), "$\\beta$".into()],
            &rows,
            1,
        );
        let rows: Vec<Vec<String>> = f
            .top_residuals
            .iter()
            .map(|r| {
                vec![
                    label(&r.prefix),
                    label(&r.suffix),
                    tex_signed(r.observed),
                    tex_signed(r.predicted),
                    tex_signed(r.epsilon),
                    num(r.epsilon.abs()),
                ]
            })
            .collect();
        tex_table(
            &mut out,
            &[
                "Prefix $A$".into(),
                "Suffix $B$".into(),
                "Observed".into(),
                "Pred.".into(),
                "Resid. $\\epsilon$".into(),
                "$|\\epsilon|$".into(),
            ],
            &rows,
            2,
        );
    }
    out
}

/// Renders and writes the bundle into `dir`; returns the written paths.
pub fn write_report(b: &ReportBundle, format: Format, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = match format {
        Format::Markdown => vec![("report.md".to_string(), render_markdown(b))],
        Format::Latex => vec![("report.tex".to_string(), render_latex(b))],
        Format::Csv => render_csv(b),
    };
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// The verifier registry as a plain-text table.
pub fn render_registry() -> String {
    let mut out = String::new();
    let width = REGISTRY.iter().map(|v| v.id.len()).max().unwrap_or(0);
    for v in REGISTRY {
        let args = if v.args.is_empty() {
            "-".to_string()
        } else {
            v.args.join(", ")
        };
        let _ = writeln!(out, "{:<width$}  {:<36}  {}", v.id, args, v.description);
    }
    out
}
