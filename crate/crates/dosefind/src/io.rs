//! File formats: scenario CSV/JSON, OC reports, decision tables and
//! heatmap matrices. The layouts are described in `docs/formats.md`.

use std::fmt::Write as _;
use std::path::Path;

use dosefind_core::rng::seeded;
use dosefind_core::scenarios::{
    builtin_jiwang, builtin_jiwang_all, paoletti_generate, random_scenario, PaolettiConfig, RandomScenarioAxes,
};
use dosefind_core::tables::{DiffGrid, EmpiricalTable};
use dosefind_core::{DecisionTable, OcSummary, Scenario};

use crate::error::{AppError, AppResult};

pub const OC_SCHEMA: &str = "oc-v1";

pub const OC_COLUMNS: [&str; 17] = [
    "schema",
    "design",
    "scenario",
    "p_T",
    "n_doses",
    "trials",
    "true_mtd",
    "safety",
    "reliability",
    "reliability_se",
    "accuracy",
    "selection_none",
    "mean_patients",
    "mean_dlts",
    "safety_stop_rate",
    "selection",
    "allocation",
];

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt6)
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

/// One row per (design, scenario). Doses are 1-based; list-valued
/// columns are `;`-separated; undefined metrics read `NA`.
pub fn oc_csv(summaries: &[OcSummary]) -> String {
    let mut out = OC_COLUMNS.join(",");
    out.push('\n');
    for s in summaries {
        let row = [
            OC_SCHEMA.to_string(),
            s.design.clone(),
            s.scenario.clone(),
            s.p_t.to_string(),
            s.selection.len().to_string(),
            s.trials.to_string(),
            join(s.true_mtd.iter().map(|d| (d + 1).to_string())),
            opt6(s.safety),
            fmt6(s.reliability),
            fmt6(s.reliability_se),
            opt6(s.accuracy),
            fmt6(s.selection_none),
            fmt6(s.mean_patients),
            fmt6(s.mean_dlts),
            fmt6(s.safety_stop_rate),
            join(s.selection.iter().map(|&v| fmt6(v))),
            join(s.allocation.iter().map(|&v| fmt6(v))),
        ];
        out.push_str(&row.map(|f| csv_field(&f)).join(","));
        out.push('\n');
    }
    out
}

fn csv_field(f: &str) -> String {
    if f.contains([',', '"', '\n']) {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

/// Plain-text rendering of an OC report.
pub fn oc_text(summaries: &[OcSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<14} {:<16} p_T={:<5} safety={:<8} reliability={:.4} (se {:.4}) accuracy={}",
            s.design,
            s.scenario,
            s.p_t,
            s.safety.map_or("NA".into(), |v| format!("{v:.4}")),
            s.reliability,
            s.reliability_se,
            s.accuracy.map_or("NA".into(), |v| format!("{v:.4}")),
        );
    }
    out
}

/// Decision table as CSV: one row per DLT count x, one column per n;
/// cells hold E, S, D or DU and are empty when x > n.
pub fn table_csv(table: &DecisionTable) -> String {
    let n_max = table.n_max;
    let mut out = String::from("x");
    for n in 1..=n_max {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for x in 0..=n_max {
        out.push_str(&x.to_string());
        for n in 1..=n_max {
            out.push(',');
            if let Some(d) = table.get(x, n) {
                out.push_str(d.letter());
            }
        }
        out.push('\n');
    }
    out
}

/// Parses [`table_csv`] output back into `cells[n][x]` letters.
pub fn parse_table_csv(text: &str) -> AppResult<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let n_max = rdr.headers().map_err(|e| parse_err("table", &e))?.len().saturating_sub(1);
    let mut cells: Vec<Vec<String>> = (0..=n_max).map(|n| vec![String::new(); n + 1]).collect();
    for (x, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err("table", &e))?;
        for (n, column) in cells.iter_mut().enumerate().skip(1) {
            if let Some(cell) = column.get_mut(x) {
                *cell = rec.get(n).unwrap_or("").to_string();
            }
        }
    }
    Ok(cells)
}

/// Empirical decision frequencies, one row per visited or unvisited cell.
pub fn empirical_csv(table: &EmpiricalTable) -> String {
    let mut out = String::from("n,x,visits,q_E,q_S,q_D,score\n");
    for n in 1..=table.n_max {
        for x in 0..=n {
            let visits = table.visits(x, n);
            match table.proportions(x, n) {
                Some(q) => {
                    let score = dosefind_core::tables::mean_decision_score(q);
                    let _ = writeln!(out, "{n},{x},{visits},{},{},{},{}", fmt6(q[0]), fmt6(q[1]), fmt6(q[2]), fmt6(score));
                }
                None => {
                    let _ = writeln!(out, "{n},{x},0,NA,NA,NA,NA");
                }
            }
        }
    }
    out
}

/// Heatmap matrix: rows are ε₁ values, columns ε₂ values.
pub fn heatmap_csv(grid: &DiffGrid) -> String {
    let mut out = String::from("eps1\\eps2");
    for e in &grid.eps2 {
        let _ = write!(out, ",{e}");
    }
    out.push('\n');
    for (e1, row) in grid.eps1.iter().zip(&grid.values) {
        out.push_str(&e1.to_string());
        for v in row {
            let _ = write!(out, ",{}", fmt6(*v));
        }
        out.push('\n');
    }
    out
}

fn parse_err(path: &str, e: &csv::Error) -> AppError {
    let (line, column) = match e.position() {
        Some(p) => (p.line(), 1),
        None => (0, 0),
    };
    AppError::Parse { path: path.to_string(), line, column, message: e.to_string() }
}

/// Scenario CSV: a `label,p_T,p1,p2,...` header, then one scenario per
/// row. Rows may differ in length; `#` starts a comment line.
pub fn parse_scenario_csv(path: &str, text: &str) -> AppResult<Vec<Scenario>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(path, &e))?.clone();
    if header.get(0) != Some("label") || header.get(1).map(|h| h.eq_ignore_ascii_case("p_T")) != Some(true) {
        return Err(AppError::Parse {
            path: path.into(),
            line: 1,
            column: 1,
            message: "header must start with label,p_T".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |column: usize, message: String| AppError::Parse { path: path.into(), line, column: column as u64, message };
        if rec.len() < 3 {
            return Err(bad(rec.len() + 1, "a scenario needs a label, p_T and at least one probability".into()));
        }
        let mut nums = Vec::with_capacity(rec.len() - 1);
        for (i, field) in rec.iter().enumerate().skip(1) {
            if field.is_empty() && i > 1 && rec.iter().skip(i).all(str::is_empty) {
                break;
            }
            let v: f64 = field.parse().map_err(|_| bad(i + 1, format!("'{field}' is not a number")))?;
            nums.push(v);
        }
        let label = rec.get(0).unwrap_or_default().to_string();
        let scenario = Scenario::new(label, nums[0], nums[1..].to_vec()).map_err(|e| bad(2, e.to_string()))?;
        out.push(scenario);
    }
    if out.is_empty() {
        return Err(AppError::Parse { path: path.into(), line: 1, column: 1, message: "no scenarios".into() });
    }
    Ok(out)
}

pub fn scenario_csv(scenarios: &[Scenario]) -> String {
    let k = scenarios.iter().map(Scenario::n_doses).max().unwrap_or(0);
    let mut out = String::from("label,p_T");
    for i in 1..=k {
        let _ = write!(out, ",p{i}");
    }
    out.push('\n');
    for s in scenarios {
        out.push_str(&csv_field(&s.label));
        let _ = write!(out, ",{}", s.p_t);
        for p in &s.probs {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_scenario_json(path: &str, text: &str) -> AppResult<Vec<Scenario>> {
    let scenarios: Vec<Scenario> = serde_json::from_str(text).map_err(|e| AppError::Parse {
        path: path.into(),
        line: e.line() as u64,
        column: e.column() as u64,
        message: e.to_string(),
    })?;
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}

pub fn scenario_json(scenarios: &[Scenario]) -> String {
    let mut s = serde_json::to_string_pretty(scenarios).expect("scenarios serialize");
    s.push('\n');
    s
}

pub fn read_file(path: &Path) -> AppResult<String> {
    std::fs::read_to_string(path).map_err(|e| AppError::io(format!("cannot read {}", path.display()), e))
}

pub fn write_output(path: Option<&Path>, text: &str) -> AppResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| AppError::io(format!("cannot write {}", p.display()), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn load_scenario_file(path: &Path) -> AppResult<Vec<Scenario>> {
    let text = read_file(path)?;
    let name = path.display().to_string();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_scenario_json(&name, &text)
    } else {
        parse_scenario_csv(&name, &text)
    }
}

fn kv_args(spec: &str) -> AppResult<Vec<(String, String)>> {
    spec.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| AppError::BadRequest(format!("expected key=value, got '{kv}'")))
        })
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> AppResult<T> {
    v.parse().map_err(|_| AppError::BadRequest(format!("bad value '{v}' for {key}")))
}

/// Resolves a scenario source:
///
/// * `jiwang` or `jiwang:0.3` for the built-in sets,
/// * `paoletti:d=6,pt=0.2,count=1000` for the Paoletti generator,
/// * `random:count=100[,min=3,max=8]` for random logistic curves,
/// * any other value is read as a CSV or JSON file.
///
/// Generated sources draw from streams of `seed`.
pub fn load_scenarios(source: &str, seed: u64) -> AppResult<Vec<Scenario>> {
    let (kind, args) = source.split_once(':').unwrap_or((source, ""));
    match kind {
        "jiwang" if args.is_empty() => Ok(builtin_jiwang_all()),
        "jiwang" => Ok(builtin_jiwang(num("jiwang", args)?)?),
        "paoletti" => {
            let mut cfg = PaolettiConfig::new(6, 0.3);
            let mut count = 100usize;
            for (k, v) in kv_args(args)? {
                match k.as_str() {
                    "d" => cfg.d = num(&k, &v)?,
                    "pt" | "p_T" => cfg.p_t = num(&k, &v)?,
                    "count" => count = num(&k, &v)?,
                    "mu" => cfg.mu = [num(&k, &v)?; 4],
                    _ => return Err(AppError::BadRequest(format!("unknown paoletti option '{k}'"))),
                }
            }
            let mut rng = seeded(seed, 1);
            (0..count)
                .map(|i| {
                    let mut s = paoletti_generate(&cfg, &mut rng)?.scenario;
                    s.label = format!("paoletti-{}", i + 1);
                    Ok(s)
                })
                .collect()
        }
        "random" => {
            let mut axes = RandomScenarioAxes::default();
            let mut count = 100usize;
            for (k, v) in kv_args(args)? {
                match k.as_str() {
                    "count" => count = num(&k, &v)?,
                    "min" => axes.min_doses = num(&k, &v)?,
                    "max" => axes.max_doses = num(&k, &v)?,
                    _ => return Err(AppError::BadRequest(format!("unknown random option '{k}'"))),
                }
            }
            let mut rng = seeded(seed, 2);
            (0..count)
                .map(|i| {
                    let mut s = random_scenario(&axes, &mut rng)?;
                    s.label = format!("random-{}", i + 1);
                    Ok(s)
                })
                .collect()
        }
        _ => load_scenario_file(Path::new(source)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_csv_round_trip() {
        let all = builtin_jiwang_all();
        let text = scenario_csv(&all);
        assert_eq!(parse_scenario_csv("mem", &text).unwrap(), all);
    }

    #[test]
    fn ragged_rows_and_comments() {
        let text = "label,p_T,p1,p2,p3\n# three doses\na,0.3,0.1,0.2,0.3\nb,0.2,0.05,0.3\n";
        let s = parse_scenario_csv("mem", text).unwrap();
        assert_eq!(s[1].probs, vec![0.05, 0.3]);
    }

    #[test]
    fn parse_errors_point_at_the_cell() {
        let err = parse_scenario_csv("f.csv", "label,p_T,p1\na,0.3,0.1\nb,0.3,oops\n").unwrap_err();
        match err {
            AppError::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        assert!(parse_scenario_csv("f.csv", "name,p1\n").is_err());
        assert!(parse_scenario_csv("f.csv", "label,p_T,p1\na,0.3,1.5\n").is_err());
    }

    #[test]
    fn sources() {
        assert_eq!(load_scenarios("jiwang:0.2", 0).unwrap().len(), 14);
        assert_eq!(load_scenarios("jiwang", 0).unwrap().len(), 42);
        let a = load_scenarios("paoletti:d=5,pt=0.25,count=7", 9).unwrap();
        assert_eq!(a, load_scenarios("paoletti:d=5,pt=0.25,count=7", 9).unwrap());
        assert_eq!(a.len(), 7);
        assert_eq!(load_scenarios("random:count=4,min=2,max=3", 1).unwrap().len(), 4);
        assert!(load_scenarios("paoletti:zz=1", 0).is_err());
        assert!(load_scenarios("/nonexistent.csv", 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let all = builtin_jiwang(0.1).unwrap();
        assert_eq!(parse_scenario_json("mem", &scenario_json(&all)).unwrap(), all);
    }
}
