//! Per-figure aggregates from a sweep's `summary.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Mean and standard error of the present values; `stderr` needs two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub stderr: Option<f64>,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Some(Aggregate { n, mean, stderr })
}

/// Least-squares slope of `ln y` against `ln x` over positive points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Default)]
struct Group {
    values: BTreeMap<&'static str, Vec<f64>>,
}

const METRICS: [&str; 4] = ["avg_cost", "mean_delay", "T_zeta_first", "T_zeta_sustained"];

/// `(controller, V)` groups in order of first appearance.
type Groups = Vec<((String, f64), Group)>;

fn read_summary(path: &Path) -> Result<Groups> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("missing column {name}"));
    let c_ctl = col("controller")?;
    let c_v = col("V")?;
    let metric_cols: Vec<(&'static str, usize)> = METRICS.iter().map(|m| Ok((*m, col(m)?))).collect::<Result<_>>()?;
    let mut groups: Groups = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("summary row {}", i + 2))?;
        let ctl = rec.get(c_ctl).unwrap_or_default().to_string();
        let v: f64 = rec.get(c_v).unwrap_or_default().parse().with_context(|| format!("V in row {}", i + 2))?;
        let idx = match groups.iter().position(|((c, gv), _)| *c == ctl && *gv == v) {
            Some(k) => k,
            None => {
                groups.push(((ctl, v), Group::default()));
                groups.len() - 1
            }
        };
        for (name, c) in &metric_cols {
            let raw = rec.get(*c).unwrap_or_default();
            if raw.is_empty() {
                continue;
            }
            let x: f64 = raw.parse().with_context(|| format!("{name} in row {}", i + 2))?;
            groups[idx].1.values.entry(name).or_default().push(x);
        }
    }
    if groups.is_empty() {
        bail!("{} has no runs", path.display());
    }
    groups.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
    Ok(groups)
}

fn agg_cells(a: Option<Aggregate>) -> [String; 3] {
    match a {
        Some(a) => [a.n.to_string(), a.mean.to_string(), a.stderr.map(|s| s.to_string()).unwrap_or_default()],
        None => ["0".into(), String::new(), String::new()],
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

fn write_metric_file(path: &Path, groups: &Groups, metrics: &[(&str, &str)]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["controller".to_string(), "V".into()];
    for (_, label) in metrics {
        header.extend([format!("{label}_n"), format!("{label}_mean"), format!("{label}_stderr")]);
    }
    w.write_record(&header)?;
    for ((ctl, v), g) in groups {
        let mut row = vec![ctl.clone(), v.to_string()];
        for (metric, _) in metrics {
            let a = g.values.get(metric).and_then(|xs| aggregate(xs));
            row.extend(agg_cells(a));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `trace_{controller}_V{v}_seed{seed}.csv`.
fn parse_trace_name(name: &str) -> Option<(String, String, String)> {
    let stem = name.strip_prefix("trace_")?.strip_suffix(".csv")?;
    let (rest, seed) = stem.rsplit_once("_seed")?;
    let (ctl, v) = rest.rsplit_once("_V")?;
    Some((ctl.to_string(), v.to_string(), seed.to_string()))
}

fn write_queue_traces(dir: &Path, out: &Path) -> Result<usize> {
    let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => Vec::new(),
    };
    files.sort();
    let mut w = writer(out)?;
    let mut header_written = false;
    let mut count = 0;
    for path in files {
        let Some((ctl, v, seed)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_trace_name) else {
            continue;
        };
        let mut rdr = csv::Reader::from_path(&path)?;
        if !header_written {
            let mut h = vec!["controller".to_string(), "V".into(), "seed".into()];
            h.extend(rdr.headers()?.iter().map(String::from));
            w.write_record(&h)?;
            header_written = true;
        }
        for rec in rdr.records() {
            let rec = rec?;
            let mut row = vec![ctl.clone(), v.clone(), seed.clone()];
            row.extend(rec.iter().map(String::from));
            w.write_record(&row)?;
        }
        count += 1;
    }
    if !header_written {
        w.write_record(["controller", "V", "seed", "slot"])?;
    }
    w.flush()?;
    Ok(count)
}

#[derive(Debug)]
pub struct PlotData {
    pub files: Vec<PathBuf>,
    /// Log-log slope of mean first-touch convergence time against `V`.
    pub convergence_slopes: Vec<(String, Option<f64>)>,
    pub traces: usize,
}

/// Writes the figure files next to `summary`, or into `out` when given.
pub fn emit_plotdata(summary: &Path, out: Option<&Path>) -> Result<PlotData> {
    let groups = read_summary(summary)?;
    let base = summary.parent().unwrap_or(Path::new("."));
    let out = out.unwrap_or(base);
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let targets: [(&str, &[(&str, &str)]); 3] = [
        ("fig_power_vs_V.csv", &[("avg_cost", "power")]),
        ("fig_delay_vs_V.csv", &[("mean_delay", "delay")]),
        ("fig_convergence_vs_V.csv", &[("T_zeta_first", "T_zeta"), ("T_zeta_sustained", "T_zeta_sustained")]),
    ];
    for (name, metrics) in targets {
        let path = out.join(name);
        write_metric_file(&path, &groups, metrics)?;
        files.push(path);
    }
    let trace_path = out.join("fig_queue_trace.csv");
    let traces = write_queue_traces(&base.join("traces"), &trace_path)?;
    files.push(trace_path);

    let mut controllers: Vec<&String> = groups.iter().map(|((c, _), _)| c).collect();
    controllers.dedup();
    let convergence_slopes = controllers
        .into_iter()
        .map(|ctl| {
            let pts: Vec<(f64, f64)> = groups
                .iter()
                .filter(|((c, _), _)| c == ctl)
                .filter_map(|((_, v), g)| Some((*v, aggregate(g.values.get("T_zeta_first")?)?.mean)))
                .collect();
            (ctl.clone(), loglog_slope(&pts))
        })
        .collect();
    Ok(PlotData { files, convergence_slopes, traces })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_mean_and_stderr() {
        let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.n, 3);
        assert_eq!(a.mean, 2.0);
        assert!((a.stderr.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(aggregate(&[4.0]).unwrap().stderr.is_none());
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [100.0, 200.0, 400.0].iter().map(|v| (*v, 3.0 * v)).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.0).abs() < 1e-12);
        assert!(loglog_slope(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
    }

    #[test]
    fn trace_names() {
        assert_eq!(parse_trace_name("trace_OLAC2_V500_seed3.csv"), Some(("OLAC2".into(), "500".into(), "3".into())));
        assert_eq!(parse_trace_name("summary.csv"), None);
    }
}
