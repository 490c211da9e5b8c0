//! Experiment specs, cell execution and the summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Deserialize;

use netalloc::problem::{
    generate_random_network, generate_uniform_network, make_quadratic_utilities, NetworkProblem, UtilitySpec,
};
use netalloc::solvers::{solve, Method, SolverConfig, SolverReport};

use crate::{known_optimum, resolve_radius, Failure, Outcome};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub layout: Layout,
    pub experiments: Vec<Experiment>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Column order of the summary table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// FGM next to RGEM.
    #[default]
    QuadraticTable,
    /// Ellipsoid next to SGM.
    LogTable,
}

impl Layout {
    fn preferred(self) -> &'static [Method] {
        match self {
            Layout::QuadraticTable => &[Method::Fgm, Method::Rgem],
            Layout::LogTable => &[Method::Ellipsoid, Method::Sgm2, Method::Sgm1],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub network: NetworkParams,
    pub utility: Family,
    /// Seed of the random utility coefficients.
    #[serde(default)]
    pub utility_seed: u64,
    pub methods: Vec<Method>,
    pub eps: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, rename = "R")]
    pub radius: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub early_exit: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkParams {
    Uniform { m: usize, n: usize, b: f64 },
    Random { m: usize, n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Quadratic,
    Log,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("{path}: {}", e.into_inner())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.experiments.is_empty() {
            return Err(anyhow!("experiments: at least one experiment is required"));
        }
        for (i, e) in self.experiments.iter().enumerate() {
            let at = |field: &str| format!("experiments[{i}].{field}");
            if e.methods.is_empty() {
                return Err(anyhow!("{}: at least one method is required", at("methods")));
            }
            if e.eps.is_empty() {
                return Err(anyhow!("{}: at least one accuracy is required", at("eps")));
            }
            if let Some(j) = e.eps.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(anyhow!("{}: must be positive, got {}", at(&format!("eps[{j}]")), e.eps[j]));
            }
            if e.seeds.is_empty() {
                return Err(anyhow!("{}: at least one seed is required", at("seeds")));
            }
            if e.radius.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
                return Err(anyhow!("{}: must be positive", at("R")));
            }
            if e.max_iter == Some(0) || e.record_every == Some(0) {
                return Err(anyhow!("{}: max_iter and record_every must be at least 1", at("max_iter")));
            }
        }
        Ok(())
    }
}

impl Experiment {
    pub fn build(&self) -> anyhow::Result<NetworkProblem> {
        let network = match self.network {
            NetworkParams::Uniform { m, n, b } => generate_uniform_network(m, n, b)?,
            NetworkParams::Random { m, n, seed } => generate_random_network(m, n, seed)?,
        };
        let utilities = match self.utility {
            Family::Quadratic => make_quadratic_utilities(network.users(), self.utility_seed),
            Family::Log => UtilitySpec::logarithmic_for(&network),
        };
        Ok(NetworkProblem::new(network, utilities)?)
    }
}

struct Instance {
    problem: NetworkProblem,
    /// `R` or the reason it is unavailable.
    radius: Result<f64, String>,
    optimum: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    experiment: usize,
    method: Method,
    eps: f64,
    seed: u64,
}

impl Cell {
    fn stem(&self) -> String {
        format!("e{}_{}_eps{:e}_s{}", self.experiment, self.method, self.eps, self.seed)
    }
}

type CellResult = (Cell, Result<CellStats, String>);

#[derive(Debug, Clone)]
struct CellStats {
    iterations: f64,
    wall_ms: f64,
    gap: Option<f64>,
    feas: f64,
    radius: f64,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, count })
    }

    fn show(&self, digits: impl Fn(f64) -> String) -> String {
        if self.count > 1 {
            format!("{} ± {}", digits(self.mean), digits(self.std))
        } else {
            digits(self.mean)
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    experiment: usize,
    m: usize,
    n: usize,
    eps: f64,
    method: Method,
    seeds: Vec<u64>,
    iterations: Option<Stat>,
    wall_ms: Option<Stat>,
    gap: Option<Stat>,
    feas: Option<Stat>,
    radius: Option<f64>,
    error: Option<String>,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn bench(spec_path: &Path, out: Option<&Path>, check: bool, jobs: usize) -> Outcome {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))
        .map_err(Failure::input)?;
    let spec = ExperimentSpec::parse(&text)
        .with_context(|| format!("invalid spec {}", spec_path.display()))
        .map_err(Failure::input)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| spec.output_dir.clone());

    let mut instances = Vec::new();
    for (i, e) in spec.experiments.iter().enumerate() {
        let problem = e.build().with_context(|| format!("experiments[{i}].network")).map_err(Failure::input)?;
        let radius = resolve_radius(&problem, e.radius).map_err(|err| err.to_string());
        let optimum = known_optimum(&problem);
        instances.push(Instance { problem, radius, optimum });
    }

    let mut cells = Vec::new();
    for (i, e) in spec.experiments.iter().enumerate() {
        for &eps in &e.eps {
            for &method in &e.methods {
                let seeds = if method.is_stochastic() { &e.seeds[..] } else { &e.seeds[..1] };
                for &seed in seeds {
                    cells.push(Cell { experiment: i, method, eps, seed });
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(Failure::solver)?;
    let results: Vec<CellResult> =
        pool.install(|| cells.par_iter().map(|cell| (*cell, run_cell(&spec, &instances, cell, &dir))).collect());

    let rows = summarize(&spec, &instances, &results);
    let table = render_table(&rows, spec.layout);
    let details = render_details(&rows);
    let csv = render_csv(&rows);
    let summary = format!("{table}\n{details}");
    write_atomic(&dir.join("summary.txt"), summary.as_bytes()).map_err(Failure::solver)?;
    write_atomic(&dir.join("summary.csv"), csv.as_bytes()).map_err(Failure::solver)?;
    print!("{summary}");

    let failed: Vec<&Row> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!("row e{} {} eps={:e}: {}", r.experiment, r.method, r.eps, r.error.as_deref().unwrap_or_default());
    }
    if !failed.is_empty() {
        return Err(Failure::solver(anyhow!("{} of {} rows failed", failed.len(), rows.len())));
    }
    if check {
        let missed: Vec<String> = rows.iter().filter_map(check_row).collect();
        if !missed.is_empty() {
            for m in &missed {
                eprintln!("check: {m}");
            }
            return Err(Failure::check(anyhow!("{} rows miss their accuracy targets", missed.len())));
        }
    }
    Ok(())
}

fn run_cell(spec: &ExperimentSpec, instances: &[Instance], cell: &Cell, dir: &Path) -> Result<CellStats, String> {
    let e = &spec.experiments[cell.experiment];
    let inst = &instances[cell.experiment];
    let radius = inst.radius.clone()?;
    let defaults = SolverConfig::default();
    let cfg = SolverConfig {
        eps: cell.eps,
        radius,
        seed: cell.seed,
        max_iter: e.max_iter.unwrap_or(defaults.max_iter),
        record_every: e.record_every.unwrap_or(defaults.record_every),
        reference_value: inst.optimum,
        early_exit: e.early_exit,
        ..defaults
    };
    let report = solve(&inst.problem, cell.method, &cfg).map_err(|err| err.to_string())?;
    let stem = cell.stem();
    let json = report.to_json().map_err(|err| err.to_string())?;
    write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes()).map_err(|err| err.to_string())?;
    write_atomic(&dir.join(format!("{stem}.csv")), report.history_csv(true).as_bytes())
        .map_err(|err| err.to_string())?;
    Ok(stats(&report))
}

fn stats(report: &SolverReport) -> CellStats {
    let last = report.final_record();
    CellStats {
        iterations: report.iterations as f64,
        wall_ms: report.wall_ms,
        gap: last.and_then(|r| r.gap),
        feas: last.map(|r| r.feas).unwrap_or(f64::NAN),
        radius: report.config.radius,
    }
}

fn summarize(spec: &ExperimentSpec, instances: &[Instance], results: &[CellResult]) -> Vec<Row> {
    let mut grouped: BTreeMap<(usize, usize, usize), Vec<&CellResult>> = BTreeMap::new();
    for item in results {
        let c = &item.0;
        let e = &spec.experiments[c.experiment];
        let eps_idx = e.eps.iter().position(|&v| v == c.eps).unwrap_or(0);
        let method_idx = e.methods.iter().position(|&m| m == c.method).unwrap_or(0);
        grouped.entry((c.experiment, eps_idx, method_idx)).or_default().push(item);
    }
    grouped
        .into_values()
        .map(|items| {
            let cell = items[0].0;
            let p = &instances[cell.experiment].problem;
            let ok: Vec<&CellStats> = items.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
            let error = items.iter().find_map(|(c, r)| r.as_ref().err().map(|e| format!("seed {}: {e}", c.seed)));
            let pick = |f: &dyn Fn(&CellStats) -> f64| Stat::of(&ok.iter().map(|s| f(s)).collect::<Vec<_>>());
            let gaps: Option<Vec<f64>> = ok.iter().map(|s| s.gap).collect();
            Row {
                experiment: cell.experiment,
                m: p.links(),
                n: p.users(),
                eps: cell.eps,
                method: cell.method,
                seeds: items.iter().map(|(c, _)| c.seed).collect(),
                iterations: pick(&|s| s.iterations),
                wall_ms: pick(&|s| s.wall_ms),
                gap: gaps.as_deref().and_then(Stat::of),
                feas: pick(&|s| s.feas),
                radius: ok.first().map(|s| s.radius),
                error,
            }
        })
        .collect()
}

fn check_row(r: &Row) -> Option<String> {
    let radius = r.radius?;
    let gap_ok = r.gap.is_none_or(|g| g.mean <= r.eps);
    let feas_ok = r.feas.is_some_and(|f| f.mean <= r.eps / radius);
    (!(gap_ok && feas_ok)).then(|| {
        format!(
            "e{} {} eps={:e}: gap {} feas {} (targets {:e}, {:e})",
            r.experiment,
            r.method,
            r.eps,
            r.gap.map(|g| format!("{:.3e}", g.mean)).unwrap_or_else(|| "n/a".into()),
            r.feas.map(|f| format!("{:.3e}", f.mean)).unwrap_or_else(|| "n/a".into()),
            r.eps,
            r.eps / radius
        )
    })
}

fn fmt_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn fmt_ms(v: f64) -> String {
    format!("{v:.1}")
}

fn fmt_sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> =
            row.iter().enumerate().map(|(c, s)| format!("{s}{}", " ".repeat(widths[c] - s.chars().count()))).collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
        }
    }
    out
}

/// One line per network and accuracy, with iterations and time per method.
fn render_table(rows: &[Row], layout: Layout) -> String {
    let mut methods: Vec<Method> =
        layout.preferred().iter().copied().filter(|m| rows.iter().any(|r| r.method == *m)).collect();
    for m in Method::ALL {
        if !methods.contains(&m) && rows.iter().any(|r| r.method == m) {
            methods.push(m);
        }
    }
    let mut header = vec!["Network".to_string()];
    for m in &methods {
        header.push(format!("{} Iterations", m.name().to_uppercase()));
        header.push(format!("{} Time, ms", m.name().to_uppercase()));
    }
    let mut lines = vec![header];
    let mut keys: Vec<(usize, u64)> = Vec::new();
    for r in rows {
        let key = (r.experiment, r.eps.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (experiment, eps_bits) in keys {
        let here: Vec<&Row> =
            rows.iter().filter(|r| r.experiment == experiment && r.eps.to_bits() == eps_bits).collect();
        let first = here[0];
        let mut line = vec![format!("m = {}, n = {}, eps = {:e}", first.m, first.n, first.eps)];
        for m in &methods {
            match here.iter().find(|r| r.method == *m) {
                Some(r) if r.error.is_none() => {
                    line.push(r.iterations.map(|s| s.show(fmt_count)).unwrap_or_default());
                    line.push(r.wall_ms.map(|s| s.show(fmt_ms)).unwrap_or_default());
                }
                Some(_) => {
                    line.push("error".into());
                    line.push(String::new());
                }
                None => {
                    line.push("-".into());
                    line.push("-".into());
                }
            }
        }
        lines.push(line);
    }
    aligned(&lines)
}

fn render_details(rows: &[Row]) -> String {
    let mut lines =
        vec![["m", "n", "eps", "method", "seeds", "iterations", "wall_ms", "final_gap", "final_feas", "error"]
            .map(String::from)
            .to_vec()];
    for r in rows {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let mut line =
            vec![r.m.to_string(), r.n.to_string(), format!("{:e}", r.eps), r.method.to_string(), seeds.join(" ")];
        match &r.error {
            None => {
                line.push(r.iterations.map(|s| s.show(fmt_count)).unwrap_or_default());
                line.push(r.wall_ms.map(|s| s.show(fmt_ms)).unwrap_or_default());
                line.push(r.gap.map(|s| s.show(fmt_sci)).unwrap_or_else(|| "n/a".into()));
                line.push(r.feas.map(|s| s.show(fmt_sci)).unwrap_or_default());
            }
            Some(e) => {
                line.extend(std::iter::repeat_n(String::new(), 4));
                line.push(e.clone());
            }
        }
        lines.push(line);
    }
    aligned(&lines)
}

fn render_csv(rows: &[Row]) -> String {
    let mut out = String::from(
        "experiment,m,n,eps,method,seeds,iterations_mean,iterations_std,wall_ms_mean,wall_ms_std,\
         final_gap_mean,final_gap_std,final_feas_mean,final_feas_std,error\n",
    );
    let pair = |s: Option<Stat>| s.map(|s| format!("{},{}", s.mean, s.std)).unwrap_or_else(|| ",".into());
    for r in rows {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let error = r.error.as_deref().unwrap_or_default().replace(['"', '\n'], " ");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},\"{}\"",
            r.experiment,
            r.m,
            r.n,
            r.eps,
            r.method,
            seeds.join(" "),
            pair(r.iterations),
            pair(r.wall_ms),
            pair(r.gap),
            pair(r.feas),
            error
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"{
        "layout": "quadratic-table",
        "experiments": [
            {"network": {"kind": "uniform", "m": 2, "n": 30, "b": 5},
             "utility": "quadratic", "methods": ["fgm", "rgem"], "eps": [0.1], "seeds": [0, 1]}
        ]
    }"#;

    #[test]
    fn parses_and_validates() {
        let spec = ExperimentSpec::parse(SPEC).unwrap();
        assert_eq!(spec.layout, Layout::QuadraticTable);
        assert_eq!(spec.experiments[0].methods, vec![Method::Fgm, Method::Rgem]);
        assert_eq!(spec.output_dir, PathBuf::from("results"));

        let empty = SPEC.replace(r#"["fgm", "rgem"]"#, "[]");
        let err = ExperimentSpec::parse(&empty).unwrap_err().to_string();
        assert!(err.contains("experiments[0].methods"), "{err}");
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SPEC.replace(r#""eps": [0.1]"#, r#""eps": [0.1, "x"]"#);
        let err = ExperimentSpec::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("experiments[0].eps[1]") && err.contains("line"), "{err}");

        let negative = SPEC.replace(r#""eps": [0.1]"#, r#""eps": [-1]"#);
        assert!(ExperimentSpec::parse(&negative).unwrap_err().to_string().contains("eps[0]"));

        let unknown = SPEC.replace(r#""utility": "quadratic""#, r#""utility": "cubic""#);
        assert!(ExperimentSpec::parse(&unknown).unwrap_err().to_string().contains("experiments[0].utility"));
    }

    #[test]
    fn sample_statistics() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.count), (2.0, 1.0, 3));
        assert_eq!(s.show(fmt_count), "2 ± 1");
        assert_eq!(Stat::of(&[4.0]).unwrap().show(fmt_count), "4");
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn table_is_aligned() {
        let text = aligned(&[vec!["a".into(), "bb".into()], vec!["ccc".into(), "±".into()]]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["a   | bb", "----+---", "ccc | ±"]);
    }
}
