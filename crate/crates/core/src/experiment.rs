//! Reproducible Monte-Carlo experiments.
//!
//! A run is a list of `(d, n)` cells, each with the methods to compare, and a
//! number of replications. Replication `r` of cell `(d, n)` draws its data
//! from the seed `derive_seed(seed, [d, n, r])`, so every method in a cell
//! sees the same data, and cells that share `(d, n)` across presets share
//! data too. Work is spread over a rayon pool; records are emitted in
//! `(cell, method, rep)` order whatever the thread count.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastica::{fit, FastIcaConfig};
use crate::inference::{align, chi2_alignment, losses};
use crate::init::{InitKind, InitMethod};
use crate::io::format_f64;
use crate::rng::derive_seed;
use crate::simulate::{generate, Mixing, Scenario, SourceFamily};
use crate::tensorops::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// FastICA with the given initializer.
    Fit(InitKind),
    /// First direction only: each initializer refined on raw sample
    /// kurtosis, keeping the one with the largest `|κ̂|`.
    SampleKurtosis,
}

impl Method {
    pub const PROJECTION: Method = Method::Fit(InitKind::ProjectionSlicing);
    pub const SLICING: Method = Method::Fit(InitKind::SampleSlicing);
    pub const RANDOM: Method = Method::Fit(InitKind::RandomUnit);
    pub const NAIVE: Method = Method::Fit(InitKind::NaiveMatricization);

    pub fn name(self) -> &'static str {
        match self {
            Method::Fit(InitKind::ProjectionSlicing) => "projection",
            Method::Fit(InitKind::SampleSlicing) => "slicing",
            Method::Fit(InitKind::RandomUnit) => "random",
            Method::Fit(InitKind::NaiveMatricization) => "naive",
            Method::SampleKurtosis => "sample_kurtosis",
        }
    }

    fn code(self) -> u64 {
        match self {
            Method::Fit(InitKind::ProjectionSlicing) => 0,
            Method::Fit(InitKind::SampleSlicing) => 1,
            Method::Fit(InitKind::RandomUnit) => 2,
            Method::Fit(InitKind::NaiveMatricization) => 3,
            Method::SampleKurtosis => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "sample_kurtosis" {
            return Ok(Method::SampleKurtosis);
        }
        s.parse::<InitKind>().map(Method::Fit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub d: usize,
    pub n: usize,
    pub methods: Vec<Method>,
}

impl CellSpec {
    pub fn id(&self) -> String {
        format!("d{}_n{}", self.d, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub cells: Vec<CellSpec>,
    pub reps: usize,
    pub seed: u64,
    pub source: SourceFamily,
    /// Components extracted per fit; `None` means all.
    pub components: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MethodComparison,
    CltHistograms,
    InitComparisonGrid,
    DimSweep,
    NSweep,
    KurtosisBreakdown,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::MethodComparison,
        Preset::CltHistograms,
        Preset::InitComparisonGrid,
        Preset::DimSweep,
        Preset::NSweep,
        Preset::KurtosisBreakdown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::MethodComparison => "method_comparison",
            Preset::CltHistograms => "clt_histograms",
            Preset::InitComparisonGrid => "init_comparison_grid",
            Preset::DimSweep => "dim_sweep",
            Preset::NSweep => "n_sweep",
            Preset::KurtosisBreakdown => "kurtosis_breakdown",
        }
    }

    /// `(dimensions, sample sizes, replications)`.
    pub fn axes(self, full: bool) -> (Vec<usize>, Vec<usize>, usize) {
        let step = |from: usize, to: usize, by: usize| (from..=to).step_by(by).collect::<Vec<_>>();
        match (self, full) {
            (Preset::MethodComparison, _) => (vec![25], vec![500, 1500, 2000], 200),
            (Preset::CltHistograms, false) => (vec![25], vec![400, 800, 1200, 2000], 200),
            (Preset::CltHistograms, true) => (vec![25, 50], vec![400, 800, 1200, 2000, 6000], 500),
            (Preset::InitComparisonGrid, false) => (vec![10, 20, 30], vec![1000, 2000, 4000], 20),
            (Preset::InitComparisonGrid, true) => (step(90, 150, 10), step(10_000, 24_000, 2000), 200),
            (Preset::DimSweep, false) => (step(10, 50, 10), vec![4000], 20),
            (Preset::DimSweep, true) => (step(90, 150, 10), vec![24_000], 200),
            (Preset::NSweep, false) => (vec![30], step(2000, 5000, 1000), 20),
            (Preset::NSweep, true) => (vec![150], step(24_000, 30_000, 1000), 200),
            (Preset::KurtosisBreakdown, false) => (vec![10, 20, 40], vec![400], 50),
            (Preset::KurtosisBreakdown, true) => (vec![10, 20, 40, 60, 80], vec![400], 200),
        }
    }

    pub fn methods(self) -> Vec<Method> {
        match self {
            Preset::MethodComparison => vec![Method::PROJECTION, Method::SLICING, Method::RANDOM, Method::NAIVE],
            Preset::CltHistograms => vec![Method::PROJECTION],
            Preset::InitComparisonGrid | Preset::DimSweep | Preset::NSweep => {
                vec![Method::PROJECTION, Method::SLICING]
            }
            Preset::KurtosisBreakdown => vec![Method::SampleKurtosis, Method::PROJECTION],
        }
    }

    /// Builds the run. `ds`/`ns` replace the preset's axes when given.
    pub fn spec(self, full: bool, ds: Option<&[usize]>, ns: Option<&[usize]>, reps: Option<usize>, seed: u64) -> ExperimentSpec {
        let (d_axis, n_axis, default_reps) = self.axes(full);
        let ds = ds.map_or(d_axis, <[usize]>::to_vec);
        let ns = ns.map_or(n_axis, <[usize]>::to_vec);
        let methods = self.methods();
        let mut cells = Vec::new();
        for &d in &ds {
            for &n in &ns {
                cells.push(CellSpec { d, n, methods: methods.clone() });
            }
            if self == Preset::KurtosisBreakdown {
                // The consistent regime for comparison.
                let n = 4 * d * d;
                if !ns.contains(&n) {
                    cells.push(CellSpec { d, n, methods: vec![Method::PROJECTION] });
                }
            }
        }
        ExperimentSpec {
            name: self.name().to_string(),
            cells,
            reps: reps.unwrap_or(default_reps),
            seed,
            source: SourceFamily::LaplaceUnit,
            components: if self == Preset::KurtosisBreakdown { Some(1) } else { None },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown preset {s:?}")))
    }
}

/// One row of the raw-results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: String,
    pub d: usize,
    pub n: usize,
    pub method: String,
    pub rep: usize,
    /// Data seed of this replication.
    pub seed: u64,
    pub ell_m: Option<f64>,
    pub ell_a: Option<f64>,
    /// `maxⱼ |⟨aⱼ, â₁⟩|` for the first extracted direction.
    pub max_inner: Option<f64>,
    /// `⟨â₁, a⟩` for the first extracted direction, signed towards its
    /// matched column, against the next true column `a`.
    pub a1_a2: Option<f64>,
    /// Alignment statistic of the first extracted direction against its
    /// matched column, with analytic source moments.
    pub chi2: Option<f64>,
    /// Aligned `⟨âⱼ, aⱼ⟩`, one per true column; needs all components.
    pub inner: Vec<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

pub const RECORD_COLUMNS: [&str; 14] = [
    "scenario", "d", "n", "method", "rep", "seed", "ell_m", "ell_a", "max_inner", "a1_a2", "chi2", "inner", "wall_ms",
    "error",
];

pub const SUMMARY_COLUMNS: [&str; 11] =
    ["scenario", "d", "n", "method", "metric", "count", "errors", "q25", "median", "q75", "mean"];

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

impl ResultRecord {
    fn fields(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.d.to_string(),
            self.n.to_string(),
            self.method.clone(),
            self.rep.to_string(),
            self.seed.to_string(),
            opt(self.ell_m),
            opt(self.ell_a),
            opt(self.max_inner),
            opt(self.a1_a2),
            opt(self.chi2),
            self.inner.iter().map(|&x| format_f64(x)).collect::<Vec<_>>().join(";"),
            format!("{:.3}", self.wall_ms),
            self.error.clone().unwrap_or_default(),
        ]
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "ell_m" => self.ell_m,
            "ell_a" => self.ell_a,
            "max_inner" => self.max_inner,
            "a1_a2" => self.a1_a2,
            "chi2" => self.chi2,
            _ => None,
        }
    }
}

pub const METRICS: [&str; 5] = ["ell_m", "ell_a", "max_inner", "a1_a2", "chi2"];

struct Outcome {
    first: nalgebra::DVector<f64>,
    a_hat: DMatrix<f64>,
}

fn run_method(method: Method, data: &DataMatrix, components: Option<usize>, seed: u64) -> Result<Outcome> {
    match method {
        Method::Fit(kind) => {
            let cfg = FastIcaConfig { init: InitMethod::new(kind), seed, components, ..Default::default() };
            let est = fit(data, &cfg)?;
            Ok(Outcome { first: est.a_hat.column(0).into_owned(), a_hat: est.a_hat })
        }
        Method::SampleKurtosis => {
            let mut best: Option<(f64, DMatrix<f64>)> = None;
            for kind in InitKind::ALL {
                let cfg = FastIcaConfig {
                    init: InitMethod::new(kind),
                    seed: derive_seed(seed, &[kind as u64]),
                    components: Some(1),
                    max_reinit: 0,
                    ..Default::default()
                };
                let est = fit(data, &cfg)?;
                let k = est.kappa_hat[0].abs();
                if best.as_ref().map_or(true, |(b, _)| k > *b) {
                    best = Some((k, est.a_hat));
                }
            }
            let (_, a_hat) = best.expect("four candidates");
            Ok(Outcome { first: a_hat.column(0).into_owned(), a_hat })
        }
    }
}

fn evaluate(rec: &mut ResultRecord, out: &Outcome, a: &DMatrix<f64>, n: usize, scn: &Scenario) -> Result<()> {
    let rep = losses(&out.a_hat, a)?;
    rec.ell_m = Some(rep.ell_m);
    rec.ell_a = Some(rep.ell_a);
    let first = out.first.normalize();
    rec.max_inner = Some(a.column_iter().map(|c| c.dot(&first).abs()).fold(0.0, f64::max));
    let t = rep.assignment_a[0];
    let chi = chi2_alignment(&first, &a.column(t).into_owned(), n, &scn.source(t).moments())?;
    rec.chi2 = Some(chi.statistic);
    // The first extracted component, signed towards its matched column,
    // against the next true column.
    if a.ncols() >= 2 {
        let signed = if first.dot(&a.column(t)) < 0.0 { -first.clone() } else { first.clone() };
        rec.a1_a2 = Some(signed.dot(&a.column((t + 1) % a.ncols())));
    }
    if out.a_hat.shape() == a.shape() {
        let aligned = align(&out.a_hat, a)?.aligned_a_hat;
        rec.inner = (0..a.ncols()).map(|j| aligned.column(j).dot(&a.column(j))).collect();
    }
    Ok(())
}

fn run_rep(spec: &ExperimentSpec, cell: &CellSpec, rep: usize) -> Vec<ResultRecord> {
    let seed = derive_seed(spec.seed, &[cell.d as u64, cell.n as u64, rep as u64]);
    let scn = Scenario {
        d: cell.d,
        n: cell.n,
        sources: vec![spec.source.clone()],
        mixing: Mixing::HaarOrthogonal,
        seed,
    };
    let blank = |method: Method| ResultRecord {
        scenario: cell.id(),
        d: cell.d,
        n: cell.n,
        method: method.name().to_string(),
        rep,
        seed,
        ell_m: None,
        ell_a: None,
        max_inner: None,
        a1_a2: None,
        chi2: None,
        inner: Vec::new(),
        wall_ms: 0.0,
        error: None,
    };
    let ds = match generate(&scn) {
        Ok(ds) => ds,
        Err(e) => {
            return cell
                .methods
                .iter()
                .map(|&m| ResultRecord { error: Some(e.to_string()), ..blank(m) })
                .collect()
        }
    };
    cell.methods
        .iter()
        .map(|&method| {
            let mut rec = blank(method);
            let start = Instant::now();
            let result = run_method(method, &ds.data, spec.components, derive_seed(seed, &[method.code()]))
                .and_then(|out| evaluate(&mut rec, &out, &ds.mixing, cell.n, &scn));
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            if let Err(e) = result {
                rec.error = Some(e.to_string());
            }
            rec
        })
        .collect()
}

/// Runs every `(cell, rep)` on a pool of `threads` workers. Failures are
/// recorded per row; the run continues.
pub fn run(spec: &ExperimentSpec, threads: usize) -> Result<Vec<ResultRecord>> {
    if spec.reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let tasks: Vec<(usize, usize)> =
        (0..spec.cells.len()).flat_map(|c| (0..spec.reps).map(move |r| (c, r))).collect();
    let per_task: Vec<Vec<ResultRecord>> =
        pool.install(|| tasks.par_iter().map(|&(c, r)| run_rep(spec, &spec.cells[c], r)).collect());

    let mut records: Vec<(usize, usize, ResultRecord)> = Vec::new();
    for (&(c, _), recs) in tasks.iter().zip(per_task) {
        for (m, rec) in recs.into_iter().enumerate() {
            records.push((c, m, rec));
        }
    }
    records.sort_by_key(|(c, m, rec)| (*c, *m, rec.rep));
    Ok(records.into_iter().map(|(_, _, r)| r).collect())
}

/// Type-7 (linear interpolation) quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub d: usize,
    pub n: usize,
    pub method: String,
    pub metric: String,
    pub count: usize,
    pub errors: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub mean: f64,
}

/// Quartiles of each metric per `(scenario, method)`, in first-seen order.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.scenario.clone(), r.method.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut out = Vec::new();
    for (scenario, method) in groups {
        let members: Vec<&ResultRecord> =
            records.iter().filter(|r| r.scenario == scenario && r.method == method).collect();
        let errors = members.iter().filter(|r| r.error.is_some()).count();
        for metric in METRICS {
            let mut v: Vec<f64> = members.iter().filter_map(|r| r.metric(metric)).filter(|x| x.is_finite()).collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(f64::total_cmp);
            out.push(SummaryRow {
                scenario: scenario.clone(),
                d: members[0].d,
                n: members[0].n,
                method: method.clone(),
                metric: metric.to_string(),
                count: v.len(),
                errors,
                q25: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q75: quantile(&v, 0.75),
                mean: v.iter().sum::<f64>() / v.len() as f64,
            });
        }
    }
    out
}

pub fn write_records<W: Write>(w: W, records: &[ResultRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
    wtr.write_record(RECORD_COLUMNS).map_err(io)?;
    for r in records {
        wtr.write_record(r.fields()).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
    wtr.write_record(SUMMARY_COLUMNS).map_err(io)?;
    for s in rows {
        let fields = [
            s.scenario.clone(),
            s.d.to_string(),
            s.n.to_string(),
            s.method.clone(),
            s.metric.clone(),
            s.count.to_string(),
            s.errors.to_string(),
            format_f64(s.q25),
            format_f64(s.median),
            format_f64(s.q75),
            format_f64(s.mean),
        ];
        wtr.write_record(fields).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a raw-results CSV written by [`write_records`].
pub fn read_records<R: Read>(r: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, col: 1, msg: e.to_string() })?;
        if rec.len() != RECORD_COLUMNS.len() {
            return Err(Error::Parse { row, col: 1, msg: format!("expected {} fields", RECORD_COLUMNS.len()) });
        }
        let num = |col: usize| -> Result<Option<f64>> {
            let s = &rec[col];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse { row, col: col + 1, msg: format!("not a number: {s:?}") })
        };
        let int = |col: usize| -> Result<u64> {
            rec[col].parse().map_err(|_| Error::Parse { row, col: col + 1, msg: "not an integer".into() })
        };
        let inner = if rec[11].is_empty() {
            Vec::new()
        } else {
            rec[11]
                .split(';')
                .map(|s| s.parse().map_err(|_| Error::Parse { row, col: 12, msg: format!("not a number: {s:?}") }))
                .collect::<Result<Vec<f64>>>()?
        };
        out.push(ResultRecord {
            scenario: rec[0].to_string(),
            d: int(1)? as usize,
            n: int(2)? as usize,
            method: rec[3].to_string(),
            rep: int(4)? as usize,
            seed: int(5)?,
            ell_m: num(6)?,
            ell_a: num(7)?,
            max_inner: num(8)?,
            a1_a2: num(9)?,
            chi2: num(10)?,
            inner,
            wall_ms: num(12)?.unwrap_or(0.0),
            error: (!rec[13].is_empty()).then(|| rec[13].to_string()),
        });
    }
    Ok(out)
}

/// Writes `<name>_records.csv`, `<name>_summary.csv` and `<name>_spec.json`
/// into `dir`.
pub fn write_suite(dir: &Path, spec: &ExperimentSpec, records: &[ResultRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_records(BufWriter::new(File::create(dir.join(format!("{}_records.csv", spec.name)))?), records)?;
    write_summary(BufWriter::new(File::create(dir.join(format!("{}_summary.csv", spec.name)))?), &summarize(records))?;
    let mut f = BufWriter::new(File::create(dir.join(format!("{}_spec.json", spec.name)))?);
    serde_json::to_writer_pretty(&mut f, spec)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
