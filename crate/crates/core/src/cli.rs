//! Config-driven experiment runner.
//!
//! Every subcommand reads one TOML file, runs a deterministic computation
//! and writes CSV files into the output directory. Floats are written in
//! scientific notation with 17 significant digits; rows are sorted by their
//! leading key columns before writing.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cutoff::CutoffShape;
use crate::discrete::{
    self, BetaSearch, FactorSign, Grid1D, HalflineSpec, Mode, SmoothProfile, TransmissionData,
};
use crate::error::{LabError, Result};
use crate::fit;
use crate::parallel::{self, Execution};
use crate::quasimode::{self, QuadratureSpec, QuasiModeSpec};
use crate::symbols::{
    self, ConditionReport, InterfaceModel, ModelCoefficients, SubellipticityParams, TangentialFrequency,
    WeightSpec,
};

pub const THREADS_ENV: &str = "CARLEMAN_LAB_THREADS";

// ---------------------------------------------------------------------------
// Configuration

/// One side's coefficient matrix, either full or as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SideCoefficients {
    Matrix(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

impl SideCoefficients {
    fn to_matrix(&self, field: &str) -> Result<DMatrix<f64>> {
        match self {
            SideCoefficients::Diagonal(d) => {
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
            }
            SideCoefficients::Matrix(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(LabError::validation(field, "matrix must be square"));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub plus: SideCoefficients,
    pub minus: SideCoefficients,
}

/// `beta = "auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BetaSetting {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for BetaSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BetaSetting::Auto => s.serialize_str("auto"),
            BetaSetting::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(BetaSetting::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(BetaSetting::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "weight.beta must be a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    #[serde(default)]
    pub beta: BetaSetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            x_min: -0.3,
            x_max: 0.3,
            n: 601,
        }
    }
}

/// Geometric range `start * (stop/start)^(k/(count-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub tau: Option<Vec<f64>>,
    pub geometric: Option<GeometricRange>,
    pub mode: Mode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            tau: Some(vec![50.0, 71.0, 100.0, 141.0, 200.0, 283.0, 400.0]),
            geometric: None,
            mode: Mode::Direct,
        }
    }
}

impl SweepConfig {
    pub fn taus(&self) -> Result<Vec<f64>> {
        let list = match (&self.tau, &self.geometric) {
            (Some(_), Some(_)) => {
                return Err(LabError::validation("sweep", "give either `tau` or `geometric`, not both"))
            }
            (Some(t), None) => t.clone(),
            (None, Some(g)) => {
                if !(g.start > 0.0 && g.stop > 0.0 && g.count >= 2) {
                    return Err(LabError::validation(
                        "sweep.geometric",
                        "need start > 0, stop > 0 and count >= 2",
                    ));
                }
                (0..g.count)
                    .map(|k| g.start * (g.stop / g.start).powf(k as f64 / (g.count - 1) as f64))
                    .collect()
            }
            (None, None) => return Err(LabError::validation("sweep.tau", "no tau values given")),
        };
        validate_taus(&list, "sweep.tau")?;
        Ok(list)
    }
}

fn validate_taus(list: &[f64], field: &str) -> Result<()> {
    if list.is_empty() {
        return Err(LabError::validation(field, "empty list"));
    }
    if let Some(t) = list.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(LabError::validation(field, format!("entries must be > 0, got {t}")));
    }
    Ok(())
}

/// `xi' = ratio * tau * direction / |direction|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayConfig {
    /// Defaults to the witness direction of the interface condition.
    pub direction: Option<Vec<f64>>,
    pub ratio: f64,
    /// Use the violation ray instead of `direction`/`ratio`.
    pub violation: bool,
}

impl Default for RayConfig {
    fn default() -> Self {
        RayConfig {
            direction: None,
            ratio: 0.5,
            violation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasimodeConfig {
    pub gamma: f64,
    pub cutoff_width: f64,
    pub cutoff_shape: CutoffShape,
    /// Falls back to the sweep list.
    pub tau: Option<Vec<f64>>,
    pub nodes_per_scale: usize,
    pub xi_nodes: usize,
    pub panel_order: usize,
}

impl Default for QuasimodeConfig {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        QuasimodeConfig {
            gamma: 10.0,
            cutoff_width: 0.05,
            cutoff_shape: CutoffShape::Bump,
            tau: None,
            nodes_per_scale: q.nodes_per_scale,
            xi_nodes: q.xi_nodes,
            panel_order: q.panel_order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsConfig {
    /// Lower end of the `tau` grid (the cover threshold).
    pub tau_min: f64,
    pub tau_max: f64,
    pub xi_max: f64,
    pub n_tau: usize,
    pub n_xi: usize,
    /// Both default to the values derived from the interface condition.
    pub sigma0: Option<f64>,
    pub sigma: Option<f64>,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        RegionsConfig {
            tau_min: 10.0,
            tau_max: 1000.0,
            xi_max: 1000.0,
            n_tau: 200,
            n_xi: 200,
            sigma0: None,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubellipticityConfig {
    pub c_ratio: f64,
    pub c_prime: f64,
    pub delta: f64,
    pub tau: GeometricRange,
    pub xi_over_tau: GeometricRange,
    pub x_samples: usize,
    pub max_doublings: usize,
}

impl Default for SubellipticityConfig {
    fn default() -> Self {
        let p = SubellipticityParams::default();
        let b = BetaSearch::default();
        SubellipticityConfig {
            c_ratio: p.c_ratio,
            c_prime: p.c_prime,
            delta: p.delta,
            tau: GeometricRange {
                start: 1.0,
                stop: 1000.0,
                count: b.taus.len(),
            },
            xi_over_tau: GeometricRange {
                start: 0.01,
                stop: 100.0,
                count: b.xi_over_tau.len(),
            },
            x_samples: b.x_samples,
            max_doublings: b.max_doublings,
        }
    }
}

impl SubellipticityConfig {
    fn search(&self) -> Result<BetaSearch> {
        let geom = |g: &GeometricRange, field: &str| -> Result<Vec<f64>> {
            if !(g.start > 0.0 && g.stop >= g.start && g.count >= 2) {
                return Err(LabError::validation(field, "need 0 < start <= stop and count >= 2"));
            }
            Ok((0..g.count)
                .map(|k| g.start * (g.stop / g.start).powf(k as f64 / (g.count - 1) as f64))
                .collect())
        };
        for (name, v) in [("c_ratio", self.c_ratio), ("c_prime", self.c_prime), ("delta", self.delta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(LabError::validation(format!("subellipticity.{name}"), format!("must be > 0, got {v}")));
            }
        }
        Ok(BetaSearch {
            params: SubellipticityParams {
                c_ratio: self.c_ratio,
                c_prime: self.c_prime,
                delta: self.delta,
            },
            taus: geom(&self.tau, "subellipticity.tau")?,
            xi_over_tau: geom(&self.xi_over_tau, "subellipticity.xi_over_tau")?,
            x_samples: self.x_samples,
            max_doublings: self.max_doublings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorConfig {
    pub lambda: f64,
    pub gamma_slope: f64,
    /// Half-line truncation length.
    pub length: f64,
    /// Cells at the coarsest level; each further level halves `h`.
    pub n0: usize,
    pub levels: usize,
    pub samples: usize,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            lambda: 3.0,
            gamma_slope: 1.0,
            length: 8.0,
            n0: 400,
            levels: 3,
            samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub samples: usize,
    pub smoothness: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            samples: 1000,
            smoothness: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedsConfig {
    pub base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub coefficients: CoefficientsConfig,
    pub weight: WeightConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub ray: RayConfig,
    #[serde(default)]
    pub quasimode: QuasimodeConfig,
    #[serde(default)]
    pub regions: RegionsConfig,
    #[serde(default)]
    pub subellipticity: SubellipticityConfig,
    #[serde(default)]
    pub factor: FactorConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub seeds: SeedsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical text form: every field explicit, fixed key order.
    pub fn to_canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn coefficients(&self) -> Result<ModelCoefficients> {
        let p = self.coefficients.plus.to_matrix("coefficients.plus")?;
        let m = self.coefficients.minus.to_matrix("coefficients.minus")?;
        ModelCoefficients::new(p, m)
    }

    pub fn grid(&self) -> Result<Grid1D> {
        discrete::make_grid(self.grid.x_min, self.grid.x_max, self.grid.n)
    }

    /// Model with `beta` resolved (the automatic search runs on the grid).
    pub fn model(&self) -> Result<InterfaceModel> {
        let coeffs = self.coefficients()?;
        let beta = match self.weight.beta {
            BetaSetting::Value(b) => b,
            BetaSetting::Auto => 1.0,
        };
        let w = WeightSpec::new(self.weight.alpha_plus, self.weight.alpha_minus, beta)?;
        let mut model = InterfaceModel::new(&coeffs, w)?;
        if self.weight.beta == BetaSetting::Auto {
            let grid = self.grid()?;
            model.weight.beta = discrete::select_beta(&model, &grid, &self.subellipticity.search()?)?;
        }
        Ok(model)
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            nodes_per_scale: self.quasimode.nodes_per_scale,
            xi_nodes: self.quasimode.xi_nodes,
            panel_order: self.quasimode.panel_order,
        }
    }

    /// `(unit direction, ratio)` of the sweep ray.
    pub fn ray(&self, model: &InterfaceModel) -> Result<(Vec<f64>, f64)> {
        if self.ray.violation {
            let v = quasimode::find_violation(model).ok_or_else(|| {
                LabError::validation("ray.violation", "the interface condition holds; there is no violation ray")
            })?;
            return Ok((v.direction(), v.ray_ratio()));
        }
        let dir = match &self.ray.direction {
            Some(d) => d.clone(),
            None => symbols::sup_m_ratio(&model.plus, &model.minus).1,
        };
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dir.len() != model.plus.tangential_dim() || !(n > 0.0 && n.is_finite()) {
            return Err(LabError::validation("ray.direction", "must be a nonzero vector of length n - 1"));
        }
        if !(self.ray.ratio.is_finite() && self.ray.ratio >= 0.0) {
            return Err(LabError::validation("ray.ratio", format!("must be >= 0, got {}", self.ray.ratio)));
        }
        Ok((dir.iter().map(|v| v / n).collect(), self.ray.ratio))
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "carleman-lab", version, about = "Carleman estimate laboratory for a flat interface")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (falls back to CARLEMAN_LAB_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Base seed (overrides `seeds.base`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Interface condition report.
    CheckCondition(CommonArgs),
    /// Region labels over a (tau, |xi'|) grid.
    Regions(CommonArgs),
    /// Sampled sub-ellipticity check with margins.
    Subellipticity(CommonArgs),
    /// Smallest singular value along a ray.
    SweepCarleman(CommonArgs),
    /// Quasi-mode norms over a tau list.
    Quasimode(CommonArgs),
    /// Half-line factor identities under mesh refinement.
    FactorEstimates(CommonArgs),
    /// Monte-Carlo ratio of the two sides of the estimate.
    EstimateRatio(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckCondition(_) => "check-condition",
            Command::Regions(_) => "regions",
            Command::Subellipticity(_) => "subellipticity",
            Command::SweepCarleman(_) => "sweep-carleman",
            Command::Quasimode(_) => "quasimode",
            Command::FactorEstimates(_) => "factor-estimates",
            Command::EstimateRatio(_) => "estimate-ratio",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::CheckCondition(c)
            | Command::Regions(c)
            | Command::Subellipticity(c)
            | Command::SweepCarleman(c)
            | Command::Quasimode(c)
            | Command::FactorEstimates(c)
            | Command::EstimateRatio(c) => c,
        }
    }
}

/// Parse arguments, run, print errors to stderr, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_threads(arg: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = arg {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| LabError::validation(THREADS_ENV, format!("not a thread count: {v:?}"))),
        _ => Ok(None),
    }
}

/// Run one subcommand; returns the files written.
pub fn run(cmd: &Command) -> Result<Vec<PathBuf>> {
    let args = cmd.common();
    if let Some(t) = resolve_threads(args.threads)? {
        if t == 0 {
            return Err(LabError::validation("threads", "must be >= 1"));
        }
        parallel::set_threads(t);
    }
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seeds.base = seed;
    }
    let tables = run_tables(cmd.name(), &config, Execution::Parallel)?;
    std::fs::create_dir_all(&config.output.dir)?;
    let mut written = Vec::new();
    for t in tables {
        let path = config.output.dir.join(format!("{}.csv", t.name));
        t.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// Tables

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    B(bool),
    S(String),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::F(v) => write!(f, "{v:.16e}"),
            Cell::I(v) => write!(f, "{v}"),
            Cell::B(v) => write!(f, "{v}"),
            Cell::S(v) => f.write_str(v),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_to(&mut w)?;
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| c.to_string()))?;
        }
        Ok(())
    }
}

macro_rules! cells {
    ($($e:expr),* $(,)?) => { vec![$(Cell::from($e)),*] };
}

/// Compute the tables of one subcommand without touching the filesystem.
pub fn run_tables(subcommand: &str, config: &ExperimentConfig, exec: Execution) -> Result<Vec<Table>> {
    match subcommand {
        "check-condition" => check_condition_table(config),
        "regions" => regions_table(config, exec),
        "subellipticity" => subellipticity_tables(config),
        "sweep-carleman" => sweep_tables(config, exec),
        "quasimode" => quasimode_tables(config, exec),
        "factor-estimates" => factor_tables(config, exec),
        "estimate-ratio" => estimate_tables(config, exec),
        other => Err(LabError::validation("subcommand", format!("unknown subcommand {other:?}"))),
    }
}

fn condition(config: &ExperimentConfig) -> Result<ConditionReport> {
    let coeffs = config.coefficients()?;
    let w = WeightSpec::new(config.weight.alpha_plus, config.weight.alpha_minus, 0.0)?;
    symbols::check_condition(&coeffs, &w)
}

fn check_condition_table(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let rep = condition(config)?;
    let k = rep.witness_direction.len();
    let mut header: Vec<String> = ["satisfied", "alpha_plus", "alpha_minus", "alpha_ratio", "sup_ratio", "sigma", "sigma0"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|j| format!("witness_{j}")));
    let a = &config.weight;
    let mut r = cells![
        rep.satisfied,
        a.alpha_plus,
        a.alpha_minus,
        a.alpha_plus / a.alpha_minus,
        rep.sup_ratio,
        rep.sigma,
        rep.default_sigma0(),
    ];
    r.extend(rep.witness_direction.iter().map(|v| Cell::F(*v)));
    Ok(vec![Table {
        name: "check-condition".into(),
        header,
        rows: vec![r],
    }])
}

fn regions_table(config: &ExperimentConfig, exec: Execution) -> Result<Vec<Table>> {
    let rep = condition(config)?;
    let rc = &config.regions;
    let sigma = rc.sigma.or(rep.sigma).ok_or_else(|| {
        LabError::validation("regions.sigma", "the interface condition fails; give regions.sigma and regions.sigma0")
    })?;
    let sigma0 = rc.sigma0.unwrap_or(0.5 * (1.0 + sigma));
    if !(rc.tau_min > 0.0 && rc.tau_max >= rc.tau_min && rc.xi_max >= 0.0 && rc.n_tau >= 2 && rc.n_xi >= 2) {
        return Err(LabError::validation(
            "regions",
            "need 0 < tau_min <= tau_max, xi_max >= 0, n_tau >= 2, n_xi >= 2",
        ));
    }
    let coeffs = config.coefficients()?;
    let (rp, _) = coeffs.reduce()?;
    let w = WeightSpec::new(config.weight.alpha_plus, config.weight.alpha_minus, 0.0)?;
    let dir = rep.witness_direction.clone();
    let rows = parallel::map_range(exec, rc.n_tau, |i| -> Result<Vec<Vec<Cell>>> {
        let tau = rc.tau_min + (rc.tau_max - rc.tau_min) * i as f64 / (rc.n_tau - 1) as f64;
        (0..rc.n_xi)
            .map(|j| {
                let xa = rc.xi_max * j as f64 / (rc.n_xi - 1) as f64;
                let freq = TangentialFrequency::new(tau, dir.iter().map(|d| d * xa).collect())?;
                let label = symbols::classify_region(&rp, &w, &freq, sigma0, sigma)?;
                Ok(cells![tau, xa, rp.m(&freq.xi), label.as_str()])
            })
            .collect()
    });
    let mut t = Table::new("regions", &["tau", "xi_abs", "m_plus", "label"]);
    for r in rows {
        for c in r? {
            t.push(c);
        }
    }
    Ok(vec![t])
}

fn subellipticity_tables(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let model = config.model()?;
    let grid = config.grid()?;
    let search = config.subellipticity.search()?;
    let samples = discrete::subellipticity_samples(&model, &grid, &search);
    let mut t = Table::new(
        "subellipticity",
        &["side", "x_n", "tau", "xi_abs", "f", "lambda", "q2", "q1", "bracket", "bracket_f", "near_char", "lemma_holds"],
    );
    let mut near = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut ratio_range = (f64::INFINITY, 0.0f64);
    for s in &samples {
        t.push(cells![
            s.side.as_str(),
            s.x_n,
            s.tau,
            s.xi_abs,
            s.f,
            s.lambda,
            s.report.q2,
            s.report.q1,
            s.report.bracket,
            s.report.bracket_f,
            s.near_char,
            s.report.lemma_holds,
        ]);
        if s.near_char {
            near += 1;
            min_margin = min_margin.min(s.report.bracket_f / s.lambda - search.params.c_prime);
            let r = s.tau / s.xi_abs;
            ratio_range = (ratio_range.0.min(r), ratio_range.1.max(r));
        }
    }
    let increasing = discrete::weight_increasing(&model, &grid);
    let pass = increasing && samples.iter().all(|s| s.report.lemma_holds);
    let mut summary = Table::new(
        "subellipticity_summary",
        &["beta", "pass", "phi_prime_positive", "samples", "near_char_samples", "min_beta_margin", "min_tau_over_xi", "max_tau_over_xi"],
    );
    let opt = |v: f64| if near > 0 { Some(v) } else { None };
    summary.push(cells![
        model.weight.beta,
        pass,
        increasing,
        samples.len(),
        near,
        opt(min_margin),
        opt(ratio_range.0),
        opt(ratio_range.1),
    ]);
    Ok(vec![t, summary])
}

fn fit_table(name: &str, f: &fit::LinearFit, beta: f64) -> Table {
    let mut t = Table::new(name, &["slope", "intercept", "r_squared", "beta"]);
    t.push(cells![f.slope, f.intercept, f.r_squared, beta]);
    t
}

fn sweep_tables(config: &ExperimentConfig, exec: Execution) -> Result<Vec<Table>> {
    let model = config.model()?;
    let grid = config.grid()?;
    let (dir, ratio) = config.ray(&model)?;
    let taus = config.sweep.taus()?;
    let sweep = discrete::carleman_sweep(&model, &dir, ratio, &taus, &grid, config.sweep.mode, exec)?;
    let mut t = Table::new("sweep-carleman", &["tau", "xi_abs", "sigma_min", "sigma_over_tau32", "N", "h", "mode"]);
    for r in &sweep.rows {
        t.push(cells![r.tau, r.xi_abs, r.sigma_min, r.sigma_over_tau32, r.n, r.h, r.mode.as_str()]);
    }
    Ok(vec![t, fit_table("sweep-carleman_fit", &sweep.fit, model.weight.beta)])
}

fn quasimode_tables(config: &ExperimentConfig, exec: Execution) -> Result<Vec<Table>> {
    let model = config.model()?;
    let q = &config.quasimode;
    let v = quasimode::find_violation(&model).ok_or_else(|| {
        LabError::validation("weight", "the interface condition holds (or holds with equality); no quasi-mode exists")
    })?;
    let spec = QuasiModeSpec::new(v, q.gamma, q.cutoff_width)?.with_shape(q.cutoff_shape);
    let taus = match &q.tau {
        Some(t) => {
            validate_taus(t, "quasimode.tau")?;
            t.clone()
        }
        None => config.sweep.taus()?,
    };
    let sweep = quasimode::quasimode_norms(&spec, &model, &taus, &config.quadrature(), exec)?;
    let mut t = Table::new("quasimode", &["tau", "norm_residual", "norm_u", "ratio", "norm_u_lower"]);
    for e in &sweep.evals {
        t.push(cells![e.tau, e.norm_residual, e.norm_u, e.ratio, e.norm_u_lower]);
    }
    Ok(vec![t, fit_table("quasimode_fit", &sweep.fit, model.weight.beta)])
}

fn factor_tables(config: &ExperimentConfig, exec: Execution) -> Result<Vec<Table>> {
    let fc = &config.factor;
    if !(fc.lambda > 0.0 && fc.gamma_slope >= 0.0 && fc.length > 0.0 && fc.n0 >= 8 && fc.levels >= 2) {
        return Err(LabError::validation(
            "factor",
            "need lambda > 0, gamma_slope >= 0, length > 0, n0 >= 8, levels >= 2",
        ));
    }
    let base = config.seeds.base;
    let per_sample = parallel::map_range(exec, fc.samples, |k| {
        let prof = SmoothProfile::random(base.wrapping_add(k as u64), fc.length);
        let mut rows = Vec::new();
        let mut summary = Vec::new();
        for sign in [FactorSign::Elliptic, FactorSign::Reversed] {
            let spec = HalflineSpec {
                lambda: fc.lambda,
                gamma_slope: fc.gamma_slope,
                sign,
            };
            let mut residuals = Vec::new();
            let mut min_slack = f64::INFINITY;
            for level in 0..fc.levels {
                let (om, h) = prof.sample(fc.n0 << level);
                let r = discrete::halfline_factor_check(&spec, &om, h);
                residuals.push(r.identity_residual);
                min_slack = min_slack.min(r.slack);
                rows.push((k, sign, level, h, r));
            }
            let orders = fit::observed_orders(&residuals);
            let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
            summary.push((k, sign, min_order, min_slack));
        }
        (rows, summary)
    });
    let sign_str = |s: FactorSign| match s {
        FactorSign::Elliptic => "elliptic",
        FactorSign::Reversed => "reversed",
    };
    let mut t = Table::new(
        "factor-estimates",
        &["sample", "sign", "level", "h", "lhs_sq", "rhs_sq", "slack", "identity_residual"],
    );
    let mut s = Table::new("factor-estimates_summary", &["sample", "sign", "min_observed_order", "min_slack"]);
    for (rows, summary) in per_sample {
        for (k, sign, level, h, r) in rows {
            t.push(cells![k, sign_str(sign), level, h, r.lhs_sq, r.rhs_sq, r.slack, r.identity_residual]);
        }
        for (k, sign, o, m) in summary {
            s.push(cells![k, sign_str(sign), o, m]);
        }
    }
    Ok(vec![t, s])
}

/// Per-`tau` Monte-Carlo statistics of `rhs / lhs` over random admissible
/// functions with homogeneous transmission data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioStats {
    pub tau: f64,
    pub xi_abs: f64,
    pub samples: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub argmax_seed: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_ratio_stats(
    model: &InterfaceModel,
    grid: &Grid1D,
    direction: &[f64],
    ratio: f64,
    taus: &[f64],
    est: &EstimateConfig,
    base_seed: u64,
    exec: Execution,
) -> Result<Vec<RatioStats>> {
    if est.samples == 0 {
        return Err(LabError::validation("estimate.samples", "must be >= 1"));
    }
    let mut out = Vec::new();
    for &tau in taus {
        let freq = TangentialFrequency::new(tau, direction.iter().map(|d| d * ratio * tau).collect())?;
        let data = TransmissionData::default();
        let ratios = parallel::map_range(exec, est.samples, |k| -> Result<f64> {
            let seed = base_seed.wrapping_add(k as u64);
            let v = discrete::random_admissible_v(model, &freq, grid, &data, seed, est.smoothness)?;
            Ok(discrete::estimate_sides(&v, &data, model, &freq, grid)?.ratio)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (imax, max) = ratios
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, r)| if *r > a.1 { (i, *r) } else { a });
        out.push(RatioStats {
            tau,
            xi_abs: freq.xi_abs(),
            samples: est.samples,
            max_ratio: max,
            mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
            argmax_seed: base_seed.wrapping_add(imax as u64),
        });
    }
    out.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Ok(out)
}

fn estimate_tables(config: &ExperimentConfig, exec: Execution) -> Result<Vec<Table>> {
    let model = config.model()?;
    let grid = config.grid()?;
    let (dir, ratio) = config.ray(&model)?;
    let taus = config.sweep.taus()?;
    let stats = estimate_ratio_stats(&model, &grid, &dir, ratio, &taus, &config.estimate, config.seeds.base, exec)?;
    let mut t = Table::new(
        "estimate-ratio",
        &["tau", "xi_abs", "samples", "smoothness", "max_ratio", "mean_ratio", "argmax_seed"],
    );
    for s in stats {
        t.push(cells![s.tau, s.xi_abs, s.samples, config.estimate.smoothness, s.max_ratio, s.mean_ratio, s.argmax_seed]);
    }
    Ok(vec![t])
}
