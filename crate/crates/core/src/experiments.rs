//! Experiment configuration, figure tables and timing runs.
//!
//! A run is described by an [`ExperimentConfig`]. Each figure has its own
//! defaults; a user JSON document is merged on top of them, then the common
//! overrides (seed, realization count, SNR grid) are applied.
//!
//! Figure tables are CSV with one leading `#` comment line carrying the
//! SHA-256 of the resolved configuration and the seed. Every quantity is
//! given in nats and in bits.

use std::f64::consts::{LOG2_E, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::channel::{clustered_correlation, snr_db_to_sigma2, ChannelModel, ClusterSpec, MatrixJson};
use crate::error::{Error, Result};
use crate::largesys::{i_bar, solve_fixed_point, ApproxReport, SpectralSolution, Surrogate};
use crate::matcore::{herm_eig, CMatrix};
use crate::mcsim::{emi_estimate, McEstimate};
use crate::optimize::{
    antenna_selection_iid, antenna_selection_value, assemble_precoder, evaluate_result, optimize_structured, optimize_true_emi, timed,
    AscentOptions, OptimResult, StartPlan, TrueEmiOptions,
};

/// Offset between the evaluation seed and the seed of the draws used inside
/// Monte-Carlo optimizers, so no scheme is scored on the draws it was fitted to.
pub const FIT_SEED_OFFSET: u64 = 1;

/// Precoding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `K = I`.
    None,
    /// Eigen-aligned precoder maximizing `Ī`.
    IbarStructured,
    /// Eigen-aligned precoder maximizing `Î`.
    IhatStructured,
    /// Eigen-aligned precoder maximizing the Monte-Carlo mutual information.
    TrueStructured,
    /// Unconstrained precoder maximizing the Monte-Carlo mutual information.
    TrueGeneral,
    /// Equal power on the `s` strongest transmit modes, `s` from the
    /// uncorrelated closed form.
    AntennaSelection,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::IbarStructured => "ibar_structured",
            Scheme::IhatStructured => "ihat_structured",
            Scheme::TrueStructured => "true_structured",
            Scheme::TrueGeneral => "true_general",
            Scheme::AntennaSelection => "antenna_selection",
        }
    }
}

/// One side of the channel correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSpec {
    Iid,
    /// Clustered model; the array size comes from `t` or `r`.
    Cluster { mean_angle: f64, angle_std: f64 },
    Matrix(MatrixJson),
}

impl CorrelationSpec {
    pub fn build(&self, n: usize) -> Result<CMatrix> {
        match self {
            CorrelationSpec::Iid => Ok(CMatrix::identity(n)),
            CorrelationSpec::Cluster { mean_angle, angle_std } => {
                clustered_correlation(&ClusterSpec::new(*mean_angle, *angle_std, n)?)
            }
            CorrelationSpec::Matrix(m) => {
                let c: CMatrix = m.clone().try_into()?;
                if c.rows() != n || c.cols() != n {
                    return Err(Error::Config(format!("correlation must be {n}x{n}, got {}x{}", c.rows(), c.cols())));
                }
                Ok(c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    pub transmit: CorrelationSpec,
    pub receive: CorrelationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub t: usize,
    pub r: usize,
    pub snr_grid_db: Vec<f64>,
    pub correlation: CorrelationConfig,
    pub n_mc: usize,
    pub seed: u64,
    /// Scheme used by single-scheme commands.
    pub scheme: Scheme,
    /// Schemes compared by figure 5 and timed by the timing run.
    pub schemes: Vec<Scheme>,
    /// Transmit angular variances `σ_φT²` swept by figure 2.
    pub sweep: Vec<f64>,
    /// Active-antenna counts for figures 3 and 4.
    pub active_antennas: Vec<usize>,
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

fn cluster(mean_angle: f64, angle_std: f64) -> CorrelationSpec {
    CorrelationSpec::Cluster { mean_angle, angle_std }
}

impl Default for ExperimentConfig {
    /// The accuracy experiment: 4×4 clustered channel over 0..20 dB.
    fn default() -> Self {
        Self {
            t: 4,
            r: 4,
            snr_grid_db: grid(0.0, 20.0, 2.0),
            correlation: CorrelationConfig { transmit: cluster(PI / 4.0, 0.5), receive: cluster(PI / 12.0, 0.5) },
            n_mc: 1000,
            seed: 0,
            scheme: Scheme::None,
            schemes: vec![Scheme::IbarStructured, Scheme::IhatStructured, Scheme::TrueStructured],
            sweep: grid(0.1, 1.0, 0.1),
            active_antennas: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for figure `id` (1 to 5).
    pub fn for_figure(id: u32) -> Result<Self> {
        let base = Self::default();
        let cfg = match id {
            1 => base,
            2 => Self {
                snr_grid_db: vec![0.0, 6.0],
                correlation: CorrelationConfig { transmit: cluster(PI / 4.0, 0.5), receive: cluster(PI / 12.0, 0.4) },
                ..base
            },
            3 => Self {
                t: 8,
                r: 8,
                correlation: CorrelationConfig { transmit: CorrelationSpec::Iid, receive: CorrelationSpec::Iid },
                active_antennas: vec![6, 8],
                ..base
            },
            4 => Self {
                t: 8,
                r: 8,
                snr_grid_db: vec![15.0],
                correlation: CorrelationConfig { transmit: CorrelationSpec::Iid, receive: CorrelationSpec::Iid },
                active_antennas: (1..=8).collect(),
                ..base
            },
            5 => Self {
                snr_grid_db: grid(0.0, 20.0, 2.5),
                correlation: CorrelationConfig { transmit: cluster(PI / 4.0, 0.5), receive: cluster(PI / 12.0, 0.4) },
                schemes: vec![
                    Scheme::None,
                    Scheme::IbarStructured,
                    Scheme::IhatStructured,
                    Scheme::TrueStructured,
                    Scheme::TrueGeneral,
                ],
                ..base
            },
            _ => return Err(Error::Config(format!("figure id must be 1 to 5, got {id}"))),
        };
        Ok(cfg)
    }

    /// Merges a partial JSON document over `self`. Top-level keys and the
    /// two sides of `correlation` are replaced individually.
    pub fn merged(&self, overrides: &Value) -> Result<Self> {
        if !overrides.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, overrides, 2);
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.t == 0 || self.r == 0 {
            return bad(format!("t and r must be positive, got t = {}, r = {}", self.t, self.r));
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_grid_db is empty".into());
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return bad(format!("non-finite SNR {s}"));
        }
        if self.n_mc < 2 {
            return bad(format!("n_mc must be at least 2, got {}", self.n_mc));
        }
        if let Some(v) = self.sweep.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return bad(format!("sweep values must be finite and nonnegative, got {v}"));
        }
        if let Some(s) = self.active_antennas.iter().find(|&&s| s == 0 || s > self.t) {
            return bad(format!("active antenna count {s} outside 1..={}", self.t));
        }
        self.correlation.transmit.build(self.t).map_err(as_config)?;
        self.correlation.receive.build(self.r).map_err(as_config)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plain struct serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Channel at the first grid SNR.
    pub fn model(&self) -> Result<ChannelModel> {
        self.model_at(self.snr_grid_db[0])
    }

    pub fn model_at(&self, snr_db: f64) -> Result<ChannelModel> {
        ChannelModel::new(
            self.correlation.transmit.build(self.t)?,
            self.correlation.receive.build(self.r)?,
            snr_db_to_sigma2(snr_db),
        )
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn merge(base: &mut Value, over: &Value, depth: usize) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if depth > 0 => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, depth - 1),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Large-system approximations for the unprecoded channel.
pub fn approximations(model: &ChannelModel) -> Result<ApproxReport> {
    i_bar(&solve_fixed_point(model.c_t(), model.c_r(), model.sigma2())?)
}

/// Approximations for an arbitrary feasible precoder.
pub fn approximations_for(model: &ChannelModel, k: &CMatrix) -> Result<ApproxReport> {
    let eff = crate::channel::effective_transmit_correlation(model, k)?;
    i_bar(&solve_fixed_point(&eff, model.c_r(), model.sigma2())?)
}

/// Equal power `t/s` on the `s` strongest transmit modes.
pub fn selection_precoder(c_t: &CMatrix, s: usize) -> Result<CMatrix> {
    let d = herm_eig(c_t)?.eigvals;
    let t = d.len();
    if s == 0 || s > t {
        return Err(Error::Domain(format!("active antenna count {s} outside 1..={t}")));
    }
    let lambda: Vec<f64> =
        d.iter().enumerate().map(|(j, &dj)| if j < s { dj * t as f64 / s as f64 } else { 0.0 }).collect();
    assemble_precoder(c_t, &lambda)
}

/// Runs one precoding scheme on `model`. `None` means `K = I`.
pub fn run_scheme(model: &ChannelModel, scheme: Scheme, n_mc: usize, seed: u64) -> Result<OptimResult> {
    let fixed = |k: CMatrix| -> Result<OptimResult> {
        let lambda = herm_eig(&crate::channel::effective_transmit_correlation(model, &k)?)?.eigvals;
        Ok(OptimResult {
            lambda_opt: lambda.into_iter().map(|l| l.max(0.0)).collect(),
            objective: f64::NAN,
            trace: Vec::new(),
            converged: true,
            iterations: 0,
            precoder: Some(MatrixJson::from(&k)),
            warnings: Vec::new(),
        })
    };
    let sigma2 = model.sigma2();
    match scheme {
        Scheme::None => fixed(CMatrix::identity(model.t())),
        Scheme::AntennaSelection => {
            let (s, _) = antenna_selection_iid(model.t(), sigma2)?;
            fixed(selection_precoder(model.c_t(), s)?)
        }
        Scheme::IbarStructured | Scheme::IhatStructured => {
            let surrogate = if scheme == Scheme::IbarStructured { Surrogate::IBar } else { Surrogate::IHat };
            optimize_structured(
                model.c_t(),
                model.c_r(),
                sigma2,
                surrogate,
                &StartPlan::default(),
                &AscentOptions::default(),
            )
        }
        Scheme::TrueStructured | Scheme::TrueGeneral => {
            optimize_true_emi(model, scheme == Scheme::TrueStructured, n_mc, seed, &TrueEmiOptions::default())
        }
    }
}

/// A scheme's result together with its mutual information on fresh draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub result: OptimResult,
    pub emi: McEstimate,
}

pub fn evaluate_scheme(cfg: &ExperimentConfig, scheme: Scheme, snr_db: f64) -> Result<SchemeOutcome> {
    let model = cfg.model_at(snr_db)?;
    let result = run_scheme(&model, scheme, cfg.n_mc, cfg.seed.wrapping_add(FIT_SEED_OFFSET))?;
    let emi = evaluate_result(&model, &result, cfg.n_mc, cfg.seed)?;
    Ok(SchemeOutcome { scheme, snr_db, result, emi })
}

/// Fixed point and approximations of the unprecoded channel at one SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointRow {
    pub snr_db: f64,
    pub sigma2: f64,
    pub solution: SpectralSolution,
    pub i_hat_nats: f64,
    pub j_bar_nats: f64,
    pub i_bar_nats: f64,
    pub i_bar_bits: f64,
}

pub fn fixed_point_rows(cfg: &ExperimentConfig) -> Result<Vec<FixedPointRow>> {
    cfg.validate()?;
    cfg.snr_grid_db
        .iter()
        .map(|&snr| {
            let model = cfg.model_at(snr)?;
            let fp = solve_fixed_point(model.c_t(), model.c_r(), model.sigma2())?;
            let rep = i_bar(&fp)?;
            Ok(FixedPointRow {
                snr_db: snr,
                sigma2: model.sigma2(),
                solution: fp.spectral(),
                i_hat_nats: rep.i_hat,
                j_bar_nats: rep.j_bar,
                i_bar_nats: rep.i_bar,
                i_bar_bits: rep.i_bar * LOG2_E,
            })
        })
        .collect()
}

/// Monte-Carlo mutual information of the configured scheme at one SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmiRow {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub emi_nats: McEstimate,
    pub mean_bits: f64,
}

pub fn emi_rows(cfg: &ExperimentConfig) -> Result<Vec<EmiRow>> {
    cfg.validate()?;
    cfg.snr_grid_db
        .iter()
        .map(|&snr| {
            let out = evaluate_scheme(cfg, cfg.scheme, snr)?;
            Ok(EmiRow { snr_db: snr, scheme: cfg.scheme, mean_bits: out.emi.mean * LOG2_E, emi_nats: out.emi })
        })
        .collect()
}

/// Antenna-selection values for every `s` at one SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub snr_db: f64,
    pub t: usize,
    pub s_opt: usize,
    pub value_nats: f64,
    pub value_bits: f64,
    /// Objective for `s = 1..=t`, nats.
    pub values_nats: Vec<f64>,
}

pub fn selection_rows(cfg: &ExperimentConfig) -> Result<Vec<SelectionRow>> {
    cfg.validate()?;
    cfg.snr_grid_db
        .iter()
        .map(|&snr| {
            let sigma2 = snr_db_to_sigma2(snr);
            let (s_opt, v) = antenna_selection_iid(cfg.t, sigma2)?;
            Ok(SelectionRow {
                snr_db: snr,
                t: cfg.t,
                s_opt,
                value_nats: v,
                value_bits: v * LOG2_E,
                values_nats: (1..=cfg.t).map(|s| antenna_selection_value(cfg.t, s, sigma2)).collect(),
            })
        })
        .collect()
}

pub fn optimize_rows(cfg: &ExperimentConfig) -> Result<Vec<SchemeOutcome>> {
    cfg.validate()?;
    cfg.snr_grid_db.iter().map(|&snr| evaluate_scheme(cfg, cfg.scheme, snr)).collect()
}

/// A CSV table with named numeric or text columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(&'static str),
}

impl Table {
    /// Index of column `name`.
    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric value of column `name` in row `i`.
    pub fn num(&self, i: usize, name: &str) -> Option<f64> {
        match self.rows.get(i)?.get(self.col(name)?)? {
            Cell::Num(x) => Some(*x),
            Cell::Int(n) => Some(*n as f64),
            Cell::Text(_) => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header_comment: &str) -> Result<()> {
        writeln!(w, "# {header_comment}")?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => format!("{x}"),
                    Cell::Int(n) => n.to_string(),
                    Cell::Text(s) => s.to_string(),
                })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `nats` followed by `bits` for each named quantity.
fn with_bits(names: &[&str]) -> Vec<String> {
    names.iter().flat_map(|n| [format!("{n}_nats"), format!("{n}_bits")]).collect()
}

fn push_both(row: &mut Vec<Cell>, values: &[f64]) {
    for &v in values {
        row.push(Cell::Num(v));
        row.push(Cell::Num(v * LOG2_E));
    }
}

fn table_with(lead: &[&str], quantities: &[&str], tail: &[&str]) -> Table {
    let mut cols: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    cols.extend(with_bits(quantities));
    cols.extend(tail.iter().map(|s| s.to_string()));
    Table { columns: cols, rows: Vec::new() }
}

/// MC mean, its standard error, `Î`, `Ī` for precoder `k`.
fn accuracy_values(model: &ChannelModel, k: &CMatrix, n: usize, seed: u64) -> Result<[f64; 4]> {
    let mc = emi_estimate(model, k, n, seed)?;
    let rep = approximations_for(model, k)?;
    Ok([mc.mean, mc.std_error, rep.i_hat, rep.i_bar])
}

const ACCURACY: [&str; 4] = ["i_mc", "i_mc_stderr", "i_hat", "i_bar"];

fn figure1(cfg: &ExperimentConfig) -> Result<Table> {
    let mut tab = table_with(&["snr_db"], &ACCURACY, &[]);
    for &snr in &cfg.snr_grid_db {
        let model = cfg.model_at(snr)?;
        let mut row = vec![Cell::Num(snr)];
        push_both(&mut row, &accuracy_values(&model, &CMatrix::identity(cfg.t), cfg.n_mc, cfg.seed)?);
        tab.rows.push(row);
    }
    Ok(tab)
}

fn figure2(cfg: &ExperimentConfig) -> Result<Table> {
    let CorrelationSpec::Cluster { mean_angle, .. } = cfg.correlation.transmit else {
        return Err(Error::Config("figure 2 sweeps the transmit angular spread and needs a cluster".into()));
    };
    let mut tab = table_with(&["snr_db", "angle_var_t"], &ACCURACY, &["rel_err_hat", "rel_err_bar"]);
    for &snr in &cfg.snr_grid_db {
        for &v in &cfg.sweep {
            let mut c = cfg.clone();
            c.correlation.transmit = cluster(mean_angle, v.sqrt());
            let model = c.model_at(snr)?;
            let vals = accuracy_values(&model, &CMatrix::identity(cfg.t), cfg.n_mc, cfg.seed)?;
            let mut row = vec![Cell::Num(snr), Cell::Num(v)];
            push_both(&mut row, &vals);
            row.push(Cell::Num((vals[0] - vals[2]).abs() / vals[0]));
            row.push(Cell::Num((vals[0] - vals[3]).abs() / vals[0]));
            tab.rows.push(row);
        }
    }
    Ok(tab)
}

fn figure_selection(cfg: &ExperimentConfig) -> Result<Table> {
    let mut tab = table_with(&["snr_db", "s"], &ACCURACY, &[]);
    for &snr in &cfg.snr_grid_db {
        let model = cfg.model_at(snr)?;
        for &s in &cfg.active_antennas {
            let k = selection_precoder(model.c_t(), s)?;
            let mut row = vec![Cell::Num(snr), Cell::Int(s)];
            push_both(&mut row, &accuracy_values(&model, &k, cfg.n_mc, cfg.seed)?);
            tab.rows.push(row);
        }
    }
    Ok(tab)
}

fn figure5(cfg: &ExperimentConfig) -> Result<Table> {
    let mut tab = table_with(&["snr_db", "scheme"], &["i_mc", "i_mc_stderr"], &["iterations", "converged"]);
    for &snr in &cfg.snr_grid_db {
        for &scheme in &cfg.schemes {
            let out = evaluate_scheme(cfg, scheme, snr)?;
            let mut row = vec![Cell::Num(snr), Cell::Text(scheme.name())];
            push_both(&mut row, &[out.emi.mean, out.emi.std_error]);
            row.push(Cell::Int(out.result.iterations));
            row.push(Cell::Int(out.result.converged as usize));
            tab.rows.push(row);
        }
    }
    Ok(tab)
}

/// Computes the table of figure `id` for `cfg`.
pub fn figure_table(id: u32, cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    match id {
        1 => figure1(cfg),
        2 => figure2(cfg),
        3 | 4 => figure_selection(cfg),
        5 => figure5(cfg),
        _ => Err(Error::Config(format!("figure id must be 1 to 5, got {id}"))),
    }
}

/// Writes figure `id` as CSV.
pub fn run_figure<W: Write>(id: u32, cfg: &ExperimentConfig, out: W) -> Result<()> {
    let tab = figure_table(id, cfg)?;
    tab.write_csv(out, &format!("figure={id} config_sha256={} seed={}", cfg.hash(), cfg.seed))
}

/// Wall-clock seconds per scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    pub seconds: std::collections::BTreeMap<String, f64>,
    pub t: usize,
    pub r: usize,
    pub snr_db: f64,
    pub n_mc: usize,
    pub hardware: String,
}

pub fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).map(|l| l.split(':').nth(1).unwrap_or("").trim().to_string()))
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu}; {threads} threads; {}-{}", std::env::consts::OS, std::env::consts::ARCH)
}

/// Times each configured scheme once at the first grid SNR.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<TimingReport> {
    cfg.validate()?;
    let model = cfg.model()?;
    let mut seconds = std::collections::BTreeMap::new();
    for &scheme in &cfg.schemes {
        let (res, secs) = timed(|| run_scheme(&model, scheme, cfg.n_mc, cfg.seed));
        res?;
        seconds.insert(scheme.name().to_string(), secs);
    }
    Ok(TimingReport {
        seconds,
        t: cfg.t,
        r: cfg.r,
        snr_db: cfg.snr_grid_db[0],
        n_mc: cfg.n_mc,
        hardware: hardware_note(),
    })
}
