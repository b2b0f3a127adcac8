//! Command-line harness: JSON experiment configs in, JSON/CSV reports out.
//!
//! Subcommands: `index` (one model, all requested index methods),
//! `bec-check` (replicated bulk/edge/Lyapunov agreement), `phase-scan`
//! (parameter sweep CSV), `lyapunov` (spectra only), `winding`
//! (translation-invariant symbol only).
//!
//! Exit codes: 0 success, 1 error, 2 completed with non-convergence flags.
//! Output is a pure function of config + seed; `--threads` affects
//! scheduling only.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ensembles::{generate, sweep, Dist, DisorderSpec, SweepCell, SweepGrid};
use crate::error::{ChiralError, Result};
use crate::indices::{
    bulk_index_fermi, bulk_index_polar, bulk_index_proj_pair, bulk_index_sigma,
    edge_index_kernel_svd, edge_index_window, open_window_matrix, polar_unitary,
    ti_index_eigencount, winding_number, BlochSymbol, IndexReport, Winding, KERNEL_DECAY_RHO,
    POLAR_DELTA_DEFAULT,
};
use crate::lyapunov::{
    dual_spectrum, energy_resolved_spectrum, lyapunov_spectrum, negative_count,
    transfer_matrices, QR_PERIOD_DEFAULT,
};
use crate::model::{build_operator, build_s, BoundarySpec, SwitchFunction, KAPPA_MAX_DEFAULT};
use crate::spectral::{
    adaptive_eps_zero, diagonalize, fermi_projection, kernel_decay_profile, zero_projection,
    Side,
};
use crate::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BulkSigma,
    BulkFermi,
    BulkPolar,
    ProjPair,
    EdgeWindow,
    EdgeKernel,
    Lyapunov,
    Dual,
    Winding,
    Eigencount,
    EnergyResolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn default_kappa_max() -> f64 {
    KAPPA_MAX_DEFAULT
}
fn default_qr_period() -> usize {
    QR_PERIOD_DEFAULT
}
fn default_lyap_steps() -> usize {
    100_000
}
fn default_switch_width() -> u32 {
    1
}
fn default_polar_delta() -> f64 {
    POLAR_DELTA_DEFAULT
}
fn default_residual_threshold() -> f64 {
    0.05
}
fn default_eps_sv() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Numerics {
    /// Near-zero threshold; absent means the adaptive spectral-cluster cut.
    pub eps_zero: Option<f64>,
    pub kappa_max: f64,
    pub qr_period: usize,
    pub lyap_steps: usize,
    /// Switch step site; absent means the window center.
    pub switch_center: Option<i64>,
    /// Ramp width in sites; 1 is a sharp step.
    pub switch_width: u32,
    pub polar_delta: f64,
    /// `|bulk_raw - round|` below this counts as converged.
    pub residual_threshold: f64,
    /// Fit the Fermi-kernel decay rate per row (costs a dense projection).
    pub compute_mu_fit: bool,
    /// Singular-value threshold for the kernel cross-check.
    pub edge_kernel_eps_sv: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            eps_zero: None,
            kappa_max: default_kappa_max(),
            qr_period: default_qr_period(),
            lyap_steps: default_lyap_steps(),
            switch_center: None,
            switch_width: default_switch_width(),
            polar_delta: default_polar_delta(),
            residual_threshold: default_residual_threshold(),
            compute_mu_fit: false,
            edge_kernel_eps_sv: default_eps_sv(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSpec {
    pub methods: Vec<Method>,
    #[serde(default)]
    pub lambda_list: Vec<f64>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Sweep section for `bec-check` (replicas of one point) and `phase-scan`
/// (grid of parameter values).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepSection {
    /// Which model knob the grid values set: `mu_log` (location of the log
    /// of the B distribution), `b`, or `a` (constant couplings).
    #[serde(default)]
    pub parameter: String,
    #[serde(default)]
    pub values: Vec<f64>,
    pub seeds_per_point: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub model: DisorderSpec,
    #[serde(default)]
    pub numerics: Numerics,
    pub run: RunSpec,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            ChiralError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.methods.is_empty() {
            return Err(ChiralError::Config("run.methods must be non-empty".into()));
        }
        if self.numerics.qr_period == 0 || self.numerics.lyap_steps == 0 {
            return Err(ChiralError::Config(
                "qr_period and lyap_steps must be positive".into(),
            ));
        }
        self.model.a_dist.validate()?;
        self.model.b_dist.validate()?;
        Ok(())
    }
}

/// Constant matrices of a translation-invariant model, or an error if the
/// config describes disorder.
fn constant_pair(model: &DisorderSpec) -> Result<(CMat, CMat)> {
    let (av, bv) = match (&model.a_dist, &model.b_dist) {
        (Dist::Const { value: a }, Dist::Const { value: b }) => (*a, *b),
        _ => {
            return Err(ChiralError::Config(
                "winding/eigencount need a translation-invariant model \
                 (const distributions)"
                    .into(),
            ))
        }
    };
    let n = model.channels;
    Ok((
        CMat::identity(n, n) * crate::c(av),
        CMat::identity(n, n) * crate::c(bv),
    ))
}

fn set_model_parameter(model: &DisorderSpec, parameter: &str, v: f64) -> Result<DisorderSpec> {
    let mut m = model.clone();
    match parameter {
        "mu_log" => {
            m.b_dist = match &m.b_dist {
                Dist::LogNormal { sigma_log, .. } => Dist::LogNormal {
                    mu_log: v,
                    sigma_log: *sigma_log,
                },
                Dist::LogUniform { lo, hi } => {
                    let half = 0.5 * (hi.ln() - lo.ln());
                    Dist::LogUniform {
                        lo: (v - half).exp(),
                        hi: (v + half).exp(),
                    }
                }
                Dist::Const { .. } => Dist::Const { value: v.exp() },
                other => {
                    return Err(ChiralError::Config(format!(
                        "parameter mu_log cannot reposition {other:?}"
                    )))
                }
            }
        }
        "b" => m.b_dist = Dist::Const { value: v },
        "a" => m.a_dist = Dist::Const { value: v },
        other => {
            return Err(ChiralError::Config(format!(
                "unknown sweep parameter {other:?} (expected mu_log, b, or a)"
            )))
        }
    }
    Ok(m)
}

/// One sweep row in the fixed CSV schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowRecord {
    pub seed: u64,
    pub point_value: f64,
    pub l: usize,
    pub n: usize,
    pub bulk_raw: Option<f64>,
    pub bulk: Option<i64>,
    pub edge_raw: Option<f64>,
    pub edge: Option<i64>,
    pub lyap_count: Option<i64>,
    pub lyap_confident: Option<bool>,
    pub winding: Option<i64>,
    pub min_abs_eig: Option<f64>,
    pub zero_gap_ratio: Option<f64>,
    pub mu_fit: Option<f64>,
    pub zero_margin: Option<f64>,
    pub agree: Option<bool>,
    pub status: String,
}

pub const CSV_HEADER: &str = "seed,point_value,L,N,bulk_raw,bulk,edge_raw,edge,lyap_count,\
                              lyap_confident,winding,min_abs_eig,zero_gap_ratio,mu_fit,\
                              zero_margin,agree,status";

fn fmt_f(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v.is_nan() => "nan".into(),
        Some(v) if v.is_infinite() => (if v > 0.0 { "inf" } else { "-inf" }).into(),
        Some(v) => format!("{v:.12e}"),
    }
}

fn fmt_i(x: Option<i64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_b(x: Option<bool>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RowRecord {
    pub fn csv_line(&self) -> String {
        [
            self.seed.to_string(),
            fmt_f(Some(self.point_value)),
            self.l.to_string(),
            self.n.to_string(),
            fmt_f(self.bulk_raw),
            fmt_i(self.bulk),
            fmt_f(self.edge_raw),
            fmt_i(self.edge),
            fmt_i(self.lyap_count),
            fmt_b(self.lyap_confident),
            fmt_i(self.winding),
            fmt_f(self.min_abs_eig),
            fmt_f(self.zero_gap_ratio),
            fmt_f(self.mu_fit),
            fmt_f(self.zero_margin),
            fmt_b(self.agree),
            self.status.clone(),
        ]
        .join(",")
    }

    /// "ok" status and every computed flag healthy.
    pub fn converged(&self) -> bool {
        self.status == "ok" && self.lyap_confident != Some(false) && self.agree != Some(false)
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

/// Computes one (model, seed) row. Every failure is captured in the row's
/// `status`; this function never propagates errors.
pub fn compute_row(
    model: &DisorderSpec,
    numerics: &Numerics,
    methods: &[Method],
    point_value: f64,
) -> RowRecord {
    let mut row = RowRecord {
        seed: model.seed,
        point_value,
        l: model.length,
        n: model.channels,
        bulk_raw: None,
        bulk: None,
        edge_raw: None,
        edge: None,
        lyap_count: None,
        lyap_confident: None,
        winding: None,
        min_abs_eig: None,
        zero_gap_ratio: None,
        mu_fit: None,
        zero_margin: None,
        agree: None,
        status: "ok".into(),
    };
    if let Err(e) = try_fill_row(model, numerics, methods, &mut row) {
        row.status = sanitize(&e.to_string());
    }
    row
}

fn try_fill_row(
    model: &DisorderSpec,
    numerics: &Numerics,
    methods: &[Method],
    row: &mut RowRecord,
) -> Result<()> {
    let has = |m: Method| methods.contains(&m);
    let chain = generate(model)?;

    let needs_spectral = has(Method::BulkSigma) || has(Method::BulkFermi) || has(Method::EdgeWindow);
    if needs_spectral {
        let op = build_operator(&chain, &BoundarySpec::DirichletCut)?;
        let mut sd = diagonalize(&op)?;
        sd.eps_zero = match numerics.eps_zero {
            Some(e) => e,
            None => adaptive_eps_zero(&sd, model.channels).0,
        };
        row.min_abs_eig = sd
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
        let zp = zero_projection(&sd, sd.eps_zero);
        row.zero_gap_ratio = Some(zp.gap_ratio);

        let center = numerics
            .switch_center
            .unwrap_or(chain.n_min + chain.len() as i64 / 2);
        let sw = SwitchFunction::smooth(center, numerics.switch_width);
        let lam = op.basis_map.switch_diag_h(&sw);

        if has(Method::BulkSigma) {
            let raw = bulk_index_sigma(&sd, &op.pi, &lam)?;
            row.bulk_raw = Some(raw);
            row.bulk = Some(raw.round() as i64);
        } else if has(Method::BulkFermi) {
            let raw = bulk_index_fermi(&sd, &op.pi, &lam)?;
            row.bulk_raw = Some(raw);
            row.bulk = Some(raw.round() as i64);
        }
        if has(Method::EdgeWindow) {
            let e = edge_index_window(&sd, &op.pi, &lam, sd.eps_zero);
            row.edge_raw = Some(e.raw);
            row.edge = Some(e.rounded);
            if !e.converged {
                return Err(ChiralError::InsufficientData(format!(
                    "edge window value {:.3} is not near an integer",
                    e.raw
                )));
            }
        }
        if numerics.compute_mu_fit {
            let p = fermi_projection(&sd, Side::Below, false)?;
            match kernel_decay_profile(&p, &op.basis_map) {
                Ok(prof) => row.mu_fit = Some(prof.mu_fit),
                Err(_) => row.mu_fit = Some(f64::NAN),
            }
        }
    }

    if has(Method::Lyapunov) {
        let ts = transfer_matrices(&chain)?;
        let spec = lyapunov_spectrum(&ts, numerics.lyap_steps, numerics.qr_period)?;
        let (count, confident) = negative_count(&spec);
        row.lyap_count = Some(count as i64);
        row.lyap_confident = Some(confident);
        row.zero_margin = Some(spec.zero_margin);
    }

    if has(Method::Winding) || has(Method::Eigencount) {
        let (a, b) = constant_pair(model)?;
        if has(Method::Winding) {
            let w = winding_number(&BlochSymbol::nearest_neighbor(a.clone(), b.clone()), 64)?;
            row.winding = Some(w.index);
        } else {
            row.winding = Some(ti_index_eigencount(&a, &b)? as i64);
        }
    }

    // agreement across whatever integers were computed
    let ints: Vec<i64> = [row.bulk, row.edge, row.lyap_count, row.winding]
        .into_iter()
        .flatten()
        .collect();
    if ints.len() >= 2 || row.bulk.is_some() {
        let mut ok = ints.windows(2).all(|w| w[0] == w[1]);
        if let (Some(raw), Some(bulk)) = (row.bulk_raw, row.bulk) {
            ok &= (raw - bulk as f64).abs() < numerics.residual_threshold;
        }
        row.agree = Some(ok);
    }
    Ok(())
}

fn write_output(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, content)?,
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

/// Single-model index report (subcommand `index`).
pub fn cmd_index(cfg: &ExperimentConfig) -> Result<(IndexReport, i32)> {
    let model = &cfg.model;
    let numerics = &cfg.numerics;
    let methods = &cfg.run.methods;
    let has = |m: Method| methods.contains(&m);
    let mut diagnostics = BTreeMap::new();
    let mut flags_ok = true;

    let chain = generate(model)?;
    let center = numerics
        .switch_center
        .unwrap_or(chain.n_min + chain.len() as i64 / 2);
    let sw = SwitchFunction::smooth(center, numerics.switch_width);

    let mut bulk_raw = f64::NAN;
    let mut edge_raw = f64::NAN;
    let mut edge = None;
    let mut lyap = None;
    let mut winding = None;

    let needs_spectral = has(Method::BulkSigma) || has(Method::BulkFermi) || has(Method::EdgeWindow);
    if needs_spectral {
        let op = build_operator(&chain, &BoundarySpec::DirichletCut)?;
        let mut sd = diagonalize(&op)?;
        sd.eps_zero = match numerics.eps_zero {
            Some(e) => e,
            None => adaptive_eps_zero(&sd, model.channels).0,
        };
        diagnostics.insert("eps_zero".into(), sd.eps_zero);
        let min_abs = sd.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        diagnostics.insert("min_abs_eig".into(), min_abs);
        let zp = zero_projection(&sd, sd.eps_zero);
        diagnostics.insert("zero_gap_ratio".into(), zp.gap_ratio);
        let lam = op.basis_map.switch_diag_h(&sw);

        if has(Method::BulkSigma) {
            bulk_raw = bulk_index_sigma(&sd, &op.pi, &lam)?;
            diagnostics.insert("bulk_sigma".into(), bulk_raw);
        }
        if has(Method::BulkFermi) {
            let f = bulk_index_fermi(&sd, &op.pi, &lam)?;
            diagnostics.insert("bulk_fermi".into(), f);
            if has(Method::BulkSigma) {
                diagnostics.insert("sigma_fermi_gap".into(), (bulk_raw - f).abs());
            } else {
                bulk_raw = f;
            }
        }
        if has(Method::EdgeWindow) {
            let e = edge_index_window(&sd, &op.pi, &lam, sd.eps_zero);
            edge_raw = e.raw;
            edge = Some(e.rounded);
            diagnostics.insert("edge_converged".into(), f64::from(e.converged));
            flags_ok &= e.converged;
        }
        if numerics.compute_mu_fit {
            let p = fermi_projection(&sd, Side::Below, false)?;
            if let Ok(prof) = kernel_decay_profile(&p, &op.basis_map) {
                diagnostics.insert("mu_fit".into(), prof.mu_fit);
            }
        }
    }

    if has(Method::BulkPolar) || has(Method::ProjPair) {
        let s = build_s(&chain, &BoundarySpec::DirichletCut)?;
        let map = crate::model::BasisMap {
            n_min: chain.n_min,
            n_sites: chain.len(),
            channels: chain.channels,
        };
        if has(Method::BulkPolar) {
            let lam_k = map.switch_diag_k(&sw);
            let v = bulk_index_polar(&s, &lam_k, numerics.polar_delta)?;
            diagnostics.insert("bulk_polar".into(), v);
        }
        if has(Method::ProjPair) {
            let u = polar_unitary(&s, numerics.polar_delta)?;
            let v = bulk_index_proj_pair(&u, center - 1, &map)?;
            diagnostics.insert("proj_pair".into(), v);
        }
    }

    if has(Method::EdgeKernel) {
        let m = open_window_matrix(&chain, chain.n_min, chain.n_max())?;
        let v = edge_index_kernel_svd(
            &m,
            numerics.edge_kernel_eps_sv,
            chain.channels,
            KERNEL_DECAY_RHO,
        )?;
        diagnostics.insert("edge_kernel".into(), v as f64);
    }

    if has(Method::Lyapunov) {
        let ts = transfer_matrices(&chain)?;
        let spec = lyapunov_spectrum(&ts, numerics.lyap_steps, numerics.qr_period)?;
        let (count, confident) = negative_count(&spec);
        lyap = Some(count as i64);
        diagnostics.insert("zero_margin".into(), spec.zero_margin);
        diagnostics.insert("zero_margin_error".into(), spec.zero_margin_error);
        diagnostics.insert("lyap_confident".into(), f64::from(confident));
        flags_ok &= confident;
        if has(Method::Dual) {
            let dual = dual_spectrum(&ts, numerics.lyap_steps, numerics.qr_period)?;
            let n = spec.exponents.len();
            let defect = (0..n)
                .map(|i| (dual.exponents[i] + spec.exponents[n - 1 - i]).abs())
                .fold(0.0_f64, f64::max);
            diagnostics.insert("dual_defect".into(), defect);
        }
    }

    if has(Method::EnergyResolved) {
        for &lambda in &cfg.run.lambda_list {
            let g = energy_resolved_spectrum(&chain, lambda, numerics.lyap_steps, numerics.qr_period)?;
            let min_abs = g.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
            diagnostics.insert(format!("energy_margin[{lambda}]"), min_abs);
        }
    }

    if has(Method::Winding) {
        let (a, b) = constant_pair(model)?;
        let w = winding_number(&BlochSymbol::nearest_neighbor(a, b), 64)?;
        winding = Some(w.index);
        diagnostics.insert("winding_residual".into(), w.residual);
    }
    if has(Method::Eigencount) {
        let (a, b) = constant_pair(model)?;
        let v = ti_index_eigencount(&a, &b)?;
        diagnostics.insert("eigencount".into(), v as f64);
        if winding.is_none() {
            winding = Some(v as i64);
        }
    }

    let bulk = if bulk_raw.is_nan() {
        None
    } else {
        Some(bulk_raw.round() as i64)
    };
    let ints: Vec<i64> = [bulk, edge, lyap, winding].into_iter().flatten().collect();
    let mut agree = ints.windows(2).all(|w| w[0] == w[1]);
    let bulk_residual = bulk.map_or(f64::NAN, |b| (bulk_raw - b as f64).abs());
    if bulk.is_some() {
        agree &= bulk_residual < numerics.residual_threshold;
        flags_ok &= bulk_residual < numerics.residual_threshold;
    }

    let pivot = bulk.or(edge).or(lyap).or(winding).unwrap_or(0);
    let report = IndexReport {
        bulk_raw,
        bulk: bulk.unwrap_or(pivot),
        bulk_residual,
        edge: edge.unwrap_or(pivot),
        edge_window_raw: edge_raw,
        lyapunov_count: lyap,
        winding,
        agree,
        diagnostics,
    };
    let exit = if !agree || !flags_ok { 2 } else { 0 };
    Ok((report, exit))
}

/// Summary emitted by `bec-check` beside the per-replica rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BecSummary {
    pub rows: usize,
    pub confident_rows: usize,
    pub agreeing_confident_rows: usize,
    pub agreement_fraction: f64,
    pub max_bulk_residual: f64,
}

fn sweep_rows(
    cfg: &ExperimentConfig,
    grid: &SweepGrid,
    parameter: &str,
    methods: &[Method],
) -> Result<Vec<RowRecord>> {
    let rows = sweep(grid, |cell: &SweepCell| {
        let model = match set_model_parameter(&cfg.model, parameter, cell.point_value) {
            Ok(mut m) => {
                m.seed = cell.seed;
                m
            }
            Err(e) => {
                let mut r = compute_row(&cfg.model, &cfg.numerics, &[], cell.point_value);
                r.seed = cell.seed;
                r.status = sanitize(&e.to_string());
                return r;
            }
        };
        compute_row(&model, &cfg.numerics, methods, cell.point_value)
    })?;
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Replicated bulk/edge/Lyapunov agreement check (subcommand `bec-check`).
pub fn cmd_bec_check(cfg: &ExperimentConfig) -> Result<(Vec<RowRecord>, BecSummary, i32)> {
    let sweep_cfg = cfg.sweep.as_ref().ok_or_else(|| {
        ChiralError::Usage("bec-check needs a sweep section with seeds_per_point".into())
    })?;
    if sweep_cfg.seeds_per_point == 0 {
        return Err(ChiralError::Usage("seeds_per_point must be positive".into()));
    }
    // single point: the model as configured, labeled by E log|T|
    let label = cfg.model.b_dist.mean_log() - cfg.model.a_dist.mean_log();
    let grid = SweepGrid {
        parameter: String::new(),
        values: vec![label],
        seeds_per_point: sweep_cfg.seeds_per_point,
        base_seed: cfg.model.seed,
    };
    let mut methods = cfg.run.methods.clone();
    for required in [Method::BulkSigma, Method::EdgeWindow, Method::Lyapunov] {
        if !methods.contains(&required) {
            methods.push(required);
        }
    }
    let rows = sweep(&grid, |cell: &SweepCell| {
        let mut m = cfg.model.clone();
        m.seed = cell.seed;
        compute_row(&m, &cfg.numerics, &methods, cell.point_value)
    })?;
    let rows: Vec<RowRecord> = rows.into_iter().map(|(_, r)| r).collect();

    let confident: Vec<&RowRecord> = rows
        .iter()
        .filter(|r| r.status == "ok" && r.lyap_confident == Some(true))
        .collect();
    let agreeing = confident.iter().filter(|r| r.agree == Some(true)).count();
    let max_res = rows
        .iter()
        .filter_map(|r| Some((r.bulk_raw? - r.bulk? as f64).abs()))
        .fold(0.0_f64, f64::max);
    let summary = BecSummary {
        rows: rows.len(),
        confident_rows: confident.len(),
        agreeing_confident_rows: agreeing,
        agreement_fraction: if confident.is_empty() {
            0.0
        } else {
            agreeing as f64 / confident.len() as f64
        },
        max_bulk_residual: max_res,
    };
    let exit = if rows.iter().all(|r| r.converged()) { 0 } else { 2 };
    Ok((rows, summary, exit))
}

/// Parameter sweep (subcommand `phase-scan`).
pub fn cmd_phase_scan(cfg: &ExperimentConfig) -> Result<(Vec<RowRecord>, i32)> {
    let sweep_cfg = cfg.sweep.as_ref().ok_or_else(|| {
        ChiralError::Usage("phase-scan needs a sweep section with values".into())
    })?;
    if sweep_cfg.values.is_empty() {
        return Err(ChiralError::Usage("sweep.values must be non-empty".into()));
    }
    let grid = SweepGrid {
        parameter: sweep_cfg.parameter.clone(),
        values: sweep_cfg.values.clone(),
        seeds_per_point: sweep_cfg.seeds_per_point.max(1),
        base_seed: cfg.model.seed,
    };
    let rows = sweep_rows(cfg, &grid, &sweep_cfg.parameter, &cfg.run.methods)?;
    let exit = if rows.iter().all(|r| r.converged()) { 0 } else { 2 };
    Ok((rows, exit))
}

/// Lyapunov spectra only (subcommand `lyapunov`).
pub fn cmd_lyapunov(cfg: &ExperimentConfig) -> Result<(serde_json::Value, i32)> {
    let chain = generate(&cfg.model)?;
    let ts = transfer_matrices(&chain)?;
    let spec = lyapunov_spectrum(&ts, cfg.numerics.lyap_steps, cfg.numerics.qr_period)?;
    let (count, confident) = negative_count(&spec);
    let mut out = serde_json::json!({
        "exponents": spec.exponents,
        "steps_used": spec.steps_used,
        "zero_margin": spec.zero_margin,
        "zero_margin_error": spec.zero_margin_error,
        "negative_count": count,
        "confident": confident,
    });
    if cfg.run.methods.contains(&Method::Dual) {
        let dual = dual_spectrum(&ts, cfg.numerics.lyap_steps, cfg.numerics.qr_period)?;
        out["dual_exponents"] = serde_json::json!(dual.exponents);
    }
    if cfg.run.methods.contains(&Method::EnergyResolved) {
        let mut per_lambda = serde_json::Map::new();
        for &lambda in &cfg.run.lambda_list {
            let g = energy_resolved_spectrum(
                &chain,
                lambda,
                cfg.numerics.lyap_steps,
                cfg.numerics.qr_period,
            )?;
            per_lambda.insert(lambda.to_string(), serde_json::json!(g));
        }
        out["energy_resolved"] = serde_json::Value::Object(per_lambda);
    }
    let exit = if confident { 0 } else { 2 };
    Ok((out, exit))
}

/// Winding of the translation-invariant symbol (subcommand `winding`).
pub fn cmd_winding(cfg: &ExperimentConfig) -> Result<(Winding, i32)> {
    let (a, b) = constant_pair(&cfg.model)?;
    let w = winding_number(&BlochSymbol::nearest_neighbor(a, b), 64)?;
    Ok((w, 0))
}

#[derive(Debug, Parser)]
#[command(name = "chiralind", version, about = "Topological indices of 1-D chiral chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the model/base seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config's output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads (scheduling only, never results); falls back to
    /// CHIRALIND_THREADS, then to the rayon default.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run the requested index methods on one model.
    Index,
    /// Replicated bulk-edge-Lyapunov agreement check.
    BecCheck,
    /// Parameter sweep emitting the fixed-schema CSV.
    PhaseScan,
    /// Lyapunov spectra (primal, dual, energy-resolved).
    Lyapunov,
    /// Winding number of the translation-invariant symbol.
    Winding,
}

pub fn thread_count(cli_threads: Option<usize>) -> Option<usize> {
    cli_threads.or_else(|| {
        std::env::var("CHIRALIND_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    })
}

fn rows_to_csv(rows: &[RowRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ChiralError::Usage("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.model.seed = seed;
    }
    if let Some(fmt) = cli.format {
        cfg.run.format = fmt;
    }
    Ok(cfg)
}

/// Executes a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        CliCommand::Index => {
            let (report, code) = cmd_index(&cfg)?;
            let text = match cfg.run.format {
                OutputFormat::Json => format!("{}\n", serde_json::to_string_pretty(&report)?),
                OutputFormat::Csv => {
                    let row = compute_row(&cfg.model, &cfg.numerics, &cfg.run.methods, 0.0);
                    rows_to_csv(&[row])
                }
            };
            write_output(out, &text)?;
            Ok(code)
        }
        CliCommand::BecCheck => {
            let (rows, summary, code) = cmd_bec_check(&cfg)?;
            match cfg.run.format {
                OutputFormat::Csv => {
                    write_output(out, &rows_to_csv(&rows))?;
                    println!("{}", serde_json::to_string(&summary)?);
                }
                OutputFormat::Json => {
                    let text = format!(
                        "{}\n",
                        serde_json::to_string_pretty(&serde_json::json!({
                            "rows": rows,
                            "summary": summary,
                        }))?
                    );
                    write_output(out, &text)?;
                }
            }
            Ok(code)
        }
        CliCommand::PhaseScan => {
            let (rows, code) = cmd_phase_scan(&cfg)?;
            let text = match cfg.run.format {
                OutputFormat::Csv => rows_to_csv(&rows),
                OutputFormat::Json => format!("{}\n", serde_json::to_string_pretty(&rows)?),
            };
            write_output(out, &text)?;
            Ok(code)
        }
        CliCommand::Lyapunov => {
            let (value, code) = cmd_lyapunov(&cfg)?;
            write_output(out, &format!("{}\n", serde_json::to_string_pretty(&value)?))?;
            Ok(code)
        }
        CliCommand::Winding => {
            let (w, code) = cmd_winding(&cfg)?;
            write_output(out, &format!("{}\n", serde_json::to_string_pretty(&w)?))?;
            Ok(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::Structure;

    fn clean_config(b: f64) -> ExperimentConfig {
        ExperimentConfig {
            model: DisorderSpec {
                channels: 1,
                length: 120,
                a_dist: Dist::Const { value: 1.0 },
                b_dist: Dist::Const { value: b },
                structure: Structure::Clean,
                seed: 1,
            },
            numerics: Numerics::default(),
            run: RunSpec {
                methods: vec![
                    Method::BulkSigma,
                    Method::BulkFermi,
                    Method::EdgeWindow,
                    Method::Lyapunov,
                    Method::Winding,
                ],
                lambda_list: vec![],
                format: OutputFormat::Json,
            },
            sweep: None,
        }
    }

    #[test]
    fn config_round_trips() {
        let cfg = clean_config(0.5);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let again = serde_json::to_string(&back).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn index_clean_topological_all_agree() {
        let (report, code) = cmd_index(&clean_config(0.5)).unwrap();
        assert_eq!(code, 0);
        assert!(report.agree);
        assert_eq!(report.bulk, 1);
        assert_eq!(report.edge, 1);
        assert_eq!(report.lyapunov_count, Some(1));
        assert_eq!(report.winding, Some(1));
        assert!(report.bulk_residual < 1e-3);
    }

    #[test]
    fn index_clean_trivial() {
        let (report, code) = cmd_index(&clean_config(2.0)).unwrap();
        assert_eq!(code, 0);
        assert!(report.agree);
        assert_eq!(report.bulk, 0);
        assert_eq!(report.winding, Some(0));
    }

    #[test]
    fn winding_requires_translation_invariance() {
        let mut cfg = clean_config(0.5);
        cfg.model.structure = Structure::ScalarDiag;
        cfg.model.b_dist = Dist::LogNormal {
            mu_log: -0.5,
            sigma_log: 0.3,
        };
        assert!(cmd_winding(&cfg).is_err());
    }

    #[test]
    fn csv_row_schema() {
        let cfg = clean_config(0.5);
        let row = compute_row(&cfg.model, &cfg.numerics, &cfg.run.methods, -0.7);
        assert_eq!(row.status, "ok");
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        assert_eq!(CSV_HEADER.split(',').count(), 17);
    }

    #[test]
    fn row_captures_failures() {
        let mut cfg = clean_config(0.5);
        cfg.model.b_dist = Dist::Const { value: 1.0 };
        // |A| = |B|: gap closed at the band center; winding must fail
        let row = compute_row(&cfg.model, &cfg.numerics, &[Method::Winding], 0.0);
        assert_ne!(row.status, "ok");
        assert!(!row.status.contains(','));
    }

    #[test]
    fn set_parameter_variants() {
        let base = clean_config(0.5).model;
        let m = set_model_parameter(&base, "b", 1.5).unwrap();
        assert_eq!(m.b_dist, Dist::Const { value: 1.5 });
        let mut log = base.clone();
        log.b_dist = Dist::LogNormal {
            mu_log: 0.0,
            sigma_log: 0.4,
        };
        let m = set_model_parameter(&log, "mu_log", -0.3).unwrap();
        assert_eq!(
            m.b_dist,
            Dist::LogNormal {
                mu_log: -0.3,
                sigma_log: 0.4
            }
        );
        assert!(set_model_parameter(&base, "nope", 0.0).is_err());
    }

    #[test]
    fn bec_check_requires_sweep_section() {
        let cfg = clean_config(0.5);
        assert!(matches!(
            cmd_bec_check(&cfg).unwrap_err(),
            ChiralError::Usage(_)
        ));
    }

    #[test]
    fn phase_scan_winding_step() {
        let mut cfg = clean_config(0.5);
        cfg.model.length = 4;
        cfg.run.methods = vec![Method::Winding];
        cfg.sweep = Some(SweepSection {
            parameter: "b".into(),
            values: vec![0.3, 0.7, 1.3, 1.9],
            seeds_per_point: 1,
        });
        let (rows, code) = cmd_phase_scan(&cfg).unwrap();
        assert_eq!(code, 0);
        let w: Vec<i64> = rows.iter().map(|r| r.winding.unwrap()).collect();
        assert_eq!(w, vec![1, 1, 0, 0]);
    }
}
