//! Topological index evaluators: the bulk trace formulas, the windowed
//! edge-mode count, the spectral-gap polar and projection-pair forms, and
//! the translation-invariant winding number.

use std::collections::BTreeMap;

use crate::error::{ChiralError, Result};
use crate::model::BasisMap;
use crate::spectral::{signed_subspaces, zero_projection, SpectralData};
use crate::{c, CMat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Aggregated result of one model's index computations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexReport {
    pub bulk_raw: f64,
    pub bulk: i64,
    pub bulk_residual: f64,
    pub edge: i64,
    pub edge_window_raw: f64,
    pub lyapunov_count: Option<i64>,
    pub winding: Option<i64>,
    pub agree: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl IndexReport {
    /// All computed integer indices equal and the bulk trace close to its
    /// rounded value.
    pub fn compute_agree(&mut self, residual_threshold: f64) {
        let mut ok = self.bulk_residual < residual_threshold && self.bulk == self.edge;
        if let Some(l) = self.lyapunov_count {
            ok &= l == self.bulk;
        }
        if let Some(w) = self.winding {
            ok &= w == self.bulk;
        }
        self.agree = ok;
    }
}

fn scale_rows(m: &CMat, diag: &[f64]) -> CMat {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] *= c(diag[i]);
        }
    }
    out
}

fn trace_product(x: &CMat, y: &CMat) -> Complex64 {
    // tr(X Y) without forming the product
    let mut t = Complex64::new(0.0, 0.0);
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            t += x[(i, j)] * y[(j, i)];
        }
    }
    t
}

fn check_zero_cluster_location(sd: &SpectralData, pi: &[f64]) -> Result<()> {
    let zp = zero_projection(sd, sd.eps_zero);
    if zp.rank == 0 {
        return Ok(());
    }
    // a cluster localized mid-window signals a closed gap, not edge physics
    let n = pi.len();
    let (lo, hi) = (n / 4, n - n / 4);
    let mut central = 0.0;
    let mut total = 0.0;
    for &j in &zp.indices {
        for i in 0..n {
            let w = sd.eigenvectors[(i, j)].norm_sqr();
            total += w;
            if i >= lo && i < hi {
                central += w;
            }
        }
    }
    if central > 0.5 * total {
        return Err(ChiralError::AssumptionViolation(format!(
            "near-zero cluster (rank {}) carries {:.0}% of its weight in the \
             central half of the window; the zero-energy gap appears closed",
            zp.rank,
            100.0 * central / total
        )));
    }
    Ok(())
}

/// Bulk index as `tr(Pi Sigma [Lambda, Sigma]) / 2`.
///
/// Evaluated in the eigenbasis via `Sigma = 1 - 2 P_minus`, which reduces the
/// commutator trace to `2 tr(Pi P_minus Lambda P_minus) - 2 tr(Pi P_minus
/// Lambda)` (the cross term `tr(Pi [Lambda, P_minus])` vanishes because `Pi`
/// and `Lambda` are diagonal). Near-zero finite-size modes enter `Sigma`
/// through the chirality grading of the cluster; see
/// [`crate::spectral::sign_operator`].
pub fn bulk_index_sigma(sd: &SpectralData, pi: &[f64], lam: &[f64]) -> Result<f64> {
    check_zero_cluster_location(sd, pi)?;
    let (_, vm) = signed_subspaces(sd, pi)?;
    let pim = vm.adjoint() * scale_rows(&vm, pi);
    let lm = vm.adjoint() * scale_rows(&vm, lam);
    let quad = trace_product(&pim, &lm);
    // tr(Pi P- Lambda) with both factors diagonal
    let mut lin = Complex64::new(0.0, 0.0);
    for i in 0..vm.nrows() {
        for j in 0..vm.ncols() {
            lin += c(pi[i] * lam[i]) * vm[(i, j)].norm_sqr();
        }
    }
    Ok(2.0 * (quad - lin).re)
}

/// Bulk index as `-tr(Pi P+ [Lambda, P-]) - tr(Pi P- [Lambda, P+])`,
/// evaluated as `-2 Re tr(Pi P+ Lambda P-)` in factored form. Independent
/// evaluation path from [`bulk_index_sigma`]; the two agree to rounding on
/// any finite window.
pub fn bulk_index_fermi(sd: &SpectralData, pi: &[f64], lam: &[f64]) -> Result<f64> {
    check_zero_cluster_location(sd, pi)?;
    let (vp, vm) = signed_subspaces(sd, pi)?;
    let x = vm.adjoint() * scale_rows(&vp, pi);
    let y = vp.adjoint() * scale_rows(&vm, lam);
    Ok(-2.0 * trace_product(&x, &y).re)
}

/// Result of the windowed edge zero-mode count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeWindowIndex {
    pub raw: f64,
    pub rounded: i64,
    /// `|raw - rounded| <= 0.1`
    pub converged: bool,
    pub cluster_rank: usize,
    pub cluster_gap_ratio: f64,
    pub cluster_warning: bool,
}

/// Edge index as `tr(Pi Lambda_a P_0)` on an edge window.
///
/// The switch rises from 0 at the artificial left cut to 1 well before the
/// physical edge; zero modes bound to the left cut are suppressed by the
/// switch weight, leaving the count of edge-localized modes graded by
/// chirality.
pub fn edge_index_window(
    sd_edge: &SpectralData,
    pi: &[f64],
    lam_a: &[f64],
    eps_zero: f64,
) -> EdgeWindowIndex {
    let zp = zero_projection(sd_edge, eps_zero);
    let mut raw = 0.0;
    for &j in &zp.indices {
        for i in 0..pi.len() {
            raw += pi[i] * lam_a[i] * sd_edge.eigenvectors[(i, j)].norm_sqr();
        }
    }
    let rounded = raw.round() as i64;
    EdgeWindowIndex {
        raw,
        rounded,
        converged: (raw - rounded as f64).abs() <= 0.1,
        cluster_rank: zp.rank,
        cluster_gap_ratio: zp.gap_ratio,
        cluster_warning: zp.warning,
    }
}

/// Recursion matrix of `S psi+ = 0` on sites `[b, a]` with no boundary rows:
/// rows are the defining relations at sites `b+1..a`, columns the amplitudes
/// at sites `b..a`, so the kernel has dimension exactly `N`.
pub fn open_window_matrix(chain: &crate::model::HoppingChain, b: i64, a: i64) -> Result<CMat> {
    if b < chain.n_min || a > chain.n_max() || a <= b {
        return Err(ChiralError::SiteOutsideWindow {
            a,
            n_min: chain.n_min,
            n_max: chain.n_max(),
        });
    }
    let nc = chain.channels;
    let cols = (a - b + 1) as usize;
    let mut m = CMat::zeros((cols - 1) * nc, cols * nc);
    for (r, n) in (b + 1..=a).enumerate() {
        m.view_mut((r * nc, r * nc), (nc, nc)).copy_from(chain.a_at(n));
        m.view_mut((r * nc, (r + 1) * nc), (nc, nc))
            .copy_from(chain.b_at(n));
    }
    Ok(m)
}

/// Edge index from the kernel of the open-window recursion matrix: the count
/// of kernel directions whose amplitude decays from the right edge toward
/// the left by at least a factor `rho`.
///
/// The raw kernel basis from the SVD mixes decaying and growing directions,
/// so it is first rotated to concentrate left-end mass in the leading
/// vectors (an SVD of the kernel's left-quarter row restriction); the
/// rotated basis has one cleanly growing or decaying profile per vector.
pub fn edge_index_kernel_svd(
    s_rect: &CMat,
    eps_sv: f64,
    channels: usize,
    rho: f64,
) -> Result<usize> {
    let cols = s_rect.ncols();
    if cols % channels != 0 {
        return Err(ChiralError::DimensionMismatch(format!(
            "matrix has {cols} columns, not a multiple of {channels} channels"
        )));
    }
    let sites = cols / channels;
    if sites < 8 {
        return Err(ChiralError::InsufficientData(format!(
            "open window of {sites} sites is too short to classify decay"
        )));
    }
    // null space via the Gram matrix: a thin SVD of the wide recursion
    // matrix cannot represent the kernel directions at all
    let gram = s_rect.adjoint() * s_rect;
    let eig = gram.symmetric_eigen();
    let sv_max = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &l| m.max(l.max(0.0)))
        .sqrt();
    // the Gram route squares the conditioning, so exact kernel directions
    // surface with singular values around sqrt(machine epsilon)
    let cut = eps_sv.max(sv_max * 1e-6);
    let kernel_cols: Vec<usize> = (0..cols)
        .filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() < cut)
        .collect();
    if kernel_cols.is_empty() {
        return Ok(0);
    }
    let mut kernel = CMat::zeros(cols, kernel_cols.len());
    for (k, &i) in kernel_cols.iter().enumerate() {
        kernel.set_column(k, &eig.eigenvectors.column(i));
    }

    // rotate so each basis vector has a definite growth direction
    let q = (sites / 4).max(1) * channels;
    let left = kernel.view((0, 0), (q, kernel.ncols())).clone_owned();
    let lsvd = left
        .svd(false, true)
        .v_t
        .ok_or_else(|| ChiralError::SolverFailure("kernel rotation SVD failed".into()))?;
    let kernel = &kernel * lsvd.adjoint();

    let quarter = (sites / 4).max(1);
    let mut count = 0;
    for k in 0..kernel.ncols() {
        let site_norm = |s: usize| -> f64 {
            (0..channels)
                .map(|ch| kernel[(s * channels + ch, k)].norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let left_mass: f64 = (0..quarter).map(site_norm).sum();
        let right_mass: f64 = (sites - quarter..sites).map(site_norm).sum();
        let ratio = right_mass / left_mass.max(f64::MIN_POSITIVE);
        if ratio >= rho {
            count += 1;
        } else if ratio > 1.0 / rho {
            return Err(ChiralError::UndecidableDecay {
                index: k,
                ratio,
                lo: 1.0 / rho,
                hi: rho,
            });
        }
    }
    Ok(count)
}

/// Default decay classification factor for [`edge_index_kernel_svd`].
pub const KERNEL_DECAY_RHO: f64 = 10.0;

/// Unitary factor of the polar decomposition `S = U (S* S)^{1/2}`, computed
/// as `U = W V*` from the SVD `S = W diag(sigma) V*`.
///
/// Requires a spectral gap: the smallest singular value above the machine
/// near-kernel floor must exceed `delta`. (A topologically non-trivial window
/// always carries `O(e^{-cL})` singular values from the cut edge modes; these
/// sit below the floor and do not void the gap.)
pub fn polar_unitary(s: &CMat, delta: f64) -> Result<CMat> {
    let svd = s
        .clone()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| ChiralError::SolverFailure("SVD for polar factor failed".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let floor = smax * 1e-12;
    let above = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&x| x > floor)
        .fold(f64::INFINITY, f64::min);
    if above <= delta {
        return Err(ChiralError::GapViolation(format!(
            "smallest bulk singular value {above:.3e} <= delta {delta:.3e}; \
             the polar formula requires a spectral gap"
        )));
    }
    Ok(svd.u.unwrap() * svd.v_t.unwrap())
}

/// Default spectral-gap threshold for [`bulk_index_polar`].
pub const POLAR_DELTA_DEFAULT: f64 = 1e-6;

fn central_columns(n: usize) -> std::ops::Range<usize> {
    n / 4..n - n / 4
}

/// Bulk index as `tr U*[Lambda, U]` with `U` the polar unitary of `S`
/// (spectral-gap case), `Lambda` a diagonal switch on the single-sublattice
/// space.
///
/// The trace is restricted to the central half of the columns: a finite
/// window is globally trivial (edge and cut contributions cancel the bulk
/// value exactly), so the full-window trace is identically zero and only the
/// central restriction recovers the bulk invariant.
pub fn bulk_index_polar(s: &CMat, lam_k: &[f64], delta: f64) -> Result<f64> {
    if s.nrows() != lam_k.len() {
        return Err(ChiralError::DimensionMismatch(format!(
            "S is {}x{}, switch diagonal has length {}",
            s.nrows(),
            s.ncols(),
            lam_k.len()
        )));
    }
    let u = polar_unitary(s, delta)?;
    let mut total = 0.0;
    for j in central_columns(u.ncols()) {
        let col = u.column(j);
        let quad: f64 = (0..u.nrows()).map(|i| lam_k[i] * col[i].norm_sqr()).sum();
        total += quad - lam_k[j];
    }
    Ok(total)
}

/// Bulk index as `-tr(U* chi_a U - chi_a)` with `chi_a` the coordinate
/// projection onto sites `<= a` (pair-of-projections form). Same central
/// column restriction as [`bulk_index_polar`], with which it agrees to
/// rounding when the switch steps at `a + 1`.
pub fn bulk_index_proj_pair(u: &CMat, a: i64, map: &BasisMap) -> Result<f64> {
    if u.nrows() != map.dim_k() {
        return Err(ChiralError::DimensionMismatch(format!(
            "U is {}x{}, basis map implies {}",
            u.nrows(),
            u.ncols(),
            map.dim_k()
        )));
    }
    let defect = (u.adjoint() * u - CMat::identity(u.nrows(), u.ncols())).norm();
    if defect > 1e-10 {
        return Err(ChiralError::AssumptionViolation(format!(
            "matrix is not unitary (defect {defect:.3e}); pair-of-projections \
             form needs the polar unitary"
        )));
    }
    let chi = |i: usize| -> f64 {
        if map.site_of_k_index(i) <= a {
            1.0
        } else {
            0.0
        }
    };
    let mut total = 0.0;
    for j in central_columns(u.ncols()) {
        let col = u.column(j);
        let inside: f64 = (0..u.nrows())
            .map(|i| chi(i) * col[i].norm_sqr())
            .sum();
        total -= inside - chi(j);
    }
    Ok(total)
}

/// Finite-support Bloch symbol `S(z) = sum_m S_m z^{-m}`.
#[derive(Debug, Clone)]
pub struct BlochSymbol {
    /// `(m, S_m)` pairs.
    pub coefficients: Vec<(i64, CMat)>,
}

impl BlochSymbol {
    /// Nearest-neighbor symbol `S(z) = A z^{-1} + B`.
    pub fn nearest_neighbor(a: CMat, b: CMat) -> Self {
        Self {
            coefficients: vec![(1, a), (0, b)],
        }
    }

    pub fn channels(&self) -> usize {
        self.coefficients.first().map_or(0, |(_, m)| m.nrows())
    }

    pub fn evaluate(&self, z: Complex64) -> CMat {
        let n = self.channels();
        let mut s = CMat::zeros(n, n);
        for (m, coeff) in &self.coefficients {
            s += coeff * z.powi(-(*m as i32));
        }
        s
    }
}

/// Result of the winding computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Winding {
    pub index: i64,
    /// Distance of the accumulated phase (in turns) from the integer.
    pub residual: f64,
    pub samples_used: usize,
}

const WINDING_MAX_SAMPLES: usize = 1 << 22;

/// Index of a translation-invariant chain as minus the winding of
/// `z -> det S(z)` around the unit circle.
///
/// Branch-tracked phase accumulation; the sample count doubles until every
/// per-step increment is below `pi/2`, so large windings and sharp symbols
/// are resolved without a global `arg` evaluation.
pub fn winding_number(sym: &BlochSymbol, n_samples: usize) -> Result<Winding> {
    let mut ns = n_samples.max(16);
    loop {
        let dets: Vec<Complex64> = (0..ns)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / ns as f64;
                let z = Complex64::new(theta.cos(), theta.sin());
                det(&sym.evaluate(z))
            })
            .collect();
        let max_abs = dets.iter().map(|d| d.norm()).fold(0.0_f64, f64::max);
        let min_abs = dets.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        if min_abs <= 1e-12 * max_abs {
            return Err(ChiralError::GapClosed(format!(
                "|det S(z)| drops to {min_abs:.3e} on the unit circle; \
                 winding undefined"
            )));
        }
        let mut total = 0.0;
        let mut max_step = 0.0_f64;
        for k in 0..ns {
            let next = dets[(k + 1) % ns];
            let step = (next / dets[k]).arg();
            max_step = max_step.max(step.abs());
            total += step;
        }
        if max_step < std::f64::consts::FRAC_PI_2 {
            let turns = total / (2.0 * std::f64::consts::PI);
            let rounded = turns.round();
            return Ok(Winding {
                index: -(rounded as i64),
                residual: (turns - rounded).abs(),
                samples_used: ns,
            });
        }
        ns *= 2;
        if ns > WINDING_MAX_SAMPLES {
            return Err(ChiralError::GapClosed(format!(
                "phase increments do not settle below pi/2 at {} samples; \
                 symbol appears to touch zero",
                ns / 2
            )));
        }
    }
}

fn det(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

/// Translation-invariant index as the algebraic count of eigenvalues of
/// `T = -A^{-1} B` strictly inside the unit disk.
pub fn ti_index_eigencount(a: &CMat, b: &CMat) -> Result<usize> {
    let lu = a.clone().lu();
    let t = lu
        .solve(&(-b))
        .ok_or_else(|| ChiralError::ModelInvalid("A is singular".into()))?;
    let eigs = t.eigenvalues().ok_or_else(|| {
        ChiralError::SolverFailure("eigenvalue computation for T failed".into())
    })?;
    let mut count = 0;
    for l in eigs.iter() {
        let r = l.norm();
        if (r - 1.0).abs() < 1e-9 {
            return Err(ChiralError::GapClosed(format!(
                "T has an eigenvalue of modulus {r:.12} on the unit circle"
            )));
        }
        if r < 1.0 {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_operator, truncate, BoundarySpec, HoppingChain, SwitchFunction,
    };
    use crate::spectral::{adaptive_eps_zero, diagonalize};

    fn clean_setup(b: f64, l: usize) -> (crate::model::ChiralOperator, SpectralData) {
        let chain = HoppingChain::scalar_constant(1.0, b, l);
        let op = build_operator(&chain, &BoundarySpec::DirichletCut).unwrap();
        let mut sd = diagonalize(&op).unwrap();
        let (eps, _) = adaptive_eps_zero(&sd, 1);
        sd.eps_zero = eps;
        (op, sd)
    }

    #[test]
    fn sigma_clean_values() {
        for (b, expect) in [(0.5, 1.0), (2.0, 0.0)] {
            let (op, sd) = clean_setup(b, 200);
            let lam = op.basis_map.switch_diag_h(&SwitchFunction::sharp(100));
            let n = bulk_index_sigma(&sd, &op.pi, &lam).unwrap();
            assert!((n - expect).abs() < 1e-3, "B={b}: got {n}");
        }
    }

    #[test]
    fn sigma_constant_switch_vanishes() {
        let (op, sd) = clean_setup(0.5, 60);
        let lam = vec![1.0; op.pi.len()];
        let n = bulk_index_sigma(&sd, &op.pi, &lam).unwrap();
        assert!(n.abs() < 1e-12);
    }

    #[test]
    fn fermi_matches_sigma_and_oracle() {
        let (op, sd) = clean_setup(0.5, 160);
        let lam = op.basis_map.switch_diag_h(&SwitchFunction::sharp(80));
        let ns = bulk_index_sigma(&sd, &op.pi, &lam).unwrap();
        let nf = bulk_index_fermi(&sd, &op.pi, &lam).unwrap();
        assert!((ns - nf).abs() < 1e-8, "sigma {ns} vs fermi {nf}");
        assert!((nf - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fermi_two_channel_block() {
        // A = I, B = -diag(0.5, 2): one contracting direction -> index 1
        let ident = CMat::identity(2, 2);
        let bm = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(-0.5),
            c(-2.0),
        ]));
        let l = 160;
        let chain =
            HoppingChain::new(0, 2, vec![ident; l], vec![bm; l]).unwrap();
        let op = build_operator(&chain, &BoundarySpec::DirichletCut).unwrap();
        let mut sd = diagonalize(&op).unwrap();
        let (eps, _) = adaptive_eps_zero(&sd, 2);
        sd.eps_zero = eps;
        let lam = op
            .basis_map
            .switch_diag_h(&SwitchFunction::sharp(l as i64 / 2));
        let nf = bulk_index_fermi(&sd, &op.pi, &lam).unwrap();
        assert!((nf - 1.0).abs() < 1e-3, "got {nf}");
    }

    #[test]
    fn switch_independence_in_central_quarter() {
        let (op, sd) = clean_setup(0.5, 160);
        let base = bulk_index_sigma(
            &sd,
            &op.pi,
            &op.basis_map.switch_diag_h(&SwitchFunction::sharp(80)),
        )
        .unwrap();
        for center in [61, 70, 90, 99] {
            let lam = op.basis_map.switch_diag_h(&SwitchFunction::sharp(center));
            let n = bulk_index_sigma(&sd, &op.pi, &lam).unwrap();
            assert!((n - base).abs() < 1e-6, "center {center}: {n} vs {base}");
        }
    }

    #[test]
    fn edge_window_clean() {
        for (b, expect) in [(0.5, 1_i64), (2.0, 0)] {
            let (op, sd) = clean_setup(b, 120);
            let lam = op.basis_map.switch_diag_h(&SwitchFunction::sharp(60));
            let e = edge_index_window(&sd, &op.pi, &lam, sd.eps_zero);
            assert_eq!(e.rounded, expect, "B={b}: raw {}", e.raw);
            assert!(e.converged);
            assert!((e.raw - expect as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn edge_window_thick_bond_break_unchanged() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 120);
        let bc = BoundarySpec::Custom {
            a_boundary: None,
            b_boundary: Some(CMat::zeros(1, 1)),
        };
        let sub = truncate(&chain, 119, &bc).unwrap();
        let op = build_operator(&sub, &bc).unwrap();
        let mut sd = diagonalize(&op).unwrap();
        let (eps, _) = adaptive_eps_zero(&sd, 1);
        sd.eps_zero = eps;
        let lam = op.basis_map.switch_diag_h(&SwitchFunction::sharp(60));
        let e = edge_index_window(&sd, &op.pi, &lam, sd.eps_zero);
        assert_eq!(e.rounded, 1, "raw {}", e.raw);
    }

    #[test]
    fn kernel_svd_clean_cases() {
        for (b, expect) in [(0.5, 1_usize), (2.0, 0)] {
            let chain = HoppingChain::scalar_constant(1.0, b, 80);
            let m = open_window_matrix(&chain, 0, 79).unwrap();
            let n = edge_index_kernel_svd(&m, 1e-10, 1, KERNEL_DECAY_RHO).unwrap();
            assert_eq!(n, expect, "B={b}");
        }
    }

    #[test]
    fn kernel_svd_two_channel() {
        let ident = CMat::identity(2, 2);
        let bm = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(-0.5),
            c(-2.0),
        ]));
        let chain = HoppingChain::new(0, 2, vec![ident; 80], vec![bm; 80]).unwrap();
        let m = open_window_matrix(&chain, 0, 79).unwrap();
        let n = edge_index_kernel_svd(&m, 1e-10, 2, KERNEL_DECAY_RHO).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn kernel_svd_rejects_ambiguous_decay() {
        // |T| = 1: kernel vector has flat profile
        let chain = HoppingChain::scalar_constant(1.0, 1.0, 80);
        let m = open_window_matrix(&chain, 0, 79).unwrap();
        let err = edge_index_kernel_svd(&m, 1e-10, 1, KERNEL_DECAY_RHO).unwrap_err();
        assert!(matches!(err, ChiralError::UndecidableDecay { .. }));
    }

    #[test]
    fn polar_and_proj_pair() {
        for (b, expect) in [(0.5, 1.0), (2.0, 0.0)] {
            let chain = HoppingChain::scalar_constant(1.0, b, 200);
            let s = crate::model::build_s(&chain, &BoundarySpec::DirichletCut).unwrap();
            let map = crate::model::BasisMap {
                n_min: 0,
                n_sites: 200,
                channels: 1,
            };
            let a = 100_i64;
            let lam = map.switch_diag_k(&SwitchFunction::sharp(a + 1));
            let np = bulk_index_polar(&s, &lam, POLAR_DELTA_DEFAULT).unwrap();
            let u = polar_unitary(&s, POLAR_DELTA_DEFAULT).unwrap();
            let npp = bulk_index_proj_pair(&u, a, &map).unwrap();
            assert!((np - npp).abs() < 1e-10, "B={b}: polar {np} vs pp {npp}");
            assert!((np - expect).abs() < 1e-6, "B={b}: polar {np}");
        }
    }

    #[test]
    fn proj_pair_identity_unitary_is_zero() {
        let map = crate::model::BasisMap {
            n_min: 0,
            n_sites: 40,
            channels: 1,
        };
        let u = CMat::identity(40, 40);
        assert_eq!(bulk_index_proj_pair(&u, 20, &map).unwrap(), 0.0);
    }

    #[test]
    fn proj_pair_independent_of_cut_site() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 200);
        let s = crate::model::build_s(&chain, &BoundarySpec::DirichletCut).unwrap();
        let u = polar_unitary(&s, POLAR_DELTA_DEFAULT).unwrap();
        let map = crate::model::BasisMap {
            n_min: 0,
            n_sites: 200,
            channels: 1,
        };
        let base = bulk_index_proj_pair(&u, 100, &map).unwrap();
        for a in [80, 90, 110, 120] {
            let v = bulk_index_proj_pair(&u, a, &map).unwrap();
            assert!((v - base).abs() < 1e-6, "a={a}: {v} vs {base}");
        }
    }

    #[test]
    fn winding_monomial() {
        let sym = BlochSymbol::nearest_neighbor(CMat::identity(1, 1), CMat::zeros(1, 1));
        let w = winding_number(&sym, 64).unwrap();
        assert_eq!(w.index, 1);
        assert!(w.residual < 1e-6);
    }

    #[test]
    fn winding_scalar_cases() {
        for (b, expect) in [(0.5, 1_i64), (2.0, 0)] {
            let sym = BlochSymbol::nearest_neighbor(
                CMat::identity(1, 1),
                CMat::from_element(1, 1, c(b)),
            );
            let w = winding_number(&sym, 64).unwrap();
            assert_eq!(w.index, expect, "B={b}");
        }
    }

    #[test]
    fn winding_gap_closed_detected() {
        // B = -1: det S(z) = z^{-1} - 1 vanishes at z = 1
        let sym = BlochSymbol::nearest_neighbor(
            CMat::identity(1, 1),
            CMat::from_element(1, 1, c(-1.0)),
        );
        assert!(winding_number(&sym, 64).is_err());
    }

    #[test]
    fn eigencount_examples() {
        let one = CMat::identity(1, 1);
        let half = CMat::from_element(1, 1, c(0.5));
        let two = CMat::from_element(1, 1, c(2.0));
        assert_eq!(ti_index_eigencount(&one, &half).unwrap(), 1);
        assert_eq!(ti_index_eigencount(&one, &two).unwrap(), 0);
        let ident = CMat::identity(2, 2);
        let bm = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(-0.5),
            c(-2.0),
        ]));
        assert_eq!(ti_index_eigencount(&ident, &bm).unwrap(), 1);
    }

    #[test]
    fn eigencount_unit_modulus_rejected() {
        let one = CMat::identity(1, 1);
        assert!(matches!(
            ti_index_eigencount(&one, &one).unwrap_err(),
            ChiralError::GapClosed(_)
        ));
    }

    #[test]
    fn report_agreement_logic() {
        let mut r = IndexReport {
            bulk_raw: 0.999,
            bulk: 1,
            bulk_residual: 0.001,
            edge: 1,
            edge_window_raw: 1.0,
            lyapunov_count: Some(1),
            winding: Some(1),
            agree: false,
            diagnostics: BTreeMap::new(),
        };
        r.compute_agree(0.05);
        assert!(r.agree);
        r.lyapunov_count = Some(0);
        r.compute_agree(0.05);
        assert!(!r.agree);
    }
}
