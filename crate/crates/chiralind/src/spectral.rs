//! Dense Hermitian eigendecomposition and derived spectral objects: Fermi
//! projections, sign operator, zero-mode projections, and the kernel decay
//! diagnostic for the mobility-gap signature.

use crate::error::{ChiralError, Result};
use crate::model::{BasisMap, ChiralOperator};
use crate::{c, CMat};

/// Eigenpairs of a Hermitian matrix, ascending eigenvalues, eigenvector
/// phases fixed so the first non-negligible component is real positive.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, in the same order as `eigenvalues`.
    pub eigenvectors: CMat,
    pub eps_zero: f64,
}

pub const EPS_ZERO_DEFAULT: f64 = 1e-8;

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0_f64, |m, &l| m.max(l.abs()))
    }

    /// Matrix whose columns are the eigenvectors at the given indices.
    pub fn columns(&self, idx: &[usize]) -> CMat {
        let n = self.eigenvectors.nrows();
        let mut m = CMat::zeros(n, idx.len());
        for (k, &i) in idx.iter().enumerate() {
            m.set_column(k, &self.eigenvectors.column(i));
        }
        m
    }

    pub fn indices_where(&self, pred: impl Fn(f64) -> bool) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| pred(self.eigenvalues[i]))
            .collect()
    }

    pub fn max_residual(&self, h: &CMat) -> f64 {
        let hv = h * &self.eigenvectors;
        let mut worst = 0.0_f64;
        for i in 0..self.dim() {
            let r = (hv.column(i) - self.eigenvectors.column(i) * c(self.eigenvalues[i])).norm();
            worst = worst.max(r);
        }
        worst
    }

    pub fn unitarity_defect(&self) -> f64 {
        let g = self.eigenvectors.adjoint() * &self.eigenvectors;
        let n = g.nrows();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - c(expect)).norm());
            }
        }
        worst
    }
}

fn fix_phases(vectors: &mut CMat) {
    let (n, m) = vectors.shape();
    for j in 0..m {
        let col_max = (0..n)
            .map(|i| vectors[(i, j)].norm())
            .fold(0.0_f64, f64::max);
        let tol = col_max * 1e-9;
        if let Some(i0) = (0..n).find(|&i| vectors[(i, j)].norm() > tol) {
            let v = vectors[(i0, j)];
            let phase = v / c(v.norm());
            let corr = phase.conj();
            for i in 0..n {
                vectors[(i, j)] *= corr;
            }
        }
    }
}

fn sort_ascending(mut vals: Vec<f64>, mut vecs: CMat, eps_zero: f64) -> SpectralData {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = CMat::zeros(vecs.nrows(), vecs.ncols());
    for (k, &i) in order.iter().enumerate() {
        sorted_vecs.set_column(k, &vecs.column(i));
    }
    fix_phases(&mut sorted_vecs);
    vals = sorted_vals;
    vecs = sorted_vecs;
    SpectralData {
        eigenvalues: vals,
        eigenvectors: vecs,
        eps_zero,
    }
}

/// Full eigendecomposition of a chiral operator.
///
/// Uses the exact block structure: the SVD `S = W diag(sigma) V*` yields the
/// eigenpairs `(+/- sigma_i, (v_i, +/- w_i)/sqrt(2))`, so the spectrum is
/// symmetric by construction and the computation runs on the half-dimension
/// `S` block.
pub fn diagonalize(op: &ChiralOperator) -> Result<SpectralData> {
    let map = op.basis_map;
    let k = map.dim_k();
    let svd = op
        .s
        .clone()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| {
            ChiralError::SolverFailure(format!(
                "SVD of the S block did not converge (dim {k}, cond {:.3e})",
                crate::model::condition_number(&op.s)
            ))
        })?;
    let w = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let sigma = svd.singular_values;

    let dim = map.dim_h();
    let mut vals = Vec::with_capacity(dim);
    let mut vecs = CMat::zeros(dim, dim);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..k {
        for (slot, sign) in [(2 * i, 1.0_f64), (2 * i + 1, -1.0_f64)] {
            vals.push(sign * sigma[i]);
            for site_ch in 0..k {
                let site = map.n_min + (site_ch / map.channels) as i64;
                let ch = site_ch % map.channels;
                let vp = vt[(i, site_ch)].conj() * c(inv_sqrt2);
                let vm = w[(site_ch, i)] * c(sign * inv_sqrt2);
                vecs[(map.flat(site, 0, ch), slot)] = vp;
                vecs[(map.flat(site, 1, ch), slot)] = vm;
            }
        }
    }
    Ok(sort_ascending(vals, vecs, EPS_ZERO_DEFAULT))
}

/// Eigendecomposition of an arbitrary dense Hermitian matrix. Slower than
/// [`diagonalize`]; used for generic input and as a cross-check path.
pub fn diagonalize_hermitian(h: &CMat) -> Result<SpectralData> {
    if h.nrows() != h.ncols() {
        return Err(ChiralError::DimensionMismatch(format!(
            "expected square Hermitian matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let eig = h.clone().symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    Ok(sort_ascending(vals, eig.eigenvectors, EPS_ZERO_DEFAULT))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// Orthogonal projection onto eigenvectors with `lambda < -eps_zero`
/// (below) or `lambda > eps_zero` (above).
///
/// With `strict` set, any eigenvalue inside `(-eps_zero, eps_zero)` is an
/// assumption violation (zero must not be an eigenvalue of the bulk
/// Hamiltonian).
pub fn fermi_projection(sd: &SpectralData, side: Side, strict: bool) -> Result<CMat> {
    let eps = sd.eps_zero;
    if strict {
        let offenders: Vec<f64> = sd
            .eigenvalues
            .iter()
            .cloned()
            .filter(|l| l.abs() <= eps)
            .collect();
        if !offenders.is_empty() {
            return Err(ChiralError::AssumptionViolation(format!(
                "{} eigenvalue(s) within eps_zero={eps:.1e} of zero: {offenders:?}",
                offenders.len()
            )));
        }
    }
    let idx = match side {
        Side::Below => sd.indices_where(|l| l < -eps),
        Side::Above => sd.indices_where(|l| l > eps),
    };
    let v = sd.columns(&idx);
    Ok(&v * v.adjoint())
}

/// Zero-cluster data: the projection onto eigenvalues with `|lambda| <= eps`,
/// its rank, and the separation quality of the cluster.
#[derive(Debug, Clone)]
pub struct ZeroProjection {
    pub p: CMat,
    pub indices: Vec<usize>,
    pub rank: usize,
    /// `|lambda_first_excluded| / |lambda_last_included|`; infinite when the
    /// cluster is empty or machine-exact.
    pub gap_ratio: f64,
    pub warning: bool,
}

pub fn zero_projection(sd: &SpectralData, eps_zero: f64) -> ZeroProjection {
    let idx = sd.indices_where(|l| l.abs() <= eps_zero);
    let rank = idx.len();
    let mut inside_max = 0.0_f64;
    let mut outside_min = f64::INFINITY;
    for &l in &sd.eigenvalues {
        if l.abs() <= eps_zero {
            inside_max = inside_max.max(l.abs());
        } else {
            outside_min = outside_min.min(l.abs());
        }
    }
    let gap_ratio = if rank == 0 || inside_max == 0.0 {
        f64::INFINITY
    } else {
        outside_min / inside_max
    };
    let warning = rank > 0 && gap_ratio < 10.0;
    let v = sd.columns(&idx);
    ZeroProjection {
        p: &v * v.adjoint(),
        indices: idx,
        rank,
        gap_ratio,
        warning,
    }
}

/// Adaptive zero threshold for edge runs: start from a machine-noise floor
/// relative to `|H|`, then extend to the largest relative gap (at least 10x)
/// among the `4N` smallest `|lambda|`.
pub fn adaptive_eps_zero(sd: &SpectralData, channels: usize) -> (f64, f64) {
    let mut abs: Vec<f64> = sd.eigenvalues.iter().map(|l| l.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let floor = sd.spectral_norm() * 1e-12;
    let k = (4 * channels).min(abs.len().saturating_sub(1));
    let mut best = 1.0_f64;
    let mut cut = None;
    for i in 0..k {
        if abs[i] <= floor {
            continue;
        }
        let ratio = abs[i + 1] / abs[i];
        if ratio > best {
            best = ratio;
            cut = Some(i + 1);
        }
    }
    let mut eps = floor;
    if let Some(cutn) = cut {
        if best >= 10.0 {
            let eps2 = (abs[cutn - 1] * abs[cutn]).sqrt();
            eps = eps.max(eps2);
        }
    }
    (eps, best)
}

/// Exponential decay diagnostic of a projection kernel.
#[derive(Debug, Clone)]
pub struct DecayProfile {
    /// Fitted decay rate per site; `+inf` sentinel for a diagonal kernel.
    pub mu_fit: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// Mean trace norm `|P(n, n')|_1` aggregated by `d = |n - n'|`,
    /// index 0 = same site.
    pub band_norms: Vec<f64>,
}

/// Aggregates dimer-block trace norms of `p` over the central 50% of rows
/// and fits an exponential to their decay in `|n - n'|`.
pub fn kernel_decay_profile(p: &CMat, map: &BasisMap) -> Result<DecayProfile> {
    let l = map.n_sites;
    let b = 2 * map.channels;
    if p.nrows() != l * b {
        return Err(ChiralError::DimensionMismatch(format!(
            "projection is {}x{}, basis map implies {}",
            p.nrows(),
            p.ncols(),
            l * b
        )));
    }
    let lo = l / 4;
    let hi = l - l / 4;
    let max_d = l - 1;
    let mut sums = vec![0.0_f64; max_d + 1];
    let mut counts = vec![0usize; max_d + 1];
    for n in lo..hi {
        for m in 0..l {
            let d = n.abs_diff(m);
            let block = p.view((n * b, m * b), (b, b)).clone_owned();
            let tn: f64 = block.svd(false, false).singular_values.iter().sum();
            sums[d] += tn;
            counts[d] += 1;
        }
    }
    let band_norms: Vec<f64> = sums
        .iter()
        .zip(counts.iter())
        .map(|(s, &cnt)| if cnt > 0 { s / cnt as f64 } else { 0.0 })
        .collect();

    if band_norms.len() < 11 {
        return Err(ChiralError::InsufficientData(format!(
            "only {} band distances populated; need at least 10",
            band_norms.len().saturating_sub(1)
        )));
    }

    // fit range: off-diagonal distances with norms above numerical floor
    let floor = band_norms[0].max(1e-300) * 1e-13;
    let pts: Vec<(f64, f64)> = (1..band_norms.len())
        .filter(|&d| band_norms[d] > floor)
        .map(|d| (d as f64, band_norms[d].ln()))
        .collect();
    if pts.is_empty() {
        // diagonal kernel
        return Ok(DecayProfile {
            mu_fit: f64::INFINITY,
            residual: 0.0,
            band_norms,
        });
    }
    if pts.len() < 5 {
        return Err(ChiralError::InsufficientData(format!(
            "decay fit over {} points; need at least 5",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let residual = (pts
        .iter()
        .map(|&(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayProfile {
        mu_fit: -slope,
        residual,
        band_norms,
    })
}

/// Sign operator `Sigma` with the sub-`eps_zero` cluster graded by chirality.
///
/// Eigenvalues outside `(-eps, eps)` contribute `sign(lambda) v v*`. A
/// cluster of near-zero eigenvalues is exponentially split in finite volume
/// and its numerical signs carry no information, so on the cluster `Sigma`
/// acts as the chirality grading, which keeps it an involution and keeps the
/// trace formulas local. Fails if the cluster is not chirality-invariant.
pub fn sign_operator(sd: &SpectralData, pi: &[f64]) -> Result<CMat> {
    let (plus, minus) = signed_subspaces(sd, pi)?;
    Ok(&plus * plus.adjoint() - &minus * minus.adjoint())
}

/// Orthonormal bases of the positive and negative `Sigma`-subspaces used by
/// [`sign_operator`]: eigenvectors split by eigenvalue sign, with the
/// near-zero cluster split by chirality instead.
pub fn signed_subspaces(sd: &SpectralData, pi: &[f64]) -> Result<(CMat, CMat)> {
    let eps = sd.eps_zero;
    let plus_idx = sd.indices_where(|l| l > eps);
    let minus_idx = sd.indices_where(|l| l < -eps);
    let zero_idx = sd.indices_where(|l| l.abs() <= eps);

    let mut plus = sd.columns(&plus_idx);
    let mut minus = sd.columns(&minus_idx);

    if !zero_idx.is_empty() {
        let cluster = sd.columns(&zero_idx);
        let r = zero_idx.len();
        // Pi restricted to the cluster; must be an involution there.
        let mut pim = CMat::zeros(cluster.nrows(), r);
        for j in 0..r {
            for i in 0..cluster.nrows() {
                pim[(i, j)] = c(pi[i]) * cluster[(i, j)];
            }
        }
        let pic = cluster.adjoint() * &pim;
        let eig = pic.symmetric_eigen();
        for i in 0..r {
            if (eig.eigenvalues[i].abs() - 1.0).abs() > 1e-6 {
                return Err(ChiralError::AssumptionViolation(format!(
                    "near-zero cluster (rank {r}) is not chirality-invariant: \
                     grading eigenvalue {:.6}",
                    eig.eigenvalues[i]
                )));
            }
        }
        let rotated = &cluster * &eig.eigenvectors;
        let plus_cols: Vec<usize> = (0..r).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
        let minus_cols: Vec<usize> = (0..r).filter(|&i| eig.eigenvalues[i] < 0.0).collect();
        plus = hcat(&plus, &take_columns(&rotated, &plus_cols));
        minus = hcat(&minus, &take_columns(&rotated, &minus_cols));
    }
    Ok((plus, minus))
}

fn take_columns(m: &CMat, cols: &[usize]) -> CMat {
    let mut out = CMat::zeros(m.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.set_column(k, &m.column(j));
    }
    out
}

fn hcat(a: &CMat, b: &CMat) -> CMat {
    if b.ncols() == 0 {
        return a.clone();
    }
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}
