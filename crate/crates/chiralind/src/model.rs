//! Finite-volume chiral operators assembled from hopping-matrix sequences.
//!
//! The lattice is an alternating chain of dimers; each dimer carries `N`
//! internal channels per sublattice. The off-diagonal block acts as
//! `(S psi+)_n = A_n psi+_{n-1} + B_n psi+_n` on a finite window of sites,
//! with the site below the window treated as absent (hard cut) and an
//! optional boundary-row replacement at the top site.

use crate::error::{ChiralError, Result};
use crate::{c, CMat};
use num_complex::Complex64;

/// Default bound on the condition number of interior hopping matrices.
pub const KAPPA_MAX_DEFAULT: f64 = 1e8;

/// A finite window of invertible `N x N` hopping matrices `(A_n, B_n)`.
#[derive(Debug, Clone)]
pub struct HoppingChain {
    pub n_min: i64,
    pub channels: usize,
    pub a: Vec<CMat>,
    pub b: Vec<CMat>,
}

impl HoppingChain {
    pub fn new(n_min: i64, channels: usize, a: Vec<CMat>, b: Vec<CMat>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(ChiralError::DimensionMismatch(format!(
                "A and B sequences must be non-empty and of equal length (got {} and {})",
                a.len(),
                b.len()
            )));
        }
        for (i, m) in a.iter().chain(b.iter()).enumerate() {
            if m.nrows() != channels || m.ncols() != channels {
                return Err(ChiralError::DimensionMismatch(format!(
                    "matrix {i} is {}x{}, expected {channels}x{channels}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            n_min,
            channels,
            a,
            b,
        })
    }

    /// Scalar chain with constant hoppings, sites `0..len`.
    pub fn scalar_constant(a: f64, b: f64, len: usize) -> Self {
        let one = CMat::from_element(1, 1, c(a));
        let bb = CMat::from_element(1, 1, c(b));
        Self {
            n_min: 0,
            channels: 1,
            a: vec![one; len],
            b: vec![bb; len],
        }
    }

    /// Scalar chain from explicit hopping values, sites `0..len`.
    pub fn scalar_from(a_vals: &[f64], b_vals: &[f64]) -> Result<Self> {
        let a = a_vals
            .iter()
            .map(|&v| CMat::from_element(1, 1, c(v)))
            .collect();
        let b = b_vals
            .iter()
            .map(|&v| CMat::from_element(1, 1, c(v)))
            .collect();
        Self::new(0, 1, a, b)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn n_max(&self) -> i64 {
        self.n_min + self.a.len() as i64 - 1
    }

    fn offset(&self, n: i64) -> usize {
        (n - self.n_min) as usize
    }

    pub fn a_at(&self, n: i64) -> &CMat {
        &self.a[self.offset(n)]
    }

    pub fn b_at(&self, n: i64) -> &CMat {
        &self.b[self.offset(n)]
    }

    /// Checks invertibility of every bulk matrix. Under a custom boundary
    /// the top site is exempt (its matrices may be singular).
    pub fn validate(&self, bc: &BoundarySpec, kappa_max: f64) -> Result<()> {
        let exempt_top = matches!(bc, BoundarySpec::Custom { .. });
        for (i, (am, bm)) in self.a.iter().zip(self.b.iter()).enumerate() {
            let site = self.n_min + i as i64;
            if exempt_top && site == self.n_max() {
                continue;
            }
            for (m, which) in [(am, "A"), (bm, "B")] {
                let cond = condition_number(m);
                if !cond.is_finite() || cond > kappa_max {
                    return Err(ChiralError::SingularInterior {
                        site,
                        which,
                        cond,
                        kappa_max,
                    });
                }
            }
        }
        Ok(())
    }
}

/// 2-norm condition number via SVD.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Boundary condition at the top site of a (truncated) window.
///
/// `DirichletCut` keeps the chain's own matrices and simply drops all sites
/// above the window. `Custom` replaces the top-site matrices; singular
/// replacements are allowed there and only there.
#[derive(Debug, Clone, Default)]
pub enum BoundarySpec {
    #[default]
    DirichletCut,
    Custom {
        a_boundary: Option<CMat>,
        b_boundary: Option<CMat>,
    },
}

/// Monotone 0 -> 1 step profile on the lattice.
#[derive(Debug, Clone, Copy)]
pub enum SwitchProfile {
    Sharp,
    /// Linear ramp reaching 1 at `step_center`, 0 at `step_center - width`.
    Smooth {
        width: u32,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct SwitchFunction {
    pub step_center: i64,
    pub profile: SwitchProfile,
}

impl SwitchFunction {
    pub fn sharp(step_center: i64) -> Self {
        Self {
            step_center,
            profile: SwitchProfile::Sharp,
        }
    }

    pub fn smooth(step_center: i64, width: u32) -> Self {
        Self {
            step_center,
            profile: SwitchProfile::Smooth { width },
        }
    }

    pub fn value(&self, n: i64) -> f64 {
        match self.profile {
            SwitchProfile::Sharp => {
                if n >= self.step_center {
                    1.0
                } else {
                    0.0
                }
            }
            SwitchProfile::Smooth { width } => {
                let w = width.max(1) as f64;
                ((n - self.step_center) as f64 / w + 1.0).clamp(0.0, 1.0)
            }
        }
    }
}

/// Site/sublattice/channel <-> flat index map.
///
/// Flat index = `(site - n_min) * 2N + sublattice * N + channel`, with
/// sublattice 0 the `psi+` sector. This keeps `S` lower block bidiagonal
/// and the chirality grading a contiguous +/- pattern per dimer.
#[derive(Debug, Clone, Copy)]
pub struct BasisMap {
    pub n_min: i64,
    pub n_sites: usize,
    pub channels: usize,
}

impl BasisMap {
    pub fn dim_k(&self) -> usize {
        self.n_sites * self.channels
    }

    pub fn dim_h(&self) -> usize {
        2 * self.dim_k()
    }

    pub fn flat(&self, site: i64, sublattice: usize, channel: usize) -> usize {
        debug_assert!(sublattice < 2 && channel < self.channels);
        (site - self.n_min) as usize * 2 * self.channels + sublattice * self.channels + channel
    }

    /// Flat index on the `K` space (single sublattice).
    pub fn flat_k(&self, site: i64, channel: usize) -> usize {
        (site - self.n_min) as usize * self.channels + channel
    }

    pub fn site_of_h_index(&self, i: usize) -> i64 {
        self.n_min + (i / (2 * self.channels)) as i64
    }

    pub fn site_of_k_index(&self, i: usize) -> i64 {
        self.n_min + (i / self.channels) as i64
    }

    /// Diagonal of the switch multiplication operator on the `H` space.
    pub fn switch_diag_h(&self, sw: &SwitchFunction) -> Vec<f64> {
        (0..self.dim_h())
            .map(|i| sw.value(self.site_of_h_index(i)))
            .collect()
    }

    /// Diagonal of the switch multiplication operator on the `K` space.
    pub fn switch_diag_k(&self, sw: &SwitchFunction) -> Vec<f64> {
        (0..self.dim_k())
            .map(|i| sw.value(self.site_of_k_index(i)))
            .collect()
    }

    /// Diagonal of the chirality grading: +1 on `psi+`, -1 on `psi-`.
    pub fn pi_diag(&self) -> Vec<f64> {
        let n = self.channels;
        (0..self.dim_h())
            .map(|i| if (i / n) % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }
}

/// Dense chiral operator `H = [[0, S*], [S, 0]]` in the dimer-ordered basis.
#[derive(Debug, Clone)]
pub struct ChiralOperator {
    pub s: CMat,
    pub h: CMat,
    pub pi: Vec<f64>,
    pub basis_map: BasisMap,
}

impl ChiralOperator {
    /// `max |H Pi + Pi H|`, exactly zero by block structure.
    pub fn anticommutator_norm(&self) -> f64 {
        let n = self.h.nrows();
        let mut max = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let v = self.h[(i, j)] * c(self.pi[j]) + c(self.pi[i]) * self.h[(i, j)];
                max = max.max(v.norm());
            }
        }
        max
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.h.nrows();
        let mut max = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                max = max.max((self.h[(i, j)] - self.h[(j, i)].conj()).norm());
            }
        }
        max
    }
}

/// Assembles the matrix of `(S psi+)_n = A_n psi+_{n-1} + B_n psi+_n` on the
/// chain's window, hard-cut below, with the top row replaced per `bc`.
pub fn build_s(chain: &HoppingChain, bc: &BoundarySpec) -> Result<CMat> {
    build_s_with_kappa(chain, bc, KAPPA_MAX_DEFAULT)
}

pub fn build_s_with_kappa(chain: &HoppingChain, bc: &BoundarySpec, kappa_max: f64) -> Result<CMat> {
    chain.validate(bc, kappa_max)?;
    let nc = chain.channels;
    let l = chain.len();
    let top = l - 1;

    let mut a_rows: Vec<&CMat> = chain.a.iter().collect();
    let mut b_rows: Vec<&CMat> = chain.b.iter().collect();
    if let BoundarySpec::Custom {
        a_boundary,
        b_boundary,
    } = bc
    {
        for m in [a_boundary, b_boundary].into_iter().flatten() {
            if m.nrows() != nc || m.ncols() != nc {
                return Err(ChiralError::DimensionMismatch(format!(
                    "boundary matrix is {}x{}, expected {nc}x{nc}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if let Some(m) = a_boundary {
            a_rows[top] = m;
        }
        if let Some(m) = b_boundary {
            b_rows[top] = m;
        }
    }

    let dim = l * nc;
    let mut s = CMat::zeros(dim, dim);
    for n in 0..l {
        s.view_mut((n * nc, n * nc), (nc, nc)).copy_from(b_rows[n]);
        if n > 0 {
            s.view_mut((n * nc, (n - 1) * nc), (nc, nc))
                .copy_from(a_rows[n]);
        }
    }
    Ok(s)
}

/// Wraps a square `S` block into the Hermitian operator `[[0, S*], [S, 0]]`
/// with dimer-interleaved basis and chirality grading.
pub fn build_h(s: &CMat, n_min: i64, channels: usize) -> Result<ChiralOperator> {
    if s.nrows() != s.ncols() {
        return Err(ChiralError::DimensionMismatch(format!(
            "build_h requires square S, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.nrows() % channels != 0 {
        return Err(ChiralError::DimensionMismatch(format!(
            "S dimension {} not a multiple of channel count {channels}",
            s.nrows()
        )));
    }
    let n_sites = s.nrows() / channels;
    let map = BasisMap {
        n_min,
        n_sites,
        channels,
    };
    let mut h = CMat::zeros(map.dim_h(), map.dim_h());
    for n in 0..n_sites {
        for m in 0..n_sites {
            for i in 0..channels {
                for j in 0..channels {
                    let v = s[(n * channels + i, m * channels + j)];
                    if v != Complex64::new(0.0, 0.0) {
                        let row_minus = n * 2 * channels + channels + i;
                        let col_plus = m * 2 * channels + j;
                        h[(row_minus, col_plus)] = v;
                        h[(col_plus, row_minus)] = v.conj();
                    }
                }
            }
        }
    }
    Ok(ChiralOperator {
        s: s.clone(),
        h,
        pi: map.pi_diag(),
        basis_map: map,
    })
}

/// Convenience: assemble `S` and wrap it in one step.
pub fn build_operator(chain: &HoppingChain, bc: &BoundarySpec) -> Result<ChiralOperator> {
    let s = build_s(chain, bc)?;
    build_h(&s, chain.n_min, chain.channels)
}

/// Sub-chain on `[n_min, a]` carrying `bc` at its new top site.
pub fn truncate(chain: &HoppingChain, a: i64, bc: &BoundarySpec) -> Result<HoppingChain> {
    if a < chain.n_min || a > chain.n_max() {
        return Err(ChiralError::SiteOutsideWindow {
            a,
            n_min: chain.n_min,
            n_max: chain.n_max(),
        });
    }
    let keep = (a - chain.n_min + 1) as usize;
    let mut sub = HoppingChain {
        n_min: chain.n_min,
        channels: chain.channels,
        a: chain.a[..keep].to_vec(),
        b: chain.b[..keep].to_vec(),
    };
    if let BoundarySpec::Custom {
        a_boundary,
        b_boundary,
    } = bc
    {
        if let Some(m) = a_boundary {
            *sub.a.last_mut().unwrap() = m.clone();
        }
        if let Some(m) = b_boundary {
            *sub.b.last_mut().unwrap() = m.clone();
        }
    }
    Ok(sub)
}

/// `tr(Pi Lambda)`; vanishes per dimer since each site carries `N` channels
/// of either chirality.
pub fn chirality_trace_check(op: &ChiralOperator, sw: &SwitchFunction) -> f64 {
    let lam = op.basis_map.switch_diag_h(sw);
    op.pi.iter().zip(lam.iter()).map(|(p, l)| p * l).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_s_matrix_matches_defining_equation() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 3);
        let s = build_s(&chain, &BoundarySpec::DirichletCut).unwrap();
        // 0.5 on diagonal, 1 on subdiagonal
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j {
                    0.5
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(s[(i, j)], c(expect));
            }
        }
    }

    #[test]
    fn custom_boundary_replaces_last_row() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 3);
        let bc = BoundarySpec::Custom {
            a_boundary: None,
            b_boundary: Some(CMat::zeros(1, 1)),
        };
        let s = build_s(&chain, &bc).unwrap();
        assert_eq!(s[(2, 2)], c(0.0));
        assert_eq!(s[(1, 1)], c(0.5));
        assert_eq!(s[(2, 1)], c(1.0));
    }

    #[test]
    fn block_columns_land_in_correct_rows() {
        // independent index-by-index assembly oracle, N=2
        let mut rng = 1234_u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let rand_mat = |next: &mut dyn FnMut() -> f64| {
            CMat::from_fn(2, 2, |_, _| Complex64::new(next(), next()))
                + CMat::identity(2, 2) * c(3.0)
        };
        let l = 4;
        let a: Vec<CMat> = (0..l).map(|_| rand_mat(&mut next)).collect();
        let b: Vec<CMat> = (0..l).map(|_| rand_mat(&mut next)).collect();
        let chain = HoppingChain::new(0, 2, a.clone(), b.clone()).unwrap();
        let s = build_s(&chain, &BoundarySpec::DirichletCut).unwrap();

        let mut oracle = CMat::zeros(2 * l, 2 * l);
        for n in 0..l {
            for i in 0..2 {
                for j in 0..2 {
                    oracle[(2 * n + i, 2 * n + j)] = b[n][(i, j)];
                    if n > 0 {
                        oracle[(2 * n + i, 2 * (n - 1) + j)] = a[n][(i, j)];
                    }
                }
            }
        }
        assert_eq!(s, oracle);
    }

    #[test]
    fn h_from_unit_s_is_pauli_x() {
        let s = CMat::from_element(1, 1, c(1.0));
        let op = build_h(&s, 0, 1).unwrap();
        assert_eq!(op.h[(0, 1)], c(1.0));
        assert_eq!(op.h[(1, 0)], c(1.0));
        assert_eq!(op.h[(0, 0)], c(0.0));
        assert_eq!(op.pi, vec![1.0, -1.0]);
    }

    #[test]
    fn h_from_zero_s_is_zero() {
        let s = CMat::zeros(1, 1);
        let op = build_h(&s, 0, 1).unwrap();
        assert_eq!(op.h, CMat::zeros(2, 2));
    }

    #[test]
    fn anticommutation_is_exact() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 8);
        let op = build_operator(&chain, &BoundarySpec::DirichletCut).unwrap();
        assert!(op.anticommutator_norm() < 1e-14);
        assert!(op.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn truncate_matches_sub_block() {
        let chain = HoppingChain::scalar_constant(1.0, 0.7, 10);
        let full = build_operator(&chain, &BoundarySpec::DirichletCut).unwrap();
        let sub = truncate(&chain, 5, &BoundarySpec::DirichletCut).unwrap();
        let sub_op = build_operator(&sub, &BoundarySpec::DirichletCut).unwrap();
        let d = sub_op.h.nrows();
        let block = full.h.view((0, 0), (d, d));
        assert_eq!(sub_op.h, block.clone_owned());
    }

    #[test]
    fn truncate_endpoints() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 5);
        let full = truncate(&chain, chain.n_max(), &BoundarySpec::DirichletCut).unwrap();
        assert_eq!(full.len(), 5);
        let single = truncate(&chain, chain.n_min, &BoundarySpec::DirichletCut).unwrap();
        assert_eq!(single.len(), 1);
        assert!(truncate(&chain, 7, &BoundarySpec::DirichletCut).is_err());
    }

    #[test]
    fn chirality_trace_vanishes() {
        let chain = HoppingChain::scalar_constant(1.0, 0.5, 20);
        let op = build_operator(&chain, &BoundarySpec::DirichletCut).unwrap();
        for center in [0, 5, 10, 19] {
            assert!(chirality_trace_check(&op, &SwitchFunction::sharp(center)).abs() < 1e-12);
            assert!(
                chirality_trace_check(&op, &SwitchFunction::smooth(center, 4)).abs() < 1e-12
            );
        }
    }

    #[test]
    fn singular_interior_rejected() {
        let mut chain = HoppingChain::scalar_constant(1.0, 0.5, 4);
        chain.a[2] = CMat::zeros(1, 1);
        let err = build_s(&chain, &BoundarySpec::DirichletCut).unwrap_err();
        assert!(matches!(err, ChiralError::SingularInterior { site: 2, .. }));
    }

    #[test]
    fn switch_profiles() {
        let sharp = SwitchFunction::sharp(0);
        assert_eq!(sharp.value(-1), 0.0);
        assert_eq!(sharp.value(0), 1.0);
        let ramp = SwitchFunction::smooth(4, 4);
        assert_eq!(ramp.value(0), 0.0);
        assert_eq!(ramp.value(2), 0.5);
        assert_eq!(ramp.value(4), 1.0);
        assert_eq!(ramp.value(9), 1.0);
        // width 1 coincides with sharp
        let w1 = SwitchFunction::smooth(3, 1);
        for n in -5..10 {
            assert_eq!(w1.value(n), SwitchFunction::sharp(3).value(n));
        }
    }
}
