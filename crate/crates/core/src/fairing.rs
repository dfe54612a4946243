//! Implicit graph fairing.
//!
//! Fairing a node signal `X` with scale `s` means solving the sparse SPD
//! system `(I + sL) H = X`, where `L = I - S` is the normalized Laplacian.
//! In the Laplacian eigenbasis this applies the transfer function
//! `1 / (1 + sλ)` to every frequency, a low-pass filter that keeps the
//! `λ = 0` component untouched and approaches an ideal low-pass filter as `s`
//! grows.
//!
//! Two solvers are provided. [`fair_direct`] runs conjugate gradient on all
//! columns at once. [`fair_jacobi`] uses the splitting
//! `diag(I + sL) = (1 + s) I`, `off(I + sL) = -sS`, which gives the update
//! `H ← (s/(1+s)) S H + (1/(1+s)) X` with iteration-matrix spectral radius
//! `s/(1+s) < 1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{NormKind, NormalizedOperator, SparseGraph};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairingConfig {
    /// Scale of the diffusion; `0` is the identity filter.
    pub s: f64,
    /// Iteration cap. `None` picks a size-dependent default per solver.
    pub max_iters: Option<usize>,
    /// Threshold on `‖(I + sL)H − X‖_F / ‖X‖_F`.
    pub tol: f64,
}

impl FairingConfig {
    pub const DEFAULT_TOL: f64 = 1e-10;

    pub fn new(s: f64) -> Self {
        Self {
            s,
            max_iters: None,
            tol: Self::DEFAULT_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = Some(max_iters);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "fairing scale must be finite and non-negative, got {}",
                self.s
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "fairing tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Outcome of a fairing solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual of the returned solution.
    pub final_residual: f64,
    /// Ratio of consecutive residual norms (Jacobi only). Because the
    /// residual obeys `r⁽ᵗ⁺¹⁾ = C r⁽ᵗ⁾` with the iteration matrix `C`, each
    /// ratio is bounded by `s/(1+s)`. Ratios are only recorded while the
    /// residual stays well above its rounding noise, `≈ ε (1 + 2s)`.
    pub contraction_estimates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Jacobi,
}

/// Transfer function `h_s(λ) = 1 / (1 + sλ)`.
#[inline]
pub fn transfer(s: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + s * lambda)
}

/// Upper bound `1 + 2s` on the condition number of `I + sL`.
#[inline]
pub fn condition_bound(s: f64) -> f64 {
    1.0 + 2.0 * s
}

fn check_rows(g: &SparseGraph, x: &DenseMatrix, op: &'static str) -> Result<()> {
    if x.rows() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            op,
            expected: (g.num_nodes(), x.cols()),
            found: x.shape(),
        });
    }
    Ok(())
}

/// `(I + sL) H = (1 + s) H - s S H`, given `S H`.
fn apply_system(s: f64, h: &DenseMatrix, sh: &DenseMatrix) -> DenseMatrix {
    let mut out = h.scale(1.0 + s);
    out.axpy(-s, sh).expect("same shape");
    out
}

fn relative_residual(s: f64, h: &DenseMatrix, sh: &DenseMatrix, x: &DenseMatrix, x_norm: f64) -> f64 {
    let mut r = apply_system(s, h, sh);
    r.axpy(-1.0, x).expect("same shape");
    if x_norm > 0.0 {
        r.frobenius_norm() / x_norm
    } else {
        r.frobenius_norm()
    }
}

/// Solves `(I + sL) H = X` with conjugate gradient, one recurrence per
/// column, stopping on the joint relative residual.
pub fn fair_direct(
    g: &SparseGraph,
    x: &DenseMatrix,
    cfg: &FairingConfig,
) -> Result<(DenseMatrix, SolveReport)> {
    cfg.validate()?;
    check_rows(g, x, "fair_direct")?;
    if cfg.s == 0.0 {
        return Ok((x.clone(), SolveReport::default()));
    }
    let s = cfg.s;
    let op = g.normalize(NormKind::AdjacencyNorm);
    let max_iters = cfg.max_iters.unwrap_or(10 * g.num_nodes().max(1));
    let x_norm = x.frobenius_norm();
    let (n, f) = x.shape();
    if x_norm == 0.0 {
        return Ok((DenseMatrix::zeros(n, f), SolveReport::default()));
    }

    let mut h = DenseMatrix::zeros(n, f);
    let mut r = x.clone();
    let mut p = r.clone();
    let mut rr = column_dots(&r, &r);
    let mut iterations = 0;

    loop {
        let recursive = libm::sqrt(rr.iter().sum::<f64>()) / x_norm;
        if recursive <= cfg.tol {
            // The recursive residual drifts from the true one; confirm it.
            let sh = op.spmm(&h)?;
            let true_res = relative_residual(s, &h, &sh, x, x_norm);
            if true_res <= cfg.tol {
                return Ok((
                    h,
                    SolveReport {
                        iterations,
                        final_residual: true_res,
                        contraction_estimates: Vec::new(),
                    },
                ));
            }
            r = x.clone();
            r.axpy(-1.0, &apply_system(s, &h, &sh))?;
            p = r.clone();
            rr = column_dots(&r, &r);
        }
        if iterations >= max_iters {
            let sh = op.spmm(&h)?;
            return Err(Error::NotConverged(SolveReport {
                iterations,
                final_residual: relative_residual(s, &h, &sh, x, x_norm),
                contraction_estimates: Vec::new(),
            }));
        }

        let sp = op.spmm(&p)?;
        let ap = apply_system(s, &p, &sp);
        let pap = column_dots(&p, &ap);
        let mut alpha = vec![0.0; f];
        for j in 0..f {
            if rr[j] > 0.0 && pap[j] > 0.0 {
                alpha[j] = rr[j] / pap[j];
            }
        }
        for i in 0..n {
            let (p_row, ap_row) = (p.row(i), ap.row(i));
            let h_row = &mut h.as_mut_slice()[i * f..(i + 1) * f];
            for j in 0..f {
                h_row[j] += alpha[j] * p_row[j];
            }
            let r_row = &mut r.as_mut_slice()[i * f..(i + 1) * f];
            for j in 0..f {
                r_row[j] -= alpha[j] * ap_row[j];
            }
        }
        let rr_new = column_dots(&r, &r);
        let beta: Vec<f64> = rr
            .iter()
            .zip(&rr_new)
            .map(|(&old, &new)| if old > 0.0 { new / old } else { 0.0 })
            .collect();
        for (k, (pv, &rv)) in p.as_mut_slice().iter_mut().zip(r.as_slice()).enumerate() {
            *pv = rv + beta[k % f] * *pv;
        }
        rr = rr_new;
        iterations += 1;
    }
}

fn column_dots(a: &DenseMatrix, b: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for ((o, x), y) in out.iter_mut().zip(a.row(i)).zip(b.row(i)) {
            *o += x * y;
        }
    }
    out
}

/// One Jacobi update `H' = (s/(1+s)) S H + (1/(1+s)) X`.
pub fn jacobi_step(
    op: &NormalizedOperator,
    h: &DenseMatrix,
    x: &DenseMatrix,
    s: f64,
) -> Result<DenseMatrix> {
    let sh = op.spmm(h)?;
    jacobi_combine(&sh, x, s)
}

fn jacobi_combine(sh: &DenseMatrix, x: &DenseMatrix, s: f64) -> Result<DenseMatrix> {
    let mut next = sh.scale(s / (1.0 + s));
    next.axpy(1.0 / (1.0 + s), x)?;
    Ok(next)
}

/// Iteration cap for Jacobi when none is configured: enough steps for the
/// contraction bound to take the initial residual (at most `2s`) below
/// `tol`, and never fewer than `10 N`.
fn default_jacobi_iters(n: usize, s: f64, tol: f64) -> usize {
    const CAP: usize = 1_000_000;
    let rho = s / (1.0 + s);
    let needed = if rho > 0.0 && rho < 1.0 {
        libm::ceil(libm::log(tol / (2.0 * s).max(1.0)) / libm::log(rho)) + 10.0
    } else {
        CAP as f64
    };
    let needed = if needed.is_finite() && needed < CAP as f64 {
        needed as usize
    } else {
        CAP
    };
    needed.max(10 * n.max(1)).min(CAP)
}

/// Relative residual below which, scaled by `1 + 2s`, residual ratios are
/// dominated by rounding.
const ESTIMATE_FLOOR: f64 = 1e-8;

/// Solves `(I + sL) H = X` with Jacobi iterations starting from `H⁰ = X`.
pub fn fair_jacobi(
    g: &SparseGraph,
    x: &DenseMatrix,
    cfg: &FairingConfig,
) -> Result<(DenseMatrix, SolveReport)> {
    cfg.validate()?;
    check_rows(g, x, "fair_jacobi")?;
    if cfg.s == 0.0 {
        return Ok((x.clone(), SolveReport::default()));
    }
    let s = cfg.s;
    let op = g.normalize(NormKind::AdjacencyNorm);
    let max_iters = cfg
        .max_iters
        .unwrap_or_else(|| default_jacobi_iters(g.num_nodes(), s, cfg.tol));
    let x_norm = x.frobenius_norm();

    let mut h = x.clone();
    let mut report = SolveReport::default();
    let mut prev_residual: Option<f64> = None;
    loop {
        let sh = op.spmm(&h)?;
        let residual = relative_residual(s, &h, &sh, x, x_norm);
        if let Some(prev) = prev_residual {
            if prev > ESTIMATE_FLOOR * (1.0 + 2.0 * s) {
                report.contraction_estimates.push(residual / prev);
            }
        }
        report.final_residual = residual;
        if residual <= cfg.tol {
            return Ok((h, report));
        }
        if report.iterations >= max_iters {
            return Err(Error::NotConverged(report));
        }
        h = jacobi_combine(&sh, x, s)?;
        report.iterations += 1;
        prev_residual = Some(residual);
    }
}

/// Dispatches to [`fair_direct`] or [`fair_jacobi`].
pub fn fair(
    g: &SparseGraph,
    x: &DenseMatrix,
    cfg: &FairingConfig,
    method: Method,
) -> Result<(DenseMatrix, SolveReport)> {
    match method {
        Method::Direct => fair_direct(g, x, cfg),
        Method::Jacobi => fair_jacobi(g, x, cfg),
    }
}

fn check_pair(g: &SparseGraph, h: &DenseMatrix, x: &DenseMatrix, op: &'static str) -> Result<()> {
    check_rows(g, x, op)?;
    if h.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            op,
            expected: x.shape(),
            found: h.shape(),
        });
    }
    Ok(())
}

/// Variational objective `½‖H − X‖²_F + (s/2) tr(Hᵀ L H)`, minimized by the
/// fairing solution.
pub fn fairing_energy(g: &SparseGraph, h: &DenseMatrix, x: &DenseMatrix, s: f64) -> Result<f64> {
    check_pair(g, h, x, "fairing_energy")?;
    let lap = g.normalize(NormKind::LaplacianNorm);
    let lh = lap.spmm(h)?;
    let fidelity = h.sub(x)?.squared_norm();
    Ok(0.5 * fidelity + 0.5 * s * h.inner(&lh)?)
}

/// Gradient of [`fairing_energy`] with respect to `H`: `(H − X) + s L H`.
pub fn fairing_energy_gradient(
    g: &SparseGraph,
    h: &DenseMatrix,
    x: &DenseMatrix,
    s: f64,
) -> Result<DenseMatrix> {
    check_pair(g, h, x, "fairing_energy_gradient")?;
    let lap = g.normalize(NormKind::LaplacianNorm);
    let mut grad = h.sub(x)?;
    grad.axpy(s, &lap.spmm(h)?)?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2() -> SparseGraph {
        SparseGraph::from_edges(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn transfer_values() {
        assert_eq!(transfer(7.3, 0.0), 1.0);
        assert_eq!(transfer(1.0, 1.0), 0.5);
        assert_eq!(transfer(10.0, 2.0), 1.0 / 21.0);
    }

    #[test]
    fn condition_bound_values() {
        assert_eq!(condition_bound(1.0), 3.0);
        assert_eq!(condition_bound(0.5), 2.0);
    }

    #[test]
    fn zero_scale_is_identity() {
        let g = path2();
        let x = DenseMatrix::from_rows(&[[1.5, -2.0], [0.25, 3.0]]);
        let cfg = FairingConfig::new(0.0);
        assert_eq!(fair_direct(&g, &x, &cfg).unwrap().0, x);
        assert_eq!(fair_jacobi(&g, &x, &cfg).unwrap().0, x);
    }

    #[test]
    fn path_solution_by_hand() {
        // (I + L) = [[2, -1], [-1, 2]], inverse = [[2, 1], [1, 2]] / 3.
        let g = path2();
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        let cfg = FairingConfig::new(1.0);
        let (h, report) = fair_direct(&g, &x, &cfg).unwrap();
        assert!((h.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((h.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!(report.final_residual <= 1e-10);

        let (hj, report) = fair_jacobi(&g, &x, &cfg).unwrap();
        assert!((hj.get(0, 0) - 2.0 / 3.0).abs() < 1e-9);
        assert!((hj.get(1, 0) - 1.0 / 3.0).abs() < 1e-9);
        assert!(report.contraction_estimates.iter().all(|&r| r <= 0.5 + 1e-12));
    }

    #[test]
    fn jacobi_first_iterate() {
        let g = SparseGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let x = DenseMatrix::from_fn(4, 2, |i, j| (i as f64) - 0.7 * j as f64);
        let s = 2.5;
        let op = g.normalize(NormKind::AdjacencyNorm);
        let h1 = jacobi_step(&op, &x, &x, s).unwrap();
        let sx = op.spmm(&x).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let expected = (s / (1.0 + s)) * sx.get(i, j) + (1.0 / (1.0 + s)) * x.get(i, j);
                assert_eq!(h1.get(i, j), expected);
            }
        }
        match fair_jacobi(&g, &x, &FairingConfig::new(s).with_max_iters(1)) {
            Err(Error::NotConverged(report)) => assert_eq!(report.iterations, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_convergence_carries_report() {
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0], [0.0], [0.0]]);
        let err = fair_jacobi(&g, &x, &FairingConfig::new(50.0).with_max_iters(3)).unwrap_err();
        match err {
            Error::NotConverged(r) => {
                assert_eq!(r.iterations, 3);
                assert!(r.final_residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn energy_on_path() {
        let g = path2();
        let h = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        assert_eq!(fairing_energy(&g, &h, &h, 1.0).unwrap(), 0.5);
        // sqrt(degree) spans the kernel of L, so only a zero fidelity term
        // and a zero smoothness term remain.
        let w = DenseMatrix::from_rows(&[[1.0], [1.0]]);
        assert_eq!(fairing_energy(&g, &w, &w, 3.0).unwrap(), 0.0);
        // Isolated nodes keep L_ii = 1, so the empty graph penalizes H itself.
        let empty = SparseGraph::empty(2);
        assert_eq!(fairing_energy(&empty, &h, &h, 3.0).unwrap(), 1.5);
        assert_eq!(fairing_energy(&empty, &DenseMatrix::zeros(2, 1), &DenseMatrix::zeros(2, 1), 3.0).unwrap(), 0.0);
        assert!(fairing_energy(&g, &h, &DenseMatrix::zeros(2, 2), 1.0).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let g = path2();
        let x = DenseMatrix::zeros(2, 1);
        assert!(fair_direct(&g, &x, &FairingConfig::new(-1.0)).is_err());
        assert!(fair_direct(&g, &x, &FairingConfig::new(1.0).with_tol(0.0)).is_err());
        assert!(fair_direct(&g, &DenseMatrix::zeros(3, 1), &FairingConfig::new(1.0)).is_err());
    }
}
