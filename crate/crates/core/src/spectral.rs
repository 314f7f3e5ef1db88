//! Eigenstructure of the damped mechanical system and the normalised master
//! basis.
//!
//! State ordering of the first-order form is `[velocity; displacement]` with
//! `B = diag(M, M)` and `A = [[-C, -K], [M, 0]]`. Right eigenvectors split as
//! `Y_k = [Y^V_k; Y^U_k]` with `Y^V_k = lambda_k Y^U_k`; left eigenvectors
//! satisfy `X^U* M = X^V* (lambda M + C)`. The basis is normalised so that
//! `X* B Y = I` on the selected columns, and conjugate eigenvalues are stored
//! explicitly: columns `(1..n)` carry `Im lambda > 0`, columns `(n+1..2n)`
//! their conjugates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::model::MechModel;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("damping is not diagonalised by the undamped modes (max off-diagonal {0:.3e}); use the dense linearized path")]
    NonProportionalDamping(f64),
    #[error("master mode {0} is overdamped (xi = {1:.4}); overdamped masters are rejected")]
    Overdamped(usize, f64),
    #[error("unstable eigenvalue {0}: a stable fixed point is required")]
    Unstable(Complex64),
    #[error("defective (Jordan-block) eigenvalue near {0}")]
    Defective(Complex64),
    #[error("master mode index {0} out of range: model has {1} oscillatory modes")]
    BadMasterIndex(usize, usize),
    #[error("stiffness matrix is not positive definite (mode with omega^2 = {0:.3e})")]
    StiffnessNotPositive(f64),
    #[error("dof count {0} exceeds the dense eigensolver cap {1}")]
    DenseCap(usize, usize),
    #[error("eigensolver failed to converge")]
    NoConvergence,
}

/// Mass-normalised undamped modes, ascending frequency.
#[derive(Debug, Clone)]
pub struct UndampedModes {
    pub omegas: Vec<f64>,
    /// N x N matrix of mode shapes, `phi^T M phi = I`.
    pub phi: DMatrix<f64>,
}

/// Solve `K phi = omega^2 M phi` by Cholesky reduction to a symmetric problem.
pub fn undamped_modes(model: &MechModel) -> Result<UndampedModes, SpectralError> {
    let chol = model
        .mass
        .clone()
        .cholesky()
        .expect("mass SPD checked at model build");
    let l = chol.l();
    // S = L^-1 K L^-T, symmetrised against roundoff.
    let mut s = l.solve_lower_triangular(&model.stiffness).unwrap();
    s = l.solve_lower_triangular(&s.transpose()).unwrap();
    s = 0.5 * (&s + s.transpose());
    let eig = s.symmetric_eigen();

    let mut order: Vec<usize> = (0..model.ndof).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut omegas = Vec::with_capacity(model.ndof);
    let mut phi = DMatrix::zeros(model.ndof, model.ndof);
    for (col, &idx) in order.iter().enumerate() {
        let w2 = eig.eigenvalues[idx];
        if w2 <= 0.0 {
            return Err(SpectralError::StiffnessNotPositive(w2));
        }
        omegas.push(w2.sqrt());
        let y = eig.eigenvectors.column(idx).into_owned();
        let mut v = l
            .transpose()
            .solve_upper_triangular(&y)
            .ok_or(SpectralError::NoConvergence)?;
        // phi^T M phi = 1 then deterministic sign.
        let mnorm = (v.dot(&(&model.mass * &v))).sqrt();
        v /= mnorm;
        if v[v.iamax()] < 0.0 {
            v = -v;
        }
        phi.set_column(col, &v);
    }
    Ok(UndampedModes { omegas, phi })
}

/// Damping matrix realising the given modal ratios: `C = M Phi diag(2 xi w) Phi^T M`.
pub fn modal_damping_matrix(model: &MechModel, modes: &UndampedModes, xis: &[f64]) -> DMatrix<f64> {
    let n = model.ndof;
    let mut d = DMatrix::zeros(n, n);
    for k in 0..n {
        let xi = xis.get(k).copied().unwrap_or(0.0);
        d[(k, k)] = 2.0 * xi * modes.omegas[k];
    }
    &model.mass * &modes.phi * d * modes.phi.transpose() * &model.mass
}

/// Mode indices (0-based) whose undamped frequency lies in `[lo, hi]`.
pub fn modes_in_window(modes: &UndampedModes, lo: f64, hi: f64) -> Vec<usize> {
    modes
        .omegas
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= lo && w <= hi)
        .map(|(k, _)| k)
        .collect()
}

/// Master eigen-basis: `2n` columns for `n` selected modes, conjugates stored
/// explicitly in the second half.
#[derive(Debug, Clone)]
pub struct MasterBasis {
    /// Selected mode indices, 0-based, in the order requested.
    pub master_modes: Vec<usize>,
    /// Eigenvalues `(lambda_1..lambda_n, conj(lambda_1)..conj(lambda_n))`.
    pub lambda: Vec<Complex64>,
    pub y_u: DMatrix<Complex64>,
    pub y_v: DMatrix<Complex64>,
    pub x_u: DMatrix<Complex64>,
    pub x_v: DMatrix<Complex64>,
    /// Undamped frequency per selected mode.
    pub omega: Vec<f64>,
    /// Modal damping ratio per selected mode.
    pub xi: Vec<f64>,
}

impl MasterBasis {
    pub fn n_pairs(&self) -> usize {
        self.master_modes.len()
    }

    /// Number of augmented normal coordinates `2n + 2`.
    pub fn n_vars(&self) -> usize {
        2 * self.n_pairs() + crate::polyalgebra::N_FORCING_VARS
    }

    pub fn ndof(&self) -> usize {
        self.y_u.nrows()
    }

    /// Conjugate column pairing: `r <-> r +- n`.
    pub fn conj_column(&self, r: usize) -> usize {
        let n = self.n_pairs();
        if r < n {
            r + n
        } else {
            r - n
        }
    }
}

/// Build the master basis from real normal modes, assuming the damping matrix
/// is diagonalised by them (checked to 1e-8 on off-diagonal modal entries).
pub fn solve_real_mode_basis(
    model: &MechModel,
    masters: &[usize],
) -> Result<MasterBasis, SpectralError> {
    let modes = undamped_modes(model)?;
    real_mode_basis_from_modes(model, &modes, masters)
}

/// Same as [`solve_real_mode_basis`] with precomputed undamped modes.
pub fn real_mode_basis_from_modes(
    model: &MechModel,
    modes: &UndampedModes,
    masters: &[usize],
) -> Result<MasterBasis, SpectralError> {
    let n = model.ndof;
    let modal_c = modes.phi.transpose() * &model.damping * &modes.phi;
    let mut max_off = 0.0f64;
    let mut max_diag = 0.0f64;
    for i in 0..n {
        max_diag = max_diag.max(modal_c[(i, i)].abs());
        for j in 0..n {
            if i != j {
                max_off = max_off.max(modal_c[(i, j)].abs());
            }
        }
    }
    if max_off > 1e-8 * max_diag.max(1e-300) && max_off > 0.0 {
        return Err(SpectralError::NonProportionalDamping(max_off));
    }

    let n_m = masters.len();
    let mut lambda = vec![Complex64::default(); 2 * n_m];
    let mut y_u = DMatrix::zeros(n, 2 * n_m);
    let mut y_v = DMatrix::zeros(n, 2 * n_m);
    let mut x_u = DMatrix::zeros(n, 2 * n_m);
    let mut x_v = DMatrix::zeros(n, 2 * n_m);
    let mut omega = Vec::with_capacity(n_m);
    let mut xi = Vec::with_capacity(n_m);

    for (col, &mode) in masters.iter().enumerate() {
        if mode >= n {
            return Err(SpectralError::BadMasterIndex(mode, n));
        }
        let w = modes.omegas[mode];
        let z = modal_c[(mode, mode)] / (2.0 * w);
        if z >= 1.0 {
            return Err(SpectralError::Overdamped(mode, z));
        }
        let lam = Complex64::new(-z * w, w * (1.0 - z * z).sqrt());
        let phi = modes.phi.column(mode).map(|v| Complex64::new(v, 0.0));

        // Left vectors scaled for X* B Y = 1: X^V = phi / (conj(l) - l),
        // X^U = -l X^V.
        for (c, l) in [(col, lam), (col + n_m, lam.conj())] {
            lambda[c] = l;
            let gamma = (l.conj() - l).inv();
            y_u.set_column(c, &phi);
            y_v.set_column(c, &(&phi * l));
            x_v.set_column(c, &(&phi * gamma));
            x_u.set_column(c, &(&phi * (-l * gamma)));
        }
        omega.push(w);
        xi.push(z);
    }

    Ok(MasterBasis {
        master_modes: masters.to_vec(),
        lambda,
        y_u,
        y_v,
        x_u,
        x_v,
        omega,
        xi,
    })
}

/// Default dof cap of the dense linearized eigensolver.
pub const DENSE_CAP: usize = 500;

/// Solve the full `2N` linearized eigenproblem densely and extract the master
/// basis; also returns the whole spectrum sorted by decreasing real part (the
/// least damped eigenvalue first).
pub fn solve_dense_linearized(
    model: &MechModel,
    masters: &[usize],
) -> Result<(MasterBasis, Vec<Complex64>), SpectralError> {
    if model.ndof > DENSE_CAP {
        return Err(SpectralError::DenseCap(model.ndof, DENSE_CAP));
    }
    let a = companion_matrix(model);
    let eigs = a
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(SpectralError::NoConvergence)?
        .complex_eigenvalues();
    let scale = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);

    for l in eigs.iter() {
        if l.re > 1e-8 * scale.max(1e-300) {
            return Err(SpectralError::Unstable(*l));
        }
    }

    // Oscillatory pairs sorted by ascending frequency define the mode index.
    let mut plus: Vec<Complex64> = eigs.iter().filter(|l| l.im > 1e-9 * scale).copied().collect();
    plus.sort_by(|a, b| a.im.total_cmp(&b.im));

    // Near-equal eigenvalues with (numerically) parallel eigenvectors signal
    // a Jordan block.
    for i in 1..plus.len() {
        if (plus[i] - plus[i - 1]).norm() < 1e-10 * scale {
            let v1 = right_eigenvector(&a, plus[i - 1])?;
            let v2 = right_eigenvector(&a, plus[i])?;
            let cos = v1.dotc(&v2).norm() / (v1.norm() * v2.norm());
            if cos > 1.0 - 1e-8 {
                return Err(SpectralError::Defective(plus[i]));
            }
        }
    }

    let n = model.ndof;
    let n_m = masters.len();
    let mut lambda = vec![Complex64::default(); 2 * n_m];
    let mut y_u = DMatrix::zeros(n, 2 * n_m);
    let mut y_v = DMatrix::zeros(n, 2 * n_m);
    let mut x_u = DMatrix::zeros(n, 2 * n_m);
    let mut x_v = DMatrix::zeros(n, 2 * n_m);
    let mut omega = Vec::with_capacity(n_m);
    let mut xi = Vec::with_capacity(n_m);

    let at = a.transpose();
    for (col, &mode) in masters.iter().enumerate() {
        if mode >= plus.len() {
            return Err(SpectralError::BadMasterIndex(mode, plus.len()));
        }
        let lam = plus[mode];
        let y = right_eigenvector(&a, lam)?;
        // Enforce the velocity/displacement link exactly and fix the phase by
        // the largest displacement component.
        let mut yu = y.rows(n, n).into_owned();
        let m = arg_max_norm(&yu);
        let rot = yu[m].conj() / yu[m].norm();
        yu *= rot;
        let yv = &yu * lam;

        // (B^-1 A)^T v = conj(l) v gives the left eigenvector as X = B^-1 v.
        let x = right_eigenvector(&at, lam.conj())?;
        let chol = model.mass.clone().cholesky().unwrap();
        let mut xv = solve_spd_complex(&chol, &x.rows(0, n).into_owned());
        // X^U from the left eigen identity, then scale for X* B Y = 1.
        let c_xv = model.damping.map(Complex64::from) * &xv;
        let mut xu = &xv * lam.conj() + solve_spd_complex(&chol, &c_xv);
        let mu = model.mass.map(Complex64::from);
        // (s X)* B Y = conj(s) * norm = 1
        let norm = xv.dotc(&(&mu * &yv)) + xu.dotc(&(&mu * &yu));
        let s = norm.inv().conj();
        xv *= s;
        xu *= s;

        for half in 0..2 {
            let c = col + half * n_m;
            if half == 0 {
                lambda[c] = lam;
                y_u.set_column(c, &yu);
                y_v.set_column(c, &yv);
                x_u.set_column(c, &xu);
                x_v.set_column(c, &xv);
            } else {
                lambda[c] = lam.conj();
                y_u.set_column(c, &yu.map(|v| v.conj()));
                y_v.set_column(c, &yv.map(|v| v.conj()));
                x_u.set_column(c, &xu.map(|v| v.conj()));
                x_v.set_column(c, &xv.map(|v| v.conj()));
            }
        }
        omega.push(lam.norm());
        xi.push(-lam.re / lam.norm());
    }

    let mut sorted: Vec<Complex64> = eigs.iter().copied().collect();
    sorted.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));

    Ok((
        MasterBasis {
            master_modes: masters.to_vec(),
            lambda,
            y_u,
            y_v,
            x_u,
            x_v,
            omega,
            xi,
        },
        sorted,
    ))
}

/// Full first-order eigenbasis with `X* B Y = I` exactly; intended for the
/// modal-space reference solver at small dof counts.
#[derive(Debug, Clone)]
pub struct FullSpectrum {
    /// `2N` eigenvalues: oscillatory pairs ascending, plus-half first.
    pub lambda: Vec<Complex64>,
    /// `2N x 2N` right eigenvectors in first-order state ordering `[V; U]`.
    pub y: DMatrix<Complex64>,
    /// Rows of `X*` (i.e. `X* = (B Y)^-1`), same ordering.
    pub x_star: DMatrix<Complex64>,
    pub ndof: usize,
}

pub const FULL_SPECTRUM_CAP: usize = 60;

pub fn solve_full_spectrum(model: &MechModel) -> Result<FullSpectrum, SpectralError> {
    let n = model.ndof;
    if n > FULL_SPECTRUM_CAP {
        return Err(SpectralError::DenseCap(n, FULL_SPECTRUM_CAP));
    }
    let a = companion_matrix(model);
    let eigs = a
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(SpectralError::NoConvergence)?
        .complex_eigenvalues();
    let scale = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let mut plus: Vec<Complex64> = eigs.iter().filter(|l| l.im > 1e-9 * scale).copied().collect();
    plus.sort_by(|a, b| a.im.total_cmp(&b.im));
    if plus.len() != n {
        return Err(SpectralError::NoConvergence);
    }

    let mut lambda = Vec::with_capacity(2 * n);
    let mut y = DMatrix::zeros(2 * n, 2 * n);
    for (k, &lam) in plus.iter().enumerate() {
        let v = right_eigenvector(&a, lam)?;
        let mut vu = v.rows(n, n).into_owned();
        let m = arg_max_norm(&vu);
        let rot = vu[m].conj() / vu[m].norm();
        vu *= rot;
        let vv = &vu * lam;
        for i in 0..n {
            y[(i, k)] = vv[i];
            y[(i + n, k)] = vu[i];
            y[(i, k + n)] = vv[i].conj();
            y[(i + n, k + n)] = vu[i].conj();
        }
        lambda.push(lam);
    }
    for &lam in &plus {
        lambda.push(lam.conj());
    }

    // X* = (B Y)^-1 makes biorthonormality exact.
    let mut by = DMatrix::zeros(2 * n, 2 * n);
    let mc = model.mass.map(Complex64::from);
    let top = &mc * y.rows(0, n);
    let bot = &mc * y.rows(n, n);
    by.rows_mut(0, n).copy_from(&top);
    by.rows_mut(n, n).copy_from(&bot);
    let x_star = by.lu().try_inverse().ok_or(SpectralError::Defective(
        *lambda.first().unwrap_or(&Complex64::default()),
    ))?;

    Ok(FullSpectrum {
        lambda,
        y,
        x_star,
        ndof: n,
    })
}

fn arg_max_norm(v: &DVector<Complex64>) -> usize {
    let mut best = 0;
    let mut best_n = -1.0;
    for (i, z) in v.iter().enumerate() {
        let n = z.norm_sqr();
        if n > best_n {
            best_n = n;
            best = i;
        }
    }
    best
}

/// Solve `M x = b` for complex `b` with the real Cholesky factor of `M`.
fn solve_spd_complex(
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    b: &DVector<Complex64>,
) -> DVector<Complex64> {
    let re = chol.solve(&b.map(|z| z.re));
    let im = chol.solve(&b.map(|z| z.im));
    DVector::from_fn(b.len(), |i, _| Complex64::new(re[i], im[i]))
}

/// `B^-1 A` for the mechanical first-order form.
fn companion_matrix(model: &MechModel) -> DMatrix<f64> {
    let n = model.ndof;
    let chol = model.mass.clone().cholesky().expect("mass SPD");
    let minv_c = chol.solve(&model.damping);
    let minv_k = chol.solve(&model.stiffness);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-&minv_c));
    a.view_mut((0, n), (n, n)).copy_from(&(-&minv_k));
    a.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    a
}

/// Inverse iteration with a slightly perturbed shift.
fn right_eigenvector(
    a: &DMatrix<f64>,
    lambda: Complex64,
) -> Result<DVector<Complex64>, SpectralError> {
    let n = a.nrows();
    let scale = lambda.norm().max(1e-300);
    let mut shift = lambda + Complex64::new(1e-11, 1e-11) * scale;
    for attempt in 0..4 {
        let mut m = a.map(Complex64::from);
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        if let Some(lu) = try_lu(m) {
            // Deterministic start vector with no special structure.
            let mut v = DVector::from_fn(n, |i, _| {
                Complex64::new(1.0 + (i as f64 * 0.7).sin(), 0.5 + (i as f64 * 1.3).cos())
            });
            v /= Complex64::new(v.norm(), 0.0);
            let mut ok = true;
            for _ in 0..3 {
                match lu.solve(&v) {
                    Some(w) => {
                        let nrm = w.norm();
                        if !nrm.is_finite() || nrm == 0.0 {
                            ok = false;
                            break;
                        }
                        v = w / Complex64::new(nrm, 0.0);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(v);
            }
        }
        shift = lambda + Complex64::new(1e-9, 1e-9) * scale * (attempt + 1) as f64;
    }
    Err(SpectralError::NoConvergence)
}

struct ComplexLu {
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

fn try_lu(m: DMatrix<Complex64>) -> Option<ComplexLu> {
    let lu = m.lu();
    Some(ComplexLu { lu })
}

impl ComplexLu {
    fn solve(&self, b: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        self.lu.solve(b)
    }
}

/// Per-mode record for the `--report-spectrum` JSON dump.
#[derive(Debug, Serialize)]
pub struct SpectrumModeReport {
    pub mode: usize,
    pub omega_rad: f64,
    pub omega_cycles: f64,
    pub xi: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
}

pub fn spectrum_report(basis: &MasterBasis) -> Vec<SpectrumModeReport> {
    (0..basis.n_pairs())
        .map(|k| SpectrumModeReport {
            mode: basis.master_modes[k] + 1,
            omega_rad: basis.omega[k],
            omega_cycles: basis.omega[k] / (2.0 * std::f64::consts::PI),
            xi: basis.xi[k],
            lambda_re: basis.lambda[k].re,
            lambda_im: basis.lambda[k].im,
        })
        .collect()
}
