//! Second-order mechanical models with quadratic/cubic geometric nonlinearity.
//!
//! `M u'' + C u' + K u + G(u,u) + H(u,u,u) = F(t)` with harmonic forcing
//! `F(t) = E+ e^{i W t} + E- e^{-i W t}`, `E+ = E-` real so the load is a
//! cosine. The coefficient tensors are stored as coordinate lists and
//! symmetrised on construction, so `G` and `H` act as symmetric multilinear
//! forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("mass matrix is not symmetric positive definite")]
    MassNotSpd,
    #[error("{0} matrix is not symmetric")]
    NotSymmetric(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported boundary condition `{0}`")]
    UnsupportedBc(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Quadratic coefficient tensor `g_ijk`, symmetrised over `(j, k)`.
#[derive(Debug, Clone, Default)]
pub struct QuadraticTensor {
    entries: Vec<(usize, usize, usize, f64)>,
}

/// Cubic coefficient tensor `h_ijkl`, symmetrised over `(j, k, l)`.
#[derive(Debug, Clone, Default)]
pub struct CubicTensor {
    entries: Vec<(usize, usize, usize, usize, f64)>,
}

impl QuadraticTensor {
    /// Build from raw coordinate entries (0-based indices); the result stores
    /// `(g_ijk + g_ikj) / 2` with duplicates merged.
    pub fn from_raw(raw: &[(usize, usize, usize, f64)]) -> Self {
        let mut acc: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for &(i, j, k, v) in raw {
            if j == k {
                *acc.entry((i, j, k)).or_default() += v;
            } else {
                *acc.entry((i, j, k)).or_default() += v / 2.0;
                *acc.entry((i, k, j)).or_default() += v / 2.0;
            }
        }
        let entries = acc
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j, k), v)| (i, j, k, v))
            .collect();
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.entries
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .map(|&(i, j, k, _)| i.max(j).max(k))
            .max()
    }

    /// `out_i = sum_jk g_ijk u_j v_k`; bilinear and symmetric in `(u, v)`.
    pub fn eval<T>(&self, u: &DVector<T>, v: &DVector<T>) -> DVector<T>
    where
        T: ComplexField<RealField = f64>,
    {
        let mut out = DVector::from_element(u.len(), T::zero());
        for &(i, j, k, val) in &self.entries {
            out[i] += T::from_real(val) * u[j].clone() * v[k].clone();
        }
        out
    }
}

impl CubicTensor {
    pub fn from_raw(raw: &[(usize, usize, usize, usize, f64)]) -> Self {
        let mut acc: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
        for &(i, j, k, l, v) in raw {
            let mut perms: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
            for (a, b, c) in [
                (j, k, l),
                (j, l, k),
                (k, j, l),
                (k, l, j),
                (l, j, k),
                (l, k, j),
            ] {
                *perms.entry((a, b, c)).or_default() += 1.0;
            }
            for ((a, b, c), count) in perms {
                *acc.entry((i, a, b, c)).or_default() += v * count / 6.0;
            }
        }
        let entries = acc
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j, k, l), v)| (i, j, k, l, v))
            .collect();
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, usize, usize, f64)] {
        &self.entries
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .map(|&(i, j, k, l, _)| i.max(j).max(k).max(l))
            .max()
    }

    /// `out_i = sum_jkl h_ijkl u_j v_k w_l`; trilinear and slot-symmetric.
    pub fn eval<T>(&self, u: &DVector<T>, v: &DVector<T>, w: &DVector<T>) -> DVector<T>
    where
        T: ComplexField<RealField = f64>,
    {
        let mut out = DVector::from_element(u.len(), T::zero());
        for &(i, j, k, l, val) in &self.entries {
            out[i] += T::from_real(val) * u[j].clone() * v[k].clone() * w[l].clone();
        }
        out
    }
}

/// One term of the external load shape.
#[derive(Debug, Clone)]
pub enum ForcingTerm {
    /// `kappa * M * phi_mode` (mass-normalised mode), 0-based mode index.
    Mode { mode: usize, kappa: f64 },
    /// Explicit nodal vector.
    Nodal(DVector<f64>),
}

/// Harmonic load at angular frequency `omega`, phase convention `cos(W t)`.
///
/// The two complex harmonics share the real shape
/// `E = 1/2 sum kappa_j M phi_j + 1/2 sum nodal`, so that
/// `E e^{iWt} + E e^{-iWt}` is the physical cosine load.
#[derive(Debug, Clone)]
pub struct ForcingSpec {
    pub omega: f64,
    pub terms: Vec<ForcingTerm>,
}

impl ForcingSpec {
    /// Assemble the harmonic shape `E+ = E-` given the mass-normalised
    /// undamped modes (columns of `phi`).
    pub fn assemble(
        &self,
        model: &MechModel,
        phi: &DMatrix<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        let mut e = DVector::zeros(model.ndof);
        for term in &self.terms {
            match term {
                ForcingTerm::Mode { mode, kappa } => {
                    if *mode >= phi.ncols() {
                        return Err(ModelError::Dimension(format!(
                            "forcing mode {} out of range (model has {} modes)",
                            mode + 1,
                            phi.ncols()
                        )));
                    }
                    e += 0.5 * *kappa * (&model.mass * phi.column(*mode));
                }
                ForcingTerm::Nodal(v) => {
                    if v.len() != model.ndof {
                        return Err(ModelError::Dimension(
                            "nodal forcing vector length differs from dof count".into(),
                        ));
                    }
                    e += 0.5 * v;
                }
            }
        }
        Ok(e)
    }
}

/// Output normalisation constants: the response measure reported on FRCs is
/// `phi^T M u * mode_amp / char_length`.
#[derive(Debug, Clone)]
pub struct ResponseScale {
    pub char_length: f64,
    /// `max |phi_k(x)|` per mode where known (builtin generators); empty means
    /// unit scaling.
    pub mode_amp: Vec<f64>,
}

impl Default for ResponseScale {
    fn default() -> Self {
        Self {
            char_length: 1.0,
            mode_amp: Vec::new(),
        }
    }
}

impl ResponseScale {
    pub fn amp(&self, mode: usize) -> f64 {
        self.mode_amp.get(mode).copied().unwrap_or(1.0)
    }
}

/// Assembled mechanical model. Immutable once built.
#[derive(Debug, Clone)]
pub struct MechModel {
    pub ndof: usize,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub quad: QuadraticTensor,
    pub cubic: CubicTensor,
    /// Default load shape carried by the model file or generator.
    pub forcing: Vec<ForcingTerm>,
    pub scale: ResponseScale,
}

fn check_symmetric(m: &DMatrix<f64>, name: &'static str) -> Result<(), ModelError> {
    let scale = m.amax().max(1e-300);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(ModelError::NotSymmetric(name));
            }
        }
    }
    Ok(())
}

impl MechModel {
    pub fn new(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        quad: QuadraticTensor,
        cubic: CubicTensor,
        forcing: Vec<ForcingTerm>,
    ) -> Result<Self, ModelError> {
        let ndof = mass.nrows();
        let model = Self {
            ndof,
            mass,
            damping,
            stiffness,
            quad,
            cubic,
            forcing,
            scale: ResponseScale::default(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.ndof;
        for (m, name) in [
            (&self.mass, "mass"),
            (&self.damping, "damping"),
            (&self.stiffness, "stiffness"),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(ModelError::Dimension(format!(
                    "{name} matrix is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            check_symmetric(m, name)?;
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(ModelError::MassNotSpd);
        }
        if let Some(i) = self.quad.max_index() {
            if i >= n {
                return Err(ModelError::Dimension(format!(
                    "quadratic tensor index {} exceeds dof count {n}",
                    i + 1
                )));
            }
        }
        if let Some(i) = self.cubic.max_index() {
            if i >= n {
                return Err(ModelError::Dimension(format!(
                    "cubic tensor index {} exceeds dof count {n}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn eval_g(&self, u: &DVector<Complex64>, v: &DVector<Complex64>) -> DVector<Complex64> {
        self.quad.eval(u, v)
    }

    pub fn eval_h(
        &self,
        u: &DVector<Complex64>,
        v: &DVector<Complex64>,
        w: &DVector<Complex64>,
    ) -> DVector<Complex64> {
        self.cubic.eval(u, v, w)
    }

    /// Total nonlinear restoring force `G(u,u) + H(u,u,u)` on real states.
    pub fn nonlinear_force(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut f = self.quad.eval(u, u);
        if !self.cubic.is_empty() {
            f += self.cubic.eval(u, u, u);
        }
        f
    }

    /// Replace the damping matrix with `alpha M + beta K`.
    pub fn set_rayleigh_damping(&mut self, alpha: f64, beta: f64) {
        self.damping = alpha * &self.mass + beta * &self.stiffness;
    }

    /// Dump the assembled matrices as dense CSV files (debug aid).
    pub fn export_matrices_csv(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        for (m, name) in [
            (&self.mass, "M"),
            (&self.damping, "C"),
            (&self.stiffness, "K"),
        ] {
            let mut text = String::new();
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
                writeln!(text, "{}", row.join(",")).unwrap();
            }
            std::fs::write(dir.join(format!("{name}.csv")), text)?;
        }
        Ok(())
    }
}

/// Non-dimensional forcing amplitude `(phi_max / L_ch) * kappa / omega^2`.
pub fn epsilon_load(kappa: f64, phi_max: f64, char_length: f64, omega: f64) -> f64 {
    (phi_max / char_length) * kappa / (omega * omega)
}

/// Single-dof oscillator `q'' + 2 xi w0 q' + w0^2 q + g q^2 + h q^3 = F(t)`.
pub fn builtin_duffing(omega0: f64, xi: f64, g: f64, h: f64) -> Result<MechModel, ModelError> {
    if omega0 <= 0.0 {
        return Err(ModelError::BadParameter("omega0 must be positive".into()));
    }
    if xi < 0.0 {
        return Err(ModelError::BadParameter("xi must be nonnegative".into()));
    }
    let mass = DMatrix::from_element(1, 1, 1.0);
    let damping = DMatrix::from_element(1, 1, 2.0 * xi * omega0);
    let stiffness = DMatrix::from_element(1, 1, omega0 * omega0);
    let quad = QuadraticTensor::from_raw(&[(0, 0, 0, g)]);
    let cubic = CubicTensor::from_raw(&[(0, 0, 0, 0, h)]);
    MechModel::new(mass, damping, stiffness, quad, cubic, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamBc {
    ClampedClamped,
    SimplySupported,
}

impl std::str::FromStr for BeamBc {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clamped-clamped" | "clamped" | "cc" => Ok(BeamBc::ClampedClamped),
            "simply-supported" | "pinned" | "ss" => Ok(BeamBc::SimplySupported),
            other => Err(ModelError::UnsupportedBc(other.into())),
        }
    }
}

/// Modal-space transverse-vibration model of an axially restrained straight
/// beam with the membrane-stretching cubic coupling.
///
/// Unit modal masses, `K = diag(w_k^2)`, no quadratic tensor, and
/// `h_ijkl = (E A / 2 L) b_jk b_il` with `b_jk = int phi_j' phi_k' dx` over
/// mass-normalised bending shapes. The maximum shape amplitudes and the
/// thickness are retained for output normalisation.
pub fn builtin_vk_beam(
    n_modes: usize,
    length: f64,
    thickness: f64,
    width: f64,
    young: f64,
    density: f64,
    bc: BeamBc,
) -> Result<MechModel, ModelError> {
    if n_modes < 1 {
        return Err(ModelError::BadParameter("n_modes must be >= 1".into()));
    }
    for (v, name) in [
        (length, "length"),
        (thickness, "thickness"),
        (width, "width"),
        (young, "young"),
        (density, "density"),
    ] {
        if v <= 0.0 {
            return Err(ModelError::BadParameter(format!("{name} must be positive")));
        }
    }
    let area = width * thickness;
    let inertia = width * thickness.powi(3) / 12.0;
    let ei = young * inertia;
    let rho_a = density * area;

    // 1601 Simpson panels resolve mode 12 to ~1e-9 relative.
    let n_quad = 3200.max(320 * n_modes);
    let shapes: Vec<BeamShape> = (1..=n_modes)
        .map(|k| BeamShape::new(bc, k, length))
        .collect();

    // Mass normalisation: int rho A phi^2 dx = 1.
    let norms: Vec<f64> = shapes
        .iter()
        .map(|s| (rho_a * simpson(n_quad, length, |x| s.value(x).powi(2))).sqrt())
        .collect();
    let omegas: Vec<f64> = shapes
        .iter()
        .map(|s| s.beta * s.beta * (ei / rho_a).sqrt())
        .collect();

    let mut b = DMatrix::zeros(n_modes, n_modes);
    for j in 0..n_modes {
        for k in j..n_modes {
            let val = simpson(n_quad, length, |x| {
                shapes[j].slope(x) * shapes[k].slope(x)
            }) / (norms[j] * norms[k]);
            b[(j, k)] = val;
            b[(k, j)] = val;
        }
    }

    let coef = young * area / (2.0 * length);
    let mut raw = Vec::new();
    for i in 0..n_modes {
        for l in 0..n_modes {
            if b[(i, l)] == 0.0 {
                continue;
            }
            for j in 0..n_modes {
                for k in 0..n_modes {
                    let v = coef * b[(j, k)] * b[(i, l)];
                    if v != 0.0 {
                        raw.push((i, j, k, l, v));
                    }
                }
            }
        }
    }

    let mass = DMatrix::identity(n_modes, n_modes);
    let damping = DMatrix::zeros(n_modes, n_modes);
    let stiffness = DMatrix::from_diagonal(&DVector::from_iterator(
        n_modes,
        omegas.iter().map(|w| w * w),
    ));
    let cubic = CubicTensor::from_raw(&raw);
    let mut model = MechModel::new(
        mass,
        damping,
        stiffness,
        QuadraticTensor::default(),
        cubic,
        Vec::new(),
    )?;
    model.scale = ResponseScale {
        char_length: thickness,
        mode_amp: shapes
            .iter()
            .zip(&norms)
            .map(|(s, n)| s.max_abs(length, n_quad) / n)
            .collect(),
    };
    Ok(model)
}

struct BeamShape {
    bc: BeamBc,
    beta: f64,
    /// `1 - sigma_k` for the clamped-clamped shape, computed without
    /// large-argument cancellation.
    delta: f64,
}

impl BeamShape {
    fn new(bc: BeamBc, k: usize, length: f64) -> Self {
        match bc {
            BeamBc::SimplySupported => Self {
                bc,
                beta: k as f64 * std::f64::consts::PI / length,
                delta: 0.0,
            },
            BeamBc::ClampedClamped => {
                let bl = clamped_root(k);
                let delta = (bl.cos() - bl.sin() - (-bl).exp()) / (bl.sinh() - bl.sin());
                Self {
                    bc,
                    beta: bl / length,
                    delta,
                }
            }
        }
    }

    fn value(&self, x: f64) -> f64 {
        let t = self.beta * x;
        match self.bc {
            BeamBc::SimplySupported => t.sin(),
            BeamBc::ClampedClamped => {
                let d = self.delta;
                0.5 * (d * t.exp() + (2.0 - d) * (-t).exp()) - t.cos() + (1.0 - d) * t.sin()
            }
        }
    }

    fn slope(&self, x: f64) -> f64 {
        let t = self.beta * x;
        self.beta
            * match self.bc {
                BeamBc::SimplySupported => t.cos(),
                BeamBc::ClampedClamped => {
                    let d = self.delta;
                    0.5 * (d * t.exp() - (2.0 - d) * (-t).exp()) + t.sin() + (1.0 - d) * t.cos()
                }
            }
    }

    fn max_abs(&self, length: f64, n: usize) -> f64 {
        (0..=n)
            .map(|i| self.value(length * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// `k`-th root of `cosh(x) cos(x) = 1`, bisected on `cos(x) - 1/cosh(x)`.
fn clamped_root(k: usize) -> f64 {
    let f = |x: f64| x.cos() - 1.0 / x.cosh();
    // Roots interlace (k + 1/2) pi; bracket around it.
    let centre = (k as f64 + 0.5) * std::f64::consts::PI;
    let mut lo = centre - 0.6;
    let mut hi = centre + 0.6;
    debug_assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn simpson(n_panels: usize, length: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = if n_panels % 2 == 0 { n_panels } else { n_panels + 1 };
    let h = length / n as f64;
    let mut sum = f(0.0) + f(length);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

/// Parse a model file.
///
/// Sections `[M]`, `[C]`, `[K]` hold `i j value` lines, `[G]` holds
/// `i j k value`, `[H]` holds `i j k l value`, `[FORCING]` holds
/// `mode <idx> <kappa>` or `vector <i> <value>`; indices are 1-based and `#`
/// starts a comment. The dof count is the largest index seen in the matrix
/// sections.
pub fn load_model(path: &Path) -> Result<MechModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, &path.display().to_string())
}

pub fn parse_model(text: &str, path: &str) -> Result<MechModel, ModelError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        M,
        C,
        K,
        G,
        H,
        Forcing,
    }

    let err = |line: usize, msg: String| ModelError::Parse {
        path: path.to_string(),
        line,
        msg,
    };

    let mut section = Section::None;
    let mut m_raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut c_raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut k_raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut g_raw: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut h_raw: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut force_modes: Vec<(usize, f64)> = Vec::new();
    let mut force_nodal: Vec<(usize, f64)> = Vec::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[M]" => Section::M,
                "[C]" => Section::C,
                "[K]" => Section::K,
                "[G]" => Section::G,
                "[H]" => Section::H,
                "[FORCING]" => Section::Forcing,
                other => return Err(err(lineno, format!("unknown section {other}"))),
            };
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let index = |t: &str| -> Result<usize, ModelError> {
            let v: usize = t
                .parse()
                .map_err(|_| err(lineno, format!("bad index `{t}`")))?;
            if v == 0 {
                return Err(err(lineno, "indices are 1-based".into()));
            }
            Ok(v - 1)
        };
        let value = |t: &str| -> Result<f64, ModelError> {
            t.parse()
                .map_err(|_| err(lineno, format!("bad value `{t}`")))
        };
        match section {
            Section::None => return Err(err(lineno, "data before any section header".into())),
            Section::M | Section::C | Section::K => {
                if toks.len() != 3 {
                    return Err(err(lineno, "expected `i j value`".into()));
                }
                let entry = (index(toks[0])?, index(toks[1])?, value(toks[2])?);
                match section {
                    Section::M => m_raw.push(entry),
                    Section::C => c_raw.push(entry),
                    _ => k_raw.push(entry),
                }
            }
            Section::G => {
                if toks.len() != 4 {
                    return Err(err(lineno, "expected `i j k value`".into()));
                }
                g_raw.push((index(toks[0])?, index(toks[1])?, index(toks[2])?, value(toks[3])?));
            }
            Section::H => {
                if toks.len() != 5 {
                    return Err(err(lineno, "expected `i j k l value`".into()));
                }
                h_raw.push((
                    index(toks[0])?,
                    index(toks[1])?,
                    index(toks[2])?,
                    index(toks[3])?,
                    value(toks[4])?,
                ));
            }
            Section::Forcing => match toks[0] {
                "mode" => {
                    if toks.len() != 3 {
                        return Err(err(lineno, "expected `mode <idx> <kappa>`".into()));
                    }
                    force_modes.push((index(toks[1])?, value(toks[2])?));
                }
                "vector" => {
                    if toks.len() != 3 {
                        return Err(err(lineno, "expected `vector <i> <value>`".into()));
                    }
                    force_nodal.push((index(toks[1])?, value(toks[2])?));
                }
                other => return Err(err(lineno, format!("unknown forcing kind `{other}`"))),
            },
        }
    }

    let ndof = m_raw
        .iter()
        .chain(&c_raw)
        .chain(&k_raw)
        .map(|&(i, j, _)| i.max(j) + 1)
        .max()
        .ok_or_else(|| err(0, "no matrix entries found".into()))?;

    let assemble = |raw: &[(usize, usize, f64)]| {
        let mut m = DMatrix::zeros(ndof, ndof);
        for &(i, j, v) in raw {
            m[(i, j)] += v;
        }
        m
    };

    let mut forcing: Vec<ForcingTerm> = force_modes
        .into_iter()
        .map(|(mode, kappa)| ForcingTerm::Mode { mode, kappa })
        .collect();
    if !force_nodal.is_empty() {
        let mut v = DVector::zeros(ndof);
        for (i, val) in force_nodal {
            if i >= ndof {
                return Err(ModelError::Dimension(format!(
                    "forcing vector index {} exceeds dof count {ndof}",
                    i + 1
                )));
            }
            v[i] += val;
        }
        forcing.push(ForcingTerm::Nodal(v));
    }

    MechModel::new(
        assemble(&m_raw),
        assemble(&c_raw),
        assemble(&k_raw),
        QuadraticTensor::from_raw(&g_raw),
        CubicTensor::from_raw(&h_raw),
        forcing,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn duffing_is_a_unit_oscillator() {
        let m = builtin_duffing(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(m.ndof, 1);
        assert_eq!(m.stiffness[(0, 0)], 1.0);
        assert_eq!(m.damping[(0, 0)], 0.0);
        let u = dv(&[2.0]);
        assert_eq!(m.nonlinear_force(&u)[0], 8.0);
    }

    #[test]
    fn duffing_rejects_bad_parameters() {
        assert!(builtin_duffing(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(builtin_duffing(1.0, -0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn quadratic_symmetrisation_matches_hand_result() {
        // single entry g_121 = 1
        let text = "[M]\n1 1 1\n2 2 1\n[K]\n1 1 1\n2 2 1\n[G]\n1 2 1 1\n";
        let m = parse_model(text, "inline").unwrap();
        let e1 = dv(&[1.0, 0.0]);
        let e2 = dv(&[0.0, 1.0]);
        let g12 = m.quad.eval(&e1, &e2);
        let g21 = m.quad.eval(&e2, &e1);
        assert!((g12[0] - 0.5).abs() < 1e-15 && g12[1].abs() < 1e-15);
        assert!((g21[0] - 0.5).abs() < 1e-15);
        let u = dv(&[1.0, 1.0]);
        let guu = m.quad.eval(&u, &u);
        assert!((guu[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bilinearity_and_slot_symmetry() {
        let m = builtin_duffing(1.0, 0.0, 0.5, 1.0).unwrap();
        let zero = dv(&[0.0]);
        let v = dv(&[3.0]);
        assert_eq!(m.quad.eval(&zero, &v)[0], 0.0);
        let u = dv(&[1.7]);
        let two_u = dv(&[3.4]);
        assert!((m.quad.eval(&two_u, &v)[0] - 2.0 * m.quad.eval(&u, &v)[0]).abs() < 1e-12);
        // Duffing h_1111 = h: H(u,u,u) = h u^3
        assert!((m.cubic.eval(&u, &u, &u)[0] - 1.7f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn tensor_symmetry_on_random_vectors() {
        let raw3 = [(0, 1, 2, 0.7), (1, 0, 0, -0.3), (2, 2, 1, 1.1)];
        let raw4 = [(0, 1, 2, 0, 0.4), (2, 0, 1, 1, -0.9)];
        let g = QuadraticTensor::from_raw(&raw3);
        let h = CubicTensor::from_raw(&raw4);
        let u = dv(&[0.3, -1.2, 0.8]);
        let v = dv(&[1.1, 0.2, -0.5]);
        let w = dv(&[-0.4, 0.9, 0.6]);
        assert!((g.eval(&u, &v) - g.eval(&v, &u)).amax() < 1e-14);
        for (a, b, c) in [(&v, &u, &w), (&w, &v, &u), (&u, &w, &v)] {
            assert!((h.eval(&u, &v, &w) - h.eval(a, b, c)).amax() < 1e-14);
        }
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "[M]\n1 1 1\n[K]\n1 1 oops\n";
        match parse_model(text, "inline") {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_non_spd_mass() {
        let text = "[M]\n1 1 -1\n[K]\n1 1 1\n";
        assert!(matches!(
            parse_model(text, "inline"),
            Err(ModelError::MassNotSpd)
        ));
    }

    #[test]
    fn empty_nonlinear_sections_give_linear_model() {
        let text = "[M]\n1 1 1\n[C]\n1 1 0.1\n[K]\n1 1 4\n";
        let m = parse_model(text, "inline").unwrap();
        assert!(m.quad.is_empty() && m.cubic.is_empty());
        assert_eq!(m.nonlinear_force(&dv(&[2.0]))[0], 0.0);
    }

    #[test]
    fn simply_supported_spectrum_ratio() {
        let m = builtin_vk_beam(2, 1.0, 0.01, 0.024, 160e9, 2320.0, BeamBc::SimplySupported).unwrap();
        let w1 = m.stiffness[(0, 0)].sqrt();
        let w2 = m.stiffness[(1, 1)].sqrt();
        assert!((w2 / w1 - 4.0).abs() < 1e-6);
    }

    #[test]
    fn clamped_frequency_matches_characteristic_root() {
        let (l, h, b, e, rho) = (1000e-6, 10e-6, 24e-6, 160e9, 2320.0);
        let m = builtin_vk_beam(1, l, h, b, e, rho, BeamBc::ClampedClamped).unwrap();
        let w1 = m.stiffness[(0, 0)].sqrt();
        let bl = clamped_root(1);
        assert!((bl.cos() * bl.cosh() - 1.0).abs() < 1e-9);
        let ei = e * b * h.powi(3) / 12.0;
        let expected = (bl / l).powi(2) * (ei / (rho * b * h)).sqrt();
        assert!((w1 / expected - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_mode_beam_reduces_to_duffing() {
        let m = builtin_vk_beam(1, 1.0, 0.01, 0.02, 100e9, 2000.0, BeamBc::SimplySupported).unwrap();
        assert_eq!(m.ndof, 1);
        assert!(m.quad.is_empty());
        let h1111 = m.cubic.eval(&dv(&[1.0]), &dv(&[1.0]), &dv(&[1.0]))[0];
        assert!(h1111 > 0.0, "membrane stretching must harden");
    }

    #[test]
    fn dimensionless_cubic_invariant_under_geometric_scaling() {
        // (L_ch / phi_max)^2 k3 / w0^2 is scale-free; for the pinned beam it
        // equals 3 analytically.
        let check = |l: f64, h: f64, b: f64| {
            let m = builtin_vk_beam(1, l, h, b, 160e9, 2320.0, BeamBc::SimplySupported).unwrap();
            let k3 = m.cubic.eval(&dv(&[1.0]), &dv(&[1.0]), &dv(&[1.0]))[0];
            let w0sq = m.stiffness[(0, 0)];
            (m.scale.char_length / m.scale.mode_amp[0]).powi(2) * k3 / w0sq
        };
        let a = check(1.0, 0.01, 0.024);
        let b = check(3.0, 0.03, 0.072);
        assert!((a - 3.0).abs() < 1e-6, "pinned-beam constant, got {a}");
        assert!((a - b).abs() < 1e-6 * a.abs());
        // Same invariance for the clamped case across two geometries.
        let check_cc = |l: f64, h: f64, b: f64| {
            let m = builtin_vk_beam(1, l, h, b, 160e9, 2320.0, BeamBc::ClampedClamped).unwrap();
            let k3 = m.cubic.eval(&dv(&[1.0]), &dv(&[1.0]), &dv(&[1.0]))[0];
            (m.scale.char_length / m.scale.mode_amp[0]).powi(2) * k3 / m.stiffness[(0, 0)]
        };
        let c = check_cc(1000e-6, 10e-6, 24e-6);
        let d = check_cc(2000e-6, 20e-6, 48e-6);
        assert!((c - d).abs() < 1e-6 * c.abs(), "{c} vs {d}");
    }

    #[test]
    fn beam_passes_model_validity_checks() {
        let m = builtin_vk_beam(4, 1.0, 0.01, 0.02, 160e9, 2320.0, BeamBc::ClampedClamped).unwrap();
        m.validate().unwrap();
    }

    #[test]
    fn epsilon_load_examples() {
        assert_eq!(epsilon_load(1.0, 1.0, 1.0, 1.0), 1.0);
        assert!((epsilon_load(4.0, 0.1, 2.0, 2.0) - 0.05).abs() < 1e-15);
        let e1 = epsilon_load(2.0, 0.3, 1.5, 0.9);
        let e2 = epsilon_load(4.0, 0.3, 1.5, 0.9);
        assert!((e2 - 2.0 * e1).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_damping_helper() {
        let mut m = builtin_duffing(2.0, 0.0, 0.0, 0.0).unwrap();
        m.set_rayleigh_damping(0.3, 0.1);
        assert!((m.damping[(0, 0)] - (0.3 + 0.1 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn forcing_assembly_mode_and_vector() {
        let text = "[M]\n1 1 1\n2 2 1\n[K]\n1 1 1\n2 2 4\n[FORCING]\nmode 1 2.0\nvector 2 1.0\n";
        let m = parse_model(text, "inline").unwrap();
        let phi = DMatrix::from_columns(&[dv(&[1.0, 0.0]), dv(&[0.0, 1.0])]);
        let spec = ForcingSpec {
            omega: 1.0,
            terms: m.forcing.clone(),
        };
        let e = spec.assemble(&m, &phi).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-15); // kappa/2 * M phi_1
        assert!((e[1] - 0.5).abs() < 1e-15); // nodal/2
    }
}
