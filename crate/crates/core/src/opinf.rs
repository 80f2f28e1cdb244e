//! Operator inference: regressed reduced operators and the reduced subdomain model.
//!
//! Reduced dynamics are `ä + [K + (β/α) S] u = H t + B g + (1/α) R c` with an
//! identity mass. Tractions and Robin data enter divided by `σ_max`.

use std::ops::Range;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{TractionMethod, TrainingTraction};
use crate::error::{Error, Result};
use crate::fem1d::{MaterialParams, Mesh1D};
use crate::monolithic::Trajectory;
use crate::newmark::{newmark_step, EffectiveSystem, IdentityMassNewmark, KinematicState, NewmarkParams};
use crate::pod::PodBasis;
use crate::schwarz::{SubdomainModel, WindowStart};
use crate::transmission::{extract_traction, interface_node, InterfaceRole, Side, SideCoefficients};

/// Which operators a subdomain learns, fixed by how it consumes λ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RomForm {
    /// `ä + K u = B [g_outer, g_Γ]`
    Dirichlet,
    /// `ä + K u = H t + B g_outer`
    Neumann,
    /// `ä + [K + (β/α) S] u = B g_outer + (1/α) R c`
    Robin,
}

impl RomForm {
    pub fn for_coefficients(coeffs: &SideCoefficients) -> Self {
        match coeffs.role() {
            InterfaceRole::Dirichlet { .. } => RomForm::Dirichlet,
            InterfaceRole::Robin { beta, .. } if beta == 0.0 => RomForm::Neumann,
            InterfaceRole::Robin { .. } => RomForm::Robin,
        }
    }

    pub fn n_dirichlet(&self) -> usize {
        match self {
            RomForm::Dirichlet => 2,
            _ => 1,
        }
    }
}

/// Local node indices carried by a reduced subdomain: every node but the clamped outer one.
pub fn rom_nodes(n_nodes: usize, side: Side) -> Vec<usize> {
    match side {
        Side::Left => (1..n_nodes).collect(),
        Side::Right => (0..n_nodes - 1).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub form: RomForm,
    pub u_hat: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    /// `t / σ_max`; empty unless the form is Neumann.
    pub traction: Vec<f64>,
    /// Prescribed displacements, one row per constrained value.
    pub dirichlet: DMatrix<f64>,
    /// `c / σ_max`; empty unless the form is Robin.
    pub robin: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub sigma_max: f64,
}

impl TrainingSet {
    pub fn n_samples(&self) -> usize {
        self.u_hat.ncols()
    }

    pub fn n_modes(&self) -> usize {
        self.u_hat.nrows()
    }

    fn validate(&self) -> Result<()> {
        let p = self.n_samples();
        let widths_ok = self.a_hat.shape() == self.u_hat.shape()
            && self.dirichlet.ncols() == p
            && self.dirichlet.nrows() == self.form.n_dirichlet()
            && (self.form != RomForm::Neumann || self.traction.len() == p)
            && (self.form != RomForm::Robin || self.robin.len() == p);
        if !widths_ok {
            return Err(Error::DimensionMismatch("training series disagree in length".into()));
        }
        let finite = self.u_hat.iter().all(|x| x.is_finite())
            && self.a_hat.iter().all(|x| x.is_finite())
            && self.dirichlet.iter().all(|x| x.is_finite())
            && self.traction.iter().chain(&self.robin).all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("training data".into()));
        }
        if self.form == RomForm::Robin && self.alpha == 0.0 {
            return Err(Error::InvalidConfig("Robin training with alpha = 0".into()));
        }
        Ok(())
    }

    /// Regression matrix, one row per sample.
    pub fn features(&self) -> DMatrix<f64> {
        let r = self.n_modes();
        let p = self.n_samples();
        let m = self.dirichlet.nrows();
        let ratio = self.beta / self.alpha;
        let d = feature_count(self.form, r, m);
        DMatrix::from_fn(p, d, |k, j| {
            if j < r {
                return -self.u_hat[(j, k)];
            }
            let j = j - r;
            match self.form {
                RomForm::Dirichlet => self.dirichlet[(j, k)],
                RomForm::Neumann => {
                    if j == 0 {
                        self.traction[k]
                    } else {
                        self.dirichlet[(j - 1, k)]
                    }
                }
                RomForm::Robin => {
                    if j < r {
                        -ratio * self.u_hat[(j, k)]
                    } else if j - r < m {
                        self.dirichlet[(j - r, k)]
                    } else {
                        self.robin[k] / self.alpha
                    }
                }
            }
        })
    }
}

fn feature_count(form: RomForm, r: usize, m: usize) -> usize {
    match form {
        RomForm::Dirichlet => r + m,
        RomForm::Neumann => r + 1 + m,
        RomForm::Robin => 2 * r + m + 1,
    }
}

/// Restricts monolithic states to a subdomain, projects them and gathers the
/// interface series its transmission condition needs.
pub fn build_training_set(
    traj: &Trajectory,
    side: Side,
    offset: usize,
    basis: &PodBasis,
    nodes: &[usize],
    coeffs: &SideCoefficients,
    sigma_max: f64,
    states: Range<usize>,
    source: TrainingTraction,
) -> Result<TrainingSet> {
    if !(sigma_max.is_finite() && sigma_max > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_max must be positive, got {sigma_max}")));
    }
    if nodes.len() != basis.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows for {} subdomain nodes",
            basis.n_rows(),
            nodes.len()
        )));
    }
    if states.is_empty() || states.end > traj.n_states() {
        return Err(Error::InvalidConfig(format!(
            "training range {states:?} outside a trajectory of {} states",
            traj.n_states()
        )));
    }
    let p = states.len();
    let rows: Vec<usize> = nodes.iter().map(|&i| i + offset).collect();
    if rows.iter().any(|&i| i >= traj.n_nodes()) {
        return Err(Error::DimensionMismatch("subdomain extends past the trajectory".into()));
    }
    let gather = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), p, |i, k| m[(rows[i], states.start + k)]);
    let u_hat = basis.phi.tr_mul(&gather(&traj.u));
    let a_hat = basis.phi.tr_mul(&gather(&traj.a));

    let outer = match side {
        Side::Left => offset,
        Side::Right => offset + nodes.len(),
    };
    let g_outer: Vec<f64> = states.clone().map(|k| traj.u[(outer, k)]).collect();
    let g_gamma = &traj.interface_disp[states.clone()];
    let series = |x: &[f64], sign: f64| -> Vec<f64> { x[states.clone()].iter().map(|t| sign * t).collect() };
    let traction = match (side, source) {
        (Side::Left, TrainingTraction::OwnElement) => series(&traj.traction_left, 1.0),
        (Side::Right, TrainingTraction::OwnElement) => series(&traj.traction_right, 1.0),
        (Side::Left, TrainingTraction::NeighborElement) => series(&traj.traction_right, -1.0),
        (Side::Right, TrainingTraction::NeighborElement) => series(&traj.traction_left, -1.0),
    };
    let form = RomForm::for_coefficients(coeffs);
    let mut set = TrainingSet {
        form,
        u_hat,
        a_hat,
        traction: Vec::new(),
        dirichlet: DMatrix::from_row_slice(1, p, &g_outer),
        robin: Vec::new(),
        alpha: coeffs.alpha,
        beta: coeffs.beta,
        sigma_max,
    };
    match form {
        RomForm::Dirichlet => {
            set.dirichlet = DMatrix::from_fn(2, p, |i, k| if i == 0 { g_outer[k] } else { g_gamma[k] });
        }
        RomForm::Neumann => {
            set.traction = traction.iter().map(|t| t / sigma_max).collect();
        }
        RomForm::Robin => {
            set.robin = traction
                .iter()
                .zip(g_gamma)
                .map(|(t, g)| (coeffs.alpha * t + coeffs.beta * g) / sigma_max)
                .collect();
        }
    }
    set.validate()?;
    Ok(set)
}

/// Minimizer of `‖D X - Y‖²_F + λ² ‖X‖²_F` through a QR factorization of `[D; λ I]`.
pub fn ridge_solve(d: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let (p, n) = d.shape();
    if y.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "{p} feature rows against {} target rows",
            y.nrows()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig("regularization must be non-negative".into()));
    }
    let mut aug = DMatrix::zeros(p + n, n);
    aug.rows_mut(0, p).copy_from(d);
    for i in 0..n {
        aug[(p + i, i)] = lambda;
    }
    let mut rhs = DMatrix::zeros(p + n, y.ncols());
    rhs.rows_mut(0, p).copy_from(y);
    let qr = aug.qr();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let scale = r.diagonal().amax();
    let min = r.diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(scale > 0.0 && min > 1e-13 * scale) {
        return Err(Error::Singular(format!(
            "regression matrix is rank deficient (pivot ratio {:.1e})",
            min / scale
        )));
    }
    r.solve_upper_triangular(&rhs.rows(0, n).into_owned())
        .ok_or_else(|| Error::Singular("triangular regression factor".into()))
}

/// Learned reduced operators of one subdomain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RomOperators {
    #[serde(rename = "transmission_kind")]
    pub form: RomForm,
    pub r: usize,
    #[serde(with = "row_major", rename = "K_tilde")]
    pub k: DMatrix<f64>,
    #[serde(with = "row_major", rename = "B_tilde")]
    pub b: DMatrix<f64>,
    #[serde(with = "row_major_opt", default, rename = "H_tilde")]
    pub h: Option<DMatrix<f64>>,
    #[serde(with = "row_major_opt", default, rename = "S_tilde")]
    pub s: Option<DMatrix<f64>>,
    #[serde(with = "row_major_opt", default, rename = "R_tilde")]
    pub robin_map: Option<DMatrix<f64>>,
    pub lambda_reg: f64,
    pub sigma_max: f64,
    /// Transmission coefficients seen in training.
    pub alpha: f64,
    pub beta: f64,
    pub n_samples: usize,
    pub basis_file: Option<String>,
    pub training_hash: Option<String>,
}

impl RomOperators {
    pub fn validate(&self) -> Result<()> {
        let r = self.r;
        let m = self.form.n_dirichlet();
        let shapes_ok = self.k.shape() == (r, r)
            && self.b.shape() == (r, m)
            && self.h.as_ref().map_or(self.form != RomForm::Neumann, |h| h.shape() == (r, 1))
            && self.s.as_ref().map_or(self.form != RomForm::Robin, |s| s.shape() == (r, r))
            && self
                .robin_map
                .as_ref()
                .map_or(self.form != RomForm::Robin, |x| x.shape() == (r, 1));
        if !shapes_ok {
            return Err(Error::DimensionMismatch(format!(
                "operator shapes do not match r = {r} for a {:?} model",
                self.form
            )));
        }
        let all = [Some(&self.k), Some(&self.b), self.h.as_ref(), self.s.as_ref(), self.robin_map.as_ref()];
        if !all.iter().flatten().all(|m| m.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("reduced operator".into()));
        }
        Ok(())
    }

    /// `K + (β/α) S` for the given physical coefficients.
    pub fn total_stiffness(&self, alpha: f64, beta: f64) -> DMatrix<f64> {
        match (&self.s, self.form) {
            (Some(s), RomForm::Robin) => &self.k + s * (beta / alpha),
            _ => self.k.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ops: Self = serde_json::from_str(text)?;
        ops.validate()?;
        Ok(ops)
    }
}

pub fn infer_operators(train: &TrainingSet, lambda_reg: f64) -> Result<RomOperators> {
    train.validate()?;
    let r = train.n_modes();
    let m = train.dirichlet.nrows();
    let d = train.features();
    if train.n_samples() < d.ncols() {
        log::warn!(
            "{} samples for {} unknowns per row; the penalty term fixes the remainder",
            train.n_samples(),
            d.ncols()
        );
    }
    for (j, col) in d.column_iter().enumerate() {
        if col.iter().all(|&x| x == 0.0) {
            log::debug!("feature column {j} is identically zero; its operator column is set by the penalty alone");
        }
    }
    let x = ridge_solve(&d, &train.a_hat.transpose(), lambda_reg)?;
    let block = |start: usize, len: usize| x.rows(start, len).transpose();
    let k = block(0, r);
    let (h, s, b, robin_map) = match train.form {
        RomForm::Dirichlet => (None, None, block(r, m), None),
        RomForm::Neumann => (Some(block(r, 1)), None, block(r + 1, m), None),
        RomForm::Robin => (None, Some(block(r, r)), block(2 * r, m), Some(block(2 * r + m, 1))),
    };
    let ops = RomOperators {
        form: train.form,
        r,
        k,
        b,
        h,
        s,
        robin_map,
        lambda_reg,
        sigma_max: train.sigma_max,
        alpha: train.alpha,
        beta: train.beta,
        n_samples: train.n_samples(),
        basis_file: None,
        training_hash: None,
    };
    ops.validate()?;
    Ok(ops)
}

/// Boundary data of one reduced step, in physical units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryInputs {
    /// Outward traction on Γ (Neumann form).
    pub traction: f64,
    /// Prescribed displacements (outer node, then Γ for the Dirichlet form).
    pub dirichlet: Vec<f64>,
    /// Robin data `c = α t + β g`.
    pub robin: f64,
}

/// Right-hand side `H t/σ + B g + (1/α) R c/σ`.
pub fn reduced_forcing(ops: &RomOperators, inputs: &BoundaryInputs, alpha: f64) -> Result<DVector<f64>> {
    if inputs.dirichlet.len() != ops.b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} prescribed values for {} Dirichlet columns",
            inputs.dirichlet.len(),
            ops.b.ncols()
        )));
    }
    let mut f = &ops.b * DVector::from_column_slice(&inputs.dirichlet);
    if let Some(h) = &ops.h {
        f += h.column(0) * (inputs.traction / ops.sigma_max);
    }
    if let Some(rm) = &ops.robin_map {
        f += rm.column(0) * (inputs.robin / (alpha * ops.sigma_max));
    }
    Ok(f)
}

/// Reduced Newmark stepper with the total stiffness factored once.
#[derive(Clone, Debug)]
pub struct RomStepper {
    ops: RomOperators,
    system: IdentityMassNewmark,
    alpha: f64,
}

impl RomStepper {
    pub fn new(ops: RomOperators, alpha: f64, beta: f64, params: NewmarkParams) -> Result<Self> {
        ops.validate()?;
        if ops.form == RomForm::Robin && alpha == 0.0 {
            return Err(Error::InvalidConfig("Robin reduced model with alpha = 0".into()));
        }
        let system = IdentityMassNewmark::new(&ops.total_stiffness(alpha, beta), params)?;
        Ok(Self { ops, system, alpha })
    }

    pub fn ops(&self) -> &RomOperators {
        &self.ops
    }

    pub fn step(&self, inputs: &BoundaryInputs, state: &KinematicState) -> Result<KinematicState> {
        let f = reduced_forcing(&self.ops, inputs, self.alpha)?;
        newmark_step(&self.system, f.as_slice(), state)
    }

    fn step_forcing(&self, f: &DVector<f64>, state: &KinematicState) -> Result<KinematicState> {
        newmark_step(&self.system, f.as_slice(), state)
    }
}

/// One reduced Newmark step.
pub fn rom_step(
    ops: &RomOperators,
    inputs: &BoundaryInputs,
    state: &KinematicState,
    alpha: f64,
    beta: f64,
    params: NewmarkParams,
) -> Result<KinematicState> {
    RomStepper::new(ops.clone(), alpha, beta, params)?.step(inputs, state)
}

/// `out[f] = Φ q[f]` for the three fields, with `Φ` column-major `n x r`.
#[inline(always)]
fn lift_fields_generic(phi: &[f64], n: usize, q: [&[f64]; 3], out: [&mut [f64]; 3]) {
    const BLOCK: usize = 8;
    let r = q[0].len();
    let [ou, ov, oa] = out;
    let mut i = 0;
    while i + BLOCK <= n {
        let (mut su, mut sv, mut sa) = ([0.0; BLOCK], [0.0; BLOCK], [0.0; BLOCK]);
        for j in 0..r {
            let col = &phi[j * n + i..j * n + i + BLOCK];
            let (x, y, z) = (q[0][j], q[1][j], q[2][j]);
            for k in 0..BLOCK {
                su[k] += col[k] * x;
                sv[k] += col[k] * y;
                sa[k] += col[k] * z;
            }
        }
        ou[i..i + BLOCK].copy_from_slice(&su);
        ov[i..i + BLOCK].copy_from_slice(&sv);
        oa[i..i + BLOCK].copy_from_slice(&sa);
        i += BLOCK;
    }
    for i in i..n {
        let (mut su, mut sv, mut sa) = (0.0, 0.0, 0.0);
        for j in 0..r {
            let p = phi[j * n + i];
            su += p * q[0][j];
            sv += p * q[1][j];
            sa += p * q[2][j];
        }
        ou[i] = su;
        ov[i] = sv;
        oa[i] = sa;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn lift_fields_avx2(phi: &[f64], n: usize, q: [&[f64]; 3], out: [&mut [f64]; 3]) {
    lift_fields_generic(phi, n, q, out)
}

fn lift_fields(phi: &[f64], n: usize, q: [&[f64]; 3], out: [&mut [f64]; 3]) {
    assert!(q.iter().all(|x| x.len() == q[0].len()) && phi.len() == n * q[0].len());
    assert!(out.iter().all(|x| x.len() == n));
    #[cfg(target_arch = "x86_64")]
    if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
        // SAFETY: both features were detected on the running CPU
        return unsafe { lift_fields_avx2(phi, n, q, out) };
    }
    lift_fields_generic(phi, n, q, out)
}

/// `x == base + λ dx` bitwise everywhere except at `skip`.
fn affine_match(x: &[f64], base: &[f64], dx: &[f64], lambda: f64, skip: usize) -> bool {
    let same = |r: std::ops::Range<usize>| {
        x[r.clone()]
            .iter()
            .zip(&base[r.clone()])
            .zip(&dx[r])
            .fold(true, |ok, ((x, b), d)| ok & (*x == b + d * lambda))
    };
    same(0..skip) && same(skip + 1..x.len())
}

/// Reduced end state of the current window and the last λ it was evaluated at.
#[derive(Debug)]
struct WindowMemory {
    base: Arc<KinematicState>,
    reduced_base: KinematicState,
    lambda: Option<f64>,
}

/// Reduced-order subdomain usable in the Schwarz loop.
#[derive(Debug)]
pub struct RomSubdomain {
    mesh: Mesh1D,
    material: MaterialParams,
    side: Side,
    role: InterfaceRole,
    basis: PodBasis,
    /// First carried node; the carried nodes are contiguous.
    first: usize,
    stepper: RomStepper,
    outer_value: f64,
    /// Reduced forcing with λ = 0.
    forcing_base: DVector<f64>,
    /// Full-order response of one window to unit λ from rest.
    slope: Arc<KinematicState>,
    reduced_slope: KinematicState,
    memory: Mutex<Option<WindowMemory>>,
}

impl RomSubdomain {
    pub fn new(
        mesh: Mesh1D,
        material: MaterialParams,
        side: Side,
        coeffs: SideCoefficients,
        params: NewmarkParams,
        outer_value: f64,
        basis: PodBasis,
        ops: RomOperators,
    ) -> Result<Self> {
        let form = RomForm::for_coefficients(&coeffs);
        if ops.form != form {
            return Err(Error::InvalidConfig(format!(
                "operators were learned for a {:?} condition, the subdomain needs {:?}",
                ops.form, form
            )));
        }
        let nodes = rom_nodes(mesh.n_nodes(), side);
        if basis.n_rows() != nodes.len() || basis.n_modes() != ops.r {
            return Err(Error::DimensionMismatch(format!(
                "basis is {}x{}, subdomain carries {} nodes and operators have r = {}",
                basis.n_rows(),
                basis.n_modes(),
                nodes.len(),
                ops.r
            )));
        }
        let role = coeffs.role();
        let stepper = RomStepper::new(ops, coeffs.alpha, coeffs.beta, params)?;
        let zero_inputs = BoundaryInputs {
            dirichlet: match form {
                RomForm::Dirichlet => vec![outer_value, 0.0],
                _ => vec![outer_value],
            },
            ..BoundaryInputs::default()
        };
        let forcing_base = reduced_forcing(stepper.ops(), &zero_inputs, coeffs.alpha)?;
        let unit_inputs = match role {
            InterfaceRole::Dirichlet { beta } => BoundaryInputs {
                dirichlet: vec![0.0, 1.0 / beta],
                ..BoundaryInputs::default()
            },
            InterfaceRole::Robin { alpha, .. } => BoundaryInputs {
                // λ is the traction times α on a Neumann side and the Robin data otherwise
                traction: 1.0 / alpha,
                robin: 1.0,
                dirichlet: vec![0.0],
            },
        };
        let forcing_unit = reduced_forcing(stepper.ops(), &unit_inputs, coeffs.alpha)?;
        let mut model = Self {
            mesh,
            material,
            side,
            role,
            basis,
            first: nodes[0],
            stepper,
            outer_value,
            forcing_base,
            slope: Arc::new(KinematicState::zeros(0, 0.0)),
            reduced_slope: KinematicState::zeros(0, 0.0),
            memory: Mutex::new(None),
        };
        let rest = KinematicState::zeros(model.basis.n_modes(), 0.0);
        let reduced = model.stepper.step_forcing(&forcing_unit, &rest)?;
        let mut slope = model.reconstruct(&reduced, 0.0, 0.0);
        if let InterfaceRole::Dirichlet { beta } = role {
            slope.u[model.interface_node()] = 1.0 / beta;
        }
        model.slope = Arc::new(slope);
        model.reduced_slope = reduced;
        Ok(model)
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn ops(&self) -> &RomOperators {
        self.stepper.ops()
    }

    /// `Φᵀ` applied to the carried nodes of `u`, `v` and `a`.
    pub fn project(&self, state: &KinematicState) -> Result<KinematicState> {
        if state.len() != self.mesh.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries for a {}-node subdomain",
                state.len(),
                self.mesh.n_nodes()
            )));
        }
        let len = self.basis.n_rows();
        let rows = self.first..self.first + len;
        let fields = DMatrix::from_fn(len, 3, |i, j| match j {
            0 => state.u[rows.start + i],
            1 => state.v[rows.start + i],
            _ => state.a[rows.start + i],
        });
        let reduced = self.basis.phi.tr_mul(&fields);
        Ok(KinematicState {
            u: reduced.column(0).into_owned(),
            v: reduced.column(1).into_owned(),
            a: reduced.column(2).into_owned(),
            t: state.t,
        })
    }

    /// Lifts a reduced state; the outer node takes `outer` at rest.
    pub fn reconstruct(&self, reduced: &KinematicState, outer: f64, t: f64) -> KinematicState {
        let len = self.basis.n_rows();
        let rows = self.first..self.first + len;
        let mut state = KinematicState::zeros(self.mesh.n_nodes(), t);
        lift_fields(
            self.basis.phi.as_slice(),
            len,
            [reduced.u.as_slice(), reduced.v.as_slice(), reduced.a.as_slice()],
            [
                &mut state.u.as_mut_slice()[rows.clone()],
                &mut state.v.as_mut_slice()[rows.clone()],
                &mut state.a.as_mut_slice()[rows],
            ],
        );
        let outer_node = match self.side {
            Side::Left => 0,
            Side::Right => self.mesh.last_node(),
        };
        state.u[outer_node] = outer;
        state
    }

    /// Reduced coordinates of `prev` when it is the last evaluated iterate,
    /// possibly with its interface node overwritten.
    fn continue_from(&self, prev: &KinematicState) -> Option<KinematicState> {
        let guard = self.memory.lock().ok()?;
        let mem = guard.as_ref()?;
        let lambda = mem.lambda?;
        let g = self.interface_node();
        let slope = &self.slope;
        for (x, base, dx) in [(&prev.u, &mem.base.u, &slope.u), (&prev.v, &mem.base.v, &slope.v), (&prev.a, &mem.base.a, &slope.a)] {
            if x.len() != base.len() || !affine_match(x.as_slice(), base.as_slice(), dx.as_slice(), lambda, g) {
                return None;
            }
        }
        let row = g - self.first;
        let phi = &self.basis.phi;
        let lift = |q: &DVector<f64>, dq: &DVector<f64>, value: f64| {
            let mut q = q + dq * lambda;
            let at_gamma: f64 = (0..q.len()).map(|j| phi[(row, j)] * q[j]).sum();
            let gap = value - at_gamma;
            for j in 0..q.len() {
                q[j] += gap * phi[(row, j)];
            }
            q
        };
        let (qb, qs) = (&mem.reduced_base, &self.reduced_slope);
        Some(KinematicState {
            u: lift(&qb.u, &qs.u, prev.u[g]),
            v: lift(&qb.v, &qs.v, prev.v[g]),
            a: lift(&qb.a, &qs.a, prev.a[g]),
            t: prev.t,
        })
    }

    /// Steps 1 to 5 of a reduced Schwarz iteration, carried out directly.
    pub fn iterate_direct(&self, lambda: f64, prev: &KinematicState) -> Result<KinematicState> {
        let inputs = match self.role {
            InterfaceRole::Dirichlet { beta } => BoundaryInputs {
                dirichlet: vec![self.outer_value, lambda / beta],
                ..BoundaryInputs::default()
            },
            InterfaceRole::Robin { alpha, .. } => BoundaryInputs {
                traction: lambda / alpha,
                robin: lambda,
                dirichlet: vec![self.outer_value],
            },
        };
        let reduced = self.project(prev)?;
        let next = self.stepper.step(&inputs, &reduced)?;
        let mut full = self.reconstruct(&next, self.outer_value, prev.t + self.stepper.system.params().dt);
        if let InterfaceRole::Dirichlet { beta } = self.role {
            full.u[self.interface_node()] = lambda / beta;
        }
        Ok(full)
    }
}

impl SubdomainModel for RomSubdomain {
    fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    fn side(&self) -> Side {
        self.side
    }

    /// The reduced step is affine in λ, so each window is solved once for
    /// λ = 0 and every iteration adds the precomputed unit response.
    /// A start state that is this model's own accepted iterate is taken over
    /// in reduced coordinates instead of being projected.
    fn prepare_window(&self, prev: &KinematicState) -> Result<WindowStart> {
        let reduced = match self.continue_from(prev) {
            Some(q) => q,
            None => self.project(prev)?,
        };
        let next = self.stepper.step_forcing(&self.forcing_base, &reduced)?;
        let mut base = self.reconstruct(&next, self.outer_value, next.t);
        if let InterfaceRole::Dirichlet { .. } = self.role {
            base.u[self.interface_node()] = 0.0;
        }
        let base = Arc::new(base);
        if let Ok(mut mem) = self.memory.lock() {
            *mem = Some(WindowMemory {
                base: base.clone(),
                reduced_base: next,
                lambda: None,
            });
        }
        Ok(WindowStart::Affine {
            base,
            slope: self.slope.clone(),
        })
    }

    fn solve_iteration(&self, lambda: f64, start: &WindowStart) -> Result<KinematicState> {
        let (base, slope) = match start {
            WindowStart::Affine { base, slope } => (base, slope),
            WindowStart::Restart(prev) => return self.iterate_direct(lambda, prev),
        };
        if let Ok(mut guard) = self.memory.lock() {
            if let Some(mem) = guard.as_mut().filter(|m| Arc::ptr_eq(&m.base, base)) {
                mem.lambda = Some(lambda);
            }
        }
        Ok(KinematicState {
            u: &base.u + &slope.u * lambda,
            v: &base.v + &slope.v * lambda,
            a: &base.a + &slope.a * lambda,
            t: base.t,
        })
    }

    fn interface_traction(&self, state: &KinematicState) -> Result<f64> {
        extract_traction(&self.mesh, &self.material, state, self.side, TractionMethod::ElementStress, None)
    }

    fn interface_node(&self) -> usize {
        interface_node(&self.mesh, self.side)
    }

    fn prescribes_interface(&self) -> bool {
        matches!(self.role, InterfaceRole::Dirichlet { .. })
    }

    fn label(&self) -> &'static str {
        "OpInf"
    }
}

mod row_major {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, String> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        from_rows(Vec::deserialize(d)?).map_err(D::Error::custom)
    }
}

mod row_major_opt {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(super::row_major::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(super::row_major::from_rows)
            .transpose()
            .map_err(D::Error::custom)
    }
}
