//! Newmark-β stepping for linear second-order systems `M ü + K u = f(t)`.

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymTridiagonal, TridiagonalLdl};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl NewmarkParams {
    /// Constant average acceleration (β = 1/4, γ = 1/2).
    pub fn average_acceleration(dt: f64) -> Result<Self> {
        let params = Self {
            beta: 0.25,
            gamma: 0.5,
            dt,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if !(self.beta > 0.0 && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid Newmark parameters beta = {}, gamma = {}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }

    /// Factor multiplying the mass in the effective stiffness, `1 / (β dt²)`.
    pub fn mass_factor(&self) -> f64 {
        1.0 / (self.beta * self.dt * self.dt)
    }

    /// `u/(β dt²) + v/(β dt) + (1/(2β) - 1) a`
    pub fn predictor(&self, u: &[f64], v: &[f64], a: &[f64], out: &mut [f64]) {
        let c0 = self.mass_factor();
        let c1 = 1.0 / (self.beta * self.dt);
        let c2 = 1.0 / (2.0 * self.beta) - 1.0;
        for i in 0..out.len() {
            out[i] = c0 * u[i] + c1 * v[i] + c2 * a[i];
        }
    }

    /// Acceleration and velocity at `t_{n+1}` from the new displacement of one entry.
    pub fn corrector(&self, u_new: f64, u: f64, v: f64, a: f64) -> (f64, f64) {
        let a_new = (u_new - u) * self.mass_factor()
            - v / (self.beta * self.dt)
            - (1.0 / (2.0 * self.beta) - 1.0) * a;
        let v_new = v + self.dt * ((1.0 - self.gamma) * a + self.gamma * a_new);
        (a_new, v_new)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub a: DVector<f64>,
    pub t: f64,
}

impl KinematicState {
    pub fn zeros(n: usize, t: f64) -> Self {
        Self {
            u: DVector::zeros(n),
            v: DVector::zeros(n),
            a: DVector::zeros(n),
            t,
        }
    }

    pub fn new(u: DVector<f64>, v: DVector<f64>, a: DVector<f64>, t: f64) -> Result<Self> {
        if u.len() != v.len() || u.len() != a.len() {
            return Err(Error::DimensionMismatch(format!(
                "state fields have lengths {}, {}, {}",
                u.len(),
                v.len(),
                a.len()
            )));
        }
        Ok(Self { u, v, a, t })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Restriction to a list of indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |x: &DVector<f64>| DVector::from_iterator(indices.len(), indices.iter().map(|&i| x[i]));
        Self {
            u: pick(&self.u),
            v: pick(&self.v),
            a: pick(&self.a),
            t: self.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).chain(self.a.iter()).all(|x| x.is_finite())
    }
}

/// Solves `M a0 = f0 - K u0`.
pub fn initial_acceleration(
    mass: &SymTridiagonal,
    stiffness: &SymTridiagonal,
    f0: &DVector<f64>,
    u0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = mass.dim();
    if stiffness.dim() != n || f0.len() != n || u0.len() != n {
        return Err(Error::DimensionMismatch("initial acceleration inputs".into()));
    }
    let factor = mass
        .factor()
        .map_err(|_| Error::Singular("mass matrix is singular".into()))?;
    let mut rhs = vec![0.0; n];
    stiffness.mul_vec(u0.as_slice(), &mut rhs);
    for (r, f) in rhs.iter_mut().zip(f0.iter()) {
        *r = f - *r;
    }
    factor.solve_in_place(&mut rhs);
    Ok(DVector::from_vec(rhs))
}

/// A second-order system with a pre-factored effective stiffness
/// `M / (β dt²) + K_total`.
pub trait EffectiveSystem {
    fn dim(&self) -> usize;
    fn params(&self) -> &NewmarkParams;
    fn apply_mass(&self, x: &[f64], out: &mut [f64]);
    fn solve_effective(&self, rhs: &mut [f64]);
}

/// One Newmark step: returns the state at `t_n + dt` driven by `f_next`.
pub fn newmark_step<S: EffectiveSystem + ?Sized>(
    system: &S,
    f_next: &[f64],
    state: &KinematicState,
) -> Result<KinematicState> {
    let n = system.dim();
    if f_next.len() != n || state.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "system has {n} unknowns, force has {}, state has {}",
            f_next.len(),
            state.len()
        )));
    }
    let p = system.params();
    let mut pred = vec![0.0; n];
    p.predictor(state.u.as_slice(), state.v.as_slice(), state.a.as_slice(), &mut pred);
    let mut rhs = vec![0.0; n];
    system.apply_mass(&pred, &mut rhs);
    for (r, f) in rhs.iter_mut().zip(f_next) {
        *r += f;
    }
    system.solve_effective(&mut rhs);
    let mut next = KinematicState::zeros(n, state.t + p.dt);
    for i in 0..n {
        let (a, v) = p.corrector(rhs[i], state.u[i], state.v[i], state.a[i]);
        next.u[i] = rhs[i];
        next.a[i] = a;
        next.v[i] = v;
    }
    Ok(next)
}

/// Tridiagonal mass and stiffness, factored once.
#[derive(Clone, Debug)]
pub struct TridiagonalNewmark {
    mass: SymTridiagonal,
    factor: TridiagonalLdl,
    params: NewmarkParams,
}

impl TridiagonalNewmark {
    pub fn new(mass: SymTridiagonal, stiffness: &SymTridiagonal, params: NewmarkParams) -> Result<Self> {
        params.validate()?;
        let effective = mass.combine(params.mass_factor(), stiffness, 1.0)?;
        let factor = effective
            .factor()
            .map_err(|e| Error::Singular(format!("effective stiffness: {e}")))?;
        Ok(Self {
            mass,
            factor,
            params,
        })
    }
}

impl EffectiveSystem for TridiagonalNewmark {
    fn dim(&self) -> usize {
        self.mass.dim()
    }

    fn params(&self) -> &NewmarkParams {
        &self.params
    }

    fn apply_mass(&self, x: &[f64], out: &mut [f64]) {
        self.mass.mul_vec(x, out);
    }

    fn solve_effective(&self, rhs: &mut [f64]) {
        self.factor.solve_in_place(rhs);
    }
}

/// Dense reduced system with identity mass.
#[derive(Clone, Debug)]
pub struct IdentityMassNewmark {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    params: NewmarkParams,
}

impl IdentityMassNewmark {
    pub fn new(stiffness: &DMatrix<f64>, params: NewmarkParams) -> Result<Self> {
        params.validate()?;
        let n = stiffness.nrows();
        if stiffness.ncols() != n {
            return Err(Error::DimensionMismatch("reduced stiffness must be square".into()));
        }
        let effective = DMatrix::identity(n, n) * params.mass_factor() + stiffness;
        let scale = effective.amax();
        let lu = effective.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("reduced effective stiffness".into()));
        }
        let u = lu.u();
        let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if !(min_pivot > 1e-14 * scale) {
            return Err(Error::Singular(format!(
                "reduced effective stiffness, smallest pivot {min_pivot:e}"
            )));
        }
        Ok(Self { lu, n, params })
    }
}

impl EffectiveSystem for IdentityMassNewmark {
    fn dim(&self) -> usize {
        self.n
    }

    fn params(&self) -> &NewmarkParams {
        &self.params
    }

    fn apply_mass(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn solve_effective(&self, rhs: &mut [f64]) {
        let mut b = nalgebra::DVectorViewMut::from_slice(rhs, self.n);
        let solved = self.lu.solve_mut(&mut b);
        debug_assert!(solved);
    }
}

/// `½ vᵀ M v + ½ uᵀ K u`
pub fn mechanical_energy(mass: &SymTridiagonal, stiffness: &SymTridiagonal, state: &KinematicState) -> f64 {
    let n = state.len();
    let mut mv = vec![0.0; n];
    let mut ku = vec![0.0; n];
    mass.mul_vec(state.v.as_slice(), &mut mv);
    stiffness.mul_vec(state.u.as_slice(), &mut ku);
    0.5 * state.v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>()
        + 0.5 * state.u.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar(m: f64, k: f64) -> (SymTridiagonal, SymTridiagonal) {
        (
            SymTridiagonal::from_parts(vec![m], vec![]).unwrap(),
            SymTridiagonal::from_parts(vec![k], vec![]).unwrap(),
        )
    }

    #[test]
    fn initial_acceleration_cases() {
        let eye = SymTridiagonal::from_parts(vec![1.0, 1.0], vec![0.0]).unwrap();
        let zero = DVector::zeros(2);
        let a0 = initial_acceleration(&eye, &eye, &zero, &zero).unwrap();
        assert_eq!(a0, zero);

        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let a0 = initial_acceleration(&eye, &eye, &zero, &e1).unwrap();
        assert_eq!(a0.as_slice(), &[-1.0, 0.0]);

        let two = eye.scale(2.0);
        let a0 = initial_acceleration(&two, &eye, &zero, &e1).unwrap();
        assert_eq!(a0.as_slice(), &[-0.5, 0.0]);

        let singular = SymTridiagonal::zeros(2);
        assert!(initial_acceleration(&singular, &eye, &zero, &e1).is_err());
    }

    #[test]
    fn free_flight() {
        let (m, k) = scalar(1.0, 0.0);
        let p = NewmarkParams::average_acceleration(0.1).unwrap();
        let sys = TridiagonalNewmark::new(m, &k, p).unwrap();
        let s0 = KinematicState::new(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
            0.0,
        )
        .unwrap();
        let s1 = newmark_step(&sys, &[0.0], &s0).unwrap();
        assert!((s1.u[0] - 0.1).abs() < 1e-15);
        assert!((s1.v[0] - 1.0).abs() < 1e-15);
        assert!(s1.a[0].abs() < 1e-12);
    }

    fn oscillator_error(steps: usize) -> f64 {
        let omega = 2.0 * PI;
        let (m, k) = scalar(1.0, omega * omega);
        let dt = 1.0 / steps as f64;
        let p = NewmarkParams::average_acceleration(dt).unwrap();
        let sys = TridiagonalNewmark::new(m.clone(), &k, p).unwrap();
        let u0 = DVector::from_vec(vec![1.0]);
        let a0 = initial_acceleration(&m, &k, &DVector::zeros(1), &u0).unwrap();
        let mut s = KinematicState::new(u0, DVector::zeros(1), a0, 0.0).unwrap();
        let mut worst = 0.0_f64;
        for n in 1..=steps {
            s = newmark_step(&sys, &[0.0], &s).unwrap();
            let exact = (omega * n as f64 * dt).cos();
            worst = worst.max((s.u[0] - exact).abs());
        }
        worst
    }

    // At t = T the displacement error is quadratic in the phase error, so the
    // order is measured on the worst error over the period.
    #[test]
    fn second_order_convergence_on_oscillator() {
        let errors: Vec<f64> = [1000, 2000, 4000].iter().map(|&n| oscillator_error(n)).collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() <= 0.1, "observed order {order}");
        }
    }

    #[test]
    fn identity_mass_matches_tridiagonal() {
        let k = SymTridiagonal::from_parts(vec![2.0, 3.0], vec![-1.0]).unwrap();
        let m = SymTridiagonal::from_parts(vec![1.0, 1.0], vec![0.0]).unwrap();
        let p = NewmarkParams::average_acceleration(0.05).unwrap();
        let tri = TridiagonalNewmark::new(m, &k, p).unwrap();
        let dense = IdentityMassNewmark::new(&k.to_dense(), p).unwrap();
        let s0 = KinematicState::new(
            DVector::from_vec(vec![1.0, -0.5]),
            DVector::from_vec(vec![0.2, 0.0]),
            DVector::from_vec(vec![-2.5, 2.5]),
            0.0,
        )
        .unwrap();
        let f = [0.1, 0.3];
        let a = newmark_step(&tri, &f, &s0).unwrap();
        let b = newmark_step(&dense, &f, &s0).unwrap();
        assert!((a.u - b.u).amax() < 1e-13);
        assert!((a.v - b.v).amax() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (m, k) = scalar(1.0, 1.0);
        let p = NewmarkParams::average_acceleration(0.1).unwrap();
        let sys = TridiagonalNewmark::new(m, &k, p).unwrap();
        let s0 = KinematicState::zeros(1, 0.0);
        assert!(newmark_step(&sys, &[0.0, 1.0], &s0).is_err());
    }
}
