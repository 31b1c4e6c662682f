//! Damped Hamiltonian time integration: pairwise SALR forces under a
//! Minkowski metric, an embedded Bogacki-Shampine RK(2,3) pair with PI
//! step-size control, and windowed mean-speed convergence detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::interpolate;
use crate::particles::ParticleSystem;
use crate::potential::{
    solve_interaction_params, v_int, v_int_prime, ConfiningPotential, InteractionParams,
    InteractionSpec,
};
use crate::scalar::{real, Real};

/// Integrator and damping configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Damping slope: α(t) = alpha_rate·t.
    pub alpha_rate: T,
    pub coupling_k: T,
    pub rel_tol: T,
    pub abs_tol: T,
    pub t_end: T,
    /// Trailing time span over which the mean speed is averaged.
    pub conv_window: T,
    /// Mean-speed level that stops the simulation.
    pub conv_speed: T,
    /// Minkowski order (∞ supported via `T::infinity()`).
    pub metric_p: T,
    /// Characteristic solver-space distance (attractive extent there).
    pub ell: T,
    /// Skip pair forces beyond this separation; `None` computes all pairs.
    pub force_cutoff: Option<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            alpha_rate: real(5e-4),
            coupling_k: T::one(),
            rel_tol: real(1e-3),
            abs_tol: real(1e-6),
            t_end: real(1000.0),
            conv_window: real(5.0),
            conv_speed: real(2e-3),
            metric_p: real(2.0),
            ell: real(13.0),
            force_cutoff: None,
        }
    }
}

/// Final state of one integration plus convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryState<T> {
    pub t: T,
    pub system: ParticleSystem<T>,
    /// Trailing (t, mean speed) samples spanning at most `conv_window`.
    pub mean_speed_window: Vec<(T, T)>,
    pub converged: bool,
    pub step_count: usize,
    pub rejected_steps: usize,
}

/// Minkowski distance of order `p ≥ 1`; `p = ∞` gives the max norm.
pub fn minkowski_distance<T: Real>(x: &[T], y: &[T], p: T) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch("vector length mismatch".into()));
    }
    if p < T::one() {
        return Err(Error::InvalidParameter("metric order p must be >= 1".into()));
    }
    if p.is_infinite() {
        return Ok(x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max));
    }
    if p == real(2.0) {
        let s = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (a - b) * (a - b))
            .fold(T::zero(), |acc, v| acc + v);
        return Ok(s.sqrt());
    }
    let s = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - b).abs().powf(p))
        .fold(T::zero(), |acc, v| acc + v);
    Ok(s.powf(T::one() / p))
}

/// ∂d/∂x for the Minkowski metric, componentwise. For p = ∞ the
/// subgradient acts along the single max-difference axis (lowest index on
/// ties).
fn minkowski_grad<T: Real>(diff: &[T], d: T, p: T, out: &mut [T]) {
    if p.is_infinite() {
        for o in out.iter_mut() {
            *o = T::zero();
        }
        let mut best = 0usize;
        for (i, &v) in diff.iter().enumerate() {
            if v.abs() > diff[best].abs() {
                best = i;
            }
        }
        out[best] = diff[best].signum();
        return;
    }
    if p == real(2.0) {
        for (o, &v) in out.iter_mut().zip(diff) {
            *o = v / d;
        }
        return;
    }
    let pm1 = p - T::one();
    let dpm1 = d.powf(pm1);
    for (o, &v) in out.iter_mut().zip(diff) {
        *o = v.signum() * v.abs().powf(pm1) / dpm1;
    }
}

/// Force on every particle from the pairwise interaction:
/// `f_i = -Σ_j k q_i q_j V_int'(d_ij) ∇_i d_ij`, direct O(N²) summation.
/// Coincident particles contribute nothing.
pub fn pairwise_force<T: Real>(
    system: &ParticleSystem<T>,
    params: &InteractionParams<T>,
    coupling_k: T,
    cutoff: Option<T>,
) -> Vec<T> {
    let n = system.len();
    let dim = system.dim;
    let p = system.metric_p;
    let mut forces = vec![T::zero(); n * dim];
    let mut diff = vec![T::zero(); dim];
    let mut grad = vec![T::zero(); dim];
    for i in 0..n {
        for j in i + 1..n {
            let xi = system.position(i);
            let xj = system.position(j);
            for (k, (a, b)) in xi.iter().zip(xj).enumerate() {
                diff[k] = *a - *b;
            }
            let d = minkowski_distance(xi, xj, p).expect("validated metric order");
            if d == T::zero() {
                continue;
            }
            if let Some(c) = cutoff {
                if d > c {
                    continue;
                }
            }
            let mag = coupling_k * system.charges[i] * system.charges[j] * v_int_prime(d, params);
            minkowski_grad(&diff, d, p, &mut grad);
            for k in 0..dim {
                // Newton's third law: ∇_j d = -∇_i d under a symmetric metric.
                forces[i * dim + k] -= mag * grad[k];
                forces[j * dim + k] += mag * grad[k];
            }
        }
    }
    forces
}

/// Total interaction energy `Σ_{i<j} k q_i q_j V_int(d_ij)`.
pub fn interaction_energy<T: Real>(
    system: &ParticleSystem<T>,
    params: &InteractionParams<T>,
    coupling_k: T,
) -> T {
    let n = system.len();
    let mut acc = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let d = minkowski_distance(system.position(i), system.position(j), system.metric_p)
                .expect("validated metric order");
            acc += coupling_k * system.charges[i] * system.charges[j] * v_int(d, params);
        }
    }
    acc
}

/// Source of the confining force in solver space.
///
/// Grid-backed potentials sample their precomputed gradient fields;
/// analytic wells (tests, energy oracles) evaluate exactly.
pub trait Confinement<T: Real> {
    /// Potential value at a solver-space position.
    fn value(&self, pos: &[T]) -> T;
    /// Gradient at a solver-space position, written to `out`.
    fn grad(&self, pos: &[T], out: &mut [T]);
}

/// A [`ConfiningPotential`] sampled by multilinear interpolation, with the
/// solver-space chain rule applied.
pub struct GridConfinement<'a, T> {
    pub potential: &'a ConfiningPotential<T>,
    pub solver_scale: T,
}

impl<'a, T: Real> Confinement<T> for GridConfinement<'a, T> {
    fn value(&self, pos: &[T]) -> T {
        let data_pos: Vec<T> = pos.iter().map(|&x| x / self.solver_scale).collect();
        interpolate(&self.potential.v, &data_pos)
    }

    fn grad(&self, pos: &[T], out: &mut [T]) {
        let data_pos: Vec<T> = pos.iter().map(|&x| x / self.solver_scale).collect();
        for (axis, g) in self.potential.grad.iter().enumerate() {
            out[axis] = interpolate(g, &data_pos) / self.solver_scale;
        }
    }
}

/// Flat potential: zero force everywhere.
pub struct FlatConfinement;

impl<T: Real> Confinement<T> for FlatConfinement {
    fn value(&self, _pos: &[T]) -> T {
        T::zero()
    }
    fn grad(&self, _pos: &[T], out: &mut [T]) {
        for o in out {
            *o = T::zero();
        }
    }
}

/// Analytic isotropic quadratic well `V = k/2·|r − c|²` (tests and energy
/// oracles: exact, no interpolation error).
pub struct QuadraticWell<T> {
    pub center: Vec<T>,
    pub stiffness: T,
}

impl<T: Real> Confinement<T> for QuadraticWell<T> {
    fn value(&self, pos: &[T]) -> T {
        let two = real::<T>(2.0);
        self.stiffness
            * pos
                .iter()
                .zip(&self.center)
                .map(|(&x, &c)| (x - c) * (x - c))
                .fold(T::zero(), |a, b| a + b)
            / two
    }
    fn grad(&self, pos: &[T], out: &mut [T]) {
        for ((o, &x), &c) in out.iter_mut().zip(pos).zip(&self.center) {
            *o = self.stiffness * (x - c);
        }
    }
}

/// Time derivatives of (positions, momenta) per the damped equations of
/// motion: dr/dt = p/m, dp/dt = -∇V - (α(t)/m)p + pair forces.
pub fn rhs<T: Real>(
    t: T,
    system: &ParticleSystem<T>,
    confinement: &dyn Confinement<T>,
    params: &InteractionParams<T>,
    cfg: &SolverConfig<T>,
    dy: &mut [T],
) {
    let n = system.len();
    let dim = system.dim;
    let alpha = cfg.alpha_rate * t;
    let forces = pairwise_force(system, params, cfg.coupling_k, cfg.force_cutoff);
    let mut grad = vec![T::zero(); dim];
    for i in 0..n {
        let m = system.masses[i];
        confinement.grad(system.position(i), &mut grad);
        for k in 0..dim {
            dy[i * dim + k] = system.momenta[i * dim + k] / m;
            dy[(n + i) * dim + k] =
                -grad[k] - alpha / m * system.momenta[i * dim + k] + forces[i * dim + k];
        }
    }
}

/// Total energy (kinetic + confining + interaction) of the current state.
pub fn total_energy<T: Real>(
    system: &ParticleSystem<T>,
    confinement: &dyn Confinement<T>,
    params: &InteractionParams<T>,
    coupling_k: T,
) -> T {
    let two = real::<T>(2.0);
    let mut acc = T::zero();
    for i in 0..system.len() {
        let p2 = system
            .momentum(i)
            .iter()
            .map(|&p| p * p)
            .fold(T::zero(), |a, b| a + b);
        acc += p2 / (two * system.masses[i]);
        acc += confinement.value(system.position(i));
    }
    acc + interaction_energy(system, params, coupling_k)
}

/// Map a data-space interaction onto the solver frame: the fit runs at the
/// rescaled distances (d0, r0·ℓ/ra, ℓ) and positions scale by ℓ/ra.
pub fn to_solver_space<T: Real>(
    spec: &InteractionSpec<T>,
    ell: T,
) -> Result<(InteractionParams<T>, T)> {
    let solver_scale = ell / spec.ra;
    let solver_spec = InteractionSpec::new(spec.d0, spec.r0 * solver_scale, ell)?;
    let params = solve_interaction_params(&solver_spec)?;
    Ok((params, solver_scale))
}

// Bogacki-Shampine tableau (FSAL): third-order solution with embedded
// second-order error estimate.
const BS_C2: f64 = 0.5;
const BS_C3: f64 = 0.75;
const BS_B1: f64 = 2.0 / 9.0;
const BS_B2: f64 = 1.0 / 3.0;
const BS_B3: f64 = 4.0 / 9.0;
const BS_E1: f64 = 2.0 / 9.0 - 7.0 / 24.0;
const BS_E2: f64 = 1.0 / 3.0 - 1.0 / 4.0;
const BS_E3: f64 = 4.0 / 9.0 - 1.0 / 3.0;
const BS_E4: f64 = -1.0 / 8.0;

const MIN_STEP: f64 = 1e-12;

/// Integrate the damped system until the windowed mean speed drops below
/// `conv_speed` (converged) or `t_end` is reached (returned unconverged).
pub fn integrate<T: Real>(
    system: ParticleSystem<T>,
    confinement: &dyn Confinement<T>,
    params: &InteractionParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<TrajectoryState<T>> {
    integrate_with_observer(system, confinement, params, cfg, |_, _| {})
}

/// [`integrate`] with a per-accepted-step callback (trajectory dumps).
pub fn integrate_with_observer<T: Real>(
    mut system: ParticleSystem<T>,
    confinement: &dyn Confinement<T>,
    params: &InteractionParams<T>,
    cfg: &SolverConfig<T>,
    mut observer: impl FnMut(T, &ParticleSystem<T>),
) -> Result<TrajectoryState<T>> {
    system.metric_p = cfg.metric_p;
    let n = system.len();
    let dim = system.dim;
    let len = 2 * n * dim;

    let pack = |sys: &ParticleSystem<T>, y: &mut Vec<T>| {
        y.clear();
        y.extend_from_slice(&sys.positions);
        y.extend_from_slice(&sys.momenta);
    };
    let unpack = |y: &[T], sys: &mut ParticleSystem<T>| {
        sys.positions.copy_from_slice(&y[..n * dim]);
        sys.momenta.copy_from_slice(&y[n * dim..]);
    };

    let mut y = Vec::with_capacity(len);
    pack(&system, &mut y);
    let mut scratch = system.clone();

    let eval = |t: T, y: &[T], sys: &mut ParticleSystem<T>, dy: &mut [T]| {
        unpack(y, sys);
        rhs(t, sys, confinement, params, cfg, dy);
    };

    let mut k1 = vec![T::zero(); len];
    let mut k2 = vec![T::zero(); len];
    let mut k3 = vec![T::zero(); len];
    let mut k4 = vec![T::zero(); len];
    let mut y_new = vec![T::zero(); len];
    let mut y_stage = vec![T::zero(); len];

    let mut t = T::zero();
    eval(t, &y, &mut scratch, &mut k1);

    // Initial step from the derivative scale.
    let y_norm = rms(&y);
    let f_norm = rms(&k1);
    let mut h = real::<T>(0.01) * (y_norm + T::one()) / (f_norm + T::one());
    h = h.min(real(1.0)).max(real(1e-4));

    let mut window: Vec<(T, T)> = vec![(t, system.mean_speed())];
    let mut steps = 0usize;
    let mut rejects = 0usize;
    let mut converged = false;
    let mut err_prev = real::<T>(1.0);
    let safety = real::<T>(0.9);
    // PI controller exponents for an order-3 pair.
    let k_i = real::<T>(0.7 / 3.0);
    let k_p = real::<T>(0.4 / 3.0);

    while t < cfg.t_end {
        if h.to_f64().unwrap() < MIN_STEP {
            return Err(Error::StepUnderflow {
                t: t.to_f64().unwrap(),
                h: h.to_f64().unwrap(),
                steps,
            });
        }
        if t + h > cfg.t_end {
            h = cfg.t_end - t;
        }
        let c2 = real::<T>(BS_C2);
        let c3 = real::<T>(BS_C3);

        for i in 0..len {
            y_stage[i] = y[i] + h * c2 * k1[i];
        }
        eval(t + c2 * h, &y_stage, &mut scratch, &mut k2);
        for i in 0..len {
            y_stage[i] = y[i] + h * c3 * k2[i];
        }
        eval(t + c3 * h, &y_stage, &mut scratch, &mut k3);
        let (b1, b2, b3) = (real::<T>(BS_B1), real::<T>(BS_B2), real::<T>(BS_B3));
        for i in 0..len {
            y_new[i] = y[i] + h * (b1 * k1[i] + b2 * k2[i] + b3 * k3[i]);
        }
        eval(t + h, &y_new, &mut scratch, &mut k4);

        // Scaled RMS error over components.
        let (e1, e2, e3, e4) = (
            real::<T>(BS_E1),
            real::<T>(BS_E2),
            real::<T>(BS_E3),
            real::<T>(BS_E4),
        );
        let mut err_acc = T::zero();
        for i in 0..len {
            let e = h * (e1 * k1[i] + e2 * k2[i] + e3 * k3[i] + e4 * k4[i]);
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            err_acc += r * r;
        }
        let err = (err_acc / real::<T>(len as f64)).sqrt().max(real(1e-12));

        if err <= T::one() {
            t = t + h;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k4); // FSAL
            steps += 1;
            unpack(&y, &mut system);
            observer(t, &system);

            let speed = system.mean_speed();
            window.push((t, speed));
            let span_start = t - cfg.conv_window;
            while window.len() > 2 && window[1].0 <= span_start {
                window.remove(0);
            }
            if window[0].0 <= span_start && windowed_mean(&window) < cfg.conv_speed {
                converged = true;
                break;
            }
            let factor = safety * err.powf(-k_i) * err_prev.powf(k_p);
            h = h * factor.min(real(5.0)).max(real(0.2));
            err_prev = err;
        } else {
            rejects += 1;
            let factor = safety * err.powf(-k_i);
            h = h * factor.min(real(1.0)).max(real(0.1));
            // The FSAL slot already holds f(t, y); keep it.
        }
    }

    unpack(&y, &mut system);
    Ok(TrajectoryState {
        t,
        system,
        mean_speed_window: window,
        converged,
        step_count: steps,
        rejected_steps: rejects,
    })
}

fn rms<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    (v.iter().map(|&x| x * x).fold(T::zero(), |a, b| a + b) / real::<T>(v.len() as f64)).sqrt()
}

/// Time-weighted (trapezoidal) mean of the speed window.
pub fn windowed_mean<T: Real>(window: &[(T, T)]) -> T {
    if window.len() < 2 {
        return window.first().map_or(T::zero(), |&(_, s)| s);
    }
    let two = real::<T>(2.0);
    let mut area = T::zero();
    for pair in window.windows(2) {
        let (t0, s0) = pair[0];
        let (t1, s1) = pair[1];
        area += (s0 + s1) / two * (t1 - t0);
    }
    let span = window.last().unwrap().0 - window[0].0;
    if span > T::zero() {
        area / span
    } else {
        window.last().unwrap().1
    }
}
