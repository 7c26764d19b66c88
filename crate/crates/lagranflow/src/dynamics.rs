//! The time-1 solution map of the kicked system and its linearisation.
//!
//! Between kicks the pair `Υ = (u, y)` obeys the Galerkin-truncated system
//!
//! ```text
//! du_j/dt = −ν|j|² u_j − B_N(u)_j + η_j(t),     dy/dt = u(t, y),
//! ```
//!
//! integrated over `[0,1]` by a fourth-order Runge–Kutta scheme in
//! integrating-factor variables: the Stokes part `e^{−ν|j|²t}` is applied
//! exactly and the stages see only the bounded nonlinear and forcing terms.
//! Field and particle advance jointly in one pass, so no interpolation is
//! ever needed between solvers. Iterating the map over i.i.d. kicks yields
//! the discrete-time Markov chain `Υ_k = S(Υ_{k−1}, η_k)`.
//!
//! The linearised flow integrates the variational system
//! `∂_t v + Lv + Q(u)v = ζ`, `ż = v(t,y) + (D_x u)(t,y) z`
//! with the same scheme and substep count, which makes it the exact
//! derivative of the discrete map to integrator order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{derive_rng, sample_kick, KickRealization, NoiseSpec};
use crate::spectral::{advect, mode_table, wrap_point, FourierField, ModeTable};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("integration diverged on interval {interval} at substep {substep}")]
    Diverged { interval: usize, substep: usize },
    #[error("substep count {0} below the minimum of 16")]
    TooFewSubsteps(usize),
}

/// State of the Markov chain: velocity field and particle position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub u: FourierField,
    pub y: [f64; 2],
}

impl SystemState {
    /// The rest state `(0, p)`.
    pub fn rest(cutoff: i32, p: [f64; 2]) -> SystemState {
        SystemState {
            u: FourierField::zero(cutoff),
            y: wrap_point(p),
        }
    }

    pub fn new(u: FourierField, y: [f64; 2]) -> SystemState {
        SystemState {
            u,
            y: wrap_point(y),
        }
    }

    /// Product distance `‖u − u'‖_{L²} + d_{T²}(y, y')`.
    pub fn distance(&self, other: &SystemState) -> f64 {
        let mut du = self.u.clone();
        du.axpy(-1.0, &other.u);
        du.energy().sqrt() + crate::spectral::torus_distance(self.y, other.y)
    }
}

/// Tangent vector along a trajectory: field perturbation and particle shift.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub v: FourierField,
    pub z: [f64; 2],
}

impl TangentState {
    pub fn zero(cutoff: i32) -> TangentState {
        TangentState {
            v: FourierField::zero(cutoff),
            z: [0.0, 0.0],
        }
    }

    pub fn norm(&self) -> f64 {
        (self.v.energy() + self.z[0] * self.z[0] + self.z[1] * self.z[1]).sqrt()
    }
}

/// Deterministic or sampled forcing on one unit interval, presented to the
/// integrator as `e_j` coefficients at arbitrary stage times.
pub trait Forcing {
    /// Adds the forcing coefficients at time `t` into `out`, laid out in the
    /// canonical order of `table`.
    fn add_field_coeffs(&self, t: f64, table: &ModeTable, out: &mut [f64]);

    fn is_zero(&self) -> bool {
        false
    }
}

/// The zero forcing.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn add_field_coeffs(&self, _t: f64, _table: &ModeTable, _out: &mut [f64]) {}

    fn is_zero(&self) -> bool {
        true
    }
}

impl Forcing for KickRealization {
    fn add_field_coeffs(&self, t: f64, table: &ModeTable, out: &mut [f64]) {
        let own = mode_table(self.spatial_cutoff);
        let direct = own.cutoff == table.cutoff;
        for (li, row) in self.xi.iter().enumerate() {
            let psi = crate::noise::time_basis(li + 1, t) * self.time_scale()[li];
            for (m, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let value = psi * x * self.mode_scale()[m];
                if direct {
                    out[m] += value;
                } else if let Some(idx) = table.position(own.modes[m].j) {
                    out[idx] += value;
                }
            }
        }
    }
}

/// Linear combination of forcings, used for perturbation checks.
pub struct ForcingSum<'a> {
    pub terms: Vec<(f64, &'a dyn Forcing)>,
}

impl Forcing for ForcingSum<'_> {
    fn add_field_coeffs(&self, t: f64, table: &ModeTable, out: &mut [f64]) {
        let mut scratch = vec![0.0; out.len()];
        for (w, f) in &self.terms {
            scratch.fill(0.0);
            f.add_field_coeffs(t, table, &mut scratch);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += w * s;
            }
        }
    }
}

/// A chain segment: states at integer times and the kicks between them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub kicks: Vec<KickRealization>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.kicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kicks.is_empty()
    }
}

/// Solver parameters: viscosity and substeps per unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub nu: f64,
    pub substeps: usize,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            nu: 0.1,
            substeps: 64,
        }
    }
}

struct StageExponentials {
    /// `e^{∓ν|j|²τ}` for τ = 0, h/2, h (decay and growth directions).
    minus: [Vec<f64>; 3],
    plus: [Vec<f64>; 3],
    /// `e^{−ν|j|²h}` applied when rebasing at the end of each substep.
    step_decay: Vec<f64>,
}

impl StageExponentials {
    fn new(nu: f64, h: f64, table: &ModeTable) -> StageExponentials {
        let build = |tau: f64, sign: f64| -> Vec<f64> {
            table
                .norm_sq
                .iter()
                .map(|&k2| (sign * nu * k2 * tau).exp())
                .collect()
        };
        StageExponentials {
            minus: [build(0.0, -1.0), build(h / 2.0, -1.0), build(h, -1.0)],
            plus: [build(0.0, 1.0), build(h / 2.0, 1.0), build(h, 1.0)],
            step_decay: build(h, -1.0),
        }
    }
}

fn finite(coeffs: &[f64], y: [f64; 2]) -> bool {
    y[0].is_finite() && y[1].is_finite() && coeffs.iter().all(|c| c.is_finite())
}

impl Dynamics {
    pub fn with_substeps(self, substeps: usize) -> Dynamics {
        Dynamics { substeps, ..self }
    }

    fn check_substeps(&self) -> Result<(), DynamicsError> {
        if self.substeps < 16 {
            return Err(DynamicsError::TooFewSubsteps(self.substeps));
        }
        Ok(())
    }

    /// Advances the state over `[t0, t1] ⊆ [0, 1]` with the substep density
    /// implied by `self.substeps` per unit time. Optionally records the
    /// state after every substep.
    pub fn integrate(
        &self,
        state: &SystemState,
        forcing: &dyn Forcing,
        t0: f64,
        t1: f64,
        mut record: Option<&mut Vec<SystemState>>,
    ) -> Result<SystemState, DynamicsError> {
        self.check_substeps()?;
        let cutoff = state.u.cutoff();
        let table = mode_table(cutoff);
        let nsub = ((t1 - t0) * self.substeps as f64).round().max(1.0) as usize;
        let h = (t1 - t0) / nsub as f64;
        let exps = StageExponentials::new(self.nu, h, table);
        let m = table.len();

        let mut u = state.u.coeffs().to_vec();
        let mut y = state.y;

        let mut eta = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        let mut phys = FourierField::zero(cutoff);
        let mut stage_u = vec![0.0; m];
        let mut ks: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; m]);
        let mut kys = [[0.0f64; 2]; 4];

        for step in 0..nsub {
            let t = t0 + step as f64 * h;
            if !forcing.is_zero() {
                for (slot, tau) in [(0usize, 0.0), (1, h / 2.0), (2, h)] {
                    eta[slot].fill(0.0);
                    forcing.add_field_coeffs(t + tau, table, &mut eta[slot]);
                }
            }

            for stage in 0..4 {
                let (slot, weight): (usize, f64) = match stage {
                    0 => (0, 0.0),
                    1 => (1, h / 2.0),
                    2 => (1, h / 2.0),
                    3 => (2, h),
                    _ => unreachable!(),
                };
                // stage input in transformed variables
                for i in 0..m {
                    let base = if stage == 0 {
                        u[i]
                    } else {
                        u[i] + weight * ks[stage - 1][i]
                    };
                    stage_u[i] = base * exps.minus[slot][i];
                }
                let ys = if stage == 0 {
                    y
                } else {
                    [
                        y[0] + weight * kys[stage - 1][0],
                        y[1] + weight * kys[stage - 1][1],
                    ]
                };
                phys.coeffs_mut().copy_from_slice(&stage_u);
                let b = crate::spectral::nonlinear_term(&phys);
                let (vel, _) = phys.eval(ys);
                for i in 0..m {
                    let rhs = -b.coeffs()[i] + if forcing.is_zero() { 0.0 } else { eta[slot][i] };
                    ks[stage][i] = rhs * exps.plus[slot][i];
                }
                kys[stage] = vel;
            }

            for i in 0..m {
                let inc = h / 6.0 * (ks[0][i] + 2.0 * ks[1][i] + 2.0 * ks[2][i] + ks[3][i]);
                u[i] = (u[i] + inc) * exps.step_decay[i];
            }
            for a in 0..2 {
                y[a] += h / 6.0 * (kys[0][a] + 2.0 * kys[1][a] + 2.0 * kys[2][a] + kys[3][a]);
            }

            if !finite(&u, y) {
                return Err(DynamicsError::Diverged {
                    interval: 0,
                    substep: step,
                });
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(SystemState {
                    u: FourierField::from_coeffs(cutoff, u.clone()),
                    y: wrap_point(y),
                });
            }
        }

        Ok(SystemState {
            u: FourierField::from_coeffs(cutoff, u),
            y: wrap_point(y),
        })
    }

    /// The time-1 solution map `S(Υ, η)`.
    pub fn step_map(
        &self,
        state: &SystemState,
        forcing: &dyn Forcing,
    ) -> Result<SystemState, DynamicsError> {
        self.integrate(state, forcing, 0.0, 1.0, None)
    }

    /// `S` with the per-substep dense record of the interval.
    pub fn step_map_recorded(
        &self,
        state: &SystemState,
        forcing: &dyn Forcing,
    ) -> Result<(SystemState, Vec<SystemState>), DynamicsError> {
        let mut record = Vec::with_capacity(self.substeps);
        let end = self.integrate(state, forcing, 0.0, 1.0, Some(&mut record))?;
        Ok((end, record))
    }

    /// Runs the Markov chain `Υ_k = S(Υ_{k−1}, η_k)` for `k = 1..=kicks`
    /// with i.i.d. kicks drawn from `spec`; deterministic given `seed`.
    pub fn run_chain(
        &self,
        state: &SystemState,
        spec: &NoiseSpec,
        seed: u64,
        kicks: usize,
    ) -> Result<Trajectory, DynamicsError> {
        let mut rng = derive_rng(seed, "chain", 0);
        self.run_chain_with(state, spec, &mut rng, kicks)
    }

    /// As [`run_chain`](Self::run_chain) but drawing kicks from a caller
    /// stream; used for ensemble workers with per-trajectory streams.
    pub fn run_chain_with(
        &self,
        state: &SystemState,
        spec: &NoiseSpec,
        rng: &mut impl rand::Rng,
        kicks: usize,
    ) -> Result<Trajectory, DynamicsError> {
        let mut states = Vec::with_capacity(kicks + 1);
        let mut drawn = Vec::with_capacity(kicks);
        states.push(state.clone());
        let mut current = state.clone();
        for k in 0..kicks {
            let kick = sample_kick(spec, rng);
            current = self.step_map(&current, &kick).map_err(|e| match e {
                DynamicsError::Diverged { substep, .. } => DynamicsError::Diverged {
                    interval: k,
                    substep,
                },
                other => other,
            })?;
            states.push(current.clone());
            drawn.push(kick);
        }
        Ok(Trajectory {
            states,
            kicks: drawn,
        })
    }

    /// Integrates base and tangent jointly over `[t0, t1]`: the tangent
    /// stages reuse the base stage values, so the result is the exact
    /// directional derivative of the discrete map.
    pub fn linearized_flow(
        &self,
        state: &SystemState,
        forcing: &dyn Forcing,
        tangent: &TangentState,
        control: &dyn Forcing,
        t0: f64,
        t1: f64,
    ) -> Result<(SystemState, TangentState), DynamicsError> {
        self.check_substeps()?;
        let cutoff = state.u.cutoff();
        let table = mode_table(cutoff);
        let nsub = ((t1 - t0) * self.substeps as f64).round().max(1.0) as usize;
        let h = (t1 - t0) / nsub as f64;
        let exps = StageExponentials::new(self.nu, h, table);
        let m = table.len();

        let mut u = state.u.coeffs().to_vec();
        let mut y = state.y;
        let mut v = tangent.v.coeffs().to_vec();
        let mut z = tangent.z;

        let mut eta = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        let mut zeta = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        let mut phys_u = FourierField::zero(cutoff);
        let mut phys_v = FourierField::zero(cutoff);
        let mut ku: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; m]);
        let mut kv: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; m]);
        let mut kys = [[0.0f64; 2]; 4];
        let mut kzs = [[0.0f64; 2]; 4];

        for step in 0..nsub {
            let t = t0 + step as f64 * h;
            for (slot, tau) in [(0usize, 0.0), (1, h / 2.0), (2, h)] {
                eta[slot].fill(0.0);
                if !forcing.is_zero() {
                    forcing.add_field_coeffs(t + tau, table, &mut eta[slot]);
                }
                zeta[slot].fill(0.0);
                if !control.is_zero() {
                    control.add_field_coeffs(t + tau, table, &mut zeta[slot]);
                }
            }

            for stage in 0..4 {
                let (slot, weight): (usize, f64) = match stage {
                    0 => (0, 0.0),
                    1 => (1, h / 2.0),
                    2 => (1, h / 2.0),
                    3 => (2, h),
                    _ => unreachable!(),
                };
                for i in 0..m {
                    let (bu, bv) = if stage == 0 {
                        (u[i], v[i])
                    } else {
                        (
                            u[i] + weight * ku[stage - 1][i],
                            v[i] + weight * kv[stage - 1][i],
                        )
                    };
                    phys_u.coeffs_mut()[i] = bu * exps.minus[slot][i];
                    phys_v.coeffs_mut()[i] = bv * exps.minus[slot][i];
                }
                let (ys, zs) = if stage == 0 {
                    (y, z)
                } else {
                    (
                        [
                            y[0] + weight * kys[stage - 1][0],
                            y[1] + weight * kys[stage - 1][1],
                        ],
                        [
                            z[0] + weight * kzs[stage - 1][0],
                            z[1] + weight * kzs[stage - 1][1],
                        ],
                    )
                };
                let b = crate::spectral::nonlinear_term(&phys_u);
                // Q(u)v = Π(⟨u,∇⟩v + ⟨v,∇⟩u), exact bilinear form
                let quv = {
                    let mut q = advect(&phys_u, &phys_v);
                    q.axpy(1.0, &advect(&phys_v, &phys_u));
                    q
                };
                let (vel_u, grad_u) = phys_u.eval(ys);
                let (vel_v, _) = phys_v.eval(ys);
                for i in 0..m {
                    ku[stage][i] = (-b.coeffs()[i] + eta[slot][i]) * exps.plus[slot][i];
                    kv[stage][i] = (-quv.coeffs()[i] + zeta[slot][i]) * exps.plus[slot][i];
                }
                kys[stage] = vel_u;
                kzs[stage] = [
                    vel_v[0] + grad_u[0][0] * zs[0] + grad_u[0][1] * zs[1],
                    vel_v[1] + grad_u[1][0] * zs[0] + grad_u[1][1] * zs[1],
                ];
            }

            for i in 0..m {
                let iu = h / 6.0 * (ku[0][i] + 2.0 * ku[1][i] + 2.0 * ku[2][i] + ku[3][i]);
                let iv = h / 6.0 * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]);
                u[i] = (u[i] + iu) * exps.step_decay[i];
                v[i] = (v[i] + iv) * exps.step_decay[i];
            }
            for a in 0..2 {
                y[a] += h / 6.0 * (kys[0][a] + 2.0 * kys[1][a] + 2.0 * kys[2][a] + kys[3][a]);
                z[a] += h / 6.0 * (kzs[0][a] + 2.0 * kzs[1][a] + 2.0 * kzs[2][a] + kzs[3][a]);
            }

            if !finite(&u, y) || !finite(&v, z) {
                return Err(DynamicsError::Diverged {
                    interval: 0,
                    substep: step,
                });
            }
        }

        Ok((
            SystemState {
                u: FourierField::from_coeffs(cutoff, u),
                y: wrap_point(y),
            },
            TangentState {
                v: FourierField::from_coeffs(cutoff, v),
                z,
            },
        ))
    }

    /// Derivative of `S(Υ, ·)` in the forcing direction `ζ`, from zero
    /// initial tangent data.
    pub fn linearized_map(
        &self,
        state: &SystemState,
        forcing: &dyn Forcing,
        zeta: &dyn Forcing,
    ) -> Result<TangentState, DynamicsError> {
        let (_, tangent) = self.linearized_flow(
            state,
            forcing,
            &TangentState::zero(state.u.cutoff()),
            zeta,
            0.0,
            1.0,
        )?;
        Ok(tangent)
    }

    /// Dense Jacobian of `S` in the forcing directions `basis`: one column
    /// per basis control, rows = field coefficients followed by the two
    /// particle components (`D_η S^y` is the bottom 2×n block).
    pub fn jacobian_matrix(
        &self,
        state: &SystemState,
        forcing: &dyn Forcing,
        basis: &[&dyn Forcing],
    ) -> Result<DMatrix<f64>, DynamicsError> {
        let m = mode_table(state.u.cutoff()).len();
        let mut jac = DMatrix::zeros(m + 2, basis.len());
        for (c, zeta) in basis.iter().enumerate() {
            let tangent = self.linearized_map(state, forcing, *zeta)?;
            for i in 0..m {
                jac[(i, c)] = tangent.v.coeffs()[i];
            }
            jac[(m, c)] = tangent.z[0];
            jac[(m + 1, c)] = tangent.z[1];
        }
        Ok(jac)
    }
}
