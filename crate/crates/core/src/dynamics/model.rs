use nalgebra::{DMatrix, DVector, Vector2};

use super::config::RobotConfig;
use super::state::{InitialPose, SimState, StepInfo};
use crate::error::{Error, Result};

/// Immutable, precomputed description of a snake chain.
///
/// The chain is simulated in reduced coordinates: the whole-body centre of
/// mass, the head heading and the relative joint angles. Link `i` and link
/// `i + 1` are connected by joint `i`; link 0 is the head.
///
/// Relative to the centre of mass, link `i` sits at `r_i = -Σ_k d[i][k] t_k`
/// where `t_k` is the unit axis of link `k`. The `d` coefficients depend only
/// on geometry, so the mass matrix reduces to `A[k][l] cos(θ_k - θ_l) + I δ_kl`
/// with `A = m dᵀd` precomputed here.
#[derive(Debug, Clone)]
pub struct RobotModel {
    config: RobotConfig,
    link_mass: f64,
    link_inertia: f64,
    total_mass: f64,
    /// n × n, row-major.
    offsets: Vec<f64>,
    /// n × n, row-major.
    coupling: Vec<f64>,
    substeps: usize,
}

/// Generalized coordinates of the chain.
#[derive(Debug, Clone)]
struct Coords {
    com: Vector2<f64>,
    com_vel: Vector2<f64>,
    /// Head heading followed by the joint angles.
    z: Vec<f64>,
    zdot: Vec<f64>,
}

/// Per-substep buffers reused across one control step.
struct Scratch {
    cos: Vec<f64>,
    sin: Vec<f64>,
    omega: Vec<f64>,
    forces: Vec<Vector2<f64>>,
    torques: Vec<f64>,
    rhs_abs: Vec<f64>,
    /// Friction and centripetal part of `rhs_abs`.
    passive: Vec<f64>,
    /// Extra diagonal of the relative-coordinate mass matrix.
    implicit_diag: Vec<f64>,
    mass: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            cos: vec![0.0; n],
            sin: vec![0.0; n],
            omega: vec![0.0; n],
            forces: vec![Vector2::zeros(); n],
            torques: vec![0.0; n - 1],
            rhs_abs: vec![0.0; n],
            passive: vec![0.0; n],
            implicit_diag: vec![0.0; n],
            mass: DMatrix::zeros(n, n),
            rhs: DVector::zeros(n),
        }
    }
}

/// PD position servo with a symmetric torque clamp.
pub fn servo_torque(target: f64, angle: f64, ang_vel: f64, config: &RobotConfig) -> f64 {
    let limit = config.max_torque();
    (config.servo_kp * (target - angle) - config.servo_kd * ang_vel).clamp(-limit, limit)
}

/// Anisotropic viscous ground force on one link: weak along the body axis,
/// strong sideways.
pub fn friction_force(link_velocity: Vector2<f64>, heading: f64, config: &RobotConfig) -> Vector2<f64> {
    let (s, c) = heading.sin_cos();
    friction_force_axes(link_velocity, c, s, config)
}

#[inline]
fn friction_force_axes(v: Vector2<f64>, c: f64, s: f64, config: &RobotConfig) -> Vector2<f64> {
    let tangent = Vector2::new(c, s);
    let normal = Vector2::new(-s, c);
    let vt = v.dot(&tangent);
    let vn = v.dot(&normal);
    -config.forward_damping_coeff * vt * tangent - config.lateral_friction_coeff * vn * normal
}

impl RobotModel {
    pub fn build(config: RobotConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_modules;
        let half = config.module_length / 2.0;
        let link_mass = config.module_mass();
        let link_inertia =
            link_mass * (config.module_length.powi(2) + config.module_width.powi(2)) / 12.0;

        // Head-relative offsets: s_i = -Σ_k c[i][k] t_k.
        let mut chain = vec![0.0; n * n];
        for i in 1..n {
            chain[i * n] = half;
            for k in 1..i {
                chain[i * n + k] = config.module_length;
            }
            chain[i * n + i] = half;
        }
        // Shift to the centre of mass (identical masses).
        let mut offsets = chain.clone();
        for k in 0..n {
            let mean = (0..n).map(|i| chain[i * n + k]).sum::<f64>() / n as f64;
            for i in 0..n {
                offsets[i * n + k] -= mean;
            }
        }
        let mut coupling = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                coupling[k * n + l] =
                    link_mass * (0..n).map(|i| offsets[i * n + k] * offsets[i * n + l]).sum::<f64>();
            }
        }

        Ok(Self {
            link_mass,
            link_inertia,
            total_mass: link_mass * n as f64,
            offsets,
            coupling,
            substeps: config.substeps(),
            config,
        })
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    pub fn num_links(&self) -> usize {
        self.config.num_modules
    }

    pub fn num_joints(&self) -> usize {
        self.config.num_modules - 1
    }

    pub fn link_mass(&self) -> f64 {
        self.link_mass
    }

    /// Planar moment of inertia of one link about its centre, kg·m².
    pub fn link_inertia(&self) -> f64 {
        self.link_inertia
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Distance from a link centre to each of its joint attachment points.
    pub fn joint_offset(&self) -> f64 {
        self.config.module_length / 2.0
    }

    pub fn reset(&self, pose: &InitialPose) -> Result<SimState> {
        let nj = self.num_joints();
        let joints = match pose {
            InitialPose::Straight => vec![0.0; nj],
            InitialPose::Joints(angles) => {
                if angles.len() != nj {
                    return Err(Error::validation(
                        "joint_angles",
                        format!("expected {nj} angles, got {}", angles.len()),
                    ));
                }
                for (j, &a) in angles.iter().enumerate() {
                    if !a.is_finite() || a.abs() > self.config.joint_limit {
                        return Err(Error::validation(
                            format!("joint_angles[{j}]"),
                            format!("{a} rad is outside ±{}", self.config.joint_limit),
                        ));
                    }
                }
                angles.clone()
            }
        };
        let mut z = Vec::with_capacity(nj + 1);
        z.push(0.0);
        z.extend(joints);
        let coords = Coords {
            com: Vector2::zeros(),
            com_vel: Vector2::zeros(),
            zdot: vec![0.0; nj + 1],
            z,
        };
        Ok(self.assemble(&coords, vec![0.0; nj], 0.0))
    }

    /// Advances the chain by one control step while the servos track `targets`.
    pub fn step(&self, state: &SimState, targets: &[f64]) -> Result<(SimState, StepInfo)> {
        let nj = self.num_joints();
        if targets.len() != nj {
            return Err(Error::validation(
                "targets",
                format!("expected {nj} joint targets, got {}", targets.len()),
            ));
        }
        for (j, &t) in targets.iter().enumerate() {
            if !t.is_finite() || t.abs() > self.config.joint_limit + 1e-12 {
                return Err(Error::validation(
                    format!("targets[{j}]"),
                    format!("{t} rad is outside ±{}", self.config.joint_limit),
                ));
            }
        }

        let dt = self.config.physics_substep;
        let mut coords = self.coords_of(state);
        let mut scratch = Scratch::new(self.num_links());
        let mut torque_sum = vec![0.0; nj];
        let mut speed_sum = vec![0.0; nj];

        for sub in 0..self.substeps {
            let com_acc = self.accelerations(&coords, targets, &mut scratch).ok_or(
                Error::SimulationDiverged { sim_time: state.sim_time + sub as f64 * dt },
            )?;
            coords.com_vel += com_acc * dt;
            for (v, a) in coords.zdot.iter_mut().zip(scratch.rhs.iter()) {
                *v += a * dt;
            }
            coords.com += coords.com_vel * dt;
            for (q, v) in coords.z.iter_mut().zip(&coords.zdot) {
                *q += v * dt;
            }
            self.enforce_joint_limits(&mut coords, &mut scratch)
                .ok_or(Error::SimulationDiverged { sim_time: state.sim_time + sub as f64 * dt })?;
            for j in 0..nj {
                torque_sum[j] += scratch.torques[j];
                speed_sum[j] += coords.zdot[j + 1];
            }
        }

        let sim_time = state.sim_time + self.config.control_dt;
        let finite = coords.com.iter().chain(coords.com_vel.iter()).all(|v| v.is_finite())
            && coords.z.iter().chain(&coords.zdot).all(|v| v.is_finite());
        if !finite {
            return Err(Error::SimulationDiverged { sim_time });
        }

        let next = self.assemble(&coords, scratch.torques.clone(), sim_time);
        let inv = 1.0 / self.substeps as f64;
        let torques: Vec<f64> = torque_sum.iter().map(|t| t * inv).collect();
        let joint_velocities: Vec<f64> = speed_sum.iter().map(|v| v * inv).collect();
        let instantaneous_power = torques
            .iter()
            .zip(&joint_velocities)
            .map(|(t, v)| (t * v).abs())
            .sum();
        let info = StepInfo {
            head_velocity: next.link_velocities[0].norm(),
            torques,
            joint_velocities,
            instantaneous_power,
        };
        Ok((next, info))
    }

    /// Applies an instantaneous planar impulse (N·s) at the centre of `link`.
    pub fn apply_impulse(&self, state: &SimState, link: usize, impulse: Vector2<f64>) -> Result<SimState> {
        let n = self.num_links();
        if link >= n {
            return Err(Error::Index { index: link, len: n });
        }
        let mut coords = self.coords_of(state);
        let mut scratch = Scratch::new(n);
        self.trig(&coords, &mut scratch);
        for k in 0..n {
            let normal = Vector2::new(-scratch.sin[k], scratch.cos[k]);
            scratch.rhs_abs[k] = -self.offsets[link * n + k] * impulse.dot(&normal);
        }
        self.fill_mass_matrix(&mut scratch);
        let dz = self.solve_relative(&mut scratch).ok_or(Error::SimulationDiverged {
            sim_time: state.sim_time,
        })?;
        coords.com_vel += impulse / self.total_mass;
        for (v, d) in coords.zdot.iter_mut().zip(dz.iter()) {
            *v += d;
        }
        Ok(self.assemble(&coords, state.applied_torques.clone(), state.sim_time))
    }

    /// Largest distance between the two link-frame images of any joint.
    pub fn joint_residual(&self, state: &SimState) -> f64 {
        let half = self.joint_offset();
        (0..self.num_joints())
            .map(|j| {
                let (s0, c0) = state.link_headings[j].sin_cos();
                let (s1, c1) = state.link_headings[j + 1].sin_cos();
                let front = state.link_positions[j] - half * Vector2::new(c0, s0);
                let back = state.link_positions[j + 1] + half * Vector2::new(c1, s1);
                (front - back).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Total planar linear momentum, kg·m/s.
    pub fn linear_momentum(&self, state: &SimState) -> Vector2<f64> {
        state
            .link_velocities
            .iter()
            .fold(Vector2::zeros(), |acc, v| acc + v * self.link_mass)
    }

    fn coords_of(&self, state: &SimState) -> Coords {
        let mut z = Vec::with_capacity(self.num_links());
        z.push(state.link_headings[0]);
        z.extend_from_slice(&state.joint_angles);
        let mut zdot = Vec::with_capacity(self.num_links());
        zdot.push(state.link_angular_velocities[0]);
        zdot.extend_from_slice(&state.joint_velocities);
        Coords {
            com: state.com_position,
            com_vel: state.com_velocity,
            z,
            zdot,
        }
    }

    fn trig(&self, coords: &Coords, scratch: &mut Scratch) {
        let mut heading = 0.0;
        let mut rate = 0.0;
        for i in 0..self.num_links() {
            heading += coords.z[i];
            rate += coords.zdot[i];
            let (s, c) = heading.sin_cos();
            scratch.sin[i] = s;
            scratch.cos[i] = c;
            scratch.omega[i] = rate;
        }
    }

    /// Velocity of link `i` relative to the centre of mass.
    #[inline]
    fn relative_velocity(&self, i: usize, scratch: &Scratch) -> Vector2<f64> {
        let n = self.num_links();
        let mut v = Vector2::zeros();
        for k in 0..n {
            let w = self.offsets[i * n + k] * scratch.omega[k];
            v.x += w * scratch.sin[k];
            v.y -= w * scratch.cos[k];
        }
        v
    }

    fn fill_mass_matrix(&self, scratch: &mut Scratch) {
        let n = self.num_links();
        for k in 0..n {
            for l in 0..n {
                let cos_kl = scratch.cos[k] * scratch.cos[l] + scratch.sin[k] * scratch.sin[l];
                scratch.mass[(k, l)] = self.coupling[k * n + l] * cos_kl;
            }
            scratch.mass[(k, k)] += self.link_inertia;
        }
    }

    /// Rewrites the absolute-angle mass matrix in `scratch.mass` in (head
    /// heading, joint angle) coordinates.
    fn relative_mass(&self, scratch: &mut Scratch) {
        let n = self.num_links();
        // T[i][a] = [i >= a]; Tᵀ M T is a two-dimensional suffix sum.
        for a in (0..n).rev() {
            for b in (0..n).rev() {
                let mut v = scratch.mass[(a, b)];
                if a + 1 < n {
                    v += scratch.mass[(a + 1, b)];
                }
                if b + 1 < n {
                    v += scratch.mass[(a, b + 1)];
                }
                if a + 1 < n && b + 1 < n {
                    v -= scratch.mass[(a + 1, b + 1)];
                }
                scratch.mass[(a, b)] = v;
            }
        }
    }

    /// Maps absolute-angle mass matrix and forces to (head heading, joint
    /// angle) coordinates and solves for their accelerations.
    fn solve_relative(&self, scratch: &mut Scratch) -> Option<DVector<f64>> {
        let n = self.num_links();
        self.relative_mass(scratch);
        let mut acc = 0.0;
        for a in (0..n).rev() {
            acc += scratch.rhs_abs[a];
            scratch.rhs[a] = acc;
        }
        for a in 0..n {
            scratch.mass[(a, a)] += scratch.implicit_diag[a];
        }
        let chol = scratch.mass.clone().cholesky()?;
        let x = chol.solve(&scratch.rhs);
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    /// Clamps joints past their limit and removes their outward speed with
    /// inelastic constraint impulses, which never add kinetic energy and leave
    /// the centre of mass untouched.
    fn enforce_joint_limits(&self, coords: &mut Coords, scratch: &mut Scratch) -> Option<()> {
        let limit = self.config.joint_limit;
        let n = self.num_links();
        let mut at_limit = Vec::new();
        for a in 1..n {
            if coords.z[a].abs() > limit {
                coords.z[a] = coords.z[a].clamp(-limit, limit);
                at_limit.push(a);
            } else if coords.z[a].abs() == limit {
                at_limit.push(a);
            }
        }
        let outward = |coords: &Coords, a: usize| coords.zdot[a] * coords.z[a] > 0.0;
        if !at_limit.iter().any(|&a| outward(coords, a)) {
            return Some(());
        }
        self.trig(coords, scratch);
        self.fill_mass_matrix(scratch);
        self.relative_mass(scratch);
        let chol = scratch.mass.clone().cholesky()?;
        let columns: Vec<DVector<f64>> = at_limit
            .iter()
            .map(|&a| {
                let mut e = DVector::zeros(n);
                e[a] = 1.0;
                chol.solve(&e)
            })
            .collect();
        for _ in 0..4 * at_limit.len() {
            let mut active = false;
            for (&a, col) in at_limit.iter().zip(&columns) {
                if outward(coords, a) {
                    let lambda = -coords.zdot[a] / col[a];
                    for (v, c) in coords.zdot.iter_mut().zip(col.iter()) {
                        *v += lambda * c;
                    }
                    coords.zdot[a] = 0.0;
                    active = true;
                }
            }
            if !active {
                break;
            }
        }
        for &a in &at_limit {
            if outward(coords, a) {
                coords.zdot[a] = 0.0;
            }
        }
        Some(())
    }

    /// Computes servo torques and ground forces, leaves the relative
    /// accelerations in `scratch.rhs` and returns the centre-of-mass
    /// acceleration.
    fn accelerations(&self, coords: &Coords, targets: &[f64], scratch: &mut Scratch) -> Option<Vector2<f64>> {
        let n = self.num_links();
        let cfg = &self.config;
        self.trig(coords, scratch);

        let mut net_force = Vector2::zeros();
        for i in 0..n {
            let v = coords.com_vel + self.relative_velocity(i, scratch);
            let f = friction_force_axes(v, scratch.cos[i], scratch.sin[i], cfg);
            scratch.forces[i] = f;
            net_force += f;
        }
        for k in 0..n {
            let normal = Vector2::new(-scratch.sin[k], scratch.cos[k]);
            let mut q = 0.0;
            for i in 0..n {
                q -= self.offsets[i * n + k] * scratch.forces[i].dot(&normal);
            }
            let mut centripetal = 0.0;
            for l in 0..n {
                let sin_kl = scratch.sin[k] * scratch.cos[l] - scratch.cos[k] * scratch.sin[l];
                centripetal += self.coupling[k * n + l] * sin_kl * scratch.omega[l] * scratch.omega[l];
            }
            scratch.passive[k] = q - centripetal;
        }

        // Servo damping is integrated implicitly on joints below the torque
        // limit: the damping uses the end-of-substep joint speed. A joint
        // whose resulting torque would exceed the limit is saturated and the
        // system solved again.
        let h = cfg.physics_substep;
        let limit = cfg.max_torque();
        scratch.implicit_diag[0] = 0.0;
        for j in 0..n - 1 {
            let raw = cfg.servo_kp * (targets[j] - coords.z[j + 1]) - cfg.servo_kd * coords.zdot[j + 1];
            if raw.abs() < limit {
                scratch.torques[j] = raw;
                scratch.implicit_diag[j + 1] = h * cfg.servo_kd;
            } else {
                scratch.torques[j] = raw.clamp(-limit, limit);
                scratch.implicit_diag[j + 1] = 0.0;
            }
        }
        let zddot = loop {
            for k in 0..n {
                let mut q = scratch.passive[k];
                if k >= 1 {
                    q += scratch.torques[k - 1];
                }
                if k + 1 < n {
                    q -= scratch.torques[k];
                }
                scratch.rhs_abs[k] = q;
            }
            self.fill_mass_matrix(scratch);
            let zddot = self.solve_relative(scratch)?;
            let mut changed = false;
            for j in 0..n - 1 {
                if scratch.implicit_diag[j + 1] == 0.0 {
                    continue;
                }
                let effective = scratch.torques[j] - scratch.implicit_diag[j + 1] * zddot[j + 1];
                if effective.abs() > limit {
                    scratch.torques[j] = effective.clamp(-limit, limit);
                    scratch.implicit_diag[j + 1] = 0.0;
                    changed = true;
                }
            }
            if !changed {
                break zddot;
            }
        };
        for j in 0..n - 1 {
            scratch.torques[j] -= scratch.implicit_diag[j + 1] * zddot[j + 1];
        }
        scratch.rhs = zddot;
        Some(net_force / self.total_mass)
    }

    fn assemble(&self, coords: &Coords, applied_torques: Vec<f64>, sim_time: f64) -> SimState {
        let n = self.num_links();
        let mut scratch = Scratch::new(n);
        self.trig(coords, &mut scratch);
        let mut link_positions = Vec::with_capacity(n);
        let mut link_velocities = Vec::with_capacity(n);
        let mut link_headings = Vec::with_capacity(n);
        let mut heading = 0.0;
        for i in 0..n {
            let mut r = Vector2::zeros();
            for k in 0..n {
                r.x -= self.offsets[i * n + k] * scratch.cos[k];
                r.y -= self.offsets[i * n + k] * scratch.sin[k];
            }
            link_positions.push(coords.com + r);
            link_velocities.push(coords.com_vel + self.relative_velocity(i, &scratch));
            heading += coords.z[i];
            link_headings.push(heading);
        }
        SimState {
            link_positions,
            link_headings,
            link_velocities,
            link_angular_velocities: scratch.omega,
            joint_angles: coords.z[1..].to_vec(),
            joint_velocities: coords.zdot[1..].to_vec(),
            applied_torques,
            sim_time,
            com_position: coords.com,
            com_velocity: coords.com_vel,
        }
    }
}
