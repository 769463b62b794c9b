use nalgebra::Vector2;

/// Full dynamic state of the chain at one instant.
///
/// Link quantities are stored per link (head first) and describe the link's
/// centre of mass. The centre-of-mass fields are the integration variables;
/// everything else is kept consistent with them by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub link_positions: Vec<Vector2<f64>>,
    pub link_headings: Vec<f64>,
    pub link_velocities: Vec<Vector2<f64>>,
    pub link_angular_velocities: Vec<f64>,
    pub joint_angles: Vec<f64>,
    pub joint_velocities: Vec<f64>,
    /// Torques applied during the last physics substep, N·m.
    pub applied_torques: Vec<f64>,
    pub sim_time: f64,
    pub com_position: Vector2<f64>,
    pub com_velocity: Vector2<f64>,
}

impl SimState {
    pub fn head_position(&self) -> Vector2<f64> {
        self.link_positions[0]
    }

    pub fn head_speed(&self) -> f64 {
        self.link_velocities[0].norm()
    }
}

/// What one control step did, averaged over its physics substeps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub torques: Vec<f64>,
    pub joint_velocities: Vec<f64>,
    /// Speed of the head link centre at the end of the step, m/s.
    pub head_velocity: f64,
    /// `Σ |τ_j φ̇_j|` over the reported torques and joint velocities, W.
    pub instantaneous_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPose {
    /// All joints at zero with the head pointing along +x.
    Straight,
    Joints(Vec<f64>),
}
