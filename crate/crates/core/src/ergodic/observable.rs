use crate::error::{invalid, Result};
use crate::field::{FourierField, OUState};
use crate::tracer::{TracerState, TrajectoryRecord};

/// Bounded (or, for the velocity component, Lipschitz) functionals of the
/// observed field `Z`.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Constant(f64),
    /// `tanh(‖Z‖²_{X^m})`.
    TanhNormSq,
    /// `Z(0)_component`, the Lagrangian velocity.
    VelocityAtOrigin { component: usize },
    /// `1{‖Z − center‖_{X^m} < radius}`.
    IndicatorBall { center: FourierField, radius: f64 },
}

impl Observable {
    pub fn indicator(center: FourierField, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("delta", "must be positive"));
        }
        Ok(Self::IndicatorBall { center, radius })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant(_) => "constant",
            Self::TanhNormSq => "tanh_norm_sq",
            Self::VelocityAtOrigin { .. } => "velocity_at_origin",
            Self::IndicatorBall { .. } => "indicator_ball",
        }
    }

    /// Lipschitz constant in `X^m` where finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Self::Constant(_) => Some(0.0),
            Self::TanhNormSq => Some(tanh_square_lipschitz()),
            Self::VelocityAtOrigin { .. } | Self::IndicatorBall { .. } => None,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        match self {
            Self::VelocityAtOrigin { component } if *component >= dimension => {
                Err(invalid("probe.component", format!("must be below {dimension}")))
            }
            Self::IndicatorBall { radius, .. } if !(*radius > 0.0) => Err(invalid("delta", "must be positive")),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, z: &FourierField) -> Result<f64> {
        Ok(match self {
            Self::Constant(c) => *c,
            Self::TanhNormSq => z.norm().powi(2).tanh(),
            Self::VelocityAtOrigin { component } => z.value_at_origin()[*component],
            Self::IndicatorBall { center, radius } => indicator(z.distance(center)? < *radius),
        })
    }

    /// Value at `Z = V(· + x)` without forming the shifted field unless needed.
    pub fn evaluate_lagrangian(&self, tracer: &TracerState, ou: &OUState) -> Result<f64> {
        Ok(match self {
            Self::Constant(c) => *c,
            Self::TanhNormSq => ou.field.norm().powi(2).tanh(),
            Self::VelocityAtOrigin { component } => ou.field.evaluate(&tracer.displacement)?[*component],
            Self::IndicatorBall { .. } => self.evaluate(&ou.field.shift(&tracer.displacement)?)?,
        })
    }

    /// Value at record point `i`.
    pub fn evaluate_record(&self, record: &TrajectoryRecord, i: usize) -> Result<f64> {
        Ok(match self {
            Self::Constant(c) => *c,
            Self::TanhNormSq => record.field_norm[i].powi(2).tanh(),
            Self::VelocityAtOrigin { component } => record.lagrangian_velocity[i][*component],
            Self::IndicatorBall { center, radius } => {
                let dist = match &record.fields {
                    Some(fields) => fields[i].distance(center)?,
                    None if center.norm() == 0.0 => record.field_norm[i],
                    None => return Err(invalid("record", "fields were not recorded")),
                };
                indicator(dist < *radius)
            }
        })
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `sup_s d/ds tanh(s²) = 2√u sech²(u)` where `u tanh u = 1/4`.
pub fn tanh_square_lipschitz() -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.tanh() < 0.25 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    2.0 * u.sqrt() * (1.0 - u.tanh().powi(2))
}
