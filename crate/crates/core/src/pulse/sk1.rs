use std::f64::consts::PI;

use super::{PulseSpec, Transition};
use crate::error::{Error, Result};

/// Phase offset of the two correcting 2pi segments: arccos(-angle / 4pi).
pub fn sk1_angles(angle: f64) -> Result<f64> {
    if !(angle > 0.0 && angle <= 2.0 * PI) {
        return Err(Error::InvalidArgument(format!("SK1 angle must lie in (0, 2pi], got {angle}")));
    }
    Ok((-angle / (4.0 * PI)).acos())
}

/// Composite carrier rotation robust to Rabi-rate miscalibration: the target
/// rotation followed by 2pi rotations at `phase - offset` and `phase + offset`.
pub fn sk1_pulse(ion: usize, transition: Transition, phase: f64, angle: f64, rabi: f64) -> Result<Vec<PulseSpec>> {
    if transition.is_sideband() {
        return Err(Error::InvalidArgument("SK1 composite pulses apply to carrier transitions only".into()));
    }
    let offset = sk1_angles(angle)?;
    Ok(vec![
        PulseSpec::carrier(ion, transition, angle, phase, rabi),
        PulseSpec::carrier(ion, transition, 2.0 * PI, phase - offset, rabi),
        PulseSpec::carrier(ion, transition, 2.0 * PI, phase + offset, rabi),
    ])
}
