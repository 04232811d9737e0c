//! Three-phase PWM voltage sources.
//!
//! ```text
//!  1     /|    /|    /|
//!       / |   / |   / |      carrier c(t), period T/p
//! -1   /  |  /  |  /  |
//! ```
//!
//! The switched output is `sign(a * r_s(t) - c(t))` with `sign(0) = +1`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("phase index must be 1, 2 or 3, got {0}")]
    InvalidPhase(usize),
    #[error("pulse count must be at least 1")]
    InvalidPulses,
    #[error("period must be positive, got {0}")]
    InvalidPeriod(f64),
}

fn phase_shift(s: usize) -> Result<f64, ExcitationError> {
    match s {
        1 => Ok(0.0),
        2 => Ok(-2.0 * PI / 3.0),
        3 => Ok(-4.0 * PI / 3.0),
        _ => Err(ExcitationError::InvalidPhase(s)),
    }
}

/// Sinusoidal reference `sin(2 pi t / T + phi_s)`.
pub fn reference<T: Real>(s: usize, t: T, period: T) -> Result<T, ExcitationError> {
    let phi = T::lit(phase_shift(s)?);
    Ok((T::lit(2.0 * PI) * t / period + phi).sin())
}

/// Sawtooth carrier in `[-1, 1)` with `p` teeth per period.
pub fn carrier<T: Real>(p: u32, t: T, period: T) -> T {
    let x = T::lit(p as f64) * t / period;
    T::lit(2.0) * (x - x.floor()) - T::one()
}

/// Switched phase voltage in `{-1, +1}`.
pub fn pwm<T: Real>(s: usize, t: T, period: T, p: u32, a: T) -> Result<T, ExcitationError> {
    let d = a * reference(s, t, period)? - carrier(p, t, period);
    Ok(if d >= T::zero() { T::one() } else { -T::one() })
}

/// Start-up ramp, rising from 0 to 1 over the first two periods.
pub fn ramp<T: Real>(t: T, period: T) -> T {
    let two = T::lit(2.0);
    if t >= two * period {
        return T::one();
    }
    let t = t.max(T::zero());
    T::lit(0.5) * (T::one() - (T::lit(PI) * t / (two * period)).cos())
}

/// Which signal drives the voltage sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Forcing {
    /// Switched PWM output.
    #[default]
    Pwm,
    /// Smooth reference wave scaled by the modulation factor.
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwmSource {
    pub period: f64,
    pub pulses: u32,
    pub modulation: f64,
    pub ramp_enabled: bool,
}

impl Default for PwmSource {
    fn default() -> Self {
        Self {
            period: 0.02,
            pulses: 400,
            modulation: 0.8,
            ramp_enabled: true,
        }
    }
}

impl PwmSource {
    pub fn validate(&self) -> Result<(), ExcitationError> {
        if !(self.period > 0.0) {
            return Err(ExcitationError::InvalidPeriod(self.period));
        }
        if self.pulses == 0 {
            return Err(ExcitationError::InvalidPulses);
        }
        Ok(())
    }

    /// Switching frequency `p / T` in Hz.
    pub fn switching_frequency(&self) -> f64 {
        self.pulses as f64 / self.period
    }

    /// Voltage of phase `s` at time `t`, including the ramp when enabled.
    pub fn voltage<T: Real>(&self, s: usize, t: T, forcing: Forcing) -> Result<T, ExcitationError> {
        let period = T::lit(self.period);
        let a = T::lit(self.modulation);
        let v = match forcing {
            Forcing::Pwm => pwm(s, t, period, self.pulses, a)?,
            Forcing::Reference => a * reference(s, t, period)?,
        };
        Ok(if self.ramp_enabled { v * ramp(t, period) } else { v })
    }

    /// All three phase voltages at `t`.
    pub fn voltages<T: Real>(&self, t: T, forcing: Forcing) -> [T; 3] {
        // phases 1..=3 are always valid
        [1, 2, 3].map(|s| self.voltage(s, t, forcing).unwrap_or_else(|_| T::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const T: f64 = 0.02;

    #[test]
    fn reference_values() {
        assert_abs_diff_eq!(reference(1, 0.0, T).unwrap(), 0.0);
        assert_abs_diff_eq!(reference(1, T / 4.0, T).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            reference(2, 0.0, T).unwrap(),
            -(3.0f64).sqrt() / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(reference(4, 0.0, T), Err(ExcitationError::InvalidPhase(4)));
        assert_eq!(reference::<f64>(0, 0.0, T), Err(ExcitationError::InvalidPhase(0)));
    }

    #[test]
    fn carrier_values() {
        assert_eq!(carrier(400, 0.0, T), -1.0);
        assert_abs_diff_eq!(carrier(400, T / 800.0, T), 0.0, epsilon = 1e-12);
        for k in 0..50 {
            let t = 0.000_137 * k as f64;
            assert_abs_diff_eq!(carrier(40, t, T), carrier(40, t + T / 40.0, T), epsilon = 1e-9);
        }
    }

    #[test]
    fn pwm_at_start_is_high() {
        for p in [1, 40, 400] {
            assert_eq!(pwm(1, 0.0, T, p, 0.8).unwrap(), 1.0);
        }
    }

    #[test]
    fn ramp_values() {
        assert_eq!(ramp(0.0, T), 0.0);
        assert_abs_diff_eq!(ramp(2.0 * T, T), 1.0);
        assert_abs_diff_eq!(ramp(T, T), 0.5, epsilon = 1e-15);
        assert_eq!(ramp(5.0 * T, T), 1.0);
    }

    #[test]
    fn reference_phases_sum_to_zero() {
        for k in 0..200 {
            let t = k as f64 * 1.3e-4;
            let sum: f64 = (1..=3).map(|s| reference(s, t, T).unwrap()).sum();
            assert!(sum.abs() < 1e-12);
        }
    }

    #[test]
    fn source_voltage_applies_ramp() {
        let src = PwmSource::default();
        assert_eq!(src.switching_frequency(), 20_000.0);
        assert_eq!(src.voltage(1, 0.0, Forcing::Pwm).unwrap(), 0.0);
        let t = 3.0 * T + T / 4.0;
        assert_abs_diff_eq!(src.voltage(1, t, Forcing::Reference).unwrap(), 0.8, epsilon = 1e-12);
        let raw = PwmSource {
            ramp_enabled: false,
            ..PwmSource::default()
        };
        assert_eq!(raw.voltage(1, 0.0, Forcing::Pwm).unwrap(), 1.0);
    }

    #[test]
    fn works_in_single_precision() {
        assert_eq!(pwm(1, 0.0f32, 0.02, 400, 0.8).unwrap(), 1.0f32);
        assert!((ramp(0.02f32, 0.02) - 0.5).abs() < 1e-6);
    }
}
