//! Closed-loop tactile pipeline: piezoresistive front end, memristor-set
//! amplifier gain, slip detection and the grasp controller.

pub mod controller;
pub mod grasp;
pub mod scenario;

pub use controller::{controller_step, Action, ControllerConfig, ControllerState, Phase};
pub use grasp::{run_scenario, GraspLoop, GraspTrace, Marker, TraceRow};
pub use scenario::{GraspScenario, Profile};

use crate::device::DeviceParams;
use crate::{Error, Result};

/// Piezoresistive film: resistance falls linearly with force down to a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoModel {
    pub r_unloaded: f64,
    /// Ω per newton.
    pub sensitivity: f64,
    pub r_floor: f64,
    /// Bias voltage of the readout divider (V).
    pub v_bias: f64,
}

impl Default for PiezoModel {
    fn default() -> Self {
        PiezoModel {
            r_unloaded: 100_000.0,
            sensitivity: 10_000.0,
            r_floor: 5_000.0,
            v_bias: 1.0,
        }
    }
}

impl PiezoModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_floor > 0.0 && self.r_floor < self.r_unloaded) {
            return Err(Error::config("piezo model needs 0 < r_floor < r_unloaded"));
        }
        if !(self.sensitivity > 0.0 && self.v_bias > 0.0) {
            return Err(Error::config("piezo sensitivity and v_bias must be positive"));
        }
        Ok(())
    }

    /// Unity-gain sensor response (V) at film resistance `r`.
    pub fn response(&self, r: f64) -> f64 {
        self.v_bias * (1.0 - r / self.r_unloaded)
    }
}

pub fn piezo_resistance(force: f64, model: &PiezoModel) -> Result<f64> {
    if !(force >= 0.0) || !force.is_finite() {
        return Err(Error::invalid(format!("force must be finite and >= 0, got {force}")));
    }
    Ok((model.r_unloaded - model.sensitivity * force).max(model.r_floor))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainConfig {
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        GainConfig { g_min: 0.4, g_max: 8.5 }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_min > 0.0 && self.g_min < self.g_max && self.g_max.is_finite()) {
            return Err(Error::config("gain needs 0 < g_min < g_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain {
    pub value: f64,
    /// The input resistance was outside `[r_on, r_off]` and was clamped.
    pub clamped: bool,
}

/// Amplifier gain set by the memristor, linear in its conductance.
pub fn gain_from_resistance(mem_r: f64, gain: &GainConfig, params: &DeviceParams) -> Result<Gain> {
    if mem_r.is_nan() {
        return Err(Error::invalid("memristor resistance is NaN"));
    }
    let r = mem_r.clamp(params.r_on, params.r_off);
    let g_on = 1.0 / params.r_on;
    let g_off = 1.0 / params.r_off;
    let frac = ((1.0 / r - g_off) / (g_on - g_off)).clamp(0.0, 1.0);
    Ok(Gain {
        value: gain.g_min + (gain.g_max - gain.g_min) * frac,
        clamped: r != mem_r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipConfig {
    /// |dR/dt| threshold (Ω/s).
    pub rate_threshold: f64,
    pub min_gap_s: f64,
}

impl Default for SlipConfig {
    fn default() -> Self {
        SlipConfig {
            rate_threshold: 1.0e7,
            min_gap_s: 0.002,
        }
    }
}

impl SlipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_threshold > 0.0 && self.min_gap_s >= 0.0) {
            return Err(Error::config("slip threshold must be positive and min_gap non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipEvent {
    pub t: f64,
    /// |dR/dt| at the event (Ω/s).
    pub rate: f64,
}

/// Streaming form of [`detect_slip`].
#[derive(Debug, Clone, Default)]
pub struct SlipDetector {
    last: Option<(f64, f64)>,
    last_event: Option<f64>,
}

impl SlipDetector {
    pub fn push(&mut self, t: f64, r: f64, cfg: &SlipConfig) -> Option<SlipEvent> {
        let prev = self.last.replace((t, r));
        let (tp, rp) = prev?;
        if t <= tp {
            return None;
        }
        let rate = ((r - rp) / (t - tp)).abs();
        if rate <= cfg.rate_threshold {
            return None;
        }
        if let Some(te) = self.last_event {
            if t - te < cfg.min_gap_s {
                return None;
            }
        }
        self.last_event = Some(t);
        Some(SlipEvent { t, rate })
    }
}

/// Spikes in a time-sorted `(t, piezo_r)` window, debounced by `min_gap_s`.
pub fn detect_slip(window: &[(f64, f64)], cfg: &SlipConfig) -> Vec<SlipEvent> {
    let mut det = SlipDetector::default();
    window
        .iter()
        .filter_map(|&(t, r)| det.push(t, r, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piezo_examples() {
        let m = PiezoModel::default();
        assert_eq!(piezo_resistance(0.0, &m).unwrap(), 100_000.0);
        assert_eq!(piezo_resistance(2.0, &m).unwrap(), 80_000.0);
        assert_eq!(piezo_resistance(1e6, &m).unwrap(), m.r_floor);
        assert!(piezo_resistance(-0.1, &m).is_err());
        assert!(piezo_resistance(f64::NAN, &m).is_err());
        assert_eq!(m.response(100_000.0), 0.0);
        assert!((m.response(80_000.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gain_boundaries() {
        let g = GainConfig::default();
        let p = DeviceParams::default();
        let at = |r| gain_from_resistance(r, &g, &p).unwrap();
        assert!((at(p.r_off).value - 0.4).abs() < 1e-12);
        assert!((at(p.r_on).value - 8.5).abs() < 1e-12);
        assert!(at(35_000.0).value >= 6.0);
        assert!(!at(35_000.0).clamped);
        let lo = at(1_000.0);
        assert!(lo.clamped && (lo.value - 8.5).abs() < 1e-12);
        let hi = at(1e9);
        assert!(hi.clamped && (hi.value - 0.4).abs() < 1e-12);
        assert!(gain_from_resistance(f64::NAN, &g, &p).is_err());
    }

    #[test]
    fn slip_examples() {
        let cfg = SlipConfig::default();
        let flat: Vec<_> = (0..20).map(|i| (i as f64 * 1e-3, 80e3)).collect();
        assert!(detect_slip(&flat, &cfg).is_empty());

        let step = [(0.0, 80e3), (1e-3, 80e3), (2e-3, 120e3), (3e-3, 120e3)];
        let ev = detect_slip(&step, &cfg);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].t, 2e-3);

        let double = [
            (0.0, 80e3),
            (1e-3, 80e3),
            (1.5e-3, 100e3),
            (2.0e-3, 120e3),
            (3e-3, 120e3),
        ];
        assert_eq!(detect_slip(&double, &cfg).len(), 1);
    }
}
