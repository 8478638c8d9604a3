//! Behavioral model of a nonvolatile threshold memristor.
//!
//! The internal state `x ∈ [0, 1]` (1 = fully ON) moves only while the
//! applied voltage is outside the dead zone `[v_tn, v_tp]`:
//!
//! ```text
//! dx/dt = alpha_p · (v − v_tp) · w₊(x)   for v > v_tp
//! dx/dt = alpha_n · (v − v_tn) · w₋(x)   for v < v_tn
//! dx/dt = 0                              otherwise
//! ```
//!
//! The window is direction-aware, `w₊(x) = 1 − x^(2p)` and
//! `w₋(x) = 1 − (x − 1)^(2p)`, so the state slows down as it approaches
//! the boundary it is being pushed toward but can always leave the
//! opposite one. Resistance mixes the two end-point conductances linearly.
//!
//! For `p = 1` each constant-voltage segment has a closed-form solution and
//! is integrated exactly; other exponents fall back to fixed-step explicit
//! Euler with at least [`MIN_EULER_SUBSTEPS`] substeps per segment.

use crate::{Error, Result};

/// Minimum number of Euler substeps per constant-voltage segment.
pub const MIN_EULER_SUBSTEPS: usize = 100;

/// Longest Euler substep used on the general-exponent path.
pub const MAX_EULER_SUBSTEP_S: f64 = 10e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    /// Full-ON resistance (Ω).
    pub r_on: f64,
    /// Full-OFF resistance (Ω).
    pub r_off: f64,
    /// Positive switching threshold (V), > 0.
    pub v_tp: f64,
    /// Negative switching threshold (V), < 0.
    pub v_tn: f64,
    /// Positive-drive rate, 1/(V·s).
    pub alpha_p: f64,
    /// Negative-drive rate, 1/(V·s).
    pub alpha_n: f64,
    pub window_exponent: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            r_on: 25_000.0,
            r_off: 350_000.0,
            v_tp: 0.15,
            v_tn: -0.15,
            alpha_p: 400.0,
            alpha_n: 400.0,
            window_exponent: 1.0,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.r_on,
            self.r_off,
            self.v_tp,
            self.v_tn,
            self.alpha_p,
            self.alpha_n,
            self.window_exponent,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("device parameters must be finite"));
        }
        if !(self.r_on > 0.0 && self.r_on < self.r_off) {
            return Err(Error::invalid(format!(
                "need 0 < r_on < r_off, got r_on={} r_off={}",
                self.r_on, self.r_off
            )));
        }
        if !(self.v_tn < 0.0 && self.v_tp > 0.0) {
            return Err(Error::invalid(format!(
                "need v_tn < 0 < v_tp, got v_tn={} v_tp={}",
                self.v_tn, self.v_tp
            )));
        }
        if !(self.alpha_p > 0.0 && self.alpha_n > 0.0) {
            return Err(Error::invalid("alpha_p and alpha_n must be positive"));
        }
        if self.window_exponent < 0.5 {
            return Err(Error::invalid("window_exponent must be >= 0.5"));
        }
        Ok(())
    }

    fn g_on(&self) -> f64 {
        1.0 / self.r_on
    }

    fn g_off(&self) -> f64 {
        1.0 / self.r_off
    }
}

/// Internal state variable of one device. Always within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct MemristorState {
    x: f64,
}

impl MemristorState {
    pub const FULL_OFF: MemristorState = MemristorState { x: 0.0 };
    pub const FULL_ON: MemristorState = MemristorState { x: 1.0 };

    pub fn new(x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!("state x={x} outside [0, 1]")));
        }
        Ok(MemristorState { x })
    }

    /// State whose resistance equals `r`, clamped to the device range.
    pub fn from_resistance(r: f64, params: &DeviceParams) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("resistance {r} must be positive")));
        }
        let x = (1.0 / r - params.g_off()) / (params.g_on() - params.g_off());
        Ok(MemristorState {
            x: x.clamp(0.0, 1.0),
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    fn clamped(x: f64) -> Self {
        MemristorState {
            x: x.clamp(0.0, 1.0),
        }
    }
}

/// Rectangular pulse train. Each period is `pulse_width / duty_cycle` long
/// and carries `amplitude` for the first `pulse_width` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTrain {
    pub amplitude: f64,
    pub pulse_width: f64,
    pub duty_cycle: f64,
    pub count: u32,
}

impl PulseTrain {
    pub fn new(amplitude: f64, pulse_width: f64, duty_cycle: f64, count: u32) -> Result<Self> {
        let train = PulseTrain {
            amplitude,
            pulse_width,
            duty_cycle,
            count,
        };
        train.validate()?;
        Ok(train)
    }

    /// Zero-amplitude single pulse; applying it is a no-op.
    pub fn null() -> Self {
        PulseTrain {
            amplitude: 0.0,
            pulse_width: 1e-6,
            duty_cycle: 1.0,
            count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("pulse amplitude must be finite"));
        }
        if !(self.pulse_width.is_finite() && self.pulse_width > 0.0) {
            return Err(Error::invalid(format!(
                "pulse width {} must be positive",
                self.pulse_width
            )));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::invalid(format!(
                "duty cycle {} outside (0, 1]",
                self.duty_cycle
            )));
        }
        if self.count == 0 {
            return Err(Error::invalid("pulse count must be >= 1"));
        }
        Ok(())
    }

    pub fn is_null(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn period(&self) -> f64 {
        self.pulse_width / self.duty_cycle
    }

    pub fn off_time(&self) -> f64 {
        self.period() - self.pulse_width
    }

    /// Total time spent at `amplitude`.
    pub fn on_time(&self) -> f64 {
        self.pulse_width * f64::from(self.count)
    }

    pub fn duration(&self) -> f64 {
        self.period() * f64::from(self.count)
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        PulseTrain { amplitude, ..self }
    }
}

/// Sine sweep through a series resistor, as used for I–V characterisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub peak_to_peak: f64,
    pub frequency: f64,
    pub series_resistance: f64,
    pub samples_per_period: u32,
    pub periods: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            peak_to_peak: 0.5,
            frequency: 10.0,
            series_resistance: 10_000.0,
            samples_per_period: 400,
            periods: 3,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_to_peak.is_finite() && self.peak_to_peak > 0.0) {
            return Err(Error::invalid("peak_to_peak must be positive"));
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::invalid("frequency must be positive"));
        }
        if !(self.series_resistance.is_finite() && self.series_resistance >= 0.0) {
            return Err(Error::invalid("series_resistance must be >= 0"));
        }
        if self.samples_per_period == 0 || self.periods == 0 {
            return Err(Error::invalid(
                "samples_per_period and periods must be positive",
            ));
        }
        Ok(())
    }

    pub fn sample_interval(&self) -> f64 {
        1.0 / (self.frequency * f64::from(self.samples_per_period))
    }
}

/// One row of an I–V sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub t: f64,
    pub applied_v: f64,
    pub device_v: f64,
    pub current_a: f64,
    pub x: f64,
}

pub fn resistance(state: MemristorState, params: &DeviceParams) -> f64 {
    let x = state.x;
    1.0 / (x * params.g_on() + (1.0 - x) * params.g_off())
}

/// Normalised conductance: 0 at full OFF, 1 at full ON. With
/// conductance-linear mixing this is the state variable itself, but it is
/// computed from the resistance so that it stays meaningful if the mixing
/// law changes.
pub fn eigenvalue(state: MemristorState, params: &DeviceParams) -> f64 {
    let g = 1.0 / resistance(state, params);
    ((g - params.g_off()) / (params.g_on() - params.g_off())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Drive {
    Set,
    Reset,
}

/// Signed-free drive magnitude `k ≥ 0` and its direction, or `None` inside
/// the dead zone.
fn drive(voltage: f64, params: &DeviceParams) -> Option<(f64, Drive)> {
    if voltage > params.v_tp {
        Some((params.alpha_p * (voltage - params.v_tp), Drive::Set))
    } else if voltage < params.v_tn {
        Some((params.alpha_n * (params.v_tn - voltage), Drive::Reset))
    } else {
        None
    }
}

fn window(x: f64, dir: Drive, p: f64) -> f64 {
    let d = match dir {
        Drive::Set => x,
        Drive::Reset => x - 1.0,
    };
    if p == 1.0 {
        1.0 - d * d
    } else {
        1.0 - d.abs().powf(2.0 * p)
    }
}

/// Integrate the state under a constant `voltage` for `dt` seconds.
pub fn step(
    state: MemristorState,
    voltage: f64,
    dt: f64,
    params: &DeviceParams,
) -> Result<MemristorState> {
    if !voltage.is_finite() || !dt.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite step input (v={voltage}, dt={dt})"
        )));
    }
    if dt <= 0.0 {
        return Err(Error::invalid(format!("dt={dt} must be positive")));
    }
    let Some((k, dir)) = drive(voltage, params) else {
        return Ok(state);
    };
    if window(state.x, dir, params.window_exponent) == 0.0 {
        return Ok(state);
    }
    if params.window_exponent == 1.0 {
        Ok(exact_segment(state.x, k, dir, dt))
    } else {
        Ok(euler_segment(state.x, k, dir, dt, params.window_exponent))
    }
}

// For p = 1 the set branch is dx/dt = k(1 − x²), solved by
// x = (x0 + τ)/(1 + x0·τ) with τ = tanh(k·dt); the reset branch is the same
// equation in y = 1 − x, rewritten in x to keep relative precision near 0.
fn exact_segment(x0: f64, k: f64, dir: Drive, dt: f64) -> MemristorState {
    let s = k * dt;
    let tau = s.tanh();
    let x = match dir {
        Drive::Set => (x0 + tau) / (1.0 + x0 * tau),
        Drive::Reset => {
            let one_minus_tau = 2.0 / (1.0 + (2.0 * s).exp());
            x0 * one_minus_tau / (1.0 + (1.0 - x0) * tau)
        }
    };
    MemristorState::clamped(x)
}

fn euler_segment(x0: f64, k: f64, dir: Drive, dt: f64, p: f64) -> MemristorState {
    let n = ((dt / MAX_EULER_SUBSTEP_S).ceil() as usize).max(MIN_EULER_SUBSTEPS);
    let h = dt / n as f64;
    let signed_k = match dir {
        Drive::Set => k,
        Drive::Reset => -k,
    };
    let mut x = x0;
    for _ in 0..n {
        x = (x + h * signed_k * window(x, dir, p)).clamp(0.0, 1.0);
    }
    MemristorState { x }
}

/// Apply every pulse of `train` in order. Off phases are sub-threshold and
/// leave the state untouched.
pub fn apply_pulse_train(
    state: MemristorState,
    train: &PulseTrain,
    params: &DeviceParams,
) -> Result<MemristorState> {
    train.validate()?;
    if drive(train.amplitude, params).is_none() {
        return Ok(state);
    }
    if params.window_exponent == 1.0 {
        // tanh addition makes consecutive identical pulses compose exactly
        return step(state, train.amplitude, train.on_time(), params);
    }
    let mut s = state;
    for _ in 0..train.count {
        s = step(s, train.amplitude, train.pulse_width, params)?;
    }
    Ok(s)
}

/// Sine sweep through `spec.series_resistance`; returns one sample per
/// time step, recording the state before it is advanced.
pub fn iv_sweep(
    spec: &SweepSpec,
    params: &DeviceParams,
    initial: MemristorState,
) -> Result<Vec<SweepSample>> {
    spec.validate()?;
    let dt = spec.sample_interval();
    let amp = spec.peak_to_peak / 2.0;
    let omega = 2.0 * std::f64::consts::PI * spec.frequency;
    let n = spec.samples_per_period as usize * spec.periods as usize;
    let mut state = initial;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let applied = amp * (omega * t).sin();
        let r = resistance(state, params);
        let current = applied / (r + spec.series_resistance);
        let device_v = current * r;
        out.push(SweepSample {
            t,
            applied_v: applied,
            device_v,
            current_a: current,
            x: state.x,
        });
        state = step(state, device_v, dt, params)?;
    }
    Ok(out)
}

/// Shape summary of an I–V loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopAnalysis {
    /// |I| interpolated at each zero crossing of the applied voltage.
    pub origin_currents: Vec<f64>,
    pub rising_crossings: usize,
    pub falling_crossings: usize,
    /// Sum of the absolute lobe areas (V·A) over the final period.
    pub area: f64,
    /// `area` relative to the bounding box `max|V|·max|I|`.
    pub relative_area: f64,
}

impl LoopAnalysis {
    pub const PINCH_TOLERANCE_A: f64 = 1e-6;
    pub const HYSTERESIS_MIN_RELATIVE_AREA: f64 = 1e-6;

    pub fn max_origin_current(&self) -> f64 {
        self.origin_currents.iter().copied().fold(0.0, f64::max)
    }

    /// Both branches pass through the origin within tolerance.
    pub fn is_pinched(&self) -> bool {
        self.rising_crossings > 0
            && self.falling_crossings > 0
            && self.max_origin_current() <= Self::PINCH_TOLERANCE_A
    }

    pub fn is_hysteretic(&self) -> bool {
        self.relative_area > Self::HYSTERESIS_MIN_RELATIVE_AREA
    }
}

pub fn analyze_loop(trace: &[SweepSample], samples_per_period: usize) -> LoopAnalysis {
    let mut origin_currents = Vec::new();
    let mut rising = 0;
    let mut falling = 0;
    for w in trace.windows(2) {
        let (a, b) = (w[0], w[1]);
        let crosses = (a.applied_v < 0.0 && b.applied_v >= 0.0)
            || (a.applied_v > 0.0 && b.applied_v <= 0.0);
        if !crosses {
            continue;
        }
        if b.applied_v > a.applied_v {
            rising += 1;
        } else {
            falling += 1;
        }
        let span = b.applied_v - a.applied_v;
        let f = if span == 0.0 { 0.0 } else { -a.applied_v / span };
        let i0 = a.current_a + f * (b.current_a - a.current_a);
        origin_currents.push(i0.abs());
    }

    let last = if samples_per_period > 0 && trace.len() >= samples_per_period {
        &trace[trace.len() - samples_per_period..]
    } else {
        trace
    };
    // Lobes have opposite orientation, so integrate each half separately and
    // close it through the origin.
    let lobe = |positive: bool| -> f64 {
        let pts: Vec<(f64, f64)> = last
            .iter()
            .filter(|s| {
                if positive {
                    s.device_v >= 0.0
                } else {
                    s.device_v <= 0.0
                }
            })
            .map(|s| (s.device_v, s.current_a))
            .chain(std::iter::once((0.0, 0.0)))
            .collect();
        let mut acc = 0.0;
        for i in 0..pts.len() {
            let (v0, i0) = pts[i];
            let (v1, i1) = pts[(i + 1) % pts.len()];
            acc += v0 * i1 - v1 * i0;
        }
        (acc / 2.0).abs()
    };
    let area = lobe(true) + lobe(false);
    let v_max = last.iter().map(|s| s.device_v.abs()).fold(0.0, f64::max);
    let i_max = last.iter().map(|s| s.current_a.abs()).fold(0.0, f64::max);
    let relative_area = if v_max > 0.0 && i_max > 0.0 {
        area / (v_max * i_max)
    } else {
        0.0
    };
    LoopAnalysis {
        origin_currents,
        rising_crossings: rising,
        falling_crossings: falling,
        area,
        relative_area,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn resistance_boundaries() {
        let on = resistance(MemristorState::FULL_ON, &p());
        let off = resistance(MemristorState::FULL_OFF, &p());
        assert!((on - 25_000.0).abs() < 1e-9, "{on}");
        assert!((off - 350_000.0).abs() < 1e-9, "{off}");
        let mid = resistance(MemristorState::new(0.5).unwrap(), &p());
        assert!((mid - 46_666.666_666).abs() < 0.1, "{mid}");
    }

    #[test]
    fn eigenvalue_matches_normalised_conductance() {
        assert_eq!(eigenvalue(MemristorState::FULL_ON, &p()), 1.0);
        assert_eq!(eigenvalue(MemristorState::FULL_OFF, &p()), 0.0);
        let m = eigenvalue(MemristorState::new(0.5).unwrap(), &p());
        let expected = (1.0 / 46_666.666_666_667 - 1.0 / 350_000.0)
            / (1.0 / 25_000.0 - 1.0 / 350_000.0);
        assert!((m - expected).abs() < 1e-9);
        assert!((m - 0.5).abs() < 1e-9);
    }

    #[test]
    fn state_rejects_out_of_range() {
        assert!(MemristorState::new(1.01).is_err());
        assert!(MemristorState::new(-0.01).is_err());
        assert!(MemristorState::new(f64::NAN).is_err());
    }

    #[test]
    fn from_resistance_roundtrip() {
        let s = MemristorState::from_resistance(170_000.0, &p()).unwrap();
        assert!((resistance(s, &p()) - 170_000.0).abs() < 1e-6);
        assert_eq!(MemristorState::from_resistance(1e9, &p()).unwrap().x(), 0.0);
    }

    #[test]
    fn dead_zone_is_identity() {
        let s = MemristorState::new(0.3).unwrap();
        assert_eq!(step(s, 0.0, 1.0, &p()).unwrap(), s);
        assert_eq!(step(s, p().v_tp / 2.0, 1e-3, &p()).unwrap(), s);
        assert_eq!(step(s, p().v_tn / 2.0, 1e-3, &p()).unwrap(), s);
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let s = MemristorState::new(0.3).unwrap();
        assert!(step(s, f64::NAN, 1e-6, &p()).is_err());
        assert!(step(s, 0.5, f64::INFINITY, &p()).is_err());
        assert!(step(s, 0.5, 0.0, &p()).is_err());
        assert!(step(s, 0.5, -1e-6, &p()).is_err());
    }

    #[test]
    fn boundaries_can_be_left() {
        let on = step(MemristorState::FULL_OFF, 0.6, 1e-3, &p()).unwrap();
        assert!(on.x() > 0.0);
        let off = step(MemristorState::FULL_ON, -0.6, 1e-3, &p()).unwrap();
        assert!(off.x() < 1.0);
        // and pushing into a boundary leaves it there
        assert_eq!(step(MemristorState::FULL_ON, 0.8, 1.0, &p()).unwrap().x(), 1.0);
        assert_eq!(step(MemristorState::FULL_OFF, -0.8, 1.0, &p()).unwrap().x(), 0.0);
    }

    #[test]
    fn zero_amplitude_train_is_identity() {
        let s = MemristorState::new(0.42).unwrap();
        let t = PulseTrain::new(0.0, 10e-6, 0.5, 40).unwrap();
        assert_eq!(apply_pulse_train(s, &t, &p()).unwrap(), s);
        assert_eq!(apply_pulse_train(s, &PulseTrain::null(), &p()).unwrap(), s);
    }

    #[test]
    fn train_halves_compose() {
        for params in [
            p(),
            DeviceParams {
                window_exponent: 2.0,
                ..p()
            },
        ] {
            let s = MemristorState::new(0.1).unwrap();
            let full = PulseTrain::new(0.6, 10e-6, 0.5, 20).unwrap();
            let half = PulseTrain { count: 10, ..full };
            let a = apply_pulse_train(s, &full, &params).unwrap();
            let b = apply_pulse_train(
                apply_pulse_train(s, &half, &params).unwrap(),
                &half,
                &params,
            )
            .unwrap();
            assert!((a.x() - b.x()).abs() <= 1e-12 * a.x().max(1e-300), "{a:?} {b:?}");
        }
    }

    #[test]
    fn train_validation() {
        assert!(PulseTrain::new(0.5, 0.0, 0.5, 1).is_err());
        assert!(PulseTrain::new(0.5, 1e-6, 0.0, 1).is_err());
        assert!(PulseTrain::new(0.5, 1e-6, 1.5, 1).is_err());
        assert!(PulseTrain::new(0.5, 1e-6, 0.5, 0).is_err());
        let t = PulseTrain::new(0.5, 10e-6, 0.25, 4).unwrap();
        assert!((t.period() - 40e-6).abs() < 1e-18);
        assert!((t.duration() - 160e-6).abs() < 1e-18);
        assert!((t.on_time() - 40e-6).abs() < 1e-18);
    }

    #[test]
    fn params_validation() {
        assert!(p().validate().is_ok());
        let bad = DeviceParams {
            r_on: 400_000.0,
            ..p()
        };
        assert!(bad.validate().is_err());
        let bad = DeviceParams { v_tn: 0.1, ..p() };
        assert!(bad.validate().is_err());
        let bad = DeviceParams { alpha_n: 0.0, ..p() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_without_series_resistor_sees_full_voltage() {
        let spec = SweepSpec {
            series_resistance: 0.0,
            samples_per_period: 64,
            periods: 1,
            ..SweepSpec::default()
        };
        let trace = iv_sweep(&spec, &p(), MemristorState::new(0.5).unwrap()).unwrap();
        assert_eq!(trace.len(), 64);
        for s in &trace {
            assert!((s.device_v - s.applied_v).abs() <= 1e-15 * s.applied_v.abs().max(1.0));
        }
    }

    #[test]
    fn sub_threshold_sweep_is_single_valued() {
        let spec = SweepSpec {
            peak_to_peak: 0.2,
            series_resistance: 0.0,
            ..SweepSpec::default()
        };
        let x0 = MemristorState::new(0.3).unwrap();
        let trace = iv_sweep(&spec, &p(), x0).unwrap();
        assert!(trace.iter().all(|s| s.x == 0.3));
        let a = analyze_loop(&trace, spec.samples_per_period as usize);
        assert!(a.is_pinched());
        assert!(!a.is_hysteretic(), "{a:?}");
    }

    #[test]
    fn default_sweep_is_pinched_and_hysteretic() {
        let spec = SweepSpec::default();
        let trace = iv_sweep(&spec, &p(), MemristorState::FULL_OFF).unwrap();
        let a = analyze_loop(&trace, spec.samples_per_period as usize);
        assert!(a.is_pinched(), "{a:?}");
        assert!(a.is_hysteretic(), "{a:?}");
    }
}
