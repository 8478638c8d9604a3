//! Grasp controller state machine.

use std::fmt;

use crate::encoding::{TactileAttribute, TactileKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub control_step_s: f64,
    /// Gain at or above which a hazard triggers the pain reflex.
    pub pain_gain: f64,
    /// Memristor resistance marking the amplified (nociceptive) state (Ω).
    pub nociceptive_r: f64,
    /// Consecutive settled mild steps before entering `StableHold`.
    pub stable_steps: u32,
    pub slip_grip_factor: f64,
    pub slip_refractory_s: f64,
    /// Time spent in `PainReflex` before the regrasp is issued.
    pub regrasp_delay_s: f64,
    /// Time constant of the grip actuator.
    pub grip_tau_s: f64,
    pub f_max: f64,
    /// |dF/dt| below which a mild window counts as settled (N/s).
    pub stable_rate: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            control_step_s: 0.001,
            pain_gain: 5.0,
            nociceptive_r: 35_000.0,
            stable_steps: 50,
            slip_grip_factor: 1.3,
            slip_refractory_s: 0.2,
            regrasp_delay_s: 0.5,
            grip_tau_s: 0.05,
            f_max: 20.0,
            stable_rate: 0.5,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.control_step_s,
            self.pain_gain,
            self.nociceptive_r,
            self.grip_tau_s,
            self.f_max,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("controller step, gains, tau and f_max must be positive"));
        }
        if !(self.slip_grip_factor >= 1.0) {
            return Err(Error::config("slip_grip_factor must be >= 1"));
        }
        if !(self.slip_refractory_s >= 0.0 && self.regrasp_delay_s >= 0.0 && self.stable_rate >= 0.0) {
            return Err(Error::config("controller delays must be non-negative"));
        }
        if self.stable_steps == 0 {
            return Err(Error::config("stable_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Approach,
    Contact,
    PainReflex,
    Regrasp,
    StableHold,
    SlipRecovery,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Approach => "approach",
            Phase::Contact => "contact",
            Phase::PainReflex => "pain_reflex",
            Phase::Regrasp => "regrasp",
            Phase::StableHold => "stable_hold",
            Phase::SlipRecovery => "slip_recovery",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    None,
    /// Stop tightening and hold the current command.
    PainReflex,
    /// Change grasp posture; the driver switches to the regrasp profile.
    Regrasp,
    IncreaseGrip { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub phase: Phase,
    /// Commanded grip force (N), kept in `[0, f_max]`.
    pub grip_force_cmd: f64,
    /// Command restored on regrasp.
    pub nominal_grip: f64,
    /// Time of the step about to be processed.
    pub t: f64,
    pub phase_since: f64,
    pub settled_steps: u32,
    /// Set once a slip has been seen during a hold.
    pub slippery: bool,
    pub last_grip_increase: Option<f64>,
}

impl ControllerState {
    pub fn new(nominal_grip: f64, cfg: &ControllerConfig) -> Result<Self> {
        if !(0.0..=cfg.f_max).contains(&nominal_grip) {
            return Err(Error::invalid(format!(
                "nominal grip {nominal_grip} N outside [0, {}]",
                cfg.f_max
            )));
        }
        Ok(ControllerState {
            phase: Phase::Approach,
            grip_force_cmd: nominal_grip,
            nominal_grip,
            t: 0.0,
            phase_since: 0.0,
            settled_steps: 0,
            slippery: false,
            last_grip_increase: None,
        })
    }

    fn enter(&mut self, phase: Phase) {
        if self.phase != phase {
            self.phase = phase;
            self.phase_since = self.t;
            self.settled_steps = 0;
        }
    }
}

/// Advance the controller by one control step.
pub fn controller_step(
    state: &ControllerState,
    attr: &TactileAttribute,
    gain: f64,
    cfg: &ControllerConfig,
) -> (ControllerState, Action) {
    let mut s = *state;
    let mut action = Action::None;

    let settled = attr.kind == TactileKind::Mild && attr.spike_rate < cfg.stable_rate;
    s.settled_steps = if settled { s.settled_steps + 1 } else { 0 };
    let sustained = s.settled_steps >= cfg.stable_steps;

    match (s.phase, attr.kind) {
        (Phase::PainReflex, _) => {
            if s.t - s.phase_since >= cfg.regrasp_delay_s - 1e-12 {
                s.enter(Phase::Regrasp);
                s.grip_force_cmd = s.nominal_grip;
                action = Action::Regrasp;
            }
        }
        (_, TactileKind::NoContact) => s.enter(Phase::Approach),
        (Phase::Approach, _) => s.enter(Phase::Contact),
        (Phase::Contact, k) if k.is_hazard() && gain >= cfg.pain_gain => {
            s.enter(Phase::PainReflex);
            action = Action::PainReflex;
        }
        (Phase::StableHold, TactileKind::SlipSpike) => {
            let refractory = s
                .last_grip_increase
                .is_some_and(|t| s.t - t < cfg.slip_refractory_s);
            s.enter(Phase::SlipRecovery);
            s.slippery = true;
            if !refractory {
                let from = s.grip_force_cmd;
                let to = (from * cfg.slip_grip_factor).min(cfg.f_max);
                s.grip_force_cmd = to;
                s.last_grip_increase = Some(s.t);
                action = Action::IncreaseGrip { from, to };
            }
        }
        (Phase::StableHold | Phase::SlipRecovery, k) if k.is_hazard() => {
            s.enter(Phase::Contact)
        }
        (Phase::Contact | Phase::SlipRecovery | Phase::Regrasp, TactileKind::Mild) if sustained => {
            s.enter(Phase::StableHold)
        }
        _ => {}
    }
    if s.phase != state.phase {
        s.settled_steps = 0;
    }
    s.t = state.t + cfg.control_step_s;
    (s, action)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(kind: TactileKind) -> TactileAttribute {
        TactileAttribute {
            kind,
            magnitude: 2.0,
            spike_rate: 0.0,
        }
    }

    fn in_phase(phase: Phase) -> ControllerState {
        let mut s = ControllerState::new(2.0, &ControllerConfig::default()).unwrap();
        s.phase = phase;
        s
    }

    #[test]
    fn stable_hold_fixpoint() {
        let cfg = ControllerConfig::default();
        let s = in_phase(Phase::StableHold);
        let (n, a) = controller_step(&s, &attr(TactileKind::Mild), 1.0, &cfg);
        assert_eq!(n.phase, Phase::StableHold);
        assert_eq!(a, Action::None);
        assert_eq!(n.grip_force_cmd, s.grip_force_cmd);
    }

    #[test]
    fn hazard_with_high_gain_triggers_reflex_then_regrasp() {
        let cfg = ControllerConfig::default();
        let s = in_phase(Phase::Contact);
        let (mut n, a) = controller_step(&s, &attr(TactileKind::Hazard), 5.2, &cfg);
        assert_eq!(n.phase, Phase::PainReflex);
        assert_eq!(a, Action::PainReflex);

        let (low, _) = controller_step(&s, &attr(TactileKind::Hazard), 4.9, &cfg);
        assert_eq!(low.phase, Phase::Contact);

        let mut seen = None;
        for i in 0..1000 {
            let (m, a) = controller_step(&n, &attr(TactileKind::Hazard), 8.0, &cfg);
            n = m;
            if a == Action::Regrasp {
                seen = Some(i);
                break;
            }
        }
        let steps = seen.expect("regrasp issued") + 1;
        assert_eq!(steps, (cfg.regrasp_delay_s / cfg.control_step_s).round() as usize);
        assert_eq!(n.phase, Phase::Regrasp);
    }

    #[test]
    fn slip_increases_grip_in_one_step() {
        let cfg = ControllerConfig::default();
        let s = in_phase(Phase::StableHold);
        let (n, a) = controller_step(&s, &attr(TactileKind::SlipSpike), 1.0, &cfg);
        assert_eq!(n.phase, Phase::SlipRecovery);
        assert!((n.grip_force_cmd - 2.6).abs() < 1e-12);
        assert_eq!(a, Action::IncreaseGrip { from: 2.0, to: n.grip_force_cmd });
        assert!(n.slippery);

        let mut again = n;
        again.phase = Phase::StableHold;
        let (m, a) = controller_step(&again, &attr(TactileKind::SlipSpike), 1.0, &cfg);
        assert_eq!(a, Action::None);
        assert_eq!(m.grip_force_cmd, n.grip_force_cmd);
    }

    #[test]
    fn grip_capped() {
        let cfg = ControllerConfig::default();
        let mut s = in_phase(Phase::StableHold);
        s.grip_force_cmd = 19.0;
        let (n, _) = controller_step(&s, &attr(TactileKind::SlipSpike), 1.0, &cfg);
        assert_eq!(n.grip_force_cmd, cfg.f_max);
    }

    #[test]
    fn mild_must_be_sustained() {
        let cfg = ControllerConfig::default();
        let mut s = in_phase(Phase::Contact);
        for _ in 0..cfg.stable_steps - 1 {
            s = controller_step(&s, &attr(TactileKind::Mild), 1.0, &cfg).0;
            assert_eq!(s.phase, Phase::Contact);
        }
        s = controller_step(&s, &attr(TactileKind::Mild), 1.0, &cfg).0;
        assert_eq!(s.phase, Phase::StableHold);
    }

    #[test]
    fn reflex_only_from_contact() {
        let cfg = ControllerConfig::default();
        for phase in [Phase::Approach, Phase::StableHold, Phase::SlipRecovery, Phase::Regrasp] {
            let (n, a) = controller_step(&in_phase(phase), &attr(TactileKind::Hazard), 8.0, &cfg);
            assert_ne!(n.phase, Phase::PainReflex);
            assert_eq!(a, Action::None);
        }
        assert!(ControllerState::new(25.0, &cfg).is_err());
    }
}
