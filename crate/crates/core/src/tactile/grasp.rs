//! The per-step grasp loop, its trace and scenario verification.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::config::Config;
use crate::device::{apply_pulse_train, resistance, MemristorState};
use crate::encoding::{extract_tactile, normalize_toward_mid, scheme_for, TactileKind};
use crate::eval;
use crate::tactile::controller::{controller_step, Action, ControllerState, Phase};
use crate::tactile::scenario::{GraspScenario, Profile};
use crate::tactile::{gain_from_resistance, piezo_resistance, SlipDetector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    Contact,
    HazardOnset,
    Sensitized,
    /// Memristor fell below the nociceptive resistance.
    Amplified,
    PainReflex,
    Regrasp,
    StableHold,
    Slip,
    GripIncrease,
    GainClamped,
}

impl Marker {
    pub const ALL: [Marker; 10] = [
        Marker::Contact,
        Marker::HazardOnset,
        Marker::Sensitized,
        Marker::Amplified,
        Marker::PainReflex,
        Marker::Regrasp,
        Marker::StableHold,
        Marker::Slip,
        Marker::GripIncrease,
        Marker::GainClamped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Marker::Contact => "contact",
            Marker::HazardOnset => "hazard_onset",
            Marker::Sensitized => "sensitized",
            Marker::Amplified => "amplified",
            Marker::PainReflex => "pain_reflex",
            Marker::Regrasp => "regrasp",
            Marker::StableHold => "stable_hold",
            Marker::Slip => "slip",
            Marker::GripIncrease => "grip_increase",
            Marker::GainClamped => "gain_clamped",
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Marker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Marker::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown marker `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Sensed force (N).
    pub force: f64,
    pub piezo_r: f64,
    pub mem_r: f64,
    pub gain: f64,
    pub gain_clamped: bool,
    /// Unity-gain sensor response (V).
    pub response: f64,
    /// `gain · response`.
    pub output: f64,
    pub force_cmd: f64,
    pub phase: Phase,
    pub kind: TactileKind,
    pub markers: Vec<Marker>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraspTrace {
    pub name: String,
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl GraspTrace {
    pub const CSV_HEADER: &'static str = "t_s,piezo_r,mem_r,gain,force_cmd,event";

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(row index, marker)` in time order.
    pub fn markers(&self) -> impl Iterator<Item = (usize, Marker)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.markers.iter().map(move |m| (i, *m)))
    }

    pub fn first(&self, marker: Marker) -> Option<usize> {
        self.markers().find(|(_, m)| *m == marker).map(|(i, _)| i)
    }

    /// Index of the row at time `t`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let last = self.rows.last().ok_or_else(|| Error::invalid("empty trace"))?;
        let t0 = self.rows[0].t;
        if !(t >= t0 - 1e-9 && t <= last.t + 1e-9) {
            return Err(Error::invalid(format!(
                "t={t} outside trace [{t0}, {}]",
                last.t
            )));
        }
        let i = ((t - t0) / self.dt).round() as usize;
        Ok(i.min(self.rows.len() - 1))
    }

    /// Rows `[start, start + len)` as a new trace.
    pub fn window(&self, start: usize, len: usize) -> GraspTrace {
        let end = (start + len).min(self.rows.len());
        GraspTrace {
            name: self.name.clone(),
            dt: self.dt,
            rows: self.rows[start.min(end)..end].to_vec(),
        }
    }

    /// Same stimulus with the amplifier fixed at unity gain.
    pub fn unity_baseline(&self) -> GraspTrace {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.gain = 1.0;
            r.gain_clamped = false;
            r.output = r.response;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let events: Vec<&str> = r.markers.iter().map(|m| m.name()).collect();
            s.push_str(&format!(
                "{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{}\n",
                r.t,
                r.piezo_r,
                r.mem_r,
                r.gain,
                r.force_cmd,
                events.join(";")
            ));
        }
        s
    }
}

/// Incremental grasp loop. Each call to [`GraspLoop::step`] is one control
/// step: sample force, read the film, classify, pulse the memristor, read
/// the gain and advance the controller.
#[derive(Debug, Clone)]
pub struct GraspLoop {
    cfg: Config,
    scenario: GraspScenario,
    dt: f64,
    k: usize,
    profile: Profile,
    profile_t0: f64,
    grip: f64,
    window: VecDeque<(f64, f64)>,
    window_len: usize,
    mem: MemristorState,
    ctrl: ControllerState,
    slip: SlipDetector,
    prev_kind: TactileKind,
    prev_mem_r: f64,
    prev_clamped: bool,
}

impl GraspLoop {
    /// `cfg` is the run configuration before the scenario's own overrides.
    pub fn new(scenario: &GraspScenario, cfg: &Config) -> Result<Self> {
        let cfg = cfg.with_overrides(&scenario.overrides)?;
        let dt = cfg.controller.control_step_s;
        let r0 = scenario
            .initial_mem_r
            .unwrap_or(cfg.table.bands.mid_center);
        let mem = MemristorState::from_resistance(r0, &cfg.device)?;
        let ctrl = ControllerState::new(scenario.grip_nominal, &cfg.controller)?;
        let window_len = ((cfg.tactile.window_s / dt).round() as usize).max(2);
        Ok(GraspLoop {
            profile: Profile::new(&scenario.events),
            profile_t0: 0.0,
            grip: scenario.grip_nominal,
            window: VecDeque::with_capacity(window_len + 1),
            window_len,
            prev_mem_r: resistance(mem, &cfg.device),
            mem,
            ctrl,
            slip: SlipDetector::default(),
            prev_kind: TactileKind::NoContact,
            prev_clamped: false,
            scenario: scenario.clone(),
            cfg,
            dt,
            k: 0,
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn controller(&self) -> &ControllerState {
        &self.ctrl
    }

    pub fn state(&self) -> MemristorState {
        self.mem
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.dt
    }

    /// One scripted step: the force comes from the scenario profile,
    /// scaled by the grip actuator when the scenario is closed-loop.
    pub fn step(&mut self) -> Result<TraceRow> {
        let t = self.time();
        let level = self.profile.sample(t - self.profile_t0, self.dt);
        let force = if self.scenario.closed_loop && self.scenario.grip_nominal > 0.0 {
            let a = 1.0 - (-self.dt / self.cfg.controller.grip_tau_s).exp();
            self.grip += (self.ctrl.grip_force_cmd - self.grip) * a;
            level * self.grip / self.scenario.grip_nominal
        } else {
            level
        };
        let row = self.step_with_force(force)?;
        if row.markers.contains(&Marker::Regrasp) {
            self.profile.switch_to(&self.scenario.regrasp_events);
            self.profile_t0 = self.time();
        }
        Ok(row)
    }

    /// One step driven by an externally sampled force.
    pub fn step_with_force(&mut self, force: f64) -> Result<TraceRow> {
        let cfg = &self.cfg;
        let t = self.time();
        let piezo_r = piezo_resistance(force, &cfg.piezo)?;

        self.window.push_back((t, force));
        while self.window.len() > self.window_len {
            self.window.pop_front();
        }
        self.window.make_contiguous();
        let mem_r_before = resistance(self.mem, &cfg.device);
        let attr = extract_tactile(self.window.as_slices().0, mem_r_before, &cfg.tactile)?;

        let train = if self.ctrl.slippery && !attr.kind.is_hazard() {
            normalize_toward_mid(self.mem, &cfg.device, &cfg.table)?
        } else {
            scheme_for(attr, mem_r_before, &cfg.table)?
        };
        self.mem = apply_pulse_train(self.mem, &train, &cfg.device)?;
        let mem_r = resistance(self.mem, &cfg.device);
        let gain = gain_from_resistance(mem_r, &cfg.gain, &cfg.device)?;

        self.ctrl.t = t;
        let before = self.ctrl;
        let (next, action) = controller_step(&before, &attr, gain.value, &cfg.controller);
        self.ctrl = next;

        let mut markers = Vec::new();
        if before.phase == Phase::Approach && next.phase == Phase::Contact {
            markers.push(Marker::Contact);
        }
        if attr.kind.is_hazard() && !self.prev_kind.is_hazard() {
            markers.push(Marker::HazardOnset);
        }
        if attr.kind == TactileKind::PersistentHazard && self.prev_kind != TactileKind::PersistentHazard {
            markers.push(Marker::Sensitized);
        }
        let noci = cfg.controller.nociceptive_r;
        if mem_r < noci && self.prev_mem_r >= noci {
            markers.push(Marker::Amplified);
        }
        match action {
            Action::PainReflex => markers.push(Marker::PainReflex),
            Action::Regrasp => markers.push(Marker::Regrasp),
            _ => {}
        }
        if next.phase == Phase::StableHold && before.phase != Phase::StableHold {
            markers.push(Marker::StableHold);
        }
        if self.slip.push(t, piezo_r, &cfg.slip).is_some() {
            markers.push(Marker::Slip);
        }
        if let Action::IncreaseGrip { .. } = action {
            markers.push(Marker::GripIncrease);
        }
        if gain.clamped && !self.prev_clamped {
            markers.push(Marker::GainClamped);
        }

        self.prev_kind = attr.kind;
        self.prev_mem_r = mem_r;
        self.prev_clamped = gain.clamped;
        self.k += 1;

        let response = cfg.piezo.response(piezo_r);
        Ok(TraceRow {
            t,
            force,
            piezo_r,
            mem_r,
            gain: gain.value,
            gain_clamped: gain.clamped,
            response,
            output: gain.value * response,
            force_cmd: next.grip_force_cmd,
            phase: next.phase,
            kind: attr.kind,
            markers,
        })
    }
}

/// Run `scenario` to completion.
pub fn run_scenario(scenario: &GraspScenario, cfg: &Config) -> Result<GraspTrace> {
    let mut lp = GraspLoop::new(scenario, cfg)?;
    let n = scenario.steps(lp.dt);
    if n == 0 {
        return Err(Error::invalid(format!(
            "scenario `{}` produces an empty trace (duration_s = {})",
            scenario.name, scenario.duration_s
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(lp.step()?);
    }
    Ok(GraspTrace {
        name: scenario.name.clone(),
        dt: lp.dt,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    pub fn to_text(&self) -> String {
        self.outcomes
            .iter()
            .map(|o| {
                format!(
                    "{} {}: {}\n",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.detail
                )
            })
            .collect()
    }
}

/// Match expected markers in order and evaluate the scenario's checks.
pub fn verify(trace: &GraspTrace, scenario: &GraspScenario) -> ScenarioReport {
    let mut outcomes = Vec::new();
    let found: Vec<(usize, Marker)> = trace.markers().collect();
    let mut cursor = 0;
    for (deadline, marker) in &scenario.expected_markers {
        let hit = found[cursor..].iter().position(|(_, m)| m == marker);
        let (passed, detail) = match hit {
            Some(off) => {
                let (row, _) = found[cursor + off];
                cursor += off + 1;
                let t = trace.rows[row].t;
                (
                    t <= *deadline + 1e-9,
                    format!("at t={t:.3} s (deadline {deadline} s)"),
                )
            }
            None => (false, format!("not found in order (deadline {deadline} s)")),
        };
        outcomes.push(CheckOutcome {
            name: format!("marker {marker}"),
            passed,
            detail,
        });
    }

    let c = &scenario.checks;
    let final_r = trace.rows.last().map(|r| r.mem_r).unwrap_or(f64::NAN);
    if let Some(min) = c.final_mem_r_min {
        outcomes.push(CheckOutcome {
            name: "final_mem_r_min".into(),
            passed: final_r > min,
            detail: format!("final mem_r {final_r:.0} Ω, required > {min:.0} Ω"),
        });
    }
    if let Some(max) = c.final_mem_r_max {
        outcomes.push(CheckOutcome {
            name: "final_mem_r_max".into(),
            passed: final_r < max,
            detail: format!("final mem_r {final_r:.0} Ω, required < {max:.0} Ω"),
        });
    }
    if let Some((target, tol)) = c.final_mem_r_near {
        let rel = (final_r - target).abs() / target;
        outcomes.push(CheckOutcome {
            name: "final_mem_r_near".into(),
            passed: rel <= tol,
            detail: format!(
                "final mem_r {final_r:.0} Ω, {:.1}% from {target:.0} Ω (tolerance {:.0}%)",
                100.0 * rel,
                100.0 * tol
            ),
        });
    }
    if let Some(a) = c.adaptation {
        let (passed, detail) = match eval::adaptation_level(trace, a.at_s) {
            Ok(level) => (
                (level - a.target).abs() <= a.tol,
                format!(
                    "adaptation {level:.2}% at t={} s, required {}±{}",
                    a.at_s, a.target, a.tol
                ),
            ),
            Err(e) => (false, e.to_string()),
        };
        outcomes.push(CheckOutcome {
            name: "adaptation".into(),
            passed,
            detail,
        });
    }
    if let Some(min) = c.amplified_gain_min {
        let (passed, detail) = match trace.first(Marker::Amplified) {
            Some(i) => {
                let g = trace.rows[i].gain;
                (g >= min, format!("gain {g:.3} at amplified marker, required >= {min}"))
            }
            None => (false, "no amplified marker".into()),
        };
        outcomes.push(CheckOutcome {
            name: "amplified_gain_min".into(),
            passed,
            detail,
        });
    }
    if let Some(max_steps) = c.slip_response_steps {
        let slips: Vec<usize> = found
            .iter()
            .filter(|(_, m)| *m == Marker::Slip)
            .map(|(i, _)| *i)
            .collect();
        let mut worst: Option<usize> = None;
        let mut missing = 0;
        for &s in &slips {
            match found
                .iter()
                .find(|(i, m)| *m == Marker::GripIncrease && *i >= s)
            {
                Some((i, _)) => worst = Some(worst.unwrap_or(0).max(i - s)),
                None => missing += 1,
            }
        }
        let passed = !slips.is_empty() && missing == 0 && worst.is_some_and(|w| w <= max_steps);
        outcomes.push(CheckOutcome {
            name: "slip_response".into(),
            passed,
            detail: format!(
                "{} slip(s), slowest grip increase after {} step(s), {missing} without response, required <= {max_steps}",
                slips.len(),
                worst.map_or("-".to_string(), |w| w.to_string()),
            ),
        });
    }
    ScenarioReport { outcomes }
}

/// Constant hazardous force from t = 0, open loop.
pub fn nociception_scenario(force: f64, steps: usize) -> GraspScenario {
    let text = format!(
        "[scenario]\nname = nociception\nduration_s = {}\nclosed_loop = false\n\
         [events]\n0.0, set, {force}\n",
        steps as f64 * 1e-3
    );
    GraspScenario::parse(&text, "<nociception>").expect("built-in scenario parses")
}

/// Constant mild force from t = 0, open loop, with the slow or fast
/// adaptation train.
pub fn adaptation_scenario(force: f64, steps: usize, fast: bool) -> GraspScenario {
    let template = if fast { "adapt_fast" } else { "adapt_slow" };
    let text = format!(
        "[scenario]\nname = adaptation_{}\nduration_s = {}\nclosed_loop = false\n\
         [events]\n0.0, set, {force}\n[schemes]\nmild.* = fixed:{template}\n",
        if fast { "fast" } else { "slow" },
        steps as f64 * 1e-3
    );
    GraspScenario::parse(&text, "<adaptation>").expect("built-in scenario parses")
}
