//! Grasp scenario files and the scripted force profile.
//!
//! A scenario uses the configuration file syntax. `[scenario]` holds
//! scalar settings, `[events]` and `[regrasp]` hold `t_s, directive, value`
//! lines (regrasp times are relative to the regrasp action), `[markers]`
//! holds `deadline_s, marker` lines that must appear in order, and
//! `[checks]` holds end-of-run assertions. Any other section overrides the
//! run configuration for this scenario.

use std::path::Path;

use crate::config::{Document, Entry, Section};
use crate::tactile::grasp::Marker;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    /// Ramp speed used by later `target` and `slip` recoveries (N/s).
    RampRate(f64),
    /// Ramp toward this level.
    Target(f64),
    /// Jump to this level.
    Set(f64),
    /// Drop by this amount, then ramp back to the current target.
    Slip(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEvent {
    pub t: f64,
    pub directive: Directive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationCheck {
    pub at_s: f64,
    pub target: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Checks {
    pub final_mem_r_min: Option<f64>,
    pub final_mem_r_max: Option<f64>,
    /// `(target, relative tolerance)`.
    pub final_mem_r_near: Option<(f64, f64)>,
    pub adaptation: Option<AdaptationCheck>,
    /// Minimum gain at the `amplified` marker.
    pub amplified_gain_min: Option<f64>,
    /// Maximum steps from each `slip` marker to the next `grip_increase`.
    pub slip_response_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspScenario {
    pub name: String,
    pub duration_s: f64,
    pub grip_nominal: f64,
    /// Starting memristor resistance; `None` starts at the mid-band center.
    pub initial_mem_r: Option<f64>,
    /// When false the sensed force is the profile itself and the grip
    /// command has no effect.
    pub closed_loop: bool,
    pub events: Vec<ProfileEvent>,
    pub regrasp_events: Vec<ProfileEvent>,
    pub expected_markers: Vec<(f64, Marker)>,
    pub checks: Checks,
    /// Configuration sections carried by the scenario.
    pub overrides: Document,
}

impl GraspScenario {
    pub fn parse(text: &str, origin: impl Into<std::path::PathBuf>) -> Result<Self> {
        let doc = Document::parse(text, origin)?;
        let mut sc = GraspScenario {
            name: String::new(),
            duration_s: 0.0,
            grip_nominal: 2.0,
            initial_mem_r: None,
            closed_loop: true,
            events: Vec::new(),
            regrasp_events: Vec::new(),
            expected_markers: Vec::new(),
            checks: Checks::default(),
            overrides: Document {
                origin: doc.origin.clone(),
                sections: Vec::new(),
            },
        };
        for section in &doc.sections {
            match section.name.as_str() {
                "scenario" => sc.parse_header(&doc, section)?,
                "events" => sc.events.extend(parse_events(&doc, section)?),
                "regrasp" => sc.regrasp_events.extend(parse_events(&doc, section)?),
                "markers" => sc.parse_markers(&doc, section)?,
                "checks" => sc.parse_checks(&doc, section)?,
                _ => sc.overrides.sections.push(section.clone()),
            }
        }
        for list in [&sc.events, &sc.regrasp_events] {
            if list.windows(2).any(|w| w[1].t < w[0].t) {
                return Err(Error::config(format!(
                    "{}: profile events are not time-sorted",
                    doc.origin.display()
                )));
            }
        }
        if sc.name.is_empty() {
            sc.name = doc
                .origin
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
        }
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GraspScenario::parse(&text, path)
    }

    pub fn steps(&self, dt: f64) -> usize {
        (self.duration_s / dt).round() as usize
    }

    fn parse_header(&mut self, doc: &Document, section: &Section) -> Result<()> {
        for entry in &section.entries {
            let (key, value, line) = pair(doc, entry)?;
            let num = || number(doc, value, line);
            match key {
                "name" => self.name = value.to_string(),
                "duration_s" => self.duration_s = num()?,
                "grip_nominal" => self.grip_nominal = num()?,
                "initial_mem_r" => self.initial_mem_r = Some(num()?),
                "closed_loop" => {
                    self.closed_loop = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(doc.parse_error(line, "closed_loop must be true or false")),
                    }
                }
                _ => return Err(doc.parse_error(line, format!("unknown scenario key `{key}`"))),
            }
        }
        if !(self.duration_s >= 0.0) || !(self.grip_nominal >= 0.0) {
            return Err(Error::config("duration_s and grip_nominal must be non-negative"));
        }
        Ok(())
    }

    fn parse_markers(&mut self, doc: &Document, section: &Section) -> Result<()> {
        for entry in &section.entries {
            let (text, line) = raw(doc, entry)?;
            let parts: Vec<&str> = text.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(doc.parse_error(line, "expected `deadline_s, marker`"));
            }
            let deadline = number(doc, parts[0], line)?;
            let marker: Marker = parts[1]
                .parse()
                .map_err(|_| doc.parse_error(line, format!("unknown marker `{}`", parts[1])))?;
            self.expected_markers.push((deadline, marker));
        }
        Ok(())
    }

    fn parse_checks(&mut self, doc: &Document, section: &Section) -> Result<()> {
        let mut near_target = None;
        let mut near_tol = None;
        let (mut at, mut target, mut tol) = (None, None, None);
        for entry in &section.entries {
            let (key, value, line) = pair(doc, entry)?;
            let v = number(doc, value, line)?;
            match key {
                "final_mem_r_min" => self.checks.final_mem_r_min = Some(v),
                "final_mem_r_max" => self.checks.final_mem_r_max = Some(v),
                "final_mem_r_target" => near_target = Some(v),
                "final_mem_r_tol" => near_tol = Some(v),
                "adaptation_at_s" => at = Some(v),
                "adaptation_target" => target = Some(v),
                "adaptation_tol" => tol = Some(v),
                "amplified_gain_min" => self.checks.amplified_gain_min = Some(v),
                "slip_response_steps" => self.checks.slip_response_steps = Some(v as usize),
                _ => return Err(doc.parse_error(line, format!("unknown check `{key}`"))),
            }
        }
        match (near_target, near_tol) {
            (Some(t), Some(r)) => self.checks.final_mem_r_near = Some((t, r)),
            (None, None) => {}
            _ => return Err(Error::config("final_mem_r_target and final_mem_r_tol go together")),
        }
        match (at, target, tol) {
            (Some(at_s), Some(target), Some(tol)) => {
                self.checks.adaptation = Some(AdaptationCheck { at_s, target, tol })
            }
            (None, None, None) => {}
            _ => {
                return Err(Error::config(
                    "adaptation_at_s, adaptation_target and adaptation_tol go together",
                ))
            }
        }
        Ok(())
    }
}

fn pair<'a>(doc: &Document, entry: &'a Entry) -> Result<(&'a str, &'a str, usize)> {
    match entry {
        Entry::Pair { key, value, line } => Ok((key, value, *line)),
        Entry::Raw { line, .. } => Err(doc.parse_error(*line, "expected `key = value`")),
    }
}

fn raw<'a>(doc: &Document, entry: &'a Entry) -> Result<(&'a str, usize)> {
    match entry {
        Entry::Raw { text, line } => Ok((text, *line)),
        Entry::Pair { line, .. } => Err(doc.parse_error(*line, "unexpected `=` in list section")),
    }
}

fn number(doc: &Document, s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| doc.parse_error(line, format!("expected a number, got `{s}`")))
}

fn parse_events(doc: &Document, section: &Section) -> Result<Vec<ProfileEvent>> {
    let mut out = Vec::new();
    for entry in &section.entries {
        let (text, line) = raw(doc, entry)?;
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(doc.parse_error(line, "expected `t_s, directive, value`"));
        }
        let t = number(doc, parts[0], line)?;
        let v = number(doc, parts[2], line)?;
        if t < 0.0 || v < 0.0 {
            return Err(doc.parse_error(line, "event time and value must be non-negative"));
        }
        let directive = match parts[1] {
            "ramp_rate" => Directive::RampRate(v),
            "target" => Directive::Target(v),
            "set" => Directive::Set(v),
            "slip" => Directive::Slip(v),
            other => {
                return Err(Error::config(format!(
                    "{}:{line}: unknown directive `{other}`",
                    doc.origin.display()
                )))
            }
        };
        out.push(ProfileEvent { t, directive });
    }
    Ok(out)
}

/// Force profile stepped at a fixed interval. Between events the level
/// ramps toward the target; events due at a sample apply after the ramp.
#[derive(Debug, Clone)]
pub struct Profile {
    events: Vec<ProfileEvent>,
    next: usize,
    level: f64,
    target: f64,
    rate: f64,
    started: bool,
}

impl Profile {
    pub fn new(events: &[ProfileEvent]) -> Self {
        Profile {
            events: events.to_vec(),
            next: 0,
            level: 0.0,
            target: 0.0,
            rate: 0.0,
            started: false,
        }
    }

    /// Continue from the current level with a fresh event list.
    pub fn switch_to(&mut self, events: &[ProfileEvent]) {
        self.events = events.to_vec();
        self.next = 0;
        self.target = self.level;
        self.started = false;
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Level at local time `t`, `dt` after the previous call.
    pub fn sample(&mut self, t: f64, dt: f64) -> f64 {
        if self.started {
            let delta = self.target - self.level;
            let stepmax = self.rate * dt;
            self.level += delta.clamp(-stepmax, stepmax);
        }
        self.started = true;
        while let Some(ev) = self.events.get(self.next) {
            if ev.t > t + 1e-9 {
                break;
            }
            match ev.directive {
                Directive::RampRate(r) => self.rate = r,
                Directive::Target(v) => self.target = v,
                Directive::Set(v) => {
                    self.level = v;
                    self.target = v;
                }
                Directive::Slip(v) => self.level = (self.level - v).max(0.0),
            }
            self.next += 1;
        }
        self.level
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "
[scenario]
name = demo
duration_s = 1.0
[events]
0.0, ramp_rate, 100
0.1, target, 2
0.5, slip, 1
[markers]
0.2, contact
[checks]
final_mem_r_min = 1000
[gain]
g_max = 9
";

    #[test]
    fn parses_sections() {
        let sc = GraspScenario::parse(TEXT, "demo.scn").unwrap();
        assert_eq!(sc.name, "demo");
        assert_eq!(sc.events.len(), 3);
        assert_eq!(sc.expected_markers, vec![(0.2, Marker::Contact)]);
        assert_eq!(sc.checks.final_mem_r_min, Some(1000.0));
        assert_eq!(sc.overrides.sections.len(), 1);
        assert_eq!(sc.steps(1e-3), 1000);
    }

    #[test]
    fn unknown_directive_is_config_error() {
        let err = GraspScenario::parse("[events]\n0.0, squeeze, 1\n", "x").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(GraspScenario::parse("[events]\n1.0, set, 1\n0.5, set, 2\n", "x").is_err());
        assert!(GraspScenario::parse("[markers]\n1.0, nope\n", "x").is_err());
    }

    #[test]
    fn profile_ramps_and_slips() {
        let sc = GraspScenario::parse(TEXT, "demo.scn").unwrap();
        let mut p = Profile::new(&sc.events);
        let dt = 1e-3;
        let levels: Vec<f64> = (0..1000).map(|k| p.sample(k as f64 * dt, dt)).collect();
        assert_eq!(levels[100], 0.0);
        assert!((levels[101] - 0.1).abs() < 1e-12);
        assert!((levels[120] - 2.0).abs() < 1e-12);
        assert!((levels[500] - 1.0).abs() < 1e-12);
        assert!((levels[505] - 1.5).abs() < 1e-9);
        assert!((levels[999] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn switch_continues_from_level() {
        let mut p = Profile::new(&[ProfileEvent {
            t: 0.0,
            directive: Directive::Set(3.0),
        }]);
        p.sample(0.0, 1e-3);
        p.switch_to(&[
            ProfileEvent {
                t: 0.0,
                directive: Directive::RampRate(1000.0),
            },
            ProfileEvent {
                t: 0.0,
                directive: Directive::Target(0.0),
            },
        ]);
        assert_eq!(p.sample(0.0, 1e-3), 3.0);
        assert_eq!(p.sample(1e-3, 1e-3), 2.0);
    }
}
