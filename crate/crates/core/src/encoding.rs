//! Feature extraction and the piecewise pulse-scheme table.
//!
//! A tactile window or a pixel change is first reduced to a feature
//! ([`TactileAttribute`] or [`VisualChange`]); the [`SchemeTable`] then maps
//! that feature and the device's current resistance band to the
//! [`PulseTrain`] that is applied to the memristor.

use std::collections::BTreeMap;
use std::fmt;

use crate::device::{resistance, DeviceParams, MemristorState, PulseTrain};
use crate::{Error, Result};

/// Upper bound of the visual intensity scale.
pub const MAX_INTENSITY: f64 = 2.56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TactileKind {
    NoContact,
    Mild,
    Hazard,
    PersistentHazard,
    SlipSpike,
}

impl TactileKind {
    pub fn is_hazard(self) -> bool {
        matches!(self, TactileKind::Hazard | TactileKind::PersistentHazard)
    }
}

impl fmt::Display for TactileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TactileKind::NoContact => "no_contact",
            TactileKind::Mild => "mild",
            TactileKind::Hazard => "hazard",
            TactileKind::PersistentHazard => "persistent_hazard",
            TactileKind::SlipSpike => "slip_spike",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileAttribute {
    pub kind: TactileKind,
    /// Peak force in the window (N).
    pub magnitude: f64,
    /// Largest |dF/dt| in the window (N/s).
    pub spike_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileThresholds {
    pub f_contact: f64,
    pub f_hazard: f64,
    pub spike_rate_threshold: f64,
    /// Length of the sliding force window (s).
    pub window_s: f64,
    /// |dF/dt| below which a mild contact counts as settled (N/s).
    pub stable_rate: f64,
    /// Device resistance below which a hazard becomes persistent (Ω).
    pub sensitization_threshold: f64,
}

impl Default for TactileThresholds {
    fn default() -> Self {
        TactileThresholds {
            f_contact: 0.2,
            f_hazard: 5.0,
            spike_rate_threshold: 50.0,
            window_s: 0.010,
            stable_rate: 0.5,
            sensitization_threshold: 100_000.0,
        }
    }
}

/// Classify a time-sorted window of `(t, force)` samples.
///
/// Rules are checked in order: no contact, slip spike, hazard (persistent
/// when the device is already below the sensitization threshold), mild.
pub fn extract_tactile(
    window: &[(f64, f64)],
    device_r: f64,
    thresholds: &TactileThresholds,
) -> Result<TactileAttribute> {
    if window.is_empty() {
        return Err(Error::invalid("empty tactile window"));
    }
    let mut peak: f64 = 0.0;
    let mut rate: f64 = 0.0;
    for (i, &(t, f)) in window.iter().enumerate() {
        if !t.is_finite() || !f.is_finite() {
            return Err(Error::invalid("non-finite sample in tactile window"));
        }
        peak = peak.max(f.abs());
        if i > 0 {
            let (tp, fp) = window[i - 1];
            if t < tp {
                return Err(Error::invalid("tactile window is not time-sorted"));
            }
            if t > tp {
                rate = rate.max(((f - fp) / (t - tp)).abs());
            }
        }
    }
    let kind = if peak < thresholds.f_contact {
        TactileKind::NoContact
    } else if rate >= thresholds.spike_rate_threshold {
        TactileKind::SlipSpike
    } else if peak >= thresholds.f_hazard {
        if device_r < thresholds.sensitization_threshold {
            TactileKind::PersistentHazard
        } else {
            TactileKind::Hazard
        }
    } else {
        TactileKind::Mild
    };
    Ok(TactileAttribute {
        kind,
        magnitude: peak,
        spike_rate: rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VisualClass {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualChange {
    pub delta: f64,
    pub class: VisualClass,
}

#[inline]
pub fn extract_visual(prev: f64, curr: f64, fast_threshold: f64) -> Result<VisualChange> {
    let in_range = |v: f64| (0.0..=MAX_INTENSITY).contains(&v);
    if !in_range(prev) || !in_range(curr) {
        return Err(Error::invalid(format!(
            "intensity outside [0, {MAX_INTENSITY}]: prev={prev} curr={curr}"
        )));
    }
    let delta = (curr - prev).abs();
    let class = if delta >= fast_threshold {
        VisualClass::Fast
    } else {
        VisualClass::Slow
    };
    Ok(VisualChange { delta, class })
}

/// Resistance band of the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Mid, Band::High];

    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::Mid => "mid",
            Band::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bands {
    /// Below this the device is in the low (nociceptive) band.
    pub low_max: f64,
    pub mid_center: f64,
    /// Above this the device is in the high (adapted) band.
    pub high_min: f64,
}

impl Bands {
    pub fn classify(&self, r: f64) -> Band {
        if r < self.low_max {
            Band::Low
        } else if r > self.high_min {
            Band::High
        } else {
            Band::Mid
        }
    }
}

/// Key of a scheme-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    Tactile(TactileKind),
    Visual(VisualClass),
}

impl FeatureKey {
    pub const ALL: [FeatureKey; 7] = [
        FeatureKey::Tactile(TactileKind::NoContact),
        FeatureKey::Tactile(TactileKind::Mild),
        FeatureKey::Tactile(TactileKind::Hazard),
        FeatureKey::Tactile(TactileKind::PersistentHazard),
        FeatureKey::Tactile(TactileKind::SlipSpike),
        FeatureKey::Visual(VisualClass::Fast),
        FeatureKey::Visual(VisualClass::Slow),
    ];

    pub fn name(self) -> String {
        match self {
            FeatureKey::Tactile(k) => k.to_string(),
            FeatureKey::Visual(VisualClass::Fast) => "visual_fast".into(),
            FeatureKey::Visual(VisualClass::Slow) => "visual_slow".into(),
        }
    }

    pub fn parse(s: &str) -> Option<FeatureKey> {
        FeatureKey::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Borrowed feature handed to [`scheme_for`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feature {
    Tactile(TactileAttribute),
    Visual(VisualChange),
}

impl Feature {
    pub fn key(&self) -> FeatureKey {
        match self {
            Feature::Tactile(a) => FeatureKey::Tactile(a.kind),
            Feature::Visual(v) => FeatureKey::Visual(v.class),
        }
    }
}

impl From<TactileAttribute> for Feature {
    fn from(a: TactileAttribute) -> Self {
        Feature::Tactile(a)
    }
}

impl From<VisualChange> for Feature {
    fn from(v: VisualChange) -> Self {
        Feature::Visual(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Fixed(PulseTrain),
    /// Amplitude follows the visual change: `min(a_max, a_gain·delta)`.
    Proportional(PulseTrain),
    /// Corrective train toward the middle band.
    Normalize,
}

/// Amplitude law for fast visual changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualLaw {
    pub fast_threshold: f64,
    pub a_gain: f64,
    pub a_max: f64,
}

impl Default for VisualLaw {
    fn default() -> Self {
        VisualLaw {
            fast_threshold: 0.30,
            a_gain: 0.5,
            a_max: 0.8,
        }
    }
}

impl VisualLaw {
    pub fn amplitude(&self, delta: f64) -> f64 {
        (self.a_gain * delta).min(self.a_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeTable {
    pub templates: BTreeMap<String, PulseTrain>,
    pub entries: BTreeMap<(FeatureKey, Band), Scheme>,
    pub bands: Bands,
    pub sensitization_threshold: f64,
    /// Relative half-width of the no-correction zone around `mid_center`.
    pub normalize_tolerance: f64,
    pub visual: VisualLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationSpeed {
    Slow,
    Fast,
}

impl SchemeTable {
    pub fn template(&self, name: &str) -> Result<PulseTrain> {
        self.templates
            .get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("scheme table has no template `{name}`")))
    }

    pub fn entry(&self, key: FeatureKey, band: Band) -> Result<Scheme> {
        self.entries.get(&(key, band)).copied().ok_or_else(|| {
            Error::config(format!(
                "scheme table does not cover {}.{}",
                key.name(),
                band.name()
            ))
        })
    }

    /// Check the table against the ordering constraints the pipelines rely
    /// on: the sensitized train dominates the hazard train, and the fast
    /// adaptation train drives harder per pulse than the slow one.
    pub fn validate(&self, params: &DeviceParams) -> Result<()> {
        for key in FeatureKey::ALL {
            for band in Band::ALL {
                self.entry(key, band)?;
            }
        }
        for t in self.templates.values() {
            t.validate()?;
        }
        let hazard = self.template("hazard")?;
        let sens = self.template("sensitized")?;
        if sens.amplitude < hazard.amplitude || sens.duty_cycle < hazard.duty_cycle {
            return Err(Error::config(
                "sensitized template must not have lower amplitude or duty than hazard",
            ));
        }
        let per_pulse = |t: PulseTrain| {
            let overdrive = (params.v_tn - t.amplitude).max(0.0);
            params.alpha_n * overdrive * t.pulse_width
        };
        let fast = self.template("adapt_fast")?;
        let slow = self.template("adapt_slow")?;
        if per_pulse(fast) <= per_pulse(slow) {
            return Err(Error::config(
                "adapt_fast must drive resistance up faster per pulse than adapt_slow",
            ));
        }
        if !(self.bands.low_max < self.bands.mid_center && self.bands.mid_center < self.bands.high_min)
        {
            return Err(Error::config("bands must satisfy low_max < mid_center < high_min"));
        }
        if !(0.0..1.0).contains(&self.normalize_tolerance) {
            return Err(Error::config("normalize_tolerance must be in [0, 1)"));
        }
        Ok(())
    }

    /// One-shot correction toward `mid_center` for a device at `device_r`.
    pub fn normalize_from_resistance(&self, device_r: f64) -> Result<PulseTrain> {
        let mid = self.bands.mid_center;
        if (device_r - mid).abs() <= self.normalize_tolerance * mid {
            Ok(PulseTrain::null())
        } else if device_r > mid {
            self.template("recover_up")
        } else {
            self.template("recover_down")
        }
    }
}

/// Look up the pulse train for `feature` with the device at `device_r`.
pub fn scheme_for(
    feature: impl Into<Feature>,
    device_r: f64,
    table: &SchemeTable,
) -> Result<PulseTrain> {
    let feature = feature.into();
    let band = table.bands.classify(device_r);
    match table.entry(feature.key(), band)? {
        Scheme::Fixed(t) => Ok(t),
        Scheme::Normalize => table.normalize_from_resistance(device_r),
        Scheme::Proportional(t) => match feature {
            Feature::Visual(v) => Ok(t.with_amplitude(table.visual.amplitude(v.delta))),
            Feature::Tactile(a) => Err(Error::config(format!(
                "proportional scheme is only defined for visual features, not {}",
                a.kind
            ))),
        },
    }
}

pub fn normalize_toward_mid(
    state: MemristorState,
    params: &DeviceParams,
    table: &SchemeTable,
) -> Result<PulseTrain> {
    table.normalize_from_resistance(resistance(state, params))
}

pub fn adaptation_schedule(speed: AdaptationSpeed, table: &SchemeTable) -> Result<PulseTrain> {
    match speed {
        AdaptationSpeed::Slow => table.template("adapt_slow"),
        AdaptationSpeed::Fast => table.template("adapt_fast"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::device::apply_pulse_train;

    fn table() -> SchemeTable {
        Config::default().table
    }

    fn constant(force: f64) -> Vec<(f64, f64)> {
        (0..10).map(|i| (i as f64 * 1e-3, force)).collect()
    }

    #[test]
    fn tactile_rules() {
        let th = TactileThresholds::default();
        let a = extract_tactile(&constant(0.0), 200e3, &th).unwrap();
        assert_eq!(a.kind, TactileKind::NoContact);
        let a = extract_tactile(&constant(10.0), 200e3, &th).unwrap();
        assert_eq!(a.kind, TactileKind::Hazard);
        assert_eq!(a.magnitude, 10.0);
        let a = extract_tactile(&constant(10.0), 80e3, &th).unwrap();
        assert_eq!(a.kind, TactileKind::PersistentHazard);
        let a = extract_tactile(&constant(2.0), 80e3, &th).unwrap();
        assert_eq!(a.kind, TactileKind::Mild);

        let mut w = constant(3.0);
        w[5].1 = 1.5;
        let a = extract_tactile(&w, 200e3, &th).unwrap();
        assert_eq!(a.kind, TactileKind::SlipSpike);
        assert!((a.spike_rate - 1500.0).abs() < 1e-6);
    }

    #[test]
    fn tactile_errors() {
        let th = TactileThresholds::default();
        assert!(extract_tactile(&[], 1e5, &th).is_err());
        assert!(extract_tactile(&[(1.0, 1.0), (0.5, 1.0)], 1e5, &th).is_err());
    }

    #[test]
    fn visual_extraction() {
        let v = extract_visual(1.0, 1.0, 0.3).unwrap();
        assert_eq!((v.delta, v.class), (0.0, VisualClass::Slow));
        let v = extract_visual(0.0, 2.56, 0.3).unwrap();
        assert_eq!((v.delta, v.class), (2.56, VisualClass::Fast));
        let v = extract_visual(1.20, 1.45, 0.3).unwrap();
        assert!((v.delta - 0.25).abs() < 1e-12);
        assert_eq!(v.class, VisualClass::Slow);
        assert!(extract_visual(-0.1, 1.0, 0.3).is_err());
        assert!(extract_visual(1.0, 2.6, 0.3).is_err());
    }

    #[test]
    fn mild_in_mid_band_is_slow_adaptation() {
        let t = table();
        let attr = TactileAttribute {
            kind: TactileKind::Mild,
            magnitude: 2.0,
            spike_rate: 0.0,
        };
        let train = scheme_for(attr, 170e3, &t).unwrap();
        assert_eq!(train.amplitude, -0.30);
        assert_eq!(train.duty_cycle, 0.30);
        assert_eq!(train, adaptation_schedule(AdaptationSpeed::Slow, &t).unwrap());
    }

    #[test]
    fn sensitized_dominates_hazard() {
        let t = table();
        let mk = |kind| TactileAttribute {
            kind,
            magnitude: 10.0,
            spike_rate: 0.0,
        };
        let h = scheme_for(mk(TactileKind::Hazard), 200e3, &t).unwrap();
        let s = scheme_for(mk(TactileKind::PersistentHazard), 80e3, &t).unwrap();
        assert_eq!((h.amplitude, h.duty_cycle), (0.60, 0.50));
        assert_eq!((s.amplitude, s.duty_cycle), (0.80, 0.80));
        assert!(s.amplitude > h.amplitude && s.duty_cycle > h.duty_cycle);
    }

    #[test]
    fn visual_schemes() {
        let t = table();
        let slow = VisualChange {
            delta: 0.0,
            class: VisualClass::Slow,
        };
        let slow2 = VisualChange {
            delta: 0.2,
            class: VisualClass::Slow,
        };
        let a = scheme_for(slow, 300e3, &t).unwrap();
        let b = scheme_for(slow2, 300e3, &t).unwrap();
        assert!(a.amplitude < 0.0);
        assert_eq!(a, b);

        let fast = |delta| VisualChange {
            delta,
            class: VisualClass::Fast,
        };
        assert_eq!(scheme_for(fast(1.0), 300e3, &t).unwrap().amplitude, 0.5);
        assert_eq!(scheme_for(fast(2.56), 300e3, &t).unwrap().amplitude, 0.8);
    }

    #[test]
    fn uncovered_attribute_is_config_error() {
        let mut t = table();
        t.entries
            .remove(&(FeatureKey::Tactile(TactileKind::Mild), Band::Mid));
        let attr = TactileAttribute {
            kind: TactileKind::Mild,
            magnitude: 2.0,
            spike_rate: 0.0,
        };
        assert!(matches!(scheme_for(attr, 170e3, &t), Err(Error::Config(_))));
    }

    #[test]
    fn normalization_sign() {
        let t = table();
        let p = DeviceParams::default();
        let at = |r| MemristorState::from_resistance(r, &p).unwrap();
        assert!(normalize_toward_mid(at(170e3), &p, &t).unwrap().is_null());
        assert!(normalize_toward_mid(at(300e3), &p, &t).unwrap().amplitude > 0.0);
        assert!(normalize_toward_mid(at(90e3), &p, &t).unwrap().amplitude < 0.0);
        assert!(normalize_toward_mid(at(160e3), &p, &t).unwrap().is_null());
    }

    #[test]
    fn adaptation_templates_and_speed() {
        let t = table();
        let slow = adaptation_schedule(AdaptationSpeed::Slow, &t).unwrap();
        let fast = adaptation_schedule(AdaptationSpeed::Fast, &t).unwrap();
        assert_eq!((slow.amplitude, slow.pulse_width, slow.duty_cycle), (-0.30, 10e-6, 0.30));
        assert_eq!((fast.amplitude, fast.pulse_width, fast.duty_cycle), (-0.50, 10e-6, 0.60));

        let p = DeviceParams::default();
        let x0 = MemristorState::new(0.9).unwrap();
        let r0 = resistance(x0, &p);
        let one = |train: PulseTrain| {
            let single = PulseTrain { count: 1, ..train };
            resistance(apply_pulse_train(x0, &single, &p).unwrap(), &p) - r0
        };
        assert!(one(fast) > one(slow));
        assert!(one(slow) > 0.0);
    }

    #[test]
    fn default_table_validates() {
        table().validate(&DeviceParams::default()).unwrap();
    }
}
