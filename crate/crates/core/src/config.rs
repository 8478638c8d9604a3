//! Key-value configuration: the document parser shared with scenario files
//! and the resolved [`Config`] built from the embedded defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::device::{DeviceParams, PulseTrain};
use crate::encoding::{Band, Bands, FeatureKey, Scheme, SchemeTable, TactileThresholds, VisualLaw};
use crate::tactile::controller::ControllerConfig;
use crate::tactile::{GainConfig, PiezoModel, SlipConfig};
use crate::vision::VisionConfig;
use crate::{Error, Result};

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.cfg");

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Pair {
        key: String,
        value: String,
        line: usize,
    },
    /// A line without `=`, kept verbatim (trimmed).
    Raw { text: String, line: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// A parsed `[section]` / `key = value` document.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub origin: PathBuf,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str, origin: impl Into<PathBuf>) -> Result<Self> {
        let origin = origin.into();
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    path: origin.clone(),
                    line,
                    msg: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::Parse {
                        path: origin.clone(),
                        line,
                        msg: "empty section name".into(),
                    });
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let section = sections.last_mut().ok_or_else(|| Error::Parse {
                path: origin.clone(),
                line,
                msg: "entry before the first section header".into(),
            })?;
            let entry = match body.split_once('=') {
                Some((k, v)) => {
                    let key = k.trim();
                    if key.is_empty() {
                        return Err(Error::Parse {
                            path: origin.clone(),
                            line,
                            msg: "missing key before `=`".into(),
                        });
                    }
                    Entry::Pair {
                        key: key.to_string(),
                        value: v.trim().to_string(),
                        line,
                    }
                }
                None => Entry::Raw {
                    text: body.to_string(),
                    line,
                },
            };
            section.entries.push(entry);
        }
        Ok(Document { origin, sections })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Document::parse(&text, path)
    }

    /// All sections with this name, in file order.
    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    pub fn parse_error(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Value {
    text: String,
    layer: usize,
    origin: PathBuf,
    line: usize,
}

impl Value {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn f64(&self) -> Result<f64> {
        match self.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("expected a finite number, got `{}`", self.text))),
        }
    }

    fn uint<T: std::str::FromStr>(&self) -> Result<T> {
        self.text
            .parse::<T>()
            .map_err(|_| self.err(format!("expected a non-negative integer, got `{}`", self.text)))
    }
}

const FIXED_SECTIONS: &[(&str, &[&str])] = &[
    (
        "device",
        &["r_on", "r_off", "v_tp", "v_tn", "alpha_p", "alpha_n", "window_exponent"],
    ),
    (
        "bands",
        &["low_max", "mid_center", "high_min", "sensitization_threshold", "normalize_tolerance"],
    ),
    ("visual", &["fast_threshold", "a_gain", "a_max"]),
    (
        "tactile",
        &["f_contact", "f_hazard", "spike_rate_threshold", "window_s", "stable_rate"],
    ),
    ("piezo", &["r_unloaded", "sensitivity", "r_floor", "v_bias"]),
    ("gain", &["g_min", "g_max"]),
    (
        "controller",
        &[
            "control_step_s",
            "pain_gain",
            "nociceptive_r",
            "stable_steps",
            "slip_grip_factor",
            "slip_refractory_s",
            "regrasp_delay_s",
            "grip_tau_s",
            "f_max",
        ],
    ),
    ("slip", &["rate_threshold", "min_gap_s"]),
    (
        "vision",
        &["cols", "rows", "fps", "binarize_threshold", "release_bound_frames", "orientation_frames"],
    ),
];

const OPEN_SECTIONS: &[&str] = &["templates", "schemes"];

/// Resolved values, layered default-first.
#[derive(Debug, Default)]
struct Layers {
    map: BTreeMap<String, BTreeMap<String, Value>>,
    depth: usize,
}

impl Layers {
    fn apply(&mut self, doc: &Document) -> Result<()> {
        self.depth += 1;
        for section in &doc.sections {
            let fixed = FIXED_SECTIONS.iter().find(|(n, _)| *n == section.name);
            if fixed.is_none() && !OPEN_SECTIONS.contains(&section.name.as_str()) {
                return Err(doc.parse_error(section.line, format!("unknown section [{}]", section.name)));
            }
            let slot = self.map.entry(section.name.clone()).or_default();
            for entry in &section.entries {
                match entry {
                    Entry::Pair { key, value, line } => {
                        if let Some((_, keys)) = fixed {
                            if !keys.contains(&key.as_str()) {
                                return Err(doc.parse_error(
                                    *line,
                                    format!("unknown key `{key}` in [{}]", section.name),
                                ));
                            }
                        }
                        slot.insert(
                            key.clone(),
                            Value {
                                text: value.clone(),
                                layer: self.depth,
                                origin: doc.origin.clone(),
                                line: *line,
                            },
                        );
                    }
                    Entry::Raw { line, .. } => {
                        return Err(doc.parse_error(*line, "expected `key = value`"));
                    }
                }
            }
        }
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Result<&Value> {
        self.map
            .get(section)
            .and_then(|s| s.get(key))
            .ok_or_else(|| Error::config(format!("missing [{section}] {key}")))
    }

    fn f64(&self, section: &str, key: &str) -> Result<f64> {
        self.get(section, key)?.f64()
    }

    fn uint<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?.uint()
    }

    fn open(&self, section: &str) -> impl Iterator<Item = (&String, &Value)> {
        self.map.get(section).into_iter().flat_map(|m| m.iter())
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub device: DeviceParams,
    pub table: SchemeTable,
    pub tactile: TactileThresholds,
    pub piezo: PiezoModel,
    pub gain: GainConfig,
    pub controller: ControllerConfig,
    pub slip: SlipConfig,
    pub vision: VisionConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config::from_documents(&[]).expect("embedded default configuration is valid")
    }
}

impl Config {
    /// Parse `text` and layer it over the defaults.
    pub fn from_text(text: &str, origin: impl Into<PathBuf>) -> Result<Self> {
        let doc = Document::parse(text, origin)?;
        Config::from_documents(&[doc])
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::from_documents(&[Document::read(path)?])
    }

    /// This configuration with `doc` layered on top.
    pub fn with_overrides(&self, doc: &Document) -> Result<Self> {
        if doc.sections.is_empty() {
            return Ok(self.clone());
        }
        let base = Document::parse(&self.canonical(), "<resolved>")?;
        Config::from_documents(&[base, doc.clone()])
    }

    /// Defaults, then each document in order.
    pub fn from_documents(docs: &[Document]) -> Result<Self> {
        let mut layers = Layers::default();
        layers.apply(&Document::parse(DEFAULT_CONFIG, "<default.cfg>")?)?;
        for doc in docs {
            layers.apply(doc)?;
        }
        let cfg = Config::resolve(&layers)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(l: &Layers) -> Result<Self> {
        let device = DeviceParams {
            r_on: l.f64("device", "r_on")?,
            r_off: l.f64("device", "r_off")?,
            v_tp: l.f64("device", "v_tp")?,
            v_tn: l.f64("device", "v_tn")?,
            alpha_p: l.f64("device", "alpha_p")?,
            alpha_n: l.f64("device", "alpha_n")?,
            window_exponent: l.f64("device", "window_exponent")?,
        };

        let mut templates = BTreeMap::new();
        for (name, v) in l.open("templates") {
            let parts: Vec<&str> = v.text.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(v.err("template needs `amplitude, pulse_width, duty_cycle, count`"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| v.err(format!("bad number `{s}`")))
            };
            let count = parts[3]
                .parse::<u32>()
                .map_err(|_| v.err(format!("bad pulse count `{}`", parts[3])))?;
            let train = PulseTrain::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, count)
                .map_err(|e| v.err(format!("template `{name}`: {e}")))?;
            templates.insert(name.clone(), train);
        }

        // later layers win; within a layer an explicit band beats `*`
        let mut rows = Vec::new();
        for (key, v) in l.open("schemes") {
            let (feature, band) = key
                .split_once('.')
                .ok_or_else(|| v.err(format!("scheme key `{key}` must be `feature.band`")))?;
            let feature = FeatureKey::parse(feature)
                .ok_or_else(|| v.err(format!("unknown feature `{feature}`")))?;
            let bands: Vec<Band> = match band {
                "*" => Band::ALL.to_vec(),
                b => vec![Band::ALL
                    .into_iter()
                    .find(|x| x.name() == b)
                    .ok_or_else(|| v.err(format!("unknown band `{b}`")))?],
            };
            let scheme = parse_scheme(v, &templates)?;
            for b in bands {
                rows.push(((v.layer, band != "*"), (feature, b), scheme));
            }
        }
        rows.sort_by_key(|r| r.0);
        let entries = rows.into_iter().map(|(_, k, s)| (k, s)).collect();

        let table = SchemeTable {
            templates,
            entries,
            bands: Bands {
                low_max: l.f64("bands", "low_max")?,
                mid_center: l.f64("bands", "mid_center")?,
                high_min: l.f64("bands", "high_min")?,
            },
            sensitization_threshold: l.f64("bands", "sensitization_threshold")?,
            normalize_tolerance: l.f64("bands", "normalize_tolerance")?,
            visual: VisualLaw {
                fast_threshold: l.f64("visual", "fast_threshold")?,
                a_gain: l.f64("visual", "a_gain")?,
                a_max: l.f64("visual", "a_max")?,
            },
        };

        let tactile = TactileThresholds {
            f_contact: l.f64("tactile", "f_contact")?,
            f_hazard: l.f64("tactile", "f_hazard")?,
            spike_rate_threshold: l.f64("tactile", "spike_rate_threshold")?,
            window_s: l.f64("tactile", "window_s")?,
            stable_rate: l.f64("tactile", "stable_rate")?,
            sensitization_threshold: table.sensitization_threshold,
        };

        Ok(Config {
            device,
            tactile,
            piezo: PiezoModel {
                r_unloaded: l.f64("piezo", "r_unloaded")?,
                sensitivity: l.f64("piezo", "sensitivity")?,
                r_floor: l.f64("piezo", "r_floor")?,
                v_bias: l.f64("piezo", "v_bias")?,
            },
            gain: GainConfig {
                g_min: l.f64("gain", "g_min")?,
                g_max: l.f64("gain", "g_max")?,
            },
            controller: ControllerConfig {
                control_step_s: l.f64("controller", "control_step_s")?,
                pain_gain: l.f64("controller", "pain_gain")?,
                nociceptive_r: l.f64("controller", "nociceptive_r")?,
                stable_steps: l.uint("controller", "stable_steps")?,
                slip_grip_factor: l.f64("controller", "slip_grip_factor")?,
                slip_refractory_s: l.f64("controller", "slip_refractory_s")?,
                regrasp_delay_s: l.f64("controller", "regrasp_delay_s")?,
                grip_tau_s: l.f64("controller", "grip_tau_s")?,
                f_max: l.f64("controller", "f_max")?,
                stable_rate: tactile.stable_rate,
            },
            slip: SlipConfig {
                rate_threshold: l.f64("slip", "rate_threshold")?,
                min_gap_s: l.f64("slip", "min_gap_s")?,
            },
            vision: VisionConfig {
                cols: l.uint("vision", "cols")?,
                rows: l.uint("vision", "rows")?,
                fps: l.f64("vision", "fps")?,
                binarize_threshold: l.f64("vision", "binarize_threshold")?,
                release_bound_frames: l.uint("vision", "release_bound_frames")?,
                orientation_frames: l.uint("vision", "orientation_frames")?,
            },
            table,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.table.validate(&self.device)?;
        self.piezo.validate()?;
        self.gain.validate()?;
        self.controller.validate()?;
        self.slip.validate()?;
        self.vision.validate()?;
        let t = &self.tactile;
        if !(t.f_contact > 0.0 && t.f_contact < t.f_hazard) {
            return Err(Error::config("need 0 < f_contact < f_hazard"));
        }
        if !(t.spike_rate_threshold > 0.0 && t.window_s > 0.0 && t.stable_rate >= 0.0) {
            return Err(Error::config("tactile rates and window must be positive"));
        }
        Ok(())
    }

    /// Canonical text form of every resolved value. Parsing it back yields
    /// an equal `Config`.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let d = &self.device;
        let _ = writeln!(s, "[device]");
        kv(&mut s, "r_on", d.r_on);
        kv(&mut s, "r_off", d.r_off);
        kv(&mut s, "v_tp", d.v_tp);
        kv(&mut s, "v_tn", d.v_tn);
        kv(&mut s, "alpha_p", d.alpha_p);
        kv(&mut s, "alpha_n", d.alpha_n);
        kv(&mut s, "window_exponent", d.window_exponent);

        let t = &self.table;
        let _ = writeln!(s, "\n[bands]");
        kv(&mut s, "low_max", t.bands.low_max);
        kv(&mut s, "mid_center", t.bands.mid_center);
        kv(&mut s, "high_min", t.bands.high_min);
        kv(&mut s, "sensitization_threshold", t.sensitization_threshold);
        kv(&mut s, "normalize_tolerance", t.normalize_tolerance);

        let _ = writeln!(s, "\n[templates]");
        for (name, p) in &t.templates {
            let _ = writeln!(
                s,
                "{name} = {:?}, {:?}, {:?}, {}",
                p.amplitude, p.pulse_width, p.duty_cycle, p.count
            );
        }

        let _ = writeln!(s, "\n[schemes]");
        for ((feature, band), scheme) in &t.entries {
            let rhs = match scheme {
                Scheme::Normalize => "normalize".to_string(),
                Scheme::Fixed(p) => format!("fixed:{}", template_name(t, p)),
                Scheme::Proportional(p) => format!("proportional:{}", template_name(t, p)),
            };
            let _ = writeln!(s, "{}.{} = {rhs}", feature.name(), band.name());
        }

        let _ = writeln!(s, "\n[visual]");
        kv(&mut s, "fast_threshold", t.visual.fast_threshold);
        kv(&mut s, "a_gain", t.visual.a_gain);
        kv(&mut s, "a_max", t.visual.a_max);

        let tc = &self.tactile;
        let _ = writeln!(s, "\n[tactile]");
        kv(&mut s, "f_contact", tc.f_contact);
        kv(&mut s, "f_hazard", tc.f_hazard);
        kv(&mut s, "spike_rate_threshold", tc.spike_rate_threshold);
        kv(&mut s, "window_s", tc.window_s);
        kv(&mut s, "stable_rate", tc.stable_rate);

        let p = &self.piezo;
        let _ = writeln!(s, "\n[piezo]");
        kv(&mut s, "r_unloaded", p.r_unloaded);
        kv(&mut s, "sensitivity", p.sensitivity);
        kv(&mut s, "r_floor", p.r_floor);
        kv(&mut s, "v_bias", p.v_bias);

        let _ = writeln!(s, "\n[gain]");
        kv(&mut s, "g_min", self.gain.g_min);
        kv(&mut s, "g_max", self.gain.g_max);

        let c = &self.controller;
        let _ = writeln!(s, "\n[controller]");
        kv(&mut s, "control_step_s", c.control_step_s);
        kv(&mut s, "pain_gain", c.pain_gain);
        kv(&mut s, "nociceptive_r", c.nociceptive_r);
        let _ = writeln!(s, "stable_steps = {}", c.stable_steps);
        kv(&mut s, "slip_grip_factor", c.slip_grip_factor);
        kv(&mut s, "slip_refractory_s", c.slip_refractory_s);
        kv(&mut s, "regrasp_delay_s", c.regrasp_delay_s);
        kv(&mut s, "grip_tau_s", c.grip_tau_s);
        kv(&mut s, "f_max", c.f_max);

        let _ = writeln!(s, "\n[slip]");
        kv(&mut s, "rate_threshold", self.slip.rate_threshold);
        kv(&mut s, "min_gap_s", self.slip.min_gap_s);

        let v = &self.vision;
        let _ = writeln!(s, "\n[vision]");
        let _ = writeln!(s, "cols = {}", v.cols);
        let _ = writeln!(s, "rows = {}", v.rows);
        kv(&mut s, "fps", v.fps);
        kv(&mut s, "binarize_threshold", v.binarize_threshold);
        let _ = writeln!(s, "release_bound_frames = {}", v.release_bound_frames);
        let _ = writeln!(s, "orientation_frames = {}", v.orientation_frames);
        s
    }

    /// Hex SHA-256 of [`Config::canonical`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn kv(s: &mut String, key: &str, v: f64) {
    let _ = writeln!(s, "{key} = {v:?}");
}

fn template_name(table: &SchemeTable, train: &PulseTrain) -> String {
    table
        .templates
        .iter()
        .find(|(_, t)| *t == train)
        .map(|(n, _)| n.clone())
        .unwrap_or_else(|| "?".into())
}

fn parse_scheme(v: &Value, templates: &BTreeMap<String, PulseTrain>) -> Result<Scheme> {
    let text = v.text.as_str();
    if text == "normalize" {
        return Ok(Scheme::Normalize);
    }
    let (kind, name) = text
        .split_once(':')
        .ok_or_else(|| v.err(format!("bad scheme `{text}`")))?;
    let train = *templates
        .get(name.trim())
        .ok_or_else(|| v.err(format!("unknown template `{}`", name.trim())))?;
    match kind.trim() {
        "fixed" => Ok(Scheme::Fixed(train)),
        "proportional" => Ok(Scheme::Proportional(train)),
        other => Err(v.err(format!("unknown scheme kind `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load() {
        let c = Config::default();
        assert_eq!(c.device, DeviceParams::default());
        assert_eq!(c.table.templates.len(), 9);
        assert_eq!(c.table.entries.len(), 21);
        assert_eq!(c.vision.cols, 40);
        assert_eq!(c.controller.stable_steps, 50);
    }

    #[test]
    fn canonical_roundtrip() {
        let c = Config::default();
        let back = Config::from_text(&c.canonical(), "canon").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
        assert_eq!(c.fingerprint().len(), 64);
    }

    #[test]
    fn overrides_layer_over_defaults() {
        let c = Config::from_text("[gain]\ng_max = 9.0\n", "user").unwrap();
        assert_eq!(c.gain.g_max, 9.0);
        assert_eq!(c.gain.g_min, 0.4);
        assert_ne!(c.fingerprint(), Config::default().fingerprint());
    }

    #[test]
    fn explicit_band_beats_wildcard() {
        let c = Config::from_text("[schemes]\nmild.high = normalize\n", "user").unwrap();
        let key = FeatureKey::Tactile(crate::encoding::TactileKind::Mild);
        assert_eq!(c.table.entries[&(key, Band::High)], Scheme::Normalize);
        assert!(matches!(c.table.entries[&(key, Band::Mid)], Scheme::Fixed(_)));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "[device]\nr_on = abc\n",
            "[device]\nbogus = 1\n",
            "[nowhere]\n",
            "r_on = 1\n",
            "[device\n",
            "[templates]\nhazard = 0.6, 1e-5\n",
            "[schemes]\nmild.* = fixed:missing\n",
            "[schemes]\nsqueeze.* = normalize\n",
            "[device]\nr_on = 400000\n",
            "[templates]\nsensitized = 0.5, 10e-6, 0.8, 20\n",
        ] {
            assert!(Config::from_text(text, "user").is_err(), "accepted: {text:?}");
        }
    }

    #[test]
    fn parse_error_carries_line() {
        let err = Config::from_text("\n[device]\nr_on = x\n", "f.cfg").unwrap_err();
        assert_eq!(err.to_string(), "f.cfg:3: expected a finite number, got `x`");
    }

    #[test]
    fn raw_lines_and_comments() {
        let doc = Document::parse("# hi\n[events]\n1.0, set, 2 # note\n", "s").unwrap();
        assert_eq!(
            doc.sections[0].entries,
            vec![Entry::Raw {
                text: "1.0, set, 2".into(),
                line: 3
            }]
        );
    }
}
