//! Metrics over grasp traces and saliency maps.

use std::fmt::Write as _;

use crate::tactile::{GraspTrace, Marker};
use crate::vision::SaliencyMap;
use crate::{Error, Result};

/// Per-frame binary ground truth; `true` marks an important cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<bool>,
}

impl LabelMask {
    pub fn new(cols: usize, rows: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != cols * rows {
            return Err(Error::invalid(format!(
                "label mask has {} cells, expected {cols}×{rows}",
                cells.len()
            )));
        }
        Ok(LabelMask { cols, rows, cells })
    }

    pub fn empty(cols: usize, rows: usize) -> Self {
        LabelMask {
            cols,
            rows,
            cells: vec![false; cols * rows],
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub per_frame: Vec<f64>,
    pub fingerprint: String,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "metric = {}\nvalue = {}\nframes = {}\nfingerprint = {}\n",
            self.name,
            self.value,
            self.per_frame.len(),
            self.fingerprint
        );
        for n in &self.notes {
            let _ = writeln!(s, "note = {n}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,value\n");
        for (i, v) in self.per_frame.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }
}

fn same_timeline(a: &GraspTrace, b: &GraspTrace) -> Result<()> {
    if a.rows.is_empty() || a.rows.len() != b.rows.len() {
        return Err(Error::invalid(format!(
            "timeline mismatch: {} vs {} rows",
            a.rows.len(),
            b.rows.len()
        )));
    }
    if a.rows.iter().zip(&b.rows).any(|(x, y)| x.t != y.t || x.response != y.response) {
        return Err(Error::invalid("timeline mismatch: traces differ in time or stimulus"));
    }
    Ok(())
}

/// Peak gain-scaled output over peak unity-gain output, in percent.
pub fn amplification_ratio(trace: &GraspTrace, baseline: &GraspTrace) -> Result<f64> {
    same_timeline(trace, baseline)?;
    let peak = |t: &GraspTrace, out: fn(&crate::tactile::TraceRow) -> f64| {
        t.rows.iter().map(out).fold(f64::NEG_INFINITY, f64::max)
    };
    let num = peak(trace, |r| r.output);
    let den = peak(baseline, |r| r.response);
    if !(den > 0.0) {
        return Err(Error::invalid("baseline has no positive response"));
    }
    Ok(100.0 * num / den)
}

/// `100·(1 − output(t)/output(t_ref))`.
pub fn adaptation_level_from(trace: &GraspTrace, t_ref: f64, t: f64) -> Result<f64> {
    if t < t_ref - 1e-9 {
        return Err(Error::invalid(format!(
            "t={t} precedes the reference time {t_ref}"
        )));
    }
    let r = trace.rows[trace.index_at(t_ref)?].output;
    let o = trace.rows[trace.index_at(t)?].output;
    if !(r > 0.0) {
        return Err(Error::invalid("reference output is not positive"));
    }
    Ok(100.0 * (1.0 - o / r))
}

/// Adaptation relative to the moment the grasp first became stable.
pub fn adaptation_level(trace: &GraspTrace, t: f64) -> Result<f64> {
    let i = trace
        .first(Marker::StableHold)
        .ok_or_else(|| Error::invalid("trace never reaches a stable hold"))?;
    adaptation_level_from(trace, trace.rows[i].t, t)
}

/// Same as [`adaptation_level`] but on the memristor conductance state
/// (normalized gain above its floor) rather than on the output.
pub fn state_adaptation_level(trace: &GraspTrace, t: f64, g_min: f64) -> Result<f64> {
    let i = trace
        .first(Marker::StableHold)
        .ok_or_else(|| Error::invalid("trace never reaches a stable hold"))?;
    if t < trace.rows[i].t - 1e-9 {
        return Err(Error::invalid("t precedes the stable hold"));
    }
    let r = trace.rows[i].gain - g_min;
    let o = trace.rows[trace.index_at(t)?].gain - g_min;
    if !(r > 0.0) {
        return Err(Error::invalid("reference state is at the gain floor"));
    }
    Ok(100.0 * (1.0 - o / r))
}

/// Steps after `start` until the output first drops below
/// `fraction · output(start)`.
pub fn time_to_attenuation(trace: &GraspTrace, start: usize, fraction: f64) -> Option<usize> {
    let r0 = trace.rows.get(start)?.output;
    trace.rows[start..]
        .iter()
        .position(|r| r.output < fraction * r0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedReport {
    pub fast_steps: Option<usize>,
    pub slow_steps: Option<usize>,
    pub fast_is_faster: bool,
    pub diagnostic: String,
}

/// Time to 50% attenuation under each schedule, from the first row.
pub fn speed_comparison(fast: &GraspTrace, slow: &GraspTrace) -> Result<SpeedReport> {
    if fast.rows.len() != slow.rows.len()
        || fast.rows.iter().zip(&slow.rows).any(|(a, b)| a.t != b.t || a.force != b.force)
    {
        return Err(Error::invalid("speed comparison needs the same stimulus"));
    }
    let f = time_to_attenuation(fast, 0, 0.5);
    let s = time_to_attenuation(slow, 0, 0.5);
    let show = |x: Option<usize>| x.map_or("unreached".to_string(), |n| format!("{n} steps"));
    let fast_is_faster = match (f, s) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let diagnostic = format!(
        "fast: {}, slow: {}{}",
        show(f),
        show(s),
        if fast_is_faster { "" } else { " (fast is not faster)" }
    );
    Ok(SpeedReport {
        fast_steps: f,
        slow_steps: s,
        fast_is_faster,
        diagnostic,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    /// Pooled label recall over all frames.
    pub recall: f64,
    /// Pooled intersection over union.
    pub jaccard: f64,
    pub per_frame: Vec<f64>,
    /// Frames whose label mask is empty; counted as 1.0.
    pub vacuous_frames: Vec<usize>,
}

/// Fraction of labeled cells the maps mark salient, pooled over frames.
pub fn overlap_rate(maps: &[SaliencyMap], labels: &[LabelMask]) -> Result<OverlapReport> {
    if maps.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} maps but {} label masks",
            maps.len(),
            labels.len()
        )));
    }
    let (mut hit, mut labeled, mut union) = (0usize, 0usize, 0usize);
    let mut per_frame = Vec::with_capacity(maps.len());
    let mut vacuous = Vec::new();
    for (i, (m, l)) in maps.iter().zip(labels).enumerate() {
        if m.cols != l.cols || m.rows != l.rows {
            return Err(Error::invalid(format!(
                "frame {i}: map {}×{} vs labels {}×{}",
                m.cols, m.rows, l.cols, l.rows
            )));
        }
        let (mut h, mut n, mut u) = (0, 0, 0);
        for (c, &lab) in l.cells.iter().enumerate() {
            let sal = m.is_salient(c);
            if lab {
                n += 1;
                if sal {
                    h += 1;
                }
            }
            if lab || sal {
                u += 1;
            }
        }
        if n == 0 {
            vacuous.push(i);
            per_frame.push(1.0);
        } else {
            per_frame.push(h as f64 / n as f64);
        }
        hit += h;
        labeled += n;
        union += u;
    }
    Ok(OverlapReport {
        recall: if labeled == 0 { 1.0 } else { hit as f64 / labeled as f64 },
        jaccard: if union == 0 { 1.0 } else { hit as f64 / union as f64 },
        per_frame,
        vacuous_frames: vacuous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::tactile::grasp::{adaptation_scenario, nociception_scenario};
    use crate::tactile::run_scenario;

    fn map(cols: usize, rows: usize, salient: &[usize]) -> SaliencyMap {
        let mut r = vec![300e3; cols * rows];
        for &i in salient {
            r[i] = 50e3;
        }
        SaliencyMap::from_resistance(cols, rows, r, 100e3)
    }

    fn mask(cols: usize, rows: usize, on: &[usize]) -> LabelMask {
        let mut m = LabelMask::empty(cols, rows);
        for &i in on {
            m.cells[i] = true;
        }
        m
    }

    #[test]
    fn overlap_examples() {
        let r = overlap_rate(&[map(4, 2, &[])], &[mask(4, 2, &[])]).unwrap();
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.vacuous_frames, vec![0]);

        let r = overlap_rate(&[map(4, 2, &[1, 2])], &[mask(4, 2, &[1, 2])]).unwrap();
        assert_eq!((r.recall, r.jaccard), (1.0, 1.0));

        let maps = [map(4, 2, &[0, 1]), map(4, 2, &[4])];
        let labels = [mask(4, 2, &[0, 1, 2, 3]), mask(4, 2, &[4, 5])];
        let r = overlap_rate(&maps, &labels).unwrap();
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.per_frame, vec![0.5, 0.5]);

        assert!(overlap_rate(&[map(4, 2, &[])], &[mask(2, 4, &[])]).is_err());
        assert!(overlap_rate(&[], &[mask(2, 4, &[])]).is_err());
    }

    #[test]
    fn amplification_identity_and_clamp() {
        let cfg = Config::default();
        let t = run_scenario(&nociception_scenario(8.0, 50), &cfg).unwrap();
        assert!((amplification_ratio(&t, &t).unwrap() - 100.0 * t.rows.iter().map(|r| r.gain).fold(0.0, f64::max)).abs() < 1e-9);
        let base = t.unity_baseline();
        assert!((amplification_ratio(&base, &base).unwrap() - 100.0).abs() < 1e-12);

        let mut clamped = t.clone();
        for r in &mut clamped.rows {
            r.gain = 8.5;
            r.output = 8.5 * r.response;
        }
        assert!((amplification_ratio(&clamped, &base).unwrap() - 850.0).abs() < 1e-9);
        assert!(amplification_ratio(&t, &t.window(0, 10)).is_err());
    }

    #[test]
    fn adaptation_examples() {
        let cfg = Config::default();
        let mut t = run_scenario(&adaptation_scenario(2.0, 100, false), &cfg).unwrap();
        let t_ref = t.rows[10].t;
        assert_eq!(adaptation_level_from(&t, t_ref, t_ref).unwrap(), 0.0);
        let half = t.rows[10].output / 2.0;
        t.rows[40].output = half;
        let l = adaptation_level_from(&t, t_ref, t.rows[40].t).unwrap();
        assert!((l - 50.0).abs() < 1e-9);
        assert!(adaptation_level_from(&t, t_ref, 0.0).is_err());
    }

    #[test]
    fn speed_report() {
        let cfg = Config::default();
        let slow = run_scenario(&adaptation_scenario(2.0, 300, false), &cfg).unwrap();
        let fast = run_scenario(&adaptation_scenario(2.0, 300, true), &cfg).unwrap();
        let r = speed_comparison(&fast, &slow).unwrap();
        assert!(r.fast_is_faster, "{}", r.diagnostic);
        let same = speed_comparison(&slow, &slow).unwrap();
        assert!(!same.fast_is_faster);
        assert_eq!(same.fast_steps, same.slow_steps);

        let dead = Config::from_text("[templates]\nadapt_slow = 0.0, 10e-6, 0.3, 12\n", "c").unwrap();
        let inert = run_scenario(&adaptation_scenario(2.0, 300, false), &dead).unwrap();
        assert_eq!(time_to_attenuation(&inert, 0, 0.5), None);
    }
}
