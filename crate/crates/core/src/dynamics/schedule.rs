//! Piecewise qubit-frequency schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Envelope {
    Rectangular,
    /// exp(-(|t - T/2| / width)^(2 order) / 2); order 1 is a Gaussian.
    SuperGaussian { order: u32, width: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64, duration: f64) -> f64 {
        match *self {
            Envelope::Rectangular => 1.0,
            Envelope::SuperGaussian { order, width } => {
                let x = ((t - 0.5 * duration) / width).abs();
                (-0.5 * x.powi(2 * order as i32)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Segment {
    Hold { omega_q: f64, duration: f64 },
    Ramp { start: f64, end: f64, duration: f64 },
    /// omega_q = center + amplitude * envelope(t) * sin(2 pi mod_frequency t).
    Sine { center: f64, amplitude: f64, mod_frequency: f64, duration: f64, envelope: Envelope },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Hold { duration, .. } | Segment::Ramp { duration, .. } | Segment::Sine { duration, .. } => duration,
        }
    }

    /// Nominal start and end frequencies used for contiguity; a sine segment
    /// is anchored at its centre.
    pub fn endpoints(&self) -> (f64, f64) {
        match *self {
            Segment::Hold { omega_q, .. } => (omega_q, omega_q),
            Segment::Ramp { start, end, .. } => (start, end),
            Segment::Sine { center, .. } => (center, center),
        }
    }

    /// Frequency at local time `t` in [0, duration].
    pub fn omega_q(&self, t: f64) -> f64 {
        match *self {
            Segment::Hold { omega_q, .. } => omega_q,
            Segment::Ramp { start, end, duration } => start + (end - start) * (t / duration).clamp(0.0, 1.0),
            Segment::Sine { center, amplitude, mod_frequency, duration, envelope } => {
                center + amplitude * envelope.value(t, duration) * (TWO_PI * mod_frequency * t).sin()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    segments: Vec<Segment>,
    starts: Vec<f64>,
}

/// Frequency mismatch tolerated between consecutive segments, GHz.
const CONTIGUITY: f64 = 1e-9;

impl PulseSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::validation("schedule has no segments"));
        }
        for (k, s) in segments.iter().enumerate() {
            let d = s.duration();
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::validation(format!("segment {k} has non-positive duration {d}")));
            }
            let (a, b) = s.endpoints();
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::validation(format!("segment {k} has a non-finite frequency")));
            }
            if let Segment::Sine { envelope: Envelope::SuperGaussian { order, width }, .. } = s {
                if *order == 0 || !(*width > 0.0) {
                    return Err(Error::validation(format!("segment {k}: supergaussian needs order >= 1 and width > 0")));
                }
            }
            if k > 0 {
                let prev = segments[k - 1].endpoints().1;
                if (prev - a).abs() > CONTIGUITY {
                    return Err(Error::validation(format!(
                        "schedule not contiguous at segment {k}: {prev} GHz then {a} GHz"
                    )));
                }
            }
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut t = 0.0;
        for s in &segments {
            starts.push(t);
            t += s.duration();
        }
        Ok(PulseSchedule { segments, starts })
    }

    pub fn hold(omega_q: f64, duration: f64) -> Result<Self> {
        PulseSchedule::new(vec![Segment::Hold { omega_q, duration }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.starts.last().unwrap() + self.segments.last().unwrap().duration()
    }

    /// Segment start times after the first, plus the end time.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.starts[1..].to_vec();
        b.push(self.duration());
        b
    }

    pub fn omega_q(&self, t: f64) -> f64 {
        let k = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        self.segments[k].omega_q(t - self.starts[k])
    }

    pub fn end_frequency(&self) -> f64 {
        self.segments.last().unwrap().endpoints().1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguity_is_enforced() {
        let ok = PulseSchedule::new(vec![
            Segment::Hold { omega_q: 7.5, duration: 10.0 },
            Segment::Ramp { start: 7.5, end: 8.0, duration: 5.0 },
            Segment::Hold { omega_q: 8.0, duration: 1.0 },
        ])
        .unwrap();
        assert_eq!(ok.duration(), 16.0);
        assert!((ok.omega_q(12.5) - 7.75).abs() < 1e-12);
        assert_eq!(ok.omega_q(15.5), 8.0);
        let bad = PulseSchedule::new(vec![
            Segment::Hold { omega_q: 7.5, duration: 10.0 },
            Segment::Hold { omega_q: 7.6, duration: 10.0 },
        ]);
        assert!(matches!(bad, Err(Error::Validation(_))));
        assert!(PulseSchedule::hold(7.0, 0.0).is_err());
    }

    #[test]
    fn supergaussian_peaks_mid_pulse() {
        let e = Envelope::SuperGaussian { order: 2, width: 40.0 };
        assert_eq!(e.value(80.0, 160.0), 1.0);
        assert!(e.value(0.0, 160.0) < 1e-3);
        assert!((e.value(40.0, 160.0) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn boundaries_list_segment_edges() {
        let s = PulseSchedule::new(vec![
            Segment::Sine {
                center: 7.5,
                amplitude: 0.1,
                mod_frequency: 0.3,
                duration: 160.0,
                envelope: Envelope::Rectangular,
            },
            Segment::Hold { omega_q: 7.5, duration: 40.0 },
        ])
        .unwrap();
        assert_eq!(s.boundaries(), vec![160.0, 200.0]);
    }
}
