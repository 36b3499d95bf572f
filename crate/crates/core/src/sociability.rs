//! Street-level sociability indicators from per-frame object detections:
//! projected pedestrian spacing, distancing safety rate, class densities and
//! hour-of-day profiles.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::BufRead;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Assumed standing height of every person, meters.
pub const PERSON_HEIGHT_M: f64 = 1.70;
pub const FEET_PER_METER: f64 = 3.28084;
/// Pairs strictly closer than this are violations.
pub const DISTANCING_FT: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Person,
    Car,
    Truck,
    Bicycle,
    Bus,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 5] = [
        ObjectClass::Person,
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Bicycle,
        ObjectClass::Bus,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Person => "person",
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::Bus => "bus",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown object class {s:?}")))
    }
}

/// Pixel bounding box; `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn centroid(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub camera_id: String,
    /// UTC seconds
    pub t: i64,
    pub objects: Vec<Detection>,
}

impl DetectionFrame {
    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            let b = &o.bbox;
            if !(b.w > 0.0 && b.h > 0.0 && b.x.is_finite() && b.y.is_finite() && b.w.is_finite() && b.h.is_finite())
            {
                return Err(Error::Invalid(format!(
                    "camera {} t={}: object {i} has a degenerate box {:?}",
                    self.camera_id, self.t, b
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self, class: ObjectClass) -> u64 {
        self.objects.iter().filter(|o| o.class == class).count() as u64
    }
}

/// Meters per pixel at a person's depth, from the uniform-height assumption.
pub fn rp_ratio(bbox: &BBox) -> Result<f64> {
    if bbox.h.is_nan() || bbox.h <= 0.0 {
        return Err(Error::Invalid(format!("box height must be positive, got {}", bbox.h)));
    }
    Ok(PERSON_HEIGHT_M / bbox.h)
}

/// Projected centroid separation of two persons, feet. The pixel distance is
/// scaled by the mean of the two meter-per-pixel ratios.
pub fn pair_distance(a: &BBox, b: &BBox) -> Result<f64> {
    let ratio = (rp_ratio(a)? + rp_ratio(b)?) / 2.0;
    let (ax, ay) = a.centroid();
    let (bx, by) = b.centroid();
    Ok((ax - bx).hypot(ay - by) * ratio * FEET_PER_METER)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMeasure {
    /// object indices within the frame, `i < j`
    pub i: usize,
    pub j: usize,
    pub distance_ft: f64,
    pub violation: bool,
}

/// Every unordered pair of persons in the frame.
pub fn frame_pairs(frame: &DetectionFrame) -> Result<Vec<PairMeasure>> {
    let persons: Vec<(usize, &BBox)> = frame
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.class == ObjectClass::Person)
        .map(|(i, o)| (i, &o.bbox))
        .collect();
    let mut out = Vec::with_capacity(persons.len() * persons.len().saturating_sub(1) / 2);
    for (k, &(i, a)) in persons.iter().enumerate() {
        for &(j, b) in &persons[k + 1..] {
            let d = pair_distance(a, b)?;
            out.push(PairMeasure {
                i,
                j,
                distance_ft: d,
                violation: d < DISTANCING_FT,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDensity {
    /// objects per frame
    pub mean: f64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SociabilityReport {
    pub frames: u64,
    pub avg_pedestrian_density: f64,
    pub max_pedestrian_density: u64,
    /// pooled over all pairs; None without pairs
    pub safety_rate: Option<f64>,
    /// mean of per-frame rates over frames that have pairs
    pub mean_frame_safety_rate: Option<f64>,
    pub frames_with_pairs: u64,
    pub total_pairs: u64,
    pub total_violations: u64,
    pub class_density: BTreeMap<ObjectClass, ClassDensity>,
}

/// Partial aggregate over a set of frames. [`merge`](Self::merge) is
/// associative and commutative, so frames can be folded in any grouping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SociabilityAccumulator {
    frames: u64,
    class_total: [u64; 5],
    class_max: [u64; 5],
    pairs: u64,
    violations: u64,
    frames_with_pairs: u64,
    frame_rate_sum: f64,
}

impl SociabilityAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_frame(&mut self, frame: &DetectionFrame) -> Result<()> {
        let pairs = frame_pairs(frame)?;
        let mut counts = [0u64; 5];
        for o in &frame.objects {
            counts[o.class.index()] += 1;
        }
        let violations = pairs.iter().filter(|p| p.violation).count() as u64;
        let mut one = Self {
            frames: 1,
            class_total: counts,
            class_max: counts,
            pairs: pairs.len() as u64,
            violations,
            ..Self::default()
        };
        if !pairs.is_empty() {
            one.frames_with_pairs = 1;
            one.frame_rate_sum = 1.0 - violations as f64 / pairs.len() as f64;
        }
        self.merge(&one);
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        self.frames += other.frames;
        for k in 0..5 {
            self.class_total[k] += other.class_total[k];
            self.class_max[k] = self.class_max[k].max(other.class_max[k]);
        }
        self.pairs += other.pairs;
        self.violations += other.violations;
        self.frames_with_pairs += other.frames_with_pairs;
        self.frame_rate_sum += other.frame_rate_sum;
    }

    pub fn report(&self) -> Result<SociabilityReport> {
        if self.frames == 0 {
            return Err(Error::Empty("detection frames"));
        }
        let n = self.frames as f64;
        let class_density = ObjectClass::ALL
            .iter()
            .map(|&c| {
                (
                    c,
                    ClassDensity {
                        mean: self.class_total[c.index()] as f64 / n,
                        max: self.class_max[c.index()],
                    },
                )
            })
            .collect();
        let p = ObjectClass::Person.index();
        Ok(SociabilityReport {
            frames: self.frames,
            avg_pedestrian_density: self.class_total[p] as f64 / n,
            max_pedestrian_density: self.class_max[p],
            safety_rate: (self.pairs > 0).then(|| (self.pairs - self.violations) as f64 / self.pairs as f64),
            mean_frame_safety_rate: (self.frames_with_pairs > 0)
                .then(|| self.frame_rate_sum / self.frames_with_pairs as f64),
            frames_with_pairs: self.frames_with_pairs,
            total_pairs: self.pairs,
            total_violations: self.violations,
            class_density,
        })
    }
}

pub fn aggregate(frames: &[DetectionFrame]) -> Result<SociabilityReport> {
    frames
        .par_iter()
        .map(|f| {
            let mut a = SociabilityAccumulator::new();
            a.add_frame(f)?;
            Ok::<_, Error>(a)
        })
        .try_reduce(SociabilityAccumulator::new, |mut a, b| {
            a.merge(&b);
            Ok(a)
        })?
        .report()
}

/// Per-class object counts and frame counts by local hour of day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalProfile {
    pub frames: [u64; 24],
    pub totals: BTreeMap<ObjectClass, [u64; 24]>,
}

impl TemporalProfile {
    /// Mean objects per frame; None for an hour without frames.
    pub fn mean(&self, class: ObjectClass, hour: usize) -> Option<f64> {
        let n = self.frames[hour];
        (n > 0).then(|| self.totals[&class][hour] as f64 / n as f64)
    }

    pub fn is_empty_hour(&self, hour: usize) -> bool {
        self.frames[hour] == 0
    }

    /// `class,hour,mean_density,frames`; empty hours leave `mean_density` blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,hour,mean_density,frames\n");
        for c in ObjectClass::ALL {
            for h in 0..24 {
                let mean = self.mean(c, h).map(|m| format!("{m}")).unwrap_or_default();
                let _ = writeln!(out, "{c},{h},{mean},{}", self.frames[h]);
            }
        }
        out
    }
}

/// Local hour of a UTC timestamp shifted by `tz_offset` hours.
pub fn local_hour(t: i64, tz_offset: f64) -> usize {
    let shifted = t + (tz_offset * 3600.0).round() as i64;
    (shifted.rem_euclid(86_400) / 3600) as usize
}

pub fn temporal_profile(frames: &[DetectionFrame], tz_offset: f64) -> Result<TemporalProfile> {
    if frames.is_empty() {
        return Err(Error::Empty("detection frames"));
    }
    let mut p = TemporalProfile {
        frames: [0; 24],
        totals: ObjectClass::ALL.iter().map(|&c| (c, [0; 24])).collect(),
    };
    for f in frames {
        let h = local_hour(f.t, tz_offset);
        p.frames[h] += 1;
        for o in &f.objects {
            p.totals.get_mut(&o.class).expect("all classes present")[h] += 1;
        }
    }
    Ok(p)
}

/// Read a JSON Lines detection stream. Blank lines are skipped; boxes must
/// be non-degenerate and each camera's timestamps non-decreasing.
pub fn read_frames<R: BufRead>(reader: R, source: &str) -> Result<Vec<DetectionFrame>> {
    let mut frames = Vec::new();
    let mut last_t: BTreeMap<String, i64> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: DetectionFrame =
            serde_json::from_str(&line).map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        f.validate().map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        if let Some(&prev) = last_t.get(&f.camera_id) {
            if f.t < prev {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("camera {}: timestamp {} precedes {prev}", f.camera_id, f.t),
                ));
            }
        }
        last_t.insert(f.camera_id.clone(), f.t);
        frames.push(f);
    }
    if frames.is_empty() {
        return Err(Error::Empty("detection frames"));
    }
    Ok(frames)
}
