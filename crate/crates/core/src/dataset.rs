//! Labeled trajectory datasets: on-disk JSON format, range normalization, and
//! a deterministic synthetic generator of visually distinct planar classes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Per-dimension affine map stats, stored so raw-unit points stay recoverable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub target_lo: f64,
    pub target_hi: f64,
}

impl NormalizationStats {
    fn degenerate(&self, d: usize) -> bool {
        (self.maxs[d] - self.mins[d]).abs() < 1e-300
    }

    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        let mid = 0.5 * (self.target_lo + self.target_hi);
        point
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                if self.degenerate(d) {
                    mid
                } else {
                    let mapped = self.target_lo
                        + (x - self.mins[d]) * (self.target_hi - self.target_lo)
                            / (self.maxs[d] - self.mins[d]);
                    // Guard against one-ulp overshoot at the range endpoints.
                    mapped.clamp(self.target_lo, self.target_hi)
                }
            })
            .collect()
    }

    pub fn invert(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                if self.degenerate(d) {
                    self.mins[d]
                } else {
                    self.mins[d]
                        + (x - self.target_lo) * (self.maxs[d] - self.mins[d])
                            / (self.target_hi - self.target_lo)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "T")]
    pub timesteps: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub normalization: Option<NormalizationStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrajectory {
    pub label: String,
    pub points: Vec<Vec<f64>>,
}

/// K labeled sequences of equal length in a shared output space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub format_version: u32,
    pub meta: DatasetMeta,
    pub classes: Vec<ClassTrajectory>,
}

impl TrajectoryDataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn timesteps(&self) -> usize {
        self.meta.timesteps
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::schema(format!(
                "unsupported dataset format_version {}",
                self.format_version
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::schema("dataset field 'classes' is empty"));
        }
        if self.meta.timesteps == 0 || self.meta.dim == 0 {
            return Err(Error::schema("dataset meta T and D must be positive"));
        }
        for (k, class) in self.classes.iter().enumerate() {
            if class.points.len() != self.meta.timesteps {
                return Err(Error::schema(format!(
                    "class {k} ('{}') has {} points, expected T={}",
                    class.label,
                    class.points.len(),
                    self.meta.timesteps
                )));
            }
            for (t, p) in class.points.iter().enumerate() {
                if p.len() != self.meta.dim {
                    return Err(Error::schema(format!(
                        "class {k} ('{}') point {t} has {} dims, expected D={}",
                        class.label,
                        p.len(),
                        self.meta.dim
                    )));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::schema(format!(
                        "class {k} ('{}') point {t} contains a non-finite value",
                        class.label
                    )));
                }
            }
        }
        if let Some(stats) = &self.meta.normalization {
            if stats.mins.len() != self.meta.dim || stats.maxs.len() != self.meta.dim {
                return Err(Error::schema(
                    "normalization stats must have one min/max per dimension",
                ));
            }
            let (lo, hi) = (stats.target_lo, stats.target_hi);
            for class in &self.classes {
                for p in &class.points {
                    if p.iter().any(|&v| v < lo - 1e-9 || v > hi + 1e-9) {
                        return Err(Error::schema(format!(
                            "class '{}' has points outside the normalized range [{lo}, {hi}]",
                            class.label
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Affine per-dimension map of all points into [target_lo, target_hi].
    /// Constant dimensions map to the range midpoint. Stats are recorded in
    /// the meta so the raw units can be recovered.
    pub fn normalize(&self, target_lo: f64, target_hi: f64) -> Result<TrajectoryDataset> {
        if self.meta.normalization.is_some() {
            return Err(Error::argument("dataset is already normalized"));
        }
        if !(target_hi > target_lo) {
            return Err(Error::argument("target range must be non-empty"));
        }
        let d = self.meta.dim;
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for class in &self.classes {
            for p in &class.points {
                for i in 0..d {
                    mins[i] = mins[i].min(p[i]);
                    maxs[i] = maxs[i].max(p[i]);
                }
            }
        }
        let stats = NormalizationStats {
            mins,
            maxs,
            target_lo,
            target_hi,
        };
        let classes = self
            .classes
            .iter()
            .map(|c| ClassTrajectory {
                label: c.label.clone(),
                points: c.points.iter().map(|p| stats.apply(p)).collect(),
            })
            .collect();
        Ok(TrajectoryDataset {
            format_version: self.format_version,
            meta: DatasetMeta {
                timesteps: self.meta.timesteps,
                dim: self.meta.dim,
                normalization: Some(stats),
            },
            classes,
        })
    }

    /// Undo a stored normalization, reproducing raw-unit points.
    pub fn denormalize(&self) -> Result<TrajectoryDataset> {
        let stats = self
            .meta
            .normalization
            .as_ref()
            .ok_or_else(|| Error::argument("dataset has no normalization stats"))?;
        let classes = self
            .classes
            .iter()
            .map(|c| ClassTrajectory {
                label: c.label.clone(),
                points: c.points.iter().map(|p| stats.invert(p)).collect(),
            })
            .collect();
        Ok(TrajectoryDataset {
            format_version: self.format_version,
            meta: DatasetMeta {
                timesteps: self.meta.timesteps,
                dim: self.meta.dim,
                normalization: None,
            },
            classes,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ds: TrajectoryDataset = serde_json::from_str(json)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json)
    }
}

/// Parametric curve family used for one synthetic class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFamily {
    Ellipse,
    Lissajous,
    Polygon,
    Spiral,
    FigureEight,
}

impl CurveFamily {
    const ALL: [CurveFamily; 5] = [
        CurveFamily::Ellipse,
        CurveFamily::Lissajous,
        CurveFamily::Polygon,
        CurveFamily::Spiral,
        CurveFamily::FigureEight,
    ];

    fn name(&self) -> &'static str {
        match self {
            CurveFamily::Ellipse => "ellipse",
            CurveFamily::Lissajous => "lissajous",
            CurveFamily::Polygon => "polygon",
            CurveFamily::Spiral => "spiral",
            CurveFamily::FigureEight => "figure-eight",
        }
    }
}

/// Recipe for a synthetic dataset: K planar curve classes of length T, the
/// final point held for `hold_tail` steps (mimicking a pen that stops while
/// the recording keeps running).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub timesteps: usize,
    pub dim: usize,
    pub hold_tail: usize,
    pub seed: u64,
    /// When set, every class draws from this one family (classes become
    /// rotated/scaled variants of a shared shape, which makes them mutually
    /// confusable the way letters are). When None, classes cycle through all
    /// five families.
    #[serde(default)]
    pub base_family: Option<CurveFamily>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 5,
            timesteps: 100,
            dim: 3,
            hold_tail: 10,
            seed: 0,
            base_family: None,
        }
    }
}

fn rotate(x: f64, y: f64, phi: f64) -> (f64, f64) {
    (x * phi.cos() - y * phi.sin(), x * phi.sin() + y * phi.cos())
}

/// (x, y) of class curve at sequence position u in [0, 1].
fn curve_point(family: CurveFamily, u: f64, p: &ClassParams) -> (f64, f64) {
    let theta = 2.0 * std::f64::consts::PI * u;
    let (x, y) = match family {
        CurveFamily::Ellipse => (p.a * theta.cos(), p.b * theta.sin()),
        CurveFamily::Lissajous => (
            p.a * (p.freq_p * theta + p.phase).sin(),
            p.b * (p.freq_q * theta).sin(),
        ),
        CurveFamily::Polygon => {
            let m = p.sides as f64;
            let s = u * m;
            let edge = s.floor().min(m - 1.0);
            let frac = s - edge;
            let vertex = |i: f64| {
                let ang = 2.0 * std::f64::consts::PI * i / m + p.phase;
                (p.a * ang.cos(), p.b * ang.sin())
            };
            let (x0, y0) = vertex(edge);
            let (x1, y1) = vertex(edge + 1.0);
            (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))
        }
        CurveFamily::Spiral => {
            let turns = p.freq_p;
            let r = p.a * (0.15 + 0.85 * u);
            (
                r * (turns * theta + p.phase).cos(),
                r * (turns * theta + p.phase).sin(),
            )
        }
        CurveFamily::FigureEight => (p.a * theta.sin(), p.b * theta.sin() * theta.cos()),
    };
    // Fast epicycle riding on the slow base shape, so every class carries
    // structure at two timescales (stroke detail over letter-scale form).
    // Integer frequency keeps closed base curves closed at u = 1.
    let x = x + p.detail_amp * (p.detail_freq * theta + p.detail_phase).cos();
    let y = y + p.detail_amp * (p.detail_freq * theta + p.detail_phase).sin();
    rotate(x, y, p.rotation)
}

struct ClassParams {
    a: f64,
    b: f64,
    phase: f64,
    rotation: f64,
    freq_p: f64,
    freq_q: f64,
    sides: u32,
    center: (f64, f64),
    detail_amp: f64,
    detail_freq: f64,
    detail_phase: f64,
}

/// Deterministic synthetic dataset at paper-compatible shape, normalized into
/// [-0.9, 0.9]. Classes cycle through the five curve families; repeat visits
/// to a family get new rotations, scales, and frequencies.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TrajectoryDataset> {
    if spec.num_classes == 0 {
        return Err(Error::argument("num_classes must be >= 1"));
    }
    if spec.dim < 2 {
        return Err(Error::argument("synthetic curves need dim >= 2"));
    }
    if spec.hold_tail + 2 > spec.timesteps {
        return Err(Error::argument(
            "hold_tail leaves fewer than 2 moving steps",
        ));
    }
    let mut rng = Rng::new(spec.seed);
    let golden = 2.399_963_229_728_653;
    let moving = spec.timesteps - spec.hold_tail;
    let mut classes = Vec::with_capacity(spec.num_classes);
    for k in 0..spec.num_classes {
        let family = spec
            .base_family
            .unwrap_or(CurveFamily::ALL[k % CurveFamily::ALL.len()]);
        let variant = (k / CurveFamily::ALL.len()) as f64;
        let lissajous_pairs = [(1.0, 2.0), (3.0, 2.0), (2.0, 3.0), (3.0, 4.0), (5.0, 4.0)];
        let pair = lissajous_pairs[(k / CurveFamily::ALL.len()) % lissajous_pairs.len()];
        let scale = 1.0 / (1.0 + 0.45 * variant);
        let params = ClassParams {
            a: scale * rng.uniform_in(0.65, 1.0),
            b: scale * rng.uniform_in(0.45, 0.85),
            phase: rng.uniform_in(0.2, 1.4),
            rotation: golden * k as f64 + rng.uniform_in(-0.2, 0.2),
            freq_p: if family == CurveFamily::Spiral {
                2.0 + variant.min(2.0)
            } else {
                pair.0
            },
            freq_q: pair.1,
            sides: 3 + ((k / CurveFamily::ALL.len()) as u32 % 4),
            center: (rng.uniform_in(-0.2, 0.2), rng.uniform_in(-0.2, 0.2)),
            // One shared stroke-scale motif across classes; class identity
            // lives in the slow base shape.
            detail_amp: scale * 0.11,
            detail_freq: 10.0,
            detail_phase: rng.uniform_in(0.0, 2.0 * std::f64::consts::PI),
        };
        let mut points = Vec::with_capacity(spec.timesteps);
        for t in 0..moving {
            let u = t as f64 / (moving - 1) as f64;
            let (x, y) = curve_point(family, u, &params);
            let mut p = vec![params.center.0 + x, params.center.1 + y];
            p.resize(spec.dim, 0.0); // remaining dims constant: table-plane drawing
            points.push(p);
        }
        let last = points.last().cloned().unwrap();
        for _ in 0..spec.hold_tail {
            points.push(last.clone());
        }
        classes.push(ClassTrajectory {
            label: format!("{}-{k}", family.name()),
            points,
        });
    }
    let raw = TrajectoryDataset {
        format_version: DATASET_FORMAT_VERSION,
        meta: DatasetMeta {
            timesteps: spec.timesteps,
            dim: spec.dim,
            normalization: None,
        },
        classes,
    };
    let normalized = raw.normalize(-0.9, 0.9)?;
    normalized.validate()?;
    Ok(normalized)
}
