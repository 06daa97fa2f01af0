//! Scattered data sets, normalization and the peaks test function.

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect};
use crate::scalar::Real;
use crate::spatial::max_nearest_gap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Lower and upper bound of the normalized predictor box.
pub const NORMALIZED_MIN: f64 = 0.2;
pub const NORMALIZED_MAX: f64 = 0.8;

/// Affine maps between raw and normalized coordinates.
///
/// Predictors are scaled by one factor so that the longer axis spans
/// `[0.2, 0.8]` exactly and the shorter one is centred. Responses are
/// min-max scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub raw_min: [f64; 2],
    pub raw_max: [f64; 2],
    pub scale: f64,
    pub shift: [f64; 2],
    pub y_min: f64,
    pub y_max: f64,
    /// Set when every response was equal; all values then map to 0.
    pub constant_response: bool,
}

impl Normalization {
    pub fn fit(points: &[[f64; 2]], values: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateExtent);
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = [hi[0] - lo[0], hi[1] - lo[1]];
        let longest = extent[0].max(extent[1]);
        if !(longest > 0.0) || !longest.is_finite() {
            return Err(Error::DegenerateExtent);
        }
        let span = NORMALIZED_MAX - NORMALIZED_MIN;
        let scale = span / longest;
        let shift = [
            NORMALIZED_MIN + 0.5 * (span - extent[0] * scale),
            NORMALIZED_MIN + 0.5 * (span - extent[1] * scale),
        ];
        let y_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let constant_response = !(y_max > y_min);
        if constant_response {
            log::warn!("response column is constant; normalized values set to 0");
        }
        Ok(Normalization {
            raw_min: lo,
            raw_max: hi,
            scale,
            shift,
            y_min,
            y_max,
            constant_response,
        })
    }

    pub fn point(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.shift[0] + (p[0] - self.raw_min[0]) * self.scale,
            self.shift[1] + (p[1] - self.raw_min[1]) * self.scale,
        ]
    }

    pub fn point_inverse(&self, q: [f64; 2]) -> [f64; 2] {
        [
            self.raw_min[0] + (q[0] - self.shift[0]) / self.scale,
            self.raw_min[1] + (q[1] - self.shift[1]) / self.scale,
        ]
    }

    pub fn value(&self, y: f64) -> f64 {
        if self.constant_response {
            0.0
        } else {
            (y - self.y_min) / (self.y_max - self.y_min)
        }
    }

    pub fn value_inverse(&self, v: f64) -> f64 {
        if self.constant_response {
            self.y_min
        } else {
            self.y_min + v * (self.y_max - self.y_min)
        }
    }

    /// Derivatives scale by `range / scale` per order of differentiation.
    pub fn gradient_inverse(&self, g: f64) -> f64 {
        if self.constant_response {
            0.0
        } else {
            g * (self.y_max - self.y_min) * self.scale
        }
    }
}

/// Scattered predictor/response pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet<T> {
    pub points: Vec<Point2<T>>,
    pub values: Vec<T>,
    /// Present when the set was normalized from raw coordinates.
    pub normalization: Option<Normalization>,
    /// Largest nearest-neighbour distance between data points.
    pub spacing: f64,
}

impl<T: Real> DataSet<T> {
    pub fn new(points: Vec<Point2<T>>, values: Vec<T>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InsufficientData {
                requested: 1,
                available: 0,
            });
        }
        let spacing = max_nearest_gap(&points);
        Ok(DataSet {
            points,
            values,
            normalization: None,
            spacing,
        })
    }

    /// Normalize raw `(x1, x2, y)` triples.
    pub fn normalized(raw: &[[f64; 3]]) -> Result<Self> {
        let pts: Vec<[f64; 2]> = raw.iter().map(|r| [r[0], r[1]]).collect();
        let ys: Vec<f64> = raw.iter().map(|r| r[2]).collect();
        let norm = Normalization::fit(&pts, &ys)?;
        let points = pts
            .iter()
            .map(|&p| {
                let q = norm.point(p);
                Point2::new(T::lit(q[0]), T::lit(q[1]))
            })
            .collect();
        let values = ys.iter().map(|&y| T::lit(norm.value(y))).collect();
        let mut set = DataSet::new(points, values)?;
        set.normalization = Some(norm);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> Rect<T> {
        Rect::bounding(&self.points).expect("data set is non-empty")
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut s = DataSet::new(
            idx.iter().map(|&i| self.points[i]).collect(),
            idx.iter().map(|&i| self.values[i]).collect(),
        )?;
        s.normalization = self.normalization.clone();
        Ok(s)
    }
}

/// Read `x1, x2, y` from the first three numeric columns of a CSV file.
///
/// Rows whose leading fields do not parse are treated as a header only on
/// the first line; anywhere else they are an error.
pub fn read_csv_xyz(path: &Path) -> Result<Vec<[f64; 3]>> {
    let file = std::fs::File::open(path)?;
    parse_csv_xyz(file)
}

pub fn parse_csv_xyz<R: std::io::Read>(reader: R) -> Result<Vec<[f64; 3]>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(k + 1);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        let nums: Vec<f64> = rec
            .iter()
            .filter_map(|f| f.parse::<f64>().ok())
            .take(3)
            .collect();
        if nums.len() < 3 {
            if k == 0 && out.is_empty() {
                continue;
            }
            return Err(Error::parse(line, "expected three numeric columns"));
        }
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(line, "non-finite value"));
        }
        out.push([nums[0], nums[1], nums[2]]);
    }
    if out.is_empty() {
        return Err(Error::parse(1, "no data rows"));
    }
    Ok(out)
}

/// Load and normalize a CSV data file.
pub fn ingest<T: Real>(path: &Path) -> Result<DataSet<T>> {
    DataSet::normalized(&read_csv_xyz(path)?)
}

/// Peaks-style test surface on `[-2.4, 2.4]²`.
pub mod peaks {
    use super::*;

    /// One term `Q(x) exp(φ(x))` with its derivatives up to the Laplacian.
    struct Term {
        q: f64,
        qx: f64,
        qy: f64,
        q_lap: f64,
        phi: f64,
        px: f64,
        py: f64,
        phi_lap: f64,
    }

    impl Term {
        fn value(&self) -> f64 {
            self.q * self.phi.exp()
        }
        fn grad(&self) -> [f64; 2] {
            let e = self.phi.exp();
            [e * (self.qx + self.q * self.px), e * (self.qy + self.q * self.py)]
        }
        fn laplacian(&self) -> f64 {
            let e = self.phi.exp();
            e * (self.q_lap
                + 2.0 * (self.qx * self.px + self.qy * self.py)
                + self.q * (self.phi_lap + self.px * self.px + self.py * self.py))
        }
    }

    fn terms(x: f64, y: f64) -> [Term; 3] {
        [
            Term {
                q: 3.0 * (1.0 - x).powi(2),
                qx: -6.0 * (1.0 - x),
                qy: 0.0,
                q_lap: 6.0,
                phi: -x * x - (y + 1.0).powi(2),
                px: -2.0 * x,
                py: -2.0 * (y + 1.0),
                phi_lap: -4.0,
            },
            Term {
                q: -10.0 * (x / 5.0 - x.powi(3) - y.powi(5)),
                qx: -2.0 + 30.0 * x * x,
                qy: 50.0 * y.powi(4),
                q_lap: 60.0 * x + 200.0 * y.powi(3),
                phi: -x * x - y * y,
                px: -2.0 * x,
                py: -2.0 * y,
                phi_lap: -4.0,
            },
            Term {
                q: -1.0 / 3.0,
                qx: 0.0,
                qy: 0.0,
                q_lap: 0.0,
                phi: -(x + 1.0).powi(2) - y * y,
                px: -2.0 * (x + 1.0),
                py: -2.0 * y,
                phi_lap: -4.0,
            },
        ]
    }

    pub fn value(x: f64, y: f64) -> f64 {
        terms(x, y).iter().map(Term::value).sum()
    }

    pub fn gradient(x: f64, y: f64) -> [f64; 2] {
        terms(x, y).iter().fold([0.0, 0.0], |acc, t| {
            let g = t.grad();
            [acc[0] + g[0], acc[1] + g[1]]
        })
    }

    pub fn laplacian(x: f64, y: f64) -> f64 {
        terms(x, y).iter().map(Term::laplacian).sum()
    }

    /// Sampling parameters of the synthetic peaks data.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct PeaksSpec {
        pub n: usize,
        pub half_width: f64,
        pub noise_sd: f64,
        /// Test points lie outside `[-test_half, test_half]²`.
        pub test_half: f64,
        /// Boundary-band sampling excludes `[-band_half, band_half]²`.
        pub band_half: f64,
    }

    impl Default for PeaksSpec {
        fn default() -> Self {
            PeaksSpec {
                n: 10_000,
                half_width: 2.4,
                noise_sd: 0.02,
                test_half: 2.2,
                band_half: 1.9,
            }
        }
    }

    /// Raw `(x1, x2, y)` samples with Gaussian noise, deterministic per seed.
    pub fn generate(spec: &PeaksSpec, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coord = Uniform::new_inclusive(-spec.half_width, spec.half_width)
            .expect("valid interval");
        let noise = Normal::new(0.0, spec.noise_sd).expect("valid deviation");
        (0..spec.n)
            .map(|_| {
                let x = coord.sample(&mut rng);
                let y = coord.sample(&mut rng);
                [x, y, value(x, y) + noise.sample(&mut rng)]
            })
            .collect()
    }
}
