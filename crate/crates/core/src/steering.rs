//! Array geometries, steering vectors and dictionary construction.
//!
//! Angles are radians. For a ULA only the azimuth matters; a planar array
//! additionally depends on the elevation through `cos(elevation)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Polar position of one sensor relative to the phase reference, in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub radius: f64,
    pub bearing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArrayGeometry {
    /// Uniform linear array with `spacing` given as `d / λ`.
    Ula { n_antennas: usize, spacing: f64 },
    /// Arbitrary planar array; the first sensor sits at the origin.
    Planar { sensors: Vec<Sensor> },
}

/// Which angle a steering derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleParam {
    Azimuth,
    Elevation,
}

impl ArrayGeometry {
    pub fn ula(n_antennas: usize, spacing: f64) -> Result<Self> {
        let g = ArrayGeometry::Ula { n_antennas, spacing };
        g.validate()?;
        Ok(g)
    }

    pub fn planar(sensors: Vec<Sensor>) -> Result<Self> {
        let g = ArrayGeometry::Planar { sensors };
        g.validate()?;
        Ok(g)
    }

    /// Rectangular `nx × ny` lattice converted to polar coordinates relative
    /// to the corner element, which becomes the phase reference.
    pub fn rectangular(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        let mut sensors = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let x = ix as f64 * dx;
                let y = iy as f64 * dy;
                sensors.push(Sensor {
                    radius: x.hypot(y),
                    bearing: y.atan2(x),
                });
            }
        }
        Self::planar(sensors)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ArrayGeometry::Ula { n_antennas, spacing } => {
                if *n_antennas < 2 {
                    return Err(Error::Config(format!("ULA needs at least 2 antennas, got {n_antennas}")));
                }
                if !(spacing.is_finite() && *spacing > 0.0) {
                    return Err(Error::Config(format!("ULA spacing must be positive, got {spacing}")));
                }
            }
            ArrayGeometry::Planar { sensors } => {
                if sensors.len() < 2 {
                    return Err(Error::Config(format!(
                        "planar array needs at least 2 sensors, got {}",
                        sensors.len()
                    )));
                }
                if sensors[0].radius != 0.0 {
                    return Err(Error::Config("first planar sensor must sit at the origin".into()));
                }
                if sensors.iter().any(|s| !s.radius.is_finite() || s.radius < 0.0 || !s.bearing.is_finite()) {
                    return Err(Error::Config("sensor radii must be finite and non-negative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_antennas(&self) -> usize {
        match self {
            ArrayGeometry::Ula { n_antennas, .. } => *n_antennas,
            ArrayGeometry::Planar { sensors } => sensors.len(),
        }
    }

    pub fn is_planar(&self) -> bool {
        matches!(self, ArrayGeometry::Planar { .. })
    }

    /// Azimuth interval covered by the dictionary grid.
    pub fn azimuth_span(&self) -> (f64, f64) {
        match self {
            ArrayGeometry::Ula { .. } => (-FRAC_PI_2, FRAC_PI_2),
            ArrayGeometry::Planar { .. } => (-PI, PI),
        }
    }

    /// Per-sensor phase `-2π (d_n/λ) cos(el) sin(az - ψ_n)` together with its
    /// azimuth and elevation derivatives.
    fn phase(&self, n: usize, azimuth: f64, elevation: f64) -> (f64, f64, f64) {
        match self {
            ArrayGeometry::Ula { spacing, .. } => {
                let k = -2.0 * PI * spacing * n as f64;
                (k * azimuth.sin(), k * azimuth.cos(), 0.0)
            }
            ArrayGeometry::Planar { sensors } => {
                let s = sensors[n];
                let k = -2.0 * PI * s.radius;
                let (sin_d, cos_d) = (azimuth - s.bearing).sin_cos();
                let (sin_e, cos_e) = elevation.sin_cos();
                (k * cos_e * sin_d, k * cos_e * cos_d, -k * sin_e * sin_d)
            }
        }
    }

    /// Load a geometry from a text file, see [`ArrayGeometry::parse`].
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parse the geometry text format.
    ///
    /// ```text
    /// # comments and blank lines are ignored
    /// ula 32 0.5          # shorthand: n_antennas spacing_over_wavelength
    /// rect 10 10 0.5 0.5  # shorthand: nx ny dx dy (wavelengths)
    /// 0.0 0.0             # otherwise one sensor per line: radius bearing
    /// 0.5 1.5708
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut sensors = Vec::new();
        let mut shorthand = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: idx + 1, msg };
            let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}")));
            let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("{s:?}: {e}")));
            match fields[0].to_ascii_lowercase().as_str() {
                "ula" if fields.len() == 3 => {
                    shorthand = Some(Self::ula(int(fields[1])?, num(fields[2])?)?);
                }
                "rect" if fields.len() == 5 => {
                    shorthand = Some(Self::rectangular(
                        int(fields[1])?,
                        int(fields[2])?,
                        num(fields[3])?,
                        num(fields[4])?,
                    )?);
                }
                _ if fields.len() == 2 => sensors.push(Sensor {
                    radius: num(fields[0])?,
                    bearing: num(fields[1])?,
                }),
                _ => return Err(parse_err(format!("unrecognised record {line:?}"))),
            }
        }
        match (shorthand, sensors.is_empty()) {
            (Some(g), true) => Ok(g),
            (None, false) => Self::planar(sensors),
            (Some(_), false) => Err(Error::Parse {
                line: 0,
                msg: "shorthand record cannot be mixed with sensor records".into(),
            }),
            (None, true) => Err(Error::Parse {
                line: 0,
                msg: "no geometry records found".into(),
            }),
        }
    }
}

/// Steering vector `a(az, el)`; the elevation is ignored for a ULA.
pub fn steering(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> CVec {
    let n = geometry.n_antennas();
    CVec::from_fn(n, |i, _| {
        let (p, _, _) = geometry.phase(i, azimuth, elevation);
        Complex64::from_polar(1.0, p)
    })
}

/// Elementwise derivative of [`steering`] with respect to one angle.
pub fn steering_grad(geometry: &ArrayGeometry, azimuth: f64, elevation: f64, wrt: AngleParam) -> CVec {
    let n = geometry.n_antennas();
    CVec::from_fn(n, |i, _| {
        let (p, d_az, d_el) = geometry.phase(i, azimuth, elevation);
        let dp = match wrt {
            AngleParam::Azimuth => d_az,
            AngleParam::Elevation => d_el,
        };
        Complex64::new(0.0, dp) * Complex64::from_polar(1.0, p)
    })
}

/// Fixed azimuth sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub points: Vec<f64>,
    /// Grid interval `r_θ`.
    pub interval: f64,
}

impl AngleGrid {
    /// `n_points` points with interval `span / n_points` over the geometry's
    /// azimuth span. ULA grids use cell midpoints of `[-π/2, π/2]`; planar
    /// grids start at `-π` since the azimuth wraps.
    pub fn uniform(geometry: &ArrayGeometry, n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::Config("grid needs at least one point".into()));
        }
        let (lo, hi) = geometry.azimuth_span();
        let interval = (hi - lo) / n_points as f64;
        let offset = if geometry.is_planar() { 0.0 } else { 0.5 };
        let points = (0..n_points).map(|l| lo + (l as f64 + offset) * interval).collect();
        Ok(AngleGrid { points, interval })
    }

    /// Grid whose sines uniformly cover `[-1, 1)`; with a half-wavelength ULA
    /// and `n_points = N` the dictionary reduces to a DFT basis.
    pub fn sine_uniform(n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::Config("grid needs at least one point".into()));
        }
        let points = (0..n_points)
            .map(|l| (-1.0 + 2.0 * l as f64 / n_points as f64).asin())
            .collect();
        Ok(AngleGrid {
            points,
            interval: PI / n_points as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point closest to `azimuth`.
    pub fn nearest(&self, azimuth: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (azimuth - p).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Per-user off-grid azimuth gaps β and elevations φ, one entry per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOffsets {
    pub beta: Vec<f64>,
    pub elevation: Vec<f64>,
}

impl GridOffsets {
    pub fn zeros(n_points: usize) -> Self {
        GridOffsets {
            beta: vec![0.0; n_points],
            elevation: vec![0.0; n_points],
        }
    }
}

/// Dictionary `A(β, φ)` whose column `l` is the steering vector at
/// `points[l] + beta[l]` and elevation `elevation[l]`.
pub fn build_dictionary(geometry: &ArrayGeometry, grid: &AngleGrid, offsets: &GridOffsets) -> CMat {
    let n = geometry.n_antennas();
    let mut a = CMat::zeros(n, grid.len());
    for l in 0..grid.len() {
        a.set_column(l, &steering(geometry, grid.points[l] + offsets.beta[l], offsets.elevation[l]));
    }
    a
}

/// Column derivatives of [`build_dictionary`] with respect to `wrt`.
pub fn dictionary_grad(geometry: &ArrayGeometry, grid: &AngleGrid, offsets: &GridOffsets, wrt: AngleParam) -> CMat {
    let n = geometry.n_antennas();
    let mut a = CMat::zeros(n, grid.len());
    for l in 0..grid.len() {
        a.set_column(
            l,
            &steering_grad(geometry, grid.points[l] + offsets.beta[l], offsets.elevation[l], wrt),
        );
    }
    a
}

/// `Φ = X A` and the stacked `Φ̄ = [Φ, Φ]`.
pub fn effective_sensing(pilots: &CMat, dictionary: &CMat) -> Result<(CMat, CMat)> {
    if pilots.ncols() != dictionary.nrows() {
        return Err(Error::shape(
            "effective_sensing",
            format!("dictionary with {} rows", pilots.ncols()),
            format!("{} rows", dictionary.nrows()),
        ));
    }
    let phi = pilots * dictionary;
    let l = phi.ncols();
    let mut stacked = CMat::zeros(phi.nrows(), 2 * l);
    stacked.columns_mut(0, l).copy_from(&phi);
    stacked.columns_mut(l, l).copy_from(&phi);
    Ok((phi, stacked))
}
