//! Wind records and the discretised joint distribution of speed and direction.
//!
//! The distribution is a bivariate Gaussian kernel density estimate with
//! Scott's-rule bandwidth (`H = n^(-1/3) Σ`, with `Σ` the sample covariance),
//! evaluated on integer cells `v ∈ {0..=v_max}` m/s and `θ ∈ {0..=359}`
//! degrees and renormalised over that grid. Direction is treated as an
//! ordinary real coordinate, without wrap-around at 360°.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DIRECTIONS: usize = 360;
pub const DEFAULT_V_MAX: usize = 25;
pub const DEFAULT_SPEED_COLUMN: &str = "wind_speed";
pub const DEFAULT_DIRECTION_COLUMN: &str = "wind_direction";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindRecord<F> {
    /// m/s
    pub speed: F,
    /// degrees the wind blows from, in `[0, 360)`
    pub direction: F,
}

impl<F: Scalar> WindRecord<F> {
    pub fn new(speed: F, direction: F) -> Result<Self> {
        if !(speed >= F::zero()) || !speed.is_finite() {
            return Err(Error::param(format!("negative or non-finite speed {speed}")));
        }
        if !(direction >= F::zero() && direction < F::lit(360.0)) {
            return Err(Error::param(format!("direction {direction} outside [0, 360)")));
        }
        Ok(WindRecord { speed, direction })
    }
}

/// Names of the speed and direction columns in a wind CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    #[serde(default = "default_speed_column")]
    pub speed: String,
    #[serde(default = "default_direction_column")]
    pub direction: String,
}

fn default_speed_column() -> String {
    DEFAULT_SPEED_COLUMN.to_string()
}

fn default_direction_column() -> String {
    DEFAULT_DIRECTION_COLUMN.to_string()
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            speed: default_speed_column(),
            direction: default_direction_column(),
        }
    }
}

/// Reads wind records from a headed, comma-separated file.
///
/// Only the two named columns are consumed. Rows where either field is empty
/// (gaps in logged data) are skipped; any other unparseable or out-of-range
/// value is an error naming the 1-based data row.
pub fn load_wind_csv<F: Scalar>(path: &Path, columns: &ColumnSpec) -> Result<Vec<WindRecord<F>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_wind_csv(file, columns)
}

pub fn read_wind_csv<F: Scalar, R: std::io::Read>(
    reader: R,
    columns: &ColumnSpec,
) -> Result<Vec<WindRecord<F>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let speed_idx = find(&columns.speed)?;
    let dir_idx = find(&columns.direction)?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let (Some(s), Some(d)) = (row.get(speed_idx), row.get(dir_idx)) else {
            return Err(Error::InvalidRow {
                row: row_no,
                reason: "too few fields".into(),
            });
        };
        if s.is_empty() || d.is_empty() {
            continue;
        }
        let parse = |field: &str, what: &str| {
            field.parse::<f64>().map_err(|_| Error::InvalidRow {
                row: row_no,
                reason: format!("cannot parse {what} `{field}`"),
            })
        };
        let speed = parse(s, "speed")?;
        let direction = parse(d, "direction")?;
        let rec = WindRecord::new(F::lit(speed), F::lit(direction)).map_err(|e| {
            Error::InvalidRow {
                row: row_no,
                reason: e.to_string(),
            }
        })?;
        records.push(rec);
    }
    if records.len() < 2 {
        return Err(Error::TooFewRecords {
            needed: 2,
            found: records.len(),
        });
    }
    Ok(records)
}

/// Bivariate Gaussian KDE over `(speed, direction)`.
#[derive(Debug, Clone)]
pub struct WindKde<F> {
    points: Vec<[F; 2]>,
    bandwidth: [[F; 2]; 2],
    // Cholesky factor of the bandwidth matrix, lower triangle.
    l00: F,
    l10: F,
    l11: F,
    norm: F,
}

impl<F: Scalar> WindKde<F> {
    /// Scott's-rule KDE. `jitter` is added to the diagonal of the sample
    /// covariance before scaling, which lets degenerate samples be smoothed.
    pub fn new(records: &[WindRecord<F>], jitter: F) -> Result<Self> {
        let n = records.len();
        if n < 2 {
            return Err(Error::TooFewRecords { needed: 2, found: n });
        }
        if !(jitter >= F::zero()) {
            return Err(Error::param("covariance jitter must be non-negative"));
        }
        let nf = F::from_usize_lossy(n);
        let (mut mv, mut md) = (F::zero(), F::zero());
        for r in records {
            mv = mv + r.speed;
            md = md + r.direction;
        }
        mv = mv / nf;
        md = md / nf;
        let (mut cvv, mut cvd, mut cdd) = (F::zero(), F::zero(), F::zero());
        for r in records {
            let a = r.speed - mv;
            let b = r.direction - md;
            cvv = cvv + a * a;
            cvd = cvd + a * b;
            cdd = cdd + b * b;
        }
        let dof = nf - F::one();
        cvv = cvv / dof + jitter;
        cvd = cvd / dof;
        cdd = cdd / dof + jitter;

        let det = cvv * cdd - cvd * cvd;
        let scale = cvv * cdd;
        if !(cvv > F::zero()) || !(cdd > F::zero()) || !(det > F::lit(1e-12) * scale) {
            return Err(Error::DegenerateCovariance { det: det.as_f64() });
        }

        // Scott's factor n^(-1/(d+4)) with d = 2, squared onto the covariance.
        let factor = nf.powf(F::lit(-1.0 / 6.0));
        let f2 = factor * factor;
        let h = [[cvv * f2, cvd * f2], [cvd * f2, cdd * f2]];
        let l00 = h[0][0].sqrt();
        let l10 = h[1][0] / l00;
        let l11 = (h[1][1] - l10 * l10).sqrt();
        let norm = F::one() / (F::TAU() * l00 * l11 * nf);

        Ok(WindKde {
            points: records.iter().map(|r| [r.speed, r.direction]).collect(),
            bandwidth: h,
            l00,
            l10,
            l11,
            norm,
        })
    }

    pub fn bandwidth(&self) -> [[F; 2]; 2] {
        self.bandwidth
    }

    /// Density at `(speed, direction)`: `(1/n) Σ_i K_H(x − x_i)`.
    pub fn density(&self, speed: F, direction: F) -> F {
        let half = F::lit(0.5);
        let mut acc = F::zero();
        for p in &self.points {
            // whiten with L⁻¹
            let z0 = (speed - p[0]) / self.l00;
            let z1 = ((direction - p[1]) - self.l10 * z0) / self.l11;
            acc = acc + (-(z0 * z0 + z1 * z1) * half).exp();
        }
        acc * self.norm
    }

    /// Unnormalised density on every grid cell, row-major by speed.
    pub fn grid_density(&self, v_max: usize) -> Vec<F> {
        (0..=v_max)
            .into_par_iter()
            .flat_map_iter(|v| {
                let speed = F::from_usize_lossy(v);
                (0..DIRECTIONS).map(move |t| (speed, F::from_usize_lossy(t)))
            })
            .map(|(s, d)| self.density(s, d))
            .collect()
    }
}

/// Discretised joint probability mass `p(v, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindDistribution<F> {
    v_max: usize,
    table: Vec<F>,
    bandwidth: [[F; 2]; 2],
}

/// Fits the distribution with no covariance jitter.
pub fn fit_distribution<F: Scalar>(
    records: &[WindRecord<F>],
    v_max: usize,
) -> Result<WindDistribution<F>> {
    fit_distribution_with_jitter(records, v_max, F::zero())
}

pub fn fit_distribution_with_jitter<F: Scalar>(
    records: &[WindRecord<F>],
    v_max: usize,
    jitter: F,
) -> Result<WindDistribution<F>> {
    if v_max < 1 {
        return Err(Error::param("v_max must be at least 1"));
    }
    let kde = WindKde::new(records, jitter)?;
    let raw = kde.grid_density(v_max);
    WindDistribution::from_weights(v_max, raw, kde.bandwidth())
}

impl<F: Scalar> WindDistribution<F> {
    /// Normalises non-negative cell weights (row-major by speed) into a distribution.
    pub fn from_weights(v_max: usize, weights: Vec<F>, bandwidth: [[F; 2]; 2]) -> Result<Self> {
        let expected = (v_max + 1) * DIRECTIONS;
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: weights.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= F::zero()) || !w.is_finite()) {
            return Err(Error::param("cell weights must be finite and non-negative"));
        }
        let total: F = weights.iter().copied().sum();
        if !(total > F::zero()) {
            return Err(Error::param(
                "no probability mass on the grid; raise v_max or check the data",
            ));
        }
        let table = weights.into_iter().map(|w| w / total).collect();
        Ok(WindDistribution {
            v_max,
            table,
            bandwidth,
        })
    }

    /// All mass on a single cell.
    pub fn point_mass(v_max: usize, speed: usize, direction: usize) -> Result<Self> {
        if speed > v_max || direction >= DIRECTIONS {
            return Err(Error::param("point mass outside the grid"));
        }
        let mut w = vec![F::zero(); (v_max + 1) * DIRECTIONS];
        w[speed * DIRECTIONS + direction] = F::one();
        Self::from_weights(v_max, w, [[F::zero(); 2]; 2])
    }

    pub fn v_max(&self) -> usize {
        self.v_max
    }

    pub fn bandwidth(&self) -> [[F; 2]; 2] {
        self.bandwidth
    }

    pub fn table(&self) -> &[F] {
        &self.table
    }

    pub fn probability(&self, speed: usize, direction: usize) -> F {
        if speed > self.v_max || direction >= DIRECTIONS {
            return F::zero();
        }
        self.table[speed * DIRECTIONS + direction]
    }

    /// Cells with positive mass as `(v, θ, p)`, speed-major.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, F)> + '_ {
        self.table
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > F::zero())
            .map(|(i, &p)| (i / DIRECTIONS, i % DIRECTIONS, p))
    }

    /// Grid cell with the largest mass (first in speed-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &p) in self.table.iter().enumerate() {
            if p > self.table[best] {
                best = i;
            }
        }
        (best / DIRECTIONS, best % DIRECTIONS)
    }

    /// Writes the table as `v,theta,probability` rows after `#` metadata lines.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let h = self.bandwidth;
        writeln!(out, "# joint wind speed/direction probability table")?;
        writeln!(out, "# v_max={}", self.v_max)?;
        writeln!(
            out,
            "# bandwidth={:e},{:e},{:e},{:e}",
            h[0][0], h[0][1], h[1][0], h[1][1]
        )?;
        writeln!(out, "v,theta,probability")?;
        for (i, p) in self.table.iter().enumerate() {
            writeln!(out, "{},{},{:e}", i / DIRECTIONS, i % DIRECTIONS, p)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_table(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Parses a table written by [`WindDistribution::write_table`]. Missing
    /// cells are zero; the total must already be 1 within 1e-9.
    pub fn read_table<R: BufRead>(input: R) -> Result<Self> {
        let bad = |m: String| Error::DistributionFormat(m);
        let mut v_max: Option<usize> = None;
        let mut bandwidth = [[F::zero(); 2]; 2];
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        let mut saw_header = false;
        for (ln, line) in input.lines().enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("v_max=") {
                    v_max = Some(v.parse().map_err(|_| bad(format!("line {}: bad v_max", ln + 1)))?);
                } else if let Some(b) = meta.strip_prefix("bandwidth=") {
                    let vals: Vec<f64> = b
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(format!("line {}: bad bandwidth", ln + 1)))?;
                    if vals.len() != 4 {
                        return Err(bad(format!("line {}: bandwidth needs 4 values", ln + 1)));
                    }
                    bandwidth = [
                        [F::lit(vals[0]), F::lit(vals[1])],
                        [F::lit(vals[2]), F::lit(vals[3])],
                    ];
                }
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "v,theta,probability" {
                    return Err(bad(format!("line {}: expected header v,theta,probability", ln + 1)));
                }
                saw_header = true;
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad(format!("line {}: expected 3 fields", ln + 1)));
            }
            let v: usize = parts[0].parse().map_err(|_| bad(format!("line {}: bad v", ln + 1)))?;
            let t: usize = parts[1]
                .parse()
                .map_err(|_| bad(format!("line {}: bad theta", ln + 1)))?;
            let p: f64 = parts[2]
                .parse()
                .map_err(|_| bad(format!("line {}: bad probability", ln + 1)))?;
            if t >= DIRECTIONS {
                return Err(bad(format!("line {}: theta {t} out of range", ln + 1)));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(bad(format!("line {}: probability must be non-negative", ln + 1)));
            }
            cells.push((v, t, p));
        }
        let v_max = v_max
            .or_else(|| cells.iter().map(|c| c.0).max())
            .ok_or_else(|| bad("empty table".into()))?;
        let mut table = vec![F::zero(); (v_max + 1) * DIRECTIONS];
        for (v, t, p) in cells {
            if v > v_max {
                return Err(bad(format!("speed {v} exceeds v_max {v_max}")));
            }
            table[v * DIRECTIONS + t] = F::lit(p);
        }
        let total: f64 = table.iter().map(|p| p.as_f64()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad(format!("probabilities sum to {total}, not 1")));
        }
        Ok(WindDistribution {
            v_max,
            table,
            bandwidth,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_table(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<Vec<WindRecord<f64>>> {
        read_wind_csv(text.as_bytes(), &ColumnSpec::default())
    }

    #[test]
    fn parses_two_rows() {
        let r = csv("wind_speed,wind_direction\n5.0,180\n7.0,225\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].speed, 7.0);
        assert_eq!(r[1].direction, 225.0);
    }

    #[test]
    fn negative_speed_names_row() {
        let err = csv("wind_speed,wind_direction\n5.0,180\n-1.0,180\n").unwrap_err();
        match err {
            Error::InvalidRow { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            csv("speed,wind_direction\n5,180\n6,10\n"),
            Err(Error::MissingColumn(c)) if c == "wind_speed"
        ));
        assert!(matches!(
            csv("wind_speed,wind_direction\n5,180\n"),
            Err(Error::TooFewRecords { found: 1, .. })
        ));
        assert!(matches!(
            csv("wind_speed,wind_direction\n5,180\nabc,3\n"),
            Err(Error::InvalidRow { row: 2, .. })
        ));
        assert!(matches!(
            csv("wind_speed,wind_direction\n5,180\n3,360\n"),
            Err(Error::InvalidRow { row: 2, .. })
        ));
        let missing = load_wind_csv::<f64>(Path::new("/nonexistent/wind.csv"), &ColumnSpec::default());
        assert!(matches!(missing, Err(Error::Io { .. })));
    }

    #[test]
    fn gaps_are_skipped() {
        let r = csv("wind_speed,wind_direction\n5,180\n,20\n6,\n7,10\n").unwrap();
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn identical_records_need_jitter() {
        let recs = vec![WindRecord::new(5.0, 180.0).unwrap(); 10];
        assert!(matches!(
            fit_distribution(&recs, 25),
            Err(Error::DegenerateCovariance { .. })
        ));
        let d = fit_distribution_with_jitter(&recs, 25, 1.0).unwrap();
        assert_eq!(d.argmax(), (5, 180));
        let total: f64 = d.table().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_records_are_degenerate() {
        let recs: Vec<_> = (0..10)
            .map(|i| WindRecord::new(i as f64, 2.0 * i as f64).unwrap())
            .collect();
        assert!(fit_distribution(&recs, 25).is_err());
    }

    #[test]
    fn v_max_must_be_positive() {
        let recs = vec![
            WindRecord::new(5.0, 180.0).unwrap(),
            WindRecord::new(6.0, 100.0).unwrap(),
        ];
        assert!(fit_distribution(&recs, 0).is_err());
    }

    #[test]
    fn table_round_trip() {
        let recs = vec![
            WindRecord::new(5.0, 180.0).unwrap(),
            WindRecord::new(7.0, 225.0).unwrap(),
            WindRecord::new(3.0, 200.0).unwrap(),
        ];
        let d = fit_distribution(&recs, 10).unwrap();
        let mut buf = Vec::new();
        d.write_table(&mut buf).unwrap();
        let back = WindDistribution::<f64>::read_table(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn bad_table_rejected() {
        let text = "# v_max=1\nv,theta,probability\n0,0,0.5\n";
        assert!(WindDistribution::<f64>::read_table(text.as_bytes()).is_err());
        let text = "# v_max=1\nv,theta,probability\n0,0,-0.5\n1,0,1.5\n";
        assert!(WindDistribution::<f64>::read_table(text.as_bytes()).is_err());
    }

    #[test]
    fn f32_fit_normalises() {
        let recs: Vec<WindRecord<f32>> = [(4.0, 10.0), (6.0, 30.0), (5.0, 15.0), (8.0, 40.0)]
            .iter()
            .map(|&(s, d)| WindRecord::new(s, d).unwrap())
            .collect();
        let d = fit_distribution(&recs, 12).unwrap();
        let total: f64 = d.table().iter().map(|&p| p as f64).sum();
        assert!((total - 1.0).abs() < 1e-5);
    }
}
