use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::GmmError;

/// One recorded step: time, desired position and velocity, interaction force.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSample {
    pub t: f64,
    pub x: DVector<f64>,
    pub xd: DVector<f64>,
    pub f: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub id: u32,
    pub samples: Vec<DemoSample>,
}

impl Demo {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Demonstrations sharing one task dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub dim: usize,
    pub demos: Vec<Demo>,
}

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["demo_id".to_string(), "t".to_string()];
    for p in ["x", "xd", "f"] {
        for i in 0..dim {
            h.push(format!("{p}{i}"));
        }
    }
    h
}

impl DemoDataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            demos: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.demos.iter().map(|d| d.samples.len()).sum()
    }

    /// Checks every invariant; `min_demos` is the count required by the caller.
    pub fn validate(&self, min_demos: usize) -> Result<(), GmmError> {
        if self.dim == 0 {
            return Err(GmmError::Dataset("dimension must be at least 1".into()));
        }
        if self.demos.len() < min_demos {
            return Err(GmmError::Dataset(format!(
                "{} demonstration(s) present, at least {min_demos} required",
                self.demos.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.demos {
            if !seen.insert(d.id) {
                return Err(GmmError::Dataset(format!("duplicate demo id {}", d.id)));
            }
            if d.samples.is_empty() {
                return Err(GmmError::Dataset(format!("demo {} is empty", d.id)));
            }
            for (i, s) in d.samples.iter().enumerate() {
                if s.x.len() != self.dim || s.xd.len() != self.dim || s.f.len() != self.dim {
                    return Err(GmmError::Dataset(format!(
                        "demo {} row {i}: wrong dimension",
                        d.id
                    )));
                }
                let finite = s.t.is_finite()
                    && s.x
                        .iter()
                        .chain(s.xd.iter())
                        .chain(s.f.iter())
                        .all(|v| v.is_finite());
                if !finite {
                    return Err(GmmError::Dataset(format!(
                        "demo {} row {i}: non-finite value",
                        d.id
                    )));
                }
                if i > 0 && s.t <= d.samples[i - 1].t {
                    return Err(GmmError::Dataset(format!(
                        "demo {} row {i}: time {} not strictly increasing",
                        d.id, s.t
                    )));
                }
            }
        }
        Ok(())
    }

    /// Linearly resample every demo onto `[0, T̄]` with `T̄` the mean
    /// duration, sampled every `period` seconds. Velocities are rescaled by
    /// the time-stretch factor so they stay consistent with the positions.
    pub fn aligned(&self, period: f64) -> Result<DemoDataset, GmmError> {
        self.validate(1)?;
        if !(period > 0.0) {
            return Err(GmmError::Dataset(
                "resampling period must be positive".into(),
            ));
        }
        let mean_duration =
            self.demos.iter().map(Demo::duration).sum::<f64>() / self.demos.len() as f64;
        let n = (mean_duration / period).floor() as usize + 1;
        let mut out = DemoDataset::new(self.dim);
        for d in &self.demos {
            let dur = d.duration();
            let t0 = d.samples[0].t;
            let stretch = if mean_duration > 0.0 {
                dur / mean_duration
            } else {
                1.0
            };
            let mut samples = Vec::with_capacity(n);
            let mut seg = 0;
            for i in 0..n {
                let tau = (i as f64 * period).min(mean_duration);
                let src = t0 + tau * stretch;
                while seg + 2 < d.samples.len() && d.samples[seg + 1].t < src {
                    seg += 1;
                }
                let s = if d.samples.len() == 1 {
                    DemoSample {
                        t: tau,
                        ..d.samples[0].clone()
                    }
                } else {
                    let (a, b) = (&d.samples[seg], &d.samples[seg + 1]);
                    let w = ((src - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
                    let lerp = |p: &DVector<f64>, q: &DVector<f64>| p * (1.0 - w) + q * w;
                    DemoSample {
                        t: tau,
                        x: lerp(&a.x, &b.x),
                        xd: lerp(&a.xd, &b.xd) * stretch,
                        f: lerp(&a.f, &b.f),
                    }
                };
                samples.push(s);
            }
            out.demos.push(Demo { id: d.id, samples });
        }
        Ok(out)
    }

    /// Rows `[t, x, ẋ, f]`, one per sample, demos concatenated.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let cols = 1 + 3 * self.dim;
        let mut m = DMatrix::zeros(self.rows(), cols);
        let mut r = 0;
        for d in &self.demos {
            for s in &d.samples {
                m[(r, 0)] = s.t;
                for i in 0..self.dim {
                    m[(r, 1 + i)] = s.x[i];
                    m[(r, 1 + self.dim + i)] = s.xd[i];
                    m[(r, 1 + 2 * self.dim + i)] = s.f[i];
                }
                r += 1;
            }
        }
        m
    }

    /// Time span covered by the samples.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        let ts = self
            .demos
            .iter()
            .flat_map(|d| d.samples.iter().map(|s| s.t));
        ts.fold(None, |acc, t| match acc {
            None => Some((t, t)),
            Some((a, b)) => Some((a.min(t), b.max(t))),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W, comments: &[String]) -> Result<(), GmmError> {
        if self.rows() == 0 {
            return Err(GmmError::Dataset(
                "refusing to write an empty dataset".into(),
            ));
        }
        let mut writer = writer;
        for c in comments {
            writeln!(writer, "# {c}").map_err(|e| GmmError::Dataset(e.to_string()))?;
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(csv_header(self.dim))?;
        for d in &self.demos {
            for s in &d.samples {
                let mut rec = vec![d.id.to_string(), fmt_f64(s.t)];
                rec.extend(
                    s.x.iter()
                        .chain(s.xd.iter())
                        .chain(s.f.iter())
                        .map(|v| fmt_f64(*v)),
                );
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| GmmError::Dataset(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GmmError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let ncols = header.len();
        if ncols < 5 || (ncols - 2) % 3 != 0 {
            return Err(GmmError::Dataset(format!(
                "header has {ncols} columns, expected 2 + 3·dim"
            )));
        }
        let dim = (ncols - 2) / 3;
        let expected = csv_header(dim);
        if header.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(GmmError::Dataset(format!(
                "header `{}` does not match `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                expected.join(",")
            )));
        }
        let mut by_id: BTreeMap<u32, Vec<DemoSample>> = BTreeMap::new();
        let mut order = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |col: usize, v: &str| GmmError::Parse {
                line,
                message: format!("column `{}`: cannot parse `{v}`", expected[col]),
            };
            let id: u32 = rec[0].parse().map_err(|_| bad(0, &rec[0]))?;
            let mut vals = Vec::with_capacity(ncols - 1);
            for c in 1..ncols {
                vals.push(rec[c].parse::<f64>().map_err(|_| bad(c, &rec[c]))?);
            }
            let s = DemoSample {
                t: vals[0],
                x: DVector::from_column_slice(&vals[1..1 + dim]),
                xd: DVector::from_column_slice(&vals[1 + dim..1 + 2 * dim]),
                f: DVector::from_column_slice(&vals[1 + 2 * dim..1 + 3 * dim]),
            };
            by_id
                .entry(id)
                .or_insert_with(|| {
                    order.push(id);
                    Vec::new()
                })
                .push(s);
        }
        let mut ds = DemoDataset::new(dim);
        for id in order {
            let samples = by_id.remove(&id).unwrap_or_default();
            ds.demos.push(Demo { id, samples });
        }
        if ds.rows() == 0 {
            return Err(GmmError::Dataset("no data rows".into()));
        }
        ds.validate(1)?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path, comments: &[String]) -> Result<(), GmmError> {
        let file = File::create(path).map_err(|e| GmmError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), comments)
            .map_err(|e| e.with_path(path))
    }

    pub fn load(path: &Path) -> Result<Self, GmmError> {
        let file = File::open(path).map_err(|e| GmmError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| e.with_path(path))
    }

    /// Concatenate datasets of equal dimension, keeping demo ids unique.
    pub fn merge(parts: Vec<DemoDataset>) -> Result<DemoDataset, GmmError> {
        let dim = parts
            .first()
            .map(|p| p.dim)
            .ok_or_else(|| GmmError::Dataset("nothing to merge".into()))?;
        let mut out = DemoDataset::new(dim);
        for p in parts {
            if p.dim != dim {
                return Err(GmmError::Dataset(format!("dimension {} vs {dim}", p.dim)));
            }
            out.demos.extend(p.demos);
        }
        out.validate(1)?;
        Ok(out)
    }
}

/// Shortest representation that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
