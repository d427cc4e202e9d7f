//! Dataset CSV files: header `x1,...,xd,y[,z]`, one row per observation.

use crate::error::{Error, Result};
use crate::points::Points;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub locs: Points,
    pub y: Vec<f64>,
    /// Latent values, when known (simulated data).
    pub z: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(locs: Points, y: Vec<f64>, z: Option<Vec<f64>>) -> Result<Self> {
        let n = locs.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if let Some(z) = &z {
            if z.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: z.len(),
                });
            }
        }
        Ok(Self { locs, y, z })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.locs.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        if self.z.is_some() {
            header.push("z".into());
        }
        out.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            // `{:?}` is the shortest representation that parses back exactly.
            let mut row: Vec<String> = self
                .locs
                .point(i)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect();
            row.push(format!("{:?}", self.y[i]));
            if let Some(z) = &self.z {
                row.push(format!("{:?}", z[i]));
            }
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let y_col = header
            .iter()
            .position(|h| h == "y")
            .ok_or_else(|| Error::Parse("dataset header has no 'y' column".into()))?;
        for (k, h) in header[..y_col].iter().enumerate() {
            if *h != format!("x{}", k + 1) {
                return Err(Error::Parse(format!(
                    "expected column 'x{}', found '{h}'",
                    k + 1
                )));
            }
        }
        let has_z = match &header[y_col + 1..] {
            [] => false,
            [z] if z == "z" => true,
            rest => {
                return Err(Error::Parse(format!(
                    "unexpected columns after 'y': {rest:?}"
                )))
            }
        };
        if y_col == 0 {
            return Err(Error::Parse(
                "dataset needs at least one coordinate column".into(),
            ));
        }
        let (mut coords, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row {}: expected {} fields, found {}",
                    lineno + 2,
                    header.len(),
                    rec.len()
                )));
            }
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?;
            coords.extend_from_slice(&vals[..y_col]);
            y.push(vals[y_col]);
            if has_z {
                z.push(vals[y_col + 1]);
            }
        }
        Dataset::new(Points::new(y_col, coords)?, y, has_z.then_some(z))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        write_atomic(path, &buf)
    }
}

/// Reads target points from a CSV with header `x1,...,xd`.
pub fn read_points<R: Read>(r: R) -> Result<Points> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    for (k, h) in header.iter().enumerate() {
        if *h != format!("x{}", k + 1) {
            return Err(Error::Parse(format!(
                "expected column 'x{}', found '{h}'",
                k + 1
            )));
        }
    }
    let mut coords = Vec::new();
    for (lineno, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for v in rec.iter() {
            coords.push(
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?,
            );
        }
    }
    Points::new(header.len(), coords)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let locs = Points::new(2, vec![0.1, 1.0 / 3.0, 2e-300, 0.7]).unwrap();
        let ds = Dataset::new(
            locs,
            vec![-1.5, std::f64::consts::PI],
            Some(vec![0.25, -7e10]),
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2,y,z\n"));
        assert_eq!(Dataset::read(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(Dataset::read("a,y\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::read("x1,x2\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::read("x1,y\n1\n".as_bytes()).is_err());
        let ds = Dataset::read("x1,y\n0.5,2\n".as_bytes()).unwrap();
        assert_eq!(ds.z, None);
    }
}
