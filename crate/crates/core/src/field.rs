//! Scalar and vector fields sampled on a periodic grid.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exact::exact_sum;
use crate::real::Real;
use crate::spectral::{Grid, Spectral, TrigInterpolant};

#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid<T>, c: T) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at every node; `f` receives the node coordinates (unused axes are zero).
    pub fn from_fn(grid: Grid<T>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Grid quadrature of the integral over the box.
    pub fn integral(&self) -> T {
        exact_sum(self.values.iter().copied()) * self.grid.cell_volume()
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    /// Squared `L^2` norm by grid quadrature.
    pub fn l2_squared(&self) -> T {
        exact_sum(self.values.iter().map(|&v| v * v)) * self.grid.cell_volume()
    }

    pub fn sub(&self, other: &Field<T>) -> Result<Field<T>> {
        if !self.grid.same_geometry(&other.grid) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect();
        Ok(Field {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scaled(&self, c: T) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn interpolant(&self) -> TrigInterpolant<T> {
        Spectral::new(self.grid.clone()).interpolant(&self.values)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    grid: Grid<T>,
    components: Vec<Vec<T>>,
}

impl<T: Real> VectorField<T> {
    /// One component per spatial dimension.
    pub fn new(grid: Grid<T>, components: Vec<Vec<T>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch("vector field components do not match the grid".into()));
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        let components = vec![vec![T::zero(); grid.len()]; grid.dim()];
        Self { grid, components }
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn([T; 2]) -> [T; 2]) -> Self {
        let d = grid.dim();
        let mut components = vec![Vec::with_capacity(grid.len()); d];
        for i in 0..grid.len() {
            let v = f(grid.node(i));
            for (q, c) in components.iter_mut().enumerate() {
                c.push(v[q]);
            }
        }
        Self { grid, components }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn component(&self, q: usize) -> &[T] {
        &self.components[q]
    }

    pub fn component_mut(&mut self, q: usize) -> &mut [T] {
        &mut self.components[q]
    }

    pub fn components(&self) -> &[Vec<T>] {
        &self.components
    }

    pub fn component_field(&self, q: usize) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.components[q].clone(),
        }
    }

    /// Largest Euclidean norm over the nodes.
    pub fn max_norm(&self) -> T {
        (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .fold(T::zero(), |a, c| a + c[i] * c[i])
                    .sqrt()
            })
            .fold(T::zero(), T::max)
    }
}

/// Writes a field as a CSV header line (`L, M, d, t`) followed by one value per line.
pub fn write_field_csv<T: Real>(field: &Field<T>, time: T, path: &Path) -> Result<()> {
    let g = field.grid();
    let mut out = String::new();
    let _ = writeln!(out, "# holderflow-field v1");
    let _ = writeln!(
        out,
        "# length={},resolution={},dim={},time={}",
        g.length(),
        g.resolution(),
        g.dim(),
        time
    );
    for v in field.values() {
        let _ = writeln!(out, "{:.16e}", v.to_f64_lossy());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a field as little-endian `f64` values preceded by a one-line text header.
pub fn write_field_binary<T: Real>(field: &Field<T>, time: T, path: &Path) -> Result<()> {
    let g = field.grid();
    let mut out = format!(
        "holderflow-field-bin v1 length={} resolution={} dim={} time={}\n",
        g.length(),
        g.resolution(),
        g.dim(),
        time
    )
    .into_bytes();
    for v in field.values() {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

fn header_value(fields: &[(&str, &str)], key: &str) -> Result<f64> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| Error::Parse(format!("missing header field `{key}`")))?
        .1
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{key}: {e}")))
}

/// Reads a field written by [`write_field_csv`] or [`write_field_binary`]; returns it with its time.
pub fn read_field<T: Real>(path: &Path) -> Result<(Field<T>, T)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let binary = bytes.starts_with(b"holderflow-field-bin");
    let (header, values): (String, Vec<f64>) = if binary {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("binary field without header".into()))?;
        let header = String::from_utf8_lossy(&bytes[..nl]).into_owned();
        let body = &bytes[nl + 1..];
        if body.len() % 8 != 0 {
            return Err(Error::Parse("binary field body is not a whole number of f64".into()));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        (header, values)
    } else {
        let mut header = String::new();
        let mut values = Vec::new();
        for line in BufReader::new(&bytes[..]).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if rest.contains('=') {
                    header = rest.replace(',', " ");
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            values.push(line.parse::<f64>().map_err(|e| Error::Parse(format!("{line}: {e}")))?);
        }
        (header, values)
    };
    let pairs: Vec<(&str, &str)> = header
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let length = header_value(&pairs, "length")?;
    let resolution = header_value(&pairs, "resolution")? as usize;
    let dim = header_value(&pairs, "dim")? as usize;
    let time = header_value(&pairs, "time")?;
    let grid = Grid::new(dim, resolution, T::lit(length))?;
    let field = Field::new(grid, values.into_iter().map(T::lit).collect())?;
    Ok((field, T::lit(time)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_of_constant() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        assert_eq!(Field::constant(g, 0.25).integral(), 1.0);
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(1, 32, 1.0).unwrap();
        let f = Field::from_fn(g, |x: [f64; 2]| (6.0 * x[0]).sin());
        for (name, bin) in [("f.csv", false), ("f.bin", true)] {
            let p = dir.path().join(name);
            if bin {
                write_field_binary(&f, 0.5, &p).unwrap();
            } else {
                write_field_csv(&f, 0.5, &p).unwrap();
            }
            let (g2, t): (Field<f64>, f64) = read_field(&p).unwrap();
            assert_eq!(t, 0.5);
            assert_eq!(g2, f);
        }
    }
}
