use crate::error::{Error, Result};

/// Time-ordered output data `Y_1..Y_n`, each observation a `d`-vector.
///
/// Stored observation-major: row `t` occupies `data[t*d..(t+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    data: Vec<f64>,
    d: usize,
}

/// Borrowed contiguous run of observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesView<'a> {
    data: &'a [f64],
    d: usize,
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Data(format!("non-finite value at flat index {i}"))),
        None => Ok(()),
    }
}

impl SampleSeries {
    /// Build from observation-major data with `d` columns.
    pub fn from_rows_flat(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("dimension d must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::param("series must contain at least one observation"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::Data(format!(
                "{} values cannot be split into rows of {d}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(SampleSeries { data, d })
    }

    /// One-dimensional series.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::from_rows_flat(values, 1)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Data(format!(
                "row {} has {} columns, expected {d}",
                i + 1,
                r.len()
            )));
        }
        Self::from_rows_flat(rows.concat(), d)
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn view(&self) -> SeriesView<'_> {
        SeriesView { data: &self.data, d: self.d }
    }

    /// Observations `start..end` (0-based, half-open).
    pub fn range(&self, start: usize, end: usize) -> SeriesView<'_> {
        SeriesView {
            data: &self.data[start * self.d..end * self.d],
            d: self.d,
        }
    }

    /// Affine map `c * y + shift` applied to every entry.
    pub fn affine(&self, scale: f64, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(Error::Dimension { expected: self.d, found: shift.len() });
        }
        let data = self
            .data
            .chunks(self.d)
            .flat_map(|row| row.iter().zip(shift).map(|(y, s)| scale * y + s))
            .collect();
        Self::from_rows_flat(data, self.d)
    }
}

impl<'a> SeriesView<'a> {
    pub fn new(data: &'a [f64], d: usize) -> Result<Self> {
        if d == 0 || data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::param("view must hold at least one complete row"));
        }
        Ok(SeriesView { data, d })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_flat(&self) -> &'a [f64] {
        self.data
    }

    pub fn row(&self, t: usize) -> &'a [f64] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.data.chunks_exact(self.d)
    }

    /// Column `j` copied out in time order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn to_series(&self) -> SampleSeries {
        SampleSeries { data: self.data.to_vec(), d: self.d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(SampleSeries::univariate(vec![1.0, f64::NAN]).is_err());
        assert!(SampleSeries::univariate(vec![f64::INFINITY]).is_err());
        assert!(SampleSeries::univariate(vec![]).is_err());
        assert!(SampleSeries::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(SampleSeries::from_rows_flat(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn rows_and_columns() {
        let s = SampleSeries::from_rows(&[vec![1.0, 10.0], vec![3.0, 30.0]]).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.d(), 2);
        assert_eq!(s.view().row(1), &[3.0, 30.0]);
        assert_eq!(s.view().column(1), vec![10.0, 30.0]);
    }
}
