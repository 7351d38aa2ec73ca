//! Sample distance correlation, used as the privacy-leakage score of a split.

use std::path::Path;

use crate::error::{Error, Result};

/// `n` paired samples of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Domain(format!(
                "distance correlation needs at least 2 samples, got {n}"
            )));
        }
        let dim = rows[0].as_ref().len();
        if dim == 0 {
            return Err(Error::Domain("sample dimension must be at least 1".into()));
        }
        let mut data = Vec::with_capacity(n * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} has {} values, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(SampleMatrix { n, dim, data })
    }

    /// Whitespace-separated numbers, one sample per non-empty line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::parse(i + 1, format!("not a number: '{tok}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Double-centered pairwise Euclidean distance matrix.
    fn centered_distances(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                d[i * n + j] = dist;
                d[j * n + i] = dist;
            }
        }
        // Distance matrices are symmetric, so row means double as column means.
        let means: Vec<f64> = (0..n)
            .map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] += grand - means[i] - means[j];
            }
        }
        d
    }
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Biased (V-statistic) sample distance correlation in `[0, 1]`.
///
/// Returns 0 when either sample set has zero distance variance.
pub fn distance_correlation(x: &SampleMatrix, y: &SampleMatrix) -> Result<f64> {
    if x.n != y.n {
        return Err(Error::Dimension(format!(
            "sample counts differ: {} vs {}",
            x.n, y.n
        )));
    }
    let a = x.centered_distances();
    let b = y.centered_distances();

    // Elementwise products commute, so dcov2 is bitwise symmetric in (x, y).
    let dcov2 = mean_product(&a, &b).max(0.0);
    let dvar_x = mean_product(&a, &a).max(0.0);
    let dvar_y = mean_product(&b, &b).max(0.0);
    if dvar_x == 0.0 || dvar_y == 0.0 {
        return Ok(0.0);
    }
    let r = (dcov2 / (dvar_x * dvar_y).sqrt()).sqrt();
    Ok(r.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_correlation_is_one() {
        let x =
            SampleMatrix::from_rows(&[[0.3, 1.0], [2.0, -1.0], [0.5, 0.5], [4.0, 2.0]]).unwrap();
        let r = distance_correlation(&x, &x).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn constant_input_is_zero() {
        let x = SampleMatrix::from_rows(&[[1.0], [2.0], [5.0]]).unwrap();
        let y = SampleMatrix::from_rows(&[[3.0, 3.0], [3.0, 3.0], [3.0, 3.0]]).unwrap();
        assert_eq!(distance_correlation(&x, &y).unwrap(), 0.0);
        assert_eq!(distance_correlation(&y, &x).unwrap(), 0.0);
    }

    #[test]
    fn affine_one_dimensional() {
        let x = SampleMatrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = SampleMatrix::from_rows(&[[5.0], [7.0], [9.0], [11.0]]).unwrap();
        let r = distance_correlation(&x, &y).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn errors() {
        let x = SampleMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let y = SampleMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(
            distance_correlation(&x, &y),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            SampleMatrix::from_rows(&[[1.0]]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            SampleMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn parse_text_matrix() {
        let m = SampleMatrix::parse_text("1 2\n 3 4 \n\n# c\n5\t6\n").unwrap();
        assert_eq!((m.n(), m.dim()), (3, 2));
        assert_eq!(m.row(2), &[5.0, 6.0]);
        assert!(SampleMatrix::parse_text("1 x\n2 3\n").is_err());
    }
}
