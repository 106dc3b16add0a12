//! Row-major `[[...], ...]` (de)serialization for dense matrices.
//!
//! Use as `#[serde(with = "crate::serde_matrix")]`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_err, Result};
use crate::Mat;

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from row-major nested vectors. All rows must have the same
/// length. An empty outer vector is a 0x0 matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(dim_err("ragged matrix rows"));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    from_rows(&rows).map_err(D::Error::custom)
}

/// `Option<Mat>` variant: `#[serde(with = "crate::serde_matrix::option")]`.
pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Mat>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| from_rows(&rows).map_err(D::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let rows = to_rows(&m);
        assert_eq!(rows, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(from_rows(&rows).unwrap(), m);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
