//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Smallest singular value among the `min(rows, cols)` values.
pub fn sigma_min(m: &Mat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Full SVD `(U, s, V)` with columns sorted by descending singular value.
///
/// `U` is `rows x r` and `V` is `cols x r` with `r = min(rows, cols)`.
pub fn sorted_svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut uo = Mat::zeros(u.nrows(), order.len());
    let mut vo = Mat::zeros(vt.ncols(), order.len());
    let mut so = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        uo.set_column(dst, &u.column(src));
        vo.set_column(dst, &vt.row(src).transpose());
        so.push(s[src]);
    }
    (uo, so, vo)
}

/// Moore–Penrose pseudoinverse; singular values below `rel_cutoff * sigma_max`
/// are treated as zero.
pub fn pinv(m: &Mat, rel_cutoff: f64) -> Mat {
    if m.is_empty() {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let (u, s, v) = sorted_svd(m);
    let cut = rel_cutoff * s.first().copied().unwrap_or(0.0);
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > cut && sk > 0.0 {
            out += (v.column(k) * u.column(k).transpose()) / sk;
        }
    }
    out
}

/// Orthonormal basis (as columns) of the kernel of `m`.
pub fn null_space(m: &Mat, rel_cutoff: f64) -> Mat {
    let n = m.ncols();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    // Pad to at least square so the SVD returns a complete right basis.
    let padded = if m.nrows() < n {
        let mut p = Mat::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (_, s, v) = sorted_svd(&padded);
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > rel_cutoff * smax && x > 0.0).count();
    v.columns(rank, n - rank).into_owned()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn range_basis(m: &Mat, rel_cutoff: f64) -> Mat {
    if m.is_empty() {
        return Mat::zeros(m.nrows(), 0);
    }
    let (u, s, _) = sorted_svd(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > rel_cutoff * smax && x > 0.0).count();
    u.columns(0, rank).into_owned()
}

/// Orthogonal projector onto the column space of `m`.
pub fn range_projector(m: &Mat, rel_cutoff: f64) -> Mat {
    let q = range_basis(m, rel_cutoff);
    &q * q.transpose()
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_offdiag_abs(m: &Mat) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                best = best.max(m[(i, j)].abs());
            }
        }
    }
    best
}

/// Spectral norm.
pub fn norm2(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Column-major vectorisation.
pub fn vec_col(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Serde helpers storing a matrix as `{rows, cols, data}` with row-major data.
pub mod serde_mat {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Repr { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        Ok(Mat::from_row_slice(r.rows, r.cols, &r.data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_deficient() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv(&m, 1e-12);
        let back = &m * &p * &m;
        assert!((back - &m).abs().max() < 1e-12);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = Mat::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let n = null_space(&m, 1e-10);
        assert_eq!(n.shape(), (3, 2));
        assert!((&m * &n).abs().max() < 1e-12);
        assert!((n.transpose() * &n - Mat::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let p = range_projector(&m, 1e-12);
        assert!((&p * &p - &p).abs().max() < 1e-12);
        assert!((&p * &m - &m).abs().max() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        #[derive(serde::Serialize, serde::Deserialize)]
        struct W(#[serde(with = "serde_mat")] Mat);
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = serde_json::to_string(&W(m.clone())).unwrap();
        assert!(s.contains("[1.0,2.0,3.0,4.0,5.0,6.0]"));
        let back: W = serde_json::from_str(&s).unwrap();
        assert_eq!(back.0, m);
    }
}
