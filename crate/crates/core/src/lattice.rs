//! Small dense integer matrices: Smith normal form with transforms and row
//! Hermite normal form. Sizes here are tiny (class-group ranks and Selmer
//! supports), so entries are `i128` with checked arithmetic.

use crate::error::{Error, Result};

pub type Mat = Vec<Vec<i128>>;

fn overflow() -> Error {
    Error::Limit("integer matrix entry overflow".into())
}

fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| i128::from(i == j)).collect()).collect()
}

/// `row_i ← row_i − q·row_k`.
fn row_sub(m: &mut Mat, i: usize, k: usize, q: i128) -> Result<()> {
    if q == 0 {
        return Ok(());
    }
    for j in 0..m[i].len() {
        let t = q.checked_mul(m[k][j]).ok_or_else(overflow)?;
        m[i][j] = m[i][j].checked_sub(t).ok_or_else(overflow)?;
    }
    Ok(())
}

/// `col_j ← col_j − q·col_k`.
fn col_sub(m: &mut Mat, j: usize, k: usize, q: i128) -> Result<()> {
    if q == 0 {
        return Ok(());
    }
    for row in m.iter_mut() {
        let t = q.checked_mul(row[k]).ok_or_else(overflow)?;
        row[j] = row[j].checked_sub(t).ok_or_else(overflow)?;
    }
    Ok(())
}

fn swap_cols(m: &mut Mat, a: usize, b: usize) {
    for row in m.iter_mut() {
        row.swap(a, b);
    }
}

/// `U·M·V = diag`, with `U`, `V` unimodular. `v_inv` is `V⁻¹`.
#[derive(Debug, Clone)]
pub struct Smith {
    pub diag: Vec<i128>,
    pub u: Mat,
    pub v: Mat,
    pub v_inv: Mat,
}

impl Smith {
    pub fn rank(&self) -> usize {
        self.diag.iter().filter(|&&d| d != 0).count()
    }

    /// Rows of `U` spanning the left kernel of `M`.
    pub fn left_kernel(&self) -> Vec<Vec<i128>> {
        self.u[self.rank()..].to_vec()
    }
}

pub fn smith(m: &Mat, cols: usize) -> Result<Smith> {
    let rows = m.len();
    let mut a = m.clone();
    let mut u = identity(rows);
    let mut v = identity(cols);
    let mut v_inv = identity(cols);
    let n = rows.min(cols);
    let mut diag = vec![0i128; n];
    'outer: for k in 0..n {
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in k..rows {
                for j in k..cols {
                    if a[i][j] != 0 && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else { break 'outer };
            a.swap(k, pi);
            u.swap(k, pi);
            swap_cols(&mut a, k, pj);
            swap_cols(&mut v, k, pj);
            v_inv.swap(k, pj);
            let piv = a[k][k];
            let mut clean = true;
            for i in k + 1..rows {
                let q = a[i][k] / piv;
                row_sub(&mut a, i, k, q)?;
                row_sub(&mut u, i, k, q)?;
                clean &= a[i][k] == 0;
            }
            for j in k + 1..cols {
                let q = a[k][j] / piv;
                col_sub(&mut a, j, k, q)?;
                col_sub(&mut v, j, k, q)?;
                row_sub(&mut v_inv, k, j, -q)?;
                clean &= a[k][j] == 0;
            }
            if !clean {
                continue;
            }
            let bad = (k + 1..rows).find(|&i| (k + 1..cols).any(|j| a[i][j] % piv != 0));
            match bad {
                Some(i) => {
                    row_sub(&mut a, k, i, -1)?;
                    row_sub(&mut u, k, i, -1)?;
                }
                None => break,
            }
        }
        if a[k][k] < 0 {
            for x in a[k].iter_mut() {
                *x = -*x;
            }
            for x in u[k].iter_mut() {
                *x = -*x;
            }
        }
        diag[k] = a[k][k];
    }
    Ok(Smith { diag, u, v, v_inv })
}

/// Row Hermite normal form of a nonsingular square basis: upper triangular,
/// positive diagonal, entries above the diagonal reduced into `[0, d_jj)`.
pub fn hnf_square(m: &Mat) -> Result<Mat> {
    let n = m.len();
    let mut a = m.clone();
    for j in 0..n {
        loop {
            let piv = (j..n).filter(|&i| a[i][j] != 0).min_by_key(|&i| a[i][j].abs());
            let Some(pi) = piv else {
                return Err(Error::Precondition("hnf_square: singular basis".into()));
            };
            a.swap(j, pi);
            let mut clean = true;
            for i in j + 1..n {
                let q = a[i][j] / a[j][j];
                row_sub(&mut a, i, j, q)?;
                clean &= a[i][j] == 0;
            }
            if clean {
                break;
            }
        }
        if a[j][j] < 0 {
            for x in a[j].iter_mut() {
                *x = -*x;
            }
        }
        for i in 0..j {
            let q = a[i][j].div_euclid(a[j][j]);
            row_sub(&mut a, i, j, q)?;
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mul(a: &Mat, b: &Mat) -> Mat {
        let inner = b.len();
        let cols = if inner == 0 { 0 } else { b[0].len() };
        a.iter()
            .map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect())
            .collect()
    }

    #[test]
    fn smith_identity_holds() {
        let m: Mat = vec![vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16], vec![1, 0, 3]];
        let s = smith(&m, 3).unwrap();
        let d = mul(&mul(&s.u, &m), &s.v);
        for (i, row) in d.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, if i == j && i < 3 { s.diag[i] } else { 0 });
            }
        }
        assert_eq!(mul(&s.v, &s.v_inv), identity(3));
        for w in s.diag.windows(2) {
            assert!(w[1] == 0 || w[1] % w[0] == 0);
        }
    }

    #[test]
    fn kernel_and_hnf() {
        let m: Mat = vec![vec![3], vec![5], vec![7]];
        let s = smith(&m, 1).unwrap();
        assert_eq!(s.diag, vec![1]);
        for k in s.left_kernel() {
            assert_eq!(k[0] * 3 + k[1] * 5 + k[2] * 7, 0);
        }
        let h = hnf_square(&vec![vec![4, 6], vec![2, 5]]).unwrap();
        assert_eq!(h[1][0], 0);
        assert_eq!(h[0][0] * h[1][1], 8);
        assert!(h[0][1] >= 0 && h[0][1] < h[1][1]);
    }
}
