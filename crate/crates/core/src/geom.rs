//! Small Euclidean vector helpers shared by the geometric modules.
//!
//! Points of the value space are plain `Vec<f64>` coordinate vectors; the
//! ambient dimension is carried by the containing structures.  Nothing here
//! allocates beyond the returned vectors.

/// A point (or vector) of Euclidean space, as raw coordinates.
pub type Point = Vec<f64>;

/// Euclidean inner product. Panics on dimension mismatch in debug builds.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two points.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Componentwise `a - b`.
pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Componentwise `a + b`.
pub fn add(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Scalar multiple `c * a`.
pub fn scale(a: &[f64], c: f64) -> Point {
    a.iter().map(|x| c * x).collect()
}

/// Affine interpolation `(1 - t) * a + t * b`.
pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Point {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

/// Mean of a nonempty list of points.
pub fn mean(points: &[Point]) -> Point {
    assert!(!points.is_empty(), "mean of an empty point list");
    let dim = points[0].len();
    let mut out = vec![0.0; dim];
    for p in points {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    let inv = 1.0 / points.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}

/// Solves the small dense system `m x = rhs` by Gaussian elimination with
/// partial pivoting.  Returns `None` when the matrix is numerically
/// singular.  Used for the affine subproblems of the minimum-norm-point
/// routine; systems never exceed a handful of rows.
pub fn solve_dense(m: &[Vec<f64>], rhs: &[f64]) -> Option<Point> {
    let n = m.len();
    debug_assert!(m.iter().all(|row| row.len() == n));
    debug_assert_eq!(rhs.len(), n);
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut b: Point = rhs.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .expect("NaN in linear system")
        })?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Exact one-dimensional squared Euclidean distance transform
/// (lower envelope of parabolas).  `f` holds squared source distances,
/// `step` is the sample spacing; returns squared distances to the nearest
/// source along the line.
pub fn edt_1d(f: &[f64], step: f64) -> Vec<f64> {
    let n = f.len();
    if n == 0 {
        return Vec::new();
    }
    // Hull of parabolas y(x) = f[v[k]] + (x - v[k])^2, coordinates in
    // units of `step`.
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let s2 = step * step;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let fq = f[q];
            let fp = f[p];
            if !fp.is_finite() {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            let s = ((fq - fp) / s2 + (q * q - p * p) as f64) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut out = vec![f64::INFINITY; n];
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        if f[p].is_finite() {
            let d = (q as f64 - p as f64) * step;
            out[q] = f[p] + d * d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_dist() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert!((dist(&[0.0, 0.0], &[3.0, 4.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn lerp_endpoints() {
        let a = vec![1.0, 1.0];
        let b = vec![3.0, 5.0];
        assert_eq!(lerp(&a, &b, 0.0), a);
        assert_eq!(lerp(&a, &b, 1.0), b);
        assert_eq!(lerp(&a, &b, 0.5), vec![2.0, 3.0]);
    }

    #[test]
    fn solve_small_system() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(&m, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_reports_singular() {
        let m = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(&m, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn edt_line_matches_brute_force() {
        // Sources at indices 2 and 7 on a 10-sample line with spacing 0.5.
        let step = 0.5;
        let mut f = vec![f64::INFINITY; 10];
        f[2] = 0.0;
        f[7] = 0.0;
        let got = edt_1d(&f, step);
        for q in 0..10 {
            let brute = [2usize, 7]
                .iter()
                .map(|&p| {
                    let d = (q as f64 - p as f64) * step;
                    d * d
                })
                .fold(f64::INFINITY, f64::min);
            assert!((got[q] - brute).abs() < 1e-12, "index {q}");
        }
    }

    #[test]
    fn edt_no_sources_is_infinite() {
        let f = vec![f64::INFINITY; 4];
        assert!(edt_1d(&f, 1.0).iter().all(|d| d.is_infinite()));
    }
}
