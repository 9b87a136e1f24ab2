//! Hausdorff distances between binary masks, in pixel units.

use crate::error::{Error, Result};

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `mask` (exact, separable lower-envelope transform). `None` when the mask is empty.
pub fn squared_distance_transform(mask: &[bool], h: usize, w: usize) -> Option<Vec<f64>> {
    if !mask.iter().any(|&m| m) {
        return None;
    }
    let inf = ((h + w) * (h + w)) as f64 * 4.0;
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { inf }).collect();
    let mut column = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = grid[y * w + x];
        }
        let out = envelope(&column);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = envelope(&grid[y * w..(y + 1) * w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&row);
    }
    Some(grid)
}

/// One-dimensional squared distance transform of a sampled function.
fn envelope(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut out = vec![0.0; n];
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
    out
}

/// Linear-interpolated percentile of unsorted values (`percentile` in (0, 100]).
pub fn percentile(values: &mut [f64], percentile: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let pos = percentile / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

fn directed(from: &[bool], to_sq: &[f64], pct: f64) -> f64 {
    let mut d: Vec<f64> = from
        .iter()
        .zip(to_sq)
        .filter(|(&m, _)| m)
        .map(|(_, &s)| s.sqrt())
        .collect();
    percentile(&mut d, pct)
}

/// Symmetric Hausdorff statistic: the larger of the two directed percentiles of
/// nearest-neighbour distances. `Ok(None)` when either mask is empty.
pub fn hausdorff(pred: &[bool], gt: &[bool], h: usize, w: usize, pct: f64) -> Result<Option<f64>> {
    if pred.len() != h * w || gt.len() != h * w {
        return Err(Error::shape(format!(
            "masks of {} and {} pixels for a {h}x{w} grid",
            pred.len(),
            gt.len()
        )));
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::validation(format!("percentile {pct} outside (0, 100]")));
    }
    let (Some(dp), Some(dg)) = (squared_distance_transform(pred, h, w), squared_distance_transform(gt, h, w)) else {
        return Ok(None);
    };
    Ok(Some(directed(pred, &dg, pct).max(directed(gt, &dp, pct))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(h: usize, w: usize, pts: &[(usize, usize)]) -> Vec<bool> {
        let mut m = vec![false; h * w];
        for &(y, x) in pts {
            m[y * w + x] = true;
        }
        m
    }

    #[test]
    fn three_four_five() {
        let a = points(5, 5, &[(0, 0)]);
        let b = points(5, 5, &[(3, 4)]);
        assert_eq!(hausdorff(&a, &b, 5, 5, 100.0).unwrap(), Some(5.0));
        assert_eq!(hausdorff(&a, &b, 5, 5, 95.0).unwrap(), Some(5.0));
    }

    #[test]
    fn identical_is_zero_and_empty_is_undefined() {
        let a = points(4, 6, &[(1, 1), (2, 5), (3, 0)]);
        assert_eq!(hausdorff(&a, &a, 4, 6, 100.0).unwrap(), Some(0.0));
        assert_eq!(hausdorff(&a, &[false; 24], 4, 6, 95.0).unwrap(), None);
    }

    #[test]
    fn distance_transform_matches_scan() {
        let (h, w) = (7, 9);
        let m = points(h, w, &[(0, 8), (3, 3), (6, 1), (5, 5)]);
        let dt = squared_distance_transform(&m, h, w).unwrap();
        for y in 0..h {
            for x in 0..w {
                let best = (0..h * w)
                    .filter(|&i| m[i])
                    .map(|i| {
                        let (dy, dx) = ((i / w) as f64 - y as f64, (i % w) as f64 - x as f64);
                        dy * dy + dx * dx
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(dt[y * w + x], best);
            }
        }
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&mut [4.0, 0.0, 2.0], 50.0), 2.0);
        assert_eq!(percentile(&mut [0.0, 10.0], 95.0), 9.5);
        assert_eq!(percentile(&mut [7.0], 95.0), 7.0);
    }
}
