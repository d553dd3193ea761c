//! Dynamic time warping on multichannel series.
//!
//! The local cost of aligning two frames is the Euclidean distance across
//! channels. Steps are symmetric (down, right, diagonal, each with weight 1)
//! and the distance is the unnormalised sum of costs along the best path.
//! [`fastdtw`] follows the coarsen / project / refine scheme of Salvador and
//! Chan: the warp path found on a half-resolution copy is projected up,
//! widened by `radius` cells, and the DP is re-run only inside that band.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::dataio::SensorRecording;
use crate::{Error, Result};

/// Time-major multichannel series: frame `t` is `frames[t*channels .. (t+1)*channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    channels: usize,
    frames: Vec<f64>,
}

impl Series {
    pub fn new(channels: usize, frames: Vec<f64>) -> Result<Self> {
        if channels == 0 || frames.is_empty() || frames.len() % channels != 0 {
            return Err(Error::arg(format!(
                "{} values cannot form frames of {channels} channels",
                frames.len()
            )));
        }
        Ok(Series { channels, frames })
    }

    /// Single-channel series.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Series::new(1, values)
    }

    pub fn from_recording(rec: &SensorRecording) -> Self {
        Series {
            channels: rec.channels,
            frames: rec.to_frames(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.frames.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.channels..(t + 1) * self.channels]
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    /// Appends the frames of `other` (same channel count).
    pub fn extend(&mut self, other: &Series) -> Result<()> {
        if other.channels != self.channels {
            return Err(Error::arg("cannot join series with different channel counts"));
        }
        self.frames.extend_from_slice(&other.frames);
        Ok(())
    }

    /// Averages consecutive blocks of `factor` frames; a short final block is
    /// averaged on its own.
    pub fn block_average(&self, factor: usize) -> Series {
        let factor = factor.max(1);
        let n = self.len();
        let out_len = n.div_ceil(factor);
        let mut frames = vec![0.0; out_len * self.channels];
        for (o, chunk) in frames.chunks_exact_mut(self.channels).enumerate() {
            let lo = o * factor;
            let hi = (lo + factor).min(n);
            for t in lo..hi {
                for (acc, &v) in chunk.iter_mut().zip(self.frame(t)) {
                    *acc += v;
                }
            }
            let k = (hi - lo) as f64;
            chunk.iter_mut().for_each(|v| *v /= k);
        }
        Series {
            channels: self.channels,
            frames,
        }
    }

    /// Block-averages so the result has at most `max_len` frames.
    pub fn decimate(&self, max_len: usize) -> Series {
        if max_len == 0 || self.len() <= max_len {
            return self.clone();
        }
        self.block_average(self.len().div_ceil(max_len))
    }
}

pub(crate) fn frame_cost(a: &[f64], b: &[f64]) -> f64 {
    Float::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

fn check_pair(a: &Series, b: &Series) -> Result<()> {
    if a.channels != b.channels {
        return Err(Error::arg(format!(
            "series have {} and {} channels",
            a.channels, b.channels
        )));
    }
    Ok(())
}

/// Exact DTW distance.
pub fn dtw_exact(a: &Series, b: &Series) -> Result<f64> {
    check_pair(a, b)?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..a.len() {
        let fa = a.frame(i);
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[j],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = best + frame_cost(fa, b.frame(j));
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// FastDTW approximation; exact when either series has at most `radius + 2` frames.
pub fn fastdtw(a: &Series, b: &Series, radius: usize) -> Result<f64> {
    check_pair(a, b)?;
    Ok(fastdtw_path(a, b, radius).0)
}

/// DTW distance between two recordings-derived series as used by the audit.
pub fn dtw_distance(a: &Series, b: &Series, radius: usize) -> Result<f64> {
    fastdtw(a, b, radius)
}

type Path = Vec<(usize, usize)>;

fn fastdtw_path(a: &Series, b: &Series, radius: usize) -> (f64, Path) {
    let min_size = radius + 2;
    let (n, m) = (a.len(), b.len());
    if n <= min_size || m <= min_size {
        let window = vec![(0, m - 1); n];
        return windowed_dtw(a, b, &window);
    }
    let (_, low_path) = fastdtw_path(&a.block_average(2), &b.block_average(2), radius);
    let window = project_window(&low_path, n, m, radius);
    windowed_dtw(a, b, &window)
}

/// Per-row inclusive column ranges covering the projected low-resolution
/// path, widened by `radius` cells in every direction.
fn project_window(low_path: &[(usize, usize)], n: usize, m: usize, radius: usize) -> Vec<(usize, usize)> {
    let mut lo = vec![usize::MAX; n];
    let mut hi = vec![0usize; n];
    for &(i, j) in low_path {
        for row in [2 * i, 2 * i + 1] {
            if row >= n {
                continue;
            }
            let c0 = (2 * j).min(m - 1);
            let c1 = (2 * j + 1).min(m - 1);
            lo[row] = lo[row].min(c0);
            hi[row] = hi[row].max(c1);
        }
    }
    (0..n)
        .map(|row| {
            let r0 = row.saturating_sub(radius);
            let r1 = (row + radius).min(n - 1);
            let (mut l, mut h) = (usize::MAX, 0);
            for k in r0..=r1 {
                if lo[k] != usize::MAX {
                    l = l.min(lo[k]);
                    h = h.max(hi[k]);
                }
            }
            (l.saturating_sub(radius), (h + radius).min(m - 1))
        })
        .collect()
}

/// DP restricted to `window` (row -> inclusive column range). Returns the
/// cost and the optimal path from (0, 0) to (n-1, m-1).
fn windowed_dtw(a: &Series, b: &Series, window: &[(usize, usize)]) -> (f64, Path) {
    let n = a.len();
    let mut cost: Vec<Vec<f64>> = Vec::with_capacity(n);
    let at = |cost: &Vec<Vec<f64>>, i: usize, j: usize| -> f64 {
        let (lo, hi) = window[i];
        if j < lo || j > hi {
            f64::INFINITY
        } else {
            cost[i][j - lo]
        }
    };
    for i in 0..n {
        let (lo, hi) = window[i];
        let fa = a.frame(i);
        let mut row = vec![f64::INFINITY; hi - lo + 1];
        for j in lo..=hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let left = if j > lo { row[j - 1 - lo] } else { f64::INFINITY };
                let (up, diag) = if i > 0 {
                    (
                        at(&cost, i - 1, j),
                        if j > 0 { at(&cost, i - 1, j - 1) } else { f64::INFINITY },
                    )
                } else {
                    (f64::INFINITY, f64::INFINITY)
                };
                diag.min(up).min(left)
            };
            row[j - lo] = best + frame_cost(fa, b.frame(j));
        }
        cost.push(row);
    }
    let m = b.len();
    let total = at(&cost, n - 1, m - 1);
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 { at(&cost, i - 1, j - 1) } else { f64::INFINITY };
        let up = if i > 0 { at(&cost, i - 1, j) } else { f64::INFINITY };
        let left = if j > 0 { at(&cost, i, j - 1) } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    (total, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum over every monotone warping path, enumerated recursively.
    fn brute_force(a: &Series, b: &Series) -> f64 {
        fn walk(a: &Series, b: &Series, i: usize, j: usize) -> f64 {
            let here = frame_cost(a.frame(i), b.frame(j));
            if i + 1 == a.len() && j + 1 == b.len() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(walk(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(walk(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(walk(a, b, i + 1, j + 1));
            }
            here + best
        }
        walk(a, b, 0, 0)
    }

    fn uni(v: &[f64]) -> Series {
        Series::univariate(v.to_vec()).unwrap()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(dtw_exact(&uni(&[0.0, 0.0]), &uni(&[1.0, 1.0])).unwrap(), 2.0);
        assert_eq!(brute_force(&uni(&[0.0, 0.0]), &uni(&[1.0, 1.0])), 2.0);
        let a = uni(&[1.0, 3.0, 2.0, 5.0]);
        assert_eq!(dtw_exact(&a, &a).unwrap(), 0.0);
        assert_eq!(fastdtw(&a, &a, 0).unwrap(), 0.0);
        // warping absorbs a repeated sample
        assert_eq!(dtw_exact(&uni(&[0.0, 1.0, 2.0]), &uni(&[0.0, 1.0, 1.0, 2.0])).unwrap(), 0.0);
        let two = Series::new(2, vec![0.0, 0.0]).unwrap();
        let far = Series::new(2, vec![3.0, 4.0]).unwrap();
        assert_eq!(dtw_exact(&two, &far).unwrap(), 5.0);
        assert!(dtw_exact(&two, &uni(&[1.0])).is_err());
    }

    #[test]
    fn block_average_and_decimate() {
        let s = uni(&[1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.block_average(2).frames(), &[2.0, 6.0, 9.0]);
        let d = uni(&(0..2500).map(|v| v as f64).collect::<Vec<_>>()).decimate(2000);
        assert_eq!(d.len(), 1250);
        assert_eq!(s.decimate(10), s);
    }

    fn series_strategy(max_len: usize, channels: usize) -> impl Strategy<Value = Series> {
        proptest::collection::vec(-5.0f64..5.0, channels..=max_len * channels).prop_map(move |mut v| {
            v.truncate(v.len() / channels * channels);
            Series::new(channels, v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dp_matches_path_enumeration(a in series_strategy(7, 2), b in series_strategy(7, 2)) {
            let exact = dtw_exact(&a, &b).unwrap();
            let brute = brute_force(&a, &b);
            prop_assert!((exact - brute).abs() <= 1e-9 * brute.max(1.0));
        }

        #[test]
        fn unbounded_radius_is_exact(a in series_strategy(32, 3), b in series_strategy(32, 3)) {
            let exact = dtw_exact(&a, &b).unwrap();
            prop_assert_eq!(fastdtw(&a, &b, 32).unwrap(), exact);
        }

        #[test]
        fn fastdtw_is_symmetric_nonnegative_upper_bound(
            a in series_strategy(80, 2), b in series_strategy(80, 2), radius in 0usize..4
        ) {
            let ab = fastdtw(&a, &b, radius).unwrap();
            let ba = fastdtw(&b, &a, radius).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            prop_assert!(ab + 1e-9 >= dtw_exact(&a, &b).unwrap());
        }
    }

    #[test]
    fn fastdtw_tracks_exact_on_smooth_series() {
        let a: Vec<f64> = (0..400).map(|t| Float::sin(t as f64 * 0.05)).collect();
        let b: Vec<f64> = (0..370).map(|t| Float::sin(t as f64 * 0.055 + 0.3)).collect();
        let exact = dtw_exact(&uni(&a), &uni(&b)).unwrap();
        let approx = fastdtw(&uni(&a), &uni(&b), 10).unwrap();
        assert!(approx >= exact && approx <= exact * 1.05 + 1e-9, "{approx} vs {exact}");
    }
}
