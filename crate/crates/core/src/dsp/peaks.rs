use crate::signal::{runs_above, Hit, PeakWindow, ScoreMap, Trace, TRACE_LEN};

/// Default cut on the score map.
pub const SCORE_CUT: f64 = 0.5;

/// Local maxima above `threshold`, at least `min_separation` buckets apart,
/// refined by 3-point parabolic interpolation. Flat tops resolve to their
/// middle bucket; record edges are never peaks. Returned in time order.
pub fn find_peaks(x: &[f64], threshold: f64, min_separation: f64) -> Vec<f64> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let mut candidates = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n - 1 && x[j + 1] == x[i] {
                j += 1;
            }
            if x[j + 1] < x[i] && x[i] > threshold {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    // Keep the higher peak when two are too close; ties keep the earlier one.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| x[candidates[b]].total_cmp(&x[candidates[a]]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for k in order {
        let p = candidates[k];
        if kept
            .iter()
            .all(|&q| (p as f64 - q as f64).abs() >= min_separation)
        {
            kept.push(p);
        }
    }
    kept.sort_unstable();

    kept.into_iter()
        .map(|p| {
            let (l, c, r) = (x[p - 1], x[p], x[p + 1]);
            let curv = l - 2.0 * c + r;
            let delta = if curv < 0.0 {
                (0.5 * (l - r) / curv).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            (p as f64 + delta).clamp(0.0, (n - 1) as f64)
        })
        .collect()
}

/// Binary map with ones on `[c - half_width, c + half_width]` around each
/// centroid (rounded to the nearest bucket, clamped to the record).
pub fn label_windows(centroids: &[f64], half_width: usize) -> ScoreMap {
    let mut scores = vec![0.0; TRACE_LEN];
    for &c in centroids {
        let c = c.round().clamp(0.0, (TRACE_LEN - 1) as f64) as usize;
        let lo = c.saturating_sub(half_width);
        let hi = (c + half_width).min(TRACE_LEN - 1);
        scores[lo..=hi].iter_mut().for_each(|s| *s = 1.0);
    }
    ScoreMap::new(scores).expect("binary map is valid")
}

/// Binary map of the runs of `scores` above `score_cut`, with runs
/// narrower than the labelling window `2 half_width + 1` widened to that
/// width around their midpoint. Runs touching either end of the record
/// are kept as they are, like the clipped windows of [`label_windows`].
/// Overlapping windows merge.
pub fn snap_windows(scores: &ScoreMap, score_cut: f64, half_width: usize) -> ScoreMap {
    let n = TRACE_LEN;
    let mut map = vec![0.0; n];
    for (lo, hi) in scores.runs_above(score_cut) {
        let (lo, hi) = if hi - lo < 2 * half_width && lo > 0 && hi < n - 1 {
            let mid = (lo + hi + 1) / 2;
            (mid.saturating_sub(half_width), (mid + half_width).min(n - 1))
        } else {
            (lo, hi)
        };
        map[lo..=hi].iter_mut().for_each(|s| *s = 1.0);
    }
    ScoreMap::new(map).expect("binary map is valid")
}

/// Turns each run of scores above `score_cut` into a window on `signal`.
/// The centroid is the mean bucket weighted by the positive part of the
/// signal; the charge is the plain window sum. Windows without positive
/// charge are dropped.
pub fn score_windows(signal: &[f64], scores: &[f64], score_cut: f64) -> Vec<PeakWindow> {
    runs_above(scores, score_cut)
        .into_iter()
        .filter_map(|(lo, hi)| {
            let seg = &signal[lo..=hi];
            let charge: f64 = seg.iter().sum();
            let (mut w, mut wt) = (0.0, 0.0);
            for (k, &v) in seg.iter().enumerate() {
                let v = v.max(0.0);
                w += v;
                wt += v * (lo + k) as f64;
            }
            (charge > 0.0 && w > 0.0).then(|| PeakWindow {
                lo,
                hi,
                centroid: (wt / w).clamp(lo as f64, hi as f64),
                charge,
            })
        })
        .collect()
}

pub fn windows_to_hits(signal: &Trace, map: &ScoreMap, score_cut: f64) -> Vec<Hit> {
    score_windows(signal.samples(), map.scores(), score_cut)
        .into_iter()
        .map(|w| Hit {
            pad_id: signal.pad_id(),
            time: w.centroid,
            charge: w.charge,
        })
        .collect()
}
