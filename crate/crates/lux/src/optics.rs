//! OPTICS reachability ordering and xi-based cluster extraction.
//!
//! Runs with unbounded eps, so every point receives a finite reachability
//! except the very first in the ordering. Cluster extraction follows the
//! steep-area xi procedure with predecessor correction; processing order and
//! all tie breaks are by ascending row index, so the result is deterministic.

/// Result of a clustering pass over `n` rows.
#[derive(Debug, Clone)]
pub struct DensityClustering {
    /// Per-row cluster id, `None` for noise.
    pub labels: Vec<Option<usize>>,
    /// Rows in processing order (the reachability plot's x axis).
    pub ordering: Vec<usize>,
    /// Per-row reachability distance; `INFINITY` for the ordering's start.
    pub reachability: Vec<f64>,
    n_clusters: usize,
}

impl DensityClustering {
    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn cluster_members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(cluster))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Full OPTICS pass: `dist(i, j)` supplies pairwise distances,
/// `min_samples` is the core-point threshold (self included), `xi` the
/// steepness for extraction. Minimum cluster size equals `min_samples`.
pub fn optics_xi(
    n: usize,
    min_samples: usize,
    xi: f64,
    dist: impl Fn(usize, usize) -> f64,
) -> DensityClustering {
    assert!(n >= min_samples, "need at least min_samples rows");
    assert!(min_samples >= 2);

    // core distance: distance to the min_samples-th closest point, self counted
    let mut core = vec![0.0; n];
    let mut buf = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            buf[j] = if i == j { 0.0 } else { dist(i, j) };
        }
        buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        core[i] = buf[min_samples - 1];
    }

    let mut reachability = vec![f64::INFINITY; n];
    let mut predecessor = vec![usize::MAX; n];
    let mut processed = vec![false; n];
    let mut ordering = Vec::with_capacity(n);

    let update = |p: usize,
                  processed: &[bool],
                  reachability: &mut [f64],
                  predecessor: &mut [usize]| {
        for o in 0..n {
            if processed[o] || o == p {
                continue;
            }
            let r = core[p].max(dist(p, o));
            if r < reachability[o] {
                reachability[o] = r;
                predecessor[o] = p;
            }
        }
    };

    for start in 0..n {
        if processed[start] {
            continue;
        }
        processed[start] = true;
        ordering.push(start);
        update(start, &processed, &mut reachability, &mut predecessor);
        loop {
            // next seed: smallest (reachability, index) among unprocessed
            let mut next = usize::MAX;
            for o in 0..n {
                if processed[o] || reachability[o].is_infinite() {
                    continue;
                }
                if next == usize::MAX || reachability[o] < reachability[next] {
                    next = o;
                }
            }
            if next == usize::MAX {
                break;
            }
            processed[next] = true;
            ordering.push(next);
            update(next, &processed, &mut reachability, &mut predecessor);
        }
    }

    let clusters = xi_clusters(&reachability, &predecessor, &ordering, xi, min_samples);

    // innermost clusters come first in the list and win the labeling
    let mut labels_by_position = vec![None; n];
    let mut label = 0;
    for &(s, e) in &clusters {
        if labels_by_position[s..=e].iter().all(|l| l.is_none()) {
            for slot in &mut labels_by_position[s..=e] {
                *slot = Some(label);
            }
            label += 1;
        }
    }
    let mut labels = vec![None; n];
    for (pos, &row) in ordering.iter().enumerate() {
        labels[row] = labels_by_position[pos];
    }

    DensityClustering { labels, ordering, reachability, n_clusters: label }
}

struct SteepDownArea {
    start: usize,
    end: usize,
    mib: f64,
}

/// Extract clusters as (start, end) positions in the ordering, inclusive.
fn xi_clusters(
    reachability: &[f64],
    predecessor: &[usize],
    ordering: &[usize],
    xi: f64,
    min_samples: usize,
) -> Vec<(usize, usize)> {
    let n = ordering.len();
    let ixi = 1.0 - xi;
    // reachability in ordering positions, with a sentinel INF appended so the
    // final descent closes as a steep-up boundary
    let mut r: Vec<f64> = ordering.iter().map(|&i| reachability[i]).collect();
    r.push(f64::INFINITY);
    let p: Vec<usize> = ordering.iter().map(|&i| predecessor[i]).collect();

    // ratio form: 0/0 and inf/inf plateaus are NaN and count as neither
    // steep nor moving
    let ratio: Vec<f64> = (0..n).map(|i| r[i] / r[i + 1]).collect();
    let steep_up: Vec<bool> = ratio.iter().map(|&q| q <= ixi).collect();
    let steep_down: Vec<bool> = ratio.iter().map(|&q| q >= 1.0 / ixi).collect();
    let up: Vec<bool> = ratio.iter().map(|&q| q < 1.0).collect();
    let down: Vec<bool> = ratio.iter().map(|&q| q > 1.0).collect();

    let mut sdas: Vec<SteepDownArea> = Vec::new();
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut index = 0usize;
    let mut mib = 0.0f64;

    for steep_index in 0..n {
        if !(steep_up[steep_index] || steep_down[steep_index]) {
            continue;
        }
        if steep_index < index {
            continue;
        }
        mib = r[index..=steep_index].iter().fold(mib, |a, &b| a.max(b));

        if steep_down[steep_index] {
            filter_sdas(&mut sdas, mib, ixi, &r);
            let d_start = steep_index;
            let d_end = extend_region(&steep_down, &up, d_start, min_samples);
            sdas.push(SteepDownArea { start: d_start, end: d_end, mib: 0.0 });
            index = d_end + 1;
            mib = r[index];
        } else {
            filter_sdas(&mut sdas, mib, ixi, &r);
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &down, u_start, min_samples);
            index = u_end + 1;
            mib = r[index];

            let mut u_clusters: Vec<(usize, usize)> = Vec::new();
            for sda in &sdas {
                let mut c_start = sda.start;
                let mut c_end = u_end;

                // the steep-up side must rise back above the area's mib
                if r[c_end + 1] * ixi < sda.mib {
                    continue;
                }

                let d_max = r[sda.start];
                if d_max * ixi >= r[c_end + 1] {
                    while c_start < sda.end && r[c_start + 1] > r[c_end + 1] {
                        c_start += 1;
                    }
                } else if r[c_end + 1] * ixi >= d_max {
                    while c_end > u_start && r[c_end - 1] > d_max {
                        c_end -= 1;
                    }
                }

                let Some((s, e)) = correct_predecessor(&r, &p, ordering, c_start, c_end) else {
                    continue;
                };
                c_start = s;
                c_end = e;

                if c_end - c_start + 1 < min_samples {
                    continue;
                }
                if c_start > sda.end {
                    continue;
                }
                if c_end < u_start {
                    continue;
                }
                u_clusters.push((c_start, c_end));
            }
            // smaller (nested) clusters first
            u_clusters.reverse();
            clusters.extend(u_clusters);
        }
    }
    clusters
}

fn filter_sdas(sdas: &mut Vec<SteepDownArea>, mib: f64, ixi: f64, r: &[f64]) {
    if mib.is_infinite() {
        sdas.clear();
        return;
    }
    sdas.retain(|sda| mib <= r[sda.start] * ixi);
    for sda in sdas.iter_mut() {
        sda.mib = sda.mib.max(mib);
    }
}

/// Extend a steep region from `start`, tolerating at most `min_samples`
/// consecutive non-steep points that still move in the right direction.
fn extend_region(steep: &[bool], xward: &[bool], start: usize, min_samples: usize) -> usize {
    let n = steep.len();
    let mut non_xward = 0usize;
    let mut end = start;
    let mut index = start;
    while index < n {
        if steep[index] {
            non_xward = 0;
            end = index;
        } else if !xward[index] {
            non_xward += 1;
            if non_xward > min_samples {
                break;
            }
        } else {
            return end;
        }
        index += 1;
    }
    end
}

/// Shrink the cluster from the right until its last point's predecessor lies
/// inside the cluster.
fn correct_predecessor(
    r: &[f64],
    p: &[usize],
    ordering: &[usize],
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if r[s] > r[e] {
            return Some((s, e));
        }
        let pred_of_e = p[e];
        if pred_of_e != usize::MAX && ordering[s..e].contains(&pred_of_e) {
            return Some((s, e));
        }
        e -= 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(points: &[(f64, f64)]) -> impl Fn(usize, usize) -> f64 + '_ {
        move |i, j| {
            let (x1, y1) = points[i];
            let (x2, y2) = points[j];
            ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt()
        }
    }

    #[test]
    fn two_blobs_two_clusters() {
        let pts = [
            (0.0, 0.0),
            (0.0, 1.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (5.0, 5.0),
            (5.0, 6.0),
            (6.0, 5.0),
            (6.0, 6.0),
        ];
        let c = optics_xi(8, 3, 0.05, euclid(&pts));
        assert_eq!(c.n_clusters(), 2);
        assert_eq!(c.noise_count(), 0);
        let a = c.labels[0].unwrap();
        for i in 0..4 {
            assert_eq!(c.labels[i], Some(a));
        }
        let b = c.labels[4].unwrap();
        assert_ne!(a, b);
        for i in 4..8 {
            assert_eq!(c.labels[i], Some(b));
        }
    }

    #[test]
    fn identical_rows_single_cluster() {
        let pts = vec![(2.0, 2.0); 6];
        let c = optics_xi(6, 3, 0.05, euclid(&pts));
        assert_eq!(c.n_clusters(), 1);
        assert_eq!(c.noise_count(), 0);
    }

    #[test]
    fn ordering_is_a_permutation() {
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|i| ((i as f64 * 0.71).sin() * 4.0, (i as f64 * 1.13).cos() * 4.0))
            .collect();
        let c = optics_xi(12, 3, 0.05, euclid(&pts));
        let mut seen = vec![false; 12];
        for &i in &c.ordering {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert!(c.reachability[c.ordering[0]].is_infinite());
    }
}
