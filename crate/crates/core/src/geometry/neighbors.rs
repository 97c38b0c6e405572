use super::{dist2, sub, GeometryError, Point3};

/// One k-nearest-neighbor hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// `neighbor - query`
    pub offset: Point3,
    pub dist2: f64,
}

/// The `k` points closest to `query`, nearest first. Equal distances are
/// ordered by index.
pub fn knn(query: Point3, points: &[Point3], k: usize) -> Result<Vec<Neighbor>, GeometryError> {
    if k > points.len() {
        return Err(GeometryError::TooFew {
            requested: k,
            available: points.len(),
        });
    }
    // Sorted shortlist; indices arrive in increasing order, so a strict
    // comparison on distance keeps the lower index on ties.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, &p) in points.iter().enumerate() {
        let d = dist2(p, query);
        if best.len() == k {
            match best.last() {
                Some(&(worst, _)) if d < worst => {}
                _ => continue,
            }
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    Ok(best
        .into_iter()
        .map(|(d, i)| Neighbor {
            index: i,
            offset: sub(points[i], query),
            dist2: d,
        })
        .collect())
}

/// Greedy farthest point sampling starting from `seed`. Each pick maximizes
/// the squared distance to the chosen set; ties go to the lowest index.
pub fn farthest_point_sample(
    points: &[Point3],
    m: usize,
    seed: usize,
) -> Result<Vec<usize>, GeometryError> {
    let n = points.len();
    if m > n || seed >= n {
        return Err(GeometryError::TooFew {
            requested: m.max(seed + 1),
            available: n,
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut chosen = vec![false; n];
    let mut min_d2: Vec<f64> = points.iter().map(|&p| dist2(p, points[seed])).collect();
    let mut out = Vec::with_capacity(m);
    out.push(seed);
    chosen[seed] = true;
    while out.len() < m {
        let mut pick = usize::MAX;
        let mut pick_d = f64::NEG_INFINITY;
        for i in 0..n {
            if !chosen[i] && min_d2[i] > pick_d {
                pick = i;
                pick_d = min_d2[i];
            }
        }
        chosen[pick] = true;
        out.push(pick);
        let p = points[pick];
        for (i, slot) in min_d2.iter_mut().enumerate() {
            let d = dist2(points[i], p);
            if d < *slot {
                *slot = d;
            }
        }
    }
    Ok(out)
}

/// Indices of the first occurrence of every distinct position, ascending.
pub fn dedup_indices(points: &[Point3]) -> Vec<usize> {
    let key = |p: &Point3| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| key(&points[a]).cmp(&key(&points[b])).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::with_capacity(points.len());
    for (pos, &i) in order.iter().enumerate() {
        if pos == 0 || key(&points[order[pos - 1]]) != key(&points[i]) {
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_on_a_point() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [4.0, 4.0, 4.0]];
        let nn = knn([1.0, 2.0, 3.0], &pts, 1).unwrap();
        assert_eq!(nn[0].index, 1);
        assert_eq!(nn[0].offset, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_nearest_on_a_line() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]];
        let nn = knn([0.4, 0.0, 0.0], &pts, 2).unwrap();
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let nn = knn([0.0; 3], &pts, 2).unwrap();
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn knn_rejects_k_above_n() {
        assert!(knn([0.0; 3], &[[0.0; 3]], 2).is_err());
    }

    #[test]
    fn fps_collinear() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), vec![0, 2]);
        assert_eq!(farthest_point_sample(&pts, 1, 0).unwrap(), vec![0]);
        let mut all = farthest_point_sample(&pts, 3, 0).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(farthest_point_sample(&pts, 4, 0).is_err());
    }

    #[test]
    fn fps_with_duplicates_stays_distinct() {
        let pts = [[0.0; 3], [0.0; 3], [0.0; 3]];
        let mut idx = farthest_point_sample(&pts, 3, 1).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let pts = [[1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0], [0.0; 3], [2.0, 0.0, 0.0]];
        assert_eq!(dedup_indices(&pts), vec![0, 1, 4]);
    }
}
