use crate::points::{dist2, Points};

/// Greedy maximin ordering.
///
/// The first point is the one closest to the centroid; every later point
/// maximizes its minimum distance to the points already chosen. Ties go to
/// the lowest original index. O(n^2) time, O(n) memory.
pub fn maximin_order(locs: &Points) -> Vec<usize> {
    let n = locs.len();
    if n == 0 {
        return Vec::new();
    }
    let c = locs.centroid();
    let mut first = 0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let d = dist2(locs.point(i), &c);
        if d < best {
            best = d;
            first = i;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut chosen = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut cur = first;
    for _ in 0..n {
        order.push(cur);
        chosen[cur] = true;
        let p = locs.point(cur);
        let mut next = usize::MAX;
        let mut next_d = f64::NEG_INFINITY;
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            let d = dist2(p, locs.point(i));
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if min_d2[i] > next_d {
                next_d = min_d2[i];
                next = i;
            }
        }
        if next == usize::MAX {
            break;
        }
        cur = next;
    }
    order
}

/// Lexicographic ordering with `axis` as the major key, remaining axes in
/// increasing order, then original index.
pub fn coordinate_order(locs: &Points, axis: usize) -> Vec<usize> {
    let mut keys: Vec<usize> = (0..locs.dim()).collect();
    keys.retain(|&a| a != axis);
    keys.insert(0, axis.min(locs.dim() - 1));
    let mut order: Vec<usize> = (0..locs.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (locs.point(a), locs.point(b));
        keys.iter()
            .map(|&k| pa[k].total_cmp(&pb[k]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}
