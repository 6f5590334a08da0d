use alloc::vec::Vec;

use rand::Rng;

use super::bbox::iou_wh;
use crate::error::{arg_err, Result};
use crate::rng::{stream, StreamRng};

const MAX_ITERATIONS: usize = 300;
const RESTARTS: usize = 4;

/// Nine `(w, h)` anchor priors sorted by area, three per detection scale.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    anchors: [(f64, f64); 9],
}

impl Default for AnchorSet {
    /// The common nine-anchor preset at 416 px, normalized.
    fn default() -> Self {
        const PX: [(f64, f64); 9] = [
            (10.0, 13.0),
            (16.0, 30.0),
            (33.0, 23.0),
            (30.0, 61.0),
            (62.0, 45.0),
            (59.0, 119.0),
            (116.0, 90.0),
            (156.0, 198.0),
            (373.0, 326.0),
        ];
        let mut anchors = [(0.0, 0.0); 9];
        for (a, p) in anchors.iter_mut().zip(PX) {
            *a = (p.0 / 416.0, p.1 / 416.0);
        }
        AnchorSet { anchors }
    }
}

impl AnchorSet {
    /// Sorts by area; rejects anything but nine positive finite extents.
    pub fn new(anchors: &[(f64, f64)]) -> Result<Self> {
        if anchors.len() != 9 {
            return Err(arg_err!(
                "anchor set needs exactly 9 anchors, got {}",
                anchors.len()
            ));
        }
        let mut a = [(0.0, 0.0); 9];
        for (dst, &(w, h)) in a.iter_mut().zip(anchors) {
            if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
                return Err(arg_err!("anchor ({w}, {h}) must be positive"));
            }
            *dst = (w, h);
        }
        a.sort_by(|x, y| {
            (x.0 * x.1)
                .total_cmp(&(y.0 * y.1))
                .then(x.0.total_cmp(&y.0))
        });
        Ok(AnchorSet { anchors: a })
    }

    pub fn all(&self) -> &[(f64, f64); 9] {
        &self.anchors
    }

    /// Anchors for a detection scale; scale 0 is the coarsest grid and gets
    /// the three largest.
    pub fn for_scale(&self, scale_id: usize) -> [(f64, f64); 3] {
        let base = 3 * (2 - scale_id);
        [
            self.anchors[base],
            self.anchors[base + 1],
            self.anchors[base + 2],
        ]
    }

    /// `(scale_id, index within scale)` of global anchor `g`.
    pub fn locate(g: usize) -> (usize, usize) {
        (2 - g / 3, g % 3)
    }
}

/// Outcome of [`kmeans_anchors`].
#[derive(Clone, Debug)]
pub struct KMeansResult {
    /// Cluster centers sorted by area ascending.
    pub anchors: Vec<(f64, f64)>,
    /// Mean `1 - IoU` after the initial assignment and after every iteration
    /// that changed something, for the winning restart.
    pub distortion_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn anchor_set(&self) -> Result<AnchorSet> {
        AnchorSet::new(&self.anchors)
    }

    pub fn distortion(&self) -> f64 {
        *self.distortion_trace.last().unwrap_or(&0.0)
    }
}

fn dist(b: (f64, f64), c: (f64, f64)) -> f64 {
    1.0 - iou_wh(b.0, b.1, c.0, c.1)
}

/// Lloyd k-means over box extents with the `1 - IoU` distance.
///
/// Inputs are sorted canonically by `(w, h)` before seeding, which makes the
/// result independent of input order. Seeding is greedy k-means++; the best
/// of a few seeded restarts is returned.
pub fn kmeans_anchors(boxes: &[(f64, f64)], k: usize, seed: u64) -> Result<KMeansResult> {
    if boxes.is_empty() {
        return Err(arg_err!("k-means needs at least one box"));
    }
    if k == 0 {
        return Err(arg_err!("k must be positive"));
    }
    for &(w, h) in boxes {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(arg_err!("box extent ({w}, {h}) must be positive"));
        }
    }
    let mut pts: Vec<(f64, f64)> = boxes.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut distinct = 1;
    for i in 1..pts.len() {
        if pts[i] != pts[i - 1] {
            distinct += 1;
        }
    }
    if k > distinct {
        return Err(arg_err!("k = {k} exceeds the {distinct} distinct boxes"));
    }

    let mut rng = stream(seed, 0x4B4D_45414E53);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..RESTARTS {
        let centers = seed_plus_plus(&pts, k, &mut rng);
        let run = lloyd(&pts, centers);
        if best
            .as_ref()
            .is_none_or(|b| run.distortion() < b.distortion())
        {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.anchors.sort_by(|a, b| {
        (a.0 * a.1)
            .total_cmp(&(b.0 * b.1))
            .then(a.0.total_cmp(&b.0))
    });
    Ok(best)
}

fn seed_plus_plus(pts: &[(f64, f64)], k: usize, rng: &mut StreamRng) -> Vec<(f64, f64)> {
    let n = pts.len();
    let trials = 2 + (libm::log(k as f64) as usize);
    let mut centers = Vec::with_capacity(k);
    centers.push(pts[rng.random_range(0..n)]);
    let mut closest: Vec<f64> = pts.iter().map(|&p| dist(p, centers[0])).collect();
    while centers.len() < k {
        let weights: Vec<f64> = closest.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        let mut best_cand = None;
        let mut best_pot = f64::INFINITY;
        for _ in 0..trials {
            let idx = if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, w) in weights.iter().enumerate() {
                    if r < *w {
                        pick = i;
                        break;
                    }
                    r -= w;
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            let pot: f64 = pts
                .iter()
                .zip(&closest)
                .map(|(&p, &c)| c.min(dist(p, pts[idx])))
                .sum();
            if pot < best_pot {
                best_pot = pot;
                best_cand = Some(idx);
            }
        }
        let c = pts[best_cand.expect("trials > 0")];
        for (cl, &p) in closest.iter_mut().zip(pts) {
            *cl = cl.min(dist(p, c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(pts: &[(f64, f64)], mut centers: Vec<(f64, f64)>) -> KMeansResult {
    let k = centers.len();
    let mut assign: Vec<usize> = pts
        .iter()
        .map(|&p| {
            let mut best = 0;
            for c in 1..k {
                if dist(p, centers[c]) < dist(p, centers[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();
    let mean_distortion = |a: &[usize], c: &[(f64, f64)]| {
        pts.iter().zip(a).map(|(&p, &j)| dist(p, c[j])).sum::<f64>() / pts.len() as f64
    };
    let mut trace = alloc::vec![mean_distortion(&assign, &centers)];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        // Update: move a center to its members' mean only if that strictly
        // lowers the cluster's distortion.
        for (j, center) in centers.iter_mut().enumerate() {
            let (mut sw, mut sh, mut cnt) = (0.0, 0.0, 0usize);
            let mut old = 0.0;
            for (&p, &a) in pts.iter().zip(&assign) {
                if a == j {
                    sw += p.0;
                    sh += p.1;
                    cnt += 1;
                    old += dist(p, *center);
                }
            }
            if cnt == 0 {
                continue;
            }
            let cand = (sw / cnt as f64, sh / cnt as f64);
            let new: f64 = pts
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == j)
                .map(|(&p, _)| dist(p, cand))
                .sum();
            if new < old {
                *center = cand;
                changed = true;
            }
        }
        // Assignment: move a point only to a strictly closer center.
        for (&p, a) in pts.iter().zip(assign.iter_mut()) {
            let mut best = *a;
            let mut best_d = dist(p, centers[best]);
            for (c, &center) in centers.iter().enumerate() {
                let d = dist(p, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        trace.push(mean_distortion(&assign, &centers));
    }
    KMeansResult {
        anchors: centers,
        distortion_trace: trace,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, uniform};

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans_anchors(&[], 1, 0).is_err());
        assert!(kmeans_anchors(&[(0.1, 0.1), (0.1, 0.1)], 2, 0).is_err());
        assert!(AnchorSet::new(&[(0.1, 0.1); 8]).is_err());
    }

    #[test]
    fn identical_boxes_single_cluster() {
        let r = kmeans_anchors(&[(0.2, 0.3); 10], 1, 5).unwrap();
        assert_eq!(r.anchors, alloc::vec![(0.2, 0.3)]);
    }

    fn planted(seed: u64) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let centers: Vec<(f64, f64)> = (0..9)
            .map(|i| {
                (
                    0.02 * 1.45f64.powi(i),
                    0.03 * 1.4f64.powi(i) * if i % 2 == 0 { 1.0 } else { 0.6 },
                )
            })
            .collect();
        let mut r = crate::rng::stream(seed, 1);
        let mut pts = Vec::new();
        for &(w, h) in &centers {
            for _ in 0..30 {
                pts.push((
                    w * (1.0 + 0.01 * normal(&mut r)),
                    h * (1.0 + 0.01 * normal(&mut r)),
                ));
            }
        }
        (centers, pts)
    }

    #[test]
    fn recovers_planted_clusters() {
        for seed in 0..3 {
            let (truth, pts) = planted(seed);
            let got = kmeans_anchors(&pts, 9, seed).unwrap();
            let mut truth = truth.clone();
            truth.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
            for (g, t) in got.anchors.iter().zip(&truth) {
                assert!(
                    (g.0 - t.0).abs() / t.0 < 0.02 && (g.1 - t.1).abs() / t.1 < 0.02,
                    "{g:?} vs {t:?}"
                );
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let (_, mut pts) = planted(4);
        let a = kmeans_anchors(&pts, 9, 11).unwrap().anchors;
        pts.reverse();
        let mut r = crate::rng::stream(2, 2);
        for i in (1..pts.len()).rev() {
            let j = r.random_range(0..=i);
            pts.swap(i, j);
        }
        assert_eq!(a, kmeans_anchors(&pts, 9, 11).unwrap().anchors);
    }

    #[test]
    fn distortion_strictly_decreases() {
        let mut r = crate::rng::stream(8, 8);
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|_| (uniform(&mut r, 0.01, 0.5), uniform(&mut r, 0.01, 0.5)))
            .collect();
        for seed in 0..5 {
            let res = kmeans_anchors(&pts, 9, seed).unwrap();
            for w in res.distortion_trace.windows(2) {
                assert!(w[1] < w[0], "{:?}", res.distortion_trace);
            }
        }
    }

    #[test]
    fn scale_partition() {
        let set = AnchorSet::default();
        let all = set.all();
        assert_eq!(set.for_scale(0), [all[6], all[7], all[8]]);
        assert_eq!(set.for_scale(2), [all[0], all[1], all[2]]);
        assert_eq!(AnchorSet::locate(7), (0, 1));
        assert_eq!(AnchorSet::locate(1), (2, 1));
    }
}
