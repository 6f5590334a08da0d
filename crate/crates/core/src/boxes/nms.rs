use alloc::vec::Vec;

use super::bbox::{iou, BoundingBox};

/// Greedy non-maximum suppression.
///
/// Keeps the most confident remaining box and drops every other box whose
/// IoU with it exceeds `iou_threshold`. Output is sorted by confidence
/// descending, ties by input position.
pub fn nms(boxes: &[BoundingBox], iou_threshold: f64) -> Vec<BoundingBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // stable: equal confidences keep input order
    order.sort_by(|&a, &b| boxes[b].score().total_cmp(&boxes[a].score()));
    let mut suppressed = alloc::vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(boxes[i]);
        for &j in &order[rank + 1..] {
            if !suppressed[j] && iou(&boxes[i], &boxes[j]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, uniform};

    fn rand_boxes(seed: u64, n: usize) -> Vec<BoundingBox> {
        let mut r = stream(seed, 77);
        (0..n)
            .map(|_| {
                BoundingBox::new(
                    uniform(&mut r, 0.2, 0.8),
                    uniform(&mut r, 0.2, 0.8),
                    uniform(&mut r, 0.05, 0.3),
                    uniform(&mut r, 0.05, 0.3),
                )
                .with_confidence(uniform(&mut r, 0.0, 1.0))
            })
            .collect()
    }

    #[test]
    fn singleton_and_disjoint() {
        let a = BoundingBox::new(0.2, 0.2, 0.1, 0.1).with_confidence(0.4);
        assert_eq!(nms(&[a], 0.5), alloc::vec![a]);
        let b = BoundingBox::new(0.8, 0.8, 0.1, 0.1).with_confidence(0.9);
        assert_eq!(nms(&[a, b], 0.5), alloc::vec![b, a]);
    }

    #[test]
    fn no_surviving_pair_overlaps_and_idempotent() {
        for seed in 0..20 {
            let out = nms(&rand_boxes(seed, 50), 0.5);
            for i in 0..out.len() {
                for j in i + 1..out.len() {
                    assert!(iou(&out[i], &out[j]) <= 0.5);
                }
            }
            assert_eq!(nms(&out, 0.5), out);
        }
    }

    #[test]
    fn ties_broken_by_input_index() {
        let a = BoundingBox::new(0.5, 0.5, 0.2, 0.2).with_confidence(0.7);
        let b = BoundingBox::new(0.51, 0.5, 0.2, 0.2).with_confidence(0.7);
        assert_eq!(nms(&[a, b], 0.5), alloc::vec![a]);
        assert_eq!(nms(&[b, a], 0.5), alloc::vec![b]);
    }
}
