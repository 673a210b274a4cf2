//! Uniform-grid spatial hash over bounding boxes.

use std::collections::HashMap;

use crate::geom::BBox;

#[derive(Clone, Debug)]
pub struct SpatialHash {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialHash {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        SpatialHash {
            cell,
            cells: HashMap::new(),
        }
    }

    pub fn build(cell: f64, boxes: &[BBox]) -> Self {
        let mut h = SpatialHash::new(cell);
        for (i, b) in boxes.iter().enumerate() {
            h.insert(i, b);
        }
        h
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    fn cell_range(&self, b: &BBox) -> ((i64, i64), (i64, i64)) {
        (self.cell_of(b.min.x, b.min.y), self.cell_of(b.max.x, b.max.y))
    }

    pub fn insert(&mut self, idx: usize, b: &BBox) {
        let ((x0, y0), (x1, y1)) = self.cell_range(b);
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                self.cells.entry((cx, cy)).or_default().push(idx);
            }
        }
    }

    /// Sorted, deduplicated indices whose cells intersect `b`.
    pub fn query(&self, b: &BBox) -> Vec<usize> {
        let ((x0, y0), (x1, y1)) = self.cell_range(b);
        let mut out = Vec::new();
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(v) = self.cells.get(&(cx, cy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// All index pairs `(i, j)`, `i < j`, whose boxes intersect, in ascending order.
///
/// Each pair is emitted by exactly one cell: the one containing the lower-left
/// corner of the boxes' intersection.
pub fn candidate_pairs(boxes: &[BBox], cell: f64) -> Vec<(usize, usize)> {
    let hash = SpatialHash::build(cell, boxes);
    let mut keys: Vec<&(i64, i64)> = hash.cells.keys().collect();
    keys.sort_unstable();
    let mut pairs = Vec::new();
    for key in keys {
        let members = &hash.cells[key];
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let (bi, bj) = (&boxes[i], &boxes[j]);
                if !bi.intersects(bj) {
                    continue;
                }
                let corner = hash.cell_of(bi.min.x.max(bj.min.x), bi.min.y.max(bj.min.y));
                if corner == *key {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pairs_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let boxes: Vec<BBox> = (0..300)
            .map(|_| {
                let min = Point::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
                let size = Point::new(rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
                BBox { min, max: min + size }
            })
            .collect();
        let mut brute = Vec::new();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].intersects(&boxes[j]) {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(candidate_pairs(&boxes, 1.5), brute);
    }

    #[test]
    fn query_finds_overlapping_boxes() {
        let boxes = [
            BBox { min: Point::new(0., 0.), max: Point::new(1., 1.) },
            BBox { min: Point::new(5., 5.), max: Point::new(6., 6.) },
        ];
        let h = SpatialHash::build(1.0, &boxes);
        let hits = h.query(&BBox { min: Point::new(0.5, 0.5), max: Point::new(0.7, 0.7) });
        assert_eq!(hits, vec![0]);
    }
}
