//! Maximally stable extremal regions inside each Otsu class.
//!
//! For one class, the extremal regions are the 4-connected components of
//! `{p in class : level(p) <= t}` for every occupied level `t`. They form a
//! component tree; a node keeps the lowest level at which its exact pixel
//! set exists. The variation of a node at level `t` is
//!
//! ```text
//! v = (|A(t + delta)| - |D(t - delta)|) / |R|
//! ```
//!
//! where `A` is the ancestor reached at `t + delta` and `D` the descendant
//! on the largest-child chain at `t - delta`, the chain bottom standing in
//! when it was born later. A node is maximally stable when `v` is a local
//! minimum along parent and largest child. The reported regions are the
//! outermost stable nodes passing the area and variation filters, so they
//! are pairwise disjoint.
//!
//! When every class holds a single quantized level, each class component
//! is a leaf and a root at once with `v = 0`, and the output is exactly the
//! 4-connected component labelling of the classes (subject to the area
//! filters).

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::time::Timestamp;

use super::{QuantizationResult, ThermalFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MserParams {
    /// Level step used in the stability measure.
    pub delta: usize,
    pub min_area: usize,
    /// Upper area bound as a fraction of the frame.
    pub max_area_fraction: f64,
    pub max_variation: f64,
}

impl Default for MserParams {
    fn default() -> Self {
        MserParams { delta: 2, min_area: 8, max_area_fraction: 0.75, max_variation: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedRegion {
    pub class_id: usize,
    /// Sequence number within the class, in raster order of first pixel.
    pub region_id: usize,
    pub pixel_count: usize,
    /// `(min_row, min_col, max_row, max_col)`, inclusive.
    pub bounding_box: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSizeSample {
    #[serde(with = "crate::time::serde_ts")]
    pub timestamp: Timestamp,
    /// `(class_id, region_id, pixel_count)` in class then region order.
    pub sizes: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
struct Node {
    level: u16,
    size: usize,
    parent: Option<usize>,
    largest_child: Option<usize>,
    children: Vec<usize>,
    first_pixel: usize,
    bbox: (usize, usize, usize, usize),
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big as u32;
        self.size[big] += self.size[small];
        big
    }
}

fn merge_bbox(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> (usize, usize, usize, usize) {
    (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3))
}

/// Builds the component tree for the pixels of one class.
fn component_tree(width: usize, levels: &[u16], in_class: &[bool], pixels: &mut [usize]) -> Vec<Node> {
    pixels.sort_by_key(|&p| (levels[p], p));
    let n = levels.len();
    let mut uf = UnionFind::new(n);
    let mut added = vec![false; n];
    let mut nodes: Vec<Node> = Vec::new();
    let mut active: Vec<usize> = Vec::new();

    let mut i = 0;
    while i < pixels.len() {
        let level = levels[pixels[i]];
        let mut j = i;
        while j < pixels.len() && levels[pixels[j]] == level {
            j += 1;
        }
        let batch = &pixels[i..j];
        for &p in batch {
            added[p] = true;
        }
        for &p in batch {
            let (r, c) = (p / width, p % width);
            let mut neigh = [usize::MAX; 4];
            if r > 0 {
                neigh[0] = p - width;
            }
            if p + width < n {
                neigh[1] = p + width;
            }
            if c > 0 {
                neigh[2] = p - 1;
            }
            if c + 1 < width {
                neigh[3] = p + 1;
            }
            for q in neigh {
                if q != usize::MAX && added[q] && in_class[q] {
                    uf.union(p, q);
                }
            }
        }

        // one new node per touched root, adopting the old nodes merged into it
        let mut touched: Vec<usize> = batch.iter().map(|&p| uf.find(p)).collect();
        touched.sort_unstable();
        touched.dedup();
        let mut new_of_root = std::collections::HashMap::with_capacity(touched.len());
        for &root in &touched {
            let id = nodes.len();
            nodes.push(Node {
                level,
                size: uf.size[root] as usize,
                parent: None,
                largest_child: None,
                children: Vec::new(),
                first_pixel: usize::MAX,
                bbox: (usize::MAX, usize::MAX, 0, 0),
            });
            new_of_root.insert(root, id);
        }
        for &p in batch {
            let id = new_of_root[&uf.find(p)];
            let node = &mut nodes[id];
            node.first_pixel = node.first_pixel.min(p);
            let (r, c) = (p / width, p % width);
            node.bbox = merge_bbox(node.bbox, (r, c, r, c));
        }
        let mut still_active = Vec::with_capacity(active.len() + touched.len());
        for old in active.drain(..) {
            let root = uf.find(nodes[old].first_pixel);
            match new_of_root.get(&root) {
                Some(&id) => {
                    nodes[old].parent = Some(id);
                    let (fp, bb, sz) = (nodes[old].first_pixel, nodes[old].bbox, nodes[old].size);
                    let node = &mut nodes[id];
                    node.children.push(old);
                    node.first_pixel = node.first_pixel.min(fp);
                    node.bbox = merge_bbox(node.bbox, bb);
                    let current = node.largest_child;
                    let keep = current.map(|cur| nodes[cur].size >= sz);
                    if keep != Some(true) {
                        nodes[id].largest_child = Some(old);
                    }
                }
                None => still_active.push(old),
            }
        }
        still_active.extend(touched.iter().map(|r| new_of_root[r]));
        active = still_active;
        i = j;
    }
    nodes
}

fn variation(nodes: &[Node], id: usize, delta: usize) -> f64 {
    let node = &nodes[id];
    let up = node.level as usize + delta;
    let mut a = id;
    while let Some(p) = nodes[a].parent {
        if nodes[p].level as usize > up {
            break;
        }
        a = p;
    }
    let down = node.level as isize - delta as isize;
    let mut d = id;
    while nodes[d].level as isize > down {
        match nodes[d].largest_child {
            Some(c) => d = c,
            None => break,
        }
    }
    (nodes[a].size - nodes[d].size) as f64 / node.size as f64
}

/// Splits every Otsu class into its maximally stable extremal regions.
pub fn mser_regions<T: Scalar>(
    frame: &ThermalFrame<T>,
    quant: &QuantizationResult,
    params: &MserParams,
) -> Vec<SegmentedRegion> {
    let width = frame.width();
    let total = frame.len();
    assert_eq!(quant.levels.len(), total, "quantization belongs to another frame");
    let max_area = params.max_area_fraction * total as f64;
    let mut out = Vec::new();
    let mut in_class = vec![false; total];
    for class in 0..quant.n_classes {
        let mut pixels: Vec<usize> = (0..total).filter(|&p| quant.labelmap[p] as usize == class).collect();
        if pixels.is_empty() {
            continue;
        }
        for &p in &pixels {
            in_class[p] = true;
        }
        let nodes = component_tree(width, &quant.levels, &in_class, &mut pixels);
        for &p in &pixels {
            in_class[p] = false;
        }

        let var: Vec<f64> = (0..nodes.len()).map(|i| variation(&nodes, i, params.delta)).collect();
        let accepted = |i: usize| {
            let n = &nodes[i];
            let stable_up = n.parent.map_or(true, |p| var[i] <= var[p]);
            let stable_down = n.largest_child.map_or(true, |c| var[i] <= var[c]);
            stable_up
                && stable_down
                && var[i] <= params.max_variation
                && n.size >= params.min_area
                && n.size as f64 <= max_area
        };

        let mut picked = Vec::new();
        let mut stack: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        while let Some(i) = stack.pop() {
            if accepted(i) {
                picked.push(i);
            } else {
                stack.extend(nodes[i].children.iter().copied());
            }
        }
        picked.sort_by_key(|&i| nodes[i].first_pixel);
        out.extend(picked.into_iter().enumerate().map(|(region_id, i)| SegmentedRegion {
            class_id: class,
            region_id,
            pixel_count: nodes[i].size,
            bounding_box: nodes[i].bbox,
        }));
    }
    out
}

/// Region sizes of one frame in `(class_id, region_id)` order.
pub fn region_size_record(regions: &[SegmentedRegion], timestamp: Timestamp) -> RegionSizeSample {
    let mut sizes: Vec<_> = regions.iter().map(|r| (r.class_id, r.region_id, r.pixel_count)).collect();
    sizes.sort_unstable();
    RegionSizeSample { timestamp, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{otsu_multiclass, Quantization};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn ts() -> Timestamp {
        NaiveDate::from_ymd_opt(2023, 10, 18).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn frame(w: usize, h: usize, values: Vec<f64>) -> ThermalFrame<f64> {
        ThermalFrame::new(w, h, ts(), values).unwrap()
    }

    fn all_pixels() -> MserParams {
        MserParams { min_area: 1, max_area_fraction: 1.0, ..MserParams::default() }
    }

    /// Reference labelling: breadth-first flood fill over equal labels.
    fn flood_fill_components(w: usize, h: usize, label: &[u8]) -> Vec<(u8, usize)> {
        let mut seen = vec![false; w * h];
        let mut comps = Vec::new();
        for start in 0..w * h {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = std::collections::VecDeque::from([start]);
            let mut size = 0;
            while let Some(p) = queue.pop_front() {
                size += 1;
                let (r, c) = (p / w, p % w);
                let mut next = Vec::new();
                if r > 0 { next.push(p - w); }
                if r + 1 < h { next.push(p + w); }
                if c > 0 { next.push(p - 1); }
                if c + 1 < w { next.push(p + 1); }
                for q in next {
                    if !seen[q] && label[q] == label[start] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
            comps.push((label[start], size));
        }
        comps
    }

    #[test]
    fn split_class_gives_two_regions() {
        // class "hot" appears left and right, separated by a cold column
        #[rustfmt::skip]
        let v = vec![
            40.0, 40.0, 10.0, 40.0,
            40.0, 40.0, 10.0, 40.0,
            40.0, 40.0, 10.0, 40.0,
        ];
        let f = frame(4, 3, v);
        let q = otsu_multiclass(&f, 2, 256, Quantization::FrameRange).unwrap();
        let regions = mser_regions(&f, &q, &all_pixels());
        let hot: Vec<_> = regions.iter().filter(|r| r.class_id == 1).collect();
        assert_eq!(hot.len(), 2);
        assert_eq!((hot[0].region_id, hot[0].pixel_count, hot[0].bounding_box), (0, 6, (0, 0, 2, 1)));
        assert_eq!((hot[1].region_id, hot[1].pixel_count, hot[1].bounding_box), (1, 3, (0, 3, 2, 3)));
        assert_eq!(regions.iter().filter(|r| r.class_id == 0).count(), 1);
    }

    #[test]
    fn area_filter_drops_single_pixel() {
        let mut v = vec![10.0; 9];
        v[4] = 50.0;
        let f = frame(3, 3, v);
        let q = otsu_multiclass(&f, 2, 256, Quantization::FrameRange).unwrap();
        let params = MserParams { min_area: 2, max_area_fraction: 1.0, ..MserParams::default() };
        let regions = mser_regions(&f, &q, &params);
        assert!(regions.iter().all(|r| r.class_id == 0));
        assert_eq!(regions.len(), 1);
    }

    #[test]
    fn nested_stable_region_is_found_inside_a_class() {
        // one class holding a 2-level ramp: a bright 3x3 core inside a 7x7
        // patch; the core is stable, the patch jumps too much at its level
        let mut v = vec![0.0; 81];
        for r in 1..8 {
            for c in 1..8 {
                v[r * 9 + c] = 100.0;
            }
        }
        for r in 3..6 {
            for c in 3..6 {
                v[r * 9 + c] = 90.0;
            }
        }
        let f = frame(9, 9, v);
        let q = otsu_multiclass(&f, 2, 256, Quantization::FrameRange).unwrap();
        assert_eq!(q.class_sizes(), vec![32, 49]);
        let regions = mser_regions(&f, &q, &all_pixels());
        let class1: Vec<_> = regions.iter().filter(|r| r.class_id == 1).collect();
        assert_eq!(class1.len(), 1);
        assert_eq!(class1[0].pixel_count, 9);
        assert_eq!(class1[0].bounding_box, (3, 3, 5, 5));
    }

    #[test]
    fn record_orders_sizes() {
        let r = |class_id, region_id, pixel_count| SegmentedRegion {
            class_id,
            region_id,
            pixel_count,
            bounding_box: (0, 0, 0, 0),
        };
        let s = region_size_record(&[r(1, 0, 25), r(0, 1, 50), r(0, 0, 100)], ts());
        assert_eq!(s.sizes, vec![(0, 0, 100), (0, 1, 50), (1, 0, 25)]);
        assert!(region_size_record(&[], ts()).sizes.is_empty());
    }

    proptest! {
        #[test]
        fn single_level_classes_reduce_to_flood_fill(
            w in 2usize..12, h in 2usize..12, k in 2usize..5, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // blocky label image so components are non-trivial
            let label: Vec<u8> = (0..w * h)
                .map(|p| {
                    let (r, c) = (p / w, p % w);
                    ((r / 2 * 7 + c / 3 * 3 + rng.gen_range(0..2)) % k) as u8
                })
                .collect();
            let mut distinct = label.clone();
            distinct.sort_unstable();
            distinct.dedup();
            prop_assume!(distinct.len() >= 2);
            let values: Vec<f64> = label.iter().map(|&l| 10.0 + 7.0 * l as f64).collect();
            let f = frame(w, h, values);
            let q = otsu_multiclass(&f, distinct.len(), 256, Quantization::FrameRange).unwrap();
            let regions = mser_regions(&f, &q, &all_pixels());
            let mut expected: Vec<usize> = flood_fill_components(w, h, &label).into_iter().map(|(_, s)| s).collect();
            let mut got: Vec<usize> = regions.iter().map(|r| r.pixel_count).collect();
            expected.sort_unstable();
            got.sort_unstable();
            prop_assert_eq!(got, expected);
            let total: usize = regions.iter().map(|r| r.pixel_count).sum();
            prop_assert!(total <= w * h);
        }

        #[test]
        fn regions_are_disjoint(values in proptest::collection::vec(0u8..12, 36)) {
            let f = frame(6, 6, values.iter().map(|&v| v as f64).collect());
            if let Ok(q) = otsu_multiclass(&f, 3, 12, Quantization::Fixed { min: 0.0, max: 12.0 }) {
                let regions = mser_regions(&f, &q, &all_pixels());
                let total: usize = regions.iter().map(|r| r.pixel_count).sum();
                prop_assert!(total <= 36);
                for r in &regions {
                    prop_assert!(r.bounding_box.2 < 6 && r.bounding_box.3 < 6);
                }
            }
        }
    }
}
