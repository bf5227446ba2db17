#![allow(dead_code)]

use std::collections::BTreeSet;

use mpseg::dataset::Point;
use mpseg::mask::LabelMask;
use mpseg::taxonomy::SegmentClass;
use rand::Rng;

pub fn class(name: &str) -> SegmentClass {
    mpseg::taxonomy::class_from_name(name).unwrap()
}

/// Each pixel is background with probability `bg`, otherwise a uniform draw
/// from `classes`.
pub fn random_mask(r: &mut impl Rng, w: u32, h: u32, classes: &[SegmentClass], bg: f64) -> LabelMask {
    let cells = (0..w * h)
        .map(|_| {
            if r.random_bool(bg) {
                0
            } else {
                classes[r.random_range(0..classes.len())].id()
            }
        })
        .collect();
    LabelMask::from_cells(w, h, cells).unwrap()
}

/// Per-image mean of per-gt-class F1 by direct pixel recount, using
/// `2 tp / (2 tp + fp + fn)`.
pub fn brute_image_mean(gt: &LabelMask, pred: &LabelMask) -> Option<f64> {
    let mut scores = Vec::new();
    for id in 1..=25u8 {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for (&g, &p) in gt.cells().iter().zip(pred.cells()) {
            match (g == id, p == id) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        if tp + fneg > 0 {
            scores.push(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64);
        }
    }
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

pub fn brute_dataset_mean(pairs: &[(LabelMask, LabelMask)]) -> f64 {
    let means: Vec<f64> = pairs.iter().filter_map(|(g, p)| brute_image_mean(g, p)).collect();
    if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    }
}

/// Classic crossing-number point-in-polygon test over all rings jointly.
pub fn point_in_rings(rings: &[Vec<Point>], x: f64, y: f64) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (ring[i], ring[j]);
            if (pi.y > y) != (pj.y > y) && x < (pj.x - pi.x) * (y - pi.y) / (pj.y - pi.y) + pi.x {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Three-branch routing written from the class names alone.
pub fn reference_route(labels: &BTreeSet<&str>) -> &'static str {
    const RCA: [&str; 8] = ["1", "2", "3", "4", "16", "16a", "16b", "16c"];
    const LCX: [&str; 7] = ["11", "12", "13", "14", "14a", "14b", "15"];
    if labels.iter().any(|l| RCA.contains(l)) {
        "RCA"
    } else if labels.iter().any(|l| LCX.contains(l)) {
        "LCX"
    } else {
        "LAD"
    }
}

/// 8-connected components by union-find, each as a sorted pixel index list,
/// ordered by smallest index.
pub fn union_find_components(cells: &[bool], w: usize) -> Vec<Vec<usize>> {
    let n = cells.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let h = n / w;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !cells[i] {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if cells[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..n).filter(|&i| cells[i]) {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}
