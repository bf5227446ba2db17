use crate::mask::LabelMask;

/// Offsets `(dx, dy)` with `dx² + dy² <= r²`.
pub fn disc_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erodes each class region by a Euclidean disc. A labeled pixel survives iff
/// every disc offset lands inside the frame on the same label.
pub fn erode_labels(mask: &LabelMask, radius: u32) -> LabelMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let offsets = disc_offsets(radius);
    let src = mask.cells();
    let mut out = mask.clone();
    for (i, cell) in out.cells_mut().iter_mut().enumerate() {
        let v = src[i];
        if v == 0 {
            continue;
        }
        let (x, y) = (i as i64 % w, i as i64 / w);
        let keep = offsets.iter().all(|&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            nx >= 0 && ny >= 0 && nx < w && ny < h && src[(ny * w + nx) as usize] == v
        });
        if !keep {
            *cell = 0;
        }
    }
    out
}
