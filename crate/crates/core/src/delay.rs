//! Delay-pattern sequencing for layered code grids.
//!
//! Layer l of an L x T grid shifts right by l steps, giving an
//! L x (T + L - 1) staircase in which position (l, t + l) holds the
//! original code (l, t) and everything outside is a PAD symbol. The
//! transform is a bijection; removal rejects grids whose padding does not
//! form the exact staircase.

use crate::error::{Error, Result};
use crate::quantizer::{CodeGrid, StreamKind};

/// A delayed L x W code grid, W = T + L - 1, with explicit PAD symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayedGrid {
    data: Vec<u16>,
    layers: usize,
    width: usize,
    pad: u16,
    pub stream: StreamKind,
}

impl DelayedGrid {
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pad(&self) -> u16 {
        self.pad
    }

    pub fn row(&self, layer: usize) -> &[u16] {
        &self.data[layer * self.width..(layer + 1) * self.width]
    }

    /// Original frame count before delaying.
    pub fn undelayed_len(&self) -> usize {
        self.width + 1 - self.layers
    }

    pub fn pad_count(&self) -> usize {
        self.data.iter().filter(|&&c| c == self.pad).count()
    }

    fn cell(&self, layer: usize, pos: usize) -> u16 {
        self.data[layer * self.width + pos]
    }
}

/// Shifts layer l right by l positions, filling the exposed cells with
/// `pad`. `pad` must be distinguishable from every real code.
pub fn apply_delay(grid: &CodeGrid, pad: u16) -> Result<DelayedGrid> {
    let layers = grid.nq();
    let t = grid.t();
    if grid.codes().contains(&pad) {
        return Err(Error::InvalidDelayLayout(format!(
            "grid contains the PAD symbol {pad}"
        )));
    }
    let width = t + layers - 1;
    let mut data = vec![pad; layers * width];
    for l in 0..layers {
        let row = grid.layer(l);
        for (i, &c) in row.iter().enumerate() {
            data[l * width + i + l] = c;
        }
    }
    Ok(DelayedGrid {
        data,
        layers,
        width,
        pad,
        stream: grid.stream,
    })
}

/// Inverts `apply_delay`. Fails with `InvalidDelayLayout` when the PAD
/// cells do not form the exact staircase: layer l must carry l leading and
/// L - 1 - l trailing PADs and no PAD in between.
pub fn remove_delay(delayed: &DelayedGrid) -> Result<CodeGrid> {
    let layers = delayed.layers;
    let width = delayed.width;
    if width + 1 < layers {
        return Err(Error::InvalidDelayLayout(format!(
            "width {width} too small for {layers} layers"
        )));
    }
    let t = width + 1 - layers;
    let pad = delayed.pad;
    for l in 0..layers {
        for pos in 0..width {
            let expected_pad = pos < l || pos >= l + t;
            let is_pad = delayed.cell(l, pos) == pad;
            if is_pad != expected_pad {
                return Err(Error::InvalidDelayLayout(format!(
                    "layer {l} position {pos}: {}",
                    if is_pad {
                        "unexpected PAD inside the valid span"
                    } else {
                        "real code where the staircase requires PAD"
                    }
                )));
            }
        }
    }
    let mut codes = vec![0u16; layers * t];
    for l in 0..layers {
        let src = &delayed.data[l * width + l..l * width + l + t];
        codes[l * t..(l + 1) * t].copy_from_slice(src);
    }
    CodeGrid::new(codes, layers, t, delayed.stream)
}

/// Serializes two equally wide delayed grids to one flat u16 sequence:
/// per position, the full acoustic column then the full semantic column.
pub fn interleave_streams(acoustic: &DelayedGrid, semantic: &DelayedGrid) -> Result<Vec<u16>> {
    if acoustic.width != semantic.width {
        return Err(Error::ShapeMismatch(format!(
            "acoustic width {} vs semantic width {}",
            acoustic.width, semantic.width
        )));
    }
    let mut out = Vec::with_capacity((acoustic.layers + semantic.layers) * acoustic.width);
    for pos in 0..acoustic.width {
        for l in 0..acoustic.layers {
            out.push(acoustic.cell(l, pos));
        }
        for l in 0..semantic.layers {
            out.push(semantic.cell(l, pos));
        }
    }
    Ok(out)
}

/// Inverts `interleave_streams` given the two layer counts and the shared
/// PAD symbol.
pub fn deinterleave_streams(
    flat: &[u16],
    nq_acoustic: usize,
    nq_semantic: usize,
    pad: u16,
) -> Result<(DelayedGrid, DelayedGrid)> {
    let per_pos = nq_acoustic + nq_semantic;
    if per_pos == 0 || flat.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !flat.len().is_multiple_of(per_pos) {
        return Err(Error::ShapeMismatch(format!(
            "flat length {} not divisible by {} codes per position",
            flat.len(),
            per_pos
        )));
    }
    let width = flat.len() / per_pos;
    let mut a = vec![0u16; nq_acoustic * width];
    let mut s = vec![0u16; nq_semantic * width];
    for pos in 0..width {
        let base = pos * per_pos;
        for l in 0..nq_acoustic {
            a[l * width + pos] = flat[base + l];
        }
        for l in 0..nq_semantic {
            s[l * width + pos] = flat[base + nq_acoustic + l];
        }
    }
    Ok((
        DelayedGrid {
            data: a,
            layers: nq_acoustic,
            width,
            pad,
            stream: StreamKind::Acoustic,
        },
        DelayedGrid {
            data: s,
            layers: nq_semantic,
            width,
            pad,
            stream: StreamKind::Semantic,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from_rows(rows: &[&[u16]], stream: StreamKind) -> CodeGrid {
        let codes: Vec<u16> = rows.concat();
        CodeGrid::new(codes, rows.len(), rows[0].len(), stream).unwrap()
    }

    #[test]
    fn three_layer_staircase_matches_a_hand_trace() {
        let g = grid_from_rows(
            &[&[1, 2, 3, 4], &[5, 6, 7, 8], &[9, 10, 11, 12]],
            StreamKind::Acoustic,
        );
        let d = apply_delay(&g, 999).unwrap();
        assert_eq!(d.width(), 6);
        assert_eq!(d.row(0), &[1, 2, 3, 4, 999, 999]);
        assert_eq!(d.row(1), &[999, 5, 6, 7, 8, 999]);
        assert_eq!(d.row(2), &[999, 999, 9, 10, 11, 12]);
        assert_eq!(d.pad_count(), 3 * 2);
    }

    #[test]
    fn delay_round_trips() {
        let g = grid_from_rows(&[&[3, 1, 4, 1, 5], &[9, 2, 6, 5, 3]], StreamKind::Semantic);
        let back = remove_delay(&apply_delay(&g, 2048).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn single_layer_is_identity() {
        let g = grid_from_rows(&[&[7, 8, 9]], StreamKind::Acoustic);
        let d = apply_delay(&g, 100).unwrap();
        assert_eq!(d.width(), 3);
        assert_eq!(d.pad_count(), 0);
        assert_eq!(remove_delay(&d).unwrap(), g);
    }

    #[test]
    fn pad_collision_is_rejected() {
        let g = grid_from_rows(&[&[1, 2], &[3, 4]], StreamKind::Acoustic);
        assert!(matches!(
            apply_delay(&g, 3),
            Err(Error::InvalidDelayLayout(_))
        ));
    }

    #[test]
    fn corrupted_staircase_is_rejected() {
        let g = grid_from_rows(&[&[1, 2, 3], &[4, 5, 6]], StreamKind::Acoustic);
        let mut d = apply_delay(&g, 500).unwrap();
        // PAD punched into the valid span.
        d.data[1] = 500;
        assert!(matches!(remove_delay(&d), Err(Error::InvalidDelayLayout(_))));
        // Real code where a PAD belongs.
        let mut d2 = apply_delay(&g, 500).unwrap();
        d2.data[d2.width] = 42;
        assert!(matches!(
            remove_delay(&d2),
            Err(Error::InvalidDelayLayout(_))
        ));
    }

    #[test]
    fn interleave_orders_acoustic_before_semantic_per_position() {
        let a = apply_delay(&grid_from_rows(&[&[1, 2], &[3, 4]], StreamKind::Acoustic), 99)
            .unwrap();
        let s = apply_delay(&grid_from_rows(&[&[5, 6], &[7, 8]], StreamKind::Semantic), 99)
            .unwrap();
        let flat = interleave_streams(&a, &s).unwrap();
        // Width 3; per position: a0, a1, s0, s1.
        assert_eq!(flat, vec![1, 99, 5, 99, 2, 3, 6, 7, 99, 4, 99, 8]);
        let (a2, s2) = deinterleave_streams(&flat, 2, 2, 99).unwrap();
        assert_eq!(a2, a);
        assert_eq!(s2, s);
    }

    #[test]
    fn mismatched_widths_cannot_interleave() {
        let a = apply_delay(&grid_from_rows(&[&[1, 2, 3]], StreamKind::Acoustic), 99).unwrap();
        let s = apply_delay(&grid_from_rows(&[&[5, 6]], StreamKind::Semantic), 99).unwrap();
        assert!(matches!(
            interleave_streams(&a, &s),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn pad_count_matches_the_closed_form() {
        for layers in 1..=8usize {
            for t in [1usize, 2, 17, 64] {
                let codes: Vec<u16> = (0..layers * t).map(|i| i as u16).collect();
                let g = CodeGrid::new(codes, layers, t, StreamKind::Acoustic).unwrap();
                let d = apply_delay(&g, u16::MAX).unwrap();
                assert_eq!(d.pad_count(), layers * (layers - 1));
                assert_eq!(remove_delay(&d).unwrap(), g);
            }
        }
    }
}
