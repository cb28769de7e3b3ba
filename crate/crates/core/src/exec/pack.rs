use std::ops::Range;

use super::MatView;
use crate::matrix::MatrixBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    /// Row slabs of the `(i, kk)` operand.
    A,
    /// Column slabs of the `(kk, j)` operand.
    B,
}

/// Full slabs of `block` rows (A) or columns (B), each stored kk-major so the
/// kernel reads it front to back. A trailing partial slab is not packed.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedPanel {
    pub kind: PanelKind,
    pub block: usize,
    pub k_len: usize,
    pub slabs: usize,
    pub data: Vec<f64>,
}

impl PackedPanel {
    /// `extent` is the number of rows (A) or columns (B) of `view` to cover.
    pub fn from_view(view: MatView, kind: PanelKind, extent: usize, k_len: usize, block: usize) -> Self {
        let slabs = extent.checked_div(block).unwrap_or(0);
        let mut data = Vec::with_capacity(slabs * block * k_len);
        for s in 0..slabs {
            for kk in 0..k_len {
                for x in s * block..(s + 1) * block {
                    data.push(match kind {
                        PanelKind::A => view.get(x, kk),
                        PanelKind::B => view.get(kk, x),
                    });
                }
            }
        }
        PackedPanel { kind, block, k_len, slabs, data }
    }

    /// View of the slab starting at row/column `x0`, from `k0` on. `None`
    /// when `x0` is not slab-aligned or the requested width is not a full slab.
    pub fn block_view(&self, x0: usize, k0: usize, width: usize) -> Option<MatView<'_>> {
        if width != self.block || !x0.is_multiple_of(self.block) || x0 / self.block >= self.slabs {
            return None;
        }
        let off = (x0 / self.block) * self.block * self.k_len + k0 * self.block;
        Some(match self.kind {
            PanelKind::A => MatView { data: &self.data, off, s0: 1, s1: self.block },
            PanelKind::B => MatView { data: &self.data, off, s0: self.block, s1: 1 },
        })
    }
}

/// Pack a region of a buffer. For `A` the buffer's rows are the blocked axis
/// and its columns are k; for `B` its rows are k and its columns are blocked.
pub fn pack_panel(buffer: &MatrixBuffer, kind: PanelKind, rows: Range<usize>, cols: Range<usize>, block: usize) -> PackedPanel {
    let view = MatView::of(buffer, false).shifted(rows.start, cols.start);
    let (extent, k_len) = match kind {
        PanelKind::A => (rows.len(), cols.len()),
        PanelKind::B => (cols.len(), rows.len()),
    };
    PackedPanel::from_view(view, kind, extent, k_len, block)
}
