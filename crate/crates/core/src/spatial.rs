//! Local receptive-field connectivity.
//!
//! A spatially connected layer maps an `H x W` input grid to an
//! `(H-b+1) x (W-b+1)` grid of units, where each unit sees only the `b x b`
//! patch of inputs whose top-left corner matches the unit's own grid
//! position (stride one, no padding). The mask is pure geometry: it stores
//! the grid shape and block size and answers connectivity queries, rather
//! than materializing a boolean matrix.

use thiserror::Error;

/// Invalid receptive-field geometry.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("input grid {0}x{1} must have nonzero extent")]
    EmptyGrid(usize, usize),
    #[error("block size {block} is outside 1..={limit} for a {height}x{width} grid")]
    BlockOutOfRange { block: usize, height: usize, width: usize, limit: usize },
}

/// Output grid shape of a block-`b` layer over an `H x W` grid.
pub fn feature_map_shape(input_grid: (usize, usize), block: usize) -> Result<(usize, usize), TopologyError> {
    let (h, w) = input_grid;
    if h == 0 || w == 0 {
        return Err(TopologyError::EmptyGrid(h, w));
    }
    let limit = h.min(w);
    if block < 1 || block > limit {
        return Err(TopologyError::BlockOutOfRange { block, height: h, width: w, limit });
    }
    Ok((h - block + 1, w - block + 1))
}

/// Receptive-field connectivity of one layer: which inputs each unit sees.
///
/// Unit `u` (row-major over the output grid) is connected to input pixel
/// `(r, c)` (row-major over the input grid) exactly when `(r, c)` lies in
/// the `b x b` block anchored at `(u / out_w, u % out_w)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMask {
    in_h: usize,
    in_w: usize,
    block: usize,
    out_h: usize,
    out_w: usize,
}

impl ConnectivityMask {
    pub fn build(input_grid: (usize, usize), block: usize) -> Result<Self, TopologyError> {
        let (out_h, out_w) = feature_map_shape(input_grid, block)?;
        Ok(ConnectivityMask { in_h: input_grid.0, in_w: input_grid.1, block, out_h, out_w })
    }

    pub fn input_grid(&self) -> (usize, usize) {
        (self.in_h, self.in_w)
    }

    pub fn output_grid(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    pub fn block(&self) -> usize {
        self.block
    }

    /// Number of units (mask rows).
    pub fn units(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Number of inputs (mask columns).
    pub fn inputs(&self) -> usize {
        self.in_h * self.in_w
    }

    /// Connected inputs per unit: `b * b`.
    pub fn ones_per_unit(&self) -> usize {
        self.block * self.block
    }

    /// Total connected entries over the whole layer.
    pub fn total_ones(&self) -> usize {
        self.units() * self.ones_per_unit()
    }

    /// Top-left input-grid corner of the block seen by `unit`.
    pub fn block_origin(&self, unit: usize) -> (usize, usize) {
        debug_assert!(unit < self.units());
        (unit / self.out_w, unit % self.out_w)
    }

    /// Whether `unit` is connected to flat input index `input`.
    pub fn is_connected(&self, unit: usize, input: usize) -> bool {
        let (r0, c0) = self.block_origin(unit);
        let (r, c) = (input / self.in_w, input % self.in_w);
        r >= r0 && r < r0 + self.block && c >= c0 && c < c0 + self.block
    }

    /// The connected inputs of `unit` as `b` contiguous runs
    /// `(start_input, len = b)`, one per block row, in ascending order.
    /// Iterating runs instead of testing every input keeps masked layers at
    /// `O(b^2)` per unit.
    pub fn connected_runs(&self, unit: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (r0, c0) = self.block_origin(unit);
        let (in_w, block) = (self.in_w, self.block);
        (0..block).map(move |dr| ((r0 + dr) * in_w + c0, block))
    }
}
