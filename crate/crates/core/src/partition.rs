//! Non-overlapping covering partitions of the image plane and the patch
//! extraction operator with its adjoint.
//!
//! A partition is fixed by the size `(r0, c0)` of its upper-left cell: row
//! bands start at `0, r0, r0 + n1, r0 + 2 n1, ...` and column bands likewise,
//! with the last band truncated by the image border. Every cell is lifted to
//! an `n1 x n2` frame. A cell shorter than `n1` sits at the top of its frame
//! unless it touches the bottom image border (and is not the first band), in
//! which case it sits at the bottom; columns follow the same rule with left
//! and right. Frame entries outside the cell are zero on extraction and
//! ignored on embedding, so extraction and embedding are exact adjoints.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};

/// A patch lifted to its full `n1 * n2` frame, vectorized row-major.
pub type PatchFrame = Array1<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub row_start: usize,
    pub col_start: usize,
    pub height: usize,
    pub width: usize,
    /// Position of the cell's first row inside its frame.
    pub frame_row: usize,
    /// Position of the cell's first column inside its frame.
    pub frame_col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    image_rows: usize,
    image_cols: usize,
    patch_rows: usize,
    patch_cols: usize,
    corner_rows: usize,
    corner_cols: usize,
    cells: Vec<Cell>,
}

/// `(start, length, frame_offset)` for each band along one axis.
fn bands(extent: usize, patch: usize, first: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut len = first;
    while start < extent {
        let len_here = len.min(extent - start);
        let touches_far_border = start + len_here == extent;
        let offset = if touches_far_border && start > 0 {
            patch - len_here
        } else {
            0
        };
        out.push((start, len_here, offset));
        start += len_here;
        len = patch;
    }
    out
}

impl Partition {
    pub fn new(
        image_rows: usize,
        image_cols: usize,
        patch_rows: usize,
        patch_cols: usize,
        corner_rows: usize,
        corner_cols: usize,
    ) -> Result<Self> {
        if patch_rows == 0 || patch_cols == 0 {
            return Err(Error::arg("patch size must be positive"));
        }
        if patch_rows > image_rows || patch_cols > image_cols {
            return Err(Error::arg(format!(
                "patch {patch_rows}x{patch_cols} larger than image {image_rows}x{image_cols}"
            )));
        }
        if !(1..=patch_rows).contains(&corner_rows) || !(1..=patch_cols).contains(&corner_cols) {
            return Err(Error::arg(format!(
                "corner {corner_rows}x{corner_cols} outside 1..={patch_rows} x 1..={patch_cols}"
            )));
        }
        let row_bands = bands(image_rows, patch_rows, corner_rows);
        let col_bands = bands(image_cols, patch_cols, corner_cols);
        let mut cells = Vec::with_capacity(row_bands.len() * col_bands.len());
        for &(row_start, height, frame_row) in &row_bands {
            for &(col_start, width, frame_col) in &col_bands {
                cells.push(Cell {
                    row_start,
                    col_start,
                    height,
                    width,
                    frame_row,
                    frame_col,
                });
            }
        }
        Ok(Partition {
            image_rows,
            image_cols,
            patch_rows,
            patch_cols,
            corner_rows,
            corner_cols,
            cells,
        })
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_rows, self.image_cols)
    }

    pub fn patch_dims(&self) -> (usize, usize) {
        (self.patch_rows, self.patch_cols)
    }

    pub fn corner(&self) -> (usize, usize) {
        (self.corner_rows, self.corner_cols)
    }

    pub fn frame_len(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    /// Cells in row-major order of `(row_start, col_start)`.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    fn cell(&self, index: usize) -> Result<&Cell> {
        self.cells.get(index).ok_or_else(|| {
            Error::arg(format!(
                "cell index {index} out of range for {} cells",
                self.cells.len()
            ))
        })
    }

    fn check_image(&self, dims: (usize, usize)) -> Result<()> {
        if dims != (self.image_rows, self.image_cols) {
            return Err(Error::shape(format!(
                "array is {}x{}, partition covers {}x{}",
                dims.0, dims.1, self.image_rows, self.image_cols
            )));
        }
        Ok(())
    }

    /// Extraction operator for one cell.
    pub fn extract(&self, image: ArrayView2<f64>, index: usize) -> Result<PatchFrame> {
        self.check_image(image.dim())?;
        let cell = self.cell(index)?;
        let mut frame = Array2::zeros((self.patch_rows, self.patch_cols));
        copy_cell_to_frame(cell, image, frame.view_mut());
        Ok(frame.into_shape_with_order(self.frame_len()).expect("contiguous frame"))
    }

    /// Adjoint of [`Partition::extract`]: adds the cell-supported part of
    /// `frame` into `acc`.
    pub fn embed(&self, frame: ArrayView1<f64>, index: usize, acc: &mut Array2<f64>) -> Result<()> {
        self.check_image(acc.dim())?;
        if frame.len() != self.frame_len() {
            return Err(Error::shape(format!(
                "frame has {} entries, expected {}",
                frame.len(),
                self.frame_len()
            )));
        }
        let cell = self.cell(index)?;
        let frame = frame.to_shape((self.patch_rows, self.patch_cols)).expect("frame shape");
        add_frame_to_cell(cell, frame.view(), acc.view_mut());
        Ok(())
    }

    /// Extracts every cell; column `j` of the result is the frame of cell `j`.
    pub fn extract_all(&self, image: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_image(image.dim())?;
        let n = self.frame_len();
        let mut frames = Array2::zeros((n, self.cells.len()));
        let mut frame = Array2::zeros((self.patch_rows, self.patch_cols));
        for (cell, mut col) in self.cells.iter().zip(frames.axis_iter_mut(Axis(1))) {
            frame.fill(0.0);
            copy_cell_to_frame(cell, image, frame.view_mut());
            col.assign(&frame.view().into_shape_with_order(n).expect("contiguous frame"));
        }
        Ok(frames)
    }

    /// Embeds column `j` of `frames` into cell `j` of `acc`.
    pub fn embed_all(&self, frames: ArrayView2<f64>, acc: &mut Array2<f64>) -> Result<()> {
        self.check_image(acc.dim())?;
        if frames.dim() != (self.frame_len(), self.cells.len()) {
            return Err(Error::shape(format!(
                "frames are {:?}, expected ({}, {})",
                frames.dim(),
                self.frame_len(),
                self.cells.len()
            )));
        }
        let mut frame = Array2::zeros((self.patch_rows, self.patch_cols));
        for (cell, col) in self.cells.iter().zip(frames.axis_iter(Axis(1))) {
            for (dst, src) in frame.iter_mut().zip(col.iter()) {
                *dst = *src;
            }
            add_frame_to_cell(cell, frame.view(), acc.view_mut());
        }
        Ok(())
    }

    /// Number of cells covering each pixel.
    pub fn coverage_counts(&self) -> Array2<u32> {
        let mut counts = Array2::zeros((self.image_rows, self.image_cols));
        for c in &self.cells {
            counts
                .slice_mut(s![
                    c.row_start..c.row_start + c.height,
                    c.col_start..c.col_start + c.width
                ])
                .mapv_inplace(|v| v + 1);
        }
        counts
    }
}

fn copy_cell_to_frame(cell: &Cell, image: ArrayView2<f64>, mut frame: ArrayViewMut2<f64>) {
    let src = image.slice(s![
        cell.row_start..cell.row_start + cell.height,
        cell.col_start..cell.col_start + cell.width
    ]);
    frame
        .slice_mut(s![
            cell.frame_row..cell.frame_row + cell.height,
            cell.frame_col..cell.frame_col + cell.width
        ])
        .assign(&src);
}

fn add_frame_to_cell(cell: &Cell, frame: ArrayView2<f64>, mut acc: ArrayViewMut2<f64>) {
    let src = frame.slice(s![
        cell.frame_row..cell.frame_row + cell.height,
        cell.frame_col..cell.frame_col + cell.width
    ]);
    let mut dst = acc.slice_mut(s![
        cell.row_start..cell.row_start + cell.height,
        cell.col_start..cell.col_start + cell.width
    ]);
    dst += &src;
}

pub fn build_partition(
    image_rows: usize,
    image_cols: usize,
    patch_rows: usize,
    patch_cols: usize,
    corner_rows: usize,
    corner_cols: usize,
) -> Result<Partition> {
    Partition::new(image_rows, image_cols, patch_rows, patch_cols, corner_rows, corner_cols)
}

/// All distinct partitions for corners in `[1, n1] x [1, n2]`, ordered by
/// `(r0, c0)` descending from the canonical `(n1, n2)` partition.
pub fn enumerate_partitions(
    image_rows: usize,
    image_cols: usize,
    patch_rows: usize,
    patch_cols: usize,
) -> Result<Vec<Partition>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for r0 in (1..=patch_rows).rev() {
        for c0 in (1..=patch_cols).rev() {
            let p = Partition::new(image_rows, image_cols, patch_rows, patch_cols, r0, c0)?;
            if seen.insert(p.cells.clone()) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

pub fn extract_patch(image: ArrayView2<f64>, partition: &Partition, index: usize) -> Result<PatchFrame> {
    partition.extract(image, index)
}

pub fn embed_patch(frame: ArrayView1<f64>, partition: &Partition, index: usize, acc: &mut Array2<f64>) -> Result<()> {
    partition.embed(frame, index, acc)
}
