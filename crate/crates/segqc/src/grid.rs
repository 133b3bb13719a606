//! Dense 2D and 3D grids.
//!
//! `Grid3` stores voxels x-fastest (index = x + nx*(y + ny*z)), the layout
//! the volume readers produce. `Grid2` is row-major with (row, col) indexing.

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid2 { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "payload/shape mismatch");
        Grid2 { width, height, data }
    }
}

impl<T> Grid2<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Grid2<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid2<U> {
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Grid2<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    /// Tight bounding box of set pixels as (row0, col0, row1, col1), inclusive.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if *self.get(r, c) {
                    bb = Some(match bb {
                        None => (r, c, r, c),
                        Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                    });
                }
            }
        }
        bb
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid3<T> {
    nx: usize,
    ny: usize,
    nz: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid3<T> {
    pub fn filled(nx: usize, ny: usize, nz: usize, value: T) -> Self {
        Grid3 { nx, ny, nz, data: vec![value; nx * ny * nz] }
    }

    pub fn from_vec(nx: usize, ny: usize, nz: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), nx * ny * nz, "payload/shape mismatch");
        Grid3 { nx, ny, nz, data }
    }

    /// Extract the 2D slice at position `index` along `axis` (0=x, 1=y, 2=z).
    ///
    /// The remaining two axes keep their order: dropping z yields an (x, y)
    /// slice with x as the column and y as the row, and so on.
    pub fn slice_axis(&self, axis: usize, index: usize) -> Grid2<T> {
        let (w, h) = self.slice_shape(axis);
        let mut data = Vec::with_capacity(w * h);
        match axis {
            0 => {
                for z in 0..self.nz {
                    for y in 0..self.ny {
                        data.push(self.get(index, y, z).clone());
                    }
                }
            }
            1 => {
                for z in 0..self.nz {
                    for x in 0..self.nx {
                        data.push(self.get(x, index, z).clone());
                    }
                }
            }
            2 => {
                for y in 0..self.ny {
                    for x in 0..self.nx {
                        data.push(self.get(x, y, index).clone());
                    }
                }
            }
            _ => panic!("axis out of range: {axis}"),
        }
        Grid2::from_vec(w, h, data)
    }
}

impl<T> Grid3<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        match axis {
            0 => self.nx,
            1 => self.ny,
            2 => self.nz,
            _ => panic!("axis out of range: {axis}"),
        }
    }

    /// Width/height of slices taken along `axis`.
    pub fn slice_shape(&self, axis: usize) -> (usize, usize) {
        match axis {
            0 => (self.ny, self.nz),
            1 => (self.nx, self.nz),
            2 => (self.nx, self.ny),
            _ => panic!("axis out of range: {axis}"),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid3<U>) -> bool {
        self.dims() == other.dims()
    }

    #[inline]
    pub fn index_of(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index_of(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index_of(x, y, z);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid3<U> {
        Grid3 {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Grid3<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid3_layout_is_x_fastest() {
        let g = Grid3::from_vec(2, 2, 2, (0..8).collect::<Vec<i32>>());
        assert_eq!(*g.get(1, 0, 0), 1);
        assert_eq!(*g.get(0, 1, 0), 2);
        assert_eq!(*g.get(0, 0, 1), 4);
        assert_eq!(*g.get(1, 1, 1), 7);
    }

    #[test]
    fn slice_axis_z_matches_direct_indexing() {
        let g = Grid3::from_vec(3, 2, 2, (0..12).collect::<Vec<i32>>());
        let s = g.slice_axis(2, 1);
        assert_eq!((s.width(), s.height()), (3, 2));
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(s.get(y, x), g.get(x, y, 1));
            }
        }
    }

    #[test]
    fn slice_axis_x_matches_direct_indexing() {
        let g = Grid3::from_vec(2, 3, 4, (0..24).collect::<Vec<i32>>());
        let s = g.slice_axis(0, 1);
        assert_eq!((s.width(), s.height()), (3, 4));
        for z in 0..4 {
            for y in 0..3 {
                assert_eq!(s.get(z, y), g.get(1, y, z));
            }
        }
    }

    #[test]
    fn bounding_box_of_block() {
        let mut g = Grid2::filled(8, 8, false);
        for r in 2..5 {
            for c in 3..6 {
                g.set(r, c, true);
            }
        }
        assert_eq!(g.bounding_box(), Some((2, 3, 4, 5)));
        assert_eq!(Grid2::filled(4, 4, false).bounding_box(), None);
    }
}
