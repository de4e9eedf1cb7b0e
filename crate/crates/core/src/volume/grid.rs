// SPDX-License-Identifier: Apache-2.0

use std::fmt::Debug;

/// Scalar voxel types the pyramid can store.
///
/// `Acc` is the type carried between pyramid levels: `f64` for integer
/// voxels (exact for sums of up to 2^37 `u16` values), `f32` for `f32`.
pub trait Voxel: Copy + PartialEq + Debug + Send + Sync + 'static {
    type Acc: Copy + Debug + Send + Sync;
    const ZERO: Self;

    fn to_acc(self) -> Self::Acc;
    /// Mean of eight children, summed in the given order.
    fn pool8(children: [Self::Acc; 8]) -> Self::Acc;
    /// Converts a carried mean to the stored representation.
    fn store(acc: Self::Acc) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
}

macro_rules! integer_voxel {
    ($t:ty) => {
        impl Voxel for $t {
            type Acc = f64;
            const ZERO: Self = 0;

            fn to_acc(self) -> f64 {
                self as f64
            }

            fn pool8(c: [f64; 8]) -> f64 {
                c.iter().fold(0.0, |acc, v| acc + v) / 8.0
            }

            /// Round half-up, clamped to the type's range.
            fn store(acc: f64) -> Self {
                (acc + 0.5).floor().clamp(0.0, <$t>::MAX as f64) as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
        }
    };
}

integer_voxel!(u8);
integer_voxel!(u16);

impl Voxel for f32 {
    type Acc = f32;
    const ZERO: Self = 0.0;

    fn to_acc(self) -> f32 {
        self
    }

    fn pool8(c: [f32; 8]) -> f32 {
        let mut sum = c[0];
        for v in &c[1..] {
            sum += v;
        }
        sum / 8.0
    }

    fn store(acc: f32) -> f32 {
        acc
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

/// Halves a dense x-fastest grid with 2×2×2 mean pooling. Children beyond the
/// upper edge are clamped to the last index on that axis.
pub(crate) fn pool_dense<T: Voxel>(dims: [usize; 3], data: &[T::Acc]) -> ([usize; 3], Vec<T::Acc>) {
    let out_dims = dims.map(|d| d.div_ceil(2));
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut out = Vec::with_capacity(out_dims.iter().product());
    for z in 0..out_dims[2] {
        let zs = [2 * z, (2 * z + 1).min(dims[2] - 1)];
        for y in 0..out_dims[1] {
            let ys = [2 * y, (2 * y + 1).min(dims[1] - 1)];
            for x in 0..out_dims[0] {
                let xs = [2 * x, (2 * x + 1).min(dims[0] - 1)];
                out.push(T::pool8([
                    data[idx(xs[0], ys[0], zs[0])],
                    data[idx(xs[1], ys[0], zs[0])],
                    data[idx(xs[0], ys[1], zs[0])],
                    data[idx(xs[1], ys[1], zs[0])],
                    data[idx(xs[0], ys[0], zs[1])],
                    data[idx(xs[1], ys[0], zs[1])],
                    data[idx(xs[0], ys[1], zs[1])],
                    data[idx(xs[1], ys[1], zs[1])],
                ]));
            }
        }
    }
    (out_dims, out)
}

/// One pyramid level, stored as cubic bricks of `brick_size` voxels per axis.
/// Bricks on the upper faces are truncated to the level extent.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid<T> {
    dims: [usize; 3],
    brick_size: usize,
    bricks_per_axis: [usize; 3],
    bricks: Vec<Vec<T>>,
}

impl<T: Voxel> LevelGrid<T> {
    pub fn from_dense(dims: [usize; 3], brick_size: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), dims.iter().product::<usize>());
        let bricks_per_axis = dims.map(|d| d.div_ceil(brick_size));
        let mut bricks = Vec::with_capacity(bricks_per_axis.iter().product());
        for bz in 0..bricks_per_axis[2] {
            for by in 0..bricks_per_axis[1] {
                for bx in 0..bricks_per_axis[0] {
                    let lo = [bx * brick_size, by * brick_size, bz * brick_size];
                    let hi = [0, 1, 2].map(|a| (lo[a] + brick_size).min(dims[a]));
                    let mut brick = Vec::with_capacity((hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]));
                    for z in lo[2]..hi[2] {
                        for y in lo[1]..hi[1] {
                            let row = dims[0] * (y + dims[1] * z);
                            brick.extend_from_slice(&data[row + lo[0]..row + hi[0]]);
                        }
                    }
                    bricks.push(brick);
                }
            }
        }
        Self {
            dims,
            brick_size,
            bricks_per_axis,
            bricks,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn brick_size(&self) -> usize {
        self.brick_size
    }

    pub fn brick_count(&self) -> usize {
        self.bricks.len()
    }

    pub fn bricks_per_axis(&self) -> [usize; 3] {
        self.bricks_per_axis
    }

    fn brick_extent(&self, b: [usize; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| (self.dims[a] - b[a] * self.brick_size).min(self.brick_size))
    }

    fn brick_index(&self, b: [usize; 3]) -> usize {
        b[0] + self.bricks_per_axis[0] * (b[1] + self.bricks_per_axis[1] * b[2])
    }

    pub fn get(&self, p: [usize; 3]) -> T {
        let b = p.map(|c| c / self.brick_size);
        let l = p.map(|c| c % self.brick_size);
        let e = self.brick_extent(b);
        self.bricks[self.brick_index(b)][l[0] + e[0] * (l[1] + e[1] * l[2])]
    }

    /// Copies the inclusive box `[min, max]` out in x-fastest order.
    pub fn read_box(&self, min: [usize; 3], max: [usize; 3]) -> Vec<T> {
        let bs = self.brick_size;
        let mut out = Vec::with_capacity((0..3).map(|a| max[a] - min[a] + 1).product::<usize>());
        for z in min[2]..=max[2] {
            for y in min[1]..=max[1] {
                let mut x = min[0];
                while x <= max[0] {
                    let b = [x / bs, y / bs, z / bs];
                    let e = self.brick_extent(b);
                    let lx = x % bs;
                    let run_end = (b[0] * bs + e[0] - 1).min(max[0]);
                    let start = lx + e[0] * (y % bs + e[1] * (z % bs));
                    let brick = &self.bricks[self.brick_index(b)];
                    out.extend_from_slice(&brick[start..start + (run_end - x + 1)]);
                    x = run_end + 1;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<T> {
        self.read_box([0, 0, 0], self.dims.map(|d| d - 1))
    }
}
