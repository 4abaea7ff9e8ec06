//! Strided column-major matrix views.
//!
//! A view covers the window `rows x cols` with column stride `ld`. Accessors
//! only ever touch elements inside the window, so two views whose hulls
//! overlap but whose windows are element-disjoint (vertically stacked
//! instances, for example) can be used at the same time.

use std::marker::PhantomData;

use super::KernelError;

/// Number of elements needed to hold a `rows x cols` window with stride `ld`.
pub fn footprint(rows: usize, cols: usize, ld: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        ld * (cols - 1) + rows
    }
}

fn check(len: usize, rows: usize, cols: usize, ld: usize) -> Result<(), KernelError> {
    if ld < rows.max(1) {
        return Err(KernelError::LeadingDimension { ld, rows });
    }
    let need = footprint(rows, cols, ld);
    if len < need {
        return Err(KernelError::Capacity {
            needed: need,
            available: len,
        });
    }
    Ok(())
}

#[derive(Debug)]
pub struct MatRef<'a, T> {
    ptr: *const T,
    rows: usize,
    cols: usize,
    ld: usize,
    _life: PhantomData<&'a T>,
}

#[derive(Debug)]
pub struct MatMut<'a, T> {
    ptr: *mut T,
    rows: usize,
    cols: usize,
    ld: usize,
    _life: PhantomData<&'a mut T>,
}

impl<T> Clone for MatRef<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for MatRef<'_, T> {}

unsafe impl<T: Sync> Send for MatRef<'_, T> {}
unsafe impl<T: Sync> Sync for MatRef<'_, T> {}
unsafe impl<T: Send> Send for MatMut<'_, T> {}
unsafe impl<T: Sync> Sync for MatMut<'_, T> {}

impl<'a, T: Copy> MatRef<'a, T> {
    pub fn from_slice(
        data: &'a [T],
        rows: usize,
        cols: usize,
        ld: usize,
    ) -> Result<Self, KernelError> {
        check(data.len(), rows, cols, ld)?;
        Ok(MatRef {
            ptr: data.as_ptr(),
            rows,
            cols,
            ld,
            _life: PhantomData,
        })
    }

    /// Contiguous column vector of length `n`.
    pub fn col_vector(data: &'a [T], n: usize) -> Result<Self, KernelError> {
        Self::from_slice(data, n, 1, n.max(1))
    }

    /// # Safety
    /// `ptr` must be valid for reads of every element of the window for `'a`,
    /// and no element of the window may be written through another handle
    /// while this view is alive.
    pub unsafe fn from_raw_parts(ptr: *const T, rows: usize, cols: usize, ld: usize) -> Self {
        debug_assert!(ld >= rows.max(1));
        MatRef {
            ptr,
            rows,
            cols,
            ld,
            _life: PhantomData,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        unsafe { *self.ptr.add(i + j * self.ld) }
    }

    /// Elements `[start, rows)` of column `j`.
    #[inline]
    pub fn col_from(&self, j: usize, start: usize) -> &'a [T] {
        debug_assert!(j < self.cols && start <= self.rows);
        unsafe { std::slice::from_raw_parts(self.ptr.add(start + j * self.ld), self.rows - start) }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [T] {
        self.col_from(j, 0)
    }

    pub fn sub(&self, i: usize, j: usize, rows: usize, cols: usize) -> MatRef<'a, T> {
        assert!(
            i + rows <= self.rows && j + cols <= self.cols,
            "sub-view out of bounds"
        );
        MatRef {
            ptr: if rows == 0 || cols == 0 {
                self.ptr
            } else {
                unsafe { self.ptr.add(i + j * self.ld) }
            },
            rows,
            cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for j in 0..self.cols {
            out.extend_from_slice(self.col(j));
        }
        out
    }
}

impl<'a, T: Copy> MatMut<'a, T> {
    pub fn from_slice(
        data: &'a mut [T],
        rows: usize,
        cols: usize,
        ld: usize,
    ) -> Result<Self, KernelError> {
        check(data.len(), rows, cols, ld)?;
        Ok(MatMut {
            ptr: data.as_mut_ptr(),
            rows,
            cols,
            ld,
            _life: PhantomData,
        })
    }

    pub fn col_vector(data: &'a mut [T], n: usize) -> Result<Self, KernelError> {
        Self::from_slice(data, n, 1, n.max(1))
    }

    /// # Safety
    /// `ptr` must be valid for reads and writes of every element of the window
    /// for `'a`, and no other handle may access those elements meanwhile.
    pub unsafe fn from_raw_parts(ptr: *mut T, rows: usize, cols: usize, ld: usize) -> Self {
        debug_assert!(ld >= rows.max(1));
        MatMut {
            ptr,
            rows,
            cols,
            ld,
            _life: PhantomData,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        unsafe { *self.ptr.add(i + j * self.ld) }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        unsafe { *self.ptr.add(i + j * self.ld) = v }
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        debug_assert!(j < self.cols);
        unsafe { std::slice::from_raw_parts_mut(self.ptr.add(j * self.ld), self.rows) }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        debug_assert!(j < self.cols);
        unsafe { std::slice::from_raw_parts(self.ptr.add(j * self.ld), self.rows) }
    }

    pub fn rb(&self) -> MatRef<'_, T> {
        MatRef {
            ptr: self.ptr,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_, T> {
        MatMut {
            ptr: self.ptr,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    pub fn sub_mut(&mut self, i: usize, j: usize, rows: usize, cols: usize) -> MatMut<'_, T> {
        assert!(
            i + rows <= self.rows && j + cols <= self.cols,
            "sub-view out of bounds"
        );
        MatMut {
            ptr: if rows == 0 || cols == 0 {
                self.ptr
            } else {
                unsafe { self.ptr.add(i + j * self.ld) }
            },
            rows,
            cols,
            ld: self.ld,
            _life: PhantomData,
        }
    }

    /// Splits off two non-overlapping blocks: one read-only, one writable.
    /// Blocks are `(row, col, rows, cols)`.
    pub fn read_write_pair(
        &mut self,
        read: (usize, usize, usize, usize),
        write: (usize, usize, usize, usize),
    ) -> (MatRef<'_, T>, MatMut<'_, T>) {
        let inside =
            |(i, j, r, c): (usize, usize, usize, usize)| i + r <= self.rows && j + c <= self.cols;
        assert!(inside(read) && inside(write), "block out of bounds");
        let disjoint = |a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)| {
            a.2 == 0
                || a.3 == 0
                || b.2 == 0
                || b.3 == 0
                || a.0 + a.2 <= b.0
                || b.0 + b.2 <= a.0
                || a.1 + a.3 <= b.1
                || b.1 + b.3 <= a.1
        };
        assert!(disjoint(read, write), "blocks overlap");
        let offset = |(i, j, r, c): (usize, usize, usize, usize)| {
            if r == 0 || c == 0 {
                0
            } else {
                i + j * self.ld
            }
        };
        let r = MatRef {
            ptr: unsafe { self.ptr.add(offset(read)) },
            rows: read.2,
            cols: read.3,
            ld: self.ld,
            _life: PhantomData,
        };
        let w = MatMut {
            ptr: unsafe { self.ptr.add(offset(write)) },
            rows: write.2,
            cols: write.3,
            ld: self.ld,
            _life: PhantomData,
        };
        (r, w)
    }

    /// Splits the columns at `at` into two disjoint views.
    pub fn split_cols(self, at: usize) -> (MatMut<'a, T>, MatMut<'a, T>) {
        assert!(at <= self.cols);
        let right_ptr = if at == self.cols || self.rows == 0 {
            self.ptr
        } else {
            unsafe { self.ptr.add(at * self.ld) }
        };
        (
            MatMut {
                ptr: self.ptr,
                rows: self.rows,
                cols: at,
                ld: self.ld,
                _life: PhantomData,
            },
            MatMut {
                ptr: right_ptr,
                rows: self.rows,
                cols: self.cols - at,
                ld: self.ld,
                _life: PhantomData,
            },
        )
    }

    /// Window contents in column-major order, packed.
    pub fn to_vec(&self) -> Vec<T> {
        self.rb().to_vec()
    }

    /// The window as one slice when its elements are contiguous.
    pub fn contiguous_mut(&mut self) -> Option<&mut [T]> {
        let len = self.rows * self.cols;
        let contiguous = self.cols <= 1 || self.rows == self.ld || (self.rows == 1 && self.ld == 1);
        if len == 0 {
            Some(&mut [])
        } else if contiguous {
            Some(unsafe { std::slice::from_raw_parts_mut(self.ptr, len) })
        } else {
            None
        }
    }

    /// Column `src` for reading and column `dst` for writing.
    pub fn col_pair(&mut self, src: usize, dst: usize) -> (&[T], &mut [T]) {
        assert!(src != dst && src < self.cols && dst < self.cols);
        unsafe {
            (
                std::slice::from_raw_parts(self.ptr.add(src * self.ld), self.rows),
                std::slice::from_raw_parts_mut(self.ptr.add(dst * self.ld), self.rows),
            )
        }
    }
}
