use std::collections::BTreeMap;
use std::ptr::NonNull;
use std::rc::Rc;

use sha2::{Digest, Sha256};

use crate::kernels::util::fill_uniform;
use crate::kernels::{Dtype, RawRegion};

use super::SamplerError;

/// Upper bound on the dynamic arena, in elements.
pub const ARENA_CAP_ELEMENTS: usize = 1 << 31;

/// Dynamic buffers are spaced in multiples of this many bytes.
const ARENA_ALIGN_BYTES: usize = 64;

/// Heap block of 8-byte words; never moves while alive.
#[derive(Debug)]
struct Block {
    ptr: NonNull<u64>,
    words: usize,
}

impl Block {
    fn new(bytes: usize) -> Self {
        let words = bytes.div_ceil(8);
        let boxed: Box<[u64]> = vec![0u64; words].into_boxed_slice();
        let ptr = NonNull::new(Box::into_raw(boxed) as *mut u64).expect("box pointer is non-null");
        Block { ptr, words }
    }

    fn base(&self) -> *mut u8 {
        self.ptr.as_ptr() as *mut u8
    }

    fn bytes(&self) -> usize {
        self.words * 8
    }

    /// Fills the first `len` elements of `dtype` with uniform (0, 1) values.
    fn randomize(&self, dtype: Dtype, len: usize, seed: u64, stream: u64) {
        // Safety: the block is valid for `words * 8` bytes, `len` elements
        // fit by construction, and no other access is live.
        unsafe {
            match dtype {
                Dtype::Double => fill_uniform(
                    std::slice::from_raw_parts_mut(self.base() as *mut f64, len),
                    seed,
                    stream,
                ),
                Dtype::Single => fill_uniform(
                    std::slice::from_raw_parts_mut(self.base() as *mut f32, len),
                    seed,
                    stream,
                ),
            }
        }
    }
}

impl Drop for Block {
    fn drop(&mut self) {
        // Safety: `ptr` came from `Box::into_raw` of a `[u64]` of `words`.
        unsafe {
            drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(
                self.ptr.as_ptr(),
                self.words,
            )));
        }
    }
}

#[derive(Debug, Clone)]
struct Region {
    block: Rc<Block>,
    /// Offset into the block, in elements.
    start: usize,
    len: usize,
    dtype: Dtype,
}

/// Named regions plus the dynamic arena of the sampler.
///
/// Named regions are filled with uniform (0, 1) values at allocation so that
/// operands are numerically benign without explicit initialization. Every
/// fill draws from its own random stream, numbered in allocation order.
#[derive(Debug)]
pub struct MemoryManager {
    seed: u64,
    next_stream: u64,
    named: BTreeMap<String, Region>,
    arena: Option<Block>,
    arena_used: usize,
    arena_cap: usize,
}

impl MemoryManager {
    pub fn new(seed: u64) -> Self {
        MemoryManager {
            seed,
            next_stream: 0,
            named: BTreeMap::new(),
            arena: None,
            arena_used: 0,
            arena_cap: ARENA_CAP_ELEMENTS,
        }
    }

    pub fn with_arena_cap(mut self, elements: usize) -> Self {
        self.arena_cap = elements;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Next random stream id; shared by allocations and random kernels.
    pub fn take_stream(&mut self) -> u64 {
        let s = self.next_stream;
        self.next_stream += 1;
        s
    }

    pub fn malloc(&mut self, dtype: Dtype, name: &str, nelems: usize) -> Result<(), SamplerError> {
        if self.named.contains_key(name) {
            return Err(SamplerError::Memory(format!(
                "`{name}` is already allocated"
            )));
        }
        let bytes = nelems
            .checked_mul(dtype.size())
            .ok_or_else(|| SamplerError::Memory(format!("`{name}`: {nelems} elements overflow")))?;
        let block = Block::new(bytes);
        let stream = self.take_stream();
        block.randomize(dtype, nelems, self.seed, stream);
        self.named.insert(
            name.to_string(),
            Region {
                block: Rc::new(block),
                start: 0,
                len: nelems,
                dtype,
            },
        );
        Ok(())
    }

    pub fn offset(
        &mut self,
        dtype: Dtype,
        src: &str,
        offset: usize,
        name: &str,
    ) -> Result<(), SamplerError> {
        let base = self
            .named
            .get(src)
            .ok_or_else(|| SamplerError::MissingAllocation(src.to_string()))?;
        if base.dtype != dtype {
            return Err(SamplerError::Memory(format!(
                "`{src}` holds {} data, not {dtype}",
                base.dtype
            )));
        }
        if offset > base.len {
            return Err(SamplerError::Memory(format!(
                "offset {offset} lies outside `{src}` of {} elements",
                base.len
            )));
        }
        if self.named.contains_key(name) {
            return Err(SamplerError::Memory(format!(
                "`{name}` is already allocated"
            )));
        }
        let region = Region {
            block: base.block.clone(),
            start: base.start + offset,
            len: base.len - offset,
            dtype,
        };
        self.named.insert(name.to_string(), region);
        Ok(())
    }

    /// Drops a name; the memory is released once no name refers to it.
    pub fn free(&mut self, name: &str) -> Result<(), SamplerError> {
        self.named
            .remove(name)
            .map(|_| ())
            .ok_or_else(|| SamplerError::MissingAllocation(name.to_string()))
    }

    pub fn len_of(&self, name: &str) -> Option<usize> {
        self.named.get(name).map(|r| r.len)
    }

    /// Resolves `name` or `name+K` to a region.
    pub fn named_region(&self, token: &str) -> Result<RawRegion, SamplerError> {
        let (name, off) = match token.split_once('+') {
            Some((n, k)) => {
                let k: usize = k
                    .parse()
                    .map_err(|_| SamplerError::Memory(format!("bad offset in `{token}`")))?;
                (n, k)
            }
            None => (token, 0),
        };
        let r = self
            .named
            .get(name)
            .ok_or_else(|| SamplerError::MissingAllocation(name.to_string()))?;
        if off > r.len {
            return Err(SamplerError::Memory(format!(
                "offset {off} lies outside `{name}` of {} elements",
                r.len
            )));
        }
        let byte_off = (r.start + off) * r.dtype.size();
        // Safety: the region stays inside its block, which lives as long as
        // the name; the sampler runs calls before any further command.
        Ok(unsafe { RawRegion::new(r.block.base().add(byte_off), r.len - off, r.dtype) })
    }

    /// Forgets all dynamic buffers handed out so far.
    pub fn reset_arena(&mut self) {
        self.arena_used = 0;
    }

    /// Makes room for dynamic buffers of the given sizes (in elements) and
    /// hands them out, pairwise disjoint. Must be called once per
    /// reset, with all buffers one call (or parallel block) needs, since
    /// growing the arena invalidates earlier buffers.
    pub fn dynamic_regions(
        &mut self,
        requests: &[(usize, Dtype)],
    ) -> Result<Vec<RawRegion>, SamplerError> {
        let mut offsets = Vec::with_capacity(requests.len());
        let mut end = self.arena_used;
        let mut elements = 0usize;
        for &(n, dtype) in requests {
            elements = elements.saturating_add(n);
            offsets.push(end);
            let bytes = n
                .saturating_mul(dtype.size())
                .next_multiple_of(ARENA_ALIGN_BYTES);
            end = end.saturating_add(bytes.max(ARENA_ALIGN_BYTES));
        }
        if elements > self.arena_cap {
            return Err(SamplerError::ArenaExhausted {
                requested: elements,
                cap: self.arena_cap,
            });
        }
        let have = self.arena.as_ref().map_or(0, Block::bytes);
        if end > have {
            let block = Block::new(end.max(have * 2));
            let stream = self.take_stream();
            // Single-precision values in (0, 1) read as finite positive
            // numbers in either precision.
            block.randomize(Dtype::Single, block.bytes() / 4, self.seed, stream);
            self.arena = Some(block);
        }
        self.arena_used = end;
        let base = self.arena.as_ref().map(Block::base);
        Ok(requests
            .iter()
            .zip(offsets)
            .map(|(&(n, dtype), off)| {
                // Safety: `[off, off + n * size)` lies inside the arena,
                // which is neither freed nor regrown until the next reset.
                unsafe { RawRegion::new(base.expect("arena allocated").add(off), n, dtype) }
            })
            .collect())
    }

    /// SHA-256 over the names, types, and contents of all named regions.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, r) in &self.named {
            h.update(name.as_bytes());
            h.update([0, r.dtype.prefix() as u8]);
            h.update((r.len as u64).to_le_bytes());
            let bytes = r.len * r.dtype.size();
            // Safety: the region lies inside its live block; nothing runs
            // concurrently with the control thread here.
            let data = unsafe {
                std::slice::from_raw_parts(r.block.base().add(r.start * r.dtype.size()), bytes)
            };
            h.update(data);
        }
        h.finalize().into()
    }
}
