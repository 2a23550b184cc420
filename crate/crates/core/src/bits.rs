//! Bit buffers with most-significant-first field packing, short bit strings,
//! and an access meter that counts touched virtual words.
//!
//! Bit position `p` of a buffer lives in word `p / 64` at bit `63 - p % 64`,
//! so a field read left to right is the integer obtained by concatenating its
//! bits. Packed remainders therefore compare lexicographically exactly like
//! integers.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Fields read or written in one call are limited to this many bits.
pub const MAX_FIELD_BITS: usize = 128;

#[inline]
fn low_mask(len: usize) -> u128 {
    if len >= 128 {
        u128::MAX
    } else {
        (1u128 << len) - 1
    }
}

/// A fixed-capacity bit array backed by 64-bit words.
#[derive(Clone, PartialEq, Eq)]
pub struct BitBuffer {
    words: Vec<u64>,
    bit_capacity: usize,
}

impl std::fmt::Debug for BitBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitBuffer({} bits: ", self.bit_capacity)?;
        for p in 0..self.bit_capacity.min(256) {
            f.write_str(if self.get_bit(p) { "1" } else { "0" })?;
        }
        if self.bit_capacity > 256 {
            f.write_str("...")?;
        }
        f.write_str(")")
    }
}

impl BitBuffer {
    /// An all-zero buffer of `bits` bits.
    pub fn new(bits: usize) -> Self {
        BitBuffer {
            words: vec![0; bits.div_ceil(64)],
            bit_capacity: bits,
        }
    }

    /// Parses a string of `0`/`1` characters; other characters are skipped.
    pub fn from_bit_str(s: &str) -> Self {
        let bits: Vec<bool> = s
            .chars()
            .filter(|c| *c == '0' || *c == '1')
            .map(|c| c == '1')
            .collect();
        let mut b = BitBuffer::new(bits.len());
        for (i, bit) in bits.into_iter().enumerate() {
            b.set_bit(i, bit);
        }
        b
    }

    /// Rebuilds a buffer from a raw image, rejecting set bits past the end.
    pub fn from_words(words: Vec<u64>, bit_capacity: usize) -> Result<Self> {
        if words.len() != bit_capacity.div_ceil(64) {
            return Err(Error::Format(format!(
                "image of {} words cannot hold exactly {} bits",
                words.len(),
                bit_capacity
            )));
        }
        let b = BitBuffer {
            words,
            bit_capacity,
        };
        let tail = bit_capacity % 64;
        if tail != 0 {
            let last = *b.words.last().unwrap();
            if last << tail != 0 {
                return Err(Error::Format("bits beyond capacity are set".into()));
            }
        }
        Ok(b)
    }

    pub fn bit_capacity(&self) -> usize {
        self.bit_capacity
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Renders `[offset, offset+len)` as a `0`/`1` string.
    pub fn to_bit_string(&self, offset: usize, len: usize) -> String {
        (offset..offset + len)
            .map(|p| if self.get_bit(p) { '1' } else { '0' })
            .collect()
    }

    #[inline]
    fn check(&self, offset: usize, len: usize) -> Result<()> {
        if offset
            .checked_add(len)
            .is_none_or(|end| end > self.bit_capacity)
        {
            return Err(Error::OutOfBounds {
                offset,
                len,
                capacity: self.bit_capacity,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn get_bit(&self, pos: usize) -> bool {
        (self.words[pos >> 6] >> (63 - (pos & 63))) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, pos: usize, bit: bool) {
        let m = 1u64 << (63 - (pos & 63));
        if bit {
            self.words[pos >> 6] |= m;
        } else {
            self.words[pos >> 6] &= !m;
        }
    }

    #[inline]
    fn read_unchecked(&self, offset: usize, len: usize) -> u128 {
        let mut out: u128 = 0;
        let mut pos = offset;
        let mut rem = len;
        while rem > 0 {
            let bit = pos & 63;
            let take = (64 - bit).min(rem);
            let chunk = (self.words[pos >> 6] << bit) >> (64 - take);
            out = (out << take) | chunk as u128;
            pos += take;
            rem -= take;
        }
        out
    }

    #[inline]
    fn write_unchecked(&mut self, offset: usize, len: usize, value: u128) {
        let mut pos = offset;
        let mut rem = len;
        while rem > 0 {
            let bit = pos & 63;
            let take = (64 - bit).min(rem);
            let chunk = ((value >> (rem - take)) & low_mask(take)) as u64;
            let shift = 64 - bit - take;
            let mask = if take == 64 {
                u64::MAX
            } else {
                ((1u64 << take) - 1) << shift
            };
            let w = &mut self.words[pos >> 6];
            *w = (*w & !mask) | (chunk << shift);
            pos += take;
            rem -= take;
        }
    }

    /// Reads `len <= 128` bits starting at `offset`.
    pub fn read_bits(&self, offset: usize, len: usize) -> Result<u128> {
        if len > MAX_FIELD_BITS {
            return Err(Error::OutOfBounds {
                offset,
                len,
                capacity: self.bit_capacity,
            });
        }
        self.check(offset, len)?;
        Ok(self.read_unchecked(offset, len))
    }

    /// Writes the low `len <= 128` bits of `value` at `offset`.
    pub fn write_bits(&mut self, offset: usize, len: usize, value: u128) -> Result<()> {
        if len > MAX_FIELD_BITS {
            return Err(Error::OutOfBounds {
                offset,
                len,
                capacity: self.bit_capacity,
            });
        }
        self.check(offset, len)?;
        if value & !low_mask(len) != 0 {
            return Err(Error::ValueOverflow { len });
        }
        self.write_unchecked(offset, len, value);
        Ok(())
    }

    /// Number of set bits in `[offset, offset+len)`.
    pub fn count_ones(&self, offset: usize, len: usize) -> Result<usize> {
        self.check(offset, len)?;
        let mut n = 0usize;
        let mut pos = offset;
        let end = offset + len;
        while pos < end {
            let take = (end - pos).min(64);
            n += (self.read_unchecked(pos, take) as u64).count_ones() as usize;
            pos += take;
        }
        Ok(n)
    }

    pub fn is_zero(&self, offset: usize, len: usize) -> Result<bool> {
        Ok(self.count_ones(offset, len)? == 0)
    }

    /// Position, relative to `offset`, of the zero with index `k` inside the
    /// window `[offset, offset+len)`.
    pub fn select_zero(&self, offset: usize, len: usize, k: usize) -> Result<usize> {
        self.check(offset, len)?;
        let mut remaining = k;
        let mut pos = offset;
        let end = offset + len;
        while pos < end {
            let take = (end - pos).min(64);
            let chunk = (self.read_unchecked(pos, take) as u64) << (64 - take);
            let zeros = if take == 64 {
                !chunk
            } else {
                !chunk & !((1u64 << (64 - take)) - 1)
            };
            let z = zeros.count_ones() as usize;
            if remaining < z {
                return Ok(pos - offset + select_msb(zeros, remaining));
            }
            remaining -= z;
            pos += take;
        }
        Err(Error::SelectNotFound { wanted: k + 1 })
    }

    /// Moves `len` bits from `src` to `dst`; the ranges may overlap.
    pub fn move_bits(&mut self, src: usize, dst: usize, len: usize) -> Result<()> {
        self.check(src, len)?;
        self.check(dst, len)?;
        if len == 0 || src == dst {
            return Ok(());
        }
        if dst > src {
            let mut done = 0;
            while done < len {
                let take = (len - done).min(64);
                let at = len - done - take;
                let v = self.read_unchecked(src + at, take);
                self.write_unchecked(dst + at, take, v);
                done += take;
            }
        } else {
            let mut at = 0;
            while at < len {
                let take = (len - at).min(64);
                let v = self.read_unchecked(src + at, take);
                self.write_unchecked(dst + at, take, v);
                at += take;
            }
        }
        Ok(())
    }

    /// Zeroes `[offset, offset+len)`.
    pub fn clear_range(&mut self, offset: usize, len: usize) -> Result<()> {
        self.check(offset, len)?;
        let mut pos = offset;
        let end = offset + len;
        while pos < end {
            let take = (end - pos).min(64);
            self.write_unchecked(pos, take, 0);
            pos += take;
        }
        Ok(())
    }

    /// Shifts `[offset, region_end - len)` right by `len` bits and zeroes the
    /// gap at `offset`. The bits pushed past `region_end` must be zero.
    pub fn open_gap(
        &mut self,
        region_start: usize,
        region_end: usize,
        offset: usize,
        len: usize,
    ) -> Result<()> {
        self.check_region(region_start, region_end, offset, len)?;
        if !self.is_zero(region_end - len, len)? {
            return Err(Error::RegionFull);
        }
        self.move_bits(offset, offset + len, region_end - len - offset)?;
        self.clear_range(offset, len)
    }

    /// Inverse of [`open_gap`](Self::open_gap): removes `len` bits at
    /// `offset`, shifting the rest of the region left and zero-filling the end.
    pub fn close_gap(
        &mut self,
        region_start: usize,
        region_end: usize,
        offset: usize,
        len: usize,
    ) -> Result<()> {
        self.check_region(region_start, region_end, offset, len)?;
        self.move_bits(offset + len, offset, region_end - len - offset)?;
        self.clear_range(region_end - len, len)
    }

    fn check_region(
        &self,
        region_start: usize,
        region_end: usize,
        offset: usize,
        len: usize,
    ) -> Result<()> {
        self.check(region_start, region_end.saturating_sub(region_start))?;
        if region_end < region_start
            || offset < region_start
            || offset.checked_add(len).is_none_or(|e| e > region_end)
        {
            return Err(Error::OutOfBounds {
                offset,
                len,
                capacity: region_end,
            });
        }
        Ok(())
    }

    /// Inserts the `len`-bit `value` at `offset` inside the region.
    pub fn shift_insert(
        &mut self,
        region_start: usize,
        region_end: usize,
        offset: usize,
        len: usize,
        value: u128,
    ) -> Result<()> {
        if len > MAX_FIELD_BITS || value & !low_mask(len) != 0 {
            return Err(Error::ValueOverflow { len });
        }
        self.open_gap(region_start, region_end, offset, len)?;
        self.write_unchecked(offset, len, value);
        Ok(())
    }

    /// Removes `len` bits at `offset` inside the region and returns them.
    pub fn shift_delete(
        &mut self,
        region_start: usize,
        region_end: usize,
        offset: usize,
        len: usize,
    ) -> Result<u128> {
        if len > MAX_FIELD_BITS {
            return Err(Error::ValueOverflow { len });
        }
        self.check_region(region_start, region_end, offset, len)?;
        let v = self.read_unchecked(offset, len);
        self.close_gap(region_start, region_end, offset, len)?;
        Ok(v)
    }
}

/// Offset from the most significant end of the set bit with index `k`.
#[inline]
fn select_msb(word: u64, k: usize) -> usize {
    let mut x = word.reverse_bits();
    for _ in 0..k {
        x &= x - 1;
    }
    x.trailing_zeros() as usize
}

//---------------------------------------------------------------------------

/// A bit string of at most 128 bits, stored right-aligned in `bits`.
///
/// Adaptive remainders are prefixes of full remainders, so this is also the
/// type used for remainders themselves.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitStr {
    bits: u128,
    len: u8,
}

impl std::fmt::Debug for BitStr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "\"{}\"", self)
    }
}

impl std::fmt::Display for BitStr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl BitStr {
    pub const EMPTY: BitStr = BitStr { bits: 0, len: 0 };

    /// The `len`-bit string whose integer value is `bits`.
    pub fn new(bits: u128, len: usize) -> Self {
        assert!(len <= 128, "bit strings hold at most 128 bits");
        BitStr {
            bits: bits & low_mask(len),
            len: len as u8,
        }
    }

    /// Parses `0`/`1` characters.
    pub fn parse(s: &str) -> Self {
        let mut v = 0u128;
        let mut n = 0;
        for c in s.chars() {
            match c {
                '0' => v <<= 1,
                '1' => v = (v << 1) | 1,
                _ => continue,
            }
            n += 1;
        }
        BitStr::new(v, n)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn value(&self) -> u128 {
        self.bits
    }

    /// Bit `i` counted from the left.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.bits >> (self.len() - 1 - i)) & 1 == 1
    }

    /// The first `len` bits.
    #[inline]
    pub fn prefix(&self, len: usize) -> BitStr {
        debug_assert!(len <= self.len());
        if len == 0 {
            return BitStr::EMPTY;
        }
        BitStr {
            bits: self.bits >> (self.len() - len),
            len: len as u8,
        }
    }

    #[inline]
    fn left_aligned(&self) -> u128 {
        if self.len == 0 {
            0
        } else {
            self.bits << (128 - self.len())
        }
    }

    /// Length of the longest common prefix.
    #[inline]
    pub fn lcp(&self, other: &BitStr) -> usize {
        let d = (self.left_aligned() ^ other.left_aligned()).leading_zeros() as usize;
        d.min(self.len()).min(other.len())
    }

    #[inline]
    pub fn is_prefix_of(&self, other: &BitStr) -> bool {
        self.len() <= other.len() && self.lcp(other) == self.len()
    }

    /// Lexicographic order; a proper prefix sorts first.
    pub fn lex_cmp(&self, other: &BitStr) -> std::cmp::Ordering {
        let l = self.lcp(other);
        if l == self.len() || l == other.len() {
            self.len().cmp(&other.len())
        } else {
            self.bit(l).cmp(&other.bit(l))
        }
    }
}

//---------------------------------------------------------------------------

/// Counts accesses to virtual words of `block_bits` bits.
///
/// Each read or write pass over a bit span is charged the number of blocks the
/// span touches, assuming the component starts at a block boundary. Counters
/// are atomics so that a dictionary answering queries stays `Sync`.
#[derive(Debug)]
pub struct AccessMeter {
    block_bits: usize,
    reads: AtomicU64,
    writes: AtomicU64,
    op_start: AtomicU64,
    per_op_max: AtomicU64,
    ops: AtomicU64,
}

impl Clone for AccessMeter {
    fn clone(&self) -> Self {
        let m = AccessMeter::new(self.block_bits);
        m.reads.store(self.reads(), Ordering::Relaxed);
        m.writes.store(self.writes(), Ordering::Relaxed);
        m.op_start
            .store(self.op_start.load(Ordering::Relaxed), Ordering::Relaxed);
        m.per_op_max.store(self.per_op_max(), Ordering::Relaxed);
        m.ops.store(self.ops(), Ordering::Relaxed);
        m
    }
}

impl AccessMeter {
    pub fn new(block_bits: usize) -> Self {
        assert!(block_bits > 0);
        AccessMeter {
            block_bits,
            reads: AtomicU64::new(0),
            writes: AtomicU64::new(0),
            op_start: AtomicU64::new(0),
            per_op_max: AtomicU64::new(0),
            ops: AtomicU64::new(0),
        }
    }

    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    /// Blocks touched by the span `[offset, offset+len)`.
    #[inline]
    pub fn blocks(&self, offset: usize, len: usize) -> u64 {
        if len == 0 {
            0
        } else {
            ((offset + len - 1) / self.block_bits - offset / self.block_bits + 1) as u64
        }
    }

    #[inline]
    pub fn charge_read(&self, offset: usize, len: usize) {
        self.reads
            .fetch_add(self.blocks(offset, len), Ordering::Relaxed);
    }

    #[inline]
    pub fn charge_write(&self, offset: usize, len: usize) {
        self.writes
            .fetch_add(self.blocks(offset, len), Ordering::Relaxed);
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn writes(&self) -> u64 {
        self.writes.load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.reads() + self.writes()
    }

    pub fn per_op_max(&self) -> u64 {
        self.per_op_max.load(Ordering::Relaxed)
    }

    pub fn ops(&self) -> u64 {
        self.ops.load(Ordering::Relaxed)
    }

    /// Marks the start of an operation scope.
    pub fn begin_op(&self) {
        self.op_start.store(self.total(), Ordering::Relaxed);
    }

    /// Closes the current scope and returns the accesses it charged.
    pub fn end_op(&self) -> u64 {
        let used = self.total() - self.op_start.load(Ordering::Relaxed);
        self.per_op_max.fetch_max(used, Ordering::Relaxed);
        self.ops.fetch_add(1, Ordering::Relaxed);
        used
    }

    pub fn reset(&self) {
        for c in [
            &self.reads,
            &self.writes,
            &self.op_start,
            &self.per_op_max,
            &self.ops,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }

    /// Metered [`BitBuffer::read_bits`].
    pub fn read_bits(&self, buf: &BitBuffer, offset: usize, len: usize) -> Result<u128> {
        let v = buf.read_bits(offset, len)?;
        self.charge_read(offset, len);
        Ok(v)
    }

    /// Metered [`BitBuffer::write_bits`].
    pub fn write_bits(
        &self,
        buf: &mut BitBuffer,
        offset: usize,
        len: usize,
        value: u128,
    ) -> Result<()> {
        buf.write_bits(offset, len, value)?;
        self.charge_write(offset, len);
        Ok(())
    }
}
