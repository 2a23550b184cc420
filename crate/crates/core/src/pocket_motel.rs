//! Pocket motel: `k` fixed slots of `entry_len` bits, each with an occupancy
//! bit, plus a free-list head. Vacant slots hold the index of the next vacant
//! slot in their leading entry bits, so slot pointers stay stable while
//! occupied.
//!
//! Layout: `[head: ceil(log2 k)] [occ | entry] * k`. The free list ends at a
//! slot pointing to itself; when every slot is occupied the head points at an
//! occupied slot, which is how an empty free list is recognized without a
//! sentinel value.

use crate::bits::{AccessMeter, BitBuffer};
use crate::error::{Component, Error, Result};
use crate::hashing::bits_for;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PocketMotel {
    k: usize,
    entry_len: usize,
    head_bits: usize,
    link_bits: usize,
    buf: BitBuffer,
}

impl PocketMotel {
    pub fn new(k: usize, entry_len: usize) -> Self {
        assert!(k >= 1 && entry_len <= 128);
        let link_bits = bits_for(k as u128);
        assert!(link_bits <= entry_len, "entries too short for free-list links");
        let head_bits = bits_for(k as u128);
        let mut m = PocketMotel {
            k,
            entry_len,
            head_bits,
            link_bits,
            buf: BitBuffer::new(k * (1 + entry_len) + head_bits),
        };
        for i in 0..k {
            m.set_link(i, (i + 1).min(k - 1));
        }
        m
    }

    pub fn from_image(k: usize, entry_len: usize, buf: BitBuffer) -> Result<Self> {
        let mut m = PocketMotel::new(k, entry_len);
        if buf.bit_capacity() != m.buf.bit_capacity() {
            return Err(Error::Format("motel image has the wrong size".into()));
        }
        m.buf = buf;
        m.check().map_err(Error::Format)?;
        Ok(m)
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn entry_len(&self) -> usize {
        self.entry_len
    }

    pub fn total_bits(&self) -> usize {
        self.buf.bit_capacity()
    }

    pub fn image(&self) -> &BitBuffer {
        &self.buf
    }

    fn slot_off(&self, i: usize) -> usize {
        self.head_bits + i * (1 + self.entry_len)
    }

    fn head(&self) -> usize {
        self.buf.read_bits(0, self.head_bits).unwrap() as usize
    }

    fn set_head(&mut self, h: usize) {
        self.buf.write_bits(0, self.head_bits, h as u128).unwrap();
    }

    pub fn is_occupied(&self, i: usize) -> bool {
        self.buf.get_bit(self.slot_off(i))
    }

    fn link(&self, i: usize) -> usize {
        self.buf
            .read_bits(self.slot_off(i) + 1, self.link_bits)
            .unwrap() as usize
    }

    fn set_link(&mut self, i: usize, next: usize) {
        let off = self.slot_off(i) + 1;
        self.buf.write_bits(off, self.link_bits, next as u128).unwrap();
    }

    pub fn is_full(&self) -> bool {
        self.is_occupied(self.head())
    }

    pub fn occupancy(&self) -> usize {
        (0..self.k).filter(|i| self.is_occupied(*i)).count()
    }

    /// Stores `r` in the slot at the head of the free list.
    pub fn insert(&mut self, r: u128, meter: &AccessMeter) -> Result<usize> {
        if self.entry_len < 128 && r >> self.entry_len != 0 {
            return Err(Error::ValueOverflow { len: self.entry_len });
        }
        meter.charge_read(0, self.head_bits);
        let h = self.head();
        let off = self.slot_off(h);
        meter.charge_read(off, 1 + self.link_bits);
        if self.is_occupied(h) {
            return Err(Error::Overflow(Component::Motel));
        }
        let next = self.link(h);
        self.buf.set_bit(off, true);
        self.buf.write_bits(off + 1, self.entry_len, r)?;
        meter.charge_write(off, 1 + self.entry_len);
        if next != h {
            self.set_head(next);
            meter.charge_write(0, self.head_bits);
        }
        Ok(h)
    }

    /// The entry stored at `ptr`.
    pub fn read(&self, ptr: usize, meter: &AccessMeter) -> Result<u128> {
        if ptr >= self.k || !self.is_occupied(ptr) {
            return Err(Error::InvalidPointer(ptr));
        }
        let off = self.slot_off(ptr);
        meter.charge_read(off, 1 + self.entry_len);
        self.buf.read_bits(off + 1, self.entry_len)
    }

    /// Overwrites the entry stored at `ptr`.
    pub fn write(&mut self, ptr: usize, r: u128, meter: &AccessMeter) -> Result<()> {
        if ptr >= self.k || !self.is_occupied(ptr) {
            return Err(Error::InvalidPointer(ptr));
        }
        let off = self.slot_off(ptr);
        meter.write_bits(&mut self.buf, off + 1, self.entry_len, r)
    }

    /// Frees `ptr`, pushing it on the free list. Only the occupancy bit and
    /// the link field are written; the stale entry tail is left in place.
    pub fn delete(&mut self, ptr: usize, meter: &AccessMeter) -> Result<()> {
        if ptr >= self.k || !self.is_occupied(ptr) {
            return Err(Error::InvalidPointer(ptr));
        }
        meter.charge_read(0, self.head_bits);
        let h = self.head();
        let list_empty = self.is_occupied(h);
        let off = self.slot_off(ptr);
        self.buf.set_bit(off, false);
        self.set_link(ptr, if list_empty { ptr } else { h });
        self.set_head(ptr);
        meter.charge_write(off, 1 + self.link_bits);
        meter.charge_write(0, self.head_bits);
        Ok(())
    }

    /// Vacant slots in free-list order.
    pub fn free_list(&self) -> std::result::Result<Vec<usize>, String> {
        let mut cur = self.head();
        if cur >= self.k {
            return Err("head out of range".into());
        }
        let mut seen = vec![false; self.k];
        let mut out = Vec::new();
        while !self.is_occupied(cur) {
            if seen[cur] {
                return Err("free list revisits a slot".into());
            }
            seen[cur] = true;
            out.push(cur);
            let next = self.link(cur);
            if next >= self.k {
                return Err("free-list link out of range".into());
            }
            if next == cur {
                break;
            }
            cur = next;
            if self.is_occupied(cur) {
                return Err("free list reaches an occupied slot".into());
            }
        }
        Ok(out)
    }

    /// Occupied and vacant slots partition the motel.
    pub fn check(&self) -> std::result::Result<(), String> {
        let free = self.free_list()?;
        if free.len() + self.occupancy() != self.k {
            return Err(format!(
                "free list covers {} of {} vacant slots",
                free.len(),
                self.k - self.occupancy()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_list_examples() {
        let m = AccessMeter::new(64);
        let mut motel = PocketMotel::new(4, 8);
        assert_eq!(motel.insert(0xaa, &m).unwrap(), 0);
        assert_eq!(motel.insert(0xbb, &m).unwrap(), 1);
        motel.delete(0, &m).unwrap();
        assert_eq!(motel.insert(0xcc, &m).unwrap(), 0);
        assert_eq!(motel.read(0, &m).unwrap(), 0xcc);
        assert_eq!(motel.read(1, &m).unwrap(), 0xbb);
        assert_eq!(motel.read(2, &m), Err(Error::InvalidPointer(2)));
        motel.delete(1, &m).unwrap();
        assert_eq!(motel.delete(1, &m), Err(Error::InvalidPointer(1)));
        assert_eq!(motel.occupancy(), 1);
        motel.check().unwrap();
    }

    #[test]
    fn size_formula() {
        assert_eq!(PocketMotel::new(8, 6).total_bits(), 59);
        assert_eq!(PocketMotel::new(1, 3).total_bits(), 4);
    }

    #[test]
    fn fill_and_overflow() {
        let m = AccessMeter::new(64);
        let mut motel = PocketMotel::new(5, 4);
        for i in 0..5 {
            assert_eq!(motel.insert(i as u128, &m).unwrap(), i);
        }
        assert!(motel.is_full());
        let before = motel.clone();
        assert_eq!(motel.insert(1, &m), Err(Error::Overflow(Component::Motel)));
        assert_eq!(motel, before);
        motel.delete(3, &m).unwrap();
        motel.check().unwrap();
        assert_eq!(motel.insert(9, &m).unwrap(), 3);
        assert!(motel.is_full());
    }

    #[test]
    fn wide_entry_read_charges() {
        let m = AccessMeter::new(64);
        let mut motel = PocketMotel::new(4, 128);
        let p = motel.insert(u128::MAX - 5, &m).unwrap();
        m.reset();
        m.begin_op();
        assert_eq!(motel.read(p, &m).unwrap(), u128::MAX - 5);
        let used = m.end_op();
        assert!((3..=4).contains(&used), "{used}");
    }
}
