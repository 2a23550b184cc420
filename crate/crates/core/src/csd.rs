//! Counting set dictionaries and their variable-length companion.
//!
//! A CSD packs up to `f_hat` records `key | next | prev | counter | valid`,
//! left-justified and sorted by key. The counter field stores `count - 1` so
//! that `ceil(log2 c_hat)` bits cover counts `1..=c_hat`. Records whose count
//! drops to zero are compacted away immediately.
//!
//! A VarCSD is a symbol stream of one frame per CSD; frame `i` lists the
//! adaptive remainders of CSD `i`'s records in record order and ends with a
//! frame separator.

use crate::bits::{AccessMeter, BitBuffer, BitStr};
use crate::error::{Component, Error, Result};
use crate::symbols::{Symbols, EOS, FRAME};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Record {
    pub key: u128,
    pub next: usize,
    pub prev: usize,
    pub count: usize,
}

/// Outcome of a keyed insertion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inserted {
    New(usize),
    Counted(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountingSetDict {
    f_hat: usize,
    key_bits: usize,
    link_bits: usize,
    counter_bits: usize,
    c_hat: usize,
    buf: BitBuffer,
}

impl CountingSetDict {
    /// Payload width is `key_bits + 2 * link_bits`.
    pub fn new(f_hat: usize, key_bits: usize, link_bits: usize, c_hat: usize) -> Self {
        assert!(f_hat >= 1 && c_hat >= 1 && key_bits <= 128 && link_bits <= 64);
        let counter_bits = crate::hashing::bits_for(c_hat as u128);
        let rec = key_bits + 2 * link_bits + counter_bits + 1;
        CountingSetDict {
            f_hat,
            key_bits,
            link_bits,
            counter_bits,
            c_hat,
            buf: BitBuffer::new(f_hat * rec),
        }
    }

    pub fn from_image(f_hat: usize, key_bits: usize, link_bits: usize, c_hat: usize, buf: BitBuffer) -> Result<Self> {
        let mut c = CountingSetDict::new(f_hat, key_bits, link_bits, c_hat);
        if buf.bit_capacity() != c.buf.bit_capacity() {
            return Err(Error::Format("CSD image has the wrong size".into()));
        }
        c.buf = buf;
        c.check().map_err(Error::Format)?;
        Ok(c)
    }

    pub fn capacity(&self) -> usize {
        self.f_hat
    }

    pub fn payload_bits(&self) -> usize {
        self.key_bits + 2 * self.link_bits
    }

    pub fn record_bits(&self) -> usize {
        self.payload_bits() + self.counter_bits + 1
    }

    pub fn total_bits(&self) -> usize {
        self.buf.bit_capacity()
    }

    pub fn image(&self) -> &BitBuffer {
        &self.buf
    }

    fn off(&self, i: usize) -> usize {
        i * self.record_bits()
    }

    fn valid(&self, i: usize) -> bool {
        self.buf.get_bit(self.off(i) + self.record_bits() - 1)
    }

    /// Number of valid records.
    pub fn support(&self) -> usize {
        let (mut lo, mut hi) = (0, self.f_hat);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.valid(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn is_full(&self) -> bool {
        self.support() == self.f_hat
    }

    /// Record `i`, uncharged.
    pub fn record(&self, i: usize) -> Record {
        let o = self.off(i);
        let kb = self.key_bits;
        let lb = self.link_bits;
        Record {
            key: self.buf.read_bits(o, kb).unwrap(),
            next: self.buf.read_bits(o + kb, lb).unwrap() as usize,
            prev: self.buf.read_bits(o + kb + lb, lb).unwrap() as usize,
            count: self.buf.read_bits(o + kb + 2 * lb, self.counter_bits).unwrap() as usize + 1,
        }
    }

    fn put(&mut self, i: usize, r: &Record) -> Result<()> {
        if r.count == 0 || r.count > self.c_hat {
            return Err(Error::Overflow(Component::Csd));
        }
        let o = self.off(i);
        let kb = self.key_bits;
        let lb = self.link_bits;
        self.buf.write_bits(o, kb, r.key)?;
        self.buf.write_bits(o + kb, lb, r.next as u128)?;
        self.buf.write_bits(o + kb + lb, lb, r.prev as u128)?;
        self.buf
            .write_bits(o + kb + 2 * lb, self.counter_bits, (r.count - 1) as u128)?;
        self.buf.set_bit(o + self.record_bits() - 1, true);
        Ok(())
    }

    /// All valid records with one metered pass.
    pub fn load(&self, meter: &AccessMeter) -> Vec<Record> {
        let s = self.support();
        meter.charge_read(0, self.off(s.min(self.f_hat - 1) + 1));
        (0..s).map(|i| self.record(i)).collect()
    }

    fn charge_tail(&self, from: usize, meter: &AccessMeter) {
        let s = self.support().max(from + 1);
        meter.charge_write(self.off(from), self.off(s) - self.off(from));
    }

    pub fn find(&self, key: u128, meter: &AccessMeter) -> Option<usize> {
        self.load(meter).iter().position(|r| r.key == key)
    }

    pub fn query(&self, key: u128, meter: &AccessMeter) -> usize {
        self.find(key, meter).map_or(0, |i| self.record(i).count)
    }

    /// Records whose key starts with the `prefix_bits`-bit value `prefix`.
    pub fn prefix_range(&self, prefix_bits: usize, prefix: u128, meter: &AccessMeter) -> (usize, usize) {
        let shift = self.key_bits - prefix_bits;
        let top = |k: u128| if shift >= 128 { 0 } else { k >> shift };
        let recs = self.load(meter);
        let s = recs.iter().take_while(|r| top(r.key) < prefix).count();
        let e = s + recs[s..].iter().take_while(|r| top(r.key) == prefix).count();
        (s, e)
    }

    /// First record of group `group`, the leading `group_bits` of the key.
    pub fn find_by_group(&self, group_bits: usize, group: u128, meter: &AccessMeter) -> Option<usize> {
        let (s, e) = self.prefix_range(group_bits, group, meter);
        (s < e).then_some(s)
    }

    /// Counts `key` or inserts it as a new record in sorted position.
    pub fn insert(&mut self, key: u128, next: usize, prev: usize, meter: &AccessMeter) -> Result<Inserted> {
        let recs = self.load(meter);
        if let Some(i) = recs.iter().position(|r| r.key == key) {
            self.increment(i, meter)?;
            return Ok(Inserted::Counted(i));
        }
        let at = recs.iter().take_while(|r| r.key < key).count();
        self.insert_at(
            at,
            Record {
                key,
                next,
                prev,
                count: 1,
            },
            meter,
        )?;
        Ok(Inserted::New(at))
    }

    /// Inserts a new record at position `at`, shifting later records.
    pub fn insert_at(&mut self, at: usize, rec: Record, meter: &AccessMeter) -> Result<()> {
        let s = self.support();
        if s == self.f_hat {
            return Err(Error::Overflow(Component::Csd));
        }
        if at > s {
            return Err(Error::Precondition(format!("record slot {at} beyond support {s}")));
        }
        if self.key_bits < 128 && rec.key >> self.key_bits != 0 {
            return Err(Error::ValueOverflow { len: self.key_bits });
        }
        let end = self.buf.bit_capacity();
        let rb = self.record_bits();
        self.buf.open_gap(0, end, self.off(at), rb)?;
        if let Err(e) = self.put(at, &rec) {
            self.buf.close_gap(0, end, self.off(at), rb)?;
            return Err(e);
        }
        self.charge_tail(at, meter);
        Ok(())
    }

    pub fn increment(&mut self, i: usize, meter: &AccessMeter) -> Result<()> {
        let mut r = self.record(i);
        if r.count == self.c_hat {
            return Err(Error::Overflow(Component::Csd));
        }
        r.count += 1;
        self.put(i, &r)?;
        meter.charge_write(self.off(i), self.record_bits());
        Ok(())
    }

    /// Decrements record `i`; returns true when the record was removed.
    pub fn decrement(&mut self, i: usize, meter: &AccessMeter) -> Result<bool> {
        let mut r = self.record(i);
        if r.count > 1 {
            r.count -= 1;
            self.put(i, &r)?;
            meter.charge_write(self.off(i), self.record_bits());
            Ok(false)
        } else {
            self.remove_at(i, meter)?;
            Ok(true)
        }
    }

    pub fn remove_at(&mut self, i: usize, meter: &AccessMeter) -> Result<Record> {
        if i >= self.support() {
            return Err(Error::NotFound);
        }
        let r = self.record(i);
        self.charge_tail(i, meter);
        let end = self.buf.bit_capacity();
        self.buf.close_gap(0, end, self.off(i), self.record_bits())?;
        Ok(r)
    }

    /// Decrements `key`; returns true when its record was removed.
    pub fn delete(&mut self, key: u128, meter: &AccessMeter) -> Result<bool> {
        let i = self.find(key, meter).ok_or(Error::NotFound)?;
        self.decrement(i, meter)
    }

    /// Overwrites the key of record `i` without moving it.
    pub fn set_key(&mut self, i: usize, key: u128, meter: &AccessMeter) -> Result<()> {
        if i >= self.support() {
            return Err(Error::NotFound);
        }
        let mut r = self.record(i);
        r.key = key;
        self.put(i, &r)?;
        meter.charge_write(self.off(i), self.key_bits);
        Ok(())
    }

    /// Sets the list links of records `[s, e)`.
    pub fn set_links(&mut self, s: usize, e: usize, next: usize, prev: usize, meter: &AccessMeter) -> Result<()> {
        for i in s..e {
            let mut r = self.record(i);
            r.next = next;
            r.prev = prev;
            self.put(i, &r)?;
        }
        meter.charge_write(self.off(s), self.off(e) - self.off(s));
        Ok(())
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let s = self.support();
        for i in s..self.f_hat {
            if self.valid(i) {
                return Err("valid record after an invalid one".into());
            }
        }
        let tail = self.off(s);
        if !self.buf.is_zero(tail, self.buf.bit_capacity() - tail).unwrap() {
            return Err("records past the support are not zero".into());
        }
        Ok(())
    }
}

//---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarCountingSetDict {
    frames: usize,
    big_f: usize,
    big_l: usize,
    buf: BitBuffer,
}

impl VarCountingSetDict {
    pub fn new(frames: usize, big_f: usize, big_l: usize) -> Self {
        assert!(frames >= 1);
        let mut v = VarCountingSetDict {
            frames,
            big_f,
            big_l,
            buf: BitBuffer::new(2 * (big_f + big_l + frames)),
        };
        let sym = v.symbols();
        for i in 0..frames {
            v.buf.write_bits(sym.bit(i), 2, FRAME as u128).unwrap();
        }
        v
    }

    pub fn from_image(frames: usize, big_f: usize, big_l: usize, buf: BitBuffer) -> Result<Self> {
        let mut v = VarCountingSetDict::new(frames, big_f, big_l);
        if buf.bit_capacity() != v.buf.bit_capacity() {
            return Err(Error::Format("VarCSD image has the wrong size".into()));
        }
        v.buf = buf;
        v.check().map_err(Error::Format)?;
        Ok(v)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn total_bits(&self) -> usize {
        self.buf.bit_capacity()
    }

    /// The allocation bound `2(F + L + frames)`.
    pub fn size_bound(&self) -> usize {
        2 * (self.big_f + self.big_l + self.frames)
    }

    pub fn image(&self) -> &BitBuffer {
        &self.buf
    }

    fn symbols(&self) -> Symbols {
        Symbols::new(0, self.big_f + self.big_l + self.frames)
    }

    fn used_end(&self) -> usize {
        self.symbols()
            .find_after(&self.buf, 0, FRAME, self.frames)
            .expect("frame separators")
    }

    /// Stored strings across all frames.
    pub fn element_count(&self) -> usize {
        self.symbols().count(&self.buf, 0, self.used_end(), EOS)
    }

    pub fn payload_bits(&self) -> usize {
        self.used_end() - self.frames - self.element_count()
    }

    fn frame_start(&self, frame: usize, meter: &AccessMeter) -> usize {
        assert!(frame < self.frames, "frame {frame} out of range");
        let at = self
            .symbols()
            .find_after(&self.buf, 0, FRAME, frame)
            .expect("frame separators");
        meter.charge_read(0, 2 * at);
        at
    }

    /// Start of string `rank` in `frame`; `rank` may equal the frame size.
    fn string_at(&self, frame: usize, rank: usize, meter: &AccessMeter) -> Result<usize> {
        let sym = self.symbols();
        let mut at = self.frame_start(frame, meter);
        let begin = at;
        for _ in 0..rank {
            let (_, term, next) = sym.read_string(&self.buf, at)?;
            if term != EOS {
                return Err(Error::Precondition(format!("frame {frame} has fewer than {rank} strings")));
            }
            at = next;
        }
        meter.charge_read(sym.bit(begin), 2 * (at - begin));
        Ok(at)
    }

    pub fn read_frame(&self, frame: usize, meter: &AccessMeter) -> Vec<BitStr> {
        let sym = self.symbols();
        let mut at = self.frame_start(frame, meter);
        let begin = at;
        let mut out = Vec::new();
        loop {
            let (a, term, next) = sym.read_string(&self.buf, at).expect("frame string");
            if term == FRAME {
                break;
            }
            out.push(a);
            at = next;
        }
        meter.charge_read(sym.bit(begin), 2 * (at + 1 - begin));
        out
    }

    fn charge_shift(&self, from: usize, meter: &AccessMeter) {
        let end = self.used_end();
        meter.charge_write(2 * from, 2 * (end.max(from) - from));
    }

    pub fn insert(&mut self, frame: usize, rank: usize, alpha: &BitStr, meter: &AccessMeter) -> Result<()> {
        if self.element_count() + 1 > self.big_f || self.payload_bits() + alpha.len() > self.big_l {
            return Err(Error::Overflow(Component::VarCsd));
        }
        let at = self.string_at(frame, rank, meter)?;
        self.symbols().insert_string(&mut self.buf, at, alpha, EOS)?;
        self.charge_shift(at, meter);
        Ok(())
    }

    pub fn delete(&mut self, frame: usize, rank: usize, meter: &AccessMeter) -> Result<BitStr> {
        let at = self.string_at(frame, rank, meter)?;
        if self.symbols().get(&self.buf, at) == FRAME {
            return Err(Error::Precondition(format!("frame {frame} has no string {rank}")));
        }
        let a = self.symbols().remove_string(&mut self.buf, at)?;
        self.charge_shift(at, meter);
        Ok(a)
    }

    pub fn replace(&mut self, frame: usize, rank: usize, alpha: &BitStr, meter: &AccessMeter) -> Result<()> {
        let at = self.string_at(frame, rank, meter)?;
        let sym = self.symbols();
        let (old, term, _) = sym.read_string(&self.buf, at)?;
        if term != EOS {
            return Err(Error::Precondition(format!("frame {frame} has no string {rank}")));
        }
        if self.payload_bits() - old.len() + alpha.len() > self.big_l {
            return Err(Error::Overflow(Component::VarCsd));
        }
        sym.remove_string(&mut self.buf, at)?;
        sym.insert_string(&mut self.buf, at, alpha, EOS)?;
        self.charge_shift(at, meter);
        Ok(())
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let sym = self.symbols();
        let end = sym
            .find_after(&self.buf, 0, FRAME, self.frames)
            .ok_or("missing frame separators")?;
        let count = sym.count(&self.buf, 0, end, EOS);
        if count > self.big_f || end - self.frames - count > self.big_l {
            return Err("VarCSD capacity exceeded".into());
        }
        let tail = sym.bit(end);
        if !self.buf.is_zero(tail, self.buf.bit_capacity() - tail).unwrap() {
            return Err("unused symbols are not zero".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_semantics() {
        let m = AccessMeter::new(64);
        let mut c = CountingSetDict::new(5, 10, 0, 8);
        assert_eq!(c.total_bits(), 5 * (10 + 3 + 1));
        assert_eq!(c.insert(7, 0, 0, &m).unwrap(), Inserted::New(0));
        assert_eq!(c.insert(7, 0, 0, &m).unwrap(), Inserted::Counted(0));
        assert_eq!(c.query(7, &m), 2);
        assert_eq!(c.query(8, &m), 0);
        for k in 1..5 {
            c.insert(100 + k, 0, 0, &m).unwrap();
        }
        let before = c.clone();
        assert_eq!(c.insert(3, 0, 0, &m), Err(Error::Overflow(Component::Csd)));
        assert_eq!(c, before);
        assert!(!c.delete(7, &m).unwrap());
        assert_eq!(c.query(7, &m), 1);
        assert!(c.delete(7, &m).unwrap());
        assert_eq!(c.support(), 4);
        assert_eq!(c.delete(7, &m), Err(Error::NotFound));
        c.check().unwrap();
    }

    #[test]
    fn counter_limit() {
        let m = AccessMeter::new(64);
        let mut c = CountingSetDict::new(2, 4, 0, 3);
        for _ in 0..3 {
            c.insert(1, 0, 0, &m).unwrap();
        }
        assert_eq!(c.insert(1, 0, 0, &m), Err(Error::Overflow(Component::Csd)));
        assert_eq!(c.query(1, &m), 3);
    }

    #[test]
    fn group_lookup() {
        let m = AccessMeter::new(64);
        // keys: 2-bit group then 4-bit value
        let mut c = CountingSetDict::new(6, 6, 3, 4);
        for (g, v) in [(3, 1), (1, 5), (3, 0), (1, 2)] {
            c.insert((g << 4) | v, 0, 0, &m).unwrap();
        }
        assert_eq!(c.find_by_group(2, 3, &m), Some(2));
        assert_eq!(c.record(2).key, (3 << 4) | 0);
        assert_eq!(c.find_by_group(2, 2, &m), None);
        let mut one = CountingSetDict::new(2, 6, 3, 4);
        one.insert(0b10_0001, 0, 0, &m).unwrap();
        assert_eq!(one.find_by_group(2, 2, &m), Some(0));
    }

    #[test]
    fn var_frames() {
        let m = AccessMeter::new(64);
        let mut v = VarCountingSetDict::new(8, 4, 6);
        assert_eq!(v.total_bits(), 36);
        assert!(v.total_bits() <= v.size_bound());
        v.insert(2, 0, &BitStr::parse("0"), &m).unwrap();
        assert_eq!(v.read_frame(2, &m), vec![BitStr::parse("0")]);
        assert_eq!(v.read_frame(1, &m), vec![]);
        assert_eq!(v.payload_bits(), 1);
        v.replace(2, 0, &BitStr::parse("01"), &m).unwrap();
        assert_eq!(v.payload_bits(), 2);
        v.insert(2, 0, &BitStr::EMPTY, &m).unwrap();
        v.insert(7, 0, &BitStr::parse("111"), &m).unwrap();
        v.insert(0, 0, &BitStr::EMPTY, &m).unwrap();
        assert_eq!(v.read_frame(2, &m), vec![BitStr::EMPTY, BitStr::parse("01")]);
        assert_eq!(v.read_frame(7, &m), vec![BitStr::parse("111")]);
        assert_eq!(v.element_count(), 4);
        assert_eq!(v.insert(3, 0, &BitStr::EMPTY, &m), Err(Error::Overflow(Component::VarCsd)));
        assert_eq!(v.delete(2, 1, &m).unwrap(), BitStr::parse("01"));
        assert!(v.delete(2, 1, &m).is_err());
        v.check().unwrap();
    }
}
