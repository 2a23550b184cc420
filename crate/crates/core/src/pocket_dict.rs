//! Pocket dictionaries: a bin of `m` quotients holding at most `f` entries
//! in a unary header plus a packed body, and the variable-length sibling that
//! stores adaptive remainders as symbol strings.
//!
//! Layout of a pocket dictionary (`m + f(1 + s)` bits for slot width `s`):
//!
//! ```text
//! [ header: 1^{n_0} 0 1^{n_1} 0 ... 1^{n_{m-1}} 0 0..0 | slot_0 .. slot_{f-1} ]
//! ```
//!
//! The variable-length bin uses the same header over `M` combined quotients
//! followed by `2(L + F)` bits of symbols, one string plus terminator per entry.

use crate::bits::{AccessMeter, BitBuffer, BitStr};
use crate::error::{Component, Error, Result};
use crate::symbols::{Symbols, EOS};

/// Start and end, in entries, of group `q` given a unary header window.
fn unary_range(buf: &BitBuffer, header_len: usize, q: usize) -> (usize, usize) {
    let start = if q == 0 {
        0
    } else {
        buf.select_zero(0, header_len, q - 1).expect("header zeros") - (q - 1)
    };
    let end = buf.select_zero(0, header_len, q).expect("header zeros") - q;
    (start, end)
}

/// Checks that a header holds `quotients` zeros with only zeros after the last.
fn check_header(buf: &BitBuffer, quotients: usize, header_len: usize) -> std::result::Result<usize, String> {
    let last = buf
        .select_zero(0, header_len, quotients - 1)
        .map_err(|_| "header has fewer zeros than quotients".to_string())?;
    if !buf.is_zero(last, header_len - last).unwrap() {
        return Err("header padding is not zero".into());
    }
    Ok(last + 1 - quotients)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PocketDict {
    m: usize,
    f: usize,
    slot_bits: usize,
    buf: BitBuffer,
}

impl PocketDict {
    pub fn new(m: usize, f: usize, slot_bits: usize) -> Self {
        assert!(m >= 1 && f >= 1 && slot_bits <= 128);
        PocketDict {
            m,
            f,
            slot_bits,
            buf: BitBuffer::new(m + f * (1 + slot_bits)),
        }
    }

    /// Restores a bin from its raw image after validating the header.
    pub fn from_image(m: usize, f: usize, slot_bits: usize, buf: BitBuffer) -> Result<Self> {
        if buf.bit_capacity() != m + f * (1 + slot_bits) {
            return Err(Error::Format("bin image has the wrong size".into()));
        }
        let pd = PocketDict { m, f, slot_bits, buf };
        pd.check().map_err(Error::Format)?;
        Ok(pd)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn capacity(&self) -> usize {
        self.f
    }

    pub fn slot_bits(&self) -> usize {
        self.slot_bits
    }

    pub fn total_bits(&self) -> usize {
        self.buf.bit_capacity()
    }

    pub fn image(&self) -> &BitBuffer {
        &self.buf
    }

    fn header_len(&self) -> usize {
        self.m + self.f
    }

    fn slot_off(&self, i: usize) -> usize {
        self.header_len() + i * self.slot_bits
    }

    fn body_end(&self) -> usize {
        self.slot_off(self.f)
    }

    /// Number of stored entries; the header holds one 1 per entry.
    pub fn occupancy(&self) -> usize {
        self.buf.count_ones(0, self.header_len()).unwrap()
    }

    pub fn is_full(&self) -> bool {
        self.occupancy() == self.f
    }

    /// Reads the header and reports whether the bin is full.
    pub fn load_header(&self, meter: &AccessMeter) -> usize {
        meter.charge_read(0, self.header_len());
        self.occupancy()
    }

    /// Entry range `[start, end)` of quotient `q`.
    pub fn range(&self, q: usize, meter: &AccessMeter) -> (usize, usize) {
        assert!(q < self.m, "quotient {q} out of range");
        meter.charge_read(0, self.header_len());
        unary_range(&self.buf, self.header_len(), q)
    }

    /// Slot value `i`, uncharged.
    pub fn slot(&self, i: usize) -> u128 {
        self.buf.read_bits(self.slot_off(i), self.slot_bits).unwrap()
    }

    /// Reads slots `[s, e)` with one metered pass.
    pub fn read_slots(&self, s: usize, e: usize, meter: &AccessMeter) -> Vec<u128> {
        meter.charge_read(self.slot_off(s), (e - s) * self.slot_bits);
        (s..e).map(|i| self.slot(i)).collect()
    }

    pub fn set_slot(&mut self, i: usize, v: u128, meter: &AccessMeter) -> Result<()> {
        let off = self.slot_off(i);
        meter.write_bits(&mut self.buf, off, self.slot_bits, v)
    }

    /// Multiplicity of `(q, r)`.
    pub fn query(&self, q: usize, r: u128, meter: &AccessMeter) -> usize {
        let (s, e) = self.range(q, meter);
        self.read_slots(s, e, meter).iter().filter(|v| **v == r).count()
    }

    /// Slot of the first copy of `(q, r)`.
    pub fn rank(&self, q: usize, r: u128, meter: &AccessMeter) -> Option<usize> {
        let (s, e) = self.range(q, meter);
        self.read_slots(s, e, meter)
            .iter()
            .position(|v| *v == r)
            .map(|i| s + i)
    }

    /// Inserts `(q, r)` keeping each group sorted by value.
    pub fn insert(&mut self, q: usize, r: u128, meter: &AccessMeter) -> Result<()> {
        if self.load_header(meter) == self.f {
            return Err(Error::Overflow(Component::PocketDict));
        }
        let (s, e) = self.range(q, meter);
        let vals = self.read_slots(s, e, meter);
        let at = s + vals.iter().take_while(|v| **v <= r).count();
        self.insert_at(q, at, r, meter)
    }

    /// Inserts `value` as a new entry of group `q` at absolute slot `at`,
    /// which must lie inside the group's range (its end included).
    pub fn insert_at(&mut self, q: usize, at: usize, value: u128, meter: &AccessMeter) -> Result<()> {
        let occ = self.occupancy();
        if occ == self.f {
            return Err(Error::Overflow(Component::PocketDict));
        }
        let (s, e) = unary_range(&self.buf, self.header_len(), q);
        if at < s || at > e {
            return Err(Error::Precondition(format!(
                "slot {at} outside group range {s}..={e}"
            )));
        }
        if self.slot_bits < 128 && value >> self.slot_bits != 0 {
            return Err(Error::ValueOverflow { len: self.slot_bits });
        }
        let hl = self.header_len();
        let body = self.header_len();
        let end = self.body_end();
        let off = self.slot_off(at);
        self.buf.shift_insert(0, hl, at + q, 1, 1)?;
        self.buf.shift_insert(body, end, off, self.slot_bits, value)?;
        meter.charge_write(0, hl);
        meter.charge_write(off, (occ + 1 - at) * self.slot_bits);
        Ok(())
    }

    /// Removes one copy of `(q, r)`.
    pub fn delete(&mut self, q: usize, r: u128, meter: &AccessMeter) -> Result<()> {
        let at = self.rank(q, r, meter).ok_or(Error::NotFound)?;
        self.remove_at(q, at, meter).map(|_| ())
    }

    /// Removes the entry at absolute slot `at` of group `q`, returning it.
    pub fn remove_at(&mut self, q: usize, at: usize, meter: &AccessMeter) -> Result<u128> {
        let (s, e) = unary_range(&self.buf, self.header_len(), q);
        if at < s || at >= e {
            return Err(Error::Precondition(format!(
                "slot {at} outside group range {s}..{e}"
            )));
        }
        let occ = self.occupancy();
        let hl = self.header_len();
        let end = self.body_end();
        let off = self.slot_off(at);
        self.buf.shift_delete(0, hl, at + q, 1)?;
        let v = self.buf.shift_delete(hl, end, off, self.slot_bits)?;
        meter.charge_write(0, hl);
        meter.charge_write(off, (occ - at) * self.slot_bits);
        Ok(v)
    }

    /// Group sizes `n_0 .. n_{m-1}`.
    pub fn counts(&self) -> Vec<usize> {
        let hl = self.header_len();
        (0..self.m)
            .map(|q| {
                let (s, e) = unary_range(&self.buf, hl, q);
                e - s
            })
            .collect()
    }

    /// All entries as `(q, value)` in slot order.
    pub fn decode(&self) -> Vec<(usize, u128)> {
        let mut out = Vec::with_capacity(self.occupancy());
        let mut slot = 0;
        for (q, n) in self.counts().into_iter().enumerate() {
            for _ in 0..n {
                out.push((q, self.slot(slot)));
                slot += 1;
            }
        }
        out
    }

    /// Structural checks: header shape and zeroed unused slots.
    pub fn check(&self) -> std::result::Result<(), String> {
        let occ = check_header(&self.buf, self.m, self.header_len())?;
        if occ > self.f {
            return Err("occupancy exceeds capacity".into());
        }
        let tail = self.slot_off(occ);
        if !self.buf.is_zero(tail, self.body_end() - tail).unwrap() {
            return Err("unused slots are not zero".into());
        }
        Ok(())
    }
}

//---------------------------------------------------------------------------

/// Variable-length bin shared by `super_interval` consecutive bins; entry
/// group `(qsi, q)` is combined quotient `qsi * m + q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarPocketDict {
    pd_m: usize,
    big_m: usize,
    big_f: usize,
    big_l: usize,
    buf: BitBuffer,
}

impl VarPocketDict {
    pub fn new(pd_m: usize, big_m: usize, big_f: usize, big_l: usize) -> Self {
        assert!(big_m >= 1 && big_f >= 1);
        VarPocketDict {
            pd_m,
            big_m,
            big_f,
            big_l,
            buf: BitBuffer::new(big_m + big_f + 2 * (big_l + big_f)),
        }
    }

    pub fn from_image(pd_m: usize, big_m: usize, big_f: usize, big_l: usize, buf: BitBuffer) -> Result<Self> {
        if buf.bit_capacity() != big_m + big_f + 2 * (big_l + big_f) {
            return Err(Error::Format("variable-length bin image has the wrong size".into()));
        }
        let v = VarPocketDict {
            pd_m,
            big_m,
            big_f,
            big_l,
            buf,
        };
        v.check().map_err(Error::Format)?;
        Ok(v)
    }

    pub fn total_bits(&self) -> usize {
        self.buf.bit_capacity()
    }

    /// The allocation bound `M + 3F + 2L`.
    pub fn size_bound(&self) -> usize {
        self.big_m + 3 * self.big_f + 2 * self.big_l
    }

    pub fn image(&self) -> &BitBuffer {
        &self.buf
    }

    fn header_len(&self) -> usize {
        self.big_m + self.big_f
    }

    fn symbols(&self) -> Symbols {
        Symbols::new(self.header_len(), self.big_l + self.big_f)
    }

    fn qidx(&self, qsi: usize, q: usize) -> usize {
        let i = qsi * self.pd_m + q;
        assert!(q < self.pd_m && i < self.big_m, "group ({qsi},{q}) out of range");
        i
    }

    pub fn occupancy(&self) -> usize {
        self.buf.count_ones(0, self.header_len()).unwrap()
    }

    /// Symbol index just past the last stored string.
    fn used_end(&self, occ: usize) -> usize {
        self.symbols().find_after(&self.buf, 0, EOS, occ).expect("body strings")
    }

    /// Total adaptive-remainder bits stored.
    pub fn payload_bits(&self) -> usize {
        let occ = self.occupancy();
        self.used_end(occ) - occ
    }

    fn group(&self, qidx: usize, meter: &AccessMeter) -> (usize, usize) {
        meter.charge_read(0, self.header_len());
        unary_range(&self.buf, self.header_len(), qidx)
    }

    /// Start symbol of string `idx`; charges the scanned prefix of the body.
    fn string_start(&self, idx: usize, meter: &AccessMeter) -> usize {
        let sym = self.symbols();
        let at = sym.find_after(&self.buf, 0, EOS, idx).expect("body strings");
        meter.charge_read(sym.base, 2 * at);
        at
    }

    /// Strings of group `(qsi, q)` in order.
    pub fn read_group(&self, qsi: usize, q: usize, meter: &AccessMeter) -> Vec<BitStr> {
        let (s, e) = self.group(self.qidx(qsi, q), meter);
        let sym = self.symbols();
        let mut at = self.string_start(s, meter);
        let begin = at;
        let mut out = Vec::with_capacity(e - s);
        for _ in s..e {
            let (a, _, next) = sym.read_string(&self.buf, at).expect("group string");
            out.push(a);
            at = next;
        }
        meter.charge_read(sym.bit(begin), 2 * (at - begin));
        out
    }

    fn charge_shift(&self, from_sym: usize, meter: &AccessMeter) {
        let sym = self.symbols();
        let occ = self.occupancy();
        let end = self.used_end(occ);
        meter.charge_write(0, self.header_len());
        meter.charge_write(sym.bit(from_sym), 2 * (end.max(from_sym) - from_sym));
    }

    /// Inserts `alpha` as entry `rank` of group `(qsi, q)`.
    pub fn insert(&mut self, qsi: usize, q: usize, alpha: &BitStr, rank: usize, meter: &AccessMeter) -> Result<()> {
        let qi = self.qidx(qsi, q);
        let (s, e) = self.group(qi, meter);
        if rank > e - s {
            return Err(Error::Precondition(format!("rank {rank} beyond group size {}", e - s)));
        }
        let occ = self.occupancy();
        if occ + 1 > self.big_f || self.payload_bits() + alpha.len() > self.big_l {
            return Err(Error::Overflow(Component::VarPocketDict));
        }
        let at = self.string_start(s + rank, meter);
        let hl = self.header_len();
        self.buf.shift_insert(0, hl, s + rank + qi, 1, 1)?;
        self.symbols().insert_string(&mut self.buf, at, alpha, EOS)?;
        self.charge_shift(at, meter);
        Ok(())
    }

    /// Removes entry `rank` of group `(qsi, q)` and returns its string.
    pub fn delete(&mut self, qsi: usize, q: usize, rank: usize, meter: &AccessMeter) -> Result<BitStr> {
        let qi = self.qidx(qsi, q);
        let (s, e) = self.group(qi, meter);
        if rank >= e - s {
            return Err(Error::Precondition(format!("rank {rank} beyond group size {}", e - s)));
        }
        let at = self.string_start(s + rank, meter);
        let hl = self.header_len();
        let alpha = self.symbols().remove_string(&mut self.buf, at)?;
        self.buf.shift_delete(0, hl, s + rank + qi, 1)?;
        self.charge_shift(at, meter);
        Ok(alpha)
    }

    /// Overwrites the string of entry `rank` of group `(qsi, q)`.
    pub fn replace(&mut self, qsi: usize, q: usize, rank: usize, alpha: &BitStr, meter: &AccessMeter) -> Result<()> {
        let qi = self.qidx(qsi, q);
        let (s, e) = self.group(qi, meter);
        if rank >= e - s {
            return Err(Error::Precondition(format!("rank {rank} beyond group size {}", e - s)));
        }
        let at = self.string_start(s + rank, meter);
        let sym = self.symbols();
        let (old, _, _) = sym.read_string(&self.buf, at)?;
        if self.payload_bits() - old.len() + alpha.len() > self.big_l {
            return Err(Error::Overflow(Component::VarPocketDict));
        }
        sym.remove_string(&mut self.buf, at)?;
        sym.insert_string(&mut self.buf, at, alpha, EOS)?;
        self.charge_shift(at, meter);
        Ok(())
    }

    /// Group sizes for every combined quotient.
    pub fn counts(&self) -> Vec<usize> {
        let hl = self.header_len();
        (0..self.big_m)
            .map(|i| {
                let (s, e) = unary_range(&self.buf, hl, i);
                e - s
            })
            .collect()
    }

    /// Every string in storage order.
    pub fn decode(&self) -> Vec<BitStr> {
        let sym = self.symbols();
        let mut at = 0;
        (0..self.occupancy())
            .map(|_| {
                let (a, _, next) = sym.read_string(&self.buf, at).expect("body string");
                at = next;
                a
            })
            .collect()
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let occ = check_header(&self.buf, self.big_m, self.header_len())?;
        let sym = self.symbols();
        let end = sym
            .find_after(&self.buf, 0, EOS, occ)
            .ok_or("fewer strings than header entries")?;
        if sym.count(&self.buf, 0, end, crate::symbols::FRAME) != 0 {
            return Err("frame separator inside a bin body".into());
        }
        if end - occ > self.big_l {
            return Err("payload exceeds L".into());
        }
        let tail = sym.bit(end);
        if !self.buf.is_zero(tail, self.buf.bit_capacity() - tail).unwrap() {
            return Err("unused body is not zero".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> PocketDict {
        let m = AccessMeter::new(64);
        let mut pd = PocketDict::new(5, 8, 6);
        for (q, r) in [
            (4, 0b000111),
            (0, 0b011111),
            (3, 0b011111),
            (0, 0b001011),
            (1, 0b101111),
            (0, 0b100100),
            (4, 0b000111),
            (3, 0b001010),
        ] {
            pd.insert(q, r, &m).unwrap();
        }
        pd
    }

    #[test]
    fn figure_one_encoding() {
        let pd = fig1();
        assert_eq!(pd.image().to_bit_string(0, 13), "1110100110110");
        let body: Vec<String> = (0..8).map(|i| format!("{:06b}", pd.slot(i))).collect();
        assert_eq!(
            body,
            ["001011", "011111", "100100", "101111", "001010", "011111", "000111", "000111"]
        );
        assert_eq!(pd.total_bits(), 5 + 8 * 7);
    }

    #[test]
    fn single_insert_encoding() {
        let m = AccessMeter::new(64);
        let mut pd = PocketDict::new(5, 8, 6);
        pd.insert(4, 0b000111, &m).unwrap();
        assert_eq!(pd.image().to_bit_string(0, 13), "0000100000000");
        assert_eq!(pd.slot(0), 0b000111);
    }

    #[test]
    fn overflow_and_queries() {
        let m = AccessMeter::new(64);
        let mut pd = fig1();
        let before = pd.clone();
        assert_eq!(pd.insert(2, 1, &m), Err(Error::Overflow(Component::PocketDict)));
        assert_eq!(pd, before);
        assert_eq!(pd.query(4, 0b000111, &m), 2);
        assert_eq!(pd.query(2, 0, &m), 0);
        assert_eq!(PocketDict::new(5, 8, 6).query(3, 5, &m), 0);
        assert_eq!(pd.range(3, &m), (4, 6));
        assert_eq!(pd.range(2, &m), (4, 4));
        assert_eq!(PocketDict::new(5, 8, 6).range(2, &m), (0, 0));
        assert_eq!(pd.rank(3, 0b001010, &m), Some(4));
        assert_eq!(pd.rank(0, 0b001011, &m), Some(0));
        assert_eq!(pd.rank(2, 0b001011, &m), None);
    }

    #[test]
    fn delete_examples() {
        let m = AccessMeter::new(64);
        let mut pd = fig1();
        let orig = pd.clone();
        pd.delete(4, 0b000111, &m).unwrap();
        assert_eq!(pd.query(4, 0b000111, &m), 1);
        pd.insert(4, 0b000111, &m).unwrap();
        assert_eq!(pd, orig);
        assert_eq!(pd.delete(2, 0b111111, &m), Err(Error::NotFound));
        pd.check().unwrap();
    }

    #[test]
    fn var_bin_examples() {
        let m = AccessMeter::new(64);
        let mut v = VarPocketDict::new(4, 8, 4, 10);
        assert_eq!(v.total_bits(), 8 + 4 + 2 * 14);
        assert!(v.total_bits() <= v.size_bound());
        v.insert(0, 1, &BitStr::parse("01"), 0, &m).unwrap();
        assert_eq!(v.read_group(0, 1, &m), vec![BitStr::parse("01")]);
        v.insert(1, 2, &BitStr::parse("00"), 0, &m).unwrap();
        v.insert(1, 2, &BitStr::parse("01"), 1, &m).unwrap();
        v.replace(1, 2, 0, &BitStr::parse("001"), &m).unwrap();
        assert_eq!(
            v.read_group(1, 2, &m),
            vec![BitStr::parse("001"), BitStr::parse("01")]
        );
        v.insert(0, 0, &BitStr::EMPTY, 0, &m).unwrap();
        assert_eq!(v.read_group(0, 0, &m), vec![BitStr::EMPTY]);
        assert_eq!(v.occupancy(), 4);
        assert_eq!(v.payload_bits(), 7);
        assert_eq!(
            v.insert(0, 3, &BitStr::EMPTY, 0, &m),
            Err(Error::Overflow(Component::VarPocketDict))
        );
        assert_eq!(v.delete(1, 2, 0, &m).unwrap(), BitStr::parse("001"));
        assert_eq!(v.read_group(1, 2, &m), vec![BitStr::parse("01")]);
        v.check().unwrap();
    }

    #[test]
    fn var_bin_length_overflow() {
        let m = AccessMeter::new(64);
        let mut v = VarPocketDict::new(2, 2, 4, 3);
        v.insert(0, 0, &BitStr::parse("11"), 0, &m).unwrap();
        let before = v.clone();
        assert_eq!(
            v.insert(0, 1, &BitStr::parse("00"), 0, &m),
            Err(Error::Overflow(Component::VarPocketDict))
        );
        assert_eq!(v, before);
    }
}
