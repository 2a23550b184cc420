//! Two-bit symbol streams: `00` bit 0, `01` bit 1, `10` end of string,
//! `11` frame separator.

use crate::bits::{BitBuffer, BitStr};
use crate::error::{Error, Result};

pub const EOS: u8 = 0b10;
pub const FRAME: u8 = 0b11;

const HI: u64 = 0xAAAA_AAAA_AAAA_AAAA;

/// Spreads the low 32 bits of `x` so bit `i` lands at bit `2i`.
#[inline]
fn spread(x: u64) -> u64 {
    let mut x = x & 0xFFFF_FFFF;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    (x | (x << 1)) & 0x5555_5555_5555_5555
}

/// A window of `cap` symbols starting at bit `base` of some buffer.
#[derive(Clone, Copy, Debug)]
pub struct Symbols {
    pub base: usize,
    pub cap: usize,
}

impl Symbols {
    pub fn new(base: usize, cap: usize) -> Self {
        Symbols { base, cap }
    }

    /// Bit offset of symbol `i`.
    #[inline]
    pub fn bit(&self, i: usize) -> usize {
        self.base + 2 * i
    }

    /// Up to 32 symbols starting at `at`, left-aligned, with their count.
    #[inline]
    fn chunk(&self, buf: &BitBuffer, at: usize) -> (u64, usize) {
        let n = (self.cap - at).min(32);
        let v = buf.read_bits(self.bit(at), 2 * n).expect("symbol window") as u64;
        (if n == 0 { 0 } else { v << (64 - 2 * n) }, n)
    }

    #[inline]
    fn kind_mask(c: u64, n: usize, kind: u8) -> u64 {
        let lo = c << 1;
        let m = match kind {
            EOS => c & HI & !lo,
            FRAME => c & HI & lo,
            0b01 => !c & HI & lo,
            _ => !c & HI & !lo,
        };
        if n == 32 {
            m
        } else {
            m & !(u64::MAX >> (2 * n))
        }
    }

    pub fn get(&self, buf: &BitBuffer, i: usize) -> u8 {
        buf.read_bits(self.bit(i), 2).expect("symbol index") as u8
    }

    /// Index just past the `count`-th symbol equal to `kind`, scanning from
    /// `from`. With `count == 0` this is `from`.
    pub fn find_after(&self, buf: &BitBuffer, from: usize, kind: u8, count: usize) -> Option<usize> {
        if count == 0 {
            return Some(from);
        }
        let mut remaining = count;
        let mut at = from;
        while at < self.cap {
            let (c, n) = self.chunk(buf, at);
            let m = Self::kind_mask(c, n, kind);
            let k = m.count_ones() as usize;
            if remaining <= k {
                let mut x = m.reverse_bits();
                for _ in 0..remaining - 1 {
                    x &= x - 1;
                }
                return Some(at + x.trailing_zeros() as usize / 2 + 1);
            }
            remaining -= k;
            at += n;
        }
        None
    }

    /// Number of symbols equal to `kind` in `[from, to)`.
    pub fn count(&self, buf: &BitBuffer, from: usize, to: usize, kind: u8) -> usize {
        let mut total = 0;
        let mut at = from;
        while at < to {
            let (c, n) = self.chunk(buf, at);
            let n = n.min(to - at);
            total += Self::kind_mask(c, n, kind).count_ones() as usize;
            at += n;
        }
        total
    }

    /// Decodes the bit symbols at `at` up to the next separator. Returns the
    /// string, the separator, and the index past the separator.
    pub fn read_string(&self, buf: &BitBuffer, at: usize) -> Result<(BitStr, u8, usize)> {
        let mut bits: u128 = 0;
        let mut len = 0usize;
        let mut pos = at;
        while pos < self.cap {
            let (c, n) = self.chunk(buf, pos);
            for j in 0..n {
                let s = ((c >> (62 - 2 * j)) & 3) as u8;
                if s & 0b10 != 0 {
                    return Ok((BitStr::new(bits, len), s, pos + j + 1));
                }
                if len == 128 {
                    return Err(Error::Format("symbol string longer than 128 bits".into()));
                }
                bits = (bits << 1) | (s & 1) as u128;
                len += 1;
            }
            pos += n;
        }
        Err(Error::Format("unterminated symbol string".into()))
    }

    /// Writes `alpha` followed by `term` at `at`, overwriting.
    pub fn write_string(&self, buf: &mut BitBuffer, at: usize, alpha: &BitStr, term: u8) -> Result<()> {
        let mut done = 0;
        while done < alpha.len() {
            let take = (alpha.len() - done).min(32);
            let chunk = alpha.prefix(done + take).value() & ((1u128 << take) - 1);
            let sym = spread(chunk as u64) & if take == 32 { u64::MAX } else { (1u64 << (2 * take)) - 1 };
            buf.write_bits(self.bit(at + done), 2 * take, sym as u128)?;
            done += take;
        }
        buf.write_bits(self.bit(at + alpha.len()), 2, term as u128)
    }

    /// Inserts `alpha` + `term` at `at`, shifting later symbols right.
    pub fn insert_string(&self, buf: &mut BitBuffer, at: usize, alpha: &BitStr, term: u8) -> Result<()> {
        let len = 2 * (alpha.len() + 1);
        buf.open_gap(self.base, self.bit(self.cap), self.bit(at), len)?;
        self.write_string(buf, at, alpha, term)
    }

    /// Removes the string at `at` together with its separator.
    pub fn remove_string(&self, buf: &mut BitBuffer, at: usize) -> Result<BitStr> {
        let (alpha, _, next) = self.read_string(buf, at)?;
        buf.close_gap(self.base, self.bit(self.cap), self.bit(at), 2 * (next - at))?;
        Ok(alpha)
    }
}
