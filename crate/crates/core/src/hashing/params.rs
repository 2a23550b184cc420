use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper clamp on the extra-capacity factor.
pub const MU_MAX: f64 = 1.0;
/// Minimum quotient range per bin for which the dense layout is used.
pub const M_MIN: usize = 4;
/// Every component must fit in this many virtual words.
pub const MAX_COMPONENT_BLOCKS: usize = 64;

const DEFAULT_DELTA: f64 = 0.1;
const DEFAULT_C: usize = 4;
const DEFAULT_VAR_L_FACTOR: usize = 6;

/// `ceil(log2 k)`, with `bits_for(0) = bits_for(1) = 0`.
pub fn bits_for(k: u128) -> usize {
    if k <= 1 {
        0
    } else {
        128 - (k - 1).leading_zeros() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Dense,
    Sparse,
}

/// Pins for individual derived parameters. Unset fields use the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub mu: Option<f64>,
    pub m: Option<usize>,
    pub f: Option<usize>,
    pub delta: Option<f64>,
    pub crate_size: Option<u64>,
    pub f_tilde: Option<usize>,
    pub c: Option<usize>,
    pub f_hat: Option<usize>,
    pub super_interval: Option<usize>,
    pub var_f: Option<usize>,
    pub var_l: Option<usize>,
    pub vcsd_f: Option<usize>,
    pub vcsd_l: Option<usize>,
}

impl Overrides {
    /// Applies a `key=value` pin as accepted on the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("cannot parse {key}={value}"));
        let us = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match key {
            "mode" => {
                self.mode = Some(match value {
                    "dense" => Mode::Dense,
                    "sparse" => Mode::Sparse,
                    _ => return Err(Error::Config(format!("unknown mode {value}"))),
                })
            }
            "mu" => self.mu = Some(value.parse().map_err(|_| bad())?),
            "delta" => self.delta = Some(value.parse().map_err(|_| bad())?),
            "m" => self.m = Some(us(value)?),
            "f" => self.f = Some(us(value)?),
            "crate_size" | "C" => self.crate_size = Some(value.parse().map_err(|_| bad())?),
            "f_tilde" => self.f_tilde = Some(us(value)?),
            "c" => self.c = Some(us(value)?),
            "f_hat" => self.f_hat = Some(us(value)?),
            "super_interval" => self.super_interval = Some(us(value)?),
            "var_f" => self.var_f = Some(us(value)?),
            "var_l" => self.var_l = Some(us(value)?),
            "vcsd_f" => self.vcsd_f = Some(us(value)?),
            "vcsd_l" => self.vcsd_l = Some(us(value)?),
            _ => return Err(Error::Config(format!("unknown parameter {key}"))),
        }
        Ok(())
    }
}

/// All derived sizes of a crate dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u64,
    pub rho: f64,
    pub w_eff: usize,
    pub mode: Mode,
    pub universe_size: u128,
    pub ceil_rho: u128,
    pub ceil_rho_m: u128,
    pub ceil_rho_c: u128,
    /// Remainder length in bits.
    pub ell: usize,
    /// Width of one bin slot: the remainder (dense) or a motel pointer (sparse).
    pub slot_bits: usize,
    pub m: usize,
    pub mu: f64,
    pub f: usize,
    pub delta: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub crate_size: u64,
    pub crates: usize,
    pub pds_per_crate: usize,
    pub c: usize,
    pub f_tilde: usize,
    pub ell_tilde: usize,
    pub f_hat: usize,
    pub ell_hat: usize,
    pub c_hat: usize,
    pub hb_bits: usize,
    pub q_bits: usize,
    /// Width of the value field of a spare record.
    pub value_bits: usize,
    /// Width of list pointers and list heads (null is `f_tilde`).
    pub link_bits: usize,
    pub counter_bits: usize,
    pub super_interval: usize,
    pub var_m: usize,
    pub var_f: usize,
    pub var_l: usize,
    pub varpds_per_crate: usize,
    pub vcsd_frames: usize,
    pub vcsd_f: usize,
    pub vcsd_l: usize,
    pub vcsds_per_crate: usize,
}

fn ceil_mul(rho: f64, k: u128) -> u128 {
    if rho.fract() == 0.0 && rho < 1.0e38 {
        (rho as u128) * k
    } else {
        (rho * k as f64).ceil() as u128
    }
}

/// `sqrt(ln(w) * log2(rho) / w)` clamped to `MU_MAX`.
pub fn default_mu(w_eff: usize, log2_rho: f64) -> f64 {
    let w = w_eff as f64;
    (w.ln() * log2_rho / w).sqrt().min(MU_MAX)
}

impl Params {
    /// Derives every size from `(n, rho, w_eff)` and the pins in `o`.
    pub fn derive(n: u64, rho: f64, w_eff: usize, o: &Overrides) -> Result<Params> {
        if n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(rho >= 2.0) || !rho.is_finite() {
            return Err(Error::Config(format!("rho = {rho} must be at least 2")));
        }
        if w_eff < 64 || w_eff % 64 != 0 {
            return Err(Error::Config(format!(
                "w_eff = {w_eff} must be a positive multiple of 64"
            )));
        }
        let ceil_rho = ceil_mul(rho, 1);
        let ell = bits_for(ceil_rho);
        let universe_size = ceil_mul(rho, n as u128);
        if ell > 127 || universe_size > (1u128 << 127) {
            return Err(Error::Config("universe must fit in 127 bits".into()));
        }
        let mode = o.mode.unwrap_or(if w_eff / ell >= M_MIN {
            Mode::Dense
        } else {
            Mode::Sparse
        });
        // Sparse bins hold motel pointers; their relative sparseness is w.
        let (budget_bits, log2_rho_bin) = match mode {
            Mode::Dense => (ell, rho.log2()),
            Mode::Sparse => (bits_for(w_eff as u128), (w_eff as f64).log2()),
        };
        let m = o.m.unwrap_or(w_eff / budget_bits.max(1));
        if m < 1 {
            return Err(Error::Config("quotient range m is zero".into()));
        }
        let mu = o.mu.unwrap_or_else(|| default_mu(w_eff, log2_rho_bin));
        let f = o
            .f
            .unwrap_or(((1.0 + mu) * m as f64 - 1e-9).ceil() as usize)
            .max(1);
        if f < m {
            return Err(Error::Config(format!("capacity f = {f} below m = {m}")));
        }
        let slot_bits = match mode {
            Mode::Dense => ell,
            Mode::Sparse => bits_for(f as u128).max(1),
        };

        let delta = o.delta.unwrap_or(DEFAULT_DELTA);
        let beta = 6.0 + delta;
        let beta_prime = 5.0 + 0.75 * delta;
        let crate_cap = (w_eff as f64).powf(beta);
        let crate_size = o
            .crate_size
            .unwrap_or(if crate_cap >= n as f64 {
                n
            } else {
                crate_cap as u64
            })
            .clamp(1, n);
        let ceil_rho_m = ceil_mul(rho, m as u128);
        let ceil_rho_c = ceil_mul(rho, crate_size as u128);
        let crates = universe_size.div_ceil(ceil_rho_c) as usize;
        let pds_per_crate = ceil_rho_c.div_ceil(ceil_rho_m) as usize;

        let c = o.c.unwrap_or(DEFAULT_C).max(1);
        let f_tilde = o
            .f_tilde
            .unwrap_or((4 * w_eff).max((0.05 * crate_size as f64).ceil() as usize))
            .max(1);
        let c_hat = f_tilde;
        let hb_bits = bits_for(pds_per_crate as u128);
        let q_bits = bits_for(m as u128);
        let link_bits = bits_for(f_tilde as u128 + 1);
        let counter_bits = bits_for(c_hat as u128);

        // A sparse record's value is a pointer into its CSD's motel, whose
        // width depends on the CSD capacity; iterate to the fixed point.
        let mut value_bits = match mode {
            Mode::Dense => ell,
            Mode::Sparse => bits_for(w_eff as u128),
        };
        let mut f_hat;
        let mut rounds = 0;
        loop {
            let ell_hat = hb_bits + q_bits + value_bits + 2 * link_bits;
            f_hat = o.f_hat.unwrap_or((c * w_eff / ell_hat).max(1));
            let next = match mode {
                Mode::Dense => ell,
                Mode::Sparse => bits_for(f_hat as u128),
            };
            rounds += 1;
            if next == value_bits || rounds > 8 {
                value_bits = value_bits.max(next);
                break;
            }
            value_bits = next;
        }
        // The loop can oscillate between two widths; the pointer width the
        // final capacity needs is the canonical choice.
        if mode == Mode::Sparse {
            value_bits = bits_for(f_hat as u128).max(1);
        }
        let ell_tilde = hb_bits + q_bits + value_bits;
        let ell_hat = ell_tilde + 2 * link_bits;
        if ell_tilde > 128 {
            return Err(Error::Config(format!(
                "spare key of {ell_tilde} bits exceeds 128"
            )));
        }

        let super_interval = o
            .super_interval
            .unwrap_or(bits_for(w_eff as u128))
            .max(1);
        let var_m = super_interval * m;
        let var_f = o
            .var_f
            .unwrap_or(((1.0 + mu) * var_m as f64 - 1e-9).ceil() as usize);
        let var_l = o.var_l.unwrap_or(DEFAULT_VAR_L_FACTOR * var_f);
        let varpds_per_crate = pds_per_crate.div_ceil(super_interval);
        let vcsd_frames = ell_hat.div_ceil(c);
        let vcsd_f = o.vcsd_f.unwrap_or(w_eff);
        let vcsd_l = o.vcsd_l.unwrap_or(DEFAULT_VAR_L_FACTOR * vcsd_f);
        let vcsds_per_crate = f_tilde.div_ceil(vcsd_frames);

        let p = Params {
            n,
            rho,
            w_eff,
            mode,
            universe_size,
            ceil_rho,
            ceil_rho_m,
            ceil_rho_c,
            ell,
            slot_bits,
            m,
            mu,
            f,
            delta,
            beta,
            beta_prime,
            crate_size,
            crates,
            pds_per_crate,
            c,
            f_tilde,
            ell_tilde,
            f_hat,
            ell_hat,
            c_hat,
            hb_bits,
            q_bits,
            value_bits,
            link_bits,
            counter_bits,
            super_interval,
            var_m,
            var_f,
            var_l,
            varpds_per_crate,
            vcsd_frames,
            vcsd_f,
            vcsd_l,
            vcsds_per_crate,
        };
        p.check_budgets()?;
        Ok(p)
    }

    fn check_budgets(&self) -> Result<()> {
        let limit = MAX_COMPONENT_BLOCKS * self.w_eff;
        let mut parts = vec![
            ("pocket dictionary", self.pd_bits()),
            ("counting set dictionary", self.csd_bits()),
        ];
        if self.mode == Mode::Sparse {
            parts.push(("bin motel", self.pd_motel_bits()));
            parts.push(("spare motel", self.csd_motel_bits()));
            parts.push(("variable-length bin", self.varpd_bits()));
            parts.push(("variable-length spare", self.vcsd_bits()));
            if self.ell < bits_for(self.f.max(self.f_hat) as u128) {
                return Err(Error::Config(
                    "remainder too short to hold motel free-list links".into(),
                ));
            }
        }
        for (name, bits) in parts {
            if bits > limit {
                return Err(Error::Config(format!(
                    "{name} needs {bits} bits, over the {MAX_COMPONENT_BLOCKS}-block budget"
                )));
            }
        }
        Ok(())
    }

    /// Header plus body of one bin: `m + f(1 + slot_bits)`.
    pub fn pd_bits(&self) -> usize {
        self.m + self.f * (1 + self.slot_bits)
    }

    /// One CSD: `f_hat (ell_hat + ceil(log2 c_hat) + 1)`.
    pub fn csd_bits(&self) -> usize {
        self.f_hat * (self.ell_hat + self.counter_bits + 1)
    }

    pub fn heads_bits(&self) -> usize {
        self.pds_per_crate * self.link_bits
    }

    /// One motel with `k` slots of `ell` bits.
    pub fn motel_bits_for(&self, k: usize) -> usize {
        k * (1 + self.ell) + bits_for(k as u128)
    }

    pub fn pd_motel_bits(&self) -> usize {
        self.motel_bits_for(self.f)
    }

    pub fn csd_motel_bits(&self) -> usize {
        self.motel_bits_for(self.f_hat)
    }

    /// One variable-length bin: `M + 3F + 2L`.
    pub fn varpd_bits(&self) -> usize {
        self.var_m + 3 * self.var_f + 2 * self.var_l
    }

    /// One variable-length spare block: `2 (F + L + frames)`.
    pub fn vcsd_bits(&self) -> usize {
        2 * (self.vcsd_f + self.vcsd_l + self.vcsd_frames)
    }

    pub fn sid_bits(&self) -> usize {
        let mut b = self.f_tilde * self.csd_bits() + self.heads_bits();
        if self.mode == Mode::Sparse {
            b += self.f_tilde * self.csd_motel_bits() + self.vcsds_per_crate * self.vcsd_bits();
        }
        b
    }

    /// Bits of one crate's bin array including, in sparse mode, motels and
    /// variable-length bins.
    pub fn bin_array_bits(&self) -> usize {
        let mut b = self.pds_per_crate * self.pd_bits();
        if self.mode == Mode::Sparse {
            b += self.pds_per_crate * self.pd_motel_bits() + self.varpds_per_crate * self.varpd_bits();
        }
        b
    }

    /// Closed-form allocation of the whole dictionary.
    pub fn total_bits(&self) -> usize {
        self.crates * (self.bin_array_bits() + self.sid_bits())
    }
}
