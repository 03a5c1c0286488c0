//! Bit-exact simulated signed fixed-point arithmetic.
//!
//! Values are two's-complement integers `raw` scaled by `2^-fl`. Every
//! conversion that can lose range goes through one choke point
//! ([`OverflowPolicy`]), so a run in strict mode that finishes without an
//! error never left the representable range. Products are accumulated in
//! `i128` and cast once, which is the error model the solver bounds assume.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by fixed-point operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FxError {
    #[error("invalid format wl={wl}, fl={fl} (need 2 <= wl <= {max}, fl <= wl - 1)", max = FxFormat::MAX_WL)]
    InvalidFormat { wl: u32, fl: u32 },
    #[error("overflow: {value} does not fit {tag}")]
    Overflow { value: f64, tag: String },
    #[error("format mismatch: {left} vs {right}")]
    FormatMismatch { left: String, right: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("accumulator needs {needed} bits, only 127 available")]
    AccumulatorTooNarrow { needed: u32 },
    #[error("box bound lo > hi at coordinate {0}")]
    InvertedBox(usize),
}

/// Signed Q-format: `wl` total bits, `fl` fraction bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxFormat {
    wl: u32,
    fl: u32,
}

impl FxFormat {
    /// Raw integers live in `i64`; products of two raws plus the
    /// dimension growth must fit the `i128` accumulator.
    pub const MAX_WL: u32 = 62;

    pub fn new(wl: u32, fl: u32) -> Result<Self, FxError> {
        if !(2..=Self::MAX_WL).contains(&wl) || fl > wl - 1 {
            return Err(FxError::InvalidFormat { wl, fl });
        }
        Ok(Self { wl, fl })
    }

    pub fn wl(&self) -> u32 {
        self.wl
    }

    pub fn fl(&self) -> u32 {
        self.fl
    }

    /// Integer bits excluding the sign bit.
    pub fn int_bits(&self) -> u32 {
        self.wl - self.fl - 1
    }

    pub fn raw_min(&self) -> i64 {
        -(1i64 << (self.wl - 1))
    }

    pub fn raw_max(&self) -> i64 {
        (1i64 << (self.wl - 1)) - 1
    }

    /// Quantization step `2^-fl`.
    pub fn lsb(&self) -> f64 {
        (-(self.fl as f64)).exp2()
    }

    pub fn min_real(&self) -> f64 {
        self.raw_min() as f64 * self.lsb()
    }

    pub fn max_real(&self) -> f64 {
        self.raw_max() as f64 * self.lsb()
    }

    /// True when `x` lies inside the representable interval.
    pub fn in_range(&self, x: f64) -> bool {
        x >= self.min_real() && x <= self.max_real()
    }

    /// True when `x` is a grid point of this format and in range.
    pub fn is_exact(&self, x: f64) -> bool {
        if !x.is_finite() || !self.in_range(x) {
            return false;
        }
        let scaled = x * (self.fl as f64).exp2();
        scaled == scaled.trunc()
    }

    /// `Q<int>.<frac>` tag used in dumps.
    pub fn tag(&self) -> String {
        format!("Q{}.{}", self.int_bits(), self.fl)
    }

    fn check_same(&self, other: &FxFormat) -> Result<(), FxError> {
        if self != other {
            return Err(FxError::FormatMismatch {
                left: self.tag(),
                right: other.tag(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// What to do when a result leaves the representable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Signal [`FxError::Overflow`]; never alters a value.
    #[default]
    Strict,
    /// Clamp to the nearest range endpoint and count the event.
    Saturate,
}

/// Running record of range usage across a sequence of operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverflowAudit {
    /// Number of stored results (casts, sums) checked.
    pub checked: u64,
    /// Results clamped in saturate mode.
    pub saturations: u64,
    /// Largest `|raw|` of any stored result (after clamping).
    pub peak_raw: u64,
}

impl OverflowAudit {
    fn note(&mut self, raw: i64) {
        self.checked += 1;
        self.peak_raw = self.peak_raw.max(raw.unsigned_abs());
    }

    /// Spare integer bits between the peak magnitude and the format limit.
    pub fn headroom_bits(&self, fmt: FxFormat) -> f64 {
        if self.peak_raw == 0 {
            return (fmt.wl() - 1) as f64;
        }
        (fmt.raw_max() as f64 / self.peak_raw as f64).log2()
    }

    pub fn merge(&mut self, other: &OverflowAudit) {
        self.checked += other.checked;
        self.saturations += other.saturations;
        self.peak_raw = self.peak_raw.max(other.peak_raw);
    }
}

/// Store a wide intermediate into `fmt` under `policy`.
fn fit(
    wide: i128,
    fmt: FxFormat,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<i64, FxError> {
    let (lo, hi) = (fmt.raw_min() as i128, fmt.raw_max() as i128);
    let raw = if wide < lo || wide > hi {
        match policy {
            OverflowPolicy::Strict => {
                return Err(FxError::Overflow {
                    value: wide as f64 * fmt.lsb(),
                    tag: fmt.tag(),
                })
            }
            OverflowPolicy::Saturate => {
                audit.saturations += 1;
                wide.clamp(lo, hi) as i64
            }
        }
    } else {
        wide as i64
    };
    audit.note(raw);
    Ok(raw)
}

/// Arithmetic shift right by `shift` bits with round-half-to-even.
fn round_shift(acc: i128, shift: u32) -> i128 {
    if shift == 0 {
        return acc;
    }
    let q = acc >> shift;
    let rem = acc - (q << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

/// A single fixed-point number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxValue {
    raw: i64,
    fmt: FxFormat,
}

impl FxValue {
    pub fn from_raw(raw: i64, fmt: FxFormat) -> Result<Self, FxError> {
        if raw < fmt.raw_min() || raw > fmt.raw_max() {
            return Err(FxError::Overflow {
                value: raw as f64 * fmt.lsb(),
                tag: fmt.tag(),
            });
        }
        Ok(Self { raw, fmt })
    }

    pub fn zero(fmt: FxFormat) -> Self {
        Self { raw: 0, fmt }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn fmt(&self) -> FxFormat {
        self.fmt
    }

    pub fn to_real(&self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }
}

/// Dump line: two's-complement hex of width `wl`, real value, Q tag.
impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wl = self.fmt.wl();
        let mask = if wl == 64 { u64::MAX } else { (1u64 << wl) - 1 };
        let digits = wl.div_ceil(4) as usize;
        write!(
            f,
            "0x{:0digits$X} {} {}",
            (self.raw as u64) & mask,
            self.to_real(),
            self.fmt.tag()
        )
    }
}

/// Raw integer nearest to `x · 2^fl`, ties to even; `None` if beyond `i128`.
fn scaled_round(x: f64, fmt: FxFormat) -> Result<Option<i128>, FxError> {
    if !x.is_finite() {
        return Err(FxError::NonFinite(x));
    }
    let r = (x * (fmt.fl() as f64).exp2()).round_ties_even();
    if r.abs() >= 1e36 {
        return Ok(None);
    }
    Ok(Some(r as i128))
}

/// Round `x` to the nearest grid point of `fmt`.
pub fn quantize(
    x: f64,
    fmt: FxFormat,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<FxValue, FxError> {
    let wide = match scaled_round(x, fmt)? {
        Some(w) => w,
        None => {
            if x > 0.0 {
                i128::MAX
            } else {
                i128::MIN
            }
        }
    };
    let raw = fit(wide, fmt, policy, audit)?;
    Ok(FxValue { raw, fmt })
}

pub fn fx_add(
    a: FxValue,
    b: FxValue,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<FxValue, FxError> {
    a.fmt.check_same(&b.fmt)?;
    let raw = fit(a.raw as i128 + b.raw as i128, a.fmt, policy, audit)?;
    Ok(FxValue { raw, fmt: a.fmt })
}

pub fn fx_sub(
    a: FxValue,
    b: FxValue,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<FxValue, FxError> {
    a.fmt.check_same(&b.fmt)?;
    let raw = fit(a.raw as i128 - b.raw as i128, a.fmt, policy, audit)?;
    Ok(FxValue { raw, fmt: a.fmt })
}

/// Homogeneous fixed-point vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FxVector {
    fmt: FxFormat,
    raw: Vec<i64>,
}

impl FxVector {
    pub fn zeros(n: usize, fmt: FxFormat) -> Self {
        Self {
            fmt,
            raw: vec![0; n],
        }
    }

    pub fn from_raw(raw: Vec<i64>, fmt: FxFormat) -> Result<Self, FxError> {
        for &r in &raw {
            FxValue::from_raw(r, fmt)?;
        }
        Ok(Self { fmt, raw })
    }

    pub fn quantize(
        xs: &[f64],
        fmt: FxFormat,
        policy: OverflowPolicy,
        audit: &mut OverflowAudit,
    ) -> Result<Self, FxError> {
        let raw = xs
            .iter()
            .map(|&x| quantize(x, fmt, policy, audit).map(|v| v.raw))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { fmt, raw })
    }

    pub fn fmt(&self) -> FxFormat {
        self.fmt
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[i64] {
        &self.raw
    }

    pub fn get(&self, i: usize) -> FxValue {
        FxValue {
            raw: self.raw[i],
            fmt: self.fmt,
        }
    }

    pub fn to_real(&self) -> Vec<f64> {
        let lsb = self.fmt.lsb();
        self.raw.iter().map(|&r| r as f64 * lsb).collect()
    }

    pub fn inf_norm(&self) -> f64 {
        self.raw.iter().map(|r| r.unsigned_abs()).max().unwrap_or(0) as f64 * self.fmt.lsb()
    }

    fn check_compat(&self, other: &FxVector) -> Result<(), FxError> {
        self.fmt.check_same(&other.fmt)?;
        if self.len() != other.len() {
            return Err(FxError::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &FxVector,
        policy: OverflowPolicy,
        audit: &mut OverflowAudit,
        op: impl Fn(i128, i128) -> i128,
    ) -> Result<FxVector, FxError> {
        self.check_compat(other)?;
        let raw = self
            .raw
            .iter()
            .zip(&other.raw)
            .map(|(&a, &b)| fit(op(a as i128, b as i128), self.fmt, policy, audit))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FxVector { fmt: self.fmt, raw })
    }

    pub fn add(
        &self,
        other: &FxVector,
        policy: OverflowPolicy,
        audit: &mut OverflowAudit,
    ) -> Result<FxVector, FxError> {
        self.zip_with(other, policy, audit, |a, b| a + b)
    }

    pub fn sub(
        &self,
        other: &FxVector,
        policy: OverflowPolicy,
        audit: &mut OverflowAudit,
    ) -> Result<FxVector, FxError> {
        self.zip_with(other, policy, audit, |a, b| a - b)
    }
}

/// Row-major homogeneous fixed-point matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FxMatrix {
    fmt: FxFormat,
    rows: usize,
    cols: usize,
    raw: Vec<i64>,
}

impl FxMatrix {
    /// Quantize a row-major real matrix given as `rows × cols` entries.
    pub fn quantize(
        rows: usize,
        cols: usize,
        entries: &[f64],
        fmt: FxFormat,
        policy: OverflowPolicy,
        audit: &mut OverflowAudit,
    ) -> Result<Self, FxError> {
        if entries.len() != rows * cols {
            return Err(FxError::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let v = FxVector::quantize(entries, fmt, policy, audit)?;
        Ok(Self {
            fmt,
            rows,
            cols,
            raw: v.raw,
        })
    }

    pub fn identity(n: usize, fmt: FxFormat) -> Result<Self, FxError> {
        if fmt.int_bits() == 0 {
            return Err(FxError::Overflow {
                value: 1.0,
                tag: fmt.tag(),
            });
        }
        let one = 1i64 << fmt.fl();
        let mut raw = vec![0; n * n];
        for i in 0..n {
            raw[i * n + i] = one;
        }
        Ok(Self {
            fmt,
            rows: n,
            cols: n,
            raw,
        })
    }

    pub fn fmt(&self) -> FxFormat {
        self.fmt
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn raw(&self) -> &[i64] {
        &self.raw
    }

    /// Real entries, row-major.
    pub fn to_real(&self) -> Vec<f64> {
        let lsb = self.fmt.lsb();
        self.raw.iter().map(|&r| r as f64 * lsb).collect()
    }

    /// Induced infinity norm (max absolute row sum) of the real values.
    pub fn inf_norm(&self) -> f64 {
        if self.cols == 0 {
            return 0.0;
        }
        self.raw
            .chunks(self.cols)
            .map(|row| row.iter().map(|r| r.unsigned_abs() as u128).sum::<u128>())
            .max()
            .unwrap_or(0) as f64
            * self.fmt.lsb()
    }
}

/// `fi(M v)`: exact wide dot products, one rounding cast per output.
pub fn fx_matvec(
    m: &FxMatrix,
    v: &FxVector,
    out_fmt: FxFormat,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<FxVector, FxError> {
    m.fmt.check_same(&v.fmt)?;
    if m.cols != v.len() {
        return Err(FxError::DimensionMismatch {
            expected: m.cols,
            got: v.len(),
        });
    }
    let growth = (m.cols.max(1) as u64).next_power_of_two().trailing_zeros();
    let needed = 2 * m.fmt.wl() + growth;
    if needed > 127 {
        return Err(FxError::AccumulatorTooNarrow { needed });
    }
    let prod_fl = 2 * m.fmt.fl();
    let out_fl = out_fmt.fl();
    let mut raw = Vec::with_capacity(m.rows);
    for row in m.raw.chunks(m.cols.max(1)).take(m.rows) {
        let acc: i128 = row
            .iter()
            .zip(&v.raw)
            .map(|(&a, &b)| a as i128 * b as i128)
            .sum();
        let wide = if prod_fl >= out_fl {
            round_shift(acc, prod_fl - out_fl)
        } else {
            acc.checked_shl(out_fl - prod_fl)
                .filter(|w| w >> (out_fl - prod_fl) == acc)
                .unwrap_or(if acc > 0 { i128::MAX } else { i128::MIN })
        };
        raw.push(fit(wide, out_fmt, policy, audit)?);
    }
    if m.cols == 0 {
        raw = vec![0; m.rows];
    }
    Ok(FxVector { fmt: out_fmt, raw })
}

/// Coordinatewise clamp onto `[lo, hi]`; exact, cannot overflow.
pub fn fx_project_box(v: &FxVector, lo: &FxVector, hi: &FxVector) -> Result<FxVector, FxError> {
    v.check_compat(lo)?;
    v.check_compat(hi)?;
    let raw = v
        .raw
        .iter()
        .zip(lo.raw.iter().zip(&hi.raw))
        .enumerate()
        .map(|(i, (&x, (&l, &h)))| {
            if l > h {
                Err(FxError::InvertedBox(i))
            } else {
                Ok(x.clamp(l, h))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FxVector { fmt: v.fmt, raw })
}

/// Worst-case rounding errors for a format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    /// `|β − fi(β)|`
    pub scalar: f64,
    /// `‖v − fi(v)‖` for `v ∈ R^n`
    pub vector: f64,
    /// `‖Mv − fi(Mv)‖` for `M ∈ R^{m×n}`
    pub matvec: f64,
}

pub fn error_bounds(fmt: FxFormat, n: usize, m: usize) -> ErrorBounds {
    let half = (-(fmt.fl() as f64 + 1.0)).exp2();
    ErrorBounds {
        scalar: half,
        vector: (n as f64).sqrt() * half,
        matvec: (m as f64).sqrt() * n as f64 * half,
    }
}
