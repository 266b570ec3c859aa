//! Arithmetic in `Z_{2^k}` for `k ∈ {1, 8, 16, 32, 64}`.
//!
//! Protocol code is generic over [`Ring`]. The concrete rings are [`Bit`] for the
//! boolean domain and [`Zk`] over the unsigned machine words; the crate root
//! re-exports them as `Ring1` .. `Ring64`.
//!
//! [`RingElement`] is a width-tagged dynamic value used where the width is only
//! known at runtime (circuit constants, the second cleartext interpreter).

use std::fmt;
use std::hash::Hash;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_traits::{AsPrimitive, PrimInt, Unsigned, WrappingAdd, WrappingMul, WrappingNeg, WrappingSub};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("width mismatch: {0} bits vs {1} bits")]
    WidthMismatch(u32, u32),
    #[error("unsupported ring width {0}; expected one of 1, 8, 16, 32, 64")]
    UnsupportedWidth(u32),
    #[error("truncated encoding: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },
}

/// An element of `Z_{2^k}` with wrap-around semantics.
pub trait Ring:
    Copy
    + Default
    + Eq
    + Hash
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    /// Bit width `k`.
    const BITS: u32;

    fn zero() -> Self {
        Self::default()
    }

    fn one() -> Self {
        Self::from_u64(1)
    }

    /// Reduces `v` mod `2^k`.
    fn from_u64(v: u64) -> Self;

    fn to_u64(self) -> u64;

    fn random<G: RngCore + ?Sized>(rng: &mut G) -> Self {
        Self::from_u64(rng.next_u64())
    }

    /// Bytes used by one element on the wire (`ceil(k/8)`).
    fn byte_len() -> usize {
        (Self::BITS as usize).div_ceil(8)
    }
}

/// Machine words usable as the backing store of [`Zk`].
pub trait Word:
    PrimInt
    + Unsigned
    + WrappingAdd
    + WrappingSub
    + WrappingMul
    + WrappingNeg
    + AsPrimitive<u64>
    + Default
    + Hash
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Word for T where
    T: PrimInt
        + Unsigned
        + WrappingAdd
        + WrappingSub
        + WrappingMul
        + WrappingNeg
        + AsPrimitive<u64>
        + Default
        + Hash
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// `Z_{2^k}` where `k` is the bit width of the word `T`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Zk<T>(pub T);

impl<T: Word> Add for Zk<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Zk(self.0.wrapping_add(&rhs.0))
    }
}

impl<T: Word> Sub for Zk<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Zk(self.0.wrapping_sub(&rhs.0))
    }
}

impl<T: Word> Mul for Zk<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Zk(self.0.wrapping_mul(&rhs.0))
    }
}

impl<T: Word> Neg for Zk<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Zk(self.0.wrapping_neg())
    }
}

impl<T: Word> AddAssign for Zk<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Word> SubAssign for Zk<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Word> fmt::Debug for Zk<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<T: Word> fmt::Display for Zk<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<T: Word> Ring for Zk<T>
where
    u64: AsPrimitive<T>,
{
    const BITS: u32 = (std::mem::size_of::<T>() * 8) as u32;

    #[inline]
    fn from_u64(v: u64) -> Self {
        Zk(v.as_())
    }

    #[inline]
    fn to_u64(self) -> u64 {
        self.0.as_()
    }
}

/// `Z_2`: addition is XOR, multiplication is AND.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bit(pub bool);

impl Add for Bit {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Bit(self.0 ^ rhs.0)
    }
}

impl Sub for Bit {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Bit(self.0 ^ rhs.0)
    }
}

impl Mul for Bit {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Bit(self.0 & rhs.0)
    }
}

impl Neg for Bit {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self
    }
}

impl AddAssign for Bit {
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl SubAssign for Bit {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl fmt::Debug for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 as u8)
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 as u8)
    }
}

impl Ring for Bit {
    const BITS: u32 = 1;

    #[inline]
    fn from_u64(v: u64) -> Self {
        Bit(v & 1 == 1)
    }

    #[inline]
    fn to_u64(self) -> u64 {
        self.0 as u64
    }
}

/// Defines a toy ring `Z_{2^k}` for `k < 8`, backed by `u8`.
///
/// Protocol widths are fixed, but hand-checkable fixtures (such as `Z_8`) are
/// easier to read in a tiny ring; every protocol is generic over [`Ring`].
#[macro_export]
macro_rules! small_ring {
    ($name:ident, $bits:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
        pub struct $name(u8);

        impl $name {
            const MASK: u8 = ((1u16 << $bits) - 1) as u8;
        }

        impl ::std::ops::Add for $name {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                $name(self.0.wrapping_add(o.0) & Self::MASK)
            }
        }
        impl ::std::ops::Sub for $name {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                $name(self.0.wrapping_sub(o.0) & Self::MASK)
            }
        }
        impl ::std::ops::Mul for $name {
            type Output = Self;
            fn mul(self, o: Self) -> Self {
                $name(self.0.wrapping_mul(o.0) & Self::MASK)
            }
        }
        impl ::std::ops::Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                $name(self.0.wrapping_neg() & Self::MASK)
            }
        }
        impl ::std::ops::AddAssign for $name {
            fn add_assign(&mut self, o: Self) {
                *self = *self + o;
            }
        }
        impl ::std::ops::SubAssign for $name {
            fn sub_assign(&mut self, o: Self) {
                *self = *self - o;
            }
        }
        impl ::std::fmt::Debug for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
        impl $crate::ring::Ring for $name {
            const BITS: u32 = $bits;
            fn from_u64(v: u64) -> Self {
                $name(v as u8 & Self::MASK)
            }
            fn to_u64(self) -> u64 {
                self.0 as u64
            }
        }
    };
}

/// Little-endian encoding of a single element in `ceil(k/8)` bytes.
pub fn encode<R: Ring>(a: R) -> Vec<u8> {
    a.to_u64().to_le_bytes()[..R::byte_len()].to_vec()
}

pub fn decode<R: Ring>(bytes: &[u8]) -> Result<R, RingError> {
    let need = R::byte_len();
    if bytes.len() < need {
        return Err(RingError::Truncated { need, got: bytes.len() });
    }
    let mut buf = [0u8; 8];
    buf[..need].copy_from_slice(&bytes[..need]);
    Ok(R::from_u64(u64::from_le_bytes(buf)))
}

/// Encoded size of a batch of `n` elements.
pub fn batch_len<R: Ring>(n: usize) -> usize {
    if R::BITS == 1 {
        n.div_ceil(8)
    } else {
        n * R::byte_len()
    }
}

/// Batch encoding. `Z_2` elements are packed eight per byte, LSB first.
pub fn encode_batch<R: Ring>(xs: &[R]) -> Vec<u8> {
    if R::BITS == 1 {
        let mut out = vec![0u8; xs.len().div_ceil(8)];
        for (i, x) in xs.iter().enumerate() {
            out[i / 8] |= (x.to_u64() as u8 & 1) << (i % 8);
        }
        out
    } else {
        let w = R::byte_len();
        let mut out = Vec::with_capacity(xs.len() * w);
        for x in xs {
            out.extend_from_slice(&x.to_u64().to_le_bytes()[..w]);
        }
        out
    }
}

pub fn decode_batch<R: Ring>(bytes: &[u8], n: usize) -> Result<Vec<R>, RingError> {
    let need = batch_len::<R>(n);
    if bytes.len() < need {
        return Err(RingError::Truncated { need, got: bytes.len() });
    }
    if R::BITS == 1 {
        Ok((0..n).map(|i| R::from_u64((bytes[i / 8] >> (i % 8)) as u64)).collect())
    } else {
        let w = R::byte_len();
        bytes[..need].chunks_exact(w).map(decode::<R>).collect()
    }
}

/// Supported ring widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Width {
    W1,
    W8,
    W16,
    W32,
    W64,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::W1 => 1,
            Width::W8 => 8,
            Width::W16 => 16,
            Width::W32 => 32,
            Width::W64 => 64,
        }
    }

    pub fn mask(self) -> u64 {
        match self {
            Width::W64 => u64::MAX,
            w => (1u64 << w.bits()) - 1,
        }
    }
}

impl TryFrom<u32> for Width {
    type Error = RingError;
    fn try_from(k: u32) -> Result<Self, RingError> {
        match k {
            1 => Ok(Width::W1),
            8 => Ok(Width::W8),
            16 => Ok(Width::W16),
            32 => Ok(Width::W32),
            64 => Ok(Width::W64),
            other => Err(RingError::UnsupportedWidth(other)),
        }
    }
}

impl From<Width> for u32 {
    fn from(w: Width) -> u32 {
        w.bits()
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// A width-tagged element of `Z_{2^k}`; `value < 2^k` always.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RingElement {
    value: u64,
    width: Width,
}

impl RingElement {
    pub fn new(value: u64, width: Width) -> Self {
        RingElement { value: value & width.mask(), width }
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> Width {
        self.width
    }

    fn same_width(self, other: Self) -> Result<Width, RingError> {
        if self.width == other.width {
            Ok(self.width)
        } else {
            Err(RingError::WidthMismatch(self.width.bits(), other.width.bits()))
        }
    }

    pub fn add(self, other: Self) -> Result<Self, RingError> {
        let w = self.same_width(other)?;
        Ok(Self::new(self.value.wrapping_add(other.value), w))
    }

    pub fn sub(self, other: Self) -> Result<Self, RingError> {
        let w = self.same_width(other)?;
        Ok(Self::new(self.value.wrapping_sub(other.value), w))
    }

    pub fn mul(self, other: Self) -> Result<Self, RingError> {
        let w = self.same_width(other)?;
        Ok(Self::new(self.value.wrapping_mul(other.value), w))
    }

    pub fn neg(self) -> Self {
        Self::new(self.value.wrapping_neg(), self.width)
    }

    pub fn encode(self) -> Vec<u8> {
        let n = (self.width.bits() as usize).div_ceil(8);
        self.value.to_le_bytes()[..n].to_vec()
    }

    pub fn decode(bytes: &[u8], width: Width) -> Result<Self, RingError> {
        let need = (width.bits() as usize).div_ceil(8);
        if bytes.len() < need {
            return Err(RingError::Truncated { need, got: bytes.len() });
        }
        let mut buf = [0u8; 8];
        buf[..need].copy_from_slice(&bytes[..need]);
        Ok(Self::new(u64::from_le_bytes(buf), width))
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod 2^{})", self.value, self.width.bits())
    }
}

/// Protocol phase a counted operation or message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Offline,
    Online,
}

/// Counts the local ring multiplications a party performs, split by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulMeter {
    pub offline: u64,
    pub online: u64,
}

impl MulMeter {
    #[inline]
    pub fn mul<R: Ring>(&mut self, phase: Phase, a: R, b: R) -> R {
        match phase {
            Phase::Offline => self.offline += 1,
            Phase::Online => self.online += 1,
        }
        a * b
    }

    pub fn total(&self) -> u64 {
        self.offline + self.online
    }

    pub fn merge(&mut self, other: &MulMeter) {
        self.offline += other.offline;
        self.online += other.online;
    }
}
