//! Scalar abstraction shared by the policy, statistics and search code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real number type the search machinery is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, e.g. a reward in task units.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Index of the largest value among entries where `keep` holds; ties go to the
/// lowest index. NaN entries are never selected.
pub(crate) fn argmax_by<S: Scalar>(
    values: impl IntoIterator<Item = S>,
    keep: impl Fn(usize) -> bool,
) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if !keep(i) || v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
