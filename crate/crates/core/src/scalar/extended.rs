use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, One, ToPrimitive, Zero};
use twofloat::TwoFloat;

/// Double-double (~106-bit mantissa) arithmetic, accurate to about 1e-29
/// relative for `+ - * /`, `sqrt`, `exp`, `ln` and `tanh`. Used to evaluate
/// losses for finite-difference gradient checks with negligible rounding
/// noise.
///
/// Wraps [`TwoFloat`], whose addition, multiplication and square root are
/// exact to double-double precision, but whose `TwoFloat / TwoFloat` and
/// elementary functions are only about `f64`-accurate. Those are replaced
/// here. Functions off the loss path (trigonometry and the like) delegate
/// unchanged.
#[derive(Clone, Copy, Default)]
pub struct Extended(TwoFloat);

impl Extended {
    /// Exact sum `hi + lo`, normalized.
    pub fn new(hi: f64, lo: f64) -> Self {
        Extended(TwoFloat::new_add(hi, lo))
    }

    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }

    fn ln2() -> Self {
        Extended::new(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17)
    }
}

// twofloat stores infinities as (±inf, ±inf) and orders them wrongly
impl PartialEq for Extended {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi().partial_cmp(&other.hi())? {
            Ordering::Equal if self.hi().is_finite() => self.lo().partial_cmp(&other.lo()),
            ord => Some(ord),
        }
    }
}

impl From<f64> for Extended {
    fn from(v: f64) -> Self {
        Extended(TwoFloat::from(v))
    }
}

impl fmt::Debug for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Extended({:e} + {:e})", self.hi(), self.lo())
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&(self.hi() + self.lo()), f)
    }
}

impl Neg for Extended {
    type Output = Self;

    fn neg(self) -> Self {
        Extended(-self.0)
    }
}

macro_rules! exact_ops {
    ($($tr:ident $m:ident $atr:ident $am:ident;)*) => {$(
        impl $tr for Extended {
            type Output = Self;

            #[inline]
            fn $m(self, rhs: Self) -> Self {
                Extended(self.0.$m(rhs.0))
            }
        }

        impl $tr<f64> for Extended {
            type Output = Self;

            #[inline]
            fn $m(self, rhs: f64) -> Self {
                Extended(self.0.$m(rhs))
            }
        }

        impl $atr for Extended {
            #[inline]
            fn $am(&mut self, rhs: Self) {
                *self = $tr::$m(*self, rhs);
            }
        }
    )*};
}

exact_ops! {
    Add add AddAssign add_assign;
    Sub sub SubAssign sub_assign;
    Mul mul MulAssign mul_assign;
}

impl Div<f64> for Extended {
    type Output = Self;

    #[inline]
    fn div(self, rhs: f64) -> Self {
        Extended(self.0 / rhs)
    }
}

impl Div for Extended {
    type Output = Self;

    /// Long division with two correction steps.
    fn div(self, rhs: Self) -> Self {
        let d = rhs.hi();
        let q1 = self.hi() / d;
        if !q1.is_finite() || q1 == 0.0 && self.lo() == 0.0 {
            return Extended::from(q1);
        }
        let r = self.0 - rhs.0 * q1;
        let q2 = r.hi() / d;
        let r = r - rhs.0 * q2;
        let q3 = r.hi() / d;
        Extended(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl DivAssign for Extended {
    fn div_assign(&mut self, rhs: Self) {
        *self = *self / rhs;
    }
}

impl Rem for Extended {
    type Output = Self;

    fn rem(self, rhs: Self) -> Self {
        self - (self / rhs).trunc() * rhs
    }
}

impl RemAssign for Extended {
    fn rem_assign(&mut self, rhs: Self) {
        *self = *self % rhs;
    }
}

impl Zero for Extended {
    fn zero() -> Self {
        Extended::from(0.0)
    }

    fn is_zero(&self) -> bool {
        self.hi() == 0.0
    }
}

impl One for Extended {
    fn one() -> Self {
        Extended::from(1.0)
    }
}

impl Num for Extended {
    type FromStrRadixErr = <TwoFloat as Num>::FromStrRadixErr;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        TwoFloat::from_str_radix(s, radix).map(Extended)
    }
}

impl ToPrimitive for Extended {
    fn to_i64(&self) -> Option<i64> {
        self.0.to_i64()
    }

    fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }

    fn to_f64(&self) -> Option<f64> {
        Some(self.hi() + self.lo())
    }
}

impl FromPrimitive for Extended {
    fn from_i64(n: i64) -> Option<Self> {
        TwoFloat::from_i64(n).map(Extended)
    }

    fn from_u64(n: u64) -> Option<Self> {
        TwoFloat::from_u64(n).map(Extended)
    }

    fn from_f64(n: f64) -> Option<Self> {
        Some(Extended::from(n))
    }
}

impl num_traits::NumCast for Extended {
    fn from<T: ToPrimitive>(n: T) -> Option<Self> {
        <TwoFloat as num_traits::NumCast>::from(n).map(Extended)
    }
}

macro_rules! delegate {
    ($($m:ident)*) => {$(
        #[inline]
        fn $m(self) -> Self {
            Extended(Float::$m(self.0))
        }
    )*};
}

macro_rules! delegate_const {
    ($($m:ident)*) => {$(
        #[inline]
        fn $m() -> Self {
            Extended::from(<TwoFloat as Float>::$m().hi())
        }
    )*};
}

macro_rules! delegate_pred {
    ($($m:ident)*) => {$(
        #[inline]
        fn $m(self) -> bool {
            Float::$m(self.0)
        }
    )*};
}

impl Float for Extended {
    delegate_const!(nan infinity neg_infinity neg_zero min_value min_positive_value max_value);
    delegate_pred!(is_nan is_infinite is_finite is_normal is_sign_positive is_sign_negative);
    delegate!(floor ceil round trunc fract abs signum sqrt cbrt exp2 log2 log10 exp_m1 ln_1p);
    delegate!(sin cos tan asin acos atan sinh cosh asinh acosh atanh);

    fn classify(self) -> FpCategory {
        self.0.classify()
    }

    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }

    fn recip(self) -> Self {
        Extended::one() / self
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut k = n.unsigned_abs();
        let mut acc = Extended::one();
        while k > 0 {
            if k & 1 == 1 {
                acc *= base;
            }
            base *= base;
            k >>= 1;
        }
        acc
    }

    fn powf(self, n: Self) -> Self {
        (self.ln() * n).exp()
    }

    /// Range reduction `x = k·ln2 + r`, then `exp(r) = exp(r / 2^10)^(2^10)`
    /// with a Taylor series for the inner factor.
    fn exp(self) -> Self {
        let hi = self.hi();
        if hi.is_nan() {
            return self;
        }
        if hi > 709.8 {
            return Extended::infinity();
        }
        if hi < -745.2 {
            return Extended::zero();
        }
        let k = (hi / std::f64::consts::LN_2).round();
        let s = (self - Extended::ln2() * k) / 1024.0;
        let mut sum = Extended::one();
        let mut term = Extended::one();
        for i in 1..=14 {
            term = term * s / f64::from(i);
            sum += term;
        }
        for _ in 0..10 {
            sum *= sum;
        }
        // split the power of two so neither factor overflows
        let k = k as i32;
        sum * 2f64.powi(k / 2) * 2f64.powi(k - k / 2)
    }

    /// Newton on `exp(y) = x`, which doubles the correct digits per step.
    fn ln(self) -> Self {
        let hi = self.hi();
        if !(hi > 0.0) || hi.is_infinite() {
            return Extended::from(hi.ln());
        }
        let mut y = Extended::from(hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - 1.0;
        }
        y
    }

    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }

    fn tanh(self) -> Self {
        let a = self.abs();
        let t = if a.hi() < 1e-3 {
            // odd series; the next term is below 1e-40 relative
            let a2 = a * a;
            let coeffs = [(1.0, 3.0), (2.0, 15.0), (17.0, 315.0), (62.0, 2835.0), (1382.0, 155_925.0)];
            let mut poly = Extended::zero();
            for (i, &(num, den)) in coeffs.iter().enumerate().rev() {
                let c = Extended::from(num) / den;
                poly = if i % 2 == 0 { a2 * poly - c } else { a2 * poly + c };
            }
            a + a * a2 * poly
        } else if a.hi() > 40.0 {
            Extended::one()
        } else {
            let e = (a * -2.0).exp();
            (Extended::one() - e) / (Extended::one() + e)
        };
        if self.hi() < 0.0 {
            -t
        } else {
            t
        }
    }

    fn max(self, other: Self) -> Self {
        match self.partial_cmp(&other) {
            Some(Ordering::Less) => other,
            Some(_) => self,
            None if self.is_nan() => other,
            None => self,
        }
    }

    fn min(self, other: Self) -> Self {
        match self.partial_cmp(&other) {
            Some(Ordering::Greater) => other,
            Some(_) => self,
            None if self.is_nan() => other,
            None => self,
        }
    }

    fn abs_sub(self, other: Self) -> Self {
        if self <= other {
            Extended::zero()
        } else {
            self - other
        }
    }

    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }

    fn atan2(self, other: Self) -> Self {
        Extended(self.0.atan2(other.0))
    }

    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }

    fn integer_decode(self) -> (u64, i16, i8) {
        self.0.integer_decode()
    }
}
