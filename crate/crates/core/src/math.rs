//! Float helpers that work without `std`.

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn trunc(x: f64) -> f64 {
    libm::trunc(x)
}

pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Ceiling that forgives representation error: a value within a relative
/// `1e-9` of an integer is treated as that integer, so `100.0 * 1.11`
/// rounds up to 111 rather than 112.
pub fn ceil_tol(x: f64) -> f64 {
    let r = round(x);
    if abs(x - r) <= 1e-9 * abs(x).max(1.0) {
        r
    } else {
        ceil(x)
    }
}

/// `ceil_tol` clamped into `u32`; negative and NaN inputs map to zero.
pub fn ceil_count(x: f64) -> u32 {
    let c = ceil_tol(x);
    if c.is_nan() || c <= 0.0 {
        0
    } else if c >= u32::MAX as f64 {
        u32::MAX
    } else {
        c as u32
    }
}
