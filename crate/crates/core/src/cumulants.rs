//! Moment / free cumulant conversion.
//!
//! With `M(x) = 1 + Σ m_k x^k` the two sequences are tied by the functional
//! relation `M(x) = 1 + Σ_s κ_s x^s M(x)^s`, which is the generating-function
//! form of the sum over non-crossing partitions. Reading off the coefficient
//! of `x^n` gives `m_n = κ_n + Σ_{s<n} κ_s [x^{n-s}] M(x)^s`, where the sum
//! only involves moments of order below `n`. Both directions are therefore
//! triangular and exact over any field; the functions are generic so tests
//! can run them on rationals.

use num_traits::{One, Zero};
use std::ops::{Add, Mul, Sub};

use crate::{Error, Result};

pub const MAX_ORDER: usize = 12;

fn truncated_product<T>(a: &[T], b: &[T], len: usize) -> Vec<T>
where
    T: Clone + Zero + Add<Output = T> + Mul<Output = T>,
{
    let mut out = vec![T::zero(); len];
    for (i, ai) in a.iter().enumerate().take(len) {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate().take(len - i) {
            out[i + j] = out[i + j].clone() + ai.clone() * bj.clone();
        }
    }
    out
}

/// `Σ_{s<n} κ_s [x^{n-s}] M(x)^s` from moments and cumulants of order < n.
fn lower_order_sum<T>(moments: &[T], cumulants: &[T], n: usize) -> T
where
    T: Clone + Zero + One + Add<Output = T> + Mul<Output = T>,
{
    // power[k] = [x^k] M(x)^s, truncated to degree n - 1
    let series: Vec<T> = (0..n).map(|k| if k == 0 { T::one() } else { moments[k].clone() }).collect();
    let mut power = series.clone();
    let mut total = T::zero();
    for s in 1..n {
        total = total + cumulants[s].clone() * power[n - s].clone();
        power = truncated_product(&power, &series, n);
    }
    total
}

fn check_order(len: usize, order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::BadParams(format!("order {order} exceeds {MAX_ORDER}")));
    }
    if len < order + 1 {
        return Err(Error::DimensionMismatch {
            expected: format!("at least {} entries", order + 1),
            found: len.to_string(),
        });
    }
    Ok(())
}

/// Free cumulants `κ_0..=κ_order` (with `κ_0 = 0`) from moments
/// `m_0..=m_order`. Entry 0 is read as 1 whatever it holds, so moments
/// from quadrature need no renormalisation first.
pub fn free_cumulants<T>(moments: &[T], order: usize) -> Result<Vec<T>>
where
    T: Clone + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    check_order(moments.len(), order)?;
    let mut kappa = vec![T::zero(); order + 1];
    for n in 1..=order {
        kappa[n] = moments[n].clone() - lower_order_sum(moments, &kappa, n);
    }
    Ok(kappa)
}

/// Inverse of [`free_cumulants`]: moments `m_0..=m_order` from `κ_1..=κ_order`
/// (entry 0 of `cumulants` is ignored).
pub fn moments_from_cumulants<T>(cumulants: &[T], order: usize) -> Result<Vec<T>>
where
    T: Clone + Zero + One + Add<Output = T> + Mul<Output = T>,
{
    check_order(cumulants.len(), order)?;
    let mut m = vec![T::zero(); order + 1];
    m[0] = T::one();
    for n in 1..=order {
        m[n] = cumulants[n].clone() + lower_order_sum(&m, cumulants, n);
    }
    Ok(m)
}
