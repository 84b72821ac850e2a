//! Multiply-accumulate counts of the temporal blocks, in exact rational
//! arithmetic.
//!
//! * skipped self-attention: `2T²D/m` (the two `T²`-order products),
//! * skipped decoder block: `2T²D/m + (1 + 4/m)·T·D²`,
//! * strided-convolution block: `2T²D + 2(k/s + 1)·T·D²`.

use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Macs = Ratio<u128>;

fn positive(pairs: &[(&str, usize)]) -> Result<()> {
    for &(name, v) in pairs {
        if v == 0 {
            return Err(Error::config(name, "must be at least 1"));
        }
    }
    Ok(())
}

fn r(v: usize) -> Macs {
    Macs::from_integer(v as u128)
}

/// Full attention over `T` tokens: `2T²D`.
pub fn analytic_vanilla(t: usize, d: usize) -> Result<Macs> {
    positive(&[("frames", t), ("width", d)])?;
    Ok(r(2) * r(t) * r(t) * r(d))
}

pub fn analytic_ssa(t: usize, d: usize, m: usize) -> Result<Macs> {
    positive(&[("skip", m)])?;
    Ok(analytic_vanilla(t, d)? / r(m))
}

pub fn analytic_skt(t: usize, d: usize, m: usize) -> Result<Macs> {
    let linear = (r(1) + r(4) / r(m)) * r(t) * r(d) * r(d);
    Ok(analytic_ssa(t, d, m)? + linear)
}

pub fn analytic_stt(t: usize, d: usize, k: usize, s: usize) -> Result<Macs> {
    positive(&[("conv_kernel", k), ("conv_stride", s)])?;
    let linear = r(2) * (r(k) / r(s) + r(1)) * r(t) * r(d) * r(d);
    Ok(analytic_vanilla(t, d)? + linear)
}

/// Integer value when the ratio is whole.
pub fn as_integer(v: Macs) -> Option<u128> {
    v.is_integer().then(|| v.to_integer())
}

pub fn to_f64(v: Macs) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(as_integer(analytic_ssa(243, 256, 3).unwrap()), Some(10_077_696));
        assert_eq!(as_integer(analytic_skt(243, 256, 3).unwrap()), Some(47_236_608));
        assert_eq!(as_integer(analytic_stt(243, 256, 3, 3).unwrap()), Some(93_934_080));
        let (t, d) = (27u128, 64u128);
        assert_eq!(as_integer(analytic_skt(27, 64, 1).unwrap()), Some(2 * t * t * d + 5 * t * d * d));
        assert_eq!(as_integer(analytic_stt(27, 64, 4, 4).unwrap()), Some(2 * t * t * d + 4 * t * d * d));
    }

    #[test]
    fn ssa_is_vanilla_over_m() {
        for t in [1, 7, 27, 81, 243] {
            for d in [1, 64, 256] {
                for m in 1..=9 {
                    assert_eq!(analytic_ssa(t, d, m).unwrap() * r(m), analytic_ssa(t, d, 1).unwrap());
                }
            }
        }
        // a non-integer case stays exact
        let v = analytic_ssa(5, 1, 3).unwrap();
        assert_eq!((*v.numer(), *v.denom()), (50, 3));
        assert_eq!(as_integer(v), None);
    }

    #[test]
    fn skt_decreases_with_m() {
        let vals: Vec<Macs> = (1..=9).map(|m| analytic_skt(243, 256, m).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_arguments_are_rejected() {
        assert!(analytic_ssa(0, 1, 1).is_err());
        assert!(analytic_ssa(1, 1, 0).is_err());
        assert!(analytic_stt(1, 1, 3, 0).is_err());
    }
}
