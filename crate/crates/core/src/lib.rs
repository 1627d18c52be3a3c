//! Simulation and analytics for a single optical mode scattering off a
//! reservoir of identically prepared modes through a chain of beam splitters.

// `!(x > 0.0)`-style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod charfn;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod linalg;
pub mod measures;
pub mod special;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};

/// Text form used by every CSV/JSON export: 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{:.11e}", x);
    // trim trailing zeros of the mantissa: 1.50000000000e-3 → 1.5e-3
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    match exp {
        "0" => mantissa.to_string(),
        _ => format!("{mantissa}e{exp}"),
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.5), "1.5");
        assert_eq!(fmt_num(-0.0015), "-1.5e-3");
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(1.0 / 3.0).parse::<f64>().unwrap(), 0.333333333333);
    }
}
