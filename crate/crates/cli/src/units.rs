//! Quantities with unit suffixes and `start:stop:count` ranges.

use smoothctl::ensemble::linspace;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Dim {
    Frequency,
    Time,
    Field,
    /// Plain number, no suffix allowed.
    Scalar,
}

// Suffixes carry decimal exponents so that "500ns" parses to exactly 5e-7.
const FREQ: &[(&str, i32)] = &[("GHz", 9), ("MHz", 6), ("kHz", 3), ("Hz", 0)];
const TIME: &[(&str, i32)] = &[("ns", -9), ("us", -6), ("µs", -6), ("ms", -3), ("s", 0)];
const FIELD: &[(&str, i32)] = &[("nT", -9), ("uT", -6), ("µT", -6), ("mT", -3), ("T", 0)];

/// Parse `"10MHz"`, `"500 ns"`, `"-4e6"` and the like into SI units.
pub fn parse_quantity(s: &str, dim: Dim) -> Result<f64, String> {
    let s = s.trim();
    let table: &[(&str, i32)] = match dim {
        Dim::Frequency => FREQ,
        Dim::Time => TIME,
        Dim::Field => FIELD,
        Dim::Scalar => &[],
    };
    let (num, exp) = table
        .iter()
        .find_map(|(suffix, e)| s.strip_suffix(suffix).map(|n| (n.trim_end(), *e)))
        .unwrap_or((s, 0));
    let bad = || format!("cannot parse quantity {s:?}");
    let out = match num.split_once(['e', 'E']) {
        Some((mantissa, e)) => {
            let e: i32 = e.parse().map_err(|_| bad())?;
            format!("{mantissa}e{}", e + exp).parse::<f64>()
        }
        None => format!("{num}e{exp}").parse::<f64>(),
    }
    .map_err(|_| bad())?;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(format!("quantity {s:?} is not finite"))
    }
}

/// `start:stop:count`, or a single value.
pub fn parse_range(s: &str, dim: Dim) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(vec![parse_quantity(one, dim)?]),
        [a, b, n] => {
            let a = parse_quantity(a, dim)?;
            let b = parse_quantity(b, dim)?;
            let n: usize = n.trim().parse().map_err(|_| format!("bad count in range {s:?}"))?;
            if n == 0 {
                return Err(format!("range {s:?} has zero points"));
            }
            if n == 1 {
                return Ok(vec![a]);
            }
            Ok(linspace(a, b, n))
        }
        _ => Err(format!("expected start:stop:count, got {s:?}")),
    }
}
