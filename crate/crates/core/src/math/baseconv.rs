//! Arbitrary-precision base conversion for bases 2..=36.

use num_bigint::BigUint;
use num_traits::Zero;

use super::MathError;

fn digit_value(c: char) -> Option<u32> {
    match c {
        '0'..='9' => Some(c as u32 - '0' as u32),
        'a'..='z' => Some(c as u32 - 'a' as u32 + 10),
        'A'..='Z' => Some(c as u32 - 'A' as u32 + 10),
        _ => None,
    }
}

const DIGITS: &[u8; 36] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

/// Convert a (possibly signed) digit string between bases.
///
/// Output digits are uppercase with no leading zeros; zero prints as "0"
/// regardless of sign.
pub fn convert_base(digits: &str, from_base: u32, to_base: u32) -> Result<String, MathError> {
    for base in [from_base, to_base] {
        if !(2..=36).contains(&base) {
            return Err(MathError::BaseOutOfRange { base });
        }
    }

    let (negative, body, body_offset) = match digits.strip_prefix('-') {
        Some(rest) => (true, rest, 1),
        None => (false, digits, 0),
    };
    if body.is_empty() {
        return Err(MathError::parse(body_offset, "expected at least one digit"));
    }

    let mut value = BigUint::zero();
    for (i, c) in body.char_indices() {
        let d = digit_value(c)
            .filter(|d| *d < from_base)
            .ok_or(MathError::InvalidDigit {
                digit: c,
                offset: body_offset + i,
                base: from_base,
            })?;
        value = value * from_base + d;
    }

    if value.is_zero() {
        return Ok("0".to_string());
    }

    let mut out = Vec::new();
    let to = BigUint::from(to_base);
    while !value.is_zero() {
        let rem = (&value % &to).to_u32_digits().first().copied().unwrap_or(0);
        out.push(DIGITS[rem as usize]);
        value /= &to;
    }
    if negative {
        out.push(b'-');
    }
    out.reverse();
    Ok(String::from_utf8(out).expect("ascii digits"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_to_hex() {
        assert_eq!(convert_base("255", 10, 16).unwrap(), "FF");
    }

    #[test]
    fn zero_in_any_base() {
        assert_eq!(convert_base("0", 2, 36).unwrap(), "0");
        assert_eq!(convert_base("000", 7, 3).unwrap(), "0");
        assert_eq!(convert_base("-0", 10, 2).unwrap(), "0");
    }

    #[test]
    fn negative_binary_to_decimal() {
        assert_eq!(convert_base("-1010", 2, 10).unwrap(), "-10");
    }

    #[test]
    fn lowercase_digits_accepted_output_uppercase() {
        assert_eq!(convert_base("ff", 16, 10).unwrap(), "255");
        assert_eq!(convert_base("z", 36, 10).unwrap(), "35");
    }

    #[test]
    fn digit_out_of_range_for_base() {
        let err = convert_base("129", 2, 10).unwrap_err();
        assert_eq!(
            err,
            MathError::InvalidDigit {
                digit: '2',
                offset: 1,
                base: 2
            }
        );
        let err = convert_base("-1?0", 10, 2).unwrap_err();
        assert_eq!(
            err,
            MathError::InvalidDigit {
                digit: '?',
                offset: 2,
                base: 10
            }
        );
    }

    #[test]
    fn base_out_of_range() {
        assert_eq!(
            convert_base("1", 1, 10).unwrap_err(),
            MathError::BaseOutOfRange { base: 1 }
        );
        assert_eq!(
            convert_base("1", 10, 37).unwrap_err(),
            MathError::BaseOutOfRange { base: 37 }
        );
    }

    #[test]
    fn empty_digits_rejected() {
        assert!(convert_base("", 10, 2).is_err());
        assert!(convert_base("-", 10, 2).is_err());
    }

    #[test]
    fn wide_values_beyond_machine_words() {
        // 2^200 in decimal, round-tripped through base 7
        let big = "1606938044258990275541962092341162602522202993782792835301376";
        let in_base7 = convert_base(big, 10, 7).unwrap();
        assert_eq!(convert_base(&in_base7, 7, 10).unwrap(), big);
    }
}
