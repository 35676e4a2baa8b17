//! Human-readable durations such as `13h` or `1.5d`.

use chrono::TimeDelta;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid duration {0:?} (expected a number followed by s, m, h or d, e.g. 13h or 1.5d)")]
pub struct DurationError(pub String);

/// Parse `<number><unit>` with unit `s`, `m`, `h` or `d`. Fractions are
/// allowed and rounded to the nearest second.
pub fn parse_duration(raw: &str) -> Result<TimeDelta, DurationError> {
    let err = || DurationError(raw.to_owned());
    let s = raw.trim();
    let unit = s.chars().last().ok_or_else(err)?;
    let scale = match unit {
        's' => 1.0,
        'm' => 60.0,
        'h' => 3600.0,
        'd' => 86400.0,
        _ => return Err(err()),
    };
    let number = &s[..s.len() - 1];
    if number.is_empty() || !number.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return Err(err());
    }
    let value: f64 = number.parse().map_err(|_| err())?;
    let secs = (value * scale).round();
    if !secs.is_finite() || secs > i64::MAX as f64 / 1000.0 {
        return Err(err());
    }
    Ok(TimeDelta::seconds(secs as i64))
}

/// Render with the largest unit that represents the value exactly, allowing
/// one decimal place (`1.5d`, `13h`).
pub fn format_duration(d: TimeDelta) -> String {
    let secs = d.num_seconds();
    if secs != 0 {
        for (unit, size) in [('d', 86400), ('h', 3600), ('m', 60)] {
            if secs % size == 0 {
                return format!("{}{unit}", secs / size);
            }
            if (secs * 10) % size == 0 {
                return format!("{}{unit}", secs as f64 / size as f64);
            }
        }
    }
    format!("{secs}s")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units() {
        assert_eq!(parse_duration("13h").unwrap(), TimeDelta::hours(13));
        assert_eq!(parse_duration("1d").unwrap(), TimeDelta::days(1));
        assert_eq!(parse_duration("1.5d").unwrap(), TimeDelta::hours(36));
        assert_eq!(parse_duration("2.5d").unwrap(), TimeDelta::hours(60));
        assert_eq!(parse_duration("90s").unwrap(), TimeDelta::seconds(90));
        assert_eq!(parse_duration(" 30m ").unwrap(), TimeDelta::minutes(30));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "d", "1", "1w", "-1d", "1..5d", "abc", "1e3h"] {
            assert!(parse_duration(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn format_round_trips() {
        for s in ["13h", "1d", "1.5d", "2.5d", "6d", "90s", "30m"] {
            let d = parse_duration(s).unwrap();
            assert_eq!(parse_duration(&format_duration(d)).unwrap(), d);
        }
        assert_eq!(format_duration(TimeDelta::hours(36)), "1.5d");
        assert_eq!(format_duration(TimeDelta::hours(13)), "13h");
    }
}
