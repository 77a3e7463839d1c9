//! Flat key-value experiment configuration files.
//!
//! Format: one `key = value` pair per line, `#` comments, blank lines
//! allowed. Parsing preserves order so a file round-trips key-for-key;
//! unknown keys are rejected against the consuming command's schema.

use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// An ordered list of key-value pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pairs: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: i + 1,
                    message: format!("expected 'key = value', got '{raw}'"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if pairs.iter().any(|(k, _)| k == key) {
                return Err(ConfigError {
                    line: i + 1,
                    message: format!("duplicate key '{key}'"),
                });
            }
            pairs.push((key.to_string(), value.to_string()));
        }
        Ok(ConfigFile { pairs })
    }

    /// Canonical emission: `key = value` per line, original order.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    /// Reject keys outside the consuming command's schema.
    pub fn check_schema(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (i, (k, _)) in self.pairs.iter().enumerate() {
            if !allowed.contains(&k.as_str()) {
                return Err(ConfigError {
                    line: i + 1,
                    message: format!(
                        "unknown key '{k}' (allowed: {})",
                        allowed.join(", ")
                    ),
                });
            }
        }
        Ok(())
    }

    /// Typed lookup with a parse diagnostic naming the field.
    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| ConfigError {
                line: 0,
                message: format!("field '{key}': cannot parse '{v}'"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_key_for_key_identical() {
        let text = "protocol = two-round-coin-majority\nn = 9\nt = 3\nstage = second-round-arb\ntrials = 1000\nseed = 7\n";
        let cfg = ConfigFile::parse(text).unwrap();
        assert_eq!(cfg.emit(), text);
        let again = ConfigFile::parse(&cfg.emit()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn comments_and_blanks_are_tolerated() {
        let cfg = ConfigFile::parse("# experiment\n\nn = 9\n").unwrap();
        assert_eq!(cfg.get("n"), Some("9"));
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = ConfigFile::parse("n = 9\nbogus line\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(ConfigFile::parse("n = 9\nn = 10\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected_by_schema() {
        let cfg = ConfigFile::parse("n = 9\nwat = 1\n").unwrap();
        assert!(cfg.check_schema(&["n", "t"]).is_err());
        assert!(cfg.check_schema(&["n", "wat"]).is_ok());
    }
}
