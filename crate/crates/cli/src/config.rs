//! Flat `key = value` configuration files with `[section]` headers.
//!
//! Keys before the first header belong to the global section, which every
//! subcommand falls back to. `#` and `;` start comment lines.

use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: HashMap<(String, String), String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = HashMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated section header", i + 1))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            entries.insert((section.clone(), key.to_string()), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// Value for `key` in `section`, else in the global section.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .or_else(|| self.entries.get(&(String::new(), key.to_string())))
            .map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_fallback() {
        let c = Config::parse("seed = 4\n# comment\n[count]\nN = 1,2\n b=3 \n[solve]\nseed=9\n").unwrap();
        assert_eq!(c.get("count", "N"), Some("1,2"));
        assert_eq!(c.get("count", "b"), Some("3"));
        assert_eq!(c.get("count", "seed"), Some("4"));
        assert_eq!(c.get("solve", "seed"), Some("9"));
        assert_eq!(c.get("solve", "N"), None);
    }

    #[test]
    fn malformed_lines() {
        assert!(Config::parse("[count\n").is_err());
        assert!(Config::parse("just words\n").is_err());
        assert!(Config::parse(" = 3\n").is_err());
    }
}
