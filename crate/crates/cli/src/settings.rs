//! Merging of command-line flags with an optional key=value settings file.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Values read from a settings file. Keys are flag names without the leading
/// dashes; `_` and `-` are interchangeable.
#[derive(Debug, Default)]
pub struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|msg| CliError::usage(format!("{}: {msg}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            let value = value.trim().trim_matches('"');
            values.insert(normalize(key.trim()), value.to_string());
        }
        Ok(Self { values })
    }

    /// The flag value if given, else the file value, else `None`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(&normalize(key)) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                CliError::usage(format!("invalid value '{v}' for '{key}' in settings file"))
            }),
        }
    }

    pub fn get_or<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }
}

fn normalize(key: &str) -> String {
    key.trim_start_matches('-').replace('_', "-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let s = Settings::parse("gamma = 4\n# comment\nmax_components=3\n").unwrap();
        assert_eq!(s.get_or(Some(8.0), "gamma", 2.0).unwrap(), 8.0);
        assert_eq!(s.get_or(None, "gamma", 2.0).unwrap(), 4.0);
        assert_eq!(s.get_or::<usize>(None, "max-components", 10).unwrap(), 3);
        assert_eq!(s.get_or::<usize>(None, "mu", 1).unwrap(), 1);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Settings::parse("gamma 4").is_err());
        let s = Settings::parse("gamma = fast").unwrap();
        assert!(s.get::<f64>(None, "gamma").is_err());
    }
}
