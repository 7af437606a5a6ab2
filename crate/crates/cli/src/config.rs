//! Flat `key = value` configuration files. `#` starts a comment; keys use
//! `snake_case` (dashes are accepted); lists are comma separated. Command-line
//! flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Default)]
pub struct FlatConfig {
    source: Option<PathBuf>,
    values: BTreeMap<String, (usize, String)>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl FlatConfig {
    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let origin = || source.map(|p| p.display().to_string()).unwrap_or_else(|| "config".into());
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("{}:{}: expected `key = value`", origin(), i + 1)))?;
            let key = normalize(key);
            if key.is_empty() {
                return Err(CliError::usage(format!("{}:{}: empty key", origin(), i + 1)));
            }
            if values.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(CliError::usage(format!("{}:{}: duplicate key `{key}`", origin(), i + 1)));
            }
        }
        Ok(FlatConfig {
            source: source.map(Path::to_path_buf),
            values,
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FlatConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text, Some(p))
            }
        }
    }

    fn origin(&self, line: usize) -> String {
        match &self.source {
            Some(p) => format!("{}:{line}", p.display()),
            None => format!("config:{line}"),
        }
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("{}: invalid value for `{key}`: {e}", self.origin(line)))),
        }
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split([',', ' '])
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|e| CliError::usage(format!("{}: invalid list for `{key}`: {e}", self.origin(line)))),
        }
    }

    /// Flag value if given, else the file value, else `default`. The file
    /// value is consumed either way.
    pub fn pick<T: FromStr>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let file = self.take(key)?;
        Ok(flag.or(file).unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let file = self.take(key)?;
        Ok(flag.or(file))
    }

    pub fn pick_list<T: FromStr>(&mut self, key: &str, flag: Vec<T>, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let file = self.take_list(key)?;
        Ok(if !flag.is_empty() { flag } else { file.unwrap_or(default) })
    }

    /// Errors on keys nothing asked for.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.values.iter().next() {
            return Err(CliError::usage(format!("{}: unknown key `{key}`", self.origin(*line))));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let mut c = FlatConfig::parse(
            "# dataset\nn-rooms = 8   # desk scale\nt60 = 0.4, 0.6\n\nseed=3\n",
            None,
        )
        .unwrap();
        assert_eq!(c.pick("n_rooms", None, 5000usize).unwrap(), 8);
        assert_eq!(c.pick("seed", Some(9u64), 0).unwrap(), 9);
        assert_eq!(c.pick_list("t60", vec![], vec![1.0]).unwrap(), vec![0.4, 0.6]);
        assert_eq!(c.pick("k", None, 40usize).unwrap(), 40);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let c = FlatConfig::parse("bogus = 1\n", None).unwrap();
        assert!(c.finish().unwrap_err().to_string().contains("bogus"));
        assert!(FlatConfig::parse("a = 1\na = 2\n", None).is_err());
        assert!(FlatConfig::parse("just words\n", None).is_err());
        let mut c = FlatConfig::parse("k = many\n", None).unwrap();
        assert!(c.pick("k", None, 1usize).is_err());
    }
}
