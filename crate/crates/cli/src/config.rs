//! `key = value` configuration files layered under command-line flags.
//!
//! Keys are the long flag names of the subcommand being run. A value from the
//! file only applies when the flag was not given on the command line or
//! through its environment variable.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Command};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// values may be wrapped in double quotes.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value, found {raw:?}", n + 1);
        };
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Extra arguments for every file entry whose flag was not set explicitly.
pub fn layered_args(path: &Path, sub: &Command, matches: &ArgMatches) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let entries =
        parse_config(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut extra = Vec::new();
    for (key, value) in entries {
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            bail!(
                "config {}: unknown key {key:?} for `{}`",
                path.display(),
                sub.get_name()
            );
        };
        let explicit = matches!(
            matches.value_source(arg.get_id().as_str()),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        );
        if explicit {
            continue;
        }
        if arg.get_num_args().is_some_and(|n| n.takes_values()) {
            extra.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => extra.push(OsString::from(format!("--{key}"))),
                "false" | "no" | "0" => {}
                other => bail!(
                    "config {}: {key} expects true or false, found {other:?}",
                    path.display()
                ),
            }
        }
    }
    Ok(extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_quotes_and_dashes() {
        let got =
            parse_config("# weights\nw1 = 0.5\n\n--w2=0.5\ncache-dir = \"/tmp/a b\"\n").unwrap();
        assert_eq!(
            got,
            vec![
                ("w1".to_string(), "0.5".to_string()),
                ("w2".to_string(), "0.5".to_string()),
                ("cache-dir".to_string(), "/tmp/a b".to_string()),
            ]
        );
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse_config("w1 0.5").is_err());
        assert!(parse_config(" = 3").is_err());
    }
}
