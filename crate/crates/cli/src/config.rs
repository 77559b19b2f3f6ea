//! `key = value` experiment files. Keys are long flag names (with `-` or
//! `_`); `#` starts a comment; `true` / `false` toggle boolean flags.
//! Values from the file are placed before the command line, so flags given
//! on the command line win.

use std::path::Path;

use eirehn_core::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Config(format!("config line {}: bad key `{}`", i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Expands file entries into flags for the named subcommand.
pub fn to_args(entries: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.clone());
            }
        }
    }
    args
}

/// Rewrites `argv` so that entries of any `--config FILE` precede the
/// subcommand's own flags.
pub fn splice(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let (path, width) = match argv[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => (
            argv.get(pos + 1)
                .cloned()
                .ok_or_else(|| Error::Config("--config needs a file".into()))?,
            2,
        ),
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Error::Config(format!("cannot read config {path}: {e}")))?;
    let from_file = to_args(&parse(&text)?);
    let mut rest = argv;
    rest.drain(pos..pos + width);
    // argv[0] is the program, argv[1] the subcommand.
    let split = 2.min(rest.len());
    let mut out: Vec<String> = rest[..split].to_vec();
    out.extend(from_file);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# grid\ncell = eirehn\nd_h=10 # hidden\n\nclip-norm = 5\n").unwrap();
        assert_eq!(
            e,
            vec![
                ("cell".into(), "eirehn".into()),
                ("d-h".into(), "10".into()),
                ("clip-norm".into(), "5".into())
            ]
        );
        assert!(parse("nonsense\n").is_err());
    }

    #[test]
    fn booleans_become_switches() {
        let a = to_args(&[("json".into(), "true".into()), ("x".into(), "false".into())]);
        assert_eq!(a, vec!["--json".to_string()]);
    }

    #[test]
    fn file_values_precede_command_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "seed = 3\nepochs = 2\n").unwrap();
        let argv: Vec<String> = ["eirehn", "train", "--config", path.to_str().unwrap(), "--seed", "9"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = splice(argv).unwrap();
        assert_eq!(out, vec!["eirehn", "train", "--seed", "3", "--epochs", "2", "--seed", "9"]);
    }
}
