use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Replaces `--config FILE` with the flags the file lists. They are placed
/// right after the subcommand so that flags given on the command line,
/// which come later, win.
pub(crate) fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.to_string_lossy().starts_with("--config=")) else {
        return Ok(args);
    };
    let flag = args[pos].to_string_lossy().into_owned();
    let (path, consumed) = match flag.strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match args.get(pos + 1) {
            Some(p) => (p.to_string_lossy().into_owned(), 2),
            None => return Err(Error::argument("--config needs a file")),
        },
    };
    let injected = load(Path::new(&path))?;
    let mut out: Vec<OsString> = Vec::with_capacity(args.len() + injected.len());
    for (i, a) in args.into_iter().enumerate() {
        if i >= pos && i < pos + consumed {
            continue;
        }
        out.push(a);
        if i == 1 {
            out.extend(injected.iter().map(OsString::from));
        }
    }
    Ok(out)
}

fn load(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse(&text)
}

/// `key = value` lines become `--key value`; `true` and `false` switch a
/// flag on or leave it off. Blank lines and `#` comments are skipped.
pub(crate) fn parse(text: &str) -> Result<Vec<String>> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(i + 1, format!("expected key=value, got {line:?}")));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::parse(i + 1, format!("bad key {key:?}")));
        }
        match value.trim() {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            v => {
                flags.push(format!("--{key}"));
                flags.push(v.to_string());
            }
        }
    }
    Ok(flags)
}
