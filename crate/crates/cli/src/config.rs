use std::path::Path;

use crate::error::CliError;

/// Collects `key=value` overrides: lines of the config file first (blank
/// lines and `#` comments skipped), then each `--set` in order.
pub fn overrides(
    config: Option<&Path>,
    sets: &[String],
) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Parse(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    i + 1
                ))
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\n\nlr = 0.001\nn=64\n").unwrap();
        let got = overrides(Some(&path), &["n=32".to_string()]).unwrap();
        let pairs: Vec<(&str, &str)> = got.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        assert_eq!(pairs, [("lr", "0.001"), ("n", "64"), ("n", "32")]);
    }

    #[test]
    fn malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "lr 0.1\n").unwrap();
        assert!(matches!(
            overrides(Some(&path), &[]),
            Err(CliError::Parse(_))
        ));
        assert!(matches!(
            overrides(None, &["lr".to_string()]),
            Err(CliError::Usage(_))
        ));
    }
}
