//! Writers that embed the resolved configuration in every artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::RunError;

/// `# key = value` lines for CSV headers.
pub fn config_header(cfg: &ScenarioConfig) -> String {
    let mut s = String::from("# kerrlab resolved config\n");
    for (k, v) in cfg.resolved() {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

pub fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))
}

pub fn write_csv<R, I>(cfg: &ScenarioConfig, path: &Path, header: &[&str], rows: I) -> Result<PathBuf, RunError>
where
    R: AsRef<[f64]>,
    I: IntoIterator<Item = R>,
{
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", path.display()));
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(config_header(cfg).as_bytes()).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    let fail = |e: csv::Error| RunError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|x| x.to_string())).map_err(fail)?;
    }
    w.flush().map_err(io)?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    config: &'a std::collections::BTreeMap<String, String>,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(cfg: &ScenarioConfig, path: &Path, body: &T) -> Result<PathBuf, RunError> {
    let wrapped = Wrapped {
        config: cfg.resolved(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&wrapped).map_err(|e| RunError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}
