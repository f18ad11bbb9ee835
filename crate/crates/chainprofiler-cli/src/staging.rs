use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::errors::CliError;

/// Collects finished artifacts as `<name>.tmp` files and renames the whole
/// set into place only when every stage has succeeded, so a failed run
/// leaves no partial outputs behind.
pub struct OutputSet {
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl OutputSet {
    pub fn new() -> Self {
        OutputSet { staged: Vec::new(), committed: false }
    }

    /// Stages `bytes` for `path`, creating parent directories as needed.
    pub fn stage(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
            }
        }
        let tmp = tmp_name(path);
        let mut f =
            File::create(&tmp).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
        f.write_all(bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file to its final name; on error the files not
    /// yet moved are cleaned up by `Drop`.
    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        while let Some((tmp, fin)) = self.staged.first().cloned() {
            fs::rename(&tmp, &fin)
                .map_err(|e| CliError::Io(format!("{} -> {}: {e}", tmp.display(), fin.display())))?;
            self.staged.remove(0);
            done.push(fin);
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}

fn tmp_name(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".tmp");
    PathBuf::from(os)
}
