use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ops::content_hash;

/// Content-addressed file storage: `<root>/<first two hex chars>/<hash>`.
#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::StoreUnavailable(format!("{}: {e}", path.display()))
}

impl BlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        BlobStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, hash: &str) -> Result<PathBuf> {
        if hash.len() < 3 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::validation(format!("bad content hash {hash:?}")));
        }
        Ok(self.root.join(&hash[..2]).join(hash))
    }

    /// Writes the bytes unless a blob with the same hash exists. Returns the hash.
    pub fn put(&self, bytes: &[u8]) -> Result<String> {
        let hash = content_hash(bytes);
        let path = self.path_for(&hash)?;
        if path.exists() {
            return Ok(hash);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let mut tmp = tempfile_in(dir)?;
        tmp.1.write_all(bytes).map_err(|e| io_error(&tmp.0, e))?;
        tmp.1.sync_all().map_err(|e| io_error(&tmp.0, e))?;
        fs::rename(&tmp.0, &path).map_err(|e| io_error(&path, e))?;
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> Result<Vec<u8>> {
        let path = self.path_for(hash)?;
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound("file content")),
            Err(e) => Err(io_error(&path, e)),
        }
    }
}

fn tempfile_in(dir: &Path) -> Result<(PathBuf, fs::File)> {
    let name = format!(".upload-{}-{:016x}", std::process::id(), rand::random::<u64>());
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
    Ok((path, file))
}
