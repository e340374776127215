//! Run manifests: the parameters, input digests and output digests of one
//! invocation, written as `key<TAB>value` lines next to its outputs.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const MANIFEST_SUFFIX: &str = ".manifest";

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut reader = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
    /// `(role, sha256)` of every input file.
    pub inputs: Vec<(String, String)>,
    /// `(file name, sha256)` of every output file.
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            subcommand: subcommand.to_owned(),
            seed: None,
            params: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn input(&mut self, role: &str, path: &Path) -> io::Result<&mut Self> {
        let digest = file_digest(path)?;
        self.inputs.push((role.to_owned(), digest));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> io::Result<&mut Self> {
        let digest = file_digest(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.push((name, digest));
        Ok(self)
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("tool\txling {}", env!("CARGO_PKG_VERSION")),
            format!("subcommand\t{}", self.subcommand),
        ];
        if let Some(seed) = self.seed {
            out.push(format!("seed\t{seed}"));
        }
        out.extend(self.params.iter().map(|(k, v)| format!("param.{k}\t{v}")));
        out.extend(self.inputs.iter().map(|(k, v)| format!("input.{k}\t{v}")));
        out.extend(self.outputs.iter().map(|(k, v)| format!("output.{k}\t{v}")));
        out
    }

    pub fn write<W: Write>(&self, mut sink: W) -> io::Result<()> {
        for line in self.lines() {
            writeln!(sink, "{line}")?;
        }
        sink.flush()
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        self.write(io::BufWriter::new(File::create(path)?))
    }
}

/// `out.vec` → `out.vec.manifest`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(MANIFEST_SUFFIX);
    PathBuf::from(s)
}
