//! Output files with a provenance header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tvmix::mcem::McemConfig;
use tvmix::EmConfig;

use crate::args::Cli;
use crate::error::{CliError, CliResult};

/// Effective fitting settings, hashed into every output header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub em: EmConfig,
    pub mcem: McemConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg: RunConfig = match path {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => RunConfig::default(),
        };
        cfg.em.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.mcem.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        sha256_json(self)
    }
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn sha256_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("value serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read(p: &Path) -> CliResult<String> {
    fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config_sha256: String) -> Self {
        Self {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            seed,
            config_sha256,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn header(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# command: {}\n# seed: {seed}\n# config_sha256: {}\n# tvmix {}\n",
            self.command, self.config_sha256, self.version
        )
    }
}

pub struct Outputs {
    dir: PathBuf,
    pub provenance: Provenance,
}

impl Outputs {
    pub fn new(dir: &Path, provenance: Provenance) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), provenance })
    }

    /// Writes a CSV body produced by `body`, preceded by `#` header lines
    /// and any extra `notes`.
    pub fn csv<F>(&self, name: &str, notes: &[&str], body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> tvmix::Result<()>,
    {
        let mut buf = self.provenance.header().into_bytes();
        for n in notes {
            writeln!(buf, "# {n}")?;
        }
        body(&mut buf)?;
        self.write(name, &buf)
    }

    /// Writes `{"provenance": .., <key>: value}`.
    pub fn json<T: Serialize>(&self, name: &str, key: &str, value: &T) -> CliResult<PathBuf> {
        let mut map = serde_json::Map::new();
        map.insert("provenance".into(), serde_json::to_value(&self.provenance)?);
        map.insert(key.into(), serde_json::to_value(value)?);
        let text = serde_json::to_string_pretty(&map)? + "\n";
        self.write(name, text.as_bytes())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }
}

/// `diagnostics.json` for numerical failures.
pub fn write_diagnostics(cli: &Cli, err: &CliError) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref()).unwrap_or_default();
    let out = Outputs::new(&cli.out, Provenance::new(cli.seed, cfg.hash()))?;
    #[derive(Serialize)]
    struct Diag<'a> {
        error: String,
        exit_code: u8,
        config: &'a RunConfig,
    }
    out.json("diagnostics.json", "diagnostics", &Diag { error: err.to_string(), exit_code: err.exit_code(), config: &cfg })?;
    Ok(())
}
