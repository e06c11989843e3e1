//! Kernel construction with an optional on-disk table cache.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use fracflow::error::{Error, Result};
use fracflow::kernels::{build_with_options, KernelFamily, KernelSpec, RadialTable, TableOptions};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableRecord {
    pub family: KernelFamily,
    pub s: String,
    pub dim: usize,
    pub sha256: String,
}

/// Builds kernels once per `(family, s, dim)` and remembers table checksums.
pub struct KernelStore {
    cache: Option<PathBuf>,
    built: BTreeMap<(&'static str, u64, usize), KernelSpec>,
    tables: Vec<TableRecord>,
}

impl KernelStore {
    pub fn new(cache: Option<PathBuf>) -> Self {
        Self { cache, built: BTreeMap::new(), tables: Vec::new() }
    }

    pub fn tables(&self) -> &[TableRecord] {
        &self.tables
    }

    pub fn get(&mut self, family: KernelFamily, s: f64, dim: usize) -> Result<KernelSpec> {
        let key = (family.tag(), s.to_bits(), dim);
        if let Some(k) = self.built.get(&key) {
            return Ok(k.clone());
        }
        let kernel = match family {
            KernelFamily::FractionalHeat => {
                let table = self.table(s, dim)?;
                let mut text = Vec::new();
                table.write_text(&mut text)?;
                self.tables.push(TableRecord {
                    family,
                    s: format!("{s}"),
                    dim,
                    sha256: hex::encode(Sha256::digest(&text)),
                });
                KernelSpec::from_table(table)
            }
            _ => KernelSpec::new(family, s, dim, TableOptions::default())?,
        };
        self.built.insert(key, kernel.clone());
        Ok(kernel)
    }

    fn table(&self, s: f64, dim: usize) -> Result<RadialTable> {
        let Some(dir) = &self.cache else {
            return build_with_options(s, dim, TableOptions::default());
        };
        let path = table_path(dir, s, dim);
        if path.exists() {
            let file = fs::File::open(&path)?;
            let table = RadialTable::read_text(BufReader::new(file))?;
            if table.s() != s || table.dim() != dim {
                return Err(Error::Parse(format!("cached table {} does not match s = {s}, N = {dim}", path.display())));
            }
            return Ok(table);
        }
        let table = build_with_options(s, dim, TableOptions::default())?;
        fs::create_dir_all(dir)?;
        // write then rename so concurrent readers never see a partial file
        let tmp = path.with_extension("tmp");
        table.write_text(fs::File::create(&tmp)?)?;
        fs::rename(&tmp, &path)?;
        Ok(table)
    }
}

pub fn table_path(dir: &Path, s: f64, dim: usize) -> PathBuf {
    dir.join(format!("fractional-heat-s{s}-N{dim}.txt"))
}
