use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, IngestError};

/// One parsed input row before ID remapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    /// 1.0 when the input has no rating column.
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl RawInteraction {
    pub fn implicit(user_id: impl Into<String>, item_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating: 1.0,
            timestamp: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), IngestError> {
        if self.user_id.is_empty() || self.item_id.is_empty() {
            return Err(IngestError::InvalidRecord("empty user or item id".into()));
        }
        if !self.rating.is_finite() {
            return Err(IngestError::InvalidRecord(format!(
                "non-finite rating for ({}, {})",
                self.user_id, self.item_id
            )));
        }
        Ok(())
    }
}

/// Role of one input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    User,
    Item,
    Rating,
    Timestamp,
    /// Present in the file but ignored.
    #[serde(alias = "_")]
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The first unparseable row aborts the load.
    #[default]
    Strict,
    /// Unparseable rows are skipped and counted.
    Lenient,
}

/// Column layout of a delimited interaction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<Column>,
    #[serde(default = "default_separator")]
    pub separator: String,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub mode: ParseMode,
}

fn default_separator() -> String {
    "\t".to_owned()
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            columns: vec![Column::User, Column::Item, Column::Rating, Column::Timestamp],
            separator: default_separator(),
            header: false,
            mode: ParseMode::Strict,
        }
    }
}

impl Schema {
    /// Tab-separated `user, item[, rating][, timestamp]` without a header.
    pub fn tsv(columns: &[Column]) -> Self {
        Self {
            columns: columns.to_vec(),
            ..Self::default()
        }
    }

    pub fn with_separator(mut self, sep: &str) -> Self {
        self.separator = sep.to_owned();
        self
    }

    pub fn with_header(mut self, header: bool) -> Self {
        self.header = header;
        self
    }

    pub fn with_mode(mut self, mode: ParseMode) -> Self {
        self.mode = mode;
        self
    }

    fn position(&self, col: Column) -> Option<usize> {
        self.columns.iter().position(|&c| c == col)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.separator.is_empty() {
            return Err(IngestError::InvalidSchema("empty separator".into()));
        }
        for col in [Column::User, Column::Item] {
            if self.position(col).is_none() {
                return Err(IngestError::InvalidSchema(format!("missing {col:?} column")));
            }
        }
        for col in [Column::User, Column::Item, Column::Rating, Column::Timestamp] {
            if self.columns.iter().filter(|&&c| c == col).count() > 1 {
                return Err(IngestError::InvalidSchema(format!("{col:?} column declared twice")));
            }
        }
        Ok(())
    }
}

/// Records of one file plus the number of rows dropped in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInteractions {
    pub records: Vec<RawInteraction>,
    pub skipped_rows: usize,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_row(line: &str, schema: &Schema) -> Result<RawInteraction, String> {
    let fields: Vec<&str> = line.split(schema.separator.as_str()).collect();
    if fields.len() < schema.columns.len() {
        return Err(format!(
            "expected {} fields, found {}",
            schema.columns.len(),
            fields.len()
        ));
    }
    let mut rec = RawInteraction::implicit(String::new(), String::new());
    for (col, raw) in schema.columns.iter().zip(&fields) {
        let raw = raw.trim();
        match col {
            Column::User => rec.user_id = raw.to_owned(),
            Column::Item => rec.item_id = raw.to_owned(),
            Column::Rating => {
                let r: f64 = raw.parse().map_err(|_| format!("bad rating {raw:?}"))?;
                if !r.is_finite() {
                    return Err(format!("non-finite rating {raw:?}"));
                }
                rec.rating = r;
            }
            Column::Timestamp => rec.timestamp = Some(raw.parse().map_err(|_| format!("bad timestamp {raw:?}"))?),
            Column::Skip => {}
        }
    }
    if rec.user_id.is_empty() || rec.item_id.is_empty() {
        return Err("empty user or item id".into());
    }
    Ok(rec)
}

/// Reads a delimited interaction file in file order.
pub fn load_interactions(path: &Path, schema: &Schema) -> Result<LoadedInteractions, IngestError> {
    schema.validate()?;
    let reader = BufReader::new(open(path)?);
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if lineno == 0 && schema.header {
            let n = line.split(schema.separator.as_str()).count();
            if line.trim().is_empty() || n < schema.columns.len() {
                return Err(IngestError::MalformedHeader {
                    path: path.to_owned(),
                    reason: format!("{n} header fields for {} columns", schema.columns.len()),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(line, schema) {
            Ok(rec) => records.push(rec),
            Err(reason) => match schema.mode {
                ParseMode::Strict => {
                    return Err(IngestError::Parse {
                        path: path.to_owned(),
                        line: lineno + 1,
                        reason,
                    })
                }
                ParseMode::Lenient => skipped += 1,
            },
        }
    }
    if records.is_empty() {
        return Err(IngestError::NoValidRows {
            path: path.to_owned(),
            skipped,
        });
    }
    Ok(LoadedInteractions {
        records,
        skipped_rows: skipped,
    })
}

/// Reads one column of raw IDs (e.g. an item catalog), in file order.
///
/// Lines are decoded lossily; only the ID column has to be valid text.
pub fn load_id_list(path: &Path, separator: &str, column: usize, header: bool) -> Result<Vec<String>, IngestError> {
    if separator.is_empty() {
        return Err(IngestError::InvalidSchema("empty separator".into()));
    }
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut ids = Vec::new();
    for (lineno, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if lineno == 0 && header {
            continue;
        }
        let line = String::from_utf8_lossy(line);
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let id = line.split(separator).nth(column).map(str::trim).unwrap_or("");
        if id.is_empty() {
            return Err(IngestError::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                reason: format!("missing id in column {column}"),
            });
        }
        ids.push(id.to_owned());
    }
    Ok(ids)
}

/// Writes `user \t item \t rating [\t timestamp]` rows in (user, item) order.
pub fn write_tsv(dataset: &Dataset, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let users = dataset.user_map();
    let items = dataset.item_map();
    for it in dataset.interactions() {
        let u = users.raw(it.user).unwrap_or_default();
        let i = items.raw(it.item).unwrap_or_default();
        match it.timestamp {
            Some(ts) => writeln!(w, "{u}\t{i}\t{}\t{ts}", it.rating)?,
            None => writeln!(w, "{u}\t{i}\t{}", it.rating)?,
        }
    }
    w.flush()
}
