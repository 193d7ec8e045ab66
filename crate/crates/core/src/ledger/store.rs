use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

/// Append-only chain file: each record is a big-endian u32 length followed
/// by one block encoding.
#[derive(Debug)]
pub struct BlockFile {
    path: PathBuf,
    file: File,
}

impl BlockFile {
    /// Opens (creating if needed) and returns the records already present.
    pub fn open(path: impl AsRef<Path>) -> io::Result<(Self, Vec<Vec<u8>>)> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let records = split_records(&bytes)?;
        Ok((BlockFile { path, file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &[u8]) -> io::Result<()> {
        let len = u32::try_from(record.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "block too large"))?;
        let mut buf = Vec::with_capacity(4 + record.len());
        buf.extend_from_slice(&len.to_be_bytes());
        buf.extend_from_slice(record);
        self.file.write_all(&buf)?;
        self.file.flush()
    }
}

pub fn split_records(mut bytes: &[u8]) -> io::Result<Vec<Vec<u8>>> {
    let mut records = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(truncated());
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        bytes = &bytes[4..];
        if bytes.len() < len {
            return Err(truncated());
        }
        records.push(bytes[..len].to_vec());
        bytes = &bytes[len..];
    }
    Ok(records)
}

fn truncated() -> io::Error {
    io::Error::new(io::ErrorKind::UnexpectedEof, "truncated block record")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_roundtrip_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        {
            let (mut f, existing) = BlockFile::open(&path).unwrap();
            assert!(existing.is_empty());
            f.append(b"one").unwrap();
            f.append(b"").unwrap();
            f.append(b"three").unwrap();
        }
        let (_, records) = BlockFile::open(&path).unwrap();
        assert_eq!(records, vec![b"one".to_vec(), Vec::new(), b"three".to_vec()]);
    }

    #[test]
    fn truncated_tail_is_an_error() {
        assert!(split_records(&[0, 0, 0, 5, b'a']).is_err());
        assert!(split_records(&[0, 0]).is_err());
    }
}
