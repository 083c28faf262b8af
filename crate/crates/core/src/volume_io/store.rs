//! Lazy slice access over a set of on-disk NPY volumes.
//!
//! Only headers are read when the store opens. Slices are read on demand
//! and kept in a keyed LRU cache whose size is bounded by a slice budget.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::npy::{decode_f64, parse_header, Dtype};
use crate::error::{Error, FormatError, Result};

pub const DEFAULT_SLICE_BUDGET: usize = 512;

/// One materialized `h x w` slice.
pub type Slice = Arc<Vec<f32>>;

#[derive(Clone, Debug)]
struct ScanEntry {
    path: PathBuf,
    dtype: Dtype,
    dims: [usize; 3],
    data_offset: u64,
}

#[derive(Default)]
struct Cache {
    map: HashMap<(usize, usize), Slice>,
    order: VecDeque<(usize, usize)>,
    peak: usize,
    misses: usize,
}

pub struct VolumeStore {
    scans: Vec<ScanEntry>,
    budget: usize,
    cache: Mutex<Cache>,
}

/// Opens a store over 3-D NPY files with the default slice budget.
pub fn open_lazy<P: AsRef<Path>>(paths: &[P]) -> Result<VolumeStore> {
    VolumeStore::open(paths, DEFAULT_SLICE_BUDGET)
}

impl VolumeStore {
    pub fn open<P: AsRef<Path>>(paths: &[P], budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Config("slice budget must be at least 1".into()));
        }
        let scans = paths
            .iter()
            .map(|p| Self::probe(p.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scans,
            budget,
            cache: Mutex::new(Cache::default()),
        })
    }

    fn probe(path: &Path) -> Result<ScanEntry> {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut head = vec![0u8; 4096.min(len as usize)];
        f.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
        let header = parse_header(&head)?;
        if header.fortran_order {
            return Err(FormatError::FortranOrder.into());
        }
        let dims: [usize; 3] = header.shape.as_slice().try_into().map_err(|_| {
            FormatError::Header(format!(
                "{}: expected a 3-D array, got {:?}",
                path.display(),
                header.shape
            ))
        })?;
        let expected = header.data_offset + dims.iter().product::<usize>() * header.dtype.size();
        if len as usize != expected {
            return Err(FormatError::LengthMismatch {
                expected,
                found: len as usize,
            }
            .into());
        }
        Ok(ScanEntry {
            path: path.to_path_buf(),
            dtype: header.dtype,
            dims,
            data_offset: header.data_offset as u64,
        })
    }

    pub fn scan_count(&self) -> usize {
        self.scans.len()
    }

    pub fn scan_dims(&self, scan: usize) -> Option<[usize; 3]> {
        self.scans.get(scan).map(|s| s.dims)
    }

    pub fn scan_path(&self, scan: usize) -> Option<&Path> {
        self.scans.get(scan).map(|s| s.path.as_path())
    }

    /// Total addressable slices across all scans.
    pub fn slice_count(&self) -> usize {
        self.scans.iter().map(|s| s.dims[0]).sum()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn resident(&self) -> usize {
        self.cache.lock().expect("cache lock").map.len()
    }

    /// Largest number of slices ever held at once.
    pub fn peak_resident(&self) -> usize {
        self.cache.lock().expect("cache lock").peak
    }

    /// Number of slices read from disk so far.
    pub fn disk_reads(&self) -> usize {
        self.cache.lock().expect("cache lock").misses
    }

    pub fn slice(&self, scan: usize, index: usize) -> Result<Slice> {
        let entry = self
            .scans
            .get(scan)
            .ok_or_else(|| Error::OutOfRange(format!("scan {scan} of {}", self.scans.len())))?;
        if index >= entry.dims[0] {
            return Err(Error::OutOfRange(format!(
                "slice {index} of {} in scan {scan}",
                entry.dims[0]
            )));
        }
        let key = (scan, index);
        {
            let mut cache = self.cache.lock().expect("cache lock");
            if let Some(hit) = cache.map.get(&key).cloned() {
                if let Some(pos) = cache.order.iter().position(|k| *k == key) {
                    cache.order.remove(pos);
                }
                cache.order.push_back(key);
                return Ok(hit);
            }
        }
        let slice = Arc::new(Self::read_slice(entry, index)?);
        let mut cache = self.cache.lock().expect("cache lock");
        cache.misses += 1;
        if !cache.map.contains_key(&key) {
            while cache.map.len() >= self.budget {
                let Some(old) = cache.order.pop_front() else { break };
                cache.map.remove(&old);
            }
            cache.map.insert(key, slice.clone());
            cache.order.push_back(key);
            cache.peak = cache.peak.max(cache.map.len());
        }
        Ok(slice)
    }

    fn read_slice(entry: &ScanEntry, index: usize) -> Result<Vec<f32>> {
        let plane = entry.dims[1] * entry.dims[2];
        let width = entry.dtype.size();
        let mut f = File::open(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
        f.seek(SeekFrom::Start(entry.data_offset + (index * plane * width) as u64))
            .map_err(|e| Error::io(&entry.path, e))?;
        let mut buf = vec![0u8; plane * width];
        f.read_exact(&mut buf).map_err(|e| Error::io(&entry.path, e))?;
        Ok(buf
            .chunks_exact(width)
            .map(|b| decode_f64(entry.dtype, b) as f32)
            .collect())
    }
}
