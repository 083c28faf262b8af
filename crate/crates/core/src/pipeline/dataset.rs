use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::train::SliceDataset;
use crate::volume_io::VolumeStore;

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

/// Slices of an augmented tree `{root}/{scan_id}/{copy}/{scan,mask}.npy`,
/// read lazily. Every copy of a scan belongs to that scan's group.
pub struct AugmentedTree {
    scan_ids: Vec<String>,
    scans: VolumeStore,
    masks: VolumeStore,
    /// `(volume, slice, group)` per dataset index.
    index: Vec<(usize, usize, usize)>,
    shape: (usize, usize),
}

impl AugmentedTree {
    pub fn open(root: impl AsRef<Path>, slice_budget: usize) -> Result<Self> {
        let root = root.as_ref();
        let mut scan_ids = Vec::new();
        let (mut scan_paths, mut mask_paths, mut groups) = (Vec::new(), Vec::new(), Vec::new());
        for (scan_id, dir) in sorted_subdirs(root)? {
            let mut copies: Vec<(usize, PathBuf)> = sorted_subdirs(&dir)?
                .into_iter()
                .filter_map(|(name, p)| name.parse().ok().map(|k| (k, p)))
                .collect();
            copies.sort();
            if copies.is_empty() {
                continue;
            }
            let group = scan_ids.len();
            scan_ids.push(scan_id);
            for (_, copy_dir) in copies {
                scan_paths.push(copy_dir.join("scan.npy"));
                mask_paths.push(copy_dir.join("mask.npy"));
                groups.push(group);
            }
        }
        if scan_paths.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "{}: no augmented copies found",
                root.display()
            )));
        }
        let scans = VolumeStore::open(&scan_paths, slice_budget)?;
        let masks = VolumeStore::open(&mask_paths, slice_budget)?;
        let first = scans.scan_dims(0).expect("at least one volume");
        let mut index = Vec::new();
        for (v, &group) in groups.iter().enumerate() {
            let dims = scans.scan_dims(v).expect("volume index in range");
            if dims[1..] != first[1..] || masks.scan_dims(v) != Some(dims) {
                return Err(Error::contract(format!(
                    "{}: dims {:?} do not match {:?} (or its mask)",
                    scan_paths[v].display(),
                    dims,
                    first
                )));
            }
            index.extend((0..dims[0]).map(|z| (v, z, group)));
        }
        Ok(Self {
            scan_ids,
            scans,
            masks,
            index,
            shape: (first[1], first[2]),
        })
    }

    pub fn scan_ids(&self) -> &[String] {
        &self.scan_ids
    }

    pub fn volume_count(&self) -> usize {
        self.scans.scan_count()
    }
}

impl SliceDataset for AugmentedTree {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn slice_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn group(&self, index: usize) -> usize {
        self.index[index].2
    }

    fn load(&self, index: usize) -> Result<(Vec<f32>, Vec<f32>)> {
        let &(v, z, _) = self
            .index
            .get(index)
            .ok_or_else(|| Error::OutOfRange(format!("slice {index} of {}", self.index.len())))?;
        Ok((
            self.scans.slice(v, z)?.as_ref().clone(),
            self.masks.slice(v, z)?.as_ref().clone(),
        ))
    }
}
