//! IDX binary loader for the MNIST image/label pair.
//!
//! Big-endian header: magic (2051 for images with row/col dims, 2049 for
//! labels), then the dimension sizes, then raw `u8` payload. Pixels are
//! scaled into `[0, 1]`; labels become one-hot rows over 10 classes.

use std::path::Path;

use ndarray::Array2;

use super::{one_hot, DataError, Dataset};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;
const CLASSES: usize = 10;

struct Reader<'a> {
    path: String,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn read_u32(&mut self) -> Result<u32, DataError> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(DataError::Truncated {
                path: self.path.clone(),
                expected: end,
                actual: self.bytes.len(),
            });
        }
        let value = u32::from_be_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(value)
    }

    fn payload(&self, expected: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos + expected;
        if end > self.bytes.len() {
            return Err(DataError::Truncated {
                path: self.path.clone(),
                expected: end,
                actual: self.bytes.len(),
            });
        }
        Ok(&self.bytes[self.pos..end])
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an MNIST-style IDX image/label pair into a [`Dataset`] with
/// flattened `rows·cols` features scaled to `[0, 1]`.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, DataError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let image_bytes = read_file(images_path)?;
    let mut reader = Reader {
        path: images_path.display().to_string(),
        bytes: &image_bytes,
        pos: 0,
    };
    let magic = reader.read_u32()?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: reader.path,
            got: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let count = reader.read_u32()? as usize;
    let rows = reader.read_u32()? as usize;
    let cols = reader.read_u32()? as usize;
    if count == 0 {
        return Err(DataError::Empty { path: reader.path });
    }
    let pixels = reader.payload(count * rows * cols)?;
    let dim = rows * cols;
    let features = Array2::from_shape_fn((count, dim), |(i, j)| pixels[i * dim + j] as f64 / 255.0);

    let label_bytes = read_file(labels_path)?;
    let mut reader = Reader {
        path: labels_path.display().to_string(),
        bytes: &label_bytes,
        pos: 0,
    };
    let magic = reader.read_u32()?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: reader.path,
            got: magic,
            expected: LABEL_MAGIC,
        });
    }
    let label_count = reader.read_u32()? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let raw = reader.payload(label_count)?;
    let mut classes = Vec::with_capacity(label_count);
    for (index, &value) in raw.iter().enumerate() {
        if value as usize >= CLASSES {
            return Err(DataError::LabelOutOfRange {
                path: labels_path.display().to_string(),
                index,
                value,
                classes: CLASSES,
            });
        }
        classes.push(value as usize);
    }

    Ok(Dataset {
        features,
        labels: one_hot(&classes, CLASSES),
        name: "mnist".to_string(),
        classes: CLASSES,
    })
}
