//! MNIST in the IDX container format.
//!
//! Both files start with a big-endian magic number (`0x00000803` for the
//! `N x 28 x 28` image array, `0x00000801` for the `N` label vector) followed
//! by one big-endian `u32` per dimension, then raw `u8` data.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Classification data: one input row per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, split: Split) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{:?} inputs for {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows `indices` gathered into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(Tensor::matrix(indices.len(), d, data)?, labels, self.split)
    }
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl IdxReader<'_> {
    fn header(&self, magic: u32, ndims: usize) -> Result<Vec<usize>> {
        let need = 4 * (1 + ndims);
        if self.bytes.len() < 4 {
            return Err(Error::Length {
                path: self.path.to_path_buf(),
                expected: need,
                actual: self.bytes.len(),
            });
        }
        let actual = read_u32(&self.bytes[0..4]);
        if actual != magic {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                expected: magic,
                actual,
            });
        }
        if self.bytes.len() < need {
            return Err(Error::Length {
                path: self.path.to_path_buf(),
                expected: need,
                actual: self.bytes.len(),
            });
        }
        let dims: Vec<usize> = (0..ndims)
            .map(|i| read_u32(&self.bytes[4 + 4 * i..8 + 4 * i]) as usize)
            .collect();
        let expected = need + dims.iter().product::<usize>();
        if self.bytes.len() < expected {
            return Err(Error::Length {
                path: self.path.to_path_buf(),
                expected,
                actual: self.bytes.len(),
            });
        }
        Ok(dims)
    }
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Image file as an `N x 784` tensor with pixels scaled to `[0, 1]`.
pub fn load_images(path: &Path) -> Result<Tensor> {
    let bytes = read_file(path)?;
    let dims = IdxReader { bytes: &bytes, path }.header(IMAGE_MAGIC, 3)?;
    if dims[1] != IMAGE_SIDE || dims[2] != IMAGE_SIDE {
        return Err(Error::Consistency(format!(
            "{}: expected {IMAGE_SIDE}x{IMAGE_SIDE} images, found {}x{}",
            path.display(),
            dims[1],
            dims[2]
        )));
    }
    let n = dims[0];
    let pixels = &bytes[16..16 + n * IMAGE_PIXELS];
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Tensor::matrix(n, IMAGE_PIXELS, data)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    let dims = IdxReader { bytes: &bytes, path }.header(LABEL_MAGIC, 1)?;
    let labels: Vec<usize> = bytes[8..8 + dims[0]].iter().map(|&b| b as usize).collect();
    if let Some(bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::Consistency(format!(
            "{}: label {bad} outside 0..{NUM_CLASSES}",
            path.display()
        )));
    }
    Ok(labels)
}

pub fn load_mnist(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let inputs = load_images(images_path)?;
    let labels = load_labels(labels_path)?;
    if inputs.rows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} has {} images but {} has {} labels",
            images_path.display(),
            inputs.rows(),
            labels_path.display(),
            labels.len()
        )));
    }
    Dataset::new(inputs, labels, split)
}

/// Train and test splits from a directory holding the four standard files.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_mnist(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS), Split::Train)?;
    let test = load_mnist(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS), Split::Test)?;
    Ok((train, test))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes raw `u8` images (row-major, 784 bytes each) as an IDX3 file.
pub fn write_idx_images(path: &Path, pixels: &[u8]) -> Result<()> {
    if pixels.len() % IMAGE_PIXELS != 0 {
        return Err(Error::Argument(format!(
            "{} bytes is not a whole number of {IMAGE_PIXELS}-pixel images",
            pixels.len()
        )));
    }
    let n = (pixels.len() / IMAGE_PIXELS) as u32;
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n, IMAGE_SIDE as u32, IMAGE_SIDE as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(pixels);
    write_file(path, &bytes)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_file(path, &bytes)
}

/// `n` examples drawn without replacement.
pub fn subset(dataset: &Dataset, n: usize, rng: &mut Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("subset size must be positive".into()));
    }
    if n > dataset.len() {
        return Err(Error::Argument(format!(
            "subset of {n} from a dataset of {}",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    // Partial Fisher-Yates: only the first n slots are needed.
    for i in 0..n {
        let j = i + rng.below(dataset.len() - i);
        idx.swap(i, j);
    }
    idx.truncate(n);
    dataset.select(&idx)
}
