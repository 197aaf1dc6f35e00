//! The `dataset` command: fetch MNIST into the cache directory with pinned
//! checksums, or check that cached files are present and structurally valid.

use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use laq_core::data::load_mnist_idx;
use sha2::{Digest, Sha256};

use crate::CliFailure;

const MNIST_MIRROR: &str = "https://storage.googleapis.com/cvdf-datasets/mnist";

/// (gzip name, sha256 of the gzip, unpacked name)
const MNIST_FILES: [(&str, &str, &str); 4] = [
    (
        "train-images-idx3-ubyte.gz",
        "440fcabf73cc546fa21475e81ea370265605f56be210a4024d2ca8f203523609",
        "train-images-idx3-ubyte",
    ),
    (
        "train-labels-idx1-ubyte.gz",
        "3552534a0a558bbed6aed32b30c495cca23d567ec52cac8be1a0730e8010255c",
        "train-labels-idx1-ubyte",
    ),
    (
        "t10k-images-idx3-ubyte.gz",
        "8d422c7b0a1c1c79245a5bcf07fe86e33eeafee792b84584aec276f5a2dbc4e6",
        "t10k-images-idx3-ubyte",
    ),
    (
        "t10k-labels-idx1-ubyte.gz",
        "f7ae60f92e00ec6debd23a6088c31dbd2371eca3ffa0defaefb259924204aec6",
        "t10k-labels-idx1-ubyte",
    ),
];

pub fn cmd_dataset(action: &str, name: &str, cache_dir: &Path) -> Result<()> {
    if name != "mnist" {
        bail!(CliFailure::Config(format!(
            "unknown dataset {name:?}; only mnist has fetch/check support \
             (libsvm files are passed to --dataset by path)"
        )));
    }
    match action {
        "fetch" => fetch_mnist(cache_dir),
        "check" => check_mnist(cache_dir),
        other => bail!(CliFailure::Config(format!(
            "unknown action {other:?} (fetch, check)"
        ))),
    }
}

fn fetch_mnist(cache_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(cache_dir)?;
    for (gz_name, expected_sha, plain_name) in MNIST_FILES {
        let target = cache_dir.join(plain_name);
        if target.exists() {
            println!("{plain_name}: already present");
            continue;
        }
        let url = format!("{MNIST_MIRROR}/{gz_name}");
        println!("fetching {url}");
        let response = reqwest::blocking::get(&url)
            .and_then(|r| r.error_for_status())
            .map_err(|e| anyhow!(CliFailure::Data(format!("download failed: {e}"))))?;
        let compressed = response
            .bytes()
            .map_err(|e| anyhow!(CliFailure::Data(format!("download failed: {e}"))))?;

        let digest = hex_digest(&compressed);
        if digest != expected_sha {
            bail!(CliFailure::Data(format!(
                "checksum mismatch for {gz_name}: got {digest}, expected {expected_sha}"
            )));
        }

        let mut decoder = flate2::read::GzDecoder::new(compressed.as_ref());
        let mut plain = Vec::new();
        decoder
            .read_to_end(&mut plain)
            .map_err(|e| anyhow!(CliFailure::Data(format!("gunzip failed: {e}"))))?;
        std::fs::write(&target, &plain)?;
        println!("{plain_name}: {} bytes, checksum ok", plain.len());
    }
    check_mnist(cache_dir)
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Presence and structural integrity: all four files exist and the IDX
/// pairs parse with consistent counts.
fn check_mnist(cache_dir: &Path) -> Result<()> {
    for (_, _, plain_name) in MNIST_FILES {
        let path = cache_dir.join(plain_name);
        if !path.exists() {
            bail!(CliFailure::Data(format!(
                "{} is missing; run: laq dataset fetch mnist --cache-dir {}",
                path.display(),
                cache_dir.display()
            )));
        }
    }
    let train = load_mnist_idx(
        cache_dir.join("train-images-idx3-ubyte"),
        cache_dir.join("train-labels-idx1-ubyte"),
    )
    .map_err(|e| anyhow!(CliFailure::Data(e.to_string())))?;
    let test = load_mnist_idx(
        cache_dir.join("t10k-images-idx3-ubyte"),
        cache_dir.join("t10k-labels-idx1-ubyte"),
    )
    .map_err(|e| anyhow!(CliFailure::Data(e.to_string())))?;
    println!(
        "mnist ok: {} training and {} test samples, {} features",
        train.len(),
        test.len(),
        train.feature_dim()
    );
    Ok(())
}
