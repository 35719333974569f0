//! IDX file format, bit-exact: big-endian 32-bit magic and dimension sizes,
//! then unsigned bytes row-major. Images use magic 0x00000803 (3 dimensions),
//! labels 0x00000801 (1 dimension).

use std::io::{Read, Write};

use thiserror::Error;

use super::RawExample;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number {got:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, got: u32 },
    #[error("truncated stream: {0}")]
    Truncated(String),
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label value {0} is not a digit")]
    BadDigit(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, IdxError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| IdxError::Truncated(format!("while reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parses paired image and label streams into raw examples.
pub fn load_idx<R1: Read, R2: Read>(
    mut images: R1,
    mut labels: R2,
) -> Result<Vec<RawExample>, IdxError> {
    let magic = read_u32(&mut images, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            expected: IMAGES_MAGIC,
            got: magic,
        });
    }
    let image_count = read_u32(&mut images, "image count")? as usize;
    let rows = read_u32(&mut images, "row count")? as usize;
    let cols = read_u32(&mut images, "column count")? as usize;

    let magic = read_u32(&mut labels, "label magic")?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            expected: LABELS_MAGIC,
            got: magic,
        });
    }
    let label_count = read_u32(&mut labels, "label count")? as usize;
    if image_count != label_count {
        return Err(IdxError::CountMismatch {
            images: image_count,
            labels: label_count,
        });
    }

    let pixel_count = rows * cols;
    let mut examples = Vec::with_capacity(image_count);
    let mut digit = [0u8; 1];
    for idx in 0..image_count {
        let mut pixels = vec![0u8; pixel_count];
        images
            .read_exact(&mut pixels)
            .map_err(|_| IdxError::Truncated(format!("image payload at example {idx}")))?;
        labels
            .read_exact(&mut digit)
            .map_err(|_| IdxError::Truncated(format!("label payload at example {idx}")))?;
        if digit[0] > 9 {
            return Err(IdxError::BadDigit(digit[0]));
        }
        examples.push(RawExample {
            pixels,
            digit: digit[0],
        });
    }
    Ok(examples)
}

/// Writes examples back out as an IDX image/label stream pair.
pub fn write_idx<W1: Write, W2: Write>(
    mut images: W1,
    mut labels: W2,
    examples: &[RawExample],
    rows: usize,
    cols: usize,
) -> Result<(), IdxError> {
    images.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    images.write_all(&(examples.len() as u32).to_be_bytes())?;
    images.write_all(&(rows as u32).to_be_bytes())?;
    images.write_all(&(cols as u32).to_be_bytes())?;
    labels.write_all(&LABELS_MAGIC.to_be_bytes())?;
    labels.write_all(&(examples.len() as u32).to_be_bytes())?;
    for ex in examples {
        assert_eq!(ex.pixels.len(), rows * cols, "pixel count mismatch");
        images.write_all(&ex.pixels)?;
        labels.write_all(&[ex.digit])?;
    }
    Ok(())
}
