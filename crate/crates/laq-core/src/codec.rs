//! b-bit gradient-innovation codec.
//!
//! A worker never ships raw gradients. It quantizes the *innovation*
//! `∇f_m(θ) − Q_prev` onto a uniform grid of `2^b` points per coordinate,
//! spanning the hypercube of radius `R = ‖innovation‖_∞` centered at the
//! previously shipped quantization. One upload therefore costs one radius
//! (32 bits on the wire) plus `b` bits per coordinate.
//!
//! The receiver reconstructs `δQ_i = 2τR·code_i − R` with granularity
//! `τ = 1/(2^b − 1)` and adds it onto the stored center, so both ends keep
//! bit-identical state as long as they agree on `R` and the codes.

use thiserror::Error;

/// Fixed wire header: worker_id (u16) + iteration (u32) + bits (u8) + dimension (u32).
pub const WIRE_HEADER_LEN: usize = 11;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("dimension mismatch: gradient has {gradient} coordinates, center has {center}")]
    DimensionMismatch { gradient: usize, center: usize },
    #[error("empty vector: need at least one coordinate")]
    EmptyVector,
    #[error("bits per coordinate must be in 1..=32, got {0}")]
    BitsOutOfRange(u32),
    #[error("code {code} does not fit in {bits} bits")]
    CodeOverflow { code: u32, bits: u32 },
    #[error(
        "packed buffer has {actual} bytes, expected {expected} for {count} codes of {bits} bits"
    )]
    PackedLengthMismatch {
        actual: usize,
        expected: usize,
        count: usize,
        bits: u32,
    },
    #[error("nonzero padding bits in final packed byte")]
    NonzeroPadding,
    #[error("message truncated: need {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("radius is zero but code {code} at coordinate {index} is nonzero")]
    NonzeroCodeAtZeroRadius { index: usize, code: u32 },
}

/// Quantization granularity `τ = 1/(2^b − 1)`.
pub fn quantization_step(bits: u32) -> f64 {
    debug_assert!((1..=32).contains(&bits));
    1.0 / (((1u64 << bits) - 1) as f64)
}

/// Metric-accounting cost of one quantized upload: 32 bits for the radius
/// plus `bits` per coordinate. Independent of the actual wire framing.
pub fn payload_bits(p: usize, bits: u32) -> u64 {
    debug_assert!(p >= 1);
    debug_assert!((1..=32).contains(&bits));
    32 + bits as u64 * p as u64
}

/// A quantized gradient innovation: radius plus one b-bit code per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedInnovation {
    /// `R = ‖gradient − center‖_∞`, always ≥ 0.
    pub radius: f64,
    /// One code in `[0, 2^bits − 1]` per coordinate.
    pub codes: Vec<u32>,
    /// Bits per coordinate, in `1..=32`.
    pub bits: u32,
}

impl QuantizedInnovation {
    pub fn dimension(&self) -> usize {
        self.codes.len()
    }

    /// Checks the type invariants: bits range, code range, radius sign and
    /// the zero-radius ⇒ zero-codes degeneracy.
    pub fn validate(&self) -> Result<(), CodecError> {
        if !(1..=32).contains(&self.bits) {
            return Err(CodecError::BitsOutOfRange(self.bits));
        }
        if self.codes.is_empty() {
            return Err(CodecError::EmptyVector);
        }
        if self.radius.is_nan() || self.radius < 0.0 {
            return Err(CodecError::NegativeRadius(self.radius));
        }
        let max_code = max_code(self.bits);
        for (i, &code) in self.codes.iter().enumerate() {
            if code > max_code {
                return Err(CodecError::CodeOverflow {
                    code,
                    bits: self.bits,
                });
            }
            if self.radius == 0.0 && code != 0 {
                return Err(CodecError::NonzeroCodeAtZeroRadius { index: i, code });
            }
        }
        Ok(())
    }
}

fn max_code(bits: u32) -> u32 {
    ((1u64 << bits) - 1) as u32
}

/// Quantizes `gradient − center` onto the b-bit grid.
///
/// The radius is the ∞-norm of the innovation; each coordinate maps to
/// `floor((g_i − c_i + R)/(2τR) + 1/2)`, clamped into `[0, 2^b − 1]` to
/// absorb floating-point spill at the upper grid edge. A zero radius means
/// the innovation is exactly zero and every code is 0.
pub fn quantize_innovation(
    gradient: &[f64],
    center: &[f64],
    bits: u32,
) -> Result<QuantizedInnovation, CodecError> {
    if gradient.len() != center.len() {
        return Err(CodecError::DimensionMismatch {
            gradient: gradient.len(),
            center: center.len(),
        });
    }
    if gradient.is_empty() {
        return Err(CodecError::EmptyVector);
    }
    if !(1..=32).contains(&bits) {
        return Err(CodecError::BitsOutOfRange(bits));
    }

    let diffs: Vec<f64> = gradient.iter().zip(center).map(|(g, c)| g - c).collect();
    let radius = diffs.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));

    if radius == 0.0 {
        return Ok(QuantizedInnovation {
            radius,
            codes: vec![0; diffs.len()],
            bits,
        });
    }

    let top = max_code(bits);
    let top_f = top as f64;
    let decode_at = |code: u32| radius * (2.0 * code as f64 / top_f - 1.0);
    let codes = diffs
        .iter()
        .map(|&d| {
            // d + radius ≥ 0 holds exactly because radius = max |d|.
            // (d + R)/(2τR) is evaluated as (d + R)/(2R) · (2^b − 1) so that
            // the two grid extremes map to codes 0 and 2^b − 1 exactly.
            let raw = ((d + radius) / (2.0 * radius) * top_f + 0.5).floor();
            let mut code = if raw >= top_f {
                top
            } else if raw <= 0.0 {
                0
            } else {
                raw as u32
            };
            // Right at a cell boundary the rounding above can land one off
            // under floating point; snap to the truly nearest grid point,
            // exact ties resolving to the larger code.
            let mut best = (d - decode_at(code)).abs();
            if code < top {
                let up = (d - decode_at(code + 1)).abs();
                if up <= best {
                    code += 1;
                    best = up;
                }
            }
            if code > 0 && (d - decode_at(code - 1)).abs() < best {
                code -= 1;
            }
            code
        })
        .collect();

    Ok(QuantizedInnovation {
        radius,
        codes,
        bits,
    })
}

/// Reconstructs the innovation `δQ` with `δQ_i = 2τR·code_i − R`.
///
/// The receiver's new stored quantization is `center + δQ`.
pub fn decode_innovation(qi: &QuantizedInnovation) -> Vec<f64> {
    debug_assert!(qi.validate().is_ok());
    if qi.radius == 0.0 {
        return vec![0.0; qi.codes.len()];
    }
    // 2τR·code − R evaluated as R·(2·code/(2^b − 1) − 1): the extreme codes
    // reconstruct to exactly ±R, so re-quantizing a reconstruction against
    // the same center reproduces the radius bit for bit.
    let top_f = max_code(qi.bits) as f64;
    qi.codes
        .iter()
        .map(|&code| qi.radius * (2.0 * code as f64 / top_f - 1.0))
        .collect()
}

/// Packs fixed-width codes MSB-first into bytes; the final byte is
/// zero-padded. Output length is `ceil(count·bits/8)`.
pub fn pack_codes(codes: &[u32], bits: u32) -> Result<Vec<u8>, CodecError> {
    if !(1..=32).contains(&bits) {
        return Err(CodecError::BitsOutOfRange(bits));
    }
    let top = max_code(bits);
    let mut out = Vec::with_capacity(packed_len(codes.len(), bits));
    let mut acc: u64 = 0;
    let mut acc_bits: u32 = 0;
    for &code in codes {
        if code > top {
            return Err(CodecError::CodeOverflow { code, bits });
        }
        acc = (acc << bits) | code as u64;
        acc_bits += bits;
        while acc_bits >= 8 {
            acc_bits -= 8;
            out.push((acc >> acc_bits) as u8);
            acc &= (1u64 << acc_bits) - 1;
        }
    }
    if acc_bits > 0 {
        out.push((acc << (8 - acc_bits)) as u8);
    }
    Ok(out)
}

/// Exact inverse of [`pack_codes`]: recovers `count` codes and rejects
/// wrong-length buffers and nonzero padding bits.
pub fn unpack_codes(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<u32>, CodecError> {
    if !(1..=32).contains(&bits) {
        return Err(CodecError::BitsOutOfRange(bits));
    }
    let expected = packed_len(count, bits);
    if bytes.len() != expected {
        return Err(CodecError::PackedLengthMismatch {
            actual: bytes.len(),
            expected,
            count,
            bits,
        });
    }
    let mut codes = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut acc_bits: u32 = 0;
    let mut iter = bytes.iter();
    for _ in 0..count {
        while acc_bits < bits {
            acc = (acc << 8) | *iter.next().expect("length checked above") as u64;
            acc_bits += 8;
        }
        acc_bits -= bits;
        codes.push((acc >> acc_bits) as u32);
        acc &= (1u64 << acc_bits) - 1;
    }
    // Whatever is left of the final byte must be zero padding.
    if acc != 0 || iter.next().is_some() {
        return Err(CodecError::NonzeroPadding);
    }
    Ok(codes)
}

/// Bytes needed for `count` codes of `bits` bits each.
pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// One uplink transmission, bit-exact.
///
/// Layout (little-endian): `worker_id: u16 | iteration: u32 | bits: u8 |
/// dimension: u32 | radius: f32 | packed_codes`. The header is 11 bytes,
/// so the total length is `11 + 4 + ceil(dimension·bits/8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub worker_id: u16,
    pub iteration: u32,
    pub bits: u8,
    pub dimension: u32,
    pub radius: f32,
    pub packed_codes: Vec<u8>,
}

impl WireMessage {
    /// Builds a message from a quantized innovation. The 64-bit radius is
    /// rounded to binary32 here; callers that need worker/server state to
    /// stay bit-identical must decode through the same rounded value.
    pub fn from_innovation(
        worker_id: u16,
        iteration: u32,
        qi: &QuantizedInnovation,
    ) -> Result<Self, CodecError> {
        qi.validate()?;
        Ok(WireMessage {
            worker_id,
            iteration,
            bits: qi.bits as u8,
            dimension: qi.codes.len() as u32,
            radius: qi.radius as f32,
            packed_codes: pack_codes(&qi.codes, qi.bits)?,
        })
    }

    /// Recovers the innovation carried by this message. The radius is the
    /// binary32 value widened to f64, which is exactly what the sender
    /// committed to its own state.
    pub fn to_innovation(&self) -> Result<QuantizedInnovation, CodecError> {
        let codes = unpack_codes(
            &self.packed_codes,
            self.bits as u32,
            self.dimension as usize,
        )?;
        let qi = QuantizedInnovation {
            radius: self.radius as f64,
            codes,
            bits: self.bits as u32,
        };
        qi.validate()?;
        Ok(qi)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(WIRE_HEADER_LEN + 4 + self.packed_codes.len());
        buf.extend_from_slice(&self.worker_id.to_le_bytes());
        buf.extend_from_slice(&self.iteration.to_le_bytes());
        buf.push(self.bits);
        buf.extend_from_slice(&self.dimension.to_le_bytes());
        buf.extend_from_slice(&self.radius.to_le_bytes());
        buf.extend_from_slice(&self.packed_codes);
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        const FIXED: usize = WIRE_HEADER_LEN + 4;
        if buf.len() < FIXED {
            return Err(CodecError::Truncated {
                expected: FIXED,
                actual: buf.len(),
            });
        }
        let worker_id = u16::from_le_bytes([buf[0], buf[1]]);
        let iteration = u32::from_le_bytes([buf[2], buf[3], buf[4], buf[5]]);
        let bits = buf[6];
        if !(1..=32).contains(&(bits as u32)) {
            return Err(CodecError::BitsOutOfRange(bits as u32));
        }
        let dimension = u32::from_le_bytes([buf[7], buf[8], buf[9], buf[10]]);
        if dimension == 0 {
            return Err(CodecError::EmptyVector);
        }
        let radius = f32::from_le_bytes([buf[11], buf[12], buf[13], buf[14]]);
        let expected = FIXED + packed_len(dimension as usize, bits as u32);
        if buf.len() != expected {
            return Err(CodecError::Truncated {
                expected,
                actual: buf.len(),
            });
        }
        let msg = WireMessage {
            worker_id,
            iteration,
            bits,
            dimension,
            radius,
            packed_codes: buf[FIXED..].to_vec(),
        };
        // Enforce the round-trip invariant (code widths, padding) up front.
        msg.to_innovation()?;
        Ok(msg)
    }

    pub fn encoded_len(&self) -> usize {
        WIRE_HEADER_LEN + 4 + self.packed_codes.len()
    }
}
