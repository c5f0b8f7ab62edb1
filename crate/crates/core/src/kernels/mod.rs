//! Reference kernels.
//!
//! These functions define the numerics of every built-in op. The CPU
//! fallback and the FPGA device model both call them, so a result never
//! depends on where a node was placed.

mod literal;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use literal::{format_literal, parse_literal, LiteralError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dtype mismatch: expected {expected}, got {got}")]
    DTypeMismatch { expected: DType, got: DType },
    #[error("{op} takes {expected} argument(s), got {got}")]
    Arity { op: OpType, expected: usize, got: usize },
    #[error("no reference implementation for op {0}")]
    Unsupported(OpType),
    #[error("custom kernel {name} failed: {message}")]
    Custom { name: String, message: String },
}

fn shape_err(msg: impl Into<String>) -> KernelError {
    KernelError::ShapeMismatch(msg.into())
}

/// Operation type of a compute node or kernel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpType {
    /// Fully connected, float32.
    FcF32,
    /// Fully connected with a synchronization barrier, float32.
    FcF32Barrier,
    /// 5x5 convolution, one filter, fixed int16 weights.
    Conv5x5I16,
    /// 3x3 convolution, two filters, fixed int16 weights.
    Conv3x3x2I16,
    Custom(String),
}

impl OpType {
    pub const BUILTIN: [OpType; 4] = [
        OpType::FcF32,
        OpType::FcF32Barrier,
        OpType::Conv5x5I16,
        OpType::Conv3x3x2I16,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            OpType::FcF32 => "FC_F32",
            OpType::FcF32Barrier => "FC_F32_BARRIER",
            OpType::Conv5x5I16 => "CONV5x5_I16",
            OpType::Conv3x3x2I16 => "CONV3x3x2_I16",
            OpType::Custom(name) => name,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, OpType::Custom(_))
    }

    /// `(filters, kh, kw)` for the fixed-weight convolutions.
    pub fn conv_weight_shape(&self) -> Option<[usize; 3]> {
        match self {
            OpType::Conv5x5I16 => Some([1, 5, 5]),
            OpType::Conv3x3x2I16 => Some([2, 3, 3]),
            _ => None,
        }
    }

    pub fn arity(&self) -> Option<usize> {
        match self {
            OpType::FcF32 | OpType::FcF32Barrier => Some(3),
            OpType::Conv5x5I16 | OpType::Conv3x3x2I16 => Some(1),
            OpType::Custom(_) => None,
        }
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid op type {0:?}")]
pub struct OpTypeParseError(pub String);

impl FromStr for OpType {
    type Err = OpTypeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "FC_F32" => OpType::FcF32,
            "FC_F32_BARRIER" => OpType::FcF32Barrier,
            "CONV5x5_I16" => OpType::Conv5x5I16,
            "CONV3x3x2_I16" => OpType::Conv3x3x2I16,
            "" | "INPUT" | "CONST" | "OUTPUT" => return Err(OpTypeParseError(s.to_owned())),
            other => OpType::Custom(other.to_owned()),
        })
    }
}

impl Serialize for OpType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OpType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I16,
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::I16 => "i16",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I16(Vec<i16>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::I16(_) => DType::I16,
        }
    }
}

/// Dense row-major tensor. Extents may be zero (an empty tensor); kernels
/// reject those.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self, KernelError> {
        if shape.is_empty() {
            return Err(shape_err("tensor needs at least one dimension"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(format!(
                "shape {shape:?} holds {n} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, KernelError> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn i16(shape: Vec<usize>, data: Vec<i16>) -> Result<Self, KernelError> {
        Self::new(shape, TensorData::I16(data))
    }

    pub fn zeros(dtype: DType, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        let data = match dtype {
            DType::F32 => TensorData::F32(vec![0.0; n]),
            DType::I16 => TensorData::I16(vec![0; n]),
        };
        Self { shape, data }
    }

    /// Uniform random tensor: F32 in [-1, 1), I16 across the full range.
    pub fn random(dtype: DType, shape: Vec<usize>, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = match dtype {
            DType::F32 => TensorData::F32((0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()),
            DType::I16 => TensorData::I16((0..n).map(|_| rng.gen()).collect()),
        };
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_f32(&self) -> Result<&[f32], KernelError> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::I16(_) => Err(KernelError::DTypeMismatch {
                expected: DType::F32,
                got: DType::I16,
            }),
        }
    }

    pub fn as_i16(&self) -> Result<&[i16], KernelError> {
        match &self.data {
            TensorData::I16(v) => Ok(v),
            TensorData::F32(_) => Err(KernelError::DTypeMismatch {
                expected: DType::I16,
                got: DType::F32,
            }),
        }
    }

    /// Equality on the bit patterns of the elements (NaN-safe, distinguishes -0.0).
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::I16(a), TensorData::I16(b)) => a == b,
            _ => false,
        }
    }
}

/// Convolution weights baked into a role.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedWeights {
    values: Tensor,
    scale_shift: u32,
}

impl FixedWeights {
    /// `values` must be I16 with shape `(filters, kh, kw)`; results are
    /// shifted right by `scale_shift` (0..=31) before saturation.
    pub fn new(values: Tensor, scale_shift: u32) -> Result<Self, KernelError> {
        values.as_i16()?;
        if values.shape().len() != 3 || values.shape().contains(&0) {
            return Err(shape_err(format!(
                "weights must be a non-empty (filters, kh, kw) tensor, got {:?}",
                values.shape()
            )));
        }
        if scale_shift > 31 {
            return Err(shape_err(format!("scale_shift {scale_shift} exceeds 31")));
        }
        Ok(Self { values, scale_shift })
    }

    /// Pseudo-random weights in `[-64, 64]` drawn from a ChaCha8 stream.
    pub fn seeded(shape: [usize; 3], seed: u64, scale_shift: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-64i16..=64)).collect();
        Self::new(Tensor::i16(shape.to_vec(), data).expect("shape matches"), scale_shift)
            .expect("valid weights")
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn scale_shift(&self) -> u32 {
        self.scale_shift
    }

    /// `(filters, kh, kw)`
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2])
    }
}

fn fc_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize), KernelError> {
    let (is, ws, bs) = (input.shape(), weights.shape(), bias.shape());
    if is.len() != 2 || ws.len() != 2 || bs.len() != 1 {
        return Err(shape_err(format!(
            "fully connected expects input [M,K], weights [K,N], bias [N]; got {is:?}, {ws:?}, {bs:?}"
        )));
    }
    let (m, k, n) = (is[0], is[1], ws[1]);
    if ws[0] != k || bs[0] != n {
        return Err(shape_err(format!(
            "fully connected operands do not conform: {is:?} x {ws:?} + {bs:?}"
        )));
    }
    if m == 0 || k == 0 || n == 0 {
        return Err(shape_err("fully connected operands must be non-empty"));
    }
    Ok((m, k, n))
}

fn fc_into(x: &[f32], w: &[f32], b: &[f32], (m, k, n): (usize, usize, usize), out: &mut [f32]) {
    for row in 0..m {
        for col in 0..n {
            let mut acc = 0.0f32;
            for i in 0..k {
                acc += x[row * k + i] * w[i * n + col];
            }
            out[row * n + col] = acc + b[col];
        }
    }
}

/// `out[m,n] = (Σ_k input[m,k]·weights[k,n]) + bias[n]`, products summed
/// in ascending `k` starting from 0.0, bias added last.
pub fn fc_f32(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, KernelError> {
    let dims = fc_dims(input, weights, bias)?;
    let mut out = vec![0.0f32; dims.0 * dims.2];
    fc_into(input.as_f32()?, weights.as_f32()?, bias.as_f32()?, dims, &mut out);
    Tensor::f32(vec![dims.0, dims.2], out)
}

/// Same numerics as [`fc_f32`]. All rows are reduced into a scratch buffer
/// before a single barrier; only then is the output written.
pub fn fc_f32_barrier(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, KernelError> {
    Ok(fc_f32_barrier_traced(input, weights, bias)?.0)
}

fn fc_f32_barrier_traced(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, u32), KernelError> {
    let dims = fc_dims(input, weights, bias)?;
    let mut partial = vec![0.0f32; dims.0 * dims.2];
    fc_into(input.as_f32()?, weights.as_f32()?, bias.as_f32()?, dims, &mut partial);
    // every row's partials are complete here; writeback follows the barrier
    Ok((Tensor::f32(vec![dims.0, dims.2], partial)?, 1))
}

fn conv_input_dims(input: &Tensor) -> Result<(usize, usize), KernelError> {
    match *input.shape() {
        [h, w] | [1, h, w] => Ok((h, w)),
        ref s => Err(shape_err(format!("convolution input must be [H,W] or [1,H,W], got {s:?}"))),
    }
}

fn saturate_i16(v: i32) -> i16 {
    v.clamp(i16::MIN as i32, i16::MAX as i32) as i16
}

/// Valid, stride-1 correlation of an `[H,W]` (or `[1,H,W]`) I16 input with
/// `F` fixed filters, producing `[F, H-kh+1, W-kw+1]`.
///
/// Each output accumulates its `kh·kw` products in row-major kernel order
/// into an i32 with saturating adds, is arithmetically shifted right by
/// `scale_shift`, and is clamped to `[-32768, 32767]`.
pub fn conv2d_i16(input: &Tensor, weights: &FixedWeights) -> Result<Tensor, KernelError> {
    let x = input.as_i16()?;
    let (h, w) = conv_input_dims(input)?;
    let (f, kh, kw) = weights.dims();
    if h < kh || w < kw {
        return Err(shape_err(format!(
            "input {h}x{w} smaller than {kh}x{kw} kernel"
        )));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let k = weights.values().as_i16()?;
    let shift = weights.scale_shift();
    let mut out = Vec::with_capacity(f * oh * ow);
    for filter in 0..f {
        let taps = &k[filter * kh * kw..(filter + 1) * kh * kw];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0i32;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let px = i32::from(x[(oy + ky) * w + ox + kx]);
                        acc = acc.saturating_add(px * i32::from(taps[ky * kw + kx]));
                    }
                }
                out.push(saturate_i16(acc >> shift));
            }
        }
    }
    Tensor::i16(vec![f, oh, ow], out)
}

/// Arithmetic operations performed by one op application; a MAC counts as 2.
///
/// `shapes` are the operand shapes: `[input, weights]` for the fully
/// connected ops (a trailing bias shape is ignored) and `[input, weights]`
/// for convolutions, with weights `(F, kh, kw)`.
pub fn op_count(op: &OpType, shapes: &[&[usize]]) -> Result<u64, KernelError> {
    let need = |n: usize| {
        if shapes.len() < n {
            Err(KernelError::Arity { op: op.clone(), expected: n, got: shapes.len() })
        } else {
            Ok(())
        }
    };
    match op {
        OpType::FcF32 | OpType::FcF32Barrier => {
            need(2)?;
            match (shapes[0], shapes[1]) {
                (&[m, k], &[k2, n]) if k == k2 => {
                    let (m, k, n) = (m as u64, k as u64, n as u64);
                    Ok(2 * m * k * n + m * n)
                }
                (a, b) => Err(shape_err(format!("fully connected shapes {a:?} x {b:?}"))),
            }
        }
        OpType::Conv5x5I16 | OpType::Conv3x3x2I16 => {
            need(2)?;
            let (h, w) = match *shapes[0] {
                [h, w] | [1, h, w] => (h, w),
                ref s => return Err(shape_err(format!("convolution input {s:?}"))),
            };
            let [f, kh, kw] = <[usize; 3]>::try_from(shapes[1])
                .map_err(|_| shape_err(format!("convolution weights {:?}", shapes[1])))?;
            if h < kh || w < kw {
                return Err(shape_err(format!("input {h}x{w} smaller than {kh}x{kw} kernel")));
            }
            let (oh, ow) = ((h - kh + 1) as u64, (w - kw + 1) as u64);
            Ok(2 * f as u64 * oh * ow * kh as u64 * kw as u64)
        }
        OpType::Custom(_) => Err(KernelError::Unsupported(op.clone())),
    }
}

pub type CustomFn = Arc<dyn Fn(&[Tensor]) -> Result<Tensor, KernelError> + Send + Sync>;

/// The function an op evaluates, with any weights it has baked in.
#[derive(Clone)]
pub enum Reference {
    Fc,
    FcBarrier,
    Conv { op: OpType, weights: FixedWeights },
    Custom { op: OpType, func: CustomFn },
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Fc => f.write_str("Fc"),
            Reference::FcBarrier => f.write_str("FcBarrier"),
            Reference::Conv { op, .. } => write!(f, "Conv({op})"),
            Reference::Custom { op, .. } => write!(f, "Custom({op})"),
        }
    }
}

/// Result of one reference evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub output: Tensor,
    /// Synchronization points the evaluation passed through.
    pub barriers: u32,
}

impl Reference {
    pub fn op_type(&self) -> OpType {
        match self {
            Reference::Fc => OpType::FcF32,
            Reference::FcBarrier => OpType::FcF32Barrier,
            Reference::Conv { op, .. } | Reference::Custom { op, .. } => op.clone(),
        }
    }

    fn check_arity(&self, args: &[Tensor]) -> Result<(), KernelError> {
        let op = self.op_type();
        match op.arity() {
            Some(n) if n != args.len() => Err(KernelError::Arity { op, expected: n, got: args.len() }),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, args: &[Tensor]) -> Result<Evaluation, KernelError> {
        self.check_arity(args)?;
        let (output, barriers) = match self {
            Reference::Fc => (fc_f32(&args[0], &args[1], &args[2])?, 0),
            Reference::FcBarrier => fc_f32_barrier_traced(&args[0], &args[1], &args[2])?,
            Reference::Conv { weights, .. } => (conv2d_i16(&args[0], weights)?, 0),
            Reference::Custom { func, .. } => (func(args)?, 0),
        };
        Ok(Evaluation { output, barriers })
    }

    /// Arithmetic operations for one application on `args`.
    pub fn op_count(&self, args: &[Tensor]) -> Result<u64, KernelError> {
        self.check_arity(args)?;
        match self {
            Reference::Fc | Reference::FcBarrier => {
                op_count(&self.op_type(), &[args[0].shape(), args[1].shape()])
            }
            Reference::Conv { op, weights } => {
                op_count(op, &[args[0].shape(), weights.values().shape()])
            }
            Reference::Custom { op, .. } => Err(KernelError::Unsupported(op.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity(k: usize) -> Tensor {
        let mut v = vec![0.0; k * k];
        for i in 0..k {
            v[i * k + i] = 1.0;
        }
        Tensor::f32(vec![k, k], v).unwrap()
    }

    /// Independent triple loop, bias added after the products.
    fn naive_fc(x: &[f32], w: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut out = Vec::new();
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f32;
                for t in 0..k {
                    s += x[i * k + t] * w[t * n + j];
                }
                out.push(s + b[j]);
            }
        }
        out
    }

    /// Independent convolution oracle: i64 running sum clamped to i32 after
    /// each product, then shift and clamp to i16.
    #[allow(clippy::too_many_arguments)]
    fn naive_conv(x: &[i16], h: usize, w: usize, k: &[i16], f: usize, kh: usize, kw: usize, s: u32) -> Vec<i16> {
        let mut out = Vec::new();
        for q in 0..f {
            for y in 0..=(h - kh) {
                for z in 0..=(w - kw) {
                    let mut acc: i64 = 0;
                    for a in 0..kh {
                        for b in 0..kw {
                            acc += x[(y + a) * w + z + b] as i64 * k[q * kh * kw + a * kw + b] as i64;
                            acc = acc.clamp(i32::MIN as i64, i32::MAX as i64);
                        }
                    }
                    let shifted = (acc as i32) >> s;
                    out.push(shifted.clamp(-32768, 32767) as i16);
                }
            }
        }
        out
    }

    #[test]
    fn fc_identity_weights_copy_input() {
        let x = Tensor::f32(vec![2, 3], vec![1.5, -2.0, 3.25, 0.0, 7.0, -0.5]).unwrap();
        let y = fc_f32(&x, &identity(3), &Tensor::zeros(DType::F32, vec![3])).unwrap();
        assert!(y.bits_eq(&x));
    }

    #[test]
    fn fc_zero_input_broadcasts_bias() {
        let x = Tensor::zeros(DType::F32, vec![2, 4]);
        let w = Tensor::f32(vec![4, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let b = Tensor::f32(vec![2], vec![0.5, -3.0]).unwrap();
        let y = fc_f32(&x, &w, &b).unwrap();
        assert_eq!(y.as_f32().unwrap(), &[0.5, -3.0, 0.5, -3.0]);
    }

    #[test]
    fn fc_random_3x4_by_4x2_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::random(DType::F32, vec![3, 4], &mut rng);
        let w = Tensor::random(DType::F32, vec![4, 2], &mut rng);
        let b = Tensor::random(DType::F32, vec![2], &mut rng);
        let y = fc_f32(&x, &w, &b).unwrap();
        let expect = naive_fc(x.as_f32().unwrap(), w.as_f32().unwrap(), b.as_f32().unwrap(), 3, 4, 2);
        let got: Vec<u32> = y.as_f32().unwrap().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = expect.iter().map(|v| v.to_bits()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn fc_rejects_nonconforming() {
        let x = Tensor::zeros(DType::F32, vec![2, 3]);
        let w = Tensor::zeros(DType::F32, vec![4, 2]);
        let b = Tensor::zeros(DType::F32, vec![2]);
        assert!(matches!(fc_f32(&x, &w, &b), Err(KernelError::ShapeMismatch(_))));
        let xi = Tensor::zeros(DType::I16, vec![2, 4]);
        assert!(matches!(fc_f32(&xi, &w, &b), Err(KernelError::DTypeMismatch { .. })));
    }

    #[test]
    fn barrier_variant_reports_one_barrier() {
        let x = Tensor::f32(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let eval = Reference::FcBarrier
            .evaluate(&[x.clone(), identity(2), Tensor::zeros(DType::F32, vec![2])])
            .unwrap();
        assert_eq!(eval.barriers, 1);
        assert!(eval.output.bits_eq(&x));
        let plain = Reference::Fc
            .evaluate(&[x.clone(), identity(2), Tensor::zeros(DType::F32, vec![2])])
            .unwrap();
        assert_eq!(plain.barriers, 0);
    }

    #[test]
    fn conv_zero_input_gives_zero_output() {
        let wts = FixedWeights::seeded([2, 3, 3], 11, 0);
        let y = conv2d_i16(&Tensor::zeros(DType::I16, vec![6, 6]), &wts).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4]);
        assert!(y.as_i16().unwrap().iter().all(|&v| v == 0));
    }

    #[test]
    fn conv_delta_kernel_crops_center() {
        let mut k = vec![0i16; 25];
        k[12] = 1;
        let wts = FixedWeights::new(Tensor::i16(vec![1, 5, 5], k).unwrap(), 0).unwrap();
        let x: Vec<i16> = (0..64).map(|v| v * 3 - 90).collect();
        let y = conv2d_i16(&Tensor::i16(vec![8, 8], x.clone()).unwrap(), &wts).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        let crop: Vec<i16> = (2..6).flat_map(|r| (2..6).map(move |c| (r, c))).map(|(r, c)| x[r * 8 + c]).collect();
        assert_eq!(y.as_i16().unwrap(), crop.as_slice());
    }

    #[test]
    fn conv_random_6x6_with_two_filters_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Tensor::random(DType::I16, vec![6, 6], &mut rng);
        let wts = FixedWeights::seeded([2, 3, 3], 4, 4);
        let y = conv2d_i16(&x, &wts).unwrap();
        let want = naive_conv(x.as_i16().unwrap(), 6, 6, wts.values().as_i16().unwrap(), 2, 3, 3, 4);
        assert_eq!(y.as_i16().unwrap(), want.as_slice());
    }

    #[test]
    fn conv_saturates_both_ways() {
        let ones = FixedWeights::new(Tensor::i16(vec![1, 5, 5], vec![1; 25]).unwrap(), 0).unwrap();
        let hi = Tensor::i16(vec![7, 7], vec![32767; 49]).unwrap();
        assert!(conv2d_i16(&hi, &ones).unwrap().as_i16().unwrap().iter().all(|&v| v == 32767));
        let lo = Tensor::i16(vec![7, 7], vec![-32768; 49]).unwrap();
        assert!(conv2d_i16(&lo, &ones).unwrap().as_i16().unwrap().iter().all(|&v| v == -32768));
    }

    #[test]
    fn conv_rejects_small_input() {
        let wts = FixedWeights::seeded([1, 5, 5], 1, 0);
        let err = conv2d_i16(&Tensor::zeros(DType::I16, vec![4, 8]), &wts).unwrap_err();
        assert!(matches!(err, KernelError::ShapeMismatch(_)));
        let err = conv2d_i16(&Tensor::zeros(DType::I16, vec![0, 0]), &wts).unwrap_err();
        assert!(matches!(err, KernelError::ShapeMismatch(_)));
    }

    #[test]
    fn op_counts_at_minimal_sizes() {
        assert_eq!(op_count(&OpType::FcF32, &[&[1, 1], &[1, 1]]).unwrap(), 3);
        assert_eq!(op_count(&OpType::Conv5x5I16, &[&[5, 5], &[1, 5, 5]]).unwrap(), 50);
        assert_eq!(op_count(&OpType::Conv3x3x2I16, &[&[3, 3], &[2, 3, 3]]).unwrap(), 36);
        assert!(op_count(&OpType::Custom("x".into()), &[]).is_err());
    }

    #[test]
    fn op_type_names_round_trip() {
        for op in OpType::BUILTIN {
            assert_eq!(op.as_str().parse::<OpType>().unwrap(), op);
        }
        assert_eq!("RELU".parse::<OpType>().unwrap(), OpType::Custom("RELU".into()));
        assert!("CONST".parse::<OpType>().is_err());
    }

    proptest! {
        #[test]
        fn barrier_is_value_identical(m in 1usize..5, k in 1usize..6, n in 1usize..5, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::random(DType::F32, vec![m, k], &mut rng);
            let w = Tensor::random(DType::F32, vec![k, n], &mut rng);
            let b = Tensor::random(DType::F32, vec![n], &mut rng);
            prop_assert!(fc_f32(&x, &w, &b).unwrap().bits_eq(&fc_f32_barrier(&x, &w, &b).unwrap()));
        }

        #[test]
        fn conv_is_linear_below_saturation(
            a in proptest::collection::vec(-10i16..10, 49),
            b in proptest::collection::vec(-10i16..10, 49),
            seed: u64,
        ) {
            // |a+b| < 20 and |w| <= 64 over 25 taps keeps every sum below 32000
            let wts = FixedWeights::seeded([1, 5, 5], seed, 0);
            let ta = Tensor::i16(vec![7, 7], a.clone()).unwrap();
            let tb = Tensor::i16(vec![7, 7], b.clone()).unwrap();
            let sum: Vec<i16> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let ts = Tensor::i16(vec![7, 7], sum).unwrap();
            let ya = conv2d_i16(&ta, &wts).unwrap();
            let yb = conv2d_i16(&tb, &wts).unwrap();
            let ys = conv2d_i16(&ts, &wts).unwrap();
            for ((p, q), r) in ya.as_i16().unwrap().iter().zip(yb.as_i16().unwrap()).zip(ys.as_i16().unwrap()) {
                prop_assert_eq!(*p as i32 + *q as i32, *r as i32);
            }
        }
    }
}
