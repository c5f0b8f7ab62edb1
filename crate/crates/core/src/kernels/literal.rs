//! Tensor literal text format.
//!
//! ```text
//! f32 2x3: 1 2 3
//! 4 5 6
//! ```
//!
//! A dtype (`f32` or `i16`), the shape as `x`-separated extents, a colon,
//! then the row-major elements separated by any whitespace. `#` starts a
//! comment running to end of line.

use thiserror::Error;

use super::{DType, KernelError, Tensor, TensorData};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiteralError {
    #[error("tensor literal is missing the `dtype shape:` header")]
    MissingHeader,
    #[error("unknown dtype {0:?}")]
    UnknownDType(String),
    #[error("bad shape {0:?}")]
    BadShape(String),
    #[error("bad element {value:?} at index {index}")]
    BadElement { index: usize, value: String },
    #[error(transparent)]
    Shape(#[from] KernelError),
}

pub fn parse_literal(text: &str) -> Result<Tensor, LiteralError> {
    let cleaned: String = text
        .lines()
        .map(|l| l.split_once('#').map_or(l, |(code, _)| code))
        .collect::<Vec<_>>()
        .join("\n");
    let (header, body) = cleaned.split_once(':').ok_or(LiteralError::MissingHeader)?;
    let mut head = header.split_whitespace();
    let dtype = match head.next() {
        Some("f32") => DType::F32,
        Some("i16") => DType::I16,
        Some(other) => return Err(LiteralError::UnknownDType(other.to_owned())),
        None => return Err(LiteralError::MissingHeader),
    };
    let shape_text = head.next().ok_or(LiteralError::MissingHeader)?;
    if head.next().is_some() {
        return Err(LiteralError::BadShape(header.trim().to_owned()));
    }
    let shape = shape_text
        .split('x')
        .map(|e| e.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| LiteralError::BadShape(shape_text.to_owned()))?;

    let bad = |index: usize, value: &str| LiteralError::BadElement { index, value: value.to_owned() };
    let tokens = body.split_whitespace().enumerate();
    let data = match dtype {
        DType::F32 => TensorData::F32(
            tokens
                .map(|(i, t)| t.parse::<f32>().map_err(|_| bad(i, t)))
                .collect::<Result<_, _>>()?,
        ),
        DType::I16 => TensorData::I16(
            tokens
                .map(|(i, t)| t.parse::<i16>().map_err(|_| bad(i, t)))
                .collect::<Result<_, _>>()?,
        ),
    };
    Ok(Tensor::new(shape, data)?)
}

/// Render `t` as a literal, one innermost row per line. F32 elements use
/// the shortest text that parses back to the same bits.
pub fn format_literal(t: &Tensor) -> String {
    let shape = t
        .shape()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("x");
    let row = (*t.shape().last().unwrap_or(&1)).max(1);
    let items: Vec<String> = match t.data() {
        TensorData::F32(v) => v.iter().map(|x| format!("{x:?}")).collect(),
        TensorData::I16(v) => v.iter().map(ToString::to_string).collect(),
    };
    let mut out = format!("{} {shape}:", t.dtype());
    for chunk in items.chunks(row) {
        out.push('\n');
        out.push_str(&chunk.join(" "));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_example() {
        let t = parse_literal("f32 2x3: 1 2 3\n4 5 6").unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.as_f32().unwrap(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn comments_are_ignored() {
        let t = parse_literal("# header comment\ni16 3: -1 0 # tail\n 32767").unwrap();
        assert_eq!(t.as_i16().unwrap(), &[-1, 0, 32767]);
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(parse_literal("1 2 3"), Err(LiteralError::MissingHeader));
        assert!(matches!(parse_literal("f64 2: 1 2"), Err(LiteralError::UnknownDType(_))));
        assert!(matches!(parse_literal("f32 2y2: 1 2"), Err(LiteralError::BadShape(_))));
        assert!(matches!(parse_literal("i16 1: 40000"), Err(LiteralError::BadElement { index: 0, .. })));
        assert!(matches!(parse_literal("f32 2x2: 1 2 3"), Err(LiteralError::Shape(_))));
    }

    proptest! {
        #[test]
        fn f32_literals_round_trip_bitwise(v in proptest::collection::vec(any::<f32>(), 1..24), cols in 1usize..5) {
            let rows = v.len() / cols;
            prop_assume!(rows > 0);
            let v = v[..rows * cols].to_vec();
            let t = Tensor::f32(vec![rows, cols], v).unwrap();
            let back = parse_literal(&format_literal(&t)).unwrap();
            prop_assert!(back.bits_eq(&t) || t.as_f32().unwrap().iter().any(|x| x.is_nan()));
        }

        #[test]
        fn i16_literals_round_trip(v in proptest::collection::vec(any::<i16>(), 1..30)) {
            let t = Tensor::i16(vec![v.len()], v).unwrap();
            prop_assert_eq!(parse_literal(&format_literal(&t)).unwrap(), t);
        }
    }
}
