//! Model descriptions and the GEMM view of their layers.
//!
//! The text format is line oriented:
//!
//! ```text
//! # comments and blank lines are ignored
//! name tiny
//! input 608 608 3
//! conv 32 3 1 1 leaky bn
//! conv 64 3 2 1 leaky bn
//! ```
//!
//! An optional `name <text>` line labels the model. `input H W C` comes
//! before any layer; each `conv <filters> <k> <stride> <pad>
//! <activation> [bn]` line consumes the previous layer's output.

use std::fmt::Write as _;

use crate::convlayer::{Activation, ConvLayerSpec};
use crate::error::{Error, Result};
use crate::gemm::GemmDims;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub input: (usize, usize, usize),
    pub layers: Vec<ConvLayerSpec>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field(tokens: &[&str], i: usize, line: usize, what: &str) -> Result<usize> {
    let tok = tokens
        .get(i)
        .ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| {
        parse_err(
            line,
            format!("{what} `{tok}` is not a non-negative integer"),
        )
    })
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let mut name = String::from("model");
    let mut input: Option<(usize, usize, usize)> = None;
    let mut shape = (0, 0, 0);
    let mut layers = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = body.split_whitespace().collect();
        match tokens[0] {
            "name" => {
                let rest = body["name".len()..].trim();
                if rest.is_empty() {
                    return Err(parse_err(line, "empty model name"));
                }
                name = rest.to_string();
            }
            "input" => {
                if input.is_some() {
                    return Err(parse_err(line, "duplicate input line"));
                }
                if tokens.len() != 4 {
                    return Err(parse_err(line, "expected `input H W C`"));
                }
                let h = field(&tokens, 1, line, "height")?;
                let w = field(&tokens, 2, line, "width")?;
                let c = field(&tokens, 3, line, "channels")?;
                if h == 0 || w == 0 || c == 0 {
                    return Err(parse_err(line, "input dimensions must be positive"));
                }
                input = Some((h, w, c));
                shape = (c, h, w);
            }
            "conv" => {
                if input.is_none() {
                    return Err(parse_err(line, "conv before input line"));
                }
                if !(6..=7).contains(&tokens.len()) {
                    return Err(parse_err(
                        line,
                        "expected `conv <filters> <k> <stride> <pad> <activation> [bn]`",
                    ));
                }
                let filters = field(&tokens, 1, line, "filters")?;
                let k = field(&tokens, 2, line, "kernel size")?;
                let stride = field(&tokens, 3, line, "stride")?;
                let pad = field(&tokens, 4, line, "padding")?;
                let activation: Activation = tokens[5]
                    .parse()
                    .map_err(|e: Error| parse_err(line, e.to_string()))?;
                let batchnorm = match tokens.get(6) {
                    None => false,
                    Some(&"bn") => true,
                    Some(other) => return Err(parse_err(line, format!("unexpected `{other}`"))),
                };
                let spec = ConvLayerSpec {
                    in_c: shape.0,
                    in_h: shape.1,
                    in_w: shape.2,
                    filters,
                    k,
                    stride,
                    pad,
                    batchnorm,
                    activation,
                };
                spec.validate()
                    .map_err(|e| parse_err(line, e.to_string()))?;
                let (oh, ow) = spec
                    .output_dims()
                    .map_err(|e| parse_err(line, e.to_string()))?;
                shape = (filters, oh, ow);
                layers.push(spec);
            }
            other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
        }
    }
    let input = input.ok_or_else(|| parse_err(0, "missing input line"))?;
    if layers.is_empty() {
        return Err(parse_err(0, "model has no layers"));
    }
    Ok(ModelSpec {
        name,
        input,
        layers,
    })
}

/// The GEMM an im2col lowering of `spec` performs: `M` filters, `K = k*k*C`,
/// `N` output pixels.
pub fn gemm_dims_for_layer(spec: &ConvLayerSpec) -> Result<GemmDims> {
    let (oh, ow) = spec.output_dims()?;
    Ok(GemmDims::new(
        spec.filters,
        oh * ow,
        spec.k * spec.k * spec.in_c,
    ))
}

/// FLOPs per byte moved, counting each of A, B and C once:
/// `2MNK / (4(MN + KN + MK))`.
pub fn arithmetic_intensity(dims: &GemmDims) -> f64 {
    let (m, n, k) = (dims.m as f64, dims.n as f64, dims.k as f64);
    2.0 * m * n * k / (4.0 * (m * n + k * n + m * k))
}

/// A layer of a published arithmetic-intensity table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableLayer {
    pub label: &'static str,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// As printed, rounded to the table's precision.
    pub reported_ai: f64,
}

impl TableLayer {
    pub fn dims(&self) -> GemmDims {
        GemmDims::new(self.m, self.n, self.k)
    }

    /// Decimal places the reported value was printed with.
    pub fn reported_decimals(&self) -> usize {
        let s = format!("{}", self.reported_ai);
        s.split_once('.').map_or(0, |(_, frac)| frac.len())
    }
}

/// GEMM shapes of the distinct YOLOv3 layers at 608x608 input, with their
/// published arithmetic intensities.
#[rustfmt::skip]
pub const YOLOV3_TABLE: [TableLayer; 14] = [
    TableLayer { label: "L1", m: 32, n: 369_664, k: 27, reported_ai: 7.32 },
    TableLayer { label: "L2", m: 64, n: 92_416, k: 288, reported_ai: 26.0 },
    TableLayer { label: "L3", m: 32, n: 92_416, k: 64, reported_ai: 11.0 },
    TableLayer { label: "L5", m: 128, n: 23_104, k: 576, reported_ai: 52.0 },
    TableLayer { label: "L6", m: 64, n: 23_104, k: 128, reported_ai: 21.0 },
    TableLayer { label: "L10", m: 256, n: 5_776, k: 1_152, reported_ai: 101.0 },
    TableLayer { label: "L11", m: 128, n: 5_776, k: 256, reported_ai: 42.0 },
    TableLayer { label: "L38", m: 256, n: 1_444, k: 512, reported_ai: 76.0 },
    TableLayer { label: "L44", m: 1_024, n: 361, k: 4_608, reported_ai: 126.0 },
    TableLayer { label: "L45", m: 512, n: 361, k: 1_024, reported_ai: 88.0 },
    TableLayer { label: "L59", m: 255, n: 361, k: 1_024, reported_ai: 65.0 },
    TableLayer { label: "L61", m: 256, n: 1_444, k: 768, reported_ai: 85.0 },
    TableLayer { label: "L62", m: 512, n: 1_444, k: 2_304, reported_ai: 162.0 },
    TableLayer { label: "L75", m: 255, n: 5_776, k: 256, reported_ai: 63.0 },
];

pub const MODEL_AI_CSV_HEADER: &str = "layer,M,N,K,ai";

/// One CSV row per layer, with the header first.
pub fn model_ai_csv<'a>(rows: impl IntoIterator<Item = (String, &'a GemmDims)>) -> String {
    let mut out = String::from(MODEL_AI_CSV_HEADER);
    out.push('\n');
    for (label, d) in rows {
        let _ = writeln!(
            out,
            "{label},{},{},{},{:.4}",
            d.m,
            d.n,
            d.k,
            arithmetic_intensity(d)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "input 8 8 3\nconv 4 3 1 1 leaky bn\nconv 2 1 1 0 linear\n";

    #[test]
    fn parses_and_chains_shapes() {
        let m = parse_model_spec(TINY).unwrap();
        assert_eq!(m.input, (8, 8, 3));
        assert_eq!(m.layers.len(), 2);
        assert!(m.layers[0].batchnorm);
        assert_eq!(m.layers[1].in_c, 4);
        assert_eq!(m.layers[1].activation, Activation::Linear);
    }

    #[test]
    fn comments_and_blank_lines() {
        let m = parse_model_spec("# net\n\ninput 4 4 1 # rgb-less\nconv 1 1 1 0 linear\n").unwrap();
        assert_eq!(m.layers.len(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_model_spec("input 8 8 3\nconv 4 3 0 1 leaky\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_model_spec("input 8 8 3\nconv 4 3 1 1 relu\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_model_spec("input 8 8\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_model_spec("conv 4 3 1 1 leaky\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_model_spec("input 8 8 3\n").is_err());
        assert!(parse_model_spec("").is_err());
        assert!(parse_model_spec("input 8 8 3\npool 2\n").is_err());
    }

    #[test]
    fn gemm_view_of_a_layer() {
        let m =
            parse_model_spec("input 608 608 3\nconv 32 3 1 1 leaky bn\nconv 64 3 2 1 leaky bn\n")
                .unwrap();
        let d = gemm_dims_for_layer(&m.layers[0]).unwrap();
        assert_eq!((d.m, d.n, d.k), (32, 369_664, 27));
        let d = gemm_dims_for_layer(&m.layers[1]).unwrap();
        assert_eq!((d.m, d.n, d.k), (64, 92_416, 288));
    }

    #[test]
    fn intensity_of_square_problem() {
        // 2n^3 / (12 n^2) = n / 6
        let ai = arithmetic_intensity(&GemmDims::new(600, 600, 600));
        assert!((ai - 100.0).abs() < 1e-9);
    }

    #[test]
    fn name_line_is_optional() {
        assert_eq!(parse_model_spec(TINY).unwrap().name, "model");
        let m = parse_model_spec(&format!("name tiny net\n{TINY}")).unwrap();
        assert_eq!(m.name, "tiny net");
    }

    proptest::proptest! {
        #[test]
        fn intensity_is_symmetric_in_m_and_k(m in 1usize..5000, n in 1usize..500_000, k in 1usize..5000) {
            let a = arithmetic_intensity(&GemmDims::new(m, n, k));
            let b = arithmetic_intensity(&GemmDims::new(k, n, m));
            proptest::prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn reported_precision() {
        assert_eq!(YOLOV3_TABLE[0].reported_decimals(), 2);
        assert_eq!(YOLOV3_TABLE[1].reported_decimals(), 0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let d = GemmDims::new(2, 3, 4);
        let s = model_ai_csv([("L1".to_string(), &d)]);
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], MODEL_AI_CSV_HEADER);
        assert!(lines[1].starts_with("L1,2,3,4,"));
    }
}
