use crate::autodiff::{OpError, Tape, Var};
use crate::tensor::{Shape, Tensor};

use super::{
    CodecConfig, CodecError, CommonRandomness, DecoderParams, ParamLayout, PyramidSymbols,
    KERNEL_SIZE,
};

/// Synthesis-head parameter views on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LsmVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
    pub conv_a: Var,
    pub bias_a: Var,
    pub conv_b: Var,
    pub bias_b: Var,
}

/// Carves the synthesis group (a flat var holding everything after the
/// upsampler kernel) into per-layer views.
pub fn lsm_vars(tape: &mut Tape, lsm: Var, layout: &ParamLayout) -> Result<LsmVars, OpError> {
    let (cin, d, c) = (layout.lsm_in, layout.hidden, layout.out);
    let mut view = |range: &std::ops::Range<usize>, shape: Shape| {
        tape.view(lsm, layout.in_lsm(range).start, shape)
    };
    Ok(LsmVars {
        w1: view(&layout.w1, Shape::new(1, cin, d))?,
        b1: view(&layout.b1, Shape::flat(d))?,
        w2: view(&layout.w2, Shape::new(1, d, d))?,
        b2: view(&layout.b2, Shape::flat(d))?,
        w3: view(&layout.w3, Shape::new(1, d, c))?,
        b3: view(&layout.b3, Shape::flat(c))?,
        conv_a: view(&layout.conv_a, Shape::new(c, c, 9))?,
        bias_a: view(&layout.bias_a, Shape::flat(c))?,
        conv_b: view(&layout.conv_b, Shape::new(c, c, 9))?,
        bias_b: view(&layout.bias_b, Shape::flat(c))?,
    })
}

/// Splits a flat symbol stream var into per-level views.
pub fn level_vars(tape: &mut Tape, flat: Var, shapes: &[Shape]) -> Result<Vec<Var>, OpError> {
    let mut at = 0;
    shapes
        .iter()
        .map(|&s| {
            let v = tape.view(flat, at, s);
            at += s.len();
            v
        })
        .collect()
}

/// Recursive upsampler.
///
/// Starting from the coarsest received level, repeatedly upsample with the
/// shared kernel and prepend the next finer level along the channel axis;
/// the finest level is concatenated without a further upsample. The output
/// has `sum_k L_k` channels at full resolution. A single level passes
/// through unchanged.
pub fn redu_forward(tape: &mut Tape, levels: &[Var], kernel: Var) -> Result<Var, OpError> {
    let (&coarsest, finer) = levels.split_last().ok_or(OpError::Empty { op: "redu_forward" })?;
    let Some((&finest, middle)) = finer.split_first() else {
        return Ok(coarsest);
    };
    let mut up = tape.conv_transpose_depthwise(coarsest, kernel)?;
    for &level in middle.iter().rev() {
        let u = tape.concat_channels(level, up)?;
        up = tape.conv_transpose_depthwise(u, kernel)?;
    }
    tape.concat_channels(finest, up)
}

/// Synthesis head: `[u, m] -> 1x1 -> relu -> 1x1 -> relu -> 1x1 -> 3x3 -> relu -> 3x3`.
pub fn lsm_forward(tape: &mut Tape, u: Var, m_up: Var, p: &LsmVars) -> Result<Var, OpError> {
    let h = tape.concat_channels(u, m_up)?;
    let h = tape.conv1x1(h, p.w1, p.b1)?;
    let h = tape.relu(h);
    let h = tape.conv1x1(h, p.w2, p.b2)?;
    let h = tape.relu(h);
    let h = tape.conv1x1(h, p.w3, p.b3)?;
    let h = tape.conv3x3(h, p.conv_a, p.bias_a)?;
    let h = tape.relu(h);
    tape.conv3x3(h, p.conv_b, p.bias_b)
}

/// Full decoder on a tape, shared by training and reception.
///
/// `received` is the flat symbol stream as it left the channel, `redu` the
/// 64 upsampler taps, `lsm` the synthesis group and `m_up` the expanded
/// common randomness.
pub fn decoder_graph(
    tape: &mut Tape,
    config: &CodecConfig,
    shapes: &[Shape],
    received: Var,
    redu: Var,
    lsm: Var,
    m_up: Var,
) -> Result<Var, OpError> {
    let levels = level_vars(tape, received, shapes)?;
    let kernel = tape.view(redu, 0, Shape::new(1, KERNEL_SIZE, KERNEL_SIZE))?;
    let u = redu_forward(tape, &levels, kernel)?;
    let head = lsm_vars(tape, lsm, &config.layout())?;
    lsm_forward(tape, u, m_up, &head)
}

/// Reconstructs the source from received symbols, received parameters and
/// the regenerated common randomness, cropped to `crop = (height, width)`.
/// The output is not clamped.
pub fn decode(
    config: &CodecConfig,
    received: &PyramidSymbols,
    params: &DecoderParams,
    m: &CommonRandomness,
    crop: (usize, usize),
) -> Result<Tensor, CodecError> {
    let shapes = received.shapes();
    let full = shapes[0];
    if !received.matches(config, full.height, full.width) {
        return Err(CodecError::Mismatch("received pyramid does not match the configuration".into()));
    }
    let m_shapes: Vec<Shape> = m.levels().iter().map(Tensor::shape).collect();
    if m_shapes != shapes {
        return Err(CodecError::Mismatch("common randomness does not match the pyramid".into()));
    }
    if params.layout() != &config.layout() {
        return Err(CodecError::Mismatch("parameters do not match the configuration".into()));
    }
    if crop.0 > full.height || crop.1 > full.width {
        return Err(CodecError::Mismatch(format!(
            "crop {}x{} exceeds decoded {}x{}",
            crop.0, crop.1, full.height, full.width
        )));
    }
    let mut tape = Tape::new();
    let y = tape.constant(Tensor::flat(received.flatten()));
    let redu = tape.constant(Tensor::flat(params.redu().to_vec()));
    let lsm = tape.constant(Tensor::flat(params.lsm().to_vec()));
    let m_up = tape.constant(m.expand());
    let out = decoder_graph(&mut tape, config, &shapes, y, redu, lsm, m_up)?;
    Ok(tape.value(out).crop(crop.0, crop.1))
}
