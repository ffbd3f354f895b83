//! The seven visual feature extractors.
//!
//! All of them end in a fixed-length vector R_V. The designated Grad-CAM
//! layer per kind is the post-activation conv map closest to the pooling or
//! flatten path; the style extractor has none (the gram matrix discards
//! spatial layout).

use rand::Rng;

use super::{BoundParams, ParamBuilder, SampleInput, VisualExtractorKind};
use crate::numerics::{NodeId, Tape};
use crate::{Error, Result};

/// Residual trunk stage widths.
const RESIDUAL_WIDTHS: [usize; 3] = [16, 32, 64];
/// Plain trunk stage widths (also the style/content trunk).
const PLAIN_WIDTHS: [usize; 4] = [16, 32, 64, 64];
/// Per-branch width of the multi-branch stage.
const BRANCH_WIDTH: usize = 8;
/// Widths of the two plain stages after the branch stage.
const BRANCH_STAGE_WIDTHS: [usize; 2] = [32, 64];
/// Content head: flattened conv features -> 512 -> 256.
const CONTENT_FC1: usize = 512;

pub struct VisualTrace {
    /// R_V node.
    pub rv: NodeId,
    /// Designated Grad-CAM conv activations and their [K, H, W] shape.
    pub cam: Option<(NodeId, [usize; 3])>,
}

pub(super) fn init_params<R: Rng>(
    b: &mut ParamBuilder<'_, R>,
    kind: VisualExtractorKind,
    image_size: usize,
) {
    match kind {
        VisualExtractorKind::ResidualCnn => {
            b.conv("visual.stem", RESIDUAL_WIDTHS[0], 3, 3, 3);
            for (stage, &width) in RESIDUAL_WIDTHS.iter().enumerate() {
                for block in 0..2 {
                    b.conv(&format!("visual.s{stage}.b{block}.c0"), width, width, 3, 3);
                    b.conv(&format!("visual.s{stage}.b{block}.c1"), width, width, 3, 3);
                }
                if stage + 1 < RESIDUAL_WIDTHS.len() {
                    b.conv(
                        &format!("visual.t{stage}"),
                        RESIDUAL_WIDTHS[stage + 1],
                        width,
                        3,
                        3,
                    );
                }
            }
        }
        VisualExtractorKind::PlainCnn => {
            let mut in_ch = 3;
            for (i, &width) in PLAIN_WIDTHS.iter().enumerate() {
                b.conv(&format!("visual.conv{i}"), width, in_ch, 3, 3);
                in_ch = width;
            }
        }
        VisualExtractorKind::Style => {
            b.conv("visual.conv0", PLAIN_WIDTHS[0], 3, 3, 3);
            b.conv("visual.conv1", PLAIN_WIDTHS[1], PLAIN_WIDTHS[0], 3, 3);
        }
        VisualExtractorKind::Content | VisualExtractorKind::StyleContent => {
            b.conv("visual.conv0", PLAIN_WIDTHS[0], 3, 3, 3);
            b.conv("visual.conv1", PLAIN_WIDTHS[1], PLAIN_WIDTHS[0], 3, 3);
            b.conv("visual.conv2", PLAIN_WIDTHS[2], PLAIN_WIDTHS[1], 3, 3);
            b.conv("visual.local", PLAIN_WIDTHS[2], PLAIN_WIDTHS[2], 3, 3);
            // conv2 runs at quarter resolution; the head flattens its maps.
            let spatial = image_size / 4;
            let flat = PLAIN_WIDTHS[2] * spatial * spatial;
            b.linear_vec("visual.fc0", flat, CONTENT_FC1);
            b.linear_vec("visual.fc1", CONTENT_FC1, super::CONTENT_FEATURES);
        }
        VisualExtractorKind::BranchCnn => init_branch_stack(b, 3),
        VisualExtractorKind::ImageStructure => init_branch_stack(b, 1),
    }
}

fn init_branch_stack<R: Rng>(b: &mut ParamBuilder<'_, R>, in_ch: usize) {
    b.conv("visual.branch1", BRANCH_WIDTH, in_ch, 1, 1);
    b.conv("visual.branch3", BRANCH_WIDTH, in_ch, 3, 3);
    b.conv("visual.branch5", BRANCH_WIDTH, in_ch, 5, 5);
    b.conv("visual.stage0", BRANCH_STAGE_WIDTHS[0], 3 * BRANCH_WIDTH, 3, 3);
    b.conv("visual.stage1", BRANCH_STAGE_WIDTHS[1], BRANCH_STAGE_WIDTHS[0], 3, 3);
}

/// conv -> channel bias -> relu.
fn conv_block(
    tape: &mut Tape,
    bound: &BoundParams,
    name: &str,
    x: NodeId,
    stride: usize,
    padding: usize,
) -> Result<NodeId> {
    let w = bound.node(&format!("{name}.w"))?;
    let b = bound.node(&format!("{name}.b"))?;
    let c = tape.conv2d(x, w, stride, padding)?;
    let c = tape.channel_bias(c, b)?;
    Ok(tape.relu(c))
}

/// conv -> channel bias, no activation (residual block second conv).
fn conv_linear(
    tape: &mut Tape,
    bound: &BoundParams,
    name: &str,
    x: NodeId,
) -> Result<NodeId> {
    let w = bound.node(&format!("{name}.w"))?;
    let b = bound.node(&format!("{name}.b"))?;
    let c = tape.conv2d(x, w, 1, 1)?;
    tape.channel_bias(c, b)
}

pub(super) fn visual_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    kind: VisualExtractorKind,
    image_size: usize,
    input: &SampleInput,
) -> Result<VisualTrace> {
    let image = match kind {
        VisualExtractorKind::ImageStructure => {
            let map = input.structure_map.as_ref().ok_or_else(|| {
                Error::Config(
                    "image-structure extractor needs a text-probability-map provider".into(),
                )
            })?;
            if map.shape() != [1, image_size, image_size] {
                return Err(Error::Shape(format!(
                    "structure map shape {:?}, expected [1, {image_size}, {image_size}]",
                    map.shape()
                )));
            }
            tape.leaf(map)
        }
        _ => {
            let img = input
                .image
                .as_ref()
                .ok_or_else(|| Error::Input("sample lacks an image for a visual model".into()))?;
            if img.shape() != [3, image_size, image_size] {
                return Err(Error::Shape(format!(
                    "image shape {:?}, expected [3, {image_size}, {image_size}]",
                    img.shape()
                )));
            }
            tape.leaf(img)
        }
    };

    match kind {
        VisualExtractorKind::ResidualCnn => residual_forward(tape, bound, image),
        VisualExtractorKind::PlainCnn => plain_forward(tape, bound, image),
        VisualExtractorKind::BranchCnn | VisualExtractorKind::ImageStructure => {
            branch_forward(tape, bound, image)
        }
        VisualExtractorKind::Style => style_forward(tape, bound, image),
        VisualExtractorKind::Content => {
            let (rv, cam) = content_forward(tape, bound, image)?;
            Ok(VisualTrace { rv, cam: Some(cam) })
        }
        VisualExtractorKind::StyleContent => {
            let style = style_features(tape, bound, image)?;
            let (content, cam) = content_forward(tape, bound, image)?;
            let rv = tape.concat_vec(&[style, content])?;
            Ok(VisualTrace { rv, cam: Some(cam) })
        }
    }
}

fn residual_forward(tape: &mut Tape, bound: &BoundParams, image: NodeId) -> Result<VisualTrace> {
    let mut x = conv_block(tape, bound, "visual.stem", image, 1, 1)?;
    for stage in 0..RESIDUAL_WIDTHS.len() {
        for block in 0..2 {
            let h = conv_block(tape, bound, &format!("visual.s{stage}.b{block}.c0"), x, 1, 1)?;
            let h = conv_linear(tape, bound, &format!("visual.s{stage}.b{block}.c1"), h)?;
            let sum = tape.add(x, h)?;
            x = tape.relu(sum);
        }
        if stage + 1 < RESIDUAL_WIDTHS.len() {
            x = conv_block(tape, bound, &format!("visual.t{stage}"), x, 2, 1)?;
        }
    }
    let shape = cam_shape(tape, x);
    let rv = tape.global_avg_pool(x)?;
    Ok(VisualTrace { rv, cam: Some((x, shape)) })
}

fn plain_forward(tape: &mut Tape, bound: &BoundParams, image: NodeId) -> Result<VisualTrace> {
    let mut x = image;
    let mut cam = None;
    for i in 0..PLAIN_WIDTHS.len() {
        let conv = conv_block(tape, bound, &format!("visual.conv{i}"), x, 1, 1)?;
        if i == PLAIN_WIDTHS.len() - 1 {
            cam = Some((conv, cam_shape(tape, conv)));
        }
        x = tape.max_pool2(conv)?;
    }
    let rv = tape.global_avg_pool(x)?;
    Ok(VisualTrace { rv, cam })
}

fn branch_forward(tape: &mut Tape, bound: &BoundParams, image: NodeId) -> Result<VisualTrace> {
    let b1 = conv_block(tape, bound, "visual.branch1", image, 1, 0)?;
    let b3 = conv_block(tape, bound, "visual.branch3", image, 1, 1)?;
    let b5 = conv_block(tape, bound, "visual.branch5", image, 1, 2)?;
    let merged = tape.concat_channels(&[b1, b3, b5])?;
    let s0 = conv_block(tape, bound, "visual.stage0", merged, 1, 1)?;
    let s0 = tape.max_pool2(s0)?;
    let s1 = conv_block(tape, bound, "visual.stage1", s0, 1, 1)?;
    let cam = Some((s1, cam_shape(tape, s1)));
    let pooled = tape.max_pool2(s1)?;
    let rv = tape.global_avg_pool(pooled)?;
    Ok(VisualTrace { rv, cam })
}

/// Style tap: gram matrix of the stage-1 conv features (after one pool),
/// upper triangle flattened.
fn style_features(tape: &mut Tape, bound: &BoundParams, image: NodeId) -> Result<NodeId> {
    let c0 = conv_block(tape, bound, "visual.conv0", image, 1, 1)?;
    let p0 = tape.max_pool2(c0)?;
    let c1 = conv_block(tape, bound, "visual.conv1", p0, 1, 1)?;
    let gram = tape.gram_matrix(c1)?;
    tape.triu(gram)
}

fn style_forward(tape: &mut Tape, bound: &BoundParams, image: NodeId) -> Result<VisualTrace> {
    let rv = style_features(tape, bound, image)?;
    // The gram matrix discards spatial structure, so no conv map feeds the
    // pooled path and Grad-CAM is undefined for this extractor.
    Ok(VisualTrace { rv, cam: None })
}

/// Content path: plain trunk stages 0-2, a local conv head, then the
/// 512/256 fully connected head. Returns (R_V, cam).
fn content_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    image: NodeId,
) -> Result<(NodeId, (NodeId, [usize; 3]))> {
    let c0 = conv_block(tape, bound, "visual.conv0", image, 1, 1)?;
    let p0 = tape.max_pool2(c0)?;
    let c1 = conv_block(tape, bound, "visual.conv1", p0, 1, 1)?;
    let p1 = tape.max_pool2(c1)?;
    let c2 = conv_block(tape, bound, "visual.conv2", p1, 1, 1)?;
    let local = conv_block(tape, bound, "visual.local", c2, 1, 1)?;
    let cam = (local, cam_shape(tape, local));
    let flat = tape.flatten(local);
    let f0 = linear_vec(tape, bound, "visual.fc0", flat)?;
    let f0 = tape.relu(f0);
    let f1 = linear_vec(tape, bound, "visual.fc1", f0)?;
    let rv = tape.relu(f1);
    Ok((rv, cam))
}

fn linear_vec(tape: &mut Tape, bound: &BoundParams, name: &str, x: NodeId) -> Result<NodeId> {
    let w = bound.node(&format!("{name}.w"))?;
    let b = bound.node(&format!("{name}.b"))?;
    let wx = tape.matvec(w, x)?;
    tape.add(wx, b)
}

fn cam_shape(tape: &Tape, node: NodeId) -> [usize; 3] {
    let s = tape.shape(node);
    [s[0], s[1], s[2]]
}
