//! Frame rendering: a fixed procedural background, anti-aliased glyphs with
//! per-tool hues, optional occlusion patches and additive pixel noise.

use super::{GlyphKind, WorkflowConfig};
use crate::rng::SplitRng;
use crate::tensor::Tensor as GenericTensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Tensor = GenericTensor<f64>;

/// Half-extent of a glyph in pixels (glyphs occupy a 7x7 box).
pub const GLYPH_HALF: usize = 3;

/// Bounding box of one rendered glyph, end-exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlyphBox {
    pub tool: usize,
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

#[inline]
fn background(y: usize, x: usize, c: usize) -> f64 {
    let (yf, xf, cf) = (y as f64, x as f64, c as f64);
    0.32 + 0.06 * (xf * 0.7 + cf).sin() * (yf * 0.5 - cf).cos()
}

/// Signed distance (negative inside) of a point in glyph-local coordinates.
fn glyph_distance(kind: GlyphKind, dy: f64, dx: f64) -> f64 {
    match kind {
        GlyphKind::Bar => (dy.abs() - 1.0).max(dx.abs() - 3.0),
        GlyphKind::VBar => (dx.abs() - 1.0).max(dy.abs() - 3.0),
        GlyphKind::Cross => ((dy.abs() - 1.0).max(dx.abs() - 3.0))
            .min((dx.abs() - 1.0).max(dy.abs() - 3.0)),
        GlyphKind::Ring => ((dy * dy + dx * dx).sqrt() - 2.2).abs() - 0.8,
        GlyphKind::Diamond => dy.abs() + dx.abs() - 2.8,
        GlyphKind::Dot => (dy * dy + dx * dx).sqrt() - 1.6,
        GlyphKind::Tee => ((dy + 2.0).abs() - 0.9)
            .max(dx.abs() - 3.0)
            .min((dx.abs() - 0.9).max(dy.abs() - 3.0)),
        GlyphKind::Wedge => (dx.abs() * 0.9 + dy * 0.8 - 1.6).max(-dy - 2.4),
    }
}

/// Renders one frame for the active tool set. Draw order follows ascending
/// tool index; noise and occlusion consume the rng in that same order.
pub fn render_frame(
    config: &WorkflowConfig,
    active: &[usize],
    rng: &mut SplitRng,
) -> (Tensor, Vec<GlyphBox>) {
    let (h, w) = (config.frame_height, config.frame_width);
    let mut data = vec![0.0f64; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[(y * w + x) * 3 + c] = background(y, x, c);
            }
        }
    }

    let mut active: Vec<usize> = active.to_vec();
    active.sort_unstable();
    let mut boxes = Vec::with_capacity(active.len());
    for &tool in &active {
        let spec = &config.tools[tool];
        let j = config.position_jitter as i64;
        let (mut cy, mut cx) = (spec.home.0 as i64, spec.home.1 as i64);
        if j > 0 {
            cy += rng.rng().random_range(-j..=j);
            cx += rng.rng().random_range(-j..=j);
        }
        let g = GLYPH_HALF as i64;
        cy = cy.clamp(g, h as i64 - 1 - g);
        cx = cx.clamp(g, w as i64 - 1 - g);
        for dy in -g..=g {
            for dx in -g..=g {
                let d = glyph_distance(spec.glyph, dy as f64, dx as f64);
                let cov = (0.5 - d).clamp(0.0, 1.0);
                if cov > 0.0 {
                    let (y, x) = ((cy + dy) as usize, (cx + dx) as usize);
                    for c in 0..3 {
                        let idx = (y * w + x) * 3 + c;
                        data[idx] = data[idx] * (1.0 - cov) + spec.hue[c] * cov;
                    }
                }
            }
        }
        boxes.push(GlyphBox {
            tool,
            y0: (cy - g) as usize,
            x0: (cx - g) as usize,
            y1: (cy + g + 1) as usize,
            x1: (cx + g + 1) as usize,
        });
    }

    // partial occlusion: a background-colored patch over a glyph corner
    if config.occlusion_prob > 0.0 {
        for b in &boxes {
            if rng.rng().random_range(0.0..1.0) < config.occlusion_prob {
                let py = rng.rng().random_range(b.y0..=b.y1.saturating_sub(1).max(b.y0));
                let px = rng.rng().random_range(b.x0..=b.x1.saturating_sub(1).max(b.x0));
                for y in py..(py + 4).min(h) {
                    for x in px..(px + 4).min(w) {
                        for c in 0..3 {
                            data[(y * w + x) * 3 + c] = background(y, x, c);
                        }
                    }
                }
            }
        }
    }

    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("sigma checked");
        for v in &mut data {
            *v += normal.sample(rng.rng());
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    (
        Tensor::new(vec![h, w, 3], data).expect("frame shape"),
        boxes,
    )
}
