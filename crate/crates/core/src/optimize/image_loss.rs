//! Image-level losses: the builtin multi-scale pixel loss and the trait
//! shared with external (neural) backends.

use crate::error::{Error, Result};
use crate::raster::Image;

/// Number of dyadic scales in the builtin loss (full, 1/2, 1/4, 1/8).
pub const SCALES: usize = 4;

/// A differentiable image loss: returns the loss and dL/d(rendered).
pub trait ImageLoss {
    fn name(&self) -> &str;
    fn loss_grad(&mut self, rendered: &Image, target: &Image) -> Result<(f64, Image)>;
}

/// Sum over [`SCALES`] of the mean squared error over all values, each
/// coarser scale made by 2x2 box averaging of the previous one. Odd trailing
/// rows and columns are dropped when halving.
#[derive(Clone, Copy, Debug, Default)]
pub struct MultiScaleMse;

impl ImageLoss for MultiScaleMse {
    fn name(&self) -> &str {
        "builtin"
    }

    fn loss_grad(&mut self, rendered: &Image, target: &Image) -> Result<(f64, Image)> {
        multiscale_mse(rendered, target)
    }
}

fn halve(img: &Image) -> Image {
    let (w, h, ch) = (img.width / 2, img.height / 2, img.channels);
    let mut out = Image::new(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let at = |xx: usize, yy: usize| img.data[(yy * img.width + xx) * ch + c];
                out.data[(y * w + x) * ch + c] =
                    (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1)) / 4.0;
            }
        }
    }
    out
}

/// Spread a coarse gradient back over the 2x2 blocks it averaged.
fn unhalve_into(coarse: &Image, fine: &mut Image) {
    let ch = coarse.channels;
    for y in 0..coarse.height {
        for x in 0..coarse.width {
            for c in 0..ch {
                let g = coarse.data[(y * coarse.width + x) * ch + c] / 4.0;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    fine.data[((2 * y + dy) * fine.width + 2 * x + dx) * ch + c] += g;
                }
            }
        }
    }
}

pub fn multiscale_mse(rendered: &Image, target: &Image) -> Result<(f64, Image)> {
    if !rendered.same_shape(target) {
        return Err(Error::contract(format!(
            "image loss needs equal shapes, got {}x{}x{} and {}x{}x{}",
            rendered.width, rendered.height, rendered.channels, target.width, target.height, target.channels
        )));
    }
    if rendered.width < 1 << (SCALES - 1) || rendered.height < 1 << (SCALES - 1) {
        return Err(Error::contract("image too small for the multi-scale loss"));
    }
    let mut pyramid = vec![(rendered.clone(), target.clone())];
    for _ in 1..SCALES {
        let (r, t) = pyramid.last().unwrap();
        pyramid.push((halve(r), halve(t)));
    }
    let mut loss = 0.0;
    let mut grads: Vec<Image> = Vec::with_capacity(SCALES);
    for (r, t) in &pyramid {
        let n = r.data.len() as f64;
        let mut g = Image::new(r.width, r.height, r.channels);
        for (k, (a, b)) in r.data.iter().zip(&t.data).enumerate() {
            let d = a - b;
            loss += d * d / n;
            g.data[k] = 2.0 * d / n;
        }
        grads.push(g);
    }
    // coarse to fine
    let mut acc = grads.pop().unwrap();
    while let Some(mut finer) = grads.pop() {
        unhalve_into(&acc, &mut finer);
        acc = finer;
    }
    Ok((loss, acc))
}
