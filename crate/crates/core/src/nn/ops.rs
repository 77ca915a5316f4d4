//! Network primitives: same-padded 2-D cross-correlation and leaky ReLU.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Zero-padded "same" cross-correlation plus bias.
///
/// `input` is `(C, H, W)`, `kernel` `(O, C, KH, KW)` with odd kernel sides and
/// `bias` `(O)`. Output channels are computed independently, so the result
/// does not depend on the thread count.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor, layer: &str) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (o, kc, kh, kw) = match kernel.shape()[..] {
        [o, kc, kh, kw] => (o, kc, kh, kw),
        _ => {
            return Err(Error::Shape(format!(
                "{layer}: kernel must be rank 4, got {:?}",
                kernel.shape()
            )))
        }
    };
    if kc != c {
        return Err(Error::Shape(format!(
            "{layer}: kernel expects {kc} input channels, input has {c}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Shape(format!(
            "{layer}: kernel dims must be odd, got {kh}x{kw}"
        )));
    }
    if bias.shape() != [o] {
        return Err(Error::Shape(format!(
            "{layer}: bias shape {:?} does not match {o} output channels",
            bias.shape()
        )));
    }

    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let kdata = kernel.data();
    let mut out = vec![0.0f32; o * plane];
    out.par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(oc, dst)| {
            dst.fill(bias.data()[oc]);
            for ic in 0..c {
                let src = input.channel(ic);
                for ky in 0..kh {
                    let dy = ky as isize - ry;
                    for kx in 0..kw {
                        let wgt = kdata[((oc * c + ic) * kh + ky) * kw + kx];
                        // Skipping exact zeros leaves every sum unchanged.
                        if wgt == 0.0 {
                            continue;
                        }
                        let dx = kx as isize - rx;
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                        if x_lo >= x_hi {
                            continue;
                        }
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let row = &src[sy as usize * w..(sy as usize + 1) * w];
                            let src_row =
                                &row[(x_lo as isize + dx) as usize..(x_hi as isize + dx) as usize];
                            let dst_row = &mut dst[y * w + x_lo..y * w + x_hi];
                            for (d, s) in dst_row.iter_mut().zip(src_row) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(vec![o, h, w], out)
}

pub fn leaky_relu(t: &Tensor, slope: f32) -> Tensor {
    let mut out = t.clone();
    leaky_relu_in_place(&mut out, slope);
    out
}

pub fn leaky_relu_in_place(t: &mut Tensor, slope: f32) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_definition() {
        let t = Tensor::new(vec![3], vec![-1.0, 0.0, 3.5]).unwrap();
        assert_eq!(leaky_relu(&t, 0.2).data(), &[-0.2, 0.0, 3.5]);
    }

    #[test]
    fn identity_1x1_kernel() {
        let input = Tensor::new(vec![3, 2, 3], (0..18).map(|v| v as f32 - 4.5).collect()).unwrap();
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        for i in 0..3 {
            k.data_mut()[i * 3 + i] = 1.0;
        }
        let out = conv2d(&input, &k, &Tensor::zeros(&[3]), "id").unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_kernel_zero_output() {
        let input = Tensor::new(vec![2, 4, 4], vec![1.5; 32]).unwrap();
        let out = conv2d(
            &input,
            &Tensor::zeros(&[5, 2, 3, 3]),
            &Tensor::zeros(&[5]),
            "z",
        )
        .unwrap();
        assert_eq!(out.shape(), &[5, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_names_layer() {
        let input = Tensor::zeros(&[2, 4, 4]);
        let err = conv2d(&input, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1]), "shallow")
            .unwrap_err();
        assert!(err.to_string().contains("shallow"));
        assert!(conv2d(&input, &Tensor::zeros(&[1, 2, 2, 2]), &Tensor::zeros(&[1]), "even").is_err());
        assert!(conv2d(&input, &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[2]), "bias").is_err());
    }

    #[test]
    fn three_by_three_border_by_hand() {
        // All-ones input and kernel: each output counts its in-bounds taps.
        let input = Tensor::new(vec![1, 3, 3], vec![1.0; 9]).unwrap();
        let k = Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d(&input, &k, &Tensor::new(vec![1], vec![0.5]).unwrap(), "ones").unwrap();
        assert_eq!(
            out.data(),
            &[4.5, 6.5, 4.5, 6.5, 9.5, 6.5, 4.5, 6.5, 4.5]
        );
    }
}
