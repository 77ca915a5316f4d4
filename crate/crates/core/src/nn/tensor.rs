use crate::error::{Error, Result};

/// Dense `f32` array in row-major order. Activations are `(C, H, W)`;
/// kernels `(O, I, KH, KW)`; biases `(O)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(C, H, W)` of a rank-3 activation.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape(format!(
                "expected (C, H, W) tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Channel-wise concatenation of `(C_i, H, W)` tensors.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let (_, h, w) = first.chw()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for t in parts {
            let (c, th, tw) = t.chw()?;
            if (th, tw) != (h, w) {
                return Err(Error::Shape(format!(
                    "cannot concatenate {th}x{tw} with {h}x{w}"
                )));
            }
            channels += c;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: vec![channels, h, w],
            data,
        })
    }

    /// Elementwise sum with a tensor of identical shape.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Spatial crop of a `(C, H, W)` tensor.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Tensor> {
        let (c, th, tw) = self.chw()?;
        if x + w > tw || y + h > th {
            return Err(Error::Bounds {
                x,
                y,
                w,
                h,
                width: tw,
                height: th,
            });
        }
        let mut data = Vec::with_capacity(c * w * h);
        for ch in 0..c {
            let plane = self.channel(ch);
            for row in y..y + h {
                data.extend_from_slice(&plane[row * tw + x..row * tw + x + w]);
            }
        }
        Ok(Tensor {
            shape: vec![c, h, w],
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape, "max_abs_diff needs equal shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked() {
        assert!(Tensor::new(vec![2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor::new(vec![2, 2, 2], vec![0.0; 8]).is_ok());
    }

    #[test]
    fn concat_and_crop() {
        let a = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.channel(1), &[5.0, 6.0, 7.0, 8.0]);
        let k = c.crop(1, 0, 1, 2).unwrap();
        assert_eq!(k.data(), &[2.0, 4.0, 6.0, 8.0]);
    }
}
