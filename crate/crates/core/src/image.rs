use crate::error::{ModelError, Violation};
use crate::scalar::Scalar;

/// A dense multi-channel image, row-major over (channel, row, column).
///
/// Most engine math treats the pixels as a flat vector; the shape matters for
/// the translational operations and for rendering patch layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Result<Self, ModelError> {
        let mut violations = Vec::new();
        if channels < 1 || height < 1 || width < 1 {
            violations.push(Violation::new("shape", "dims must be >= 1"));
        }
        if data.len() != channels * height * width {
            violations.push(Violation::new("data", "length must equal channels*height*width"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::new("data", "entries must be finite"));
        }
        if violations.is_empty() {
            Ok(Self {
                channels,
                height,
                width,
                data,
            })
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// 1×1×D image; convenient when the spatial layout is irrelevant.
    pub fn vector(data: Vec<T>) -> Result<Self, ModelError> {
        let d = data.len();
        Self::new(1, 1, d, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Image::vector(vec![1.0_f64, f64::NAN]).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(Image::new(1, 2, 2, vec![0.0_f64; 3]).is_err());
    }

    #[test]
    fn indexes_row_major() {
        let img = Image::new(2, 2, 3, (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert_eq!(img.get(0, 1, 2), 5.0);
        assert_eq!(img.get(1, 0, 1), 7.0);
    }
}
