use crate::Mat;

/// A fixed, ordered collection of trainable tensors.
///
/// The order of [`Module::named_tensors`] and [`Module::tensors_mut`] must agree;
/// optimizers and gradient checks index tensors by that order.
pub trait Module {
    fn named_tensors(&self) -> Vec<(String, &Mat)>;
    fn tensors_mut(&mut self) -> Vec<&mut Mat>;

    fn tensors(&self) -> Vec<&Mat> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Free-standing tensors, for differentiating with respect to inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors(pub Vec<Mat>);

impl Module for Tensors {
    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        self.0.iter().enumerate().map(|(i, t)| (format!("t{i}"), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.0.iter_mut().collect()
    }
}
