//! Minimal convolutional network toolkit: layers, losses, Adam.

pub mod blob;
mod layers;
pub mod loss;
mod param;

pub use layers::{
    BatchNorm2d, Conv2d, ConvTranspose2d, GlobalAvgPool, Layer, Linear, MaxPool2, Mode, Relu,
    Sequential,
};
pub use param::{Adam, Param};
