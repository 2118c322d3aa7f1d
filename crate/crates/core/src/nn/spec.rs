use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Block type used throughout the encoder, bottleneck and decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackboneStyle {
    /// Two conv-norm-relu units per block.
    Plain,
    /// Basic residual unit; 1×1 projection shortcut when the shape changes.
    Residual,
    /// Inverted bottleneck: 1×1 expand, 3×3 depthwise, 1×1 linear project.
    DepthwiseSeparable,
    /// Constant-width stack of convs with dilation 1, 2, 4.
    Dilated,
    /// Not a U-Net: one `kernel_size`² conv with bias, ReLU, 1×1 readout.
    /// `base_channels` is the feature count and `depth` is ignored. Used as
    /// the small victim model in inversion experiments.
    SingleConv,
}

impl BackboneStyle {
    /// The four U-Net backbones.
    pub const UNETS: [BackboneStyle; 4] = [
        BackboneStyle::Plain,
        BackboneStyle::Residual,
        BackboneStyle::DepthwiseSeparable,
        BackboneStyle::Dilated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BackboneStyle::Plain => "plain",
            BackboneStyle::Residual => "residual",
            BackboneStyle::DepthwiseSeparable => "depthwise_separable",
            BackboneStyle::Dilated => "dilated",
            BackboneStyle::SingleConv => "single_conv",
        }
    }
}

impl fmt::Display for BackboneStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => BackboneStyle::Plain,
            "residual" => BackboneStyle::Residual,
            "depthwise_separable" => BackboneStyle::DepthwiseSeparable,
            "dilated" => BackboneStyle::Dilated,
            "single_conv" => BackboneStyle::SingleConv,
            other => return Err(Error::InvalidConfig(format!("unknown backbone style `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub backbone: BackboneStyle,
    pub base_channels: usize,
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Kernel of the single-conv model (odd). U-Net blocks always use 3×3.
    pub kernel_size: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::new(BackboneStyle::Plain)
    }
}

impl ModelSpec {
    /// Default lite spec: 8 base channels, 3 encoder stages.
    pub fn new(backbone: BackboneStyle) -> Self {
        ModelSpec {
            backbone,
            base_channels: 8,
            depth: 3,
            in_channels: 1,
            out_channels: 1,
            kernel_size: 3,
        }
    }

    /// Single-conv model with `features` channels and a `kernel`² kernel.
    pub fn single_conv(features: usize, kernel: usize) -> Self {
        ModelSpec {
            base_channels: features,
            kernel_size: kernel,
            ..ModelSpec::new(BackboneStyle::SingleConv)
        }
    }

    pub fn with_base_channels(mut self, c: usize) -> Self {
        self.base_channels = c;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::InvalidConfig("base_channels must be positive".into()));
        }
        if self.in_channels != 1 || self.out_channels != 1 {
            return Err(Error::InvalidConfig("only single-channel input and output are supported".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidConfig(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.backbone != BackboneStyle::SingleConv && !(1..=5).contains(&self.depth) {
            return Err(Error::InvalidConfig(format!("depth must be in 1..=5, got {}", self.depth)));
        }
        Ok(())
    }

    /// Spatial extents must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        match self.backbone {
            BackboneStyle::SingleConv => 1,
            _ => 1 << self.depth,
        }
    }
}
