use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
}

/// Encoder-decoder layout. Level `l` runs at resolution `padded / 2^l`.
///
/// Encoder level `l` is a stride-2 `k x k` conv to `down_channels[l]`; the
/// optional skip branch at level `l` is a 1x1 conv of the level input to
/// `skip_channels[l]` channels (0 disables it). Decoder level `l` upsamples
/// 2x, concatenates the skip and applies a `k x k` conv to `up_channels[l]`.
/// A final linear 1x1 conv gives one channel, cropped to `(nz, nx)`; it has a
/// bias only when `output_bias` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    pub nz: usize,
    pub nx: usize,
    pub latent_channels: usize,
    pub down_channels: Vec<usize>,
    /// Finest level first.
    pub up_channels: Vec<usize>,
    pub skip_channels: Vec<usize>,
    pub kernel: usize,
    pub activation: Activation,
    #[serde(default)]
    pub output_bias: bool,
    /// Multiply each layer's kernel and bias by `gain / sqrt(fan_in)` in the
    /// forward pass, so that unit-variance weights give unit-variance
    /// activations.
    #[serde(default)]
    pub fan_in_scaling: bool,
}

/// Location of one layer's kernel and bias in the flat weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    /// `[C_out, C_in, k, k]`.
    pub kernel_shape: [usize; 4],
    pub kernel_offset: usize,
    pub bias_offset: usize,
    pub has_bias: bool,
    /// Factor applied to this block's parameters in the forward pass.
    pub scale: f64,
}

impl ParamBlock {
    pub fn kernel_len(&self) -> usize {
        self.kernel_shape.iter().product()
    }

    pub fn bias_len(&self) -> usize {
        if self.has_bias {
            self.kernel_shape[0]
        } else {
            0
        }
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.bias_len()
    }
}

impl NetworkArchitecture {
    /// Three levels, 8 latent channels, encoder (16, 32, 64), decoder
    /// (16, 16, 32) finest first, 4-channel skips, 3x3 kernels, leaky ReLU 0.1,
    /// no output bias.
    pub fn default_for(nz: usize, nx: usize) -> Self {
        Self {
            nz,
            nx,
            latent_channels: 8,
            down_channels: vec![16, 32, 64],
            up_channels: vec![16, 16, 32],
            skip_channels: vec![4, 4, 4],
            kernel: 3,
            activation: Activation::LeakyRelu { slope: 0.1 },
            output_bias: false,
            fan_in_scaling: false,
        }
    }

    pub fn levels(&self) -> usize {
        self.down_channels.len()
    }

    /// Spatial size of the latent input: the grid rounded up to a multiple of `2^levels`.
    pub fn padded(&self) -> (usize, usize) {
        let f = 1usize << self.levels();
        (self.nz.div_ceil(f) * f, self.nx.div_ceil(f) * f)
    }

    /// Spatial size at the bottleneck.
    pub fn coarsest(&self) -> (usize, usize) {
        let f = 1usize << self.levels();
        let (hp, wp) = self.padded();
        (hp / f, wp / f)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("network architecture: {m}")));
        if self.nz == 0 || self.nx == 0 {
            return bad(format!("output grid {}x{} is empty", self.nz, self.nx));
        }
        if self.latent_channels == 0 {
            return bad("latent_channels must be positive".into());
        }
        let l = self.levels();
        if l == 0 {
            return bad("at least one level is required".into());
        }
        if self.up_channels.len() != l {
            return Err(Error::shape(
                "network architecture",
                "up_channels length",
                l,
                self.up_channels.len(),
            ));
        }
        if self.skip_channels.len() != l {
            return Err(Error::shape(
                "network architecture",
                "skip_channels length",
                l,
                self.skip_channels.len(),
            ));
        }
        if self.down_channels.iter().chain(&self.up_channels).any(|&c| c == 0) {
            return bad("encoder and decoder channel counts must be positive".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(slope > 0.0 && slope < 1.0) {
                return bad(format!("leaky ReLU slope must lie in (0, 1), got {slope}"));
            }
        }
        Ok(())
    }

    /// Parameter blocks in flat-vector order: `down0, skip0, down1, skip1, ...`,
    /// then decoder levels coarsest first, then `out`.
    pub fn layout(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let hidden_gain = match self.activation {
            Activation::LeakyRelu { slope } => (2.0 / (1.0 + slope * slope)).sqrt(),
            Activation::Identity => 1.0,
        };
        let scaling = self.fan_in_scaling;
        let mut push = |name: String, shape: [usize; 4], has_bias: bool| {
            let gain = if name == "out" { 1.0 } else { hidden_gain };
            let scale = if scaling {
                gain / ((shape[1] * shape[2] * shape[3]) as f64).sqrt()
            } else {
                1.0
            };
            let kernel_offset = offset;
            let bias_offset = kernel_offset + shape.iter().product::<usize>();
            offset = bias_offset + if has_bias { shape[0] } else { 0 };
            blocks.push(ParamBlock {
                name,
                kernel_shape: shape,
                kernel_offset,
                bias_offset,
                has_bias,
                scale,
            });
        };
        let k = self.kernel;
        let mut c_in = self.latent_channels;
        for l in 0..self.levels() {
            push(format!("down{l}"), [self.down_channels[l], c_in, k, k], true);
            if self.skip_channels[l] > 0 {
                push(format!("skip{l}"), [self.skip_channels[l], c_in, 1, 1], true);
            }
            c_in = self.down_channels[l];
        }
        for l in (0..self.levels()).rev() {
            push(
                format!("up{l}"),
                [self.up_channels[l], c_in + self.skip_channels[l], k, k],
                true,
            );
            c_in = self.up_channels[l];
        }
        push("out".into(), [1, c_in, 1, 1], self.output_bias);
        blocks
    }

    pub fn n_params(&self) -> usize {
        self.layout().last().map_or(0, ParamBlock::end)
    }

    /// One-line JSON description, recorded alongside weights and results.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(self).expect("architecture serializes")
    }
}
