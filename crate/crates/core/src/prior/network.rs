use super::architecture::{Activation, NetworkArchitecture};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Fixed network input `z ~ N(0, I)` of shape `[latent_channels, padded...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentInput {
    pub seed: u64,
    pub z: Tensor,
}

impl LatentInput {
    /// SHA-256 of the little-endian bytes of `z`, hex encoded.
    pub fn hash(&self) -> String {
        crate::harness::sha256_f64(self.z.data())
    }
}

pub fn init_latent(arch: &NetworkArchitecture, seed: u64) -> Result<LatentInput> {
    arch.validate()?;
    let (hp, wp) = arch.padded();
    let mut r = rng::seeded(seed, rng::stream::LATENT);
    let data = rng::standard_normal_vec(&mut r, arch.latent_channels * hp * wp);
    Ok(LatentInput {
        seed,
        z: Tensor::new(vec![arch.latent_channels, hp, wp], data)?,
    })
}

/// All kernels and biases, concatenated in [`NetworkArchitecture::layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    values: Vec<f64>,
}

impl NetworkWeights {
    pub fn zeros(arch: &NetworkArchitecture) -> Self {
        Self {
            values: vec![0.0; arch.n_params()],
        }
    }

    pub fn from_values(arch: &NetworkArchitecture, values: Vec<f64>) -> Result<Self> {
        let n = arch.n_params();
        if values.len() != n {
            return Err(Error::shape("network weights", "parameter count", n, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("network weight {i}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Draws every entry i.i.d. from `N(0, 1 / lambda^2)`.
pub fn sample_prior_weights(arch: &NetworkArchitecture, lambda: f64, seed: u64) -> Result<NetworkWeights> {
    sample_prior_weights_from(arch, lambda, &mut rng::seeded(seed, rng::stream::PRIOR_WEIGHTS))
}

pub fn sample_prior_weights_from(arch: &NetworkArchitecture, lambda: f64, rng: &mut Rng) -> Result<NetworkWeights> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "prior lambda must be positive, got {lambda}"
        )));
    }
    arch.validate()?;
    let mut values = rng::standard_normal_vec(rng, arch.n_params());
    let s = 1.0 / lambda;
    for v in &mut values {
        *v *= s;
    }
    Ok(NetworkWeights { values })
}

/// A forward pass of `g(z, w)` with its tape, ready for [`network_vjp`].
pub struct NetworkOutput {
    image: Tensor,
    tape: Tape,
    output: Var,
    params: Vec<(Var, Var, bool, f64)>,
    n_params: usize,
}

impl NetworkOutput {
    /// Row-major `nz x nx` image.
    pub fn image(&self) -> &[f64] {
        self.image.data()
    }

    pub fn into_image(self) -> Vec<f64> {
        self.image.into_data()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::LeakyRelu { slope } => tape.leaky_relu(x, slope),
        Activation::Identity => x,
    }
}

pub fn network_forward(arch: &NetworkArchitecture, z: &LatentInput, w: &NetworkWeights) -> Result<NetworkOutput> {
    arch.validate()?;
    let (hp, wp) = arch.padded();
    let expected = [arch.latent_channels, hp, wp];
    if z.z.shape() != expected {
        let got = z.z.shape();
        let axis = (0..3).find(|&i| got.get(i) != Some(&expected[i])).unwrap_or(0);
        let names = ["latent channels", "latent height", "latent width"];
        return Err(Error::shape(
            "network_forward",
            names[axis],
            expected[axis],
            got.get(axis).copied().unwrap_or(0),
        ));
    }
    let layout = arch.layout();
    let n_params = layout.last().map_or(0, |b| b.end());
    if w.len() != n_params {
        return Err(Error::shape("network_forward", "parameter count", n_params, w.len()));
    }
    let mut tape = Tape::new();
    let mut params = Vec::with_capacity(layout.len());
    let mut by_name = std::collections::HashMap::new();
    for b in &layout {
        let scaled = |r: std::ops::Range<usize>| w.values[r].iter().map(|v| b.scale * v).collect::<Vec<_>>();
        let kernel = Tensor::new(b.kernel_shape.to_vec(), scaled(b.kernel_offset..b.bias_offset))?;
        let bias = if b.has_bias {
            Tensor::new(vec![b.bias_len()], scaled(b.bias_offset..b.end()))?
        } else {
            Tensor::zeros(vec![b.kernel_shape[0]])
        };
        let pair = (tape.leaf(kernel), tape.leaf(bias));
        by_name.insert(b.name.clone(), pair);
        params.push((pair.0, pair.1, b.has_bias, b.scale));
    }
    let act = arch.activation;
    let conv = |tape: &mut Tape, x: Var, name: String, stride: usize| -> Result<Var> {
        let (k, b) = by_name[&name];
        tape.conv2d(x, k, b, stride)
    };

    let mut x = tape.leaf(z.z.clone());
    let mut skips = Vec::with_capacity(arch.levels());
    for l in 0..arch.levels() {
        skips.push(if arch.skip_channels[l] > 0 {
            let s = conv(&mut tape, x, format!("skip{l}"), 1)?;
            Some(activate(&mut tape, s, act))
        } else {
            None
        });
        let d = conv(&mut tape, x, format!("down{l}"), 2)?;
        x = activate(&mut tape, d, act);
    }
    for l in (0..arch.levels()).rev() {
        let mut y = tape.upsample_bilinear_2x(x)?;
        if let Some(s) = skips[l] {
            y = tape.concat_channels(&[y, s])?;
        }
        let c = conv(&mut tape, y, format!("up{l}"), 1)?;
        x = activate(&mut tape, c, act);
    }
    let out = conv(&mut tape, x, "out".into(), 1)?;
    let output = tape.crop(out, arch.nz, arch.nx)?;
    let image = tape.value(output).clone();
    if !image.all_finite() {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(NetworkOutput {
        image,
        tape,
        output,
        params,
        n_params,
    })
}

/// Gradient of `<cotangent, g(z, w)>` with respect to the flat weights.
pub fn network_vjp(pass: &NetworkOutput, cotangent: &[f64]) -> Result<Vec<f64>> {
    let shape = pass.image.shape().to_vec();
    if cotangent.len() != pass.image.len() {
        return Err(Error::shape(
            "network_vjp",
            "cotangent length",
            pass.image.len(),
            cotangent.len(),
        ));
    }
    let grads = pass
        .tape
        .backward(pass.output, &Tensor::new(shape, cotangent.to_vec())?)?;
    let mut out = Vec::with_capacity(pass.n_params);
    for &(k, b, has_bias, scale) in &pass.params {
        out.extend(grads.wrt(&pass.tape, k).data().iter().map(|g| scale * g));
        if has_bias {
            out.extend(grads.wrt(&pass.tape, b).data().iter().map(|g| scale * g));
        }
    }
    Ok(out)
}
