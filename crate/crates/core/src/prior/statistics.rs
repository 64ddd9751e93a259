use super::architecture::NetworkArchitecture;
use super::network::{network_forward, sample_prior_weights_from, LatentInput, NetworkWeights};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::Welford;

/// Prior-predictive mean and pointwise std of `g(z, w)`, `w ~ N(0, I / lambda^2)`.
#[derive(Clone, Debug)]
pub struct PriorStatistics {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_samples: usize,
    /// For each requested probe cell, the value of every sample there.
    pub probes: Vec<(usize, Vec<f64>)>,
}

pub fn prior_statistics(
    arch: &NetworkArchitecture,
    z: &LatentInput,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PriorStatistics> {
    prior_statistics_with_probes(arch, z, lambda, n_samples, seed, &[])
}

/// As [`prior_statistics`], also keeping the sample values at `probe_cells`
/// (row-major indices into the `nz x nx` image). Sample `k` draws its weights
/// from its own split stream, so results do not depend on evaluation order.
pub fn prior_statistics_with_probes(
    arch: &NetworkArchitecture,
    z: &LatentInput,
    lambda: f64,
    n_samples: usize,
    seed: u64,
    probe_cells: &[usize],
) -> Result<PriorStatistics> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "prior statistics need at least two samples, got {n_samples}"
        )));
    }
    let draws = (0..n_samples).map(|k| {
        let mut r = rng::split(seed, rng::stream::PRIOR_STATS, k as u64);
        sample_prior_weights_from(arch, lambda, &mut r)
    });
    accumulate_prior_samples(arch, z, draws, probe_cells)
}

/// Streams network outputs for the given weight draws through a Welford accumulator.
pub fn accumulate_prior_samples<I>(
    arch: &NetworkArchitecture,
    z: &LatentInput,
    weights: I,
    probe_cells: &[usize],
) -> Result<PriorStatistics>
where
    I: IntoIterator<Item = Result<NetworkWeights>>,
{
    let cells = arch.nz * arch.nx;
    if let Some(&c) = probe_cells.iter().find(|&&c| c >= cells) {
        return Err(Error::InvalidArgument(format!(
            "probe cell {c} outside the {cells}-cell image"
        )));
    }
    let mut acc = Welford::new(cells);
    let mut probes: Vec<(usize, Vec<f64>)> = probe_cells.iter().map(|&c| (c, Vec::new())).collect();
    for w in weights {
        let out = network_forward(arch, z, &w?)?;
        let img = out.image();
        acc.push(img);
        for (c, vals) in &mut probes {
            vals.push(img[*c]);
        }
    }
    if acc.count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "prior statistics need at least two samples, got {}",
            acc.count()
        )));
    }
    Ok(PriorStatistics {
        mean: acc.mean().to_vec(),
        std: acc.std(),
        n_samples: acc.count(),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{init_latent, sample_prior_weights};

    #[test]
    fn repeated_weights_give_zero_std() {
        let arch = NetworkArchitecture::default_for(8, 8);
        let z = init_latent(&arch, 0).unwrap();
        let w = sample_prior_weights(&arch, 5.0, 1).unwrap();
        let s = accumulate_prior_samples(&arch, &z, vec![Ok(w.clone()), Ok(w)], &[3]).unwrap();
        assert!(s.std.iter().all(|&v| v == 0.0));
        assert_eq!(s.probes[0].1.len(), 2);
        assert!(prior_statistics(&arch, &z, 5.0, 1, 0).is_err());
    }
}
