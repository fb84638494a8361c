//! Spectrum diagnostics: eigenvalue reports for the noise contraction and
//! for the spiked tensor contracted at its first fitted direction.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tensor_deflation::seeding::{mix2, substream};
use tensor_deflation::{
    best_rank1, contraction_spectrum, sample_noise, sample_spiked_tensor, GroundTruth,
    SpectrumReport, UnitVector,
};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::plot::spectrum_plot_svg;
use crate::CliError;

/// Stream id for the probe direction, distinct from the model streams.
const STREAM_PROBE: u64 = 0x51;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumOutput {
    /// Bulk of `(1/√n) W · u^{d−2}` at an independent direction.
    pub noise: SpectrumReport,
    /// Spectrum of the spiked tensor contracted at its first fitted
    /// direction, which carries the fitted eigenvalue as an outlier.
    pub spiked: SpectrumReport,
    /// The fitted eigenvalue behind the spiked report.
    pub lambda_hat: f64,
}

pub fn run_spectrum(config: &ExperimentConfig) -> Result<SpectrumOutput, CliError> {
    let n = config.model.n;
    let d = config.model.d;
    let seed = config.base_seed;

    let noise = sample_noise(n, d, seed)?;
    let scaled = noise.scaled(1.0 / (n as f64).sqrt());
    let mut rng = substream(seed, STREAM_PROBE);
    let probe = UnitVector::normalized(DVector::from_fn(n, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))?;
    let noise_report = contraction_spectrum(&scaled, &probe)?;

    let beta1 = config.beta_grid()[0];
    let params = config.spike_params(beta1, seed)?;
    let truth = GroundTruth::generate(params)?;
    let spiked_tensor = sample_spiked_tensor(&truth)?;
    let opts = config.power_options(mix2(seed, STREAM_PROBE));
    let fit = best_rank1(&spiked_tensor, &opts)?;
    let spiked_report = contraction_spectrum(&spiked_tensor, &fit.u)?;

    let output = SpectrumOutput {
        noise: noise_report,
        spiked: spiked_report,
        lambda_hat: fit.lambda_hat,
    };
    write_outputs(config, &output)?;
    Ok(output)
}

fn write_outputs(config: &ExperimentConfig, output: &SpectrumOutput) -> Result<(), CliError> {
    let dir = &config.outputs.dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("spectrum_noise.json"),
        serde_json::to_string_pretty(&output.noise)?,
    )?;
    std::fs::write(
        dir.join("spectrum_spiked.json"),
        serde_json::to_string_pretty(&output.spiked)?,
    )?;
    if config.wants(OutputFormat::Svg) {
        std::fs::write(
            dir.join("spectrum_noise.svg"),
            spectrum_plot_svg(&output.noise, 40)?,
        )?;
        std::fs::write(
            dir.join("spectrum_spiked.svg"),
            spectrum_plot_svg(&output.spiked, 40)?,
        )?;
    }
    Ok(())
}
