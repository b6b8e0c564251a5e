use crate::error::{Error, Result};
use crate::par;
use crate::phy::{EchoTensor, OfdmConfig};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// How antennas are combined into one power map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    /// Sum of per-antenna power.
    #[default]
    Noncoherent,
    /// A single antenna's map.
    Antenna(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => {
                // periodic Hann scaled to unit power so Parseval still holds
                let w: Vec<f64> = (0..n)
                    .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                    .collect();
                let p = (w.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
                w.into_iter().map(|x| x / p).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdOptions {
    pub combine: Combine,
    pub window: Window,
    /// Zero-padding factor along range (1 = none).
    pub range_oversample: usize,
    /// Zero-padding factor along Doppler (1 = none).
    pub doppler_oversample: usize,
}

impl Default for RdOptions {
    fn default() -> Self {
        RdOptions {
            combine: Combine::Noncoherent,
            window: Window::Rectangular,
            range_oversample: 1,
            doppler_oversample: 1,
        }
    }
}

/// Power over `[range_bin][doppler_bin]`. Doppler bin 0 is zero Doppler; bins
/// above the midpoint are negative frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub power: Array2<f64>,
    /// Meters per range bin.
    pub range_bin_size: f64,
    /// Hz per Doppler bin.
    pub doppler_bin_size: f64,
}

impl RangeDopplerMap {
    pub fn n_range(&self) -> usize {
        self.power.shape()[0]
    }

    pub fn n_doppler(&self) -> usize {
        self.power.shape()[1]
    }

    /// Signed Doppler in bins for a (possibly fractional) bin index.
    pub fn signed_doppler_bins(&self, bin: f64) -> f64 {
        let m = self.n_doppler() as f64;
        if bin >= m / 2.0 {
            bin - m
        } else {
            bin
        }
    }

    pub fn total_power(&self) -> f64 {
        self.power.sum()
    }
}

/// Complex per-antenna range-Doppler transform, `[antenna][range][doppler]`.
#[derive(Debug, Clone)]
pub struct RangeDopplerCube {
    pub data: Array3<Complex64>,
    pub range_bin_size: f64,
    pub doppler_bin_size: f64,
}

/// IDFT over subcarriers then DFT over symbols, per antenna, scaled by
/// `1/sqrt(N M)` so the transform is unitary when no zero padding is used.
pub fn range_doppler_cube(echo: &EchoTensor, ofdm: &OfdmConfig, opts: &RdOptions) -> Result<RangeDopplerCube> {
    let (na, nk, nm) = (echo.n_antennas(), echo.n_subcarriers(), echo.n_symbols());
    if nk != ofdm.n_subcarriers || nm != ofdm.n_symbols {
        return Err(Error::DimensionMismatch {
            expected: format!("{} x {}", ofdm.n_subcarriers, ofdm.n_symbols),
            got: format!("{nk} x {nm}"),
        });
    }
    if opts.range_oversample == 0 || opts.doppler_oversample == 0 {
        return Err(Error::arg("oversampling factors must be >= 1"));
    }
    let nr = nk * opts.range_oversample;
    let nd = nm * opts.doppler_oversample;
    let wr = opts.window.weights(nk);
    let wd = opts.window.weights(nm);
    let scale = 1.0 / ((nk * nm) as f64).sqrt();

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(nr);
    let fft = planner.plan_fft_forward(nd);

    let mut data = Array3::<Complex64>::zeros((na, nr, nd));
    let slab = nr * nd;
    let flat = data.as_slice_mut().expect("standard layout");
    par::for_each_chunk_mut(flat, slab, |a, out| {
        // range transform for each symbol, stored transposed [symbol][range]
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        let mut tmp = vec![Complex64::new(0.0, 0.0); nm * nr];
        for m in 0..nm {
            col.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for k in 0..nk {
                col[k] = echo.data[[a, k, m]] * wr[k] * wd[m];
            }
            ifft.process(&mut col);
            tmp[m * nr..(m + 1) * nr].copy_from_slice(&col);
        }
        let mut row = vec![Complex64::new(0.0, 0.0); nd];
        for r in 0..nr {
            row.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for m in 0..nm {
                row[m] = tmp[m * nr + r];
            }
            fft.process(&mut row);
            for d in 0..nd {
                out[r * nd + d] = row[d] * scale;
            }
        }
    });
    Ok(RangeDopplerCube {
        data,
        range_bin_size: ofdm.range_resolution() / opts.range_oversample as f64,
        doppler_bin_size: ofdm.doppler_resolution() / opts.doppler_oversample as f64,
    })
}

/// Range-Doppler power map with the given options.
pub fn range_doppler_map_with(echo: &EchoTensor, ofdm: &OfdmConfig, opts: &RdOptions) -> Result<RangeDopplerMap> {
    if let Combine::Antenna(a) = opts.combine {
        if a >= echo.n_antennas() {
            return Err(Error::arg(format!("antenna {a} out of range")));
        }
    }
    let cube = range_doppler_cube(echo, ofdm, opts)?;
    let (na, nr, nd) = cube.data.dim();
    let mut power = Array2::<f64>::zeros((nr, nd));
    let antennas: Vec<usize> = match opts.combine {
        Combine::Noncoherent => (0..na).collect(),
        Combine::Antenna(a) => vec![a],
    };
    for a in antennas {
        for ((r, d), p) in power.indexed_iter_mut() {
            *p += cube.data[[a, r, d]].norm_sqr();
        }
    }
    Ok(RangeDopplerMap {
        power,
        range_bin_size: cube.range_bin_size,
        doppler_bin_size: cube.doppler_bin_size,
    })
}

/// Rectangular-window, non-oversampled map combining antennas as requested.
pub fn range_doppler_map(echo: &EchoTensor, ofdm: &OfdmConfig, combine: Combine) -> Result<RangeDopplerMap> {
    range_doppler_map_with(
        echo,
        ofdm,
        &RdOptions {
            combine,
            ..RdOptions::default()
        },
    )
}

/// Splits the band into `n_bands` contiguous sub-bands and returns one map per
/// sub-band.
pub fn subband_maps(echo: &EchoTensor, ofdm: &OfdmConfig, n_bands: usize, combine: Combine) -> Result<Vec<RangeDopplerMap>> {
    if n_bands == 0 || !ofdm.n_subcarriers.is_multiple_of(n_bands) {
        return Err(Error::arg("n_bands must divide the subcarrier count"));
    }
    let width = ofdm.n_subcarriers / n_bands;
    let sub_ofdm = OfdmConfig {
        n_subcarriers: width,
        ..*ofdm
    };
    (0..n_bands)
        .map(|b| {
            let slice = echo
                .data
                .slice(ndarray::s![.., b * width..(b + 1) * width, ..])
                .to_owned();
            range_doppler_map(&EchoTensor { data: slice }, &sub_ofdm, combine)
        })
        .collect()
}

/// Noncoherent integration of per-band maps (cell-wise sum).
pub fn combine_subcarrier_detections(per_band_maps: &[RangeDopplerMap]) -> Result<RangeDopplerMap> {
    let first = per_band_maps
        .first()
        .ok_or_else(|| Error::arg("no maps to combine"))?;
    let mut power = first.power.clone();
    for m in &per_band_maps[1..] {
        if m.power.dim() != first.power.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", first.power.dim()),
                got: format!("{:?}", m.power.dim()),
            });
        }
        power += &m.power;
    }
    Ok(RangeDopplerMap {
        power,
        range_bin_size: first.range_bin_size,
        doppler_bin_size: first.doppler_bin_size,
    })
}
