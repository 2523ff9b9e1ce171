//! Benchmark blur kernels and synthetic observations `y = Hx + n`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cube::{HsiCube, KernelStack};
use crate::error::{Error, Result};
use crate::spectral::circ_convolve;

/// Parametric description of a normalized blur kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// Isotropic Gaussian sampled at integer offsets; `bandwidth` is the std in pixels.
    Gaussian { size: usize, bandwidth: f64 },
    /// Uniform disc of the given diameter.
    Circle { size: usize, diameter: usize },
    /// Line segment of `length` pixels at `angle` degrees counter-clockwise from the column axis.
    Motion {
        size: usize,
        length: f64,
        angle: f64,
    },
    /// Uniform centred square with an odd side.
    Square { size: usize, side: usize },
}

impl KernelSpec {
    pub fn size(&self) -> usize {
        match *self {
            KernelSpec::Gaussian { size, .. }
            | KernelSpec::Circle { size, .. }
            | KernelSpec::Motion { size, .. }
            | KernelSpec::Square { size, .. } => size,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Gaussian { size, bandwidth } => write!(f, "gaussian:{size}:{bandwidth}"),
            KernelSpec::Circle { size, diameter } => write!(f, "circle:{size}:{diameter}"),
            KernelSpec::Motion {
                size,
                length,
                angle,
            } => write!(f, "motion:{size}:{length}:{angle}"),
            KernelSpec::Square { size, side } => write!(f, "square:{size}:{side}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `kind:size:params...`, e.g. `gaussian:9:2` or `motion:13:11:30`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::spec(format!("cannot parse kernel spec '{s}'"));
        let int = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(bad)?
                .trim()
                .parse()
                .map_err(|_| bad())
        };
        let real = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(bad)?
                .trim()
                .parse()
                .map_err(|_| bad())
        };
        let (kind, arity) = (parts[0].trim().to_ascii_lowercase(), parts.len());
        let spec = match (kind.as_str(), arity) {
            ("gaussian", 3) => KernelSpec::Gaussian {
                size: int(1)?,
                bandwidth: real(2)?,
            },
            ("circle", 3) => KernelSpec::Circle {
                size: int(1)?,
                diameter: int(2)?,
            },
            ("motion", 4) => KernelSpec::Motion {
                size: int(1)?,
                length: real(2)?,
                angle: real(3)?,
            },
            ("square", 3) => KernelSpec::Square {
                size: int(1)?,
                side: int(2)?,
            },
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

/// Builds a single shared kernel from `spec`, normalized to unit mass.
pub fn make_kernel(spec: &KernelSpec) -> Result<KernelStack> {
    let size = spec.size();
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::spec(format!("kernel size must be odd, got {size}")));
    }
    let c = ((size - 1) / 2) as f64;
    let mut taps = vec![0.0; size * size];
    match *spec {
        KernelSpec::Gaussian { bandwidth, .. } => {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::spec("gaussian bandwidth must be positive"));
            }
            for (i, t) in taps.iter_mut().enumerate() {
                let (r, col) = ((i / size) as f64 - c, (i % size) as f64 - c);
                *t = (-(r * r + col * col) / (2.0 * bandwidth * bandwidth)).exp();
            }
        }
        KernelSpec::Circle { diameter, .. } => {
            if diameter == 0 {
                return Err(Error::spec("circle diameter must be positive"));
            }
            if diameter > size {
                return Err(Error::spec("circle diameter exceeds kernel size"));
            }
            let r2 = (diameter as f64 / 2.0).powi(2);
            for (i, t) in taps.iter_mut().enumerate() {
                let (r, col) = ((i / size) as f64 - c, (i % size) as f64 - c);
                if r * r + col * col <= r2 {
                    *t = 1.0;
                }
            }
        }
        KernelSpec::Square { side, .. } => {
            if side == 0 {
                return Err(Error::spec("square side must be positive"));
            }
            if side % 2 == 0 || side > size {
                return Err(Error::spec(format!(
                    "square side must be odd and at most {size}, got {side}"
                )));
            }
            let h = ((side - 1) / 2) as f64;
            for (i, t) in taps.iter_mut().enumerate() {
                let (r, col) = ((i / size) as f64 - c, (i % size) as f64 - c);
                if r.abs() <= h && col.abs() <= h {
                    *t = 1.0;
                }
            }
        }
        KernelSpec::Motion { length, angle, .. } => {
            if !(length >= 0.0 && length.is_finite() && angle.is_finite()) {
                return Err(Error::spec("motion length must be finite and non-negative"));
            }
            if length > (size - 1) as f64 {
                return Err(Error::spec(
                    "motion length does not fit in the kernel window",
                ));
            }
            rasterize_line(&mut taps, size, length, angle.to_radians());
        }
    }
    let mass: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= mass);
    KernelStack::shared(size, size, taps)
}

/// Splats densely sampled points of a centred segment with bilinear weights.
fn rasterize_line(taps: &mut [f64], size: usize, length: f64, theta: f64) {
    let c = ((size - 1) / 2) as f64;
    let samples = ((length * 16.0).ceil() as usize).max(1) + 1;
    let (dc, dr) = (theta.cos(), -theta.sin());
    for s in 0..samples {
        let t = if samples == 1 {
            0.0
        } else {
            -length / 2.0 + length * s as f64 / (samples - 1) as f64
        };
        let (r, col) = (c + t * dr, c + t * dc);
        let (r0, c0) = (r.floor(), col.floor());
        let (fr, fc) = (r - r0, col - c0);
        for (dr_i, wr) in [(0usize, 1.0 - fr), (1, fr)] {
            for (dc_i, wc) in [(0usize, 1.0 - fc), (1, fc)] {
                let w = wr * wc;
                if w <= 0.0 {
                    continue;
                }
                let (ri, ci) = (r0 as usize + dr_i, c0 as usize + dc_i);
                if ri < size && ci < size {
                    taps[ri * size + ci] += w;
                }
            }
        }
    }
}

/// Additive white Gaussian noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Draws `len` i.i.d. standard-normal samples from ChaCha20 seeded with `seed`.
pub fn gaussian_samples(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Synthesizes `circ_convolve(x, kernels) + n` with `n ~ N(0, sigma²)` i.i.d.
pub fn degrade(x: &HsiCube, kernels: &KernelStack, noise: &NoiseSpec) -> Result<HsiCube> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::spec(format!(
            "noise sigma must be finite and non-negative, got {}",
            noise.sigma
        )));
    }
    let mut y = circ_convolve(x, kernels)?;
    if noise.sigma > 0.0 {
        let n = gaussian_samples(noise.seed, y.len());
        for (v, e) in y.data_mut().iter_mut().zip(n) {
            *v += noise.sigma * e;
        }
    }
    Ok(y)
}

/// The six benchmark blur scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::A,
        Scenario::B,
        Scenario::C,
        Scenario::D,
        Scenario::E,
        Scenario::F,
    ];

    pub fn kernel_spec(self) -> KernelSpec {
        match self {
            Scenario::A | Scenario::C => KernelSpec::Gaussian {
                size: 9,
                bandwidth: 2.0,
            },
            Scenario::B => KernelSpec::Gaussian {
                size: 13,
                bandwidth: 3.0,
            },
            Scenario::D => KernelSpec::Circle {
                size: 9,
                diameter: 7,
            },
            // Parametric stand-in for an externally measured motion blur.
            Scenario::E => KernelSpec::Motion {
                size: 13,
                length: 11.0,
                angle: 30.0,
            },
            Scenario::F => KernelSpec::Square { size: 5, side: 5 },
        }
    }

    pub fn sigma(self) -> f64 {
        match self {
            Scenario::C => 0.03,
            _ => 0.01,
        }
    }

    pub fn label(self) -> char {
        match self {
            Scenario::A => 'a',
            Scenario::B => 'b',
            Scenario::C => 'c',
            Scenario::D => 'd',
            Scenario::E => 'e',
            Scenario::F => 'f',
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            "d" => Ok(Scenario::D),
            "e" => Ok(Scenario::E),
            "f" => Ok(Scenario::F),
            other => Err(Error::spec(format!("unknown scenario '{other}'"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}
