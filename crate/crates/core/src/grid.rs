//! Uniform periodic 1-D grid, spectral one-body operators and quadrature.
//!
//! Positions are `x_i = -L/2 + i * dx` with `dx = L / n`. Second derivatives
//! are evaluated with the discrete Fourier transform, so the kinetic operator
//! is exactly Hermitian with respect to the trapezoidal inner product
//! `<f|g> = sum_i conj(f_i) g_i dx`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Result, SolverError};

/// A complex function sampled on the grid.
pub type GridFn = Vec<Complex64>;

const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct SpatialGrid {
    n_points: usize,
    length: f64,
    spacing: f64,
    points: Vec<f64>,
    // k^2 for each FFT bin, in FFT ordering.
    k_squared: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("n_points", &self.n_points)
            .field("length", &self.length)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points && self.length == other.length
    }
}

impl SpatialGrid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 8 || n_points % 2 != 0 {
            return Err(SolverError::Precondition(format!(
                "grid needs an even number of points >= 8, got {n_points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(SolverError::Precondition(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        let spacing = length / n_points as f64;
        let points = (0..n_points)
            .map(|i| -0.5 * length + i as f64 * spacing)
            .collect();
        let dk = 2.0 * std::f64::consts::PI / length;
        let k_squared = (0..n_points)
            .map(|j| {
                let m = if j <= n_points / 2 {
                    j as f64
                } else {
                    j as f64 - n_points as f64
                };
                (m * dk).powi(2)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_points);
        let inverse = planner.plan_fft_inverse(n_points);
        Ok(Self {
            n_points,
            length,
            spacing,
            points,
            k_squared,
            forward,
            inverse,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn zeros(&self) -> GridFn {
        vec![Complex64::new(0.0, 0.0); self.n_points]
    }

    /// Samples a real function on the grid as a complex grid function.
    pub fn sample<F: Fn(f64) -> Complex64>(&self, f: F) -> GridFn {
        self.points.iter().map(|&x| f(x)).collect()
    }

    /// Periodic spectral second derivative.
    pub fn second_derivative(&self, f: &[Complex64]) -> Result<GridFn> {
        check_len("second_derivative", self.n_points, f.len())?;
        let mut buf = f.to_vec();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n_points as f64;
        for (c, &k2) in buf.iter_mut().zip(&self.k_squared) {
            *c *= -k2 * scale;
        }
        self.inverse.process(&mut buf);
        Ok(buf)
    }

    /// `sum_i conj(f_i) g_i dx`.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Result<Complex64> {
        check_len("inner", self.n_points, f.len())?;
        check_len("inner", self.n_points, g.len())?;
        Ok(self.inner_unchecked(f, g))
    }

    pub(crate) fn inner_unchecked(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        f.iter().zip(g).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.spacing
    }

    pub fn norm(&self, f: &[Complex64]) -> f64 {
        (f.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.spacing).sqrt()
    }

    /// Evaluates `f(x_i + shift)` using periodic linear interpolation.
    ///
    /// `shift` must be an integer or half-integer multiple of the spacing.
    pub fn interpolate_half_points(&self, f: &[Complex64], shift: f64) -> Result<GridFn> {
        check_len("interpolate_half_points", self.n_points, f.len())?;
        let half_steps = 2.0 * shift / self.spacing;
        let rounded = half_steps.round();
        if !half_steps.is_finite() || (half_steps - rounded).abs() > ALIGN_TOL * rounded.abs().max(1.0)
        {
            return Err(SolverError::Precondition(format!(
                "shift {shift} is not a multiple of half the grid spacing {}",
                0.5 * self.spacing
            )));
        }
        let half_steps = rounded as i64;
        let n = self.n_points as i64;
        let whole = half_steps.div_euclid(2);
        let odd = half_steps.rem_euclid(2) == 1;
        let out = (0..n)
            .map(|i| {
                let lo = f[(i + whole).rem_euclid(n) as usize];
                if odd {
                    let hi = f[(i + whole + 1).rem_euclid(n) as usize];
                    0.5 * (lo + hi)
                } else {
                    lo
                }
            })
            .collect();
        Ok(out)
    }

    /// Applies the one-body operator `-(1/2m) d^2/dx^2 + V(x) + offset`.
    pub fn apply_one_body(&self, spec: &OneBodyOperatorSpec, f: &[Complex64]) -> Result<GridFn> {
        check_len("apply_one_body", self.n_points, f.len())?;
        check_len("apply_one_body potential", self.n_points, spec.potential.len())?;
        let mut out = self.second_derivative(f)?;
        let kin = -0.5 / spec.mass;
        for ((o, &fi), &v) in out.iter_mut().zip(f).zip(&spec.potential) {
            *o = kin * *o + (v + spec.energy_offset) * fi;
        }
        Ok(out)
    }

    /// Lowest `count` eigenfunctions of a one-body operator on this grid,
    /// normalized and phased so that the largest-magnitude sample is real positive.
    pub fn lowest_eigenstates(
        &self,
        spec: &OneBodyOperatorSpec,
        count: usize,
    ) -> Result<Vec<GridFn>> {
        if count > self.n_points {
            return Err(SolverError::Precondition(format!(
                "requested {count} eigenstates from a {}-point grid",
                self.n_points
            )));
        }
        let n = self.n_points;
        let mut h = DMatrix::<Complex64>::zeros(n, n);
        let mut unit = self.zeros();
        for j in 0..n {
            unit.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            unit[j] = Complex64::new(1.0, 0.0);
            let col = self.apply_one_body(spec, &unit)?;
            for (i, v) in col.into_iter().enumerate() {
                h[(i, j)] = v;
            }
        }
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let states = order
            .into_iter()
            .take(count)
            .map(|idx| {
                let col = eig.eigenvectors.column(idx);
                let mut f: GridFn = col.iter().copied().collect();
                let pivot = f
                    .iter()
                    .copied()
                    .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                    .unwrap_or(Complex64::new(1.0, 0.0));
                let phase = pivot.conj() / pivot.norm();
                let norm = self.norm(&f);
                f.iter_mut().for_each(|c| *c *= phase / norm);
                f
            })
            .collect();
        Ok(states)
    }
}

/// Data for a one-body operator `h = -(1/2m) d^2/dx^2 + V(x) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyOperatorSpec {
    pub mass: f64,
    pub potential: Vec<f64>,
    pub energy_offset: f64,
}

impl OneBodyOperatorSpec {
    pub fn new(grid: &SpatialGrid, mass: f64, potential: Vec<f64>, energy_offset: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(SolverError::Precondition(format!(
                "mass must be positive, got {mass}"
            )));
        }
        check_len("one-body potential", grid.n_points(), potential.len())?;
        Ok(Self {
            mass,
            potential,
            energy_offset,
        })
    }
}

/// External trap description, as written in config files.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    None,
    /// `V(x) = m omega^2 x^2 / 2`, using the mass of the species it traps.
    Harmonic(f64),
    Samples(Vec<f64>),
}

impl PotentialSpec {
    /// Parses `none`, `harmonic(omega)`, or a path to a file with one value per line.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("none") {
            return Ok(Self::None);
        }
        if let Some(arg) = t
            .strip_prefix("harmonic(")
            .and_then(|rest| rest.strip_suffix(')'))
        {
            let omega: f64 = arg.trim().parse().map_err(|_| {
                SolverError::Precondition(format!("bad harmonic frequency '{arg}'"))
            })?;
            return Ok(Self::Harmonic(omega));
        }
        let path = match base_dir {
            Some(dir) if Path::new(t).is_relative() => dir.join(t),
            _ => Path::new(t).to_path_buf(),
        };
        let body = std::fs::read_to_string(&path).map_err(|e| {
            SolverError::Precondition(format!("cannot read potential file {}: {e}", path.display()))
        })?;
        let values = body
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>().map_err(|_| {
                    SolverError::Precondition(format!(
                        "bad value '{l}' in potential file {}",
                        path.display()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::Samples(values))
    }

    pub fn sample(&self, grid: &SpatialGrid, mass: f64) -> Result<Vec<f64>> {
        match self {
            Self::None => Ok(vec![0.0; grid.n_points()]),
            Self::Harmonic(omega) => Ok(grid
                .points()
                .iter()
                .map(|x| 0.5 * mass * omega * omega * x * x)
                .collect()),
            Self::Samples(v) => {
                check_len("potential file", grid.n_points(), v.len())?;
                Ok(v.clone())
            }
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Harmonic(w) => write!(f, "harmonic({w})"),
            Self::Samples(v) => write!(f, "<{} samples>", v.len()),
        }
    }
}

/// Harmonic-oscillator eigenfunction `n` for mass `m` and frequency `omega`.
pub fn harmonic_eigenfunction(grid: &SpatialGrid, mass: f64, omega: f64, n: usize) -> GridFn {
    let alpha = (mass * omega).sqrt();
    let norm0 = (mass * omega / std::f64::consts::PI).powf(0.25);
    grid.sample(|x| {
        let y = alpha * x;
        // Physicists' Hermite polynomials by recurrence.
        let (mut h_prev, mut h) = (1.0, 2.0 * y);
        let hn = if n == 0 {
            1.0
        } else {
            for k in 1..n {
                let next = 2.0 * y * h - 2.0 * k as f64 * h_prev;
                h_prev = h;
                h = next;
            }
            h
        };
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        let c = norm0 / (2f64.powi(n as i32) * fact).sqrt();
        Complex64::new(c * hn * (-0.5 * y * y).exp(), 0.0)
    })
}
