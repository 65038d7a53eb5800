//! Uniform periodic grid on `[-L/2, L/2)^N`, sampled fields, and the spectral
//! machinery (transforms, derivatives, dilation) built on top of it.
//!
//! Samples are stored axis-major: the flat index of the multi-index
//! `(i_0, ..., i_{N-1})` is `i_0 n^{N-1} + ... + i_{N-1}`, so the last axis is
//! contiguous. Every integral is a midpoint sum weighted by the cell volume.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "grid dimension must be positive".into(),
            ));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "points per dimension must be even, got {n}"
            )));
        }
        if !length.is_finite() || length <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "box length must be positive, got {length}"
            )));
        }
        Ok(Self { dim, n, length })
    }

    pub fn from_params(params: &SystemParams) -> Result<Self> {
        Self::new(params.space_dim, params.points_per_dim, params.box_length)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of samples, `n^N`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    /// Index whose coordinate is zero along every axis.
    pub fn origin_index(&self) -> usize {
        self.flat_index(&vec![self.n / 2; self.dim])
    }

    /// Signed integer frequency of index `i` (the Nyquist bin maps to `-n/2`).
    pub fn signed_frequency(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI / self.length * self.signed_frequency(i) as f64
    }

    /// Periodic (minimum image) offset for an index difference along one axis.
    pub fn periodic_offset(&self, i: usize) -> f64 {
        let i = i % self.n;
        let j = i.min(self.n - i);
        j as f64 * self.spacing()
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = flat % self.n;
            flat /= self.n;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    /// Position of the sample at `flat`.
    pub fn position(&self, flat: usize, out: &mut [f64]) {
        let mut idx = vec![0; self.dim];
        self.multi_index(flat, &mut idx);
        for (x, i) in out.iter_mut().zip(idx) {
            *x = self.coordinate(i);
        }
    }

    /// `|k|^2` for every spectral bin, in storage order.
    pub fn wavenumber_sq(&self) -> Vec<f64> {
        let per_axis: Vec<f64> = (0..self.n).map(|i| self.wavenumber(i).powi(2)).collect();
        let mut idx = vec![0; self.dim];
        (0..self.len())
            .map(|flat| {
                self.multi_index(flat, &mut idx);
                idx.iter().map(|&i| per_axis[i]).sum()
            })
            .collect()
    }

    pub fn max_wavenumber_sq(&self) -> f64 {
        self.dim as f64 * (PI * self.n as f64 / self.length).powi(2)
    }
}

/// Complex samples of one function on a grid.
#[derive(Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<Complex64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("mass", &self.mass())
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_data(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                found: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn from_real(grid: Grid, data: &[f64]) -> Result<Self> {
        Self::from_data(grid, data.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Sample `f` at every grid position.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let data = (0..grid.len())
            .map(|flat| {
                grid.position(flat, &mut x);
                f(&x)
            })
            .collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `int |f|^2`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.data.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass().sqrt()
    }

    pub fn lp_norm(&self, s: f64) -> Result<f64> {
        if !(s >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "L^s norm needs s >= 1, got {s}"
            )));
        }
        let sum: f64 = self.data.iter().map(|z| z.norm().powf(s)).sum();
        Ok((self.grid.cell_volume() * sum).powf(1.0 / s))
    }

    /// `int |grad f|^2`, evaluated spectrally. Builds a throwaway transform
    /// context; use [`Spectral::grad_norm_sq`] in loops.
    pub fn grad_norm_sq(&self) -> f64 {
        Spectral::new(self.grid).grad_norm_sq(self)
    }

    /// `<self, other> = int conj(self) other`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.ensure_same_grid(other)?;
        let s: Complex64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        Field {
            grid: self.grid,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        for z in &mut self.data {
            *z *= c;
        }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: Complex64, other: &Field) -> Result<()> {
        self.ensure_same_grid(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// Pointwise modulus.
    pub fn modulus(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    /// Circular shift: `out(x) = self(x - shift)` in grid units per axis.
    pub fn shifted(&self, shift: &[usize]) -> Field {
        let g = self.grid;
        let n = g.points_per_dim();
        let mut out = Field::zeros(g);
        let mut idx = vec![0; g.dim()];
        for flat in 0..g.len() {
            g.multi_index(flat, &mut idx);
            for (i, s) in idx.iter_mut().zip(shift) {
                *i = (*i + s) % n;
            }
            out.data[g.flat_index(&idx)] = self.data[flat];
        }
        out
    }
}

/// `m` fields sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiField {
    components: Vec<Field>,
}

impl MultiField {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("a multi-field needs a component".into()))?;
        for c in &components[1..] {
            first.ensure_same_grid(c)?;
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: Grid, m: usize) -> Self {
        Self {
            components: vec![Field::zeros(grid); m],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Field] {
        &mut self.components
    }

    pub fn component(&self, j: usize) -> &Field {
        &self.components[j]
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    pub fn masses(&self) -> Vec<f64> {
        self.components.iter().map(Field::mass).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(Field::is_finite)
    }

    pub fn ensure_same_grid(&self, other: &MultiField) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ComponentCount {
                expected: self.len(),
                found: other.len(),
            });
        }
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `self += c * other`, componentwise.
    pub fn axpy(&mut self, c: f64, other: &MultiField) -> Result<()> {
        self.ensure_same_grid(other)?;
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.axpy(Complex64::new(c, 0.0), b)?;
        }
        Ok(())
    }

    /// `sum_j |f_j|^2` at every grid point.
    pub fn total_density(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.grid().len()];
        for c in &self.components {
            for (r, z) in rho.iter_mut().zip(c.data()) {
                *r += z.norm_sqr();
            }
        }
        rho
    }

    pub fn shifted(&self, shift: &[usize]) -> MultiField {
        MultiField {
            components: self.components.iter().map(|c| c.shifted(shift)).collect(),
        }
    }
}

/// Transform context: cached FFT plans and the `|k|^2` table for one grid.
///
/// Forward transforms are unnormalized, `F_k = sum_x f_x e^{-i k (x - x_0)}`;
/// the inverse divides by `n^N`. Plans are shared, scratch is per call, so a
/// context may be used from several threads.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k_sq: Vec<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_dim();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k_sq: grid.wavenumber_sq(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn wavenumber_sq(&self) -> &[f64] {
        &self.k_sq
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::SizeMismatch {
                expected: self.grid.len(),
                found: len,
            });
        }
        Ok(())
    }

    fn process(&self, plan: &dyn Fft<f64>, buf: &mut [Complex64]) {
        let n = self.grid.points_per_dim();
        let dim = self.grid.dim();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Last axis is contiguous: every chunk of n is one line.
        plan.process_with_scratch(buf, &mut scratch);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..dim.saturating_sub(1) {
            let stride = n.pow((dim - 1 - axis) as u32);
            let outer = buf.len() / (n * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for (t, v) in line.iter_mut().enumerate() {
                        *v = buf[base + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, v) in line.iter().enumerate() {
                        buf[base + t * stride] = *v;
                    }
                }
            }
        }
    }

    /// In-place forward transform.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.check_len(buf.len())?;
        self.process(self.forward.as_ref(), buf);
        Ok(())
    }

    /// In-place normalized inverse transform.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.check_len(buf.len())?;
        self.process(self.inverse.as_ref(), buf);
        let norm = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= norm;
        }
        Ok(())
    }

    pub fn transform(&self, field: &Field) -> Result<Vec<Complex64>> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut buf = field.data().to_vec();
        self.forward_in_place(&mut buf)?;
        Ok(buf)
    }

    pub fn inverse_transform(&self, spectrum: &[Complex64]) -> Result<Field> {
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf)?;
        Field::from_data(self.grid, buf)
    }

    /// Mass computed from a spectrum; equals [`Field::mass`] by Parseval.
    pub fn spectral_mass(&self, spectrum: &[Complex64]) -> f64 {
        let norm = self.grid.cell_volume() / self.grid.len() as f64;
        norm * spectrum.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn grad_norm_sq(&self, field: &Field) -> f64 {
        let spec = self
            .transform(field)
            .expect("grad_norm_sq: field grid differs from the transform grid");
        self.grad_norm_sq_of_spectrum(&spec)
    }

    pub(crate) fn grad_norm_sq_of_spectrum(&self, spec: &[Complex64]) -> f64 {
        let norm = self.grid.cell_volume() / self.grid.len() as f64;
        norm * spec
            .iter()
            .zip(&self.k_sq)
            .map(|(z, k2)| k2 * z.norm_sqr())
            .sum::<f64>()
    }

    /// `-Delta f` together with `int |grad f|^2`.
    pub fn neg_laplacian(&self, field: &Field) -> Result<(Field, f64)> {
        let mut spec = self.transform(field)?;
        let kinetic = self.grad_norm_sq_of_spectrum(&spec);
        for (z, k2) in spec.iter_mut().zip(&self.k_sq) {
            *z *= k2;
        }
        self.inverse_in_place(&mut spec)?;
        Ok((Field::from_data(self.grid, spec)?, kinetic))
    }

    /// `int |f|^2 + int |grad f|^2`.
    pub fn h1_norm_sq(&self, field: &Field) -> f64 {
        field.mass() + self.grad_norm_sq(field)
    }
}

/// Trigonometric interpolation kernel of an `n`-point periodic grid with the
/// Nyquist mode split symmetrically, evaluated at offset `s`.
fn dirichlet_kernel(n: usize, length: f64, s: f64) -> f64 {
    let w = 2.0 * PI / length;
    let mut acc = 1.0;
    for j in 1..n / 2 {
        acc += 2.0 * (w * j as f64 * s).cos();
    }
    acc += (w * (n / 2) as f64 * s).cos();
    acc / n as f64
}

/// L2-critical dilation `u^theta(x) = theta^{N/2} u(theta x)`.
///
/// `u` is evaluated off-grid through its trigonometric interpolant and taken
/// to vanish outside the box, so for `theta > 1` samples whose preimage falls
/// outside `[-L/2, L/2]` are zero.
pub fn dilate(field: &Field, theta: f64) -> Result<Field> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dilation factor must be positive, got {theta}"
        )));
    }
    if theta == 1.0 {
        return Ok(field.clone());
    }
    let g = *field.grid();
    let n = g.points_per_dim();
    let half = 0.5 * g.box_length();
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        let y = theta * g.coordinate(i);
        if y.abs() > half * (1.0 + 1e-12) {
            continue;
        }
        for l in 0..n {
            matrix[i * n + l] = dirichlet_kernel(n, g.box_length(), y - g.coordinate(l));
        }
    }

    let mut buf = field.data().to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let dim = g.dim();
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let outer = buf.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (i, out) in line.iter_mut().enumerate() {
                    let row = &matrix[i * n..(i + 1) * n];
                    *out = row
                        .iter()
                        .enumerate()
                        .map(|(l, a)| buf[base + l * stride] * *a)
                        .sum();
                }
                for (t, v) in line.iter().enumerate() {
                    buf[base + t * stride] = *v;
                }
            }
        }
    }
    let amp = theta.powf(0.5 * dim as f64);
    for z in &mut buf {
        *z *= amp;
    }
    Field::from_data(g, buf)
}
