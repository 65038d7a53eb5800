//! The Hartree energy and its pieces: kernel, nonlocal convolution, pair
//! interaction, energies, L2 gradient and Euler-Lagrange residual.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, MultiField, Spectral};

/// Periodized, truncated power-law potential on a grid.
///
/// `samples` are indexed by grid offset (origin at flat index 0, wrap-around
/// order), so the discrete convolution is `(W*rho)_x = h^N sum_y W_{x-y} rho_y`.
#[derive(Debug, Clone)]
pub struct Kernel {
    spectral: Spectral,
    samples: Vec<f64>,
    multiplier: Vec<f64>,
}

impl Kernel {
    /// `W(x) = |x|^{-alpha}` for `0 < |x|_per <= L/2`, zero beyond, and the
    /// origin cell replaced by the cell average of `|x|^{-alpha}`.
    pub fn power_law(grid: Grid, alpha: f64) -> Result<Self> {
        let dim = grid.dim();
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kernel exponent must be positive, got {alpha}"
            )));
        }
        if alpha >= dim as f64 {
            return Err(Error::SingularKernel { alpha, dim });
        }
        let half = 0.5 * grid.box_length();
        let mut idx = vec![0; dim];
        let samples = (0..grid.len())
            .map(|flat| {
                grid.multi_index(flat, &mut idx);
                let r = idx
                    .iter()
                    .map(|&i| grid.periodic_offset(i).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if r == 0.0 {
                    origin_cell_average(dim, alpha, grid.spacing())
                } else if r <= half * (1.0 + 1e-12) {
                    r.powf(-alpha)
                } else {
                    0.0
                }
            })
            .collect();
        Self::from_samples(grid, samples)
    }

    /// Vanishing potential; turns every interaction term off.
    pub fn zero(grid: Grid) -> Self {
        Self::from_samples(grid, vec![0.0; grid.len()]).expect("length matches grid")
    }

    pub fn from_samples(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                found: samples.len(),
            });
        }
        let spectral = Spectral::new(grid);
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spectral.forward_in_place(&mut buf)?;
        let multiplier = buf.iter().map(|z| z.re).collect();
        Ok(Self {
            spectral,
            samples,
            multiplier,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.spectral.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Real part of the unnormalized transform of `samples`.
    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    /// `W` at the grid offset given per axis (taken modulo `n`).
    pub fn sample_at_offset(&self, offset: &[usize]) -> f64 {
        self.samples[self.grid().flat_index(offset)]
    }

    /// `W * rho` for a real density sampled on the kernel grid.
    pub fn convolve_density(&self, density: &[f64]) -> Result<Vec<f64>> {
        let grid = *self.grid();
        if density.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                found: density.len(),
            });
        }
        let mut buf: Vec<Complex64> = density.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.spectral.forward_in_place(&mut buf)?;
        let h = grid.cell_volume();
        for (z, w) in buf.iter_mut().zip(&self.multiplier) {
            *z *= w * h;
        }
        self.spectral.inverse_in_place(&mut buf)?;
        Ok(buf.into_iter().map(|z| z.re).collect())
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid != self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Average of `|x|^{-alpha}` over the cube `[-h/2, h/2]^N`.
///
/// Splitting the cube into the `N` pyramids on which one coordinate dominates
/// reduces the singular integral to `N / (N - alpha)` times a smooth integral
/// of `(1 + |s|^2)^{-alpha/2}` over `[0,1]^{N-1}`.
fn origin_cell_average(dim: usize, alpha: f64, h: f64) -> f64 {
    let d = dim as f64;
    let smooth = if dim == 1 {
        1.0
    } else {
        let (nodes, weights) = gauss_legendre_unit(24);
        let m = nodes.len();
        let mut total = 0.0;
        let mut idx = vec![0usize; dim - 1];
        for flat in 0..m.pow((dim - 1) as u32) {
            let mut rem = flat;
            for i in idx.iter_mut() {
                *i = rem % m;
                rem /= m;
            }
            let s2: f64 = idx.iter().map(|&i| nodes[i] * nodes[i]).sum();
            let w: f64 = idx.iter().map(|&i| weights[i]).product();
            total += w * (1.0 + s2).powf(-0.5 * alpha);
        }
        total
    };
    // 2^N symmetric orthants, (h/2)^{N-alpha} scaling, divided by the cell volume.
    let integral = 2f64.powi(dim as i32) * (0.5 * h).powf(d - alpha) * d / (d - alpha) * smooth;
    integral / h.powi(dim as i32)
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `|f|^p` pointwise, with `|0|^p = 0`.
pub fn power_density(f: &Field, p: f64) -> Vec<f64> {
    if p == 2.0 {
        return f.data().iter().map(|z| z.norm_sqr()).collect();
    }
    f.data()
        .iter()
        .map(|z| {
            let a = z.norm();
            if a == 0.0 {
                0.0
            } else {
                a.powf(p)
            }
        })
        .collect()
}

/// `|z|^{p-2}`, equal to 1 for `p = 2` and to 0 at `z = 0` for `p > 2`.
#[inline]
fn nonlinear_weight(z: Complex64, p: f64) -> f64 {
    if p == 2.0 {
        return 1.0;
    }
    let a = z.norm();
    if a == 0.0 {
        0.0
    } else {
        a.powf(p - 2.0)
    }
}

/// `F_q(f, g) = (1/q) iint W(x - y) |f(x)|^p |g(y)|^p dx dy`.
pub fn pair_interaction(q: f64, f: &Field, g: &Field, kernel: &Kernel, p: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "q must be positive, got {q}"
        )));
    }
    f.ensure_same_grid(g)?;
    kernel.check_grid(f.grid())?;
    let conv = kernel.convolve_density(&power_density(g, p))?;
    let h = f.grid().cell_volume();
    let rho_f = power_density(f, p);
    Ok(h * conv.iter().zip(&rho_f).map(|(a, b)| a * b).sum::<f64>() / q)
}

/// Kinetic and interaction parts of the energy; `total = kinetic - interaction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub interaction: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(kinetic: f64, interaction: f64) -> Self {
        Self {
            kinetic,
            interaction,
            total: kinetic - interaction,
        }
    }
}

/// Nonlocal potential `V = W * sum_k |f_k|^p` shared by all components.
pub fn mean_field_potential(mf: &MultiField, kernel: &Kernel, p: f64) -> Result<Vec<f64>> {
    kernel.check_grid(mf.grid())?;
    let mut rho = vec![0.0; mf.grid().len()];
    for c in mf.components() {
        for (r, d) in rho.iter_mut().zip(power_density(c, p)) {
            *r += d;
        }
    }
    kernel.convolve_density(&rho)
}

fn interaction_from_potential(mf: &MultiField, potential: &[f64], p: f64) -> f64 {
    let h = mf.grid().cell_volume();
    let sum: f64 = mf
        .components()
        .iter()
        .map(|c| {
            power_density(c, p)
                .iter()
                .zip(potential)
                .map(|(a, v)| a * v)
                .sum::<f64>()
        })
        .sum();
    h * sum / (2.0 * p)
}

/// `I = 1/2 sum_j |grad f_j|^2 - 1/(2p) sum_{k,j} int (W*|f_k|^p) |f_j|^p`.
pub fn total_energy(mf: &MultiField, kernel: &Kernel, p: f64) -> Result<EnergyBreakdown> {
    let potential = mean_field_potential(mf, kernel, p)?;
    let sp = kernel.spectral();
    let kinetic: f64 = mf.components().iter().map(|c| sp.grad_norm_sq(c)).sum();
    let e = EnergyBreakdown::new(0.5 * kinetic, interaction_from_potential(mf, &potential, p));
    if !e.total.is_finite() {
        return Err(Error::NonFinite("energy".into()));
    }
    Ok(e)
}

/// Single-field energy `E(h) = 1/2 |grad h|^2 - F_{2p}(h, h)`.
pub fn single_energy(h: &Field, kernel: &Kernel, p: f64) -> Result<f64> {
    kernel.check_grid(h.grid())?;
    let kinetic = kernel.spectral().grad_norm_sq(h);
    Ok(0.5 * kinetic - pair_interaction(2.0 * p, h, h, kernel, p)?)
}

/// Everything one gradient step needs, from a single pass over the fields.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: EnergyBreakdown,
    pub gradient: MultiField,
    /// `|grad f_j|^2` per component.
    pub grad_norms: Vec<f64>,
    /// `int V |f_j|^p` per component.
    pub potential_pairings: Vec<f64>,
}

pub fn evaluate(mf: &MultiField, kernel: &Kernel, p: f64) -> Result<Evaluation> {
    let potential = mean_field_potential(mf, kernel, p)?;
    let sp = kernel.spectral();
    let h = mf.grid().cell_volume();
    let mut grads = Vec::with_capacity(mf.len());
    let mut grad_norms = Vec::with_capacity(mf.len());
    let mut pairings = Vec::with_capacity(mf.len());
    for c in mf.components() {
        let (mut g, kin) = sp.neg_laplacian(c)?;
        let mut pairing = 0.0;
        for ((gz, z), v) in g.data_mut().iter_mut().zip(c.data()).zip(&potential) {
            let w = nonlinear_weight(*z, p);
            *gz -= z * (v * w);
            pairing += v * w * z.norm_sqr();
        }
        grads.push(g);
        grad_norms.push(kin);
        pairings.push(h * pairing);
    }
    let interaction = pairings.iter().sum::<f64>() / (2.0 * p);
    let energy = EnergyBreakdown::new(0.5 * grad_norms.iter().sum::<f64>(), interaction);
    if !energy.total.is_finite() {
        return Err(Error::NonFinite("energy".into()));
    }
    Ok(Evaluation {
        energy,
        gradient: MultiField::new(grads)?,
        grad_norms,
        potential_pairings: pairings,
    })
}

/// L2 gradient `-Delta f_j - (W * sum_k |f_k|^p) |f_j|^{p-2} f_j`, normalized
/// so that `d/de I(f + e v) = Re <grad, v>`.
pub fn energy_gradient(mf: &MultiField, kernel: &Kernel, p: f64) -> Result<MultiField> {
    Ok(evaluate(mf, kernel, p)?.gradient)
}

/// `|| -Delta f_j + lambda_j f_j - V |f_j|^{p-2} f_j ||_{L2}` per component.
pub fn el_residual(mf: &MultiField, lambda: &[f64], kernel: &Kernel, p: f64) -> Result<Vec<f64>> {
    if lambda.len() != mf.len() {
        return Err(Error::ComponentCount {
            expected: mf.len(),
            found: lambda.len(),
        });
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("multiplier".into()));
    }
    let grad = energy_gradient(mf, kernel, p)?;
    Ok(residuals_from_gradient(mf, &grad, lambda))
}

pub(crate) fn residuals_from_gradient(
    mf: &MultiField,
    grad: &MultiField,
    lambda: &[f64],
) -> Vec<f64> {
    mf.components()
        .iter()
        .zip(grad.components())
        .zip(lambda)
        .map(|((f, g), &l)| {
            let mut r = g.clone();
            r.axpy(Complex64::new(l, 0.0), f).expect("same grid");
            r.l2_norm()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Field::from_data(grid, data).unwrap()
    }

    /// `h^N sum_y W(x - y) rho(y)` by direct summation.
    fn direct_convolution(kernel: &Kernel, rho: &[f64]) -> Vec<f64> {
        let g = *kernel.grid();
        let n = g.points_per_dim();
        let mut xi = vec![0; g.dim()];
        let mut yi = vec![0; g.dim()];
        let mut off = vec![0; g.dim()];
        (0..g.len())
            .map(|x| {
                g.multi_index(x, &mut xi);
                let mut acc = 0.0;
                for (y, r) in rho.iter().enumerate() {
                    g.multi_index(y, &mut yi);
                    for a in 0..g.dim() {
                        off[a] = (xi[a] + n - yi[a]) % n;
                    }
                    acc += kernel.sample_at_offset(&off) * r;
                }
                acc * g.cell_volume()
            })
            .collect()
    }

    #[test]
    fn singular_exponent_rejected() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        assert!(matches!(
            Kernel::power_law(g, 1.0),
            Err(Error::SingularKernel { .. })
        ));
        let g3 = Grid::new(3, 8, 4.0).unwrap();
        assert!(Kernel::power_law(g3, 1.0).is_ok());
    }

    #[test]
    fn kernel_samples_definition_and_evenness() {
        let g = Grid::new(3, 8, 4.0).unwrap();
        let k = Kernel::power_law(g, 1.0).unwrap();
        let h = g.spacing();
        assert!((k.sample_at_offset(&[1, 0, 0]) - 1.0 / h).abs() < 1e-14);
        assert!((k.sample_at_offset(&[0, 0, 7]) - 1.0 / h).abs() < 1e-14);
        // corner beyond L/2 truncated
        assert_eq!(k.sample_at_offset(&[4, 4, 4]), 0.0);
        let n = g.points_per_dim();
        let mut idx = vec![0; 3];
        for flat in 0..g.len() {
            g.multi_index(flat, &mut idx);
            let neg: Vec<usize> = idx.iter().map(|&i| (n - i) % n).collect();
            assert_eq!(k.samples()[flat], k.sample_at_offset(&neg));
            assert!(k.samples()[flat] >= 0.0);
        }
    }

    #[test]
    fn origin_cell_average_one_dim_closed_form() {
        let h = 0.3;
        let a = 0.5;
        let expect = (h / 2.0f64).powf(-a) / (1.0 - a);
        assert!((origin_cell_average(1, a, h) - expect).abs() < 1e-13);
    }

    #[test]
    fn origin_cell_average_two_dim_against_refined_midpoint() {
        // Midpoint rule on a fine sub-grid that avoids the origin; converges slowly
        // because of the singularity, so the tolerance is loose.
        let (h, a) = (1.0, 1.0);
        let m = 2000;
        let d = h / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -0.5 * h + (i as f64 + 0.5) * d;
                let y = -0.5 * h + (j as f64 + 0.5) * d;
                acc += (x * x + y * y).sqrt().powf(-a) * d * d;
            }
        }
        let got = origin_cell_average(2, a, h);
        assert!((got - acc).abs() / got < 2e-3, "{got} vs {acc}");
        // exact value: 4 ln(1 + sqrt 2)
        assert!((got - 4.0 * (1.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
    }

    #[test]
    fn multiplier_real_and_positive_reference() {
        let g = Grid::new(1, 64, 20.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        let mut buf: Vec<Complex64> = k
            .samples()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        k.spectral().forward_in_place(&mut buf).unwrap();
        assert!(buf.iter().all(|z| z.im.abs() < 1e-10));
        assert!(k.multiplier().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn convolution_identities() {
        let g = Grid::new(1, 16, 5.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        assert!(k
            .convolve_density(&[0.0; 16])
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        let mut delta = vec![0.0; 16];
        delta[5] = 1.0 / g.cell_volume();
        let out = k.convolve_density(&delta).unwrap();
        for (i, v) in out.iter().enumerate() {
            let expect = k.sample_at_offset(&[(i + 16 - 5) % 16]);
            assert!((v - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
        assert!(k.convolve_density(&[1.0; 3]).is_err());
    }

    #[test]
    fn convolution_matches_direct_sum() {
        for (dim, n) in [(1, 16), (1, 24), (2, 12), (2, 8)] {
            let g = Grid::new(dim, n, 6.0).unwrap();
            let k = Kernel::power_law(g, 0.5).unwrap();
            let rho = power_density(&random_field(g, n as u64), 2.0);
            let fast = k.convolve_density(&rho).unwrap();
            let slow = direct_convolution(&k, &rho);
            let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = slow.iter().map(|b| b * b).sum();
            assert!((num / den).sqrt() <= 1e-10);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn pair_interaction_properties() {
        let g = Grid::new(1, 16, 6.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        let f = random_field(g, 1);
        let h = random_field(g, 2);
        assert_eq!(
            pair_interaction(3.0, &Field::zeros(g), &h, &k, 2.0).unwrap(),
            0.0
        );
        let a = pair_interaction(3.0, &f, &h, &k, 2.5).unwrap();
        let b = pair_interaction(3.0, &h, &f, &k, 2.5).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a);
        assert!(pair_interaction(0.0, &f, &h, &k, 2.0).is_err());

        // direct double sum
        let rf = power_density(&f, 2.5);
        let rh = power_density(&h, 2.5);
        let cv = g.cell_volume();
        let mut slow = 0.0;
        for x in 0..16 {
            for y in 0..16 {
                slow += k.sample_at_offset(&[(x + 16 - y) % 16]) * rf[x] * rh[y] * cv * cv;
            }
        }
        slow /= 3.0;
        assert!((a - slow).abs() / slow <= 1e-10);
    }

    #[test]
    fn energy_identities() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        let zero = MultiField::zeros(g, 2);
        assert_eq!(total_energy(&zero, &k, 2.0).unwrap().total, 0.0);
        assert_eq!(single_energy(&Field::zeros(g), &k, 2.0).unwrap(), 0.0);

        let f = random_field(g, 4);
        let e1 = total_energy(&MultiField::new(vec![f.clone()]).unwrap(), &k, 2.0).unwrap();
        let es = single_energy(&f, &k, 2.0).unwrap();
        assert!((e1.total - es).abs() <= 1e-12 * es.abs());
        assert_eq!(e1.total, e1.kinetic - e1.interaction);

        let e2 = total_energy(
            &MultiField::new(vec![f.clone(), Field::zeros(g)]).unwrap(),
            &k,
            2.0,
        )
        .unwrap();
        assert!((e2.total - es).abs() <= 1e-12 * es.abs());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        for p in [2.0, 2.5] {
            let mf = MultiField::new(vec![random_field(g, 10), random_field(g, 11)]).unwrap();
            let v = MultiField::new(vec![random_field(g, 12), random_field(g, 13)]).unwrap();
            let grad = energy_gradient(&mf, &k, p).unwrap();
            let eps = 1e-5;
            let mut plus = mf.clone();
            plus.axpy(eps, &v).unwrap();
            let mut minus = mf.clone();
            minus.axpy(-eps, &v).unwrap();
            let fd = (total_energy(&plus, &k, p).unwrap().total
                - total_energy(&minus, &k, p).unwrap().total)
                / (2.0 * eps);
            let an: f64 = grad
                .components()
                .iter()
                .zip(v.components())
                .map(|(a, b)| a.inner(b).unwrap().re)
                .sum();
            assert!((fd - an).abs() / an.abs() <= 1e-6, "p={p}: {fd} vs {an}");
        }
    }

    #[test]
    fn gradient_of_zero_and_real_fields() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        let zero = MultiField::zeros(g, 3);
        let gz = energy_gradient(&zero, &k, 2.0).unwrap();
        assert!(gz.components().iter().all(|c| c.mass() == 0.0));
        let pos = Field::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let gr = energy_gradient(&MultiField::new(vec![pos]).unwrap(), &k, 2.0).unwrap();
        assert!(gr.component(0).data().iter().all(|z| z.im.abs() < 1e-14));
    }

    #[test]
    fn residual_minimized_by_projected_multiplier() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let k = Kernel::power_law(g, 0.5).unwrap();
        let f = random_field(g, 20);
        let mf = MultiField::new(vec![f.clone()]).unwrap();
        assert_eq!(
            el_residual(&MultiField::zeros(g, 1), &[3.0], &k, 2.0).unwrap(),
            vec![0.0]
        );
        let grad = energy_gradient(&mf, &k, 2.0).unwrap();
        let lam = -grad.component(0).inner(&f).unwrap().re / f.mass();
        let best = el_residual(&mf, &[lam], &k, 2.0).unwrap()[0];
        for d in [-0.1, -1e-3, 1e-3, 0.1] {
            assert!(el_residual(&mf, &[lam + d], &k, 2.0).unwrap()[0] > best);
        }
        assert!(el_residual(&mf, &[1.0, 2.0], &k, 2.0).is_err());
    }
}
