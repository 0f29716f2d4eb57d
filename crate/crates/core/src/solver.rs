//! Background-aware correlation filters trained by ADMM in the frequency domain.
//!
//! Per frequency bin `t` the auxiliary variable solves
//!
//! ```text
//! (x(t) x(t)^H + M mu I) z(t) = M y~(t) x(t) - rho(t) + mu w(t)
//! ```
//!
//! where `y~` is the conjugated label spectrum, and the filter is the
//! support-cropped shrinkage `w = P[(mu z + rho) / (mu + lambda / sqrt(M))]`
//! taken in the spatial domain. Detection uses `IFFT(sum_k conj(w_k) x_k)`,
//! which reproduces the label on the training patch.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::scalar::Scalar;
use crate::spectral::{Fft2, RealGrid, SpectralGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub mu0: f64,
    pub beta: f64,
    pub mu_max: f64,
    pub iterations: usize,
}

impl SolverConfig {
    /// Defaults for the hand-crafted model: two iterations per frame.
    pub fn hog() -> Self {
        Self {
            lambda: 0.01,
            mu0: 1.0,
            beta: 10.0,
            mu_max: 1000.0,
            iterations: 2,
        }
    }

    /// Defaults for the deep model: twenty iterations per training event.
    pub fn cnn() -> Self {
        Self {
            iterations: 20,
            ..Self::hog()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::param(format!("mu0 must be > 0, got {}", self.mu0)));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::param(format!("beta must be > 1, got {}", self.beta)));
        }
        if !(self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return Err(Error::param(format!(
                "mu_max ({}) must be >= mu0 ({})",
                self.mu_max, self.mu0
            )));
        }
        if self.iterations == 0 {
            return Err(Error::param("ADMM needs at least one iteration"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::hog()
    }
}

/// Frequency-domain ADMM state of one context model.
#[derive(Debug, Clone)]
pub struct FilterBank<T: Scalar> {
    height: usize,
    width: usize,
    channels: usize,
    pub w_hat: Vec<SpectralGrid<T>>,
    pub z_hat: Vec<SpectralGrid<T>>,
    pub rho_hat: Vec<SpectralGrid<T>>,
    pub mu: T,
    support: (usize, usize),
    anchor: (usize, usize),
    plan: Fft2<T>,
}

/// Correlation scores with their first row-major maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap<T> {
    pub grid: RealGrid<T>,
    pub peak_value: T,
    pub peak_location: (usize, usize),
}

impl<T: Scalar> ResponseMap<T> {
    pub fn from_grid(grid: RealGrid<T>) -> Self {
        let (r, c, v) = grid.argmax();
        Self {
            grid,
            peak_value: v,
            peak_location: (r, c),
        }
    }
}

fn zero_stack<T: Scalar>(h: usize, w: usize, n: usize) -> Vec<SpectralGrid<T>> {
    (0..n).map(|_| SpectralGrid::zeros(h, w)).collect()
}

impl<T: Scalar> FilterBank<T> {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn support(&self) -> (usize, usize) {
        self.support
    }

    /// Cell on which the filter support is centered (wrapped).
    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    /// Number of cells `M` of the context region.
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn plan(&self) -> &Fft2<T> {
        &self.plan
    }

    /// Clears the multipliers and restarts the penalty schedule, keeping `w` and `z`.
    pub fn reset_dual(&mut self, mu0: f64) {
        self.rho_hat = zero_stack(self.height, self.width, self.channels);
        self.mu = T::of(mu0);
    }

    /// Per-channel spectra of `features`.
    pub fn spectra(&self, features: &FeatureTensor<T>) -> Result<Vec<SpectralGrid<T>>> {
        if (features.height(), features.width(), features.channels()) != self.shape() {
            return Err(Error::shape(format!(
                "features {}x{}x{} do not match filter bank {:?}",
                features.height(),
                features.width(),
                features.channels(),
                self.shape()
            )));
        }
        (0..self.channels)
            .map(|k| self.plan.forward(&features.channel_grid(k)))
            .collect()
    }

    /// Conjugated label spectrum, the `y~` of the auxiliary system.
    pub fn label_spectrum(&self, label: &RealGrid<T>) -> Result<SpectralGrid<T>> {
        let mut y = self.plan.forward(label)?;
        y.values_mut().iter_mut().for_each(|v| *v = v.conj());
        Ok(y)
    }

    /// Wrapped row and column indices of the filter support.
    fn support_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let axis = |n: usize, len: usize, anchor: usize| -> Vec<usize> {
            (0..len).map(|i| (anchor + n - len / 2 + i) % n).collect()
        };
        (
            axis(self.height, self.support.0, self.anchor.0),
            axis(self.width, self.support.1, self.anchor.1),
        )
    }

    /// Spatial-domain filters, one complex grid per channel.
    pub fn spatial_filters(&self) -> Result<Vec<SpectralGrid<T>>> {
        self.w_hat.iter().map(|w| self.plan.inverse(w)).collect()
    }

    /// Sum of `|w|^2` over spatial cells outside the support.
    pub fn energy_outside_support(&self) -> Result<T> {
        let (rows, cols) = self.support_indices();
        let mut inside = vec![false; self.height * self.width];
        for &r in &rows {
            for &c in &cols {
                inside[r * self.width + c] = true;
            }
        }
        let mut e = T::zero();
        for w in self.spatial_filters()? {
            for (i, v) in w.values().iter().enumerate() {
                if !inside[i] {
                    e = e + v.norm_sqr();
                }
            }
        }
        Ok(e)
    }
}

/// Zero-initialized bank for `features`, with the filter support `(rows, cols)` in cells.
///
/// The support is anchored so that a target centered in the grid produces its
/// response peak at the label peak.
pub fn init_model<T: Scalar>(
    features: &FeatureTensor<T>,
    label: &RealGrid<T>,
    support: (usize, usize),
    config: &SolverConfig,
) -> Result<FilterBank<T>> {
    config.validate()?;
    let (h, w) = features.spatial_shape();
    if label.shape() != (h, w) {
        return Err(Error::shape(format!(
            "label {:?} does not match features {:?}",
            label.shape(),
            (h, w)
        )));
    }
    if support.0 == 0 || support.1 == 0 || support.0 > h || support.1 > w {
        return Err(Error::shape(format!(
            "filter support {support:?} does not fit in a {h}x{w} grid"
        )));
    }
    let (lr, lc, _) = label.argmax();
    let n = features.channels();
    Ok(FilterBank {
        height: h,
        width: w,
        channels: n,
        w_hat: zero_stack(h, w, n),
        z_hat: zero_stack(h, w, n),
        rho_hat: zero_stack(h, w, n),
        mu: T::of(config.mu0),
        support,
        anchor: ((h / 2 + h - lr) % h, (w / 2 + w - lc) % w),
        plan: Fft2::new(h, w),
    })
}

fn check_stack<T: Scalar>(bank: &FilterBank<T>, stack: &[SpectralGrid<T>], what: &str) -> Result<()> {
    if stack.len() != bank.channels
        || stack.iter().any(|g| g.shape() != (bank.height, bank.width))
    {
        return Err(Error::shape(format!("{what} does not match filter bank {:?}", bank.shape())));
    }
    Ok(())
}

/// Per-bin Sherman-Morrison solve of the auxiliary system.
pub fn solve_auxiliary<T: Scalar>(
    bank: &FilterBank<T>,
    x_hat: &[SpectralGrid<T>],
    y_hat: &SpectralGrid<T>,
) -> Result<Vec<SpectralGrid<T>>> {
    check_stack(bank, x_hat, "feature spectra")?;
    if y_hat.shape() != (bank.height, bank.width) {
        return Err(Error::shape("label spectrum does not match filter bank"));
    }
    let n = bank.channels;
    let m = T::of(bank.cells() as f64);
    let mu = bank.mu;
    let a = m * mu;
    let mut z = zero_stack(bank.height, bank.width, n);
    let mut b = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..bank.cells() {
        let yx = y_hat.values()[t] * m;
        let mut s_x = T::zero();
        let mut s_b = Complex::new(T::zero(), T::zero());
        for k in 0..n {
            let x = x_hat[k].values()[t];
            b[k] = yx * x - bank.rho_hat[k].values()[t] + bank.w_hat[k].values()[t] * mu;
            s_x = s_x + x.norm_sqr();
            s_b = s_b + x.conj() * b[k];
        }
        let coef = s_b / (a * (s_x + a));
        for k in 0..n {
            z[k].values_mut()[t] = b[k] / a - x_hat[k].values()[t] * coef;
        }
    }
    Ok(z)
}

/// Spatial shrinkage of `mu z + rho` onto the filter support, transformed back
/// to the frequency domain.
pub fn solve_filter<T: Scalar>(bank: &FilterBank<T>, config: &SolverConfig) -> Result<Vec<SpectralGrid<T>>> {
    let mut out = solve_filter_spatial(bank, config)?;
    for f in &mut out {
        bank.plan.forward_in_place(f.values_mut());
    }
    Ok(out)
}

/// The spatial filters computed by [`solve_filter`], before the forward transform.
/// Cells outside the support are exactly zero.
pub fn solve_filter_spatial<T: Scalar>(bank: &FilterBank<T>, config: &SolverConfig) -> Result<Vec<SpectralGrid<T>>> {
    let (rows, cols) = bank.support_indices();
    let m = bank.cells() as f64;
    let mu = bank.mu;
    let denom = mu + T::of(config.lambda / m.sqrt());
    let (h, w) = (bank.height, bank.width);
    let mut out = Vec::with_capacity(bank.channels);
    for k in 0..bank.channels {
        let z = bank.plan.inverse(&bank.z_hat[k])?;
        let rho = bank.plan.inverse(&bank.rho_hat[k])?;
        let mut filt = SpectralGrid::zeros(h, w);
        let vals = filt.values_mut();
        for &r in &rows {
            for &c in &cols {
                let i = r * w + c;
                vals[i] = (z.values()[i] * mu + rho.values()[i]) / denom;
            }
        }
        out.push(filt);
    }
    Ok(out)
}

/// Multiplier ascent with the current penalty, then penalty growth.
pub fn admm_dual_update<T: Scalar>(bank: &mut FilterBank<T>, config: &SolverConfig) {
    let mu = bank.mu;
    for k in 0..bank.channels {
        let z = bank.z_hat[k].values();
        let w = bank.w_hat[k].values();
        let updated: Vec<_> = bank.rho_hat[k]
            .values()
            .iter()
            .zip(z.iter().zip(w))
            .map(|(r, (z, w))| *r + (*z - *w) * mu)
            .collect();
        bank.rho_hat[k].values_mut().copy_from_slice(&updated);
    }
    bank.mu = (bank.mu * T::of(config.beta)).min(T::of(config.mu_max));
}

/// One full iteration: auxiliary solve, filter solve, dual update.
pub fn admm_iteration<T: Scalar>(
    bank: &mut FilterBank<T>,
    x_hat: &[SpectralGrid<T>],
    y_hat: &SpectralGrid<T>,
    config: &SolverConfig,
) -> Result<()> {
    bank.z_hat = solve_auxiliary(bank, x_hat, y_hat)?;
    bank.w_hat = solve_filter(bank, config)?;
    admm_dual_update(bank, config);
    Ok(())
}

/// Augmented Lagrangian at the bank's current `(w, z, rho, mu)`:
///
/// ```text
/// 1/2 sum_t |M y~ - x^H z|^2 + (M mu / 2)|z|^2 + ((mu + lambda') / 2)|w|^2
///     - mu Re<z, w> + Re<rho, z - w>,        lambda' = lambda / sqrt(M)
/// ```
///
/// With `rho` and `mu` held fixed, the auxiliary and filter updates are exact
/// block minimizers of this function.
pub fn augmented_objective<T: Scalar>(
    bank: &FilterBank<T>,
    x_hat: &[SpectralGrid<T>],
    y_hat: &SpectralGrid<T>,
    config: &SolverConfig,
) -> Result<f64> {
    check_stack(bank, x_hat, "feature spectra")?;
    let m = bank.cells() as f64;
    let mu = bank.mu.as_f64();
    let lambda_p = config.lambda / m.sqrt();
    let c = |v: Complex<T>| Complex::new(v.re.as_f64(), v.im.as_f64());
    let mut total = 0.0;
    for t in 0..bank.cells() {
        let mut fit = c(y_hat.values()[t]) * m;
        for k in 0..bank.channels {
            let x = c(x_hat[k].values()[t]);
            let z = c(bank.z_hat[k].values()[t]);
            let w = c(bank.w_hat[k].values()[t]);
            let rho = c(bank.rho_hat[k].values()[t]);
            fit -= x.conj() * z;
            total += 0.5 * m * mu * z.norm_sqr() + 0.5 * (mu + lambda_p) * w.norm_sqr()
                - mu * (z.conj() * w).re
                + (rho.conj() * (z - w)).re;
        }
        total += 0.5 * fit.norm_sqr();
    }
    Ok(total)
}

/// Primal residual `||z - w||_2` over all channels.
pub fn primal_residual<T: Scalar>(bank: &FilterBank<T>) -> f64 {
    bank.z_hat
        .iter()
        .zip(&bank.w_hat)
        .flat_map(|(z, w)| z.values().iter().zip(w.values()))
        .map(|(z, w)| (*z - *w).norm_sqr().as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Diagnostics of one ADMM iteration. Objectives are evaluated at the
/// multipliers and penalty in force at the start of the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub objective_start: f64,
    pub objective_after_auxiliary: f64,
    pub objective_after_filter: f64,
    pub residual: f64,
    pub mu: f64,
}

fn start_bank<T: Scalar>(
    features: &FeatureTensor<T>,
    label: &RealGrid<T>,
    support: (usize, usize),
    config: &SolverConfig,
    warm_start: Option<&FilterBank<T>>,
) -> Result<FilterBank<T>> {
    config.validate()?;
    match warm_start {
        Some(bank) => {
            if (features.height(), features.width(), features.channels()) != bank.shape() {
                return Err(Error::shape("warm-start bank does not match features"));
            }
            if label.shape() != (bank.height, bank.width) {
                return Err(Error::shape("label does not match warm-start bank"));
            }
            Ok(bank.clone())
        }
        None => init_model(features, label, support, config),
    }
}

/// Trains a filter on windowed `features` for `config.iterations` ADMM iterations,
/// continuing from `warm_start` when given (its support then takes precedence).
pub fn train<T: Scalar>(
    features: &FeatureTensor<T>,
    label: &RealGrid<T>,
    support: (usize, usize),
    config: &SolverConfig,
    warm_start: Option<&FilterBank<T>>,
) -> Result<FilterBank<T>> {
    let mut bank = start_bank(features, label, support, config, warm_start)?;
    let x_hat = bank.spectra(features)?;
    let y_hat = bank.label_spectrum(label)?;
    for _ in 0..config.iterations {
        admm_iteration(&mut bank, &x_hat, &y_hat, config)?;
    }
    Ok(bank)
}

/// [`train`] with per-iteration objective and residual tracking.
pub fn train_traced<T: Scalar>(
    features: &FeatureTensor<T>,
    label: &RealGrid<T>,
    support: (usize, usize),
    config: &SolverConfig,
    warm_start: Option<&FilterBank<T>>,
) -> Result<(FilterBank<T>, Vec<IterationTrace>)> {
    let mut bank = start_bank(features, label, support, config, warm_start)?;
    let x_hat = bank.spectra(features)?;
    let y_hat = bank.label_spectrum(label)?;
    let mut trace = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let objective_start = augmented_objective(&bank, &x_hat, &y_hat, config)?;
        let mu = bank.mu.as_f64();
        bank.z_hat = solve_auxiliary(&bank, &x_hat, &y_hat)?;
        let objective_after_auxiliary = augmented_objective(&bank, &x_hat, &y_hat, config)?;
        bank.w_hat = solve_filter(&bank, config)?;
        let objective_after_filter = augmented_objective(&bank, &x_hat, &y_hat, config)?;
        let residual = primal_residual(&bank);
        admm_dual_update(&mut bank, config);
        trace.push(IterationTrace {
            objective_start,
            objective_after_auxiliary,
            objective_after_filter,
            residual,
            mu,
        });
    }
    Ok((bank, trace))
}

/// Response of `spectra` (already transformed features) to the trained filter.
pub fn response_from_spectra<T: Scalar>(
    bank: &FilterBank<T>,
    spectra: &[SpectralGrid<T>],
) -> Result<ResponseMap<T>> {
    check_stack(bank, spectra, "feature spectra")?;
    let mut acc = SpectralGrid::zeros(bank.height, bank.width);
    for (w, x) in bank.w_hat.iter().zip(spectra) {
        for ((a, w), x) in acc.values_mut().iter_mut().zip(w.values()).zip(x.values()) {
            *a = *a + w.conj() * *x;
        }
    }
    bank.plan.inverse_in_place(acc.values_mut());
    Ok(ResponseMap::from_grid(acc.real_part()))
}

/// Correlation response of the trained filter over `features`.
pub fn compute_response<T: Scalar>(
    bank: &FilterBank<T>,
    features: &FeatureTensor<T>,
) -> Result<ResponseMap<T>> {
    let x_hat = bank.spectra(features)?;
    response_from_spectra(bank, &x_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::spectral::gaussian_label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> FeatureTensor<f64> {
        let v = (0..h * w * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureTensor::new(h, w, n, 4, FeatureKind::DeepSynth, v).unwrap()
    }

    fn random_stack(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> Vec<SpectralGrid<f64>> {
        (0..n)
            .map(|_| {
                let v = (0..h * w)
                    .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                SpectralGrid::from_vec(h, w, v).unwrap()
            })
            .collect()
    }

    fn bank_for(h: usize, w: usize, n: usize, support: (usize, usize)) -> FilterBank<f64> {
        let f = FeatureTensor::zeros(h, w, n, 1, FeatureKind::DeepSynth).unwrap();
        let label = gaussian_label(h, w, 1.0, (h / 2, w / 2)).unwrap();
        init_model(&f, &label, support, &SolverConfig::hog()).unwrap()
    }

    #[test]
    fn init_is_zero_with_mu0() {
        let b = bank_for(8, 6, 3, (4, 2));
        assert!(b.w_hat.iter().chain(&b.z_hat).chain(&b.rho_hat).all(|g| g.energy() == 0.0));
        assert_eq!(b.mu, 1.0);
        assert_eq!(b.shape(), (8, 6, 3));
        let f = FeatureTensor::<f64>::zeros(8, 6, 1, 1, FeatureKind::DeepSynth).unwrap();
        let label = gaussian_label(8, 6, 1.0, (0, 0)).unwrap();
        assert!(matches!(
            init_model(&f, &label, (9, 2), &SolverConfig::hog()),
            Err(Error::Shape(_))
        ));
        let label = gaussian_label(8, 7, 1.0, (0, 0)).unwrap();
        assert!(init_model(&f, &label, (2, 2), &SolverConfig::hog()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::hog().validate().is_ok());
        assert_eq!(SolverConfig::cnn().iterations, 20);
        for bad in [
            SolverConfig { lambda: -1.0, ..SolverConfig::hog() },
            SolverConfig { mu0: 0.0, ..SolverConfig::hog() },
            SolverConfig { beta: 1.0, ..SolverConfig::hog() },
            SolverConfig { mu_max: 0.5, ..SolverConfig::hog() },
            SolverConfig { iterations: 0, ..SolverConfig::hog() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn auxiliary_with_vanishing_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = bank_for(4, 4, 2, (2, 2));
        b.mu = 2.5;
        b.w_hat = random_stack(&mut rng, 4, 4, 2);
        b.rho_hat = random_stack(&mut rng, 4, 4, 2);
        let x = zero_stack(4, 4, 2);
        let y = random_stack(&mut rng, 4, 4, 1).remove(0);
        let z = solve_auxiliary(&b, &x, &y).unwrap();
        for k in 0..2 {
            for t in 0..16 {
                let want = (b.w_hat[k].values()[t] * 2.5 - b.rho_hat[k].values()[t]) / (16.0 * 2.5);
                assert!((z[k].values()[t] - want).norm() < 1e-12);
            }
        }

        // single-cell grid: z = w - rho / mu
        let mut b = bank_for(1, 1, 1, (1, 1));
        b.mu = 2.5;
        b.w_hat = random_stack(&mut rng, 1, 1, 1);
        b.rho_hat = random_stack(&mut rng, 1, 1, 1);
        let z = solve_auxiliary(&b, &zero_stack(1, 1, 1), &SpectralGrid::zeros(1, 1)).unwrap();
        let want = b.w_hat[0].values()[0] - b.rho_hat[0].values()[0] / 2.5;
        assert!((z[0].values()[0] - want).norm() < 1e-12);
    }

    #[test]
    fn auxiliary_scalar_example() {
        let b = bank_for(1, 1, 1, (1, 1));
        let one = SpectralGrid::from_vec(1, 1, vec![Complex::new(1.0, 0.0)]).unwrap();
        let z = solve_auxiliary(&b, std::slice::from_ref(&one), &one).unwrap();
        assert!((z[0].values()[0] - Complex::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn filter_identity_on_support_when_unregularized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = bank_for(8, 8, 2, (3, 4));
        b.z_hat = random_stack(&mut rng, 8, 8, 2);
        let cfg = SolverConfig { lambda: 0.0, ..SolverConfig::hog() };
        let spatial = solve_filter_spatial(&b, &cfg).unwrap();
        b.w_hat = solve_filter(&b, &cfg).unwrap();
        assert!(b.energy_outside_support().unwrap() < 1e-24);
        let (rows, cols) = b.support_indices();
        for k in 0..2 {
            let z = b.plan.inverse(&b.z_hat[k]).unwrap();
            for r in 0..8 {
                for c in 0..8 {
                    let w = spatial[k].get(r, c);
                    if rows.contains(&r) && cols.contains(&c) {
                        assert_eq!(w, z.get(r, c));
                    } else {
                        assert_eq!(w, Complex::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn filter_scalar_shrinkage() {
        let m = 16.0f64;
        let mut b = bank_for(4, 4, 1, (2, 2));
        let ones = RealGrid::from_fn(4, 4, |_, _| 1.0);
        b.z_hat = vec![b.plan.forward(&ones).unwrap()];
        let cfg = SolverConfig { lambda: m.sqrt(), ..SolverConfig::hog() };
        b.w_hat = solve_filter(&b, &cfg).unwrap();
        let w = b.plan.inverse(&b.w_hat[0]).unwrap();
        let (rows, cols) = b.support_indices();
        for &r in &rows {
            for &c in &cols {
                assert!((w.get(r, c) - Complex::new(0.5, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_matches_cellwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = bank_for(8, 8, 3, (5, 3));
        b.mu = 3.0;
        b.z_hat = random_stack(&mut rng, 8, 8, 3);
        b.rho_hat = random_stack(&mut rng, 8, 8, 3);
        let cfg = SolverConfig { lambda: 0.01, ..SolverConfig::hog() };
        let w_hat = solve_filter(&b, &cfg).unwrap();
        let (rows, cols) = b.support_indices();
        for k in 0..3 {
            let z = b.plan.inverse(&b.z_hat[k]).unwrap();
            let rho = b.plan.inverse(&b.rho_hat[k]).unwrap();
            let w = b.plan.inverse(&w_hat[k]).unwrap();
            for r in 0..8 {
                for c in 0..8 {
                    let want = if rows.contains(&r) && cols.contains(&c) {
                        (z.get(r, c) * 3.0 + rho.get(r, c)) / (3.0 + 0.01 / 8.0)
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                    assert!((w.get(r, c) - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dual_update_examples() {
        let cfg = SolverConfig::hog();
        let mut b = bank_for(4, 4, 1, (2, 2));
        let mut mus = vec![b.mu];
        for _ in 0..4 {
            admm_dual_update(&mut b, &cfg);
            mus.push(b.mu);
        }
        assert_eq!(mus, vec![1.0, 10.0, 100.0, 1000.0, 1000.0]);
        assert!(b.rho_hat[0].energy() == 0.0);

        let mut b = bank_for(4, 4, 1, (2, 2));
        b.mu = 2.0;
        let c = Complex::new(0.25, -1.0);
        b.z_hat = vec![SpectralGrid::from_vec(4, 4, vec![c; 16]).unwrap()];
        admm_dual_update(&mut b, &cfg);
        assert!(b.rho_hat[0].values().iter().all(|r| (*r - c * 2.0).norm() < 1e-15));
        assert_eq!(b.mu, 20.0);
    }

    #[test]
    fn zero_iterations_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_features(&mut rng, 8, 8, 1);
        let label = gaussian_label(8, 8, 1.0, (4, 4)).unwrap();
        let cfg = SolverConfig { iterations: 0, ..SolverConfig::hog() };
        assert!(train(&f, &label, (4, 4), &cfg, None).is_err());
    }

    #[test]
    fn zero_filter_gives_zero_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_features(&mut rng, 8, 8, 2);
        let label = gaussian_label(8, 8, 1.0, (4, 4)).unwrap();
        let b = init_model(&f, &label, (4, 4), &SolverConfig::hog()).unwrap();
        let r = compute_response(&b, &f).unwrap();
        assert!(r.grid.values().iter().all(|v| *v == 0.0));
        assert_eq!(r.peak_location, (0, 0));
    }

    #[test]
    fn trained_response_peaks_at_label_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_features(&mut rng, 32, 32, 1);
        for center in [(16, 16), (5, 27), (0, 0)] {
            let label = gaussian_label(32, 32, 1.5, center).unwrap();
            let b = train(&f, &label, (12, 12), &SolverConfig::hog(), None).unwrap();
            assert_eq!(compute_response(&b, &f).unwrap().peak_location, center);
        }
    }

    #[test]
    fn warm_start_continues_from_given_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_features(&mut rng, 16, 16, 2);
        let label = gaussian_label(16, 16, 1.0, (8, 8)).unwrap();
        let one = SolverConfig { iterations: 1, ..SolverConfig::hog() };
        let two = SolverConfig { iterations: 2, ..SolverConfig::hog() };
        let a = train(&f, &label, (6, 6), &one, None).unwrap();
        let a = train(&f, &label, (6, 6), &one, Some(&a)).unwrap();
        let b = train(&f, &label, (6, 6), &two, None).unwrap();
        assert_eq!(a.w_hat, b.w_hat);
        assert_eq!(a.mu, b.mu);
    }
}
