//! Real-valued MIMO signal model `y = Hs + w`.
//!
//! A complex `N×K` channel `Hc` is stacked as `[[Re Hc, −Im Hc], [Im Hc, Re Hc]]`,
//! so real coordinates `k` and `k + K` carry the in-phase and quadrature parts
//! of complex symbol `k`.

use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::geometry::Constellation;
use crate::{Error, RealMatrix, RealVector, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Stochastic channel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    /// i.i.d. `CN(0, 1)` entries.
    Iid,
    /// `R_r^{1/2} G R_t^{1/2}` with exponential correlation `R[i, j] = ρ^{|i − j|}`.
    Kronecker { rho_tx: f64, rho_rx: f64 },
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if let ChannelModel::Kronecker { rho_tx, rho_rx } = *self {
            for (name, r) in [("rho_tx", rho_tx), ("rho_rx", rho_rx)] {
                if !(0.0..1.0).contains(&r) {
                    return Err(Error::config(format!("{name} must lie in [0, 1), got {r}")));
                }
            }
        }
        Ok(())
    }
}

/// Stacks a complex matrix into its real `2N×2K` form.
pub fn realify(hc: &ComplexMatrix) -> RealMatrix {
    let (n, k) = hc.shape();
    RealMatrix::from_fn(2 * n, 2 * k, |i, j| {
        let z = hc[(i % n, j % k)];
        match (i < n, j < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Stacks a complex vector as `[Re; Im]`.
pub fn realify_vector(x: &ComplexVector) -> RealVector {
    let k = x.len();
    RealVector::from_fn(2 * k, |i, _| if i < k { x[i].re } else { x[i - k].im })
}

/// Inverse of [`realify_vector`].
pub fn complexify(x: &RealVector) -> Result<ComplexVector> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::config("stacked vector must have even length"));
    }
    let k = x.len() / 2;
    Ok(ComplexVector::from_fn(k, |i, _| Complex64::new(x[i], x[i + k])))
}

/// `R[i, j] = ρ^{|i − j|}`.
pub fn exponential_correlation(dim: usize, rho: f64) -> RealMatrix {
    RealMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// A generated complex channel and the number of degenerate draws discarded.
#[derive(Debug, Clone)]
pub struct GeneratedChannel {
    pub h: ComplexMatrix,
    pub resamples: usize,
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn correlation_factor(dim: usize, rho: f64) -> Result<ComplexMatrix> {
    let l = Cholesky::new(exponential_correlation(dim, rho))
        .ok_or(Error::Singular("correlation matrix is not positive definite"))?
        .l();
    Ok(l.map(|v| Complex64::new(v, 0.0)))
}

/// Draws an `N×K` complex channel and normalizes every column to unit norm.
pub fn gen_channel<R: Rng + ?Sized>(
    model: &ChannelModel,
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<GeneratedChannel> {
    if k == 0 || n < k {
        return Err(Error::config(format!("need N >= K >= 1, got N={n}, K={k}")));
    }
    model.validate()?;
    let factors = match *model {
        ChannelModel::Iid => None,
        ChannelModel::Kronecker { rho_tx, rho_rx } => Some((
            correlation_factor(n, rho_rx)?,
            correlation_factor(k, rho_tx)?.transpose(),
        )),
    };

    let mut resamples = 0;
    loop {
        let g = ComplexMatrix::from_fn(n, k, |_, _| complex_gaussian(rng));
        let mut h = match &factors {
            None => g,
            Some((lr, lt_t)) => lr * g * lt_t,
        };
        let norms: Vec<f64> = h.column_iter().map(|c| c.norm()).collect();
        if norms.iter().any(|&v| !(v > f64::MIN_POSITIVE)) {
            resamples += 1;
            continue;
        }
        for (mut col, norm) in h.column_iter_mut().zip(norms) {
            col.unscale_mut(norm);
        }
        return Ok(GeneratedChannel { h, resamples });
    }
}

/// Draws `2K` real coordinates i.i.d. uniform over the alphabet.
pub fn transmit<R: Rng + ?Sized>(c: &Constellation, k: usize, rng: &mut R) -> RealVector {
    let levels = c.levels();
    RealVector::from_fn(2 * k, |_, _| levels[rng.random_range(0..levels.len())])
}

fn standard_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> RealVector {
    RealVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Adds real Gaussian noise of per-coordinate variance `σ²/2`; returns `(w, y)`.
pub fn add_noise<R: Rng + ?Sized>(hs: &RealVector, sigma2: f64, rng: &mut R) -> (RealVector, RealVector) {
    let w = standard_normal_vector(hs.len(), rng) * (sigma2 / 2.0).sqrt();
    let y = hs + &w;
    (w, y)
}

/// Noise variance for a receive SNR `E‖Hs‖²/E‖w‖² = K/(Nσ²)` given in dB.
pub fn snr_to_sigma2(snr_db: f64, n: usize, k: usize) -> f64 {
    k as f64 / (n as f64 * 10f64.powf(snr_db / 10.0))
}

/// Number of complex symbols whose hard decision differs from `s` in either
/// real component.
pub fn symbol_errors(x_hat: &RealVector, s: &RealVector, c: &Constellation) -> Result<usize> {
    check_dim("symbol_errors: estimate vs reference", s.len(), x_hat.len())?;
    if !s.len().is_multiple_of(2) {
        return Err(Error::config("stacked vector must have even length"));
    }
    let k = s.len() / 2;
    let wrong = |i: usize| c.slice(x_hat[i]) != s[i];
    Ok((0..k).filter(|&i| wrong(i) || wrong(i + k)).count())
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index`, a pure function of `(master_seed, index)`.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(master_seed, index))
}

/// Random quantities of one trial, independent of the SNR.
///
/// Noise is stored at unit variance and scaled per SNR, so every point of an
/// SNR sweep sees the same channel, symbols and noise direction.
#[derive(Debug, Clone)]
pub struct TrialDraw {
    pub h_complex: ComplexMatrix,
    pub h: RealMatrix,
    pub s: RealVector,
    pub unit_noise: RealVector,
    pub seed: u64,
    pub resamples: usize,
}

impl TrialDraw {
    pub fn generate(
        model: &ChannelModel,
        n: usize,
        k: usize,
        c: &Constellation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let GeneratedChannel { h: h_complex, resamples } = gen_channel(model, n, k, &mut rng)?;
        let s = transmit(c, k, &mut rng);
        let unit_noise = standard_normal_vector(2 * n, &mut rng);
        Ok(Self {
            h: realify(&h_complex),
            h_complex,
            s,
            unit_noise,
            seed,
            resamples,
        })
    }

    pub fn instance(&self, sigma2: f64) -> ChannelInstance {
        let w = &self.unit_noise * (sigma2 / 2.0).sqrt();
        let y = &self.h * &self.s + &w;
        ChannelInstance {
            h: self.h.clone(),
            s: self.s.clone(),
            w,
            y,
            sigma2,
            seed: self.seed,
        }
    }
}

/// One realization of the real-valued signal model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    pub h: RealMatrix,
    pub s: RealVector,
    pub w: RealVector,
    pub y: RealVector,
    /// Complex noise variance `σ²` (real per-coordinate variance `σ²/2`).
    pub sigma2: f64,
    pub seed: u64,
}

/// Flat JSON form of a [`ChannelInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    /// Receive antennas `N` (the real matrix has `2N` rows).
    pub n: usize,
    /// Transmitters `K` (the real matrix has `2K` columns).
    pub k: usize,
    /// Real `2N×2K` channel, row-major.
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma2: f64,
    pub seed: u64,
}

impl ChannelInstance {
    /// Receive antennas `N`.
    pub fn n(&self) -> usize {
        self.h.nrows() / 2
    }

    /// Transmitters `K`.
    pub fn k(&self) -> usize {
        self.h.ncols() / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !self.h.nrows().is_multiple_of(2) || !self.h.ncols().is_multiple_of(2) {
            return Err(Error::config("stacked channel must have even dimensions"));
        }
        check_dim("instance: length of s", self.h.ncols(), self.s.len())?;
        check_dim("instance: length of y", self.h.nrows(), self.y.len())?;
        check_dim("instance: length of w", self.h.nrows(), self.w.len())?;
        if !(self.sigma2 >= 0.0) {
            return Err(Error::config("sigma2 must be >= 0"));
        }
        Ok(())
    }

    pub fn to_record(&self) -> ChannelRecord {
        ChannelRecord {
            n: self.n(),
            k: self.k(),
            h: self.h.transpose().iter().copied().collect(),
            s: self.s.iter().copied().collect(),
            y: self.y.iter().copied().collect(),
            sigma2: self.sigma2,
            seed: self.seed,
        }
    }

    pub fn from_record(r: &ChannelRecord) -> Result<Self> {
        check_dim("record: length of h", 4 * r.n * r.k, r.h.len())?;
        check_dim("record: length of s", 2 * r.k, r.s.len())?;
        check_dim("record: length of y", 2 * r.n, r.y.len())?;
        let h = RealMatrix::from_row_slice(2 * r.n, 2 * r.k, &r.h);
        let s = RealVector::from_column_slice(&r.s);
        let y = RealVector::from_column_slice(&r.y);
        let w = &y - &h * &s;
        Ok(Self {
            h,
            s,
            w,
            y,
            sigma2: r.sigma2,
            seed: r.seed,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_record())?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_record(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Modulation;

    #[test]
    fn realify_examples() {
        let one = ComplexMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert_eq!(realify(&one), RealMatrix::identity(2, 2));
        let i = ComplexMatrix::from_element(1, 1, Complex64::new(0.0, 1.0));
        assert_eq!(realify(&i), RealMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    #[test]
    fn realify_matches_complex_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let hc = ComplexMatrix::from_fn(5, 3, |_, _| complex_gaussian(&mut rng));
            let xc = ComplexVector::from_fn(3, |_, _| complex_gaussian(&mut rng));
            let x = realify_vector(&xc);
            let lhs = realify(&hc) * &x;
            let rhs = realify_vector(&(&hc * &xc));
            assert!((lhs - rhs).norm() < 1e-12);
            assert_eq!(complexify(&x).unwrap(), xc);
        }
    }

    #[test]
    fn snr_mapping() {
        assert_eq!(snr_to_sigma2(0.0, 4, 4), 1.0);
        assert!((snr_to_sigma2(10.0, 64, 16) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn symbol_error_pairing() {
        let c = Modulation::Qpsk.constellation();
        let a = c.a_max();
        let s = RealVector::from_column_slice(&[a, -a, a, a]);
        assert_eq!(symbol_errors(&s, &s, &c).unwrap(), 0);
        let mut one = s.clone();
        one[3] = -a;
        assert_eq!(symbol_errors(&one, &s, &c).unwrap(), 1);
        let mut both = s.clone();
        both[1] = a;
        both[3] = -a;
        assert_eq!(symbol_errors(&both, &s, &c).unwrap(), 1);
        assert_eq!(symbol_errors(&-&s, &s, &c).unwrap(), 2);
        assert!(symbol_errors(&RealVector::zeros(2), &s, &c).is_err());
    }

    #[test]
    fn channel_columns_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [
            ChannelModel::Iid,
            ChannelModel::Kronecker { rho_tx: 0.8, rho_rx: 0.5 },
        ] {
            let g = gen_channel(&model, 8, 4, &mut rng).unwrap();
            for col in g.h.column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
            let real = realify(&g.h);
            for col in real.column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uncorrelated_kronecker_matches_iid() {
        let iid = gen_channel(&ChannelModel::Iid, 6, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let kron = gen_channel(
            &ChannelModel::Kronecker { rho_tx: 0.0, rho_rx: 0.0 },
            6,
            3,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(iid.h, kron.h);
    }

    #[test]
    fn channel_rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_channel(&ChannelModel::Iid, 2, 3, &mut rng).is_err());
        assert!(gen_channel(&ChannelModel::Iid, 2, 0, &mut rng).is_err());
        let bad = ChannelModel::Kronecker { rho_tx: 1.0, rho_rx: 0.0 };
        assert!(gen_channel(&bad, 4, 2, &mut rng).is_err());
    }

    #[test]
    fn trial_draws_are_seed_deterministic() {
        let c = Modulation::Qam16.constellation();
        let a = TrialDraw::generate(&ChannelModel::Iid, 8, 4, &c, trial_seed(7, 3)).unwrap();
        let b = TrialDraw::generate(&ChannelModel::Iid, 8, 4, &c, trial_seed(7, 3)).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.s, b.s);
        assert_eq!(a.unit_noise, b.unit_noise);
        assert_ne!(trial_seed(7, 3), trial_seed(7, 4));
        assert_ne!(trial_seed(7, 3), trial_seed(8, 3));
        assert!(a.s.iter().all(|v| c.contains(*v)));
    }

    #[test]
    fn instance_is_consistent_and_round_trips() {
        let c = Modulation::Qpsk.constellation();
        let draw = TrialDraw::generate(&ChannelModel::Iid, 4, 2, &c, 99).unwrap();
        let inst = draw.instance(0.3);
        assert!((&inst.y - &inst.h * &inst.s - &inst.w).amax() < 1e-14);
        let noiseless = draw.instance(0.0);
        assert_eq!(noiseless.y, &noiseless.h * &noiseless.s);

        let back = ChannelInstance::from_record(&inst.to_record()).unwrap();
        assert_eq!(back.h, inst.h);
        assert_eq!(back.y, inst.y);
        assert_eq!(back.s, inst.s);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        inst.save_json(&path).unwrap();
        assert_eq!(ChannelInstance::load_json(&path).unwrap().h, inst.h);
    }
}
