use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete-time model seen by the filter.
pub trait FilterModel {
    fn dim(&self) -> usize;
    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn observation(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UnscentedParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Weights {
    gamma: f64,
    wc0: f64,
    /// Shared by every non-central point, for both mean and covariance.
    wi: f64,
}

impl Weights {
    fn new(n: usize, p: &UnscentedParams) -> Result<Self> {
        let n = n as f64;
        let lambda = p.alpha * p.alpha * (n + p.kappa) - n;
        let spread = n + lambda;
        if !(p.alpha > 0.0) || !(spread > 0.0) || !spread.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "unscented parameters give n + lambda = {spread}"
            )));
        }
        Ok(Self {
            gamma: spread.sqrt(),
            wc0: lambda / spread + 1.0 - p.alpha * p.alpha + p.beta,
            wi: 0.5 / spread,
        })
    }
}

/// Mean and lower-triangular square root of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: DVector<f64>,
    pub sqrt_cov: DMatrix<f64>,
}

impl FilterState {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        Ok(Self {
            mean,
            sqrt_cov: spd_factor(cov, "initial covariance")?,
        })
    }

    /// `S S^T`; only for inspection, the filter never forms it.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sqrt_cov * self.sqrt_cov.transpose()
    }
}

fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym / m.amax()));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidArgument(format!("{what} is not positive definite")))
}

/// Square-root UKF with additive process and measurement noise.
#[derive(Debug, Clone)]
pub struct SrUkf {
    pub params: UnscentedParams,
    sqrt_q: DMatrix<f64>,
    sqrt_r: DMatrix<f64>,
    w: Weights,
}

/// Result of one predict-update cycle.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FilterState,
    /// Rank-1 downdates that failed and were replaced by a re-factorization.
    pub refactorizations: usize,
}

impl SrUkf {
    pub fn new(params: UnscentedParams, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        Ok(Self {
            params,
            sqrt_q: spd_factor(q, "process noise covariance")?,
            sqrt_r: spd_factor(r, "measurement noise covariance")?,
            w: Weights::new(n, &params)?,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.sqrt_q.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.sqrt_r.nrows()
    }

    fn sigma_points(&self, s: &FilterState) -> Vec<DVector<f64>> {
        let n = s.mean.len();
        let mut pts = Vec::with_capacity(2 * n + 1);
        pts.push(s.mean.clone());
        for sign in [1.0, -1.0] {
            for j in 0..n {
                pts.push(&s.mean + s.sqrt_cov.column(j) * (sign * self.w.gamma));
            }
        }
        pts
    }

    /// `sum w_i p_i`, written around the central point to avoid cancelling
    /// the large opposite-signed weights that a small `alpha` produces.
    fn weighted_mean(&self, pts: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(pts[0].len());
        for p in &pts[1..] {
            acc += p - &pts[0];
        }
        &pts[0] + acc * self.w.wi
    }

    /// Factor of `sum w_i d_i d_i^T + N N^T` via QR, then the central term as
    /// a rank-1 update or downdate.
    fn factor(
        &self,
        pts: &[DVector<f64>],
        mean: &DVector<f64>,
        sqrt_noise: &DMatrix<f64>,
    ) -> (DMatrix<f64>, usize) {
        let m = mean.len();
        let k = pts.len() - 1;
        let sw = self.w.wi.sqrt();
        let mut a = DMatrix::zeros(k + sqrt_noise.ncols(), m);
        for (r, p) in pts[1..].iter().enumerate() {
            a.row_mut(r).copy_from(&((p - mean) * sw).transpose());
        }
        a.rows_mut(k, sqrt_noise.ncols())
            .copy_from(&sqrt_noise.transpose());
        let mut s = a.qr().r().transpose();
        fix_signs(&mut s);
        let d0 = (&pts[0] - mean) * self.w.wc0.abs().sqrt();
        let sign = self.w.wc0.signum();
        let mut fallbacks = 0;
        if cholupdate(&mut s, d0.clone(), sign).is_err() {
            s = refactor(&s, &[d0], sign);
            fallbacks += 1;
        }
        (s, fallbacks)
    }

    /// Time update through `model.transition`.
    pub fn predict(
        &self,
        prior: &FilterState,
        model: &dyn FilterModel,
    ) -> Result<(FilterState, usize)> {
        check_prior(prior, self.state_dim())?;
        let pts = self
            .sigma_points(prior)
            .iter()
            .map(|p| model.transition(p))
            .collect::<Result<Vec<_>>>()?;
        if pts.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("propagated sigma point"));
        }
        let mean = self.weighted_mean(&pts);
        let (sqrt_cov, fallbacks) = self.factor(&pts, &mean, &self.sqrt_q);
        Ok((FilterState { mean, sqrt_cov }, fallbacks))
    }

    /// Measurement update with `y`.
    pub fn update(
        &self,
        predicted: &FilterState,
        y: &DVector<f64>,
        model: &dyn FilterModel,
    ) -> Result<(FilterState, usize)> {
        check_prior(predicted, self.state_dim())?;
        if y.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: y.len(),
            });
        }
        let pts = self.sigma_points(predicted);
        let ys = pts
            .iter()
            .map(|p| model.observation(p))
            .collect::<Result<Vec<_>>>()?;
        if ys.iter().any(|v| v.len() != y.len()) {
            return Err(Error::Dimension {
                expected: y.len(),
                got: ys[0].len(),
            });
        }
        if ys.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("sigma point output"));
        }
        let y_mean = self.weighted_mean(&ys);
        let (sy, mut fallbacks) = self.factor(&ys, &y_mean, &self.sqrt_r);

        let n = predicted.mean.len();
        let mut pxy = DMatrix::zeros(n, y.len());
        for (i, (p, o)) in pts.iter().zip(&ys).enumerate() {
            let w = if i == 0 { self.w.wc0 } else { self.w.wi };
            pxy += (p - &predicted.mean) * (o - &y_mean).transpose() * w;
        }
        // K = Pxy (Sy Sy^T)^-1
        let z = sy
            .solve_lower_triangular(&pxy.transpose())
            .ok_or(Error::NonFinite("innovation factor"))?;
        let gain = sy
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or(Error::NonFinite("innovation factor"))?
            .transpose();
        let mean = &predicted.mean + &gain * (y - &y_mean);
        let u = &gain * &sy;
        let mut s = predicted.sqrt_cov.clone();
        let mut ok = true;
        for j in 0..u.ncols() {
            if cholupdate(&mut s, u.column(j).into_owned(), -1.0).is_err() {
                ok = false;
                break;
            }
        }
        if !ok {
            let cols: Vec<DVector<f64>> =
                (0..u.ncols()).map(|j| u.column(j).into_owned()).collect();
            s = refactor(&predicted.sqrt_cov, &cols, -1.0);
            fallbacks += 1;
        }
        if !mean.iter().all(|v| v.is_finite()) || !s.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("posterior"));
        }
        Ok((FilterState { mean, sqrt_cov: s }, fallbacks))
    }
}

/// Predict through the model, then correct with `y`.
pub fn srukf_step(
    prior: &FilterState,
    y: &DVector<f64>,
    model: &dyn FilterModel,
    ukf: &SrUkf,
) -> Result<StepOutcome> {
    let (predicted, a) = ukf.predict(prior, model)?;
    let (state, b) = ukf.update(&predicted, y, model)?;
    Ok(StepOutcome {
        state,
        refactorizations: a + b,
    })
}

fn check_prior(s: &FilterState, n: usize) -> Result<()> {
    if s.mean.len() != n || s.sqrt_cov.nrows() != n || s.sqrt_cov.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: s.mean.len(),
        });
    }
    if !s
        .mean
        .iter()
        .chain(s.sqrt_cov.iter())
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("prior"));
    }
    Ok(())
}

fn fix_signs(l: &mut DMatrix<f64>) {
    for j in 0..l.ncols() {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
}

/// Rank-1 change of a lower Cholesky factor in place: `L L^T + sign v v^T`.
///
/// On a failed downdate `l` is left partially modified.
pub fn cholupdate(l: &mut DMatrix<f64>, mut v: DVector<f64>, sign: f64) -> Result<()> {
    let n = l.nrows();
    for k in 0..n {
        let lkk = l[(k, k)];
        let r2 = lkk * lkk + sign * v[k] * v[k];
        if !(r2 > 0.0) || !r2.is_finite() || lkk == 0.0 {
            return Err(Error::FactorDowndate);
        }
        let r = r2.sqrt();
        let c = r / lkk;
        let s = v[k] / lkk;
        l[(k, k)] = r;
        for i in k + 1..n {
            l[(i, k)] = (l[(i, k)] + sign * s * v[i]) / c;
            v[i] = c * v[i] - s * l[(i, k)];
        }
    }
    Ok(())
}

/// Fallback after a failed downdate: form the covariance, clip negative
/// eigenvalues and factor again.
fn refactor(s: &DMatrix<f64>, vs: &[DVector<f64>], sign: f64) -> DMatrix<f64> {
    let mut p = s * s.transpose();
    for v in vs {
        p += v * v.transpose() * sign;
    }
    p = (&p + p.transpose()) * 0.5;
    if let Some(c) = p.clone().cholesky() {
        return c.l();
    }
    let n = p.nrows();
    let floor = 1e-12 * (p.trace().abs() / n as f64).max(1e-300);
    let eig = p.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
    match rebuilt.clone().cholesky() {
        Some(c) => c.l(),
        None => DMatrix::from_diagonal(&clipped.map(f64::sqrt)),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    struct Linear {
        a: DMatrix<f64>,
        c: DMatrix<f64>,
    }

    impl FilterModel for Linear {
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(&self.a * x)
        }
        fn observation(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(&self.c * x)
        }
    }

    fn oscillator() -> Linear {
        let dt = 0.05;
        Linear {
            a: DMatrix::from_row_slice(2, 2, &[1.0, dt, -2.0 * dt, 1.0 - 0.1 * dt]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        }
    }

    /// Textbook covariance-form Kalman filter.
    fn kf_step(
        m: &Linear,
        x: &DVector<f64>,
        p: &DMatrix<f64>,
        y: &DVector<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let xp = &m.a * x;
        let pp = &m.a * p * m.a.transpose() + q;
        let s = &m.c * &pp * m.c.transpose() + r;
        let k = &pp * m.c.transpose() * s.try_inverse().unwrap();
        let x = &xp + &k * (y - &m.c * &xp);
        let i = DMatrix::identity(x.len(), x.len());
        (x, (i - &k * &m.c) * pp)
    }

    fn normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn cholupdate_matches_dense_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: DMatrix<f64> = DMatrix::from_fn(4, 4, |_, _| StandardNormal.sample(&mut rng));
        let p = &b * b.transpose() + DMatrix::identity(4, 4);
        let v = normal(&mut rng, 4) * 0.3;
        let mut l = p.clone().cholesky().unwrap().l();
        cholupdate(&mut l, v.clone(), 1.0).unwrap();
        assert!((&l * l.transpose() - (&p + &v * v.transpose())).amax() < 1e-12);
        cholupdate(&mut l, v.clone(), -1.0).unwrap();
        assert!((&l * l.transpose() - &p).amax() < 1e-12);
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        let mut small = DMatrix::identity(2, 2);
        let err = cholupdate(&mut small, DVector::from_vec(vec![2.0, 0.0]), -1.0).unwrap_err();
        assert!(matches!(err, Error::FactorDowndate));
    }

    #[test]
    fn refactor_clips_to_positive_definite() {
        let s = DMatrix::identity(2, 2);
        let l = refactor(&s, &[DVector::from_vec(vec![1.5, 0.0])], -1.0);
        assert!(l.iter().all(|v| v.is_finite()));
        let p = &l * l.transpose();
        assert!(p.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        assert!((p[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_matches_kalman_filter_in_low_noise_limit() {
        let m = oscillator();
        let q = DMatrix::identity(2, 2) * 1e-9;
        let r = DMatrix::identity(1, 1) * 1e-8;
        let p0 = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let x0 = DVector::from_vec(vec![0.3, -0.2]);
        let y = DVector::from_vec(vec![0.31]);
        let ukf = SrUkf::new(UnscentedParams::default(), &q, &r).unwrap();
        let prior = FilterState::new(x0.clone(), &p0).unwrap();
        let out = srukf_step(&prior, &y, &m, &ukf).unwrap();
        let (xk, pk) = kf_step(&m, &x0, &p0, &y, &q, &r);
        assert!(
            (&out.state.mean - &xk).amax() < 1e-8,
            "{} vs {}",
            out.state.mean,
            xk
        );
        let pc = out.state.covariance();
        assert!((&pc - &pk).amax() < 1e-8 * pk.amax().max(1e-8));
    }

    #[test]
    fn hundred_steps_track_kalman_filter() {
        let m = oscillator();
        let q = DMatrix::identity(2, 2) * 1e-4;
        let r = DMatrix::identity(1, 1) * 1e-2;
        let p0 = DMatrix::identity(2, 2) * 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut truth = DVector::from_vec(vec![1.0, 0.0]);
        let mut x = DVector::zeros(2);
        let mut p = p0.clone();
        let ukf = SrUkf::new(UnscentedParams::default(), &q, &r).unwrap();
        let mut state = FilterState::new(DVector::zeros(2), &p0).unwrap();
        for _ in 0..100 {
            truth = &m.a * truth + normal(&mut rng, 2) * 1e-2;
            let y = &m.c * &truth + normal(&mut rng, 1) * 0.1;
            (x, p) = kf_step(&m, &x, &p, &y, &q, &r);
            state = srukf_step(&state, &y, &m, &ukf).unwrap().state;
            assert!((&state.mean - &x).amax() < 1e-6);
        }
        assert!((state.covariance() - p).amax() < 1e-6);
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let m = Linear {
            a: DMatrix::identity(2, 2),
            c: DMatrix::identity(2, 2),
        };
        let q = DMatrix::identity(2, 2) * 1e-3;
        let r = DMatrix::identity(2, 2) * 1e12;
        let ukf = SrUkf::new(UnscentedParams::default(), &q, &r).unwrap();
        let prior = FilterState::new(
            DVector::from_vec(vec![1.0, 2.0]),
            &DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]),
        )
        .unwrap();
        let (predicted, _) = ukf.predict(&prior, &m).unwrap();
        // Measurement equal to h(mean): nothing to correct.
        let (post, _) = ukf.update(&predicted, &predicted.mean.clone(), &m).unwrap();
        assert!((&post.mean - &predicted.mean).amax() < 1e-12);
        assert!((post.covariance() - predicted.covariance()).amax() < 1e-9);
        // An arbitrary measurement barely moves it either.
        let (post, _) = ukf
            .update(&predicted, &DVector::from_vec(vec![50.0, -50.0]), &m)
            .unwrap();
        assert!((&post.mean - &predicted.mean).amax() < 1e-9);
    }

    #[test]
    fn posterior_factor_is_lower_triangular() {
        let m = oscillator();
        let ukf = SrUkf::new(
            UnscentedParams::default(),
            &(DMatrix::identity(2, 2) * 1e-4),
            &(DMatrix::identity(1, 1) * 1e-2),
        )
        .unwrap();
        let prior =
            FilterState::new(DVector::from_vec(vec![0.1, 0.0]), &DMatrix::identity(2, 2)).unwrap();
        let out = srukf_step(&prior, &DVector::from_vec(vec![0.2]), &m, &ukf).unwrap();
        assert_eq!(out.state.sqrt_cov[(0, 1)], 0.0);
        assert!(out.state.sqrt_cov.diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn non_finite_propagation_is_an_error() {
        struct Blow;
        impl FilterModel for Blow {
            fn dim(&self) -> usize {
                1
            }
            fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(x.map(|v| if v > 0.0 { f64::INFINITY } else { v }))
            }
            fn observation(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(x.clone())
            }
        }
        let one = DMatrix::identity(1, 1);
        let ukf = SrUkf::new(UnscentedParams::default(), &one, &one).unwrap();
        let prior = FilterState::new(DVector::from_vec(vec![0.0]), &one).unwrap();
        let err = srukf_step(&prior, &DVector::from_vec(vec![0.0]), &Blow, &ukf).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn rejects_bad_covariances() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let ok = DMatrix::identity(2, 2);
        assert!(SrUkf::new(UnscentedParams::default(), &bad, &ok).is_err());
        assert!(SrUkf::new(UnscentedParams::default(), &ok, &bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            FilterState::new(DVector::zeros(2), &asym),
            Err(Error::NotSymmetric(_))
        ));
        let p = UnscentedParams {
            kappa: -3.0,
            ..Default::default()
        };
        assert!(SrUkf::new(p, &ok, &ok).is_err());
    }
}
