//! ARIMAX point forecaster for real-time prices with day-ahead prices as
//! exogenous regressors.
//!
//! After `d`-fold differencing of both target and regressors the model is
//!
//! ```text
//! w_t = Σ φ_i w_{t-i} + Σ θ_j ε_{t-j} + Σ β_m z_{m,t} + ε_t
//! ```
//!
//! Parameters are estimated by conditional sum of squares: the first `p`
//! differenced observations are conditioned on and pre-sample innovations
//! are zero.

use std::collections::VecDeque;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::linalg::{invert, least_squares, normal_equations, solve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaxSpec<T> {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub exog_count: usize,
    pub phi: Vec<T>,
    pub theta: Vec<T>,
    pub beta: Vec<T>,
    /// Innovation variance.
    pub sigma2: T,
    /// Asymptotic standard errors in `phi, theta, beta` order.
    #[serde(default)]
    pub std_errors: Vec<T>,
}

const MAX_ITERATIONS: usize = 200;

impl<T: Float> ArimaxSpec<T> {
    /// A spec with the given coefficients and no estimation metadata.
    pub fn with_coefficients(d: usize, phi: Vec<T>, theta: Vec<T>, beta: Vec<T>) -> Self {
        ArimaxSpec {
            p: phi.len(),
            d,
            q: theta.len(),
            exog_count: beta.len(),
            phi,
            theta,
            beta,
            sigma2: T::zero(),
            std_errors: Vec::new(),
        }
    }

    fn set_params(&mut self, v: &[T]) {
        let (p, q) = (self.p, self.q);
        self.phi = v[..p].to_vec();
        self.theta = v[p..p + q].to_vec();
        self.beta = v[p + q..].to_vec();
    }
}

/// `d`-th difference of a series; the result is `d` values shorter.
pub fn difference<T: Float>(series: &[T], d: usize) -> Vec<T> {
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// Conditional residuals of the differenced model; entries before `p` are 0.
fn residuals<T: Float>(spec: &ArimaxSpec<T>, w: &[T], z: &[Vec<T>]) -> Vec<T> {
    let n = w.len();
    let mut eps = vec![T::zero(); n];
    for t in spec.p..n {
        let mut e = w[t];
        for (i, phi) in spec.phi.iter().enumerate() {
            e = e - *phi * w[t - i - 1];
        }
        for (j, theta) in spec.theta.iter().enumerate() {
            if t > j {
                e = e - *theta * eps[t - j - 1];
            }
        }
        for (m, beta) in spec.beta.iter().enumerate() {
            e = e - *beta * z[m][t];
        }
        eps[t] = e;
    }
    eps
}

fn css<T: Float>(eps: &[T], start: usize) -> T {
    eps[start..].iter().fold(T::zero(), |a, &e| a + e * e)
}

/// Fits the ARIMAX coefficients to `history` with aligned regressors `exog`.
pub fn fit_arimax<T: Float>(history: &[T], exog: &[&[T]], order: ArimaOrder) -> Result<ArimaxSpec<T>> {
    let ArimaOrder { p, d, q } = order;
    let n = history.len();
    if n <= p + q + d + 10 {
        return Err(Error::Precondition(format!(
            "history of length {n} must exceed p + q + d + 10 = {}",
            p + q + d + 10
        )));
    }
    if let Some(bad) = exog.iter().position(|x| x.len() != n) {
        return Err(Error::Precondition(format!("exogenous series {bad} is not aligned to the history")));
    }
    let w = difference(history, d);
    let z: Vec<Vec<T>> = exog.iter().map(|x| difference(x, d)).collect();
    let nw = w.len();

    let mut spec = ArimaxSpec {
        p,
        d,
        q,
        exog_count: exog.len(),
        phi: vec![T::zero(); p],
        theta: vec![T::zero(); q],
        beta: vec![T::zero(); exog.len()],
        sigma2: T::zero(),
        std_errors: Vec::new(),
    };

    // Linear regression on lags (and, for MA terms, on innovations proxied by
    // a long autoregression) gives the starting point.
    let initial = if q == 0 {
        let rows: Vec<Vec<T>> = (p..nw)
            .map(|t| (1..=p).map(|i| w[t - i]).chain(z.iter().map(|zm| zm[t])).collect())
            .collect();
        least_squares(&rows, &w[p..])
    } else {
        let long = (p.max(q) + 5).min(nw / 4).max(1);
        let rows: Vec<Vec<T>> = (long..nw)
            .map(|t| (1..=long).map(|i| w[t - i]).chain(z.iter().map(|zm| zm[t])).collect())
            .collect();
        let b = least_squares(&rows, &w[long..]);
        let mut proxy = vec![T::zero(); nw];
        for (k, t) in (long..nw).enumerate() {
            let fit = rows[k].iter().zip(&b).fold(T::zero(), |a, (x, c)| a + *x * *c);
            proxy[t] = w[t] - fit;
        }
        let start = long + q;
        let rows: Vec<Vec<T>> = (start..nw)
            .map(|t| {
                (1..=p)
                    .map(|i| w[t - i])
                    .chain((1..=q).map(|j| proxy[t - j]))
                    .chain(z.iter().map(|zm| zm[t]))
                    .collect()
            })
            .collect();
        least_squares(&rows, &w[start..])
    };
    spec.set_params(&initial);

    let k = initial.len();
    let mut theta = initial;
    let mut eps = residuals(&spec, &w, &z);
    let mut cost = css(&eps, p);

    if q > 0 {
        let mut mu = T::from(1e-3).unwrap();
        let mut converged = false;
        let mut last_step = T::infinity();
        for _ in 0..MAX_ITERATIONS {
            let jac = jacobian(&spec, &w, &z, &theta, &eps);
            let (jtj, jtr) = normal_equations(&jac, &eps[p..]);
            let mut accepted = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for i in 0..k {
                    a[i][i] = a[i][i] + mu * (jtj[i][i] + T::epsilon());
                }
                let rhs: Vec<T> = jtr.iter().map(|v| -*v).collect();
                let Some(step) = solve(&a, &rhs) else {
                    mu = mu * T::from(4.0).unwrap();
                    continue;
                };
                let cand: Vec<T> = theta.iter().zip(&step).map(|(a, b)| *a + *b).collect();
                let mut trial = spec.clone();
                trial.set_params(&cand);
                let e2 = residuals(&trial, &w, &z);
                let c2 = css(&e2, p);
                if c2.is_finite() && c2 <= cost {
                    last_step = step.iter().fold(T::zero(), |a, s| a.max(s.abs()));
                    let rel = (cost - c2) / (cost + T::epsilon());
                    theta = cand;
                    spec = trial;
                    eps = e2;
                    cost = c2;
                    mu = (mu / T::from(3.0).unwrap()).max(T::from(1e-12).unwrap());
                    accepted = true;
                    if rel < T::from(1e-12).unwrap() {
                        converged = true;
                    }
                    break;
                }
                mu = mu * T::from(4.0).unwrap();
            }
            let scale = theta.iter().fold(T::one(), |a, v| a.max(v.abs()));
            if !accepted || converged || last_step <= T::from(1e-10).unwrap() * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Estimation {
                iterations: MAX_ITERATIONS,
                objective: cost.to_f64().unwrap_or(f64::NAN),
                step: last_step.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    let n_eff = T::from(nw - p).unwrap();
    spec.sigma2 = cost / n_eff;
    let jac = jacobian(&spec, &w, &z, &theta, &eps);
    let (jtj, _) = normal_equations(&jac, &eps[p..]);
    spec.std_errors = match invert(&jtj) {
        Some(inv) if k > 0 => (0..k).map(|i| (inv[i][i] * spec.sigma2).max(T::zero()).sqrt()).collect(),
        _ => vec![T::nan(); k],
    };
    Ok(spec)
}

/// Jacobian of the conditional residuals with respect to the parameters.
fn jacobian<T: Float>(spec: &ArimaxSpec<T>, w: &[T], z: &[Vec<T>], theta: &[T], eps: &[T]) -> Vec<Vec<T>> {
    let k = theta.len();
    let rows = w.len() - spec.p;
    let mut jac = vec![vec![T::zero(); k]; rows];
    if spec.q == 0 {
        // Residuals are linear in the parameters.
        for (r, t) in (spec.p..w.len()).enumerate() {
            for i in 0..spec.p {
                jac[r][i] = -w[t - i - 1];
            }
            for m in 0..spec.exog_count {
                jac[r][spec.p + m] = -z[m][t];
            }
        }
        return jac;
    }
    for c in 0..k {
        let h = T::from(1e-6).unwrap() * theta[c].abs().max(T::one());
        let mut bumped = theta.to_vec();
        bumped[c] = bumped[c] + h;
        let mut trial = spec.clone();
        trial.set_params(&bumped);
        let e2 = residuals(&trial, w, z);
        for (r, t) in (spec.p..w.len()).enumerate() {
            jac[r][c] = (e2[t] - eps[t]) / h;
        }
    }
    jac
}

fn binomial(n: usize, k: usize) -> i64 {
    let mut c = 1i64;
    for i in 0..k {
        c = c * (n - i) as i64 / (i + 1) as i64;
    }
    c
}

/// Streaming state of a fitted model: consumes observations one hour at a
/// time and produces multi-step forecasts from the current position.
#[derive(Debug, Clone)]
pub struct ArimaxFilter<'s, T> {
    spec: &'s ArimaxSpec<T>,
    y_tail: VecDeque<T>,
    x_tail: Vec<VecDeque<T>>,
    w_tail: VecDeque<T>,
    eps_tail: VecDeque<T>,
    last_residual: Option<T>,
}

impl<'s, T: Float> ArimaxFilter<'s, T> {
    pub fn new(spec: &'s ArimaxSpec<T>) -> Self {
        ArimaxFilter {
            spec,
            y_tail: VecDeque::new(),
            x_tail: vec![VecDeque::new(); spec.exog_count],
            w_tail: VecDeque::new(),
            eps_tail: VecDeque::new(),
            last_residual: None,
        }
    }

    /// Runs the filter over a whole history.
    pub fn over(spec: &'s ArimaxSpec<T>, y: &[T], exog: &[&[T]]) -> Self {
        let mut f = Self::new(spec);
        let mut x = vec![T::zero(); spec.exog_count];
        for t in 0..y.len() {
            for (m, series) in exog.iter().enumerate() {
                x[m] = series[t];
            }
            f.push(y[t], &x);
        }
        f
    }

    fn diff_at(tail: &VecDeque<T>, current: T, d: usize) -> T {
        // Δ^d at the newest point from the d previous raw values.
        let mut acc = current;
        for k in 1..=d {
            let c = T::from(binomial(d, k)).unwrap();
            let prev = tail[tail.len() - k];
            acc = if k % 2 == 1 { acc - c * prev } else { acc + c * prev };
        }
        acc
    }

    fn one_step(&self, z: &[T]) -> T {
        let s = self.spec;
        let mut w = T::zero();
        for (i, phi) in s.phi.iter().enumerate() {
            w = w + *phi * self.w_tail[self.w_tail.len() - 1 - i];
        }
        for (j, theta) in s.theta.iter().enumerate() {
            if let Some(e) = self.eps_tail.len().checked_sub(1 + j).map(|ix| self.eps_tail[ix]) {
                w = w + *theta * e;
            }
        }
        for (m, beta) in s.beta.iter().enumerate() {
            w = w + *beta * z[m];
        }
        w
    }

    fn keep(tail: &mut VecDeque<T>, v: T, cap: usize) {
        tail.push_back(v);
        while tail.len() > cap {
            tail.pop_front();
        }
    }

    /// Feeds the actual value `y` and regressors `x` of the next hour.
    pub fn push(&mut self, y: T, x: &[T]) {
        let d = self.spec.d;
        if self.y_tail.len() < d {
            self.y_tail.push_back(y);
            for (m, xm) in x.iter().enumerate() {
                self.x_tail[m].push_back(*xm);
            }
            return;
        }
        let w = Self::diff_at(&self.y_tail, y, d);
        let z: Vec<T> = x.iter().enumerate().map(|(m, xm)| Self::diff_at(&self.x_tail[m], *xm, d)).collect();
        let eps = if self.w_tail.len() < self.spec.p {
            T::zero()
        } else {
            w - self.one_step(&z)
        };
        self.last_residual = Some(eps);
        Self::keep(&mut self.w_tail, w, self.spec.p.max(1));
        Self::keep(&mut self.eps_tail, eps, self.spec.q.max(1));
        Self::keep(&mut self.y_tail, y, d);
        for (m, xm) in x.iter().enumerate() {
            Self::keep(&mut self.x_tail[m], *xm, d);
        }
    }

    /// Innovation of the most recent observation.
    pub fn last_residual(&self) -> Option<T> {
        self.last_residual
    }

    /// Forecasts `horizon` hours ahead with zero future innovations.
    /// `exog_future[m][h]` is regressor `m` at step `h + 1`.
    pub fn forecast(&self, exog_future: &[&[T]], horizon: usize) -> Result<Vec<T>> {
        let s = self.spec;
        if exog_future.len() != s.exog_count || exog_future.iter().any(|x| x.len() < horizon) {
            return Err(Error::Precondition(format!(
                "future regressors must cover all {horizon} forecast hours"
            )));
        }
        if self.y_tail.len() < s.d || self.w_tail.len() < s.p {
            return Err(Error::Precondition("history too short to forecast".into()));
        }
        let mut state = self.clone();
        let mut out = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let x: Vec<T> = exog_future.iter().map(|xm| xm[h]).collect();
            let z: Vec<T> = x
                .iter()
                .enumerate()
                .map(|(m, xm)| Self::diff_at(&state.x_tail[m], *xm, s.d))
                .collect();
            let w = state.one_step(&z);
            // Undo the differencing: y_t = Δ^d y_t - Σ_{k≥1} (-1)^k C(d,k) y_{t-k}.
            let mut y = w;
            for k in 1..=s.d {
                let c = T::from(binomial(s.d, k)).unwrap();
                let prev = state.y_tail[state.y_tail.len() - k];
                y = if k % 2 == 1 { y + c * prev } else { y - c * prev };
            }
            out.push(y);
            Self::keep(&mut state.w_tail, w, s.p.max(1));
            Self::keep(&mut state.eps_tail, T::zero(), s.q.max(1));
            Self::keep(&mut state.y_tail, y, s.d);
            for (m, xm) in x.iter().enumerate() {
                Self::keep(&mut state.x_tail[m], *xm, s.d);
            }
        }
        Ok(out)
    }
}

/// Recursive multi-step forecast from the end of `history`.
pub fn predict_point<T: Float>(
    spec: &ArimaxSpec<T>,
    history: &[T],
    exog_history: &[&[T]],
    exog_future: &[&[T]],
    horizon: usize,
) -> Result<Vec<T>> {
    if exog_history.len() != spec.exog_count || exog_history.iter().any(|x| x.len() != history.len()) {
        return Err(Error::Precondition("regressor history must align with the target history".into()));
    }
    ArimaxFilter::over(spec, history, exog_history).forecast(exog_future, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ar1(phi: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = phi * y[t - 1] + noise.sample(&mut rng);
        }
        y
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let y = ar1(0.5, 0.1, 5000, 7);
        let spec = fit_arimax(&y, &[], ArimaOrder { p: 1, d: 0, q: 0 }).unwrap();
        assert!(spec.phi[0] > 0.45 && spec.phi[0] < 0.55, "phi = {}", spec.phi[0]);
        assert!((spec.sigma2 - 0.01).abs() < 0.001);
    }

    #[test]
    fn constant_series_differenced_gives_zero_model() {
        let y = vec![42.0; 100];
        let x = vec![30.0; 100];
        let spec = fit_arimax(&y, &[&x], ArimaOrder { p: 2, d: 1, q: 1 }).unwrap();
        assert!(spec.phi.iter().chain(&spec.theta).chain(&spec.beta).all(|c| *c == 0.0));
        assert!(spec.sigma2.abs() < 1e-20);
    }

    #[test]
    fn short_history_is_rejected() {
        let y = vec![1.0; 12];
        let err = fit_arimax(&y, &[], ArimaOrder { p: 1, d: 1, q: 1 }).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn misaligned_exog_is_rejected() {
        let y = vec![1.0; 50];
        let x = vec![1.0; 49];
        assert!(fit_arimax(&y, &[&x], ArimaOrder { p: 1, d: 0, q: 0 }).is_err());
    }

    #[test]
    fn ar1_forecast_decays_geometrically() {
        let spec = ArimaxSpec::with_coefficients(0, vec![0.5], vec![], vec![]);
        let f = predict_point(&spec, &[2.0], &[], &[], 4).unwrap();
        assert_eq!(f, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn pure_regression_passes_exog_through() {
        let spec = ArimaxSpec::with_coefficients(0, vec![], vec![], vec![1.0]);
        let hist_x = vec![10.0, 11.0];
        let future = vec![30.0, 31.0, 32.0];
        let f = predict_point(&spec, &[5.0, 6.0], &[&hist_x], &[&future], 3).unwrap();
        assert_eq!(f, future);
    }

    #[test]
    fn null_model_forecasts_zero() {
        let spec = ArimaxSpec::with_coefficients(0, vec![0.0], vec![0.0], vec![0.0]);
        let hist = vec![3.0, 4.0, 5.0];
        let x = vec![1.0, 1.0, 1.0];
        let fut = vec![9.0; 24];
        let f = predict_point(&spec, &hist, &[&x], &[&fut], 24).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn integrated_forecast_undoes_differencing() {
        // Random walk with drift supplied through the regressor: Δy = 2.
        let spec = ArimaxSpec::with_coefficients(1, vec![], vec![], vec![1.0]);
        let y = vec![1.0, 3.0, 5.0];
        let x = vec![0.0, 2.0, 4.0];
        let fut = vec![6.0, 8.0];
        let f = predict_point(&spec, &y, &[&x], &[&fut], 2).unwrap();
        assert_eq!(f, vec![7.0, 9.0]);
    }

    #[test]
    fn arma11_fit_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = 6000;
        let mut y = vec![0.0; n];
        let mut prev_e = 0.0;
        for t in 1..n {
            let e = noise.sample(&mut rng);
            y[t] = 0.6 * y[t - 1] + 0.3 * prev_e + e;
            prev_e = e;
        }
        let spec = fit_arimax(&y, &[], ArimaOrder { p: 1, d: 0, q: 1 }).unwrap();
        assert!((spec.phi[0] - 0.6).abs() < 3.0 * spec.std_errors[0], "{spec:?}");
        assert!((spec.theta[0] - 0.3).abs() < 3.0 * spec.std_errors[1], "{spec:?}");
    }

    #[test]
    fn filter_residuals_match_batch_residuals() {
        let y = ar1(0.7, 1.0, 200, 3);
        let x: Vec<f64> = (0..200).map(|t| (t as f64 * 0.3).sin()).collect();
        let spec = ArimaxSpec::with_coefficients(1, vec![0.4, 0.1], vec![0.2], vec![0.5]);
        let w = difference(&y, 1);
        let z = vec![difference(&x, 1)];
        let batch = residuals(&spec, &w, &z);
        let mut f = ArimaxFilter::new(&spec);
        let mut streamed = Vec::new();
        for t in 0..200 {
            f.push(y[t], &[x[t]]);
            if t >= 1 {
                streamed.push(f.last_residual().unwrap());
            }
        }
        for (a, b) in batch.iter().zip(&streamed) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
