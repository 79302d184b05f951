//! Beta³ item-response core: the item characteristic curve, analytic
//! gradients of the squared-error loss on the observation matrix, and the
//! gradient-descent fit.
//!
//! Items are score bands (matrix rows), respondents are models (columns), and
//! observations are normalized absolute errors in (0, 1). Low ability θ means
//! low expected error, so the reporting layer exposes 1 − θ as the
//! "higher is better" ability.
//!
//! The curve E = σ(a·(logit θ − logit δ)) is, in unconstrained coordinates
//! θ = σ(t), δ = σ(d), exactly E = σ(a·(t − d)): logits of band difficulty
//! and model tendency interact through a bilinear form. The fit exploits
//! this: logit-space observations are (up to clamping) a rank-one matrix
//! plus per-row offsets, so a weighted alternating-least-squares
//! factorization lands next to the optimum and plain full-batch gradient
//! descent with backtracking finishes the job.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Clamp applied to observation cells so logits stay finite.
pub const OBS_EPSILON: f64 = 1e-4;

/// Open-interval clamp for constrained parameters and curve outputs.
const OPEN_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of softplus, ln(e^y − 1), guarded for y near 0.
fn softplus_inv(y: f64) -> f64 {
    let y = y.max(1e-9);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// B×M matrix of clamped error observations; cells may be missing when a
/// band had no validation support.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    values: Vec<f64>,
    present: Vec<bool>,
    bands: usize,
    models: usize,
}

impl ObservationMatrix {
    /// Build from complete rows. Values must be finite and within [0, 1];
    /// they are clamped into [epsilon, 1 − epsilon].
    pub fn new(rows: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        let cells = rows
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::with_missing(cells, epsilon)
    }

    /// Build from rows where `None` marks a missing cell.
    pub fn with_missing(rows: Vec<Vec<Option<f64>>>, epsilon: f64) -> Result<Self> {
        let bands = rows.len();
        if bands < 2 {
            return Err(Error::input(format!("observation matrix needs >= 2 items, got {bands}")));
        }
        let models = rows[0].len();
        if models < 2 {
            return Err(Error::input(format!(
                "observation matrix needs >= 2 respondents, got {models}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::input(format!("epsilon must be in (0, 0.5), got {epsilon}")));
        }
        let mut values = Vec::with_capacity(bands * models);
        let mut present = Vec::with_capacity(bands * models);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != models {
                return Err(Error::input(format!(
                    "ragged observation matrix: row {i} has {} cells, expected {models}",
                    row.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                match cell {
                    Some(v) => {
                        if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                            return Err(Error::input(format!(
                                "observation ({i},{j}) out of [0,1]: {v}"
                            )));
                        }
                        values.push(v.clamp(epsilon, 1.0 - epsilon));
                        present.push(true);
                    }
                    None => {
                        values.push(f64::NAN);
                        present.push(false);
                    }
                }
            }
        }
        if !present.iter().any(|p| *p) {
            return Err(Error::input("observation matrix has no observed cells"));
        }
        Ok(ObservationMatrix { values, present, bands, models })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn get(&self, band: usize, model: usize) -> Option<f64> {
        let idx = band * self.models + model;
        self.present[idx].then(|| self.values[idx])
    }

    pub fn observed_count(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    /// Rows with no observed cells (bands absent from the validation data).
    pub fn unsupported_items(&self) -> Vec<usize> {
        (0..self.bands)
            .filter(|i| (0..self.models).all(|j| !self.present[i * self.models + j]))
            .collect()
    }

    /// Reorder columns; used by permutation tests and id alignment.
    pub fn permute_models(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.models {
            return Err(Error::input("permutation length mismatch"));
        }
        let mut rows = Vec::with_capacity(self.bands);
        for i in 0..self.bands {
            let row = order
                .iter()
                .map(|&j| {
                    let idx = i * self.models + j;
                    self.present[idx].then(|| self.values[idx])
                })
                .collect();
            rows.push(row);
        }
        // cells are already clamped; reuse the loosest valid epsilon
        Self::with_missing(rows, OBS_EPSILON.min(0.25))
    }
}

/// Serialized form: missing cells are null.
impl Serialize for ObservationMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = (0..self.bands)
            .map(|i| (0..self.models).map(|j| self.get(i, j)).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ObservationMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Option<f64>>>::deserialize(deserializer)?;
        ObservationMatrix::with_missing(rows, OBS_EPSILON).map_err(serde::de::Error::custom)
    }
}

/// Gradient-descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Loss-improvement floor; smaller improvements count toward `patience`.
    pub tol: f64,
    /// Consecutive sub-`tol` steps before stopping.
    pub patience: usize,
    /// Observation clamp.
    pub epsilon: f64,
    /// Recorded for provenance; the fit itself is deterministic.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.1,
            max_iters: 5000,
            tol: 1e-9,
            patience: 20,
            epsilon: OBS_EPSILON,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::input("learning_rate must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::input("tol must be >= 0"));
        }
        if self.patience == 0 {
            return Err(Error::input("patience must be >= 1"));
        }
        Ok(())
    }
}

/// Unconstrained optimizer coordinates: per-model `t` (θ = σ(t)), per-item
/// `d` (δ = σ(d)), `s` (τ = tanh s) and `w` (ω = softplus w).
#[derive(Debug, Clone, PartialEq)]
pub struct RawCoords {
    pub t: Vec<f64>,
    pub d: Vec<f64>,
    pub s: Vec<f64>,
    pub w: Vec<f64>,
}

impl RawCoords {
    fn check_shape(&self, obs: &ObservationMatrix) -> Result<()> {
        if self.t.len() != obs.models()
            || self.d.len() != obs.bands()
            || self.s.len() != obs.bands()
            || self.w.len() != obs.bands()
        {
            return Err(Error::input("coordinate shapes do not match the observation matrix"));
        }
        Ok(())
    }

    fn find_non_finite(&self) -> Option<String> {
        for (name, vec) in [("t", &self.t), ("d", &self.d), ("s", &self.s), ("w", &self.w)] {
            if let Some(i) = vec.iter().position(|v| !v.is_finite()) {
                return Some(format!("{name}[{i}] = {}", vec[i]));
            }
        }
        None
    }

    fn effective_a(&self) -> Vec<f64> {
        self.s
            .iter()
            .zip(&self.w)
            .map(|(&s, &w)| s.tanh() * softplus(w))
            .collect()
    }
}

/// Item characteristic curve of the Beta³ response model:
/// E = 1 / (1 + (δ/(1−δ))^a · (θ/(1−θ))^(−a)), evaluated in log-odds space
/// as σ(a·(logit θ − logit δ)). Result is strictly inside (0, 1).
pub fn icc_expectation(theta: f64, delta: f64, a: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) || !theta.is_finite() {
        return Err(Error::input(format!("theta must lie strictly in (0,1), got {theta}")));
    }
    if !(delta > 0.0 && delta < 1.0) || !delta.is_finite() {
        return Err(Error::input(format!("delta must lie strictly in (0,1), got {delta}")));
    }
    if !a.is_finite() {
        return Err(Error::input(format!("discrimination must be finite, got {a}")));
    }
    Ok(icc_unchecked(theta, delta, a))
}

#[inline]
fn icc_unchecked(theta: f64, delta: f64, a: f64) -> f64 {
    let z = a * (logit(theta) - logit(delta));
    sigmoid(z).clamp(OPEN_EPS, 1.0 - OPEN_EPS)
}

/// Mean squared residual over observed cells.
pub fn birt_loss(raw: &RawCoords, obs: &ObservationMatrix) -> Result<f64> {
    raw.check_shape(obs)?;
    if let Some(c) = raw.find_non_finite() {
        return Err(Error::Numeric(format!("non-finite coordinate {c}")));
    }
    Ok(loss_unchecked(raw, obs))
}

fn loss_unchecked(raw: &RawCoords, obs: &ObservationMatrix) -> f64 {
    let a = raw.effective_a();
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..obs.bands() {
        for j in 0..obs.models() {
            if let Some(p) = obs.get(i, j) {
                let e = sigmoid(a[i] * (raw.t[j] - raw.d[i]));
                let r = e - p;
                sum += r * r;
                n += 1;
            }
        }
    }
    sum / n as f64
}

/// Loss together with exact analytic partials with respect to the
/// unconstrained coordinates (chain rule through σ, tanh and softplus).
pub fn birt_loss_and_gradients(raw: &RawCoords, obs: &ObservationMatrix) -> Result<(f64, RawCoords)> {
    raw.check_shape(obs)?;
    if let Some(c) = raw.find_non_finite() {
        return Err(Error::Numeric(format!("non-finite coordinate {c}")));
    }
    let bands = obs.bands();
    let models = obs.models();
    let n = obs.observed_count() as f64;
    let a = raw.effective_a();
    let mut loss = 0.0;
    let mut gt = vec![0.0; models];
    let mut gd = vec![0.0; bands];
    let mut gs = vec![0.0; bands];
    let mut gw = vec![0.0; bands];
    for i in 0..bands {
        let tau = raw.s[i].tanh();
        let omega = softplus(raw.w[i]);
        let mut ga_i = 0.0; // dLoss/da_i
        let mut gz_sum = 0.0;
        for j in 0..models {
            let Some(p) = obs.get(i, j) else { continue };
            let diff = raw.t[j] - raw.d[i];
            let e = sigmoid(a[i] * diff);
            let r = e - p;
            loss += r * r;
            let gz = 2.0 * r * e * (1.0 - e) / n; // dLoss/dz_ij
            gt[j] += gz * a[i];
            gz_sum += gz;
            ga_i += gz * diff;
        }
        gd[i] = -a[i] * gz_sum;
        gs[i] = ga_i * omega * (1.0 - tau * tau);
        gw[i] = ga_i * tau * sigmoid(raw.w[i]);
    }
    loss /= n;
    let grads = RawCoords { t: gt, d: gd, s: gs, w: gw };
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    if let Some(c) = grads.find_non_finite() {
        return Err(Error::Numeric(format!("non-finite gradient {c}")));
    }
    Ok((loss, grads))
}

/// Weighted rank-one factorization of the logit observations,
/// L_ij ≈ a_i·t_j + b_i, with weights (p(1−p))² so saturated cells do not
/// dominate. Missing cells get weight zero. Returns unconstrained coords.
fn als_init(obs: &ObservationMatrix) -> RawCoords {
    let bands = obs.bands();
    let models = obs.models();
    let mut logits = vec![0.0; bands * models];
    let mut weight = vec![0.0; bands * models];
    for i in 0..bands {
        for j in 0..models {
            if let Some(p) = obs.get(i, j) {
                logits[i * models + j] = logit(p);
                let pq = p * (1.0 - p);
                weight[i * models + j] = pq * pq;
            }
        }
    }

    // start t from weighted column means of L, centered
    let mut t = vec![0.0; models];
    for j in 0..models {
        let mut sw = 0.0;
        let mut sv = 0.0;
        for i in 0..bands {
            sw += weight[i * models + j];
            sv += weight[i * models + j] * logits[i * models + j];
        }
        t[j] = if sw > 0.0 { sv / sw } else { 0.0 };
    }
    center(&mut t);
    if rms(&t) < 1e-9 {
        // equal column means: seed from the most informative row instead
        let best_row = (0..bands)
            .max_by(|&p, &q| {
                row_weighted_var(&logits, &weight, models, p)
                    .total_cmp(&row_weighted_var(&logits, &weight, models, q))
            })
            .unwrap_or(0);
        for j in 0..models {
            t[j] = if weight[best_row * models + j] > 0.0 {
                logits[best_row * models + j]
            } else {
                0.0
            };
        }
        center(&mut t);
    }

    let mut a = vec![0.0; bands];
    let mut b = vec![0.0; bands];
    for _ in 0..60 {
        // rows: weighted regression of L_i· on t
        for i in 0..bands {
            let w = &weight[i * models..(i + 1) * models];
            let l = &logits[i * models..(i + 1) * models];
            let sw: f64 = w.iter().sum();
            if sw <= 0.0 {
                a[i] = 0.0;
                b[i] = 0.0;
                continue;
            }
            let tm = t.iter().zip(w).map(|(&t, &w)| w * t).sum::<f64>() / sw;
            let lm = l.iter().zip(w).map(|(&l, &w)| w * l).sum::<f64>() / sw;
            let mut var = 0.0;
            let mut cov = 0.0;
            for j in 0..models {
                var += w[j] * (t[j] - tm) * (t[j] - tm);
                cov += w[j] * (t[j] - tm) * (l[j] - lm);
            }
            a[i] = if var > 1e-12 { cov / var } else { 0.0 };
            b[i] = lm - a[i] * tm;
        }
        // columns: weighted update of t_j given (a, b)
        for j in 0..models {
            let mut den = 0.0;
            let mut num = 0.0;
            for i in 0..bands {
                let w = weight[i * models + j];
                den += w * a[i] * a[i];
                num += w * a[i] * (logits[i * models + j] - b[i]);
            }
            if den > 1e-12 {
                t[j] = num / den;
            }
        }
        // gauge: center and rescale t, folding the shift into b
        let shift = mean(&t);
        for tj in t.iter_mut() {
            *tj -= shift;
        }
        for i in 0..bands {
            b[i] += a[i] * shift;
        }
        let scale = rms(&t);
        if scale > 1e-9 {
            for tj in t.iter_mut() {
                *tj /= scale;
            }
            for ai in a.iter_mut() {
                *ai *= scale;
            }
        }
    }

    // orientation: majority-positive discrimination so that low-error
    // respondents land at low t
    if a.iter().sum::<f64>() < 0.0 {
        for v in a.iter_mut() {
            *v = -*v;
        }
        for v in t.iter_mut() {
            *v = -*v;
        }
    }

    // constant rows away from 0.5 need a nonzero slope to be representable
    for i in 0..bands {
        let w = &weight[i * models..(i + 1) * models];
        let sw: f64 = w.iter().sum();
        if sw <= 0.0 {
            continue;
        }
        if a[i].abs() < 1e-8 {
            let lm = logits[i * models..(i + 1) * models]
                .iter()
                .zip(w)
                .map(|(&l, &w)| w * l)
                .sum::<f64>()
                / sw;
            if lm.abs() > 0.01 {
                a[i] = 0.5;
                b[i] = lm;
            }
        }
    }

    let d: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(&a, &b)| if a.abs() > 1e-8 { (-b / a).clamp(-10.0, 10.0) } else { 0.0 })
        .collect();
    let s: Vec<f64> = a
        .iter()
        .map(|&a| if a >= 0.0 { 0.5f64.atanh() } else { -(0.5f64.atanh()) })
        .collect();
    let w: Vec<f64> = a
        .iter()
        .map(|&a| softplus_inv(2.0 * a.abs()).clamp(-20.0, 20.0))
        .collect();
    RawCoords { t, d, s, w }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn center(v: &mut [f64]) {
    let m = mean(v);
    for x in v.iter_mut() {
        *x -= m;
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn row_weighted_var(logits: &[f64], weight: &[f64], models: usize, row: usize) -> f64 {
    let w = &weight[row * models..(row + 1) * models];
    let l = &logits[row * models..(row + 1) * models];
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return 0.0;
    }
    let m = l.iter().zip(w).map(|(&l, &w)| w * l).sum::<f64>() / sw;
    l.iter().zip(w).map(|(&l, &w)| w * (l - m) * (l - m)).sum::<f64>() / sw
}

/// Fitted parameters in constrained space, plus fit provenance.
///
/// Serializes to JSON that round-trips bit-exactly; the unconstrained
/// coordinates are derived, not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct BirtParams {
    theta: Vec<f64>,
    delta: Vec<f64>,
    tau: Vec<f64>,
    omega: Vec<f64>,
    final_loss: f64,
    iters: usize,
    config: FitConfig,
    extrapolated_items: Vec<usize>,
}

#[derive(Deserialize)]
struct RawParams {
    theta: Vec<f64>,
    delta: Vec<f64>,
    tau: Vec<f64>,
    omega: Vec<f64>,
    final_loss: f64,
    iters: usize,
    config: FitConfig,
    #[serde(default)]
    extrapolated_items: Vec<usize>,
}

impl TryFrom<RawParams> for BirtParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let p = BirtParams {
            theta: raw.theta,
            delta: raw.delta,
            tau: raw.tau,
            omega: raw.omega,
            final_loss: raw.final_loss,
            iters: raw.iters,
            config: raw.config,
            extrapolated_items: raw.extrapolated_items,
        };
        p.validate()?;
        Ok(p)
    }
}

impl BirtParams {
    fn validate(&self) -> Result<()> {
        if self.theta.len() < 2 || self.delta.len() < 2 {
            return Err(Error::input("params need >= 2 respondents and >= 2 items"));
        }
        if self.tau.len() != self.delta.len() || self.omega.len() != self.delta.len() {
            return Err(Error::input("item parameter lengths disagree"));
        }
        if self.theta.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::input("theta out of (0,1)"));
        }
        if self.delta.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::input("delta out of (0,1)"));
        }
        if self.tau.iter().any(|v| !(*v >= -1.0 && *v <= 1.0)) {
            return Err(Error::input("tau out of [-1,1]"));
        }
        if self.omega.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::input("omega must be positive and finite"));
        }
        Ok(())
    }

    pub fn models(&self) -> usize {
        self.theta.len()
    }

    pub fn bands(&self) -> usize {
        self.delta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Effective discrimination τ·ω per item.
    pub fn discrimination(&self, item: usize) -> f64 {
        self.tau[item] * self.omega[item]
    }

    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    pub fn iters(&self) -> usize {
        self.iters
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    /// Items whose parameters were backfilled because the band had no
    /// observations; their expectations are extrapolations.
    pub fn extrapolated_items(&self) -> &[usize] {
        &self.extrapolated_items
    }

    /// Recover unconstrained coordinates (derived; inverse of the
    /// constraining maps, not the optimizer's exact internal state).
    pub fn raw_coordinates(&self) -> RawCoords {
        RawCoords {
            t: self.theta.iter().map(|&v| logit(v)).collect(),
            d: self.delta.iter().map(|&v| logit(v)).collect(),
            s: self.tau.iter().map(|&v| v.clamp(-0.999_999, 0.999_999).atanh()).collect(),
            w: self.omega.iter().map(|&v| softplus_inv(v)).collect(),
        }
    }
}

/// Full-batch gradient descent with analytic gradients and backtracking on
/// the base learning rate. Deterministic; stops on `max_iters` or after
/// `patience` consecutive steps whose loss improvement is below `tol`.
/// The best parameters seen are returned, so the final loss never exceeds
/// the initialization loss.
pub fn fit_birt(obs: &ObservationMatrix, config: &FitConfig) -> Result<BirtParams> {
    config.validate()?;
    let mut raw = als_init(obs);
    let (init_loss, mut grads) = birt_loss_and_gradients(&raw, obs)?;
    let mut current = init_loss;
    let mut best = raw.clone();
    let mut best_loss = init_loss;
    let mut stall = 0usize;
    let mut iters = 0usize;

    for it in 0..config.max_iters {
        if !current.is_finite() {
            return Err(Error::Fit {
                iteration: it,
                message: format!("loss became non-finite: {current}"),
            });
        }
        let grad_sq: f64 = [&grads.t, &grads.d, &grads.s, &grads.w]
            .iter()
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum();
        if grad_sq == 0.0 {
            break;
        }
        // Armijo backtracking from the base step
        let mut step = config.learning_rate;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = step_coords(&raw, &grads, step);
            let loss = loss_unchecked(&trial, obs);
            if loss.is_finite() && loss <= current - 1e-4 * step * grad_sq {
                accepted = Some((trial, loss));
                break;
            }
            step *= 0.5;
        }
        iters = it + 1;
        let improvement = match accepted {
            Some((trial, loss)) => {
                let improvement = current - loss;
                raw = trial;
                current = loss;
                if loss < best_loss {
                    best_loss = loss;
                    best = raw.clone();
                }
                grads = birt_loss_and_gradients(&raw, obs)?.1;
                improvement
            }
            None => 0.0, // no acceptable step along the gradient
        };
        if improvement < config.tol {
            stall += 1;
            if stall >= config.patience {
                break;
            }
        } else {
            stall = 0;
        }
    }

    // bands without observations inherit the mean fitted item parameters
    let unsupported = obs.unsupported_items();
    if !unsupported.is_empty() {
        let supported: Vec<usize> =
            (0..obs.bands()).filter(|i| !unsupported.contains(i)).collect();
        let a = best.effective_a();
        let mean_a = supported.iter().map(|&i| a[i]).sum::<f64>() / supported.len() as f64;
        let mean_d = supported.iter().map(|&i| best.d[i]).sum::<f64>() / supported.len() as f64;
        for &i in &unsupported {
            best.d[i] = mean_d;
            best.s[i] = if mean_a >= 0.0 { 0.5f64.atanh() } else { -(0.5f64.atanh()) };
            best.w[i] = softplus_inv(2.0 * mean_a.abs()).clamp(-20.0, 20.0);
        }
    }

    let clamp_open = |v: f64| v.clamp(OPEN_EPS, 1.0 - OPEN_EPS);
    Ok(BirtParams {
        theta: best.t.iter().map(|&t| clamp_open(sigmoid(t))).collect(),
        delta: best.d.iter().map(|&d| clamp_open(sigmoid(d))).collect(),
        tau: best.s.iter().map(|&s| s.tanh()).collect(),
        omega: best.w.iter().map(|&w| softplus(w).max(1e-12)).collect(),
        final_loss: best_loss,
        iters,
        config: config.clone(),
        extrapolated_items: unsupported,
    })
}

fn step_coords(raw: &RawCoords, grads: &RawCoords, step: f64) -> RawCoords {
    let walk = |x: &[f64], g: &[f64]| x.iter().zip(g).map(|(&x, &g)| x - step * g).collect();
    RawCoords {
        t: walk(&raw.t, &grads.t),
        d: walk(&raw.d, &grads.d),
        s: walk(&raw.s, &grads.s),
        w: walk(&raw.w, &grads.w),
    }
}

/// Expected normalized error per (band, model) cell from fitted parameters.
pub fn error_expectation(params: &BirtParams) -> Vec<Vec<f64>> {
    (0..params.bands())
        .map(|i| {
            (0..params.models())
                .map(|j| icc_unchecked(params.theta[j], params.delta[i], params.discrimination(i)))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityEntry {
    pub model_index: usize,
    pub theta: f64,
    /// 1 − θ: higher means lower expected error.
    pub ability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEntry {
    pub item_index: usize,
    pub delta: f64,
    pub discrimination: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityReport {
    pub abilities: Vec<AbilityEntry>,
    pub items: Vec<ItemEntry>,
}

/// Per-model ability summary (1 − θ restores "higher is better") plus item
/// difficulty and discrimination.
pub fn ability_report(params: &BirtParams) -> AbilityReport {
    AbilityReport {
        abilities: (0..params.models())
            .map(|j| AbilityEntry {
                model_index: j,
                theta: params.theta[j],
                ability: 1.0 - params.theta[j],
            })
            .collect(),
        items: (0..params.bands())
            .map(|i| ItemEntry {
                item_index: i,
                delta: params.delta[i],
                discrimination: params.discrimination(i),
                extrapolated: params.extrapolated_items.contains(&i),
            })
            .collect(),
    }
}
