//! LSTM forecaster for hourly pollution series.
//!
//! Gates follow the usual formulation: logistic forget/input/output gates,
//! a tanh cell candidate and `h = o ∘ tanh(c)`. A linear head on the final
//! hidden state produces the scalar forecast.

use rand::Rng;

use crate::checkpoint::{ModelCheckpoint, ModelKind};
use crate::error::{Error, Result};
use crate::hybrid::{rmae, WeatherVector};
use crate::nn::gradcheck::Differentiable;
use crate::nn::{AdamConfig, AdamState, Tensor};
use crate::seed::rng_for;
use crate::train::{fit, FitSettings, Objective};

/// Gate order used in every per-gate array: forget, input, output, candidate.
pub const GATES: [&str; 4] = ["f", "i", "o", "c"];
const F: usize = 0;
const I: usize = 1;
const O: usize = 2;
const C: usize = 3;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden: usize,
    /// Input weights per gate, `hidden x input_size`.
    pub w: [Tensor; 4],
    /// Recurrent weights per gate, `hidden x hidden`.
    pub u: [Tensor; 4],
    pub b: [Tensor; 4],
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            input_size,
            hidden,
            w: std::array::from_fn(|_| Tensor::zeros(&[hidden, input_size])),
            u: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
            head_w: Tensor::zeros(&[hidden]),
            head_b: Tensor::zeros(&[1]),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate at +1.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden);
        let mut fill = |t: &mut Tensor, fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-s..=s));
        };
        for g in 0..4 {
            fill(&mut p.w[g], input_size, hidden);
            fill(&mut p.u[g], hidden, hidden);
        }
        fill(&mut p.head_w, hidden, 1);
        p.b[F].fill(1.0);
        p
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::with_capacity(14);
        out.extend(self.w.iter());
        out.extend(self.u.iter());
        out.extend(self.b.iter());
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(14);
        out.extend(self.w.iter_mut());
        out.extend(self.u.iter_mut());
        out.extend(self.b.iter_mut());
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn tensor_names() -> Vec<String> {
        let mut names = Vec::with_capacity(14);
        for kind in ["w", "u", "b"] {
            names.extend(GATES.iter().map(|g| format!("{kind}_{g}")));
        }
        names.push("head_w".into());
        names.push("head_b".into());
        names
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden)
    }

    fn check(&self) -> Result<()> {
        let (h, n) = (self.hidden, self.input_size);
        let ok = self.w.iter().all(|t| t.shape() == [h, n])
            && self.u.iter().all(|t| t.shape() == [h, h])
            && self.b.iter().all(|t| t.shape() == [h])
            && self.head_w.shape() == [h]
            && self.head_b.shape() == [1];
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("lstm parameters inconsistent with input {n}, hidden {h}")))
        }
    }

    /// Appends `extra` hidden units with all-zero weights; the forecast is unchanged.
    pub fn pad_hidden(&self, extra: usize) -> Self {
        let (h, n) = (self.hidden, self.input_size);
        let nh = h + extra;
        let mut p = Self::zeros(n, nh);
        for g in 0..4 {
            p.w[g].data_mut()[..h * n].copy_from_slice(self.w[g].data());
            p.b[g].data_mut()[..h].copy_from_slice(self.b[g].data());
            for r in 0..h {
                p.u[g].data_mut()[r * nh..r * nh + h].copy_from_slice(&self.u[g].data()[r * h..(r + 1) * h]);
            }
        }
        p.head_w.data_mut()[..h].copy_from_slice(self.head_w.data());
        p.head_b = self.head_b.clone();
        p
    }

    /// Keeps the first `hidden` units.
    pub fn trim_hidden(&self, hidden: usize) -> Self {
        let (h, n) = (self.hidden, self.input_size);
        let hidden = hidden.min(h);
        let mut p = Self::zeros(n, hidden);
        for g in 0..4 {
            p.w[g].data_mut().copy_from_slice(&self.w[g].data()[..hidden * n]);
            p.b[g].data_mut().copy_from_slice(&self.b[g].data()[..hidden]);
            for r in 0..hidden {
                p.u[g].data_mut()[r * hidden..(r + 1) * hidden].copy_from_slice(&self.u[g].data()[r * h..r * h + hidden]);
            }
        }
        p.head_w.data_mut().copy_from_slice(&self.head_w.data()[..hidden]);
        p.head_b = self.head_b.clone();
        p
    }
}

/// Activations of one time step, kept for backpropagation.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

fn step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams) -> StepCache {
    let (h, n) = (p.hidden, p.input_size);
    let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
        let w = p.w[g].data();
        let u = p.u[g].data();
        let b = p.b[g].data();
        (0..h)
            .map(|r| {
                let mut z = b[r];
                for (wv, xv) in w[r * n..(r + 1) * n].iter().zip(x) {
                    z += wv * xv;
                }
                for (uv, hv) in u[r * h..(r + 1) * h].iter().zip(h_prev) {
                    z += uv * hv;
                }
                if g == C {
                    z.tanh()
                } else {
                    sigmoid(z)
                }
            })
            .collect()
    });
    let c: Vec<f64> = (0..h).map(|r| gates[F][r] * c_prev[r] + gates[I][r] * gates[C][r]).collect();
    let tanh_c = c.iter().map(|v| v.tanh()).collect();
    StepCache { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), gates, tanh_c }
}

impl StepCache {
    fn h(&self) -> Vec<f64> {
        self.gates[O].iter().zip(&self.tanh_c).map(|(o, t)| o * t).collect()
    }

    fn c(&self) -> Vec<f64> {
        (0..self.c_prev.len())
            .map(|r| self.gates[F][r] * self.c_prev[r] + self.gates[I][r] * self.gates[C][r])
            .collect()
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check()?;
    if x.len() != params.input_size || h_prev.len() != params.hidden || c_prev.len() != params.hidden {
        return Err(Error::ShapeMismatch(format!(
            "step inputs x={}, h={}, c={} for input {} hidden {}",
            x.len(),
            h_prev.len(),
            c_prev.len(),
            params.input_size,
            params.hidden
        )));
    }
    let cache = step(x, h_prev, c_prev, params);
    Ok((cache.h(), cache.c()))
}

/// Inputs of one forecast: `T` consecutive (normalized) hourly values, the
/// value of the following hour, and the weather at that hour.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub inputs: Vec<f64>,
    pub target: f64,
    pub weather: WeatherVector,
}

/// Sliding windows of length `window`; window `j` covers `[j, j + window)` and
/// targets `series[j + window]`.
pub fn build_windows(series: &[f64], window: usize) -> Result<Vec<SequenceWindow>> {
    build_windows_with_weather(series, None, window)
}

/// Like [`build_windows`], attaching `weather[j + window]` to window `j`.
pub fn build_windows_with_weather(
    series: &[f64],
    weather: Option<&[WeatherVector]>,
    window: usize,
) -> Result<Vec<SequenceWindow>> {
    if window == 0 || series.len() < window + 1 {
        return Err(Error::SeriesTooShort { len: series.len(), window });
    }
    if let Some(w) = weather {
        if w.len() != series.len() {
            return Err(Error::ShapeMismatch(format!("{} weather rows for {} series values", w.len(), series.len())));
        }
    }
    Ok((0..series.len() - window)
        .map(|j| SequenceWindow {
            inputs: series[j..j + window].to_vec(),
            target: series[j + window],
            weather: weather.map_or_else(WeatherVector::default, |w| w[j + window]),
        })
        .collect())
}

fn unroll(inputs: &[f64], p: &LstmParams) -> Vec<StepCache> {
    let mut h = vec![0.0; p.hidden];
    let mut c = vec![0.0; p.hidden];
    let mut caches = Vec::with_capacity(inputs.len() / p.input_size.max(1));
    for x in inputs.chunks(p.input_size) {
        let cache = step(x, &h, &c, p);
        h = cache.h();
        c = cache.c();
        caches.push(cache);
    }
    caches
}

fn head(h: &[f64], p: &LstmParams) -> f64 {
    let mut y = p.head_b.data()[0];
    for (w, v) in p.head_w.data().iter().zip(h) {
        y += w * v;
    }
    y
}

pub(crate) fn check_sequence(inputs: &[f64], p: &LstmParams) -> Result<()> {
    p.check()?;
    if inputs.is_empty() || p.input_size == 0 || !inputs.len().is_multiple_of(p.input_size) {
        return Err(Error::ShapeMismatch(format!(
            "sequence of {} values is not a whole number of {}-wide steps",
            inputs.len(),
            p.input_size
        )));
    }
    Ok(())
}

/// Unrolls the window from a zero state and applies the linear head.
pub fn lstm_sequence_forward(window: &SequenceWindow, params: &LstmParams) -> Result<f64> {
    check_sequence(&window.inputs, params)?;
    let caches = unroll(&window.inputs, params);
    Ok(head(&caches.last().expect("non-empty").h(), params))
}

/// Forward pass plus backpropagation through time of `dy * y`; gradients are
/// accumulated into `grads`. Returns the forecast `y`.
pub(crate) fn forward_backward(inputs: &[f64], p: &LstmParams, dy_of: impl FnOnce(f64) -> f64, grads: &mut LstmParams) -> f64 {
    let caches = unroll(inputs, p);
    let (h, n) = (p.hidden, p.input_size);
    let h_last = caches.last().expect("non-empty").h();
    let y = head(&h_last, p);
    let dy = dy_of(y);

    grads.head_b.data_mut()[0] += dy;
    for (g, v) in grads.head_w.data_mut().iter_mut().zip(&h_last) {
        *g += dy * v;
    }
    let mut dh: Vec<f64> = p.head_w.data().iter().map(|w| w * dy).collect();
    let mut dc = vec![0.0; h];
    let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
    for cache in caches.iter().rev() {
        let [f, i, o, g] = &cache.gates;
        for r in 0..h {
            let t = cache.tanh_c[r];
            let d_o = dh[r] * t;
            dc[r] += dh[r] * o[r] * (1.0 - t * t);
            let d_f = dc[r] * cache.c_prev[r];
            let d_i = dc[r] * g[r];
            let d_g = dc[r] * i[r];
            dz[F][r] = d_f * f[r] * (1.0 - f[r]);
            dz[I][r] = d_i * i[r] * (1.0 - i[r]);
            dz[O][r] = d_o * o[r] * (1.0 - o[r]);
            dz[C][r] = d_g * (1.0 - g[r] * g[r]);
            dc[r] *= f[r];
        }
        let mut dh_prev = vec![0.0; h];
        for k in 0..4 {
            let gw = grads.w[k].data_mut();
            for r in 0..h {
                for (gv, xv) in gw[r * n..(r + 1) * n].iter_mut().zip(&cache.x) {
                    *gv += dz[k][r] * xv;
                }
            }
            let gu = grads.u[k].data_mut();
            for r in 0..h {
                for (gv, hv) in gu[r * h..(r + 1) * h].iter_mut().zip(&cache.h_prev) {
                    *gv += dz[k][r] * hv;
                }
            }
            for (gv, d) in grads.b[k].data_mut().iter_mut().zip(&dz[k]) {
                *gv += d;
            }
            let u = p.u[k].data();
            for r in 0..h {
                let d = dz[k][r];
                if d != 0.0 {
                    for (acc, uv) in dh_prev.iter_mut().zip(&u[r * h..(r + 1) * h]) {
                        *acc += d * uv;
                    }
                }
            }
        }
        dh = dh_prev;
    }
    y
}

/// Min-max scaling fitted on training data; a constant series maps to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self { min, max }
    }

    fn range(&self) -> f64 {
        let r = self.max - self.min;
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / self.range()
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.range() + self.min
    }

    /// Fits on every input and target value of the windows.
    pub fn fit_windows(windows: &[SequenceWindow]) -> Self {
        Self::fit(windows.iter().flat_map(|w| w.inputs.iter().chain(std::iter::once(&w.target))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmConfig {
    pub window: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self { window: 24, hidden: 128, epochs: 100, batch_size: 32, learning_rate: 1e-3, seed: 0 }
    }
}

impl LstmConfig {
    pub(crate) fn fit_settings(&self) -> FitSettings {
        FitSettings { epochs: self.epochs, batch_size: self.batch_size, seed: self.seed }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid lstm config {self:?}")));
        }
        if !(128..=512).contains(&self.hidden) {
            log::info!("lstm hidden size {} is outside the usual 128-512 range", self.hidden);
        }
        Ok(())
    }

    pub(crate) fn write_to(&self, ck: &mut ModelCheckpoint) {
        ck.set_config("window", self.window);
        ck.set_config("hidden", self.hidden);
        ck.set_config("epochs", self.epochs);
        ck.set_config("batch_size", self.batch_size);
        ck.set_config("learning_rate", self.learning_rate);
    }

    pub(crate) fn read_from(ck: &ModelCheckpoint) -> Result<Self> {
        Ok(Self {
            window: ck.config_value("window")?,
            hidden: ck.config_value("hidden")?,
            epochs: ck.config_value("epochs")?,
            batch_size: ck.config_value("batch_size")?,
            learning_rate: ck.config_value("learning_rate")?,
            seed: ck.seed,
        })
    }
}

pub(crate) fn write_lstm_tensors(p: &LstmParams, prefix: &str, ck: &mut ModelCheckpoint) {
    for (name, t) in LstmParams::tensor_names().iter().zip(p.tensors()) {
        ck.push_tensor(&format!("{prefix}{name}"), t.clone());
    }
}

pub(crate) fn read_lstm_tensors(ck: &ModelCheckpoint, prefix: &str, hidden: usize) -> Result<LstmParams> {
    let mut p = LstmParams::zeros(1, hidden);
    for (name, t) in LstmParams::tensor_names().iter().zip(p.tensors_mut()) {
        let stored = ck.tensor(&format!("{prefix}{name}"))?;
        t.check_same_shape(stored)?;
        *t = stored.clone();
    }
    Ok(p)
}

/// Trained standalone forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: LstmParams,
    pub scaler: MinMax,
    /// Mean training loss per epoch (normalized units).
    pub loss_history: Vec<f64>,
}

impl LstmModel {
    /// Forecast in original units from raw (unnormalized) inputs.
    pub fn predict(&self, window: &SequenceWindow) -> Result<f64> {
        let norm = normalize_window(window, &self.scaler);
        Ok(self.scaler.denormalize(lstm_sequence_forward(&norm, &self.params)?))
    }

    pub fn evaluate_rmae(&self, windows: &[SequenceWindow]) -> Result<f64> {
        let preds = windows.iter().map(|w| self.predict(w)).collect::<Result<Vec<_>>>()?;
        let truth: Vec<f64> = windows.iter().map(|w| w.target).collect();
        Ok(rmae(&truth, &preds)?.value)
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        let mut ck = ModelCheckpoint::new(ModelKind::Lstm, self.config.seed);
        self.config.write_to(&mut ck);
        ck.set_stat("series_minmax", vec![self.scaler.min, self.scaler.max]);
        ck.set_stat("history_train_loss", self.loss_history.clone());
        write_lstm_tensors(&self.params, "lstm.", &mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        ck.expect_kind(ModelKind::Lstm)?;
        let config = LstmConfig::read_from(ck)?;
        let params = read_lstm_tensors(ck, "lstm.", config.hidden)?;
        Ok(Self {
            config,
            params,
            scaler: read_minmax(ck)?,
            loss_history: ck.stat("history_train_loss")?.to_vec(),
        })
    }
}

pub(crate) fn read_minmax(ck: &ModelCheckpoint) -> Result<MinMax> {
    match ck.stat("series_minmax")? {
        [min, max] => Ok(MinMax { min: *min, max: *max }),
        _ => Err(Error::MalformedCheckpoint("series_minmax must hold 2 values".into())),
    }
}

pub(crate) fn normalize_window(w: &SequenceWindow, scaler: &MinMax) -> SequenceWindow {
    SequenceWindow {
        inputs: w.inputs.iter().map(|&v| scaler.normalize(v)).collect(),
        target: scaler.normalize(w.target),
        weather: w.weather,
    }
}

/// Mean squared error of the LSTM forecast over a set of normalized windows.
pub struct LstmObjective {
    pub params: LstmParams,
    pub windows: Vec<SequenceWindow>,
}

impl LstmObjective {
    pub(crate) fn loss_grad(&self, batch: &[usize]) -> Result<(f64, LstmParams)> {
        let mut grads = self.params.zeros_like();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let w = &self.windows[i];
            check_sequence(&w.inputs, &self.params)?;
            forward_backward(
                &w.inputs,
                &self.params,
                |y| {
                    let e = y - w.target;
                    loss += e * e;
                    2.0 * e / n
                },
                &mut grads,
            );
        }
        Ok((loss / n, grads))
    }
}

impl Objective for LstmObjective {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn parameters(&self) -> Vec<&Tensor> {
        self.params.tensors()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.tensors_mut()
    }

    fn batch_loss_grad(&self, batch: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        let (loss, g) = self.loss_grad(batch)?;
        Ok((loss, g.tensors().into_iter().cloned().collect()))
    }
}

impl Differentiable for LstmObjective {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.tensors_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for w in &self.windows {
            let e = lstm_sequence_forward(w, &self.params)? - w.target;
            total += e * e;
        }
        Ok(total / self.windows.len() as f64)
    }

    fn gradients(&mut self) -> Result<Vec<Tensor>> {
        let all: Vec<usize> = (0..self.windows.len()).collect();
        Objective::batch_loss_grad(self, &all).map(|(_, g)| g)
    }
}

/// Backpropagation through time with Adam on the normalized MSE.
pub fn train_lstm(windows: &[SequenceWindow], config: &LstmConfig) -> Result<LstmModel> {
    config.validate()?;
    if windows.len() < 2 {
        return Err(Error::EmptyDataset(format!("need at least 2 windows, got {}", windows.len())));
    }
    let scaler = MinMax::fit_windows(windows);
    let normalized: Vec<SequenceWindow> = windows.iter().map(|w| normalize_window(w, &scaler)).collect();
    let params = LstmParams::init(1, config.hidden, &mut rng_for(config.seed, "lstm.init"));
    let mut objective = LstmObjective { params, windows: normalized };
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), Objective::parameters(&objective));
    let loss_history = fit(&mut objective, &mut adam, &config.fit_settings())?;
    Ok(LstmModel { config: config.clone(), params: objective.params, scaler, loss_history })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::finite_diff_check;

    #[test]
    fn zero_params_give_zero_state() {
        let p = LstmParams::zeros(3, 4);
        let (h, c) = lstm_cell_step(&[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn saturated_gates_keep_cell_state() {
        let mut p = LstmParams::zeros(1, 3);
        p.b[F].fill(20.0);
        p.b[I].fill(-20.0);
        let c_prev = [0.7, -0.4, 1.3];
        let (_, c) = lstm_cell_step(&[5.0], &[0.1, 0.2, 0.3], &c_prev, &p).unwrap();
        for (a, b) in c.iter().zip(c_prev) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let p = LstmParams::zeros(1, 2);
        assert!(matches!(lstm_cell_step(&[1.0, 2.0], &[0.0; 2], &[0.0; 2], &p), Err(Error::ShapeMismatch(_))));
        assert!(matches!(lstm_cell_step(&[1.0], &[0.0; 3], &[0.0; 2], &p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn window_counts() {
        let series: Vec<f64> = (0..26).map(f64::from).collect();
        assert_eq!(build_windows(&series, 24).unwrap().len(), 2);
        assert!(matches!(build_windows(&series[..24], 24), Err(Error::SeriesTooShort { len: 24, window: 24 })));
        let one = build_windows(&series[..25], 24).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].target, 24.0);
        assert_eq!(one[0].inputs, series[..24].to_vec());
    }

    #[test]
    fn zero_params_forecast_zero_and_repeat_calls_agree() {
        let w = SequenceWindow { inputs: vec![0.2, 0.5, 0.9], target: 0.0, weather: WeatherVector::default() };
        assert_eq!(lstm_sequence_forward(&w, &LstmParams::zeros(1, 5)).unwrap(), 0.0);
        let p = LstmParams::init(1, 5, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(lstm_sequence_forward(&w, &p).unwrap(), lstm_sequence_forward(&w, &p).unwrap());
    }

    #[test]
    fn padding_hidden_units_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmParams::init(1, 3, &mut rng);
        let w = SequenceWindow { inputs: vec![0.1, 0.7, 0.3, 0.9], target: 0.0, weather: WeatherVector::default() };
        let padded = p.pad_hidden(4);
        assert_eq!(padded.hidden, 7);
        assert_eq!(lstm_sequence_forward(&w, &padded).unwrap(), lstm_sequence_forward(&w, &p).unwrap());
        assert_eq!(padded.trim_hidden(3), p);
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p = LstmParams::init(1, 2, &mut rng);
        for t in p.tensors_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        let windows = vec![
            SequenceWindow { inputs: vec![0.3, -0.8, 0.5], target: 0.9, weather: WeatherVector::default() },
            SequenceWindow { inputs: vec![1.1, 0.2, -0.4], target: -0.3, weather: WeatherVector::default() },
        ];
        let mut obj = LstmObjective { params: p, windows };
        let report = finite_diff_check(&mut obj, 1e-5).unwrap();
        assert!(report.passed(), "worst {:?}", report.worst());
        assert_eq!(report.entries.len(), 4 * 2 + 4 * 4 + 4 * 2 + 2 + 1);
    }

    #[test]
    fn minmax_handles_constant_series() {
        let s = MinMax::fit(&[5.0, 5.0]);
        assert_eq!(s.normalize(5.0), 0.0);
        assert_eq!(s.denormalize(0.0), 5.0);
        let s = MinMax::fit(&[2.0, 6.0]);
        assert_eq!(s.normalize(4.0), 0.5);
        assert_eq!(s.denormalize(0.25), 3.0);
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let series: Vec<f64> = (0..40).map(|t| 30.0 + 5.0 * (t as f64 * 0.5).sin()).collect();
        let windows = build_windows(&series, 6).unwrap();
        let cfg = LstmConfig { window: 6, hidden: 4, epochs: 3, batch_size: 8, learning_rate: 1e-2, seed: 4 };
        let a = train_lstm(&windows, &cfg).unwrap();
        let b = train_lstm(&windows, &cfg).unwrap();
        assert_eq!(a, b);
        let ck = ModelCheckpoint::from_text(&a.to_checkpoint().to_text()).unwrap();
        let restored = LstmModel::from_checkpoint(&ck).unwrap();
        assert_eq!(restored, a);
        assert!(matches!(train_lstm(&windows[..1], &cfg), Err(Error::EmptyDataset(_))));
    }
}
