//! Blend of the LSTM forecast with a linear weather model:
//! `y = α · y_lstm + (1 − α) · (x_w · w + b)`, evaluated by relative mean
//! absolute error and tuned by sweeping α on a validation split.

use crate::checkpoint::{ModelCheckpoint, ModelKind};
use crate::error::{Error, Result};
use crate::lstm::{
    check_sequence, forward_backward, lstm_sequence_forward, normalize_window, read_lstm_tensors, read_minmax, train_lstm,
    write_lstm_tensors, LstmConfig, LstmParams, MinMax, SequenceWindow,
};
use crate::nn::gradcheck::Differentiable;
use crate::nn::{AdamConfig, AdamState, LayerParams, Tensor};
use crate::seed::rng_for;
use crate::train::{fit, Objective};

pub const WEATHER_FEATURES: usize = 6;
pub const WEATHER_FEATURE_NAMES: [&str; WEATHER_FEATURES] =
    ["temperature", "humidity", "precipitation", "wind_speed", "wind_dir_sin", "wind_dir_cos"];

/// Weather at the forecast hour. Wind direction is stored as (sin, cos).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherVector {
    pub features: [f64; WEATHER_FEATURES],
}

impl WeatherVector {
    pub fn from_raw(temperature: f64, humidity: f64, precipitation: f64, wind_speed: f64, wind_direction_deg: f64) -> Self {
        let (s, c) = wind_direction_deg.to_radians().sin_cos();
        Self { features: [temperature, humidity, precipitation, wind_speed, s, c] }
    }

    /// Wind direction in degrees `[0, 360)` recovered from the (sin, cos) pair.
    pub fn wind_direction_deg(&self) -> f64 {
        self.features[4].atan2(self.features[5]).to_degrees().rem_euclid(360.0)
    }
}

impl Default for WeatherVector {
    fn default() -> Self {
        Self::from_raw(0.0, 0.0, 0.0, 0.0, 0.0)
    }
}

/// Per-feature z-scoring fitted on training windows; zero spread maps to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherNorm {
    pub mean: [f64; WEATHER_FEATURES],
    pub std: [f64; WEATHER_FEATURES],
}

impl WeatherNorm {
    pub fn fit(windows: &[SequenceWindow]) -> Self {
        let n = windows.len().max(1) as f64;
        let mut mean = [0.0; WEATHER_FEATURES];
        let mut std = [0.0; WEATHER_FEATURES];
        for k in 0..WEATHER_FEATURES {
            mean[k] = windows.iter().map(|w| w.weather.features[k]).sum::<f64>() / n;
            let var = windows.iter().map(|w| (w.weather.features[k] - mean[k]).powi(2)).sum::<f64>() / n;
            std[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, w: &WeatherVector) -> WeatherVector {
        let mut features = w.features;
        for (k, f) in features.iter_mut().enumerate() {
            *f = (*f - self.mean[k]) / self.std[k];
        }
        WeatherVector { features }
    }
}

/// The weather branch: linear by default, optionally with one ReLU hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherParams {
    pub hidden: Option<LayerParams>,
    pub w: Tensor,
    pub b: Tensor,
}

impl WeatherParams {
    pub fn zeros(hidden: Option<usize>) -> Self {
        let width = hidden.unwrap_or(WEATHER_FEATURES);
        Self {
            hidden: hidden.map(|h| LayerParams { weight: Tensor::zeros(&[WEATHER_FEATURES, h]), bias: Tensor::zeros(&[h]) }),
            w: Tensor::zeros(&[width]),
            b: Tensor::zeros(&[1]),
        }
    }

    fn init(hidden: Option<usize>, seed: u64) -> Self {
        let mut rng = rng_for(seed, "hybrid.weather.init");
        let mut p = Self::zeros(hidden);
        if let Some(h) = hidden {
            p.hidden = Some(LayerParams::dense(WEATHER_FEATURES, h, &mut rng));
            p.w = LayerParams::dense(h, 1, &mut rng).weight.reshape(&[h]).expect("h values");
        }
        p
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        if let Some(h) = &self.hidden {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out.push(&self.w);
        out.push(&self.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if let Some(h) = &mut self.hidden {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out.push(&mut self.w);
        out.push(&mut self.b);
        out
    }

    fn hidden_activations(&self, x: &[f64; WEATHER_FEATURES]) -> Option<Vec<f64>> {
        self.hidden.as_ref().map(|layer| {
            let width = layer.bias.len();
            let wd = layer.weight.data();
            let mut a = layer.bias.data().to_vec();
            for (i, xv) in x.iter().enumerate() {
                for (av, wv) in a.iter_mut().zip(&wd[i * width..(i + 1) * width]) {
                    *av += xv * wv;
                }
            }
            a.iter_mut().for_each(|v| *v = v.max(0.0));
            a
        })
    }

    /// `x · w + b` (through the hidden layer when present).
    pub fn forward(&self, x: &WeatherVector) -> f64 {
        let hidden = self.hidden_activations(&x.features);
        let input: &[f64] = hidden.as_deref().unwrap_or(&x.features);
        let mut y = self.b.data()[0];
        for (w, v) in self.w.data().iter().zip(input) {
            y += w * v;
        }
        y
    }

    fn backward(&self, x: &WeatherVector, dy: f64, grads: &mut WeatherParams) {
        let hidden = self.hidden_activations(&x.features);
        let input: &[f64] = hidden.as_deref().unwrap_or(&x.features);
        grads.b.data_mut()[0] += dy;
        for (g, v) in grads.w.data_mut().iter_mut().zip(input) {
            *g += dy * v;
        }
        if let (Some(layer), Some(act), Some(glayer)) = (&self.hidden, &hidden, &mut grads.hidden) {
            let width = layer.bias.len();
            let dz: Vec<f64> =
                self.w.data().iter().zip(act).map(|(w, a)| if *a > 0.0 { dy * w } else { 0.0 }).collect();
            for (g, d) in glayer.bias.data_mut().iter_mut().zip(&dz) {
                *g += d;
            }
            let gw = glayer.weight.data_mut();
            for (i, xv) in x.features.iter().enumerate() {
                for (g, d) in gw[i * width..(i + 1) * width].iter_mut().zip(&dz) {
                    *g += xv * d;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridParams {
    pub lstm: LstmParams,
    pub weather: WeatherParams,
    pub alpha: f64,
}

impl HybridParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.lstm.tensors();
        out.extend(self.weather.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.lstm.tensors_mut();
        out.extend(self.weather.tensors_mut());
        out
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Blended forecast on a normalized window. At α = 1 (resp. 0) only the LSTM
/// (resp. weather) branch is evaluated, so the endpoints are exact.
pub fn hybrid_predict(window: &SequenceWindow, params: &HybridParams) -> Result<f64> {
    let alpha = params.alpha;
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return lstm_sequence_forward(window, &params.lstm);
    }
    let linear = params.weather.forward(&window.weather);
    if alpha == 0.0 {
        return Ok(linear);
    }
    Ok(alpha * lstm_sequence_forward(window, &params.lstm)? + (1.0 - alpha) * linear)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmae {
    pub value: f64,
    /// Entries skipped because their target was zero.
    pub excluded: usize,
}

/// Mean of `|y − ŷ| / |y|` over entries with non-zero `y`.
pub fn rmae(y_true: &[f64], y_pred: &[f64]) -> Result<Rmae> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for (&y, &p) in y_true.iter().zip(y_pred) {
        if y == 0.0 {
            continue;
        }
        total += ((y - p) / y).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllTargetsZero);
    }
    Ok(Rmae { value: total / used as f64, excluded: y_true.len() - used })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HybridConfig {
    pub lstm: LstmConfig,
    /// Width of an optional ReLU hidden layer in the weather branch.
    pub weather_hidden: Option<usize>,
    /// Train the LSTM and weather branches separately, then blend.
    pub staged: bool,
}

/// Mean squared error of the blended forecast over normalized windows.
pub struct HybridObjective {
    pub params: HybridParams,
    pub windows: Vec<SequenceWindow>,
}

impl HybridObjective {
    fn loss_grad(&self, batch: &[usize]) -> Result<(f64, HybridParams)> {
        let p = &self.params;
        let alpha = p.alpha;
        let mut grads = HybridParams {
            lstm: p.lstm.zeros_like(),
            weather: WeatherParams::zeros(p.weather.hidden.as_ref().map(|h| h.bias.len())),
            alpha,
        };
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let w = &self.windows[i];
            let linear = if alpha < 1.0 { p.weather.forward(&w.weather) } else { 0.0 };
            let blend = |y_lstm: f64| if alpha == 1.0 { y_lstm } else { alpha * y_lstm + (1.0 - alpha) * linear };
            let mut dy = 0.0;
            let y = if alpha > 0.0 {
                check_sequence(&w.inputs, &p.lstm)?;
                let y_lstm = forward_backward(
                    &w.inputs,
                    &p.lstm,
                    |y_lstm| {
                        dy = 2.0 * (blend(y_lstm) - w.target) / n;
                        alpha * dy
                    },
                    &mut grads.lstm,
                );
                blend(y_lstm)
            } else {
                dy = 2.0 * (linear - w.target) / n;
                linear
            };
            let e = y - w.target;
            loss += e * e;
            if alpha < 1.0 {
                p.weather.backward(&w.weather, (1.0 - alpha) * dy, &mut grads.weather);
            }
        }
        Ok((loss / n, grads))
    }
}

impl Objective for HybridObjective {
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

impl Differentiable for HybridObjective {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.tensors_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for w in &self.windows {
            let e = hybrid_predict(w, &self.params)? - w.target;
            total += e * e;
        }
        Ok(total / self.windows.len() as f64)
    }

    fn gradients(&mut self) -> Result<Vec<Tensor>> {
        let all: Vec<usize> = (0..self.windows.len()).collect();
        Objective::batch_loss_grad(self, &all).map(|(_, g)| g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub config: HybridConfig,
    pub params: HybridParams,
    pub scaler: MinMax,
    pub weather_norm: WeatherNorm,
    pub loss_history: Vec<f64>,
}

impl HybridModel {
    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    fn normalize(&self, w: &SequenceWindow) -> SequenceWindow {
        let mut n = normalize_window(w, &self.scaler);
        n.weather = self.weather_norm.apply(&w.weather);
        n
    }

    /// Forecast in original units from a raw window.
    pub fn predict(&self, window: &SequenceWindow) -> Result<f64> {
        Ok(self.scaler.denormalize(hybrid_predict(&self.normalize(window), &self.params)?))
    }

    pub fn evaluate_rmae(&self, windows: &[SequenceWindow]) -> Result<f64> {
        let preds = windows.iter().map(|w| self.predict(w)).collect::<Result<Vec<_>>>()?;
        let truth: Vec<f64> = windows.iter().map(|w| w.target).collect();
        Ok(rmae(&truth, &preds)?.value)
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        let mut ck = ModelCheckpoint::new(ModelKind::Hybrid, self.config.lstm.seed);
        self.config.lstm.write_to(&mut ck);
        ck.set_config("alpha", self.params.alpha);
        ck.set_config("weather_hidden", self.config.weather_hidden.unwrap_or(0));
        ck.set_config("staged", self.config.staged);
        ck.set_stat("series_minmax", vec![self.scaler.min, self.scaler.max]);
        ck.set_stat("weather_mean", self.weather_norm.mean.to_vec());
        ck.set_stat("weather_std", self.weather_norm.std.to_vec());
        ck.set_stat("history_train_loss", self.loss_history.clone());
        write_lstm_tensors(&self.params.lstm, "lstm.", &mut ck);
        if let Some(h) = &self.params.weather.hidden {
            ck.push_tensor("weather.hidden_w", h.weight.clone());
            ck.push_tensor("weather.hidden_b", h.bias.clone());
        }
        ck.push_tensor("weather.w", self.params.weather.w.clone());
        ck.push_tensor("weather.b", self.params.weather.b.clone());
        ck
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        ck.expect_kind(ModelKind::Hybrid)?;
        let lstm_config = LstmConfig::read_from(ck)?;
        let alpha: f64 = ck.config_value("alpha")?;
        check_alpha(alpha)?;
        let hidden: usize = ck.config_value("weather_hidden")?;
        let weather_hidden = (hidden > 0).then_some(hidden);
        let lstm = read_lstm_tensors(ck, "lstm.", lstm_config.hidden)?;
        let mut weather = WeatherParams::zeros(weather_hidden);
        if let Some(h) = &mut weather.hidden {
            h.weight = ck.tensor("weather.hidden_w")?.clone();
            h.bias = ck.tensor("weather.hidden_b")?.clone();
        }
        weather.w = ck.tensor("weather.w")?.clone();
        weather.b = ck.tensor("weather.b")?.clone();
        let expected = WeatherParams::zeros(weather_hidden);
        for (a, b) in weather.tensors().into_iter().zip(expected.tensors()) {
            a.check_same_shape(b)?;
        }
        let array = |name: &str| -> Result<[f64; WEATHER_FEATURES]> {
            ck.stat(name)?
                .try_into()
                .map_err(|_| Error::MalformedCheckpoint(format!("{name} must hold {WEATHER_FEATURES} values")))
        };
        Ok(Self {
            config: HybridConfig { lstm: lstm_config, weather_hidden, staged: ck.config_value("staged")? },
            params: HybridParams { lstm, weather, alpha },
            scaler: read_minmax(ck)?,
            weather_norm: WeatherNorm { mean: array("weather_mean")?, std: array("weather_std")? },
            loss_history: ck.stat("history_train_loss")?.to_vec(),
        })
    }
}

fn train_joint(
    normalized: Vec<SequenceWindow>,
    lstm: LstmParams,
    weather: WeatherParams,
    alpha: f64,
    config: &LstmConfig,
) -> Result<(HybridParams, Vec<f64>)> {
    let mut objective = HybridObjective { params: HybridParams { lstm, weather, alpha }, windows: normalized };
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), Objective::parameters(&objective));
    let history = fit(&mut objective, &mut adam, &config.fit_settings())?;
    Ok((objective.params, history))
}

/// Trains the blend with α held fixed. Joint by default; with `staged` the LSTM
/// is trained alone, the weather branch alone, and the two are then blended.
pub fn train_hybrid(windows: &[SequenceWindow], alpha: f64, config: &HybridConfig) -> Result<HybridModel> {
    check_alpha(alpha)?;
    config.lstm.validate()?;
    if windows.len() < 2 {
        return Err(Error::EmptyDataset(format!("need at least 2 windows, got {}", windows.len())));
    }
    let scaler = MinMax::fit_windows(windows);
    let weather_norm = WeatherNorm::fit(windows);
    let normalized: Vec<SequenceWindow> = windows
        .iter()
        .map(|w| {
            let mut n = normalize_window(w, &scaler);
            n.weather = weather_norm.apply(&w.weather);
            n
        })
        .collect();
    let init_lstm = LstmParams::init(1, config.lstm.hidden, &mut rng_for(config.lstm.seed, "lstm.init"));
    let init_weather = WeatherParams::init(config.weather_hidden, config.lstm.seed);

    let (params, loss_history) = if config.staged {
        let lstm = train_lstm(windows, &config.lstm)?.params;
        let (weather_only, history) = train_joint(normalized, init_lstm, init_weather, 0.0, &config.lstm)?;
        (HybridParams { lstm, weather: weather_only.weather, alpha }, history)
    } else {
        train_joint(normalized, init_lstm, init_weather, alpha, &config.lstm)?
    };
    Ok(HybridModel { config: config.clone(), params, scaler, weather_norm, loss_history })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub val_rmae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_alpha: f64,
}

impl SweepResult {
    pub fn best(&self) -> SweepRow {
        *self.rows.iter().find(|r| r.alpha == self.best_alpha).expect("best alpha is a row")
    }
}

/// α = 0.0, 0.1, …, 1.0.
pub fn default_alphas() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Parses `lo:hi:step` into an inclusive grid, rounded to 12 decimals.
pub fn parse_alpha_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad alpha range '{spec}', expected lo:hi:step")))?;
    let [lo, hi, step] = parts[..] else {
        return Err(Error::InvalidArgument(format!("bad alpha range '{spec}', expected lo:hi:step")));
    };
    if !(step > 0.0) || hi < lo {
        return Err(Error::InvalidArgument(format!("bad alpha range '{spec}'")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let alphas: Vec<f64> = (0..=n).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect();
    for &a in &alphas {
        check_alpha(a)?;
    }
    Ok(alphas)
}

/// Trains one model per α (shared seed) and scores each on the validation windows.
pub fn alpha_sweep(
    train: &[SequenceWindow],
    val: &[SequenceWindow],
    alphas: &[f64],
    config: &HybridConfig,
) -> Result<SweepResult> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let model = train_hybrid(train, alpha, config)?;
        let val_rmae = model.evaluate_rmae(val)?;
        log::info!("alpha {alpha:.2}: validation rmae {val_rmae:.6}");
        rows.push(SweepRow { alpha, val_rmae });
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.val_rmae.total_cmp(&b.val_rmae).then(a.alpha.total_cmp(&b.alpha)))
        .expect("non-empty");
    Ok(SweepResult { best_alpha: best.alpha, rows })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::finite_diff_check;

    fn random_params(seed: u64, alpha: f64, hidden: Option<usize>) -> HybridParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = LstmParams::init(1, 3, &mut rng);
        let mut weather = WeatherParams::init(hidden, seed);
        for t in weather.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
        HybridParams { lstm, weather, alpha }
    }

    fn window(seed: u64) -> SequenceWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SequenceWindow {
            inputs: (0..5).map(|_| rng.random_range(0.0..1.0)).collect(),
            target: rng.random_range(0.0..1.0),
            weather: WeatherVector { features: std::array::from_fn(|_| rng.random_range(-2.0..2.0)) },
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let w = window(1);
        let p1 = random_params(2, 1.0, None);
        assert_eq!(hybrid_predict(&w, &p1).unwrap().to_bits(), lstm_sequence_forward(&w, &p1.lstm).unwrap().to_bits());
        let p0 = HybridParams { alpha: 0.0, ..p1.clone() };
        assert_eq!(hybrid_predict(&w, &p0).unwrap(), p0.weather.forward(&w.weather));

        // α = 0.5 with y_lstm = 4 and linear term 2
        let mut lstm = LstmParams::zeros(1, 1);
        lstm.head_b.data_mut()[0] = 4.0;
        let mut weather = WeatherParams::zeros(None);
        weather.b.data_mut()[0] = 2.0;
        let p = HybridParams { lstm, weather, alpha: 0.5 };
        assert_eq!(hybrid_predict(&w, &p).unwrap(), 3.0);
        assert!(matches!(hybrid_predict(&w, &HybridParams { alpha: 1.5, ..p }), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn rmae_examples() {
        assert_eq!(rmae(&[3.0, 4.0], &[3.0, 4.0]).unwrap().value, 0.0);
        assert_eq!(rmae(&[10.0], &[9.0]).unwrap(), Rmae { value: 0.1, excluded: 0 });
        assert_eq!(rmae(&[0.0, 10.0], &[1.0, 9.0]).unwrap(), Rmae { value: 0.1, excluded: 1 });
        assert!(matches!(rmae(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(rmae(&[0.0], &[1.0]), Err(Error::AllTargetsZero)));
        assert!(matches!(rmae(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn wind_encoding_is_on_unit_circle() {
        for deg in [0.0, 45.0, 181.0, 359.5] {
            let w = WeatherVector::from_raw(10.0, 50.0, 0.0, 3.0, deg);
            assert!((w.features[4].powi(2) + w.features[5].powi(2) - 1.0).abs() < 1e-9);
            assert!((w.wind_direction_deg() - deg).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_zero_freezes_lstm_and_alpha_one_freezes_weather() {
        let windows: Vec<SequenceWindow> = (0..4).map(window).collect();
        let obj = HybridObjective { params: random_params(5, 0.0, None), windows: windows.clone() };
        let (_, g) = obj.loss_grad(&[0, 1, 2, 3]).unwrap();
        assert!(g.lstm.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.weather.w.data().iter().any(|&v| v != 0.0));

        let obj = HybridObjective { params: random_params(5, 1.0, None), windows };
        let (_, g) = obj.loss_grad(&[0, 1, 2, 3]).unwrap();
        assert!(g.weather.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.lstm.head_w.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn hybrid_gradients_match_finite_differences() {
        for (alpha, hidden) in [(0.3, None), (0.7, Some(3))] {
            let windows: Vec<SequenceWindow> = (10..13).map(window).collect();
            let mut obj = HybridObjective { params: random_params(8, alpha, hidden), windows };
            let report = finite_diff_check(&mut obj, 1e-5).unwrap();
            assert!(report.passed(), "alpha {alpha}: worst {:?}", report.worst());
        }
    }

    #[test]
    fn alpha_grid_parsing() {
        let grid = parse_alpha_range("0.0:1.0:0.1").unwrap();
        assert_eq!(grid, default_alphas());
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[3], 0.3);
        assert!(parse_alpha_range("0:2:0.5").is_err());
        assert!(parse_alpha_range("0:1").is_err());
        assert!(parse_alpha_range("0:1:0").is_err());
    }

    #[test]
    fn checkpoint_round_trip_with_hidden_layer() {
        let series: Vec<f64> = (0..30).map(|t| 20.0 + (t as f64).cos() * 4.0).collect();
        let weather: Vec<WeatherVector> =
            (0..30).map(|t| WeatherVector::from_raw(t as f64, 50.0, 0.0, 2.0, 10.0 * t as f64)).collect();
        let windows = crate::lstm::build_windows_with_weather(&series, Some(&weather), 4).unwrap();
        let config = HybridConfig {
            lstm: LstmConfig { window: 4, hidden: 3, epochs: 2, batch_size: 8, learning_rate: 1e-2, seed: 3 },
            weather_hidden: Some(4),
            staged: false,
        };
        let model = train_hybrid(&windows, 0.4, &config).unwrap();
        let restored = HybridModel::from_checkpoint(&ModelCheckpoint::from_text(&model.to_checkpoint().to_text()).unwrap()).unwrap();
        assert_eq!(restored, model);
        for w in &windows {
            assert_eq!(restored.predict(w).unwrap().to_bits(), model.predict(w).unwrap().to_bits());
        }
        let staged = train_hybrid(&windows, 0.4, &HybridConfig { staged: true, ..config.clone() }).unwrap();
        assert_eq!(staged.alpha(), 0.4);
        assert!(matches!(train_hybrid(&windows, -0.1, &config), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(train_hybrid(&windows[..1], 0.5, &config), Err(Error::EmptyDataset(_))));
    }

    proptest! {
        #[test]
        fn prediction_is_affine_in_alpha(seed in 0u64..1000) {
            let w = window(seed);
            let at = |alpha| hybrid_predict(&w, &HybridParams { alpha, ..random_params(seed, alpha, None) }).unwrap();
            let (p0, p25, p5) = (at(0.0), at(0.25), at(0.5));
            prop_assert!((p25 - 0.5 * (p0 + p5)).abs() < 1e-12);
        }

        #[test]
        fn rmae_is_scale_invariant(
            pairs in proptest::collection::vec((1.0f64..100.0, 0.0f64..100.0), 1..30),
            c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            let a = rmae(&y, &p).unwrap().value;
            let b = rmae(&ys, &ps).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
