//! Two-conv, two-dense image classifier over pollution images.

use rand::seq::SliceRandom;

use crate::checkpoint::{ModelCheckpoint, ModelKind};
use crate::error::{Error, Result};
use crate::geogrid::PollutionImage;
use crate::labeling::AirQualityLabel;
use crate::nn::{one_hot, Activation, AdamConfig, AdamState, Layer, LayerParams, Network, Tensor};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub image_rows: usize,
    pub image_cols: usize,
    pub kernel: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub fc_width: usize,
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of samples held out for validation.
    pub val_ratio: f64,
    pub learning_rate: f64,
    /// Inverse-frequency class weights in the loss (off by default).
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            image_rows: 32,
            image_cols: 32,
            kernel: 3,
            conv1_filters: 32,
            conv2_filters: 64,
            fc_width: 128,
            classes: AirQualityLabel::COUNT,
            epochs: 100,
            batch_size: 64,
            val_ratio: 0.1,
            learning_rate: 1e-3,
            class_weighting: false,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("cnn config: {msg}")));
        if !self.image_rows.is_multiple_of(4) || !self.image_cols.is_multiple_of(4) || self.image_rows == 0 || self.image_cols == 0 {
            return bad("image sides must be positive multiples of 4 (two 2x pools)");
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel must be odd");
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.fc_width == 0 || self.classes < 2 {
            return bad("layer widths must be positive and classes >= 2");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.val_ratio) {
            return bad("val_ratio must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn flattened_width(&self) -> usize {
        (self.image_rows / 4) * (self.image_cols / 4) * self.conv2_filters
    }

    fn write_to(&self, ck: &mut ModelCheckpoint) {
        ck.set_config("image_rows", self.image_rows);
        ck.set_config("image_cols", self.image_cols);
        ck.set_config("kernel", self.kernel);
        ck.set_config("conv1_filters", self.conv1_filters);
        ck.set_config("conv2_filters", self.conv2_filters);
        ck.set_config("fc_width", self.fc_width);
        ck.set_config("classes", self.classes);
        ck.set_config("epochs", self.epochs);
        ck.set_config("batch_size", self.batch_size);
        ck.set_config("val_ratio", self.val_ratio);
        ck.set_config("learning_rate", self.learning_rate);
        ck.set_config("class_weighting", self.class_weighting);
    }

    fn read_from(ck: &ModelCheckpoint) -> Result<Self> {
        Ok(Self {
            image_rows: ck.config_value("image_rows")?,
            image_cols: ck.config_value("image_cols")?,
            kernel: ck.config_value("kernel")?,
            conv1_filters: ck.config_value("conv1_filters")?,
            conv2_filters: ck.config_value("conv2_filters")?,
            fc_width: ck.config_value("fc_width")?,
            classes: ck.config_value("classes")?,
            epochs: ck.config_value("epochs")?,
            batch_size: ck.config_value("batch_size")?,
            val_ratio: ck.config_value("val_ratio")?,
            learning_rate: ck.config_value("learning_rate")?,
            class_weighting: ck.config_value("class_weighting")?,
            seed: ck.seed,
        })
    }
}

const LAYER_NAMES: [&str; 4] = ["conv1", "conv2", "fc1", "fc2"];

/// conv → pool → conv → pool → flatten → dense(ReLU) → dense(logits).
pub fn build_cnn(config: &CnnConfig) -> Result<Network> {
    config.validate()?;
    let mut rng = rng_for(config.seed, "cnn.init");
    let k = config.kernel;
    let layers = vec![
        Layer::Conv2d { params: LayerParams::conv(k, 1, config.conv1_filters, &mut rng), activation: Activation::Relu },
        Layer::MaxPool2,
        Layer::Conv2d {
            params: LayerParams::conv(k, config.conv1_filters, config.conv2_filters, &mut rng),
            activation: Activation::Relu,
        },
        Layer::MaxPool2,
        Layer::Flatten,
        Layer::Dense {
            params: LayerParams::dense(config.flattened_width(), config.fc_width, &mut rng),
            activation: Activation::Relu,
        },
        Layer::Dense { params: LayerParams::dense(config.fc_width, config.classes, &mut rng), activation: Activation::Identity },
    ];
    Network::new(&[config.image_rows, config.image_cols, 1], layers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: PollutionImage,
    pub label: AirQualityLabel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// NaN when no validation split was held out.
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

/// Trained classifier plus the image scale it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub network: Network,
    pub scale: f64,
}

impl CnnModel {
    pub fn predict(&self, image: &PollutionImage) -> Result<(AirQualityLabel, Vec<f64>)> {
        if image.rows != self.config.image_rows || image.cols != self.config.image_cols {
            return Err(Error::ShapeMismatch(format!(
                "model takes {}x{} images, got {}x{}",
                self.config.image_rows, self.config.image_cols, image.rows, image.cols
            )));
        }
        check_normalized(image)?;
        let probs = self.network.predict_proba(&image.to_tensor())?.into_data();
        let class = argmax(&probs);
        let label = AirQualityLabel::from_code(class)
            .ok_or_else(|| Error::InvalidArgument(format!("class index {class} has no air-quality label")))?;
        Ok((label, probs))
    }

    pub fn to_checkpoint(&self, history: Option<&TrainHistory>) -> ModelCheckpoint {
        let mut ck = ModelCheckpoint::new(ModelKind::Cnn, self.config.seed);
        self.config.write_to(&mut ck);
        ck.set_stat("image_scale", vec![self.scale]);
        if let Some(h) = history {
            ck.set_stat("history_train_loss", h.train_loss.clone());
            ck.set_stat("history_val_loss", h.val_loss.clone());
            ck.set_stat("history_val_accuracy", h.val_accuracy.clone());
        }
        let params = self.network.parameters();
        for (i, name) in LAYER_NAMES.iter().enumerate() {
            ck.push_tensor(&format!("{name}.weight"), params[2 * i].clone());
            ck.push_tensor(&format!("{name}.bias"), params[2 * i + 1].clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        ck.expect_kind(ModelKind::Cnn)?;
        let config = CnnConfig::read_from(ck)?;
        let mut network = build_cnn(&config)?;
        for (i, p) in network.parameters_mut().into_iter().enumerate() {
            let name = format!("{}.{}", LAYER_NAMES[i / 2], if i % 2 == 0 { "weight" } else { "bias" });
            let stored = ck.tensor(&name)?;
            p.check_same_shape(stored)?;
            *p = stored.clone();
        }
        let scale = *ck
            .stat("image_scale")?
            .first()
            .ok_or_else(|| Error::MalformedCheckpoint("empty image_scale".into()))?;
        Ok(Self { config, network, scale })
    }
}

pub fn history_from_checkpoint(ck: &ModelCheckpoint) -> Result<TrainHistory> {
    Ok(TrainHistory {
        train_loss: ck.stat("history_train_loss")?.to_vec(),
        val_loss: ck.stat("history_val_loss")?.to_vec(),
        val_accuracy: ck.stat("history_val_accuracy")?.to_vec(),
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_normalized(image: &PollutionImage) -> Result<()> {
    match image.pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&bad) => Err(Error::UnnormalizedInput(bad)),
        None => Ok(()),
    }
}

/// Seeded shuffle split into (train, validation) index sets.
pub fn split_indices(n: usize, val_ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, "cnn.split"));
    let n_val = if val_ratio > 0.0 && n >= 2 { ((n as f64 * val_ratio).round() as usize).clamp(1, n - 1) } else { 0 };
    let train = idx.split_off(n_val);
    (train, idx)
}

fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { labels.len() as f64 / (present * c) as f64 })
        .collect()
}

/// Mini-batch Adam on cross-entropy with a seeded train/validation split.
pub fn train_cnn(data: &[LabeledImage], config: &CnnConfig) -> Result<(CnnModel, TrainHistory)> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::EmptyDataset(format!("need at least 2 images, got {}", data.len())));
    }
    let scale = data[0].image.scale;
    for sample in data {
        check_normalized(&sample.image)?;
        if sample.image.rows != config.image_rows || sample.image.cols != config.image_cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} images, got {}x{}",
                config.image_rows, config.image_cols, sample.image.rows, sample.image.cols
            )));
        }
        if sample.label.code() >= config.classes {
            return Err(Error::InvalidArgument(format!("label {} exceeds class count", sample.label)));
        }
    }

    let inputs: Vec<Tensor> = data.iter().map(|s| s.image.to_tensor()).collect();
    let targets: Vec<Tensor> = data.iter().map(|s| one_hot(s.label.code(), config.classes)).collect();
    let (mut train_idx, val_idx) = split_indices(data.len(), config.val_ratio, config.seed);
    let weights = config.class_weighting.then(|| {
        let labels: Vec<usize> = train_idx.iter().map(|&i| data[i].label.code()).collect();
        class_weights(&labels, config.classes)
    });

    let mut network = build_cnn(config)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), network.parameters());
    let mut shuffle_rng = rng_for(config.seed, "cnn.shuffle");
    let mut history = TrainHistory::default();
    let val_inputs: Vec<Tensor> = val_idx.iter().map(|&i| inputs[i].clone()).collect();
    let val_targets: Vec<Tensor> = val_idx.iter().map(|&i| targets[i].clone()).collect();

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let xs: Vec<Tensor> = batch.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<Tensor> = batch.iter().map(|&i| targets[i].clone()).collect();
            let sample_weights: Option<Vec<f64>> =
                weights.as_ref().map(|w| batch.iter().map(|&i| w[data[i].label.code()]).collect());
            let (loss, grads) = network.loss_and_gradients(&xs, &ys, sample_weights.as_deref())?;
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut network.parameters_mut(), &grads)?;
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mut correct = 0;
            for (x, y) in val_inputs.iter().zip(&val_idx) {
                if argmax(network.predict_proba(x)?.data()) == data[*y].label.code() {
                    correct += 1;
                }
            }
            (network.loss(&val_inputs, &val_targets, None)?, correct as f64 / val_idx.len() as f64)
        };
        log::debug!("cnn epoch {}: train {train_loss:.5} val {val_loss:.5} acc {val_acc:.3}", epoch + 1);
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.val_accuracy.push(val_acc);
    }
    Ok((CnnModel { config: config.clone(), network, scale }, history))
}

/// Rebuilds the model from a checkpoint and classifies one image.
pub fn predict_cnn(checkpoint: &ModelCheckpoint, image: &PollutionImage) -> Result<(AirQualityLabel, Vec<f64>)> {
    CnnModel::from_checkpoint(checkpoint)?.predict(image)
}
