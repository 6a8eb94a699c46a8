//! Command-line surface: `aircast <subcommand> [flags]`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::cnn::{train_cnn, CnnConfig, CnnModel, LabeledImage, TrainHistory};
use crate::datagen::{synth_dataset, SynthConfig, DEFAULT_START};
use crate::error::{Error, Result};
use crate::geogrid::{aggregate_frames, max_cell_mean, render_image, GridFrame, GridSpec};
use crate::hybrid::{alpha_sweep, parse_alpha_range, rmae, train_hybrid, HybridConfig, HybridModel};
use crate::io;
use crate::labeling::{classify_pm25, station_average, AirQualityLabel};
use crate::lstm::{train_lstm, LstmConfig, LstmModel, SequenceWindow};
use crate::record::Pollutant;

#[derive(Debug, Parser)]
#[command(name = "aircast", version, about = "Air-quality grid images, CNN classification and hybrid LSTM forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic taxi records and station readings.
    Synth(SynthArgs),
    /// Validate a sensor CSV and write the accepted rows.
    Ingest(IngestArgs),
    /// Aggregate records into grid frames, images and the hourly series.
    Gridify(GridifyArgs),
    /// Train the image classifier on frames labeled by station averages.
    TrainCnn(TrainCnnArgs),
    /// Classify frames with a trained classifier.
    Predict(PredictArgs),
    /// Train the standalone LSTM forecaster.
    TrainLstm(TrainLstmArgs),
    /// Train the LSTM + weather blend at a fixed alpha.
    TrainHybrid(TrainHybridArgs),
    /// Train one blend per alpha and report validation RMAE.
    SweepAlpha(SweepArgs),
    /// Score predictions against targets.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy)]
struct BBox([f64; 4]);

fn parse_bbox(s: &str) -> std::result::Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let arr: [f64; 4] = v.try_into().map_err(|_| "expected latmin,latmax,lonmin,lonmax".to_string())?;
    Ok(BBox(arr))
}

#[derive(Debug, Args)]
struct GridArgs {
    /// latmin,latmax,lonmin,lonmax
    #[arg(long, value_parser = parse_bbox, default_value = "35.70,36.00,128.40,128.78")]
    bbox: BBox,
    /// Cells per side.
    #[arg(long, default_value_t = 32)]
    grid: usize,
    /// Bucket length in seconds.
    #[arg(long, default_value_t = 3600)]
    interval: i64,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        let [a, b, c, d] = self.bbox.0;
        GridSpec::new(a, b, c, d, self.grid, self.grid)
    }

    fn check_interval(&self) -> Result<()> {
        if self.interval <= 0 {
            return Err(Error::InvalidArgument(format!("interval must be positive, got {}", self.interval)));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    taxis: usize,
    #[arg(long, default_value_t = 720)]
    hours: usize,
    #[arg(long, default_value_t = 6)]
    sources: usize,
    #[arg(long, value_parser = parse_bbox, default_value = "35.70,36.00,128.40,128.78")]
    bbox: BBox,
    #[arg(long, default_value_t = DEFAULT_START)]
    start: i64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Raw sensor CSV.
    #[arg(long)]
    input: PathBuf,
    /// Also reject rows outside this box.
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<BBox>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "pm25")]
    pollutant: Pollutant,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainCnnArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    stations: PathBuf,
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    val_ratio: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    conv1: usize,
    #[arg(long, default_value_t = 64)]
    conv2: usize,
    #[arg(long, default_value_t = 128)]
    fc: usize,
    /// Weight the loss by inverse class frequency.
    #[arg(long)]
    class_weighting: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    /// Hourly series CSV written by `gridify`.
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = 24)]
    window: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Trailing fraction of windows held out for validation.
    #[arg(long, default_value_t = 0.2)]
    val_ratio: f64,
    #[arg(long, default_value_t = 3600)]
    interval: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl SeriesArgs {
    fn lstm_config(&self) -> LstmConfig {
        LstmConfig {
            window: self.window,
            hidden: self.hidden,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
        }
    }

    fn windows(&self) -> Result<(Vec<SequenceWindow>, Vec<SequenceWindow>)> {
        if self.interval <= 0 {
            return Err(Error::InvalidArgument(format!("interval must be positive, got {}", self.interval)));
        }
        let series = io::read_series_csv(&self.series)?;
        let windows = io::series_windows(&series, self.window, self.interval);
        chronological_split(windows, self.val_ratio)
    }
}

#[derive(Debug, Args)]
struct HybridArgs {
    /// Width of an optional hidden layer in the weather branch.
    #[arg(long)]
    weather_hidden: Option<usize>,
    /// Train the two branches separately, then blend.
    #[arg(long)]
    staged: bool,
}

#[derive(Debug, Args)]
struct TrainLstmArgs {
    #[command(flatten)]
    series: SeriesArgs,
}

#[derive(Debug, Args)]
struct TrainHybridArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    hybrid: HybridArgs,
    #[arg(long)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    hybrid: HybridArgs,
    /// lo:hi:step
    #[arg(long, default_value = "0.0:1.0:0.1")]
    alphas: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, default_value = "rmae")]
    metric: String,
    /// CSV of targets.
    #[arg(long)]
    truth: PathBuf,
    /// CSV of predictions.
    #[arg(long)]
    pred: PathBuf,
    /// Column to read from the truth file (default: last).
    #[arg(long)]
    truth_column: Option<String>,
    /// Column to read from the prediction file (default: last).
    #[arg(long)]
    pred_column: Option<String>,
}

/// Trailing `val_ratio` of the windows (at least one) become the validation set.
pub fn chronological_split(
    mut windows: Vec<SequenceWindow>,
    val_ratio: f64,
) -> Result<(Vec<SequenceWindow>, Vec<SequenceWindow>)> {
    if windows.len() < 3 {
        return Err(Error::EmptyDataset(format!("need at least 3 windows, got {}", windows.len())));
    }
    if !(0.0..1.0).contains(&val_ratio) {
        return Err(Error::InvalidArgument(format!("val ratio must lie in [0, 1), got {val_ratio}")));
    }
    let n = windows.len();
    let n_val = ((n as f64 * val_ratio).round() as usize).clamp(1, n - 2);
    let val = windows.split_off(n - n_val);
    Ok((windows, val))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let [a, b, c, d] = args.bbox.0;
    let config = SynthConfig {
        seed: args.seed,
        n_taxis: args.taxis,
        duration_hours: args.hours,
        grid: GridSpec::new(a, b, c, d, 32, 32)?,
        n_sources: args.sources,
        start: args.start,
        ..SynthConfig::default()
    };
    let data = synth_dataset(&config)?;
    ensure_dir(&args.out)?;
    io::write_records_csv(&args.out.join("records.csv"), &data.records)?;
    io::write_stations_csv(&args.out.join("stations.csv"), &data.stations)?;
    println!("wrote {} sensor records and {} station readings to {}", data.records.len(), data.stations.len(), args.out.display());
    Ok(())
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let bounds = args
        .bbox
        .map(|BBox([a, b, c, d])| GridSpec::new(a, b, c, d, 1, 1))
        .transpose()?;
    let (records, report) = io::ingest_csv(&args.input, bounds.as_ref())?;
    ensure_dir(&args.out)?;
    io::write_records_csv(&args.out.join("clean.csv"), &records)?;
    io::write_report_csv(&args.out.join("ingest_report.csv"), &report)?;
    println!("{report}");
    Ok(())
}

fn gridify(args: &GridifyArgs) -> Result<()> {
    args.grid.check_interval()?;
    let spec = args.grid.spec()?;
    let (records, report) = io::ingest_csv(&args.input, Some(&spec))?;
    if report.rejected() > 0 {
        log::warn!("gridify skipped rows: {report}");
    }
    let agg = aggregate_frames(&records, &spec, args.grid.interval, args.pollutant)?;
    let scale = max_cell_mean(&agg.frames).filter(|s| *s > 0.0).ok_or(Error::EmptyInput)?;
    let images = agg
        .frames
        .iter()
        .map(|f| Ok((f.bucket_start, render_image(f, scale)?)))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(&args.out)?;
    io::write_frames_csv(&args.out.join("frames.csv"), &agg.frames)?;
    io::write_images_csv(&args.out.join("images.csv"), &images)?;
    io::write_series_csv(&args.out.join("series.csv"), &io::hourly_series(&records, args.grid.interval))?;
    println!(
        "{} frames from {} records ({} out of bounds), image scale {scale}",
        agg.frames.len(),
        agg.accepted,
        agg.out_of_bounds
    );
    Ok(())
}

/// Pairs each frame with the class of its bucket's station average.
fn label_frames(frames: &[GridFrame], stations: &[crate::datagen::StationReading]) -> Result<Vec<(GridFrame, AirQualityLabel)>> {
    let by_bucket = io::stations_by_bucket(stations);
    let mut out = Vec::new();
    for f in frames {
        match by_bucket.get(&f.bucket_start).map(|v| station_average(v)) {
            Some(Ok(avg)) => out.push((f.clone(), classify_pm25(avg)?)),
            Some(Err(Error::AllMissing)) | None => log::warn!("no station readings for bucket {}", f.bucket_start),
            Some(Err(e)) => return Err(e),
        }
    }
    Ok(out)
}

fn train_cnn_cmd(args: &TrainCnnArgs) -> Result<()> {
    let frames = io::read_frames_csv(&args.frames, args.grid, args.grid, Pollutant::Pm25)?;
    let stations = io::read_stations_csv(&args.stations)?;
    let labeled = label_frames(&frames, &stations)?;
    let just_frames: Vec<GridFrame> = labeled.iter().map(|(f, _)| f.clone()).collect();
    let scale = max_cell_mean(&just_frames).filter(|s| *s > 0.0).ok_or(Error::EmptyInput)?;
    let data = labeled
        .iter()
        .map(|(f, label)| Ok(LabeledImage { image: render_image(f, scale)?, label: *label }))
        .collect::<Result<Vec<_>>>()?;
    let config = CnnConfig {
        image_rows: args.grid,
        image_cols: args.grid,
        conv1_filters: args.conv1,
        conv2_filters: args.conv2,
        fc_width: args.fc,
        epochs: args.epochs,
        batch_size: args.batch_size,
        val_ratio: args.val_ratio,
        learning_rate: args.lr,
        class_weighting: args.class_weighting,
        seed: args.seed,
        ..CnnConfig::default()
    };
    let mut counts = [0usize; AirQualityLabel::COUNT];
    data.iter().for_each(|d| counts[d.label.code()] += 1);
    log::info!("class counts (good, moderate, unhealthy, hazardous): {counts:?}");
    let (model, history) = train_cnn(&data, &config)?;
    ensure_dir(&args.out)?;
    save_checkpoint(&model.to_checkpoint(Some(&history)), &args.out.join("cnn.ckpt"))?;
    write_history(&args.out.join("cnn_history.csv"), &history)?;
    println!(
        "trained on {} images for {} epochs: final train loss {}, val accuracy {}",
        data.len(),
        history.epochs(),
        history.train_loss.last().copied().unwrap_or(f64::NAN),
        history.val_accuracy.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn write_history(path: &Path, h: &TrainHistory) -> Result<()> {
    let rows = (0..h.epochs())
        .map(|i| {
            vec![(i + 1).to_string(), h.train_loss[i].to_string(), h.val_loss[i].to_string(), h.val_accuracy[i].to_string()]
        })
        .collect();
    io::write_rows_csv(path, &["epoch", "train_loss", "val_loss", "val_accuracy"], rows)
}

fn predict(args: &PredictArgs) -> Result<()> {
    let model = CnnModel::from_checkpoint(&load_checkpoint(&args.model)?)?;
    let frames = io::read_frames_csv(&args.frames, model.config.image_rows, model.config.image_cols, Pollutant::Pm25)?;
    let mut rows = Vec::with_capacity(frames.len());
    for f in &frames {
        let (label, probs) = model.predict(&render_image(f, model.scale)?)?;
        let mut row = vec![f.bucket_start.to_string(), label.to_string()];
        row.extend(probs.iter().map(|p| p.to_string()));
        rows.push(row);
    }
    ensure_dir(&args.out)?;
    io::write_rows_csv(
        &args.out.join("predictions.csv"),
        &["bucket_start", "label", "p_good", "p_moderate", "p_unhealthy", "p_hazardous"],
        rows,
    )?;
    println!("classified {} frames", frames.len());
    Ok(())
}

fn write_predictions(path: &Path, windows: &[SequenceWindow], predict: impl Fn(&SequenceWindow) -> Result<f64>) -> Result<Vec<f64>> {
    let preds = windows.iter().map(&predict).collect::<Result<Vec<_>>>()?;
    let rows = windows
        .iter()
        .zip(&preds)
        .enumerate()
        .map(|(i, (w, p))| vec![i.to_string(), w.target.to_string(), p.to_string()])
        .collect();
    io::write_rows_csv(path, &["index", "y_true", "y_pred"], rows)?;
    Ok(preds)
}

fn train_lstm_cmd(args: &TrainLstmArgs) -> Result<()> {
    let (train, val) = args.series.windows()?;
    let model: LstmModel = train_lstm(&train, &args.series.lstm_config())?;
    let out = &args.series.out;
    ensure_dir(out)?;
    save_checkpoint(&model.to_checkpoint(), &out.join("lstm.ckpt"))?;
    let preds = write_predictions(&out.join("lstm_val_predictions.csv"), &val, |w| model.predict(w))?;
    let truth: Vec<f64> = val.iter().map(|w| w.target).collect();
    println!("lstm: {} train / {} val windows, val rmae {}", train.len(), val.len(), rmae(&truth, &preds)?.value);
    Ok(())
}

fn hybrid_config(series: &SeriesArgs, hybrid: &HybridArgs) -> HybridConfig {
    HybridConfig { lstm: series.lstm_config(), weather_hidden: hybrid.weather_hidden, staged: hybrid.staged }
}

fn train_hybrid_cmd(args: &TrainHybridArgs) -> Result<()> {
    let (train, val) = args.series.windows()?;
    let model: HybridModel = train_hybrid(&train, args.alpha, &hybrid_config(&args.series, &args.hybrid))?;
    let out = &args.series.out;
    ensure_dir(out)?;
    save_checkpoint(&model.to_checkpoint(), &out.join("hybrid.ckpt"))?;
    let preds = write_predictions(&out.join("hybrid_val_predictions.csv"), &val, |w| model.predict(w))?;
    let truth: Vec<f64> = val.iter().map(|w| w.target).collect();
    println!("hybrid alpha {}: val rmae {}", args.alpha, rmae(&truth, &preds)?.value);
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let alphas = parse_alpha_range(&args.alphas)?;
    let (train, val) = args.series.windows()?;
    let result = alpha_sweep(&train, &val, &alphas, &hybrid_config(&args.series, &args.hybrid))?;
    let rows = result
        .rows
        .iter()
        .map(|r| vec![format!("{:?}", r.alpha), r.val_rmae.to_string(), (r.alpha == result.best_alpha).to_string()])
        .collect();
    ensure_dir(&args.series.out)?;
    io::write_rows_csv(&args.series.out.join("alpha_sweep.csv"), &["alpha", "val_rmae", "is_argmin"], rows)?;
    for r in &result.rows {
        println!("alpha {:.2}  val_rmae {:.6}{}", r.alpha, r.val_rmae, if r.alpha == result.best_alpha { "  <- best" } else { "" });
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    if args.metric != "rmae" {
        return Err(Error::InvalidArgument(format!("unknown metric {:?} (supported: rmae)", args.metric)));
    }
    let truth = io::read_value_column(&args.truth, args.truth_column.as_deref())?;
    let pred = io::read_value_column(&args.pred, args.pred_column.as_deref())?;
    let score = rmae(&truth, &pred)?;
    println!("rmae {} ({} zero targets excluded)", score.value, score.excluded);
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("AIRCAST_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run_pipeline<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Gridify(a) => gridify(a),
        Command::TrainCnn(a) => train_cnn_cmd(a),
        Command::Predict(a) => predict(a),
        Command::TrainLstm(a) => train_lstm_cmd(a),
        Command::TrainHybrid(a) => train_hybrid_cmd(a),
        Command::SweepAlpha(a) => sweep(a),
        Command::Eval(a) => eval(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
