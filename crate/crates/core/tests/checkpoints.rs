use aircast::checkpoint::{load_checkpoint, save_checkpoint};
use aircast::cnn::{train_cnn, CnnConfig, CnnModel, LabeledImage};
use aircast::error::Error;
use aircast::geogrid::PollutionImage;
use aircast::hybrid::{train_hybrid, HybridConfig, HybridModel, WeatherVector};
use aircast::labeling::AirQualityLabel;
use aircast::lstm::{build_windows_with_weather, train_lstm, LstmConfig, LstmModel};

fn series() -> (Vec<f64>, Vec<WeatherVector>) {
    let y = (0..60).map(|t| 25.0 + 8.0 * (t as f64 * 0.3).sin() + (t % 5) as f64).collect();
    let w = (0..60).map(|t| WeatherVector::from_raw(10.0 + t as f64 * 0.1, 55.0, 0.0, (t % 7) as f64, t as f64 * 13.0)).collect();
    (y, w)
}

fn lstm_config() -> LstmConfig {
    LstmConfig { window: 6, hidden: 5, epochs: 3, batch_size: 8, learning_rate: 1e-2, seed: 4 }
}

#[test]
fn cnn_predictions_survive_the_file_round_trip() {
    let data: Vec<LabeledImage> = (0..8)
        .map(|i| LabeledImage {
            image: PollutionImage::new(8, 8, vec![i as f64 / 8.0; 64], 50.0).unwrap(),
            label: AirQualityLabel::ALL[i % 4],
        })
        .collect();
    let config = CnnConfig {
        image_rows: 8,
        image_cols: 8,
        conv1_filters: 2,
        conv2_filters: 3,
        fc_width: 5,
        epochs: 2,
        batch_size: 4,
        seed: 2,
        ..CnnConfig::default()
    };
    let (model, history) = train_cnn(&data, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cnn.ckpt");
    let ck = model.to_checkpoint(Some(&history));
    save_checkpoint(&ck, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, ck);
    let restored = CnnModel::from_checkpoint(&loaded).unwrap();
    for d in &data {
        let (a, pa) = model.predict(&d.image).unwrap();
        let (b, pb) = restored.predict(&d.image).unwrap();
        assert_eq!(a, b);
        assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert!(matches!(LstmModel::from_checkpoint(&loaded), Err(Error::InvalidArgument(_))));
}

#[test]
fn sequence_models_survive_the_file_round_trip() {
    let (y, w) = series();
    let windows = build_windows_with_weather(&y, Some(&w), 6).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let lstm = train_lstm(&windows, &lstm_config()).unwrap();
    save_checkpoint(&lstm.to_checkpoint(), &dir.path().join("lstm.ckpt")).unwrap();
    let lstm_back = LstmModel::from_checkpoint(&load_checkpoint(&dir.path().join("lstm.ckpt")).unwrap()).unwrap();
    assert_eq!(lstm_back, lstm);

    let hybrid = train_hybrid(&windows, 0.3, &HybridConfig { lstm: lstm_config(), ..HybridConfig::default() }).unwrap();
    save_checkpoint(&hybrid.to_checkpoint(), &dir.path().join("hybrid.ckpt")).unwrap();
    let hybrid_back = HybridModel::from_checkpoint(&load_checkpoint(&dir.path().join("hybrid.ckpt")).unwrap()).unwrap();
    for win in &windows {
        assert_eq!(lstm.predict(win).unwrap().to_bits(), lstm_back.predict(win).unwrap().to_bits());
        assert_eq!(hybrid.predict(win).unwrap().to_bits(), hybrid_back.predict(win).unwrap().to_bits());
    }
}

#[test]
fn corrupted_files_are_rejected() {
    let (y, w) = series();
    let windows = build_windows_with_weather(&y, Some(&w), 6).unwrap();
    let model = train_lstm(&windows, &lstm_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model.to_checkpoint(), &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let i = bytes.len() / 2;
    bytes[i] = if bytes[i] == b'1' { b'2' } else { b'1' };
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::ChecksumFailure)));
    assert!(matches!(load_checkpoint(&dir.path().join("missing.ckpt")), Err(Error::FileNotFound(_))));
}
