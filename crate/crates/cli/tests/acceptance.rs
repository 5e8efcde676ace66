//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trailgrade::dataset::{
    candidate_count, oversample_balance, read_sample_archive, shuffle, slice_windows, split_train_test, stride_for,
    write_sample_archive, Origin, WindowConfig, WindowSample, WINDOW_SIZES_MS,
};
use trailgrade::experiments::kernel_too_long;
use trailgrade::ingest::{build_session, parse_sensor_csv, write_sensor_csv, RawSample, RawSensorLog, SensorChannel, SyncedSession, CHANNEL_ORDER};
use trailgrade::labeling::{map_grade, DifficultyLabel, LabelTrack};
use trailgrade::nn::checkpoint::{decode_checkpoint, encode_checkpoint};
use trailgrade::nn::gradcheck::{central_differences, compare, DEFAULT_STEP};
use trailgrade::nn::layers::*;
use trailgrade::nn::model::KERNEL_LENGTHS;
use trailgrade::nn::{backward, build_model, forward, ModelConfig, ModelParams, Tensor};
use trailgrade::training::{confusion_matrix, history_csv, parse_history_csv, sparse_categorical_accuracy, train, TrainConfig};
use trailgrade::Error;

const LAYER_TOL: f64 = 1e-4;
const NETWORK_TOL: f64 = 1e-3;
const GRAD_SEEDS: u64 = 20;
const CONV_ORACLE_TOL: f64 = 1e-10;
const CONV_ORACLE_CASES: u64 = 100;
const E2E_MIN_ACCURACY: f64 = 0.90;
const E2E_MAX_EPOCHS: usize = 300;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), data.to_vec()).unwrap()
}

fn project(y: &Tensor, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Worst relative error of `analytic` against central differences of `f`
/// around `x`.
fn check(x: &Tensor, analytic: &Tensor, f: impl FnMut(&Tensor) -> f64) -> f64 {
    let mut f = f;
    let numeric = central_differences(x.data(), DEFAULT_STEP, |d| f(&with_data(x, d)));
    compare(analytic.data(), &numeric).max_relative_error
}

fn layer_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // convolution, including kernels taller than the input
    let (b, h, w) = (rng.gen_range(1..3), rng.gen_range(1..9), rng.gen_range(1..5));
    let (cin, cout, kh, kw) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..8), rng.gen_range(1..3));
    let x = random(&[b, h, w, cin], &mut rng);
    let k = random(&[kh, kw, cin, cout], &mut rng);
    let bias = random(&[cout], &mut rng);
    let y = conv2d_forward(&x, &k, &bias).unwrap();
    let r: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = conv2d_backward(&ConvCache { input: x.clone(), kernels: k.clone() }, &with_data(&y, &r)).unwrap();
    out.push(("conv input", check(&x, &g.input, |x| project(&conv2d_forward(x, &k, &bias).unwrap(), &r))));
    out.push(("conv kernels", check(&k, &g.kernels, |k| project(&conv2d_forward(&x, k, &bias).unwrap(), &r))));
    out.push(("conv bias", check(&bias, &g.bias, |bb| project(&conv2d_forward(&x, &k, bb).unwrap(), &r))));

    // batch norm in train mode
    let c = rng.gen_range(1..4);
    let x = random(&[2, rng.gen_range(1..5), 2, c], &mut rng);
    let gamma = random(&[c], &mut rng);
    let beta = random(&[c], &mut rng);
    let set = BnSettings { momentum: 0.99, epsilon: 1e-3 };
    let bn = |x: &Tensor, g: &Tensor, bt: &Tensor| {
        let mut st = BnState::new(c);
        batchnorm_forward(x, g, bt, &mut st, set, Mode::Train).unwrap()
    };
    let (y, cache) = bn(&x, &gamma, &beta);
    let r: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (dx, dg, db) = batchnorm_backward(&cache.unwrap(), &with_data(&y, &r)).unwrap();
    out.push(("bn input", check(&x, &dx, |x| project(&bn(x, &gamma, &beta).0, &r))));
    out.push(("bn gamma", check(&gamma, &dg, |g| project(&bn(&x, g, &beta).0, &r))));
    out.push(("bn beta", check(&beta, &db, |bt| project(&bn(&x, &gamma, bt).0, &r))));

    // relu, keeping inputs clear of the kink
    let mut x = random(&[1, 5, 2, 2], &mut rng);
    for v in x.data_mut() {
        if v.abs() < 1e-2 {
            *v += 0.1;
        }
    }
    let r: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dx = relu_backward(&x, &with_data(&x, &r)).unwrap();
    out.push(("relu", check(&x, &dx, |x| project(&relu(x), &r))));

    // ceil-mode max pooling over an odd height
    let x = random(&[2, 2 * rng.gen_range(1..4) + 1, 2, 2], &mut rng);
    let (y, mask) = maxpool_forward(&x, 2).unwrap();
    let r: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dx = maxpool_backward(&mask, &with_data(&y, &r)).unwrap();
    out.push(("maxpool", check(&x, &dx, |x| project(&maxpool_forward(x, 2).unwrap().0, &r))));

    // dropout with a mask held fixed across evaluations
    let x = random(&[2, 3, 2, 2], &mut rng);
    let mask_seed = rng.gen();
    let drop = |x: &Tensor| dropout(x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(mask_seed)).unwrap();
    let (y, m) = drop(&x);
    let r: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dx = dropout_backward(m.as_deref(), &with_data(&y, &r)).unwrap();
    out.push(("dropout", check(&x, &dx, |x| project(&drop(x).0, &r))));

    // dense
    let (bd, d, u) = (rng.gen_range(1..4), rng.gen_range(1..6), rng.gen_range(1..5));
    let x = random(&[bd, d], &mut rng);
    let wts = random(&[d, u], &mut rng);
    let bias = random(&[u], &mut rng);
    let y = dense_forward(&x, &wts, &bias).unwrap();
    let r: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (dx, dw, db) = dense_backward(&x, &wts, &with_data(&y, &r)).unwrap();
    out.push(("dense input", check(&x, &dx, |x| project(&dense_forward(x, &wts, &bias).unwrap(), &r))));
    out.push(("dense weights", check(&wts, &dw, |w| project(&dense_forward(&x, w, &bias).unwrap(), &r))));
    out.push(("dense bias", check(&bias, &db, |bb| project(&dense_forward(&x, &wts, bb).unwrap(), &r))));

    // softmax followed by sparse categorical crossentropy
    let logits = random(&[3, 3], &mut rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..3)).collect();
    let (_, dl) = sparse_categorical_crossentropy(&softmax(&logits).unwrap(), &labels).unwrap();
    out.push((
        "softmax+crossentropy",
        check(&logits, &dl, |z| sparse_categorical_crossentropy(&softmax(z).unwrap(), &labels).unwrap().0),
    ));
    out
}

fn tiny_config() -> ModelConfig {
    let mut c = ModelConfig::new(8, 3);
    c.filters = [2, 3, 4];
    c.dense_units = 5;
    c.dropout_rate = 0.0;
    c
}

fn network_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = tiny_config();
    let params = build_model(&config, &mut rng).unwrap();
    let mut params = perturb(params, &mut rng);
    let x = random(&config.input_shape(2), &mut rng);
    let labels = vec![rng.gen_range(0..3), rng.gen_range(0..3)];
    let loss = |p: &ModelParams| {
        let mut p = p.clone();
        let (_, cache) = forward(&mut p, &x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        backward(&p, &cache.unwrap(), &labels).unwrap()
    };
    let (_, grads) = loss(&params);
    let analytic: Vec<f64> = grads.tensors.iter().flat_map(|t| t.data().to_vec()).collect();
    let flat: Vec<f64> = params.trainable().iter().flat_map(|t| t.data().to_vec()).collect();
    let numeric = central_differences(&flat, DEFAULT_STEP, |v| {
        let mut at = 0;
        for t in params.trainable_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&v[at..at + n]);
            at += n;
        }
        loss(&params).0
    });
    compare(&analytic, &numeric).max_relative_error
}

/// Moves biases, gamma and beta off their initial constants so every
/// gradient path is exercised.
fn perturb(mut p: ModelParams, rng: &mut ChaCha8Rng) -> ModelParams {
    for t in p.trainable_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    p
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_layer = (String::new(), 0.0f64);
    let mut worst_net = 0.0f64;
    for seed in 0..GRAD_SEEDS {
        for (name, e) in layer_errors(seed) {
            if !(e <= worst_layer.1) {
                worst_layer = (format!("{name} (seed {seed})"), e);
            }
        }
        let e = network_error(seed);
        if !(e <= worst_net) {
            worst_net = e;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_layer.1 <= LAYER_TOL && worst_net <= NETWORK_TOL && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{GRAD_SEEDS} seeds; worst layer rel err {:.2e} at {} (tol {LAYER_TOL:e}); network {:.2e} (tol {NETWORK_TOL:e}); {:.1}s",
            worst_layer.1,
            worst_layer.0,
            worst_net,
            elapsed.as_secs_f64()
        ),
    )
}

fn brute_conv(x: &Tensor, k: &Tensor, bias: &Tensor) -> Vec<f64> {
    let [b, h, w, cin] = x.dims4().unwrap();
    let [kh, kw, _, cout] = k.dims4().unwrap();
    let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = vec![0.0; b * h * w * cout];
    for s in 0..b {
        for i in 0..h {
            for j in 0..w {
                for co in 0..cout {
                    let mut acc = bias.data()[co];
                    for u in 0..kh {
                        for v in 0..kw {
                            let (ii, jj) = (i as i64 + u as i64 - pt as i64, j as i64 + v as i64 - pl as i64);
                            if ii < 0 || jj < 0 || ii >= h as i64 || jj >= w as i64 {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x.data()[((s * h + ii as usize) * w + jj as usize) * cin + ci]
                                    * k.data()[((u * kw + v) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[((s * h + i) * w + j) * cout + co] = acc;
                }
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..CONV_ORACLE_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (b, h, w) = (rng.gen_range(1..4), rng.gen_range(1..40), rng.gen_range(1..6));
        let (cin, cout) = (rng.gen_range(1..9), rng.gen_range(1..17));
        let (kh, kw) = (rng.gen_range(1..30), rng.gen_range(1..4));
        let x = random(&[b, h, w, cin], &mut rng);
        let k = random(&[kh, kw, cin, cout], &mut rng);
        let bias = random(&[cout], &mut rng);
        let fast = conv2d_forward(&x, &k, &bias).unwrap();
        let slow = brute_conv(&x, &k, &bias);
        for (a, e) in fast.data().iter().zip(&slow) {
            let d = (a - e).abs();
            if !(d <= worst) {
                worst = d;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= CONV_ORACLE_TOL && elapsed < Duration::from_secs(30),
        format!(
            "{CONV_ORACLE_CASES} shapes; max abs diff {worst:.2e} (tol {CONV_ORACLE_TOL:e}); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let c = ModelConfig::new(250, 60);
    let chain_ok = c.heights() == [250, 125, 63, 32] && c.flatten_size() == 2048;
    let points: Vec<usize> = WINDOW_SIZES_MS
        .iter()
        .map(|&w| WindowConfig::new(w).window_points().unwrap())
        .collect();
    let mut rejected = Vec::new();
    for (&w, &n) in WINDOW_SIZES_MS.iter().zip(&points) {
        for k in KERNEL_LENGTHS {
            let validation = ModelConfig::new(n, k).validate();
            let too_long = matches!(validation, Err(Error::KernelTooLong { .. }));
            if too_long != kernel_too_long(k, n) {
                return outcome(false, format!("validate and the grid rule disagree at ({w}, {k})"));
            }
            if too_long {
                rejected.push((w, k));
            }
        }
    }
    let pass = chain_ok && points == [25, 50, 125, 250, 500] && rejected == [(1000, 40), (1000, 60), (2000, 60)];
    outcome(
        pass,
        format!(
            "heights {:?}, flatten {}, window points {points:?}, rejected {rejected:?}",
            c.heights(),
            c.flatten_size()
        ),
    )
}

fn session_of(len: usize, rng: &mut ChaCha8Rng) -> SyncedSession {
    let channels = CHANNEL_ORDER
        .iter()
        .map(|&(mount, sensor_kind)| SensorChannel {
            sensor_kind,
            mount,
            start_time_ms: 0,
            rate_hz: 25.0,
            values: (0..len).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect(),
        })
        .collect();
    build_session("s", channels).unwrap()
}

fn labeled_sample(label: u8, id: i64, rng: &mut ChaCha8Rng) -> WindowSample {
    WindowSample {
        data: (0..5 * 12).map(|_| rng.gen()).collect(),
        window_points: 5,
        label: DifficultyLabel::new(label).unwrap(),
        origin: Origin { session: format!("s{}", id % 4), start_ms: id },
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for (w, ms) in [(25usize, 1000u32), (50, 2000), (125, 5000)] {
        let config = WindowConfig::new(ms);
        let stride = stride_for(w, 0.75);
        for len in w..=w + 200 {
            let mut enumerated = 0;
            let mut a = 0;
            while a + w <= len {
                enumerated += 1;
                a += stride;
            }
            let session = session_of(len, &mut rng);
            let track = LabelTrack::uniform(session.duration_ms(), DifficultyLabel::MEDIUM).unwrap();
            let sliced = slice_windows(&session, &track, &config).unwrap().len();
            let closed = (len - w) / stride + 1;
            if enumerated != closed || sliced != closed || candidate_count(len, w, stride) != closed {
                return outcome(false, format!("window count mismatch at w={w}, L={len}"));
            }
            checked += 1;
        }
    }

    for seed in 0..50 {
        let counts = [rng.gen_range(1..30), rng.gen_range(1..30), rng.gen_range(1..30)];
        let mut samples = Vec::new();
        let mut id = 0;
        for (label, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                samples.push(labeled_sample(label as u8, id, &mut rng));
                id += 1;
            }
        }
        let balanced = oversample_balance(&samples, seed).unwrap();
        let target = *counts.iter().max().unwrap();
        let hist = trailgrade::dataset::class_histogram(&balanced);
        let prefix_kept = balanced[..samples.len()] == samples[..];
        let only_duplicates = balanced[samples.len()..].iter().all(|s| samples.contains(s));
        if hist != [target; 3] || !prefix_kept || !only_duplicates {
            return outcome(false, format!("oversampling law broken for counts {counts:?}"));
        }
        if balanced != oversample_balance(&samples, seed).unwrap() {
            return outcome(false, "oversampling is not deterministic");
        }
        let a = split_train_test(samples.clone(), 0.8, seed).unwrap();
        let b = split_train_test(samples.clone(), 0.8, seed).unwrap();
        if a.train != b.train || a.test != b.test || shuffle(samples.clone(), seed) != shuffle(samples, seed) {
            return outcome(false, "split or shuffle is not deterministic");
        }
    }

    let (train_set, test_set): (Vec<_>, Vec<_>) = (0..24)
        .map(|i| {
            let mut s = labeled_sample((i % 3) as u8, i, &mut rng);
            s.window_points = 8;
            s.data = (0..8 * 12).map(|_| rng.gen_range(-1.0..1.0) * (1 + i % 3) as f64).collect();
            s
        })
        .partition(|s| s.origin.start_ms < 18);
    let mut model = tiny_config();
    model.dropout_rate = 0.3;
    let mut tc = TrainConfig::new(5);
    tc.max_epochs = 4;
    tc.patience = 4;
    tc.batch_size = 8;
    let runs: Vec<_> = (0..2).map(|_| train(&train_set, &test_set, &model, &tc).unwrap()).collect();
    let same = history_csv(&runs[0].history) == history_csv(&runs[1].history)
        && encode_checkpoint(&runs[0].best_params) == encode_checkpoint(&runs[1].best_params)
        && runs[0].best_params == runs[1].best_params;
    outcome(
        same,
        format!("{checked} window lengths enumerated; 50 oversample/split/shuffle seeds; training reproducible: {same}"),
    )
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_trailgrade"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let max_epochs = E2E_MAX_EPOCHS.to_string();
    let steps: [&[&str]; 3] = [
        &["synth", "--out", "data", "--sessions-per-class", "20", "--seconds", "20", "--seed", "42"],
        &["window", "--session", "data", "--window-ms", "5000", "--overlap", "0.75", "--out", "samples.tgds"],
        &[
            "train", "--samples", "samples.tgds", "--kernel-len", "20", "--seed", "42", "--batch", "32",
            "--max-epochs", &max_epochs, "--patience", "250", "--out-model", "model.ckpt", "--out-history",
            "history.csv", "--quiet",
        ],
    ];
    for step in steps {
        if let Err(e) = run_cli(step, dir.path()) {
            return outcome(false, e);
        }
    }
    let history = parse_history_csv(&std::fs::read_to_string(dir.path().join("history.csv")).unwrap()).unwrap();
    let best = history.iter().map(|r| r.test_sca).fold(f64::NEG_INFINITY, f64::max);
    let first_loss = history[0].train_loss;
    let best_loss = history.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    outcome(
        best >= E2E_MIN_ACCURACY && best_loss < first_loss && elapsed <= Duration::from_secs(600),
        format!(
            "best test sca {best:.4} (need {E2E_MIN_ACCURACY}); train loss epoch 1 {first_loss:.4} -> best {best_loss:.4}; {} epochs; {:.0}s",
            history.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let b = rng.gen_range(1..64);
        // coarse values make argmax ties common
        let p = Tensor::new(vec![b, 3], (0..b * 3).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect()).unwrap();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..3)).collect();
        let m = confusion_matrix(&p, &labels).unwrap();
        let acc = sparse_categorical_accuracy(&p, &labels).unwrap();
        if m.trace() as f64 / m.total() as f64 != acc || m.total() != b as u64 {
            return outcome(false, format!("batch {i}: trace/total {} vs accuracy {acc}", m.accuracy()));
        }
    }
    outcome(true, "1000 random batches, exact equality")
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut notes = Vec::new();

    let mut t = 0;
    let log = RawSensorLog {
        sensor_kind: trailgrade::ingest::SensorKind::Gyroscope,
        mount: trailgrade::ingest::Mount::Helmet,
        samples: (0..200)
            .map(|_| {
                t += rng.gen_range(1..60);
                RawSample { timestamp_ms: t, xyz: [rng.gen_range(-1e3..1e3), rng.gen::<f64>() * 1e-9, -rng.gen::<f64>()] }
            })
            .collect(),
        nominal_rate_hz: 0.0,
    };
    let text = write_sensor_csv(&log);
    let parsed = parse_sensor_csv(&text, log.sensor_kind, log.mount).unwrap();
    let csv_ok = parsed.samples == log.samples && write_sensor_csv(&parsed) == text;
    notes.push(format!("sensor csv {csv_ok}"));

    let samples: Vec<WindowSample> = (0..30)
        .map(|i| {
            let mut s = labeled_sample((i % 3) as u8, i, &mut rng);
            s.data = s.data.iter().map(|v| (v * 100.0) as f32 as f64).collect();
            s
        })
        .collect();
    let mut bytes = Vec::new();
    write_sample_archive(&mut bytes, &samples).unwrap();
    let back = read_sample_archive(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_sample_archive(&mut again, &back).unwrap();
    let archive_ok = back == samples && again == bytes;
    notes.push(format!("sample archive {archive_ok}"));

    let params = build_model(&ModelConfig::new(50, 10), &mut rng).unwrap();
    let bytes = encode_checkpoint(&params);
    let loaded = decode_checkpoint(&bytes).unwrap();
    let ckpt_ok = encode_checkpoint(&loaded) == bytes
        && loaded.config == params.config
        && loaded
            .all_tensors()
            .iter()
            .zip(params.all_tensors())
            .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| *x == *y as f32 as f64));
    notes.push(format!("checkpoint {ckpt_ok}"));

    let mut rejections = true;
    for cut in [0, 4, 9, 64, bytes.len() / 2, bytes.len() - 1] {
        rejections &= matches!(decode_checkpoint(&bytes[..cut]), Err(Error::CorruptCheckpoint(_)));
    }
    for at in [20, bytes.len() / 3, bytes.len() - 2] {
        let mut bad = bytes.clone();
        bad[at] ^= 0x01;
        rejections &= matches!(decode_checkpoint(&bad), Err(Error::CorruptCheckpoint(_)));
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    rejections &= matches!(decode_checkpoint(&bad), Err(Error::VersionMismatch(_)));
    let mut bad = bytes.clone();
    bad[4] = 99;
    rejections &= matches!(decode_checkpoint(&bad), Err(Error::VersionMismatch(_)));
    notes.push(format!("damage rejected {rejections}"));

    outcome(csv_ok && archive_ok && ckpt_ok && rejections, notes.join(", "))
}

fn criterion_8() -> Outcome {
    let table = [
        ("S0", 0),
        ("S1", 0),
        ("0", 0),
        ("1", 0),
        ("S2", 1),
        ("2", 1),
        ("S3", 2),
        ("S4", 2),
        ("S5", 2),
        ("3", 2),
        ("4", 2),
        ("5", 2),
    ];
    let wrong: Vec<&str> = table
        .iter()
        .filter(|(g, want)| map_grade(g).map(|l| l.value()).ok() != Some(*want))
        .map(|(g, _)| *g)
        .collect();
    outcome(wrong.is_empty(), format!("{} grades mapped, wrong: {wrong:?}", table.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", criterion_1),
        ("convolution oracle", criterion_2),
        ("architecture arithmetic", criterion_3),
        ("pipeline laws", criterion_4),
        ("synthetic end-to-end", criterion_5),
        ("metric identities", criterion_6),
        ("formats", criterion_7),
        ("grade mapping", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        println!("[{}] {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
