//! Training, evaluation, inference and the command line on tiny corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use xmodal::io::{read_depth, read_pnm, write_gray, write_rgb, DatasetIndex};
use xmodal::pipeline::{
    self, evaluate_samples, final_checkpoint_path, infer, load_split, train, train_log_path,
    Checkpoint, Config, EvalOptions, InferRequest, Method, AGGREGATE,
};
use xmodal::scenes::{generate_corpus, CorpusOptions, Scenario, ScenarioMix, SceneRanges};
use xmodal::Error;

fn tiny_corpus(root: &Path, n: usize, seed: u64, mix: &str) -> DatasetIndex {
    let mut opts = CorpusOptions::new(n, seed);
    opts.ranges = SceneRanges {
        rgb_extent: (16, 16),
        ..SceneRanges::default()
    };
    opts.mix = mix.parse::<ScenarioMix>().unwrap();
    generate_corpus(&opts, root).unwrap()
}

fn tiny_config(data: &Path, out: &Path) -> Config {
    Config {
        dataset_root: data.into(),
        output_dir: out.into(),
        epochs: 2,
        batch_size: 2,
        coarse_levels: 2,
        confidence_levels: 2,
        token_downsample: 2,
        ..Config::default()
    }
}

#[test]
fn two_epochs_reduce_the_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_corpus(&data, 5, 1, "day:0.5,night:0.5");
    let mut cfg = tiny_config(&data, &tmp.path().join("run"));
    cfg.batch_size = 1;
    assert_eq!(load_split(&data, "train").unwrap().len(), 4);
    let report = train(&cfg).unwrap();
    assert_eq!(report.log.len(), 2);
    let (first, last) = (report.log[0].losses, report.log[1].losses);
    assert!(last.total < first.total, "{first:?} -> {last:?}");
    for row in &report.log {
        let l = row.losses;
        let w = cfg.weights;
        let want = l.l_coa + w.beta * l.l_con + w.gamma * l.l_silog;
        assert!((l.total - want).abs() < 1e-9 * want.max(1.0));
        assert!(l.l_coa > 0.0 && l.l_con > 0.0 && l.l_silog > 0.0);
    }
    let log = fs::read_to_string(train_log_path(&cfg.output_dir)).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], pipeline::LOG_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    assert_eq!(report.checkpoints.len(), 2);
    for p in &report.checkpoints {
        assert!(p.exists());
    }
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_corpus(&data, 5, 2, "day:0.4,night:0.4,rain:0.2");
    let run = |name: &str, seed: u64| {
        let mut cfg = tiny_config(&data, &tmp.path().join(name));
        cfg.seed = seed;
        let rep = train(&cfg).unwrap();
        let samples = load_split(&data, "train").unwrap();
        let csv = evaluate_samples(&rep.model, &samples, cfg.eval_caps, EvalOptions::default())
            .unwrap()
            .to_csv();
        (artifact_bytes(&cfg.output_dir), csv)
    };
    let a = run("a", 5);
    let b = run("b", 5);
    assert_eq!(a.0.len(), 4);
    assert_eq!(a, b);
    let c = run("c", 6);
    assert_ne!(a.0, c.0);
}

#[test]
fn silog_only_training_logs_zero_auxiliary_terms() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_corpus(&data, 5, 3, "day:0.5,night:0.5");
    let mut cfg = tiny_config(&data, &tmp.path().join("run"));
    cfg.ablation.use_l_coa = false;
    cfg.ablation.use_l_con = false;
    let report = train(&cfg).unwrap();
    for row in &report.log {
        let l = row.losses;
        assert_eq!((l.l_coa, l.l_con), (0.0, 0.0));
        assert!((l.total - cfg.weights.gamma * l.l_silog).abs() < 1e-12);
    }
}

#[test]
fn default_training_stays_finite_over_five_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_corpus(&data, 5, 4, "day:0.4,night:0.4,rain:0.2");
    for seed in 0..5 {
        let mut cfg = tiny_config(&data, &tmp.path().join(format!("s{seed}")));
        cfg.seed = seed;
        cfg.epochs = 1;
        let report = train(&cfg).unwrap();
        assert!(report.log[0].losses.total.is_finite());
        assert!(report.model.params.all_finite());
    }
}

#[test]
fn evaluation_rows_and_ground_truth_injection() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_corpus(&data, 10, 5, "day:0.5,night:0.5");
    let cfg = tiny_config(&data, &tmp.path().join("run"));
    let ck = Checkpoint::fresh(&cfg).unwrap();
    let samples = load_split(&data, "train").unwrap();

    let report = evaluate_samples(&ck, &samples, cfg.eval_caps, EvalOptions::default()).unwrap();
    // Day, night and the aggregate; rain is absent and reported.
    assert_eq!(report.rows.len(), 3 * 3);
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains(Scenario::Rain.as_str()));
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 9);
    assert!(lines[0].starts_with("method,scenario,abs_rel,"));
    for m in Method::ALL {
        for g in ["day", "night", AGGREGATE] {
            assert!(report.get(m, g).is_some(), "{m} {g}");
            assert!(lines.iter().any(|l| l.starts_with(&format!("{m},{g},"))));
        }
    }

    let oracle = evaluate_samples(&ck, &samples, cfg.eval_caps, EvalOptions { inject_gt: true }).unwrap();
    for row in &oracle.rows {
        assert_eq!(row.record.abs_rel, 0.0);
        assert_eq!(row.record.rmse, 0.0);
        assert_eq!(row.record.delta1, 1.0);
    }
}

#[test]
fn evaluate_needs_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_corpus(&data, 3, 6, "day:1");
    let cfg = tiny_config(&data, tmp.path());
    let err = pipeline::evaluate(&cfg, &tmp.path().join("none.xmdw"), "test", EvalOptions::default());
    assert!(matches!(err, Err(Error::Io { .. })));
}

struct InferFixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    ckpt: PathBuf,
    sample: xmodal::scenes::SceneSample,
    sample_dir: PathBuf,
}

fn infer_fixture() -> InferFixture {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let index = tiny_corpus(&data, 3, 7, "night:1");
    let cfg = tiny_config(&data, &tmp.path().join("run"));
    let ck = Checkpoint::fresh(&cfg).unwrap();
    let ckpt = tmp.path().join("model.xmdw");
    ck.save(&ckpt).unwrap();
    let files = &index.split("test").unwrap()[0];
    let sample = xmodal::io::load_sample(files).unwrap();
    InferFixture {
        dir: tmp.path().to_path_buf(),
        sample_dir: files.calib().parent().unwrap().to_path_buf(),
        ckpt,
        sample,
        _tmp: tmp,
    }
}

impl InferFixture {
    fn request(&self, out: &str, emit_confidence: bool) -> InferRequest {
        InferRequest {
            rgb: self.sample_dir.join("rgb.ppm"),
            thr: self.sample_dir.join("thr.pgm"),
            calib: self.sample_dir.join("calib.txt"),
            ckpt: self.ckpt.clone(),
            out: self.dir.join(out),
            emit_confidence,
        }
    }
}

#[test]
fn inference_roundtrip_and_confidence_image() {
    let fx = infer_fixture();
    let res = infer(&fx.request("depth.pgm", true)).unwrap();
    let back = read_depth(&res.depth_path).unwrap();
    let mem = &res.prediction.fused;
    assert_eq!(back.extent(), mem.extent());
    assert!(back.valid().iter().all(|&v| v));
    for (a, b) in back.values().iter().zip(mem.values()) {
        assert!((a - b).abs() <= 1.0 / 256.0);
    }
    let conf_path = res.confidence_path.unwrap();
    assert_eq!(conf_path, fx.dir.join("depth_confidence.pgm"));
    let img = read_pnm(&conf_path).unwrap();
    assert_eq!((img.width, img.height, img.channels, img.maxval), (16, 16, 1, 255));
    let c = res.prediction.confidence.data();
    for (s, v) in img.samples.iter().zip(c) {
        assert!(*s <= 255);
        assert_eq!(*s, (255.0 * v).round() as u16);
    }
    // Same inputs as the in-memory pipeline.
    assert_eq!(fx.sample.i_rgb.shape(), &[3, 16, 16]);
}

#[test]
fn mismatched_calibration_writes_nothing() {
    let fx = infer_fixture();
    let bad_rgb = fx.dir.join("big.ppm");
    write_rgb(&bad_rgb, &xmodal::tensor::Tensor::full(vec![3, 18, 16], 0.5)).unwrap();
    let mut req = fx.request("out.pgm", true);
    req.rgb = bad_rgb;
    assert!(matches!(infer(&req), Err(Error::Format { .. })));
    let bad_thr = fx.dir.join("small.pgm");
    write_gray(&bad_thr, &xmodal::tensor::Tensor::full(vec![1, 4, 4], 0.5)).unwrap();
    let mut req = fx.request("out.pgm", true);
    req.thr = bad_thr;
    assert!(matches!(infer(&req), Err(Error::Format { .. })));
    assert!(!fx.dir.join("out.pgm").exists());
    assert!(!fx.dir.join("out_confidence.pgm").exists());
}

fn xmodal_cmd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_xmodal"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_workflow_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |p: &str| tmp.path().join(p).display().to_string();

    assert_eq!(xmodal_cmd(&[]).status.code(), Some(1));
    assert_eq!(xmodal_cmd(&["gen", "--n", "x", "--out", &t("d")]).status.code(), Some(1));
    assert_eq!(xmodal_cmd(&["--help"]).status.code(), Some(0));

    let out = xmodal_cmd(&["gen", "--n", "4", "--out", &t("d"), "--seed", "3", "--mix", "day:0.5,night:0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("d/train").is_dir());

    // Default 64x64 scenes; one epoch keeps this quick.
    fs::write(
        tmp.path().join("run.cfg"),
        "dataset_root = d\noutput_dir = run\nepochs = 1\ncoarse_levels = 2\n",
    )
    .unwrap();
    let out = xmodal_cmd(&["train", "--config", &t("run.cfg")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(pipeline::LOG_HEADER));
    let ckpt = final_checkpoint_path(&tmp.path().join("run"));
    assert!(ckpt.exists());

    let ck = ckpt.display().to_string();
    let out = xmodal_cmd(&["eval", "--config", &t("run.cfg"), "--ckpt", &ck, "--split", "train", "--out", &t("m.csv")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv, fs::read_to_string(tmp.path().join("m.csv")).unwrap());
    assert!(csv.starts_with("method,scenario,"));

    let sample = tmp.path().join("d/test").read_dir().unwrap().next().unwrap().unwrap().path();
    let s = |f: &str| sample.join(f).display().to_string();
    let args = ["infer", "--rgb", &s("rgb.ppm"), "--thr", &s("thr.pgm"), "--calib", &s("calib.txt"), "--ckpt", &ck, "--out", &t("pred.pgm"), "--emit-confidence"];
    assert_eq!(xmodal_cmd(&args).status.code(), Some(0));
    assert!(tmp.path().join("pred.pgm").exists() && tmp.path().join("pred_confidence.pgm").exists());

    // Data errors exit with 2.
    assert_eq!(xmodal_cmd(&["train", "--config", &t("missing.cfg")]).status.code(), Some(2));
    fs::write(tmp.path().join("bad.cfg"), "nonsense = 1\n").unwrap();
    assert_eq!(xmodal_cmd(&["train", "--config", &t("bad.cfg")]).status.code(), Some(2));
    let out = xmodal_cmd(&["eval", "--config", &t("run.cfg"), "--ckpt", &t("none"), "--split", "test"]);
    assert_eq!(out.status.code(), Some(2));
    let mut bad = args.map(String::from);
    bad[2] = s("thr.pgm");
    let bad: Vec<&str> = bad.iter().map(String::as_str).collect();
    assert_eq!(xmodal_cmd(&bad).status.code(), Some(2));
}
