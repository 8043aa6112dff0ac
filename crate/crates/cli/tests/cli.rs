use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use detkit::cost::CostComparison;
use detkit::losses::Target;
use detkit::postprocess::Detection;
use detkit::train::{save_weights, EvalSummary, ToyNet, ToyNetConfig};
use tempfile::TempDir;

fn detkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detkit"))
        .current_dir(dir)
        .env("DETKIT_VERIFY", "1")
        .args(args)
        .output()
        .expect("spawn detkit")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_weights(dir: &Path) -> &'static str {
    let o = detkit(dir, &["train", "weights=w.dkw", "epochs=2", "dataset_size=4", "batch_size=2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    "weights=w.dkw"
}

#[test]
fn gradcheck_unknown_filter_lists_names() {
    let d = TempDir::new().unwrap();
    let o = detkit(d.path(), &["gradcheck", "--filter", "no_such_op"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("wiou_loss") && stderr(&o).contains("conv2d"));
}

#[test]
fn gradcheck_passes_and_flags_perturbed_op() {
    let d = TempDir::new().unwrap();
    let ok = detkit(d.path(), &["gradcheck", "--filter", "c*", "--cases", "10", "--json", "rows.json"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("rows.json")).unwrap()).unwrap();
    assert!(rows.as_array().unwrap().iter().all(|r| r["max_rel_error"].as_f64().unwrap() < 1e-4));

    let bad = detkit(d.path(), &["gradcheck", "--filter", "c*", "--cases", "10", "--perturb", "ciou_loss"]);
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("ciou_loss"));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn bench_ratio_column_and_resummed_totals() {
    let d = TempDir::new().unwrap();
    let o = detkit(d.path(), &["bench", "--cp-fraction", "1.0", "--csv", "full.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(d.path().join("full.csv")).unwrap());
    assert!(rows.iter().all(|r| r[9] == "1"));

    let o = detkit(d.path(), &["bench", "--cp-fraction", "0.25", "--csv", "q.csv", "--json", "q.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(d.path().join("q.csv")).unwrap());
    let pconv: Vec<_> = rows.iter().filter(|r| r[0].ends_with(".pconv")).collect();
    assert!(!pconv.is_empty() && pconv.iter().all(|r| r[9] == "0.25"));

    let cmp: CostComparison = serde_json::from_str(&fs::read_to_string(d.path().join("q.json")).unwrap()).unwrap();
    let sum = |col: usize| rows.iter().map(|r| r[col].parse::<u64>().unwrap()).sum::<u64>();
    assert_eq!(sum(1), cmp.pconv.totals.params);
    assert_eq!(sum(2), cmp.pconv.totals.macs);
    assert_eq!(sum(4), cmp.pconv.totals.mem_access_approx);
    assert_eq!(sum(5), cmp.full.totals.params);
    assert!(cmp.pconv.totals.params < cmp.full.totals.params);
}

#[test]
fn bench_reports_spec_line_number() {
    let d = TempDir::new().unwrap();
    fs::write(
        d.path().join("net.txt"),
        "input = 3x32x32\nlayer = conv stem out=8 k=3 s=2 p=1\nlayer = warp w0\n",
    )
    .unwrap();
    let o = detkit(d.path(), &["bench", "net.txt"]);
    assert_eq!(code(&o), 9);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(
        d.path().join("ok.txt"),
        "input = 3x32x32\nlayer = conv stem out=16 k=3 s=2 p=1\nlayer = fasternet b0 k=3 expansion=2 act=relu\n",
    )
    .unwrap();
    let o = detkit(d.path(), &["bench", "ok.txt", "--cp-fraction", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn train_eval_is_byte_reproducible() {
    let d = TempDir::new().unwrap();
    let run = |tag: &str| {
        let w = format!("weights={tag}.dkw");
        let t = detkit(
            d.path(),
            &["train", &w, &format!("stats={tag}.jsonl"), "epochs=3", "dataset_size=6", "batch_size=3"],
        );
        assert_eq!(code(&t), 0, "{}", stderr(&t));
        let e = detkit(
            d.path(),
            &["eval", &w, &format!("summary={tag}.json"), &format!("curve={tag}.csv"), "dataset_size=6"],
        );
        assert_eq!(code(&e), 0, "{}", stderr(&e));
        let read = |ext: &str| fs::read(d.path().join(format!("{tag}.{ext}"))).unwrap();
        (read("dkw"), read("json"), read("jsonl"))
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let summary: EvalSummary = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(serde_json::to_string_pretty(&summary).unwrap() + "\n", String::from_utf8(a.1).unwrap());
    assert_eq!(String::from_utf8(a.2).unwrap().lines().count(), 3);
}

#[test]
fn eval_of_ground_truth_is_all_ones() {
    let d = TempDir::new().unwrap();
    let o = detkit(d.path(), &["synth", "--out", "data", "--count", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut preds = Vec::new();
    for i in 0..5 {
        let gts: Vec<Target> =
            serde_json::from_str(&fs::read_to_string(d.path().join(format!("data/{i:04}.json"))).unwrap()).unwrap();
        preds.push(gts.iter().map(|t| Detection::new(t.bbox, 0.9, t.class_id).unwrap()).collect::<Vec<_>>());
    }
    fs::write(d.path().join("preds.json"), serde_json::to_string(&preds).unwrap()).unwrap();
    let o = detkit(d.path(), &["eval", "dataset=data", "predictions=preds.json", "summary=s.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: EvalSummary = serde_json::from_str(&fs::read_to_string(d.path().join("s.json")).unwrap()).unwrap();
    assert_eq!((s.precision, s.recall, s.f1, s.ap, s.map), (1.0, 1.0, 1.0, 1.0, 1.0));
}

#[test]
fn detect_with_zero_model_on_blank_image() {
    let d = TempDir::new().unwrap();
    save_weights(&ToyNet::zeros(&ToyNetConfig::default()).unwrap(), &d.path().join("zero.dkw")).unwrap();
    let mut img = b"P6\n48 40\n255\n".to_vec();
    img.extend(std::iter::repeat_n(0u8, 48 * 40 * 3));
    fs::write(d.path().join("blank.ppm"), img).unwrap();

    let o = detkit(
        d.path(),
        &["detect", "weights=zero.dkw", "image=blank.ppm", "score_threshold=0.3", "detections=d.json", "overlay=o.ppm"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(doc["detections"], serde_json::json!([]));
    assert_eq!((doc["width"].as_u64(), doc["height"].as_u64()), (Some(48), Some(40)));
    assert!(fs::read(d.path().join("o.ppm")).unwrap().starts_with(b"P6\n48 40\n255\n"));

    // every cell scores exactly 0.5 * 0.5 under the zero model
    let o = detkit(d.path(), &["detect", "weights=zero.dkw", "image=blank.ppm"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let dets: Vec<Detection> = serde_json::from_value(doc["detections"].clone()).unwrap();
    assert!(dets.iter().all(|d| d.score == 0.25));
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    let w = tiny_weights(p);

    assert_eq!(code(&detkit(p, &["detect", "weights=missing.dkw", "image=x.ppm"])), 4);
    assert_eq!(code(&detkit(p, &["eval", "weights=missing.dkw", "summary=s.json"])), 4);
    assert_eq!(code(&detkit(p, &["detect", w, "image=missing.ppm"])), 5);
    fs::write(p.join("bad.ppm"), b"P6\n4 4\n255\n\x00\x01").unwrap();
    assert_eq!(code(&detkit(p, &["detect", w, "image=bad.ppm"])), 5);

    let bytes = fs::read(p.join("w.dkw")).unwrap();
    let mut v = bytes.clone();
    v[4] = 7;
    fs::write(p.join("v.dkw"), &v).unwrap();
    assert_eq!(code(&detkit(p, &["report", "weights=v.dkw"])), 6);
    let mut c = bytes.clone();
    c[bytes.len() / 2] ^= 0x10;
    fs::write(p.join("c.dkw"), &c).unwrap();
    let o = detkit(p, &["report", "weights=c.dkw"]);
    assert_eq!(code(&o), 7);
    assert!(stderr(&o).contains("checksum"));

    let o = detkit(p, &["train", "weights=x.dkw", "warmup=3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown key"));
    assert_eq!(code(&detkit(p, &["train", "weights=nodir/x.dkw", "epochs=1"])), 2);
    assert_eq!(code(&detkit(p, &["train", "epochs=1"])), 2);

    fs::write(p.join("run.cfg"), "epochs = 1\nweights = y.dkw\nlearning rate = 3\n").unwrap();
    let o = detkit(p, &["train", "--config", "run.cfg"]);
    assert_eq!(code(&o), 9);
    assert!(stderr(&o).contains("line 3"));
    assert!(!p.join("y.dkw").exists());
}

#[test]
fn report_and_detect_outputs_round_trip() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    let w = tiny_weights(p);
    let o = detkit(p, &["report", w, "dataset_size=4", "report=r.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    let s: EvalSummary = serde_json::from_value(doc["summary"].clone()).unwrap();
    let cmp: CostComparison = serde_json::from_value(doc["comparison"].clone()).unwrap();
    assert_eq!(s.params, cmp.pconv.totals.params);
    assert!(String::from_utf8_lossy(&o.stdout).contains("model size (MB)"));

    let o = detkit(p, &["synth", "--out", "imgs", "--count", "1", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let o = detkit(p, &["detect", w, "image=imgs/0000.ppm", "detections=d.json", "score_threshold=0.0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("d.json")).unwrap()).unwrap();
    let dets: Vec<Detection> = serde_json::from_value(doc["detections"].clone()).unwrap();
    assert_eq!(serde_json::to_value(&dets).unwrap(), doc["detections"]);
}
