use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ijscc::channel::rate_budget;
use ijscc::codec::deserialize_artifact;
use ijscc::pnm;

fn astronaut() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/astronaut_64.ppm")
}

fn ijscc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ijscc")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Number after `label` on the first line containing it.
fn number_after(text: &str, label: &str) -> f64 {
    let line = text.lines().find(|l| l.contains(label)).unwrap_or_else(|| panic!("no {label:?} in {text}"));
    let rest = &line[line.find(label).unwrap() + label.len()..];
    rest.split_whitespace().next().unwrap().parse().unwrap()
}

fn encode(dir: &Path, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let artifact = dir.join(name);
    let src = astronaut();
    let mut args = vec!["encode", "-i", src.to_str().unwrap(), "-o", artifact.to_str().unwrap(), "--no-timing"];
    args.extend_from_slice(extra);
    let out = ijscc(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (artifact, out)
}

#[test]
fn encode_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let report = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (a, _) = encode(dir.path(), "a.ijsc", &["--steps", "60", "--seed", "3", "--report", &report("a.csv")]);
    let (b, _) = encode(dir.path(), "b.ijsc", &["--steps", "60", "--seed", "3", "--report", &report("b.csv")]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(report("a.csv")).unwrap(), fs::read(report("b.csv")).unwrap());
    let (c, _) = encode(dir.path(), "c.ijsc", &["--steps", "60", "--seed", "4"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn artifact_payload_matches_channel_uses() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out) = encode(dir.path(), "a.ijsc", &["--steps", "20", "--d", "6", "--kappa-lsm", "3"]);
    let art = deserialize_artifact(&fs::read(a).unwrap()).unwrap();
    let pixels = art.source.padded_pixels();
    let budget = rate_budget(&art.config, pixels).unwrap();
    assert_eq!(art.symbols.flat_len(), art.config.symbol_reals(pixels));
    assert_eq!(art.symbols.flat_len().div_ceil(2), budget.channel_uses_x);
    assert_eq!(art.params.len(), art.config.param_count());
    assert_eq!(art.repetition_plan().unwrap().stream_len().div_ceil(2), budget.channel_uses_theta);
    let text = stdout(&out);
    assert_eq!(number_after(&text, "channel_uses_x=") as usize, budget.channel_uses_x);
    assert_eq!(number_after(&text, "channel_uses_theta=") as usize, budget.channel_uses_theta);
}

#[test]
fn infeasible_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = astronaut();
    let out = ijscc(&["encode", "-i", src.to_str().unwrap(), "-o", dir.path().join("x").to_str().unwrap(), "--budget", "0.1"]);
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("x").exists());
}

#[test]
fn decode_without_reference_writes_image() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = encode(dir.path(), "a.ijsc", &["--steps", "20"]);
    let img = dir.path().join("rec.ppm");
    let out = ijscc(&["decode", "-a", a.to_str().unwrap(), "-o", img.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty());
    let rec = pnm::load_image(&img).unwrap();
    assert_eq!(rec.shape(), pnm::load_image(astronaut()).unwrap().shape());
}

#[test]
fn channel_seed_changes_the_realisation() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = encode(dir.path(), "a.ijsc", &["--steps", "60", "--snr", "0"]);
    let src = astronaut();
    let psnr = |seed: &str, idx: &str| {
        let img = dir.path().join(format!("rec_{seed}_{idx}.ppm"));
        let out = ijscc(&[
            "decode", "-a", a.to_str().unwrap(), "-o", img.to_str().unwrap(), "-r", src.to_str().unwrap(),
            "--channel-seed", seed, "--realization", idx,
        ]);
        assert_eq!(code(&out), 0);
        number_after(&stdout(&out), "psnr:")
    };
    let base = psnr("1", "0");
    assert_eq!(base, psnr("1", "0"));
    assert_ne!(base, psnr("2", "0"));
    assert_ne!(base, psnr("1", "1"));
}

#[test]
fn noiseless_decode_reproduces_training_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out) = encode(dir.path(), "a.ijsc", &["--steps", "80", "--snr", "inf"]);
    let trained = number_after(&stdout(&out), "psnr");
    let src = astronaut();
    let img = dir.path().join("rec.ppm");
    let dec = ijscc(&["decode", "-a", a.to_str().unwrap(), "-o", img.to_str().unwrap(), "-r", src.to_str().unwrap()]);
    assert_eq!(code(&dec), 0);
    let text = stdout(&dec);
    assert!((number_after(&text, "psnr:") - trained).abs() < 1e-9, "{text} vs {trained}");
    assert!(text.contains("ms-ssim:"));
    assert_eq!(number_after(&text, "params:") as usize, 607);
}

#[test]
fn dump_symbols_writes_every_plane() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = encode(dir.path(), "a.ijsc", &["--steps", "10"]);
    let dump = dir.path().join("dump");
    let out = ijscc(&["dump-symbols", "-a", a.to_str().unwrap(), "--outdir", dump.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    // 7 levels in, 7 levels out, 7 upsampled channels.
    assert_eq!(fs::read_dir(&dump).unwrap().count(), 21);
    let finest = pnm::load_image(dump.join("input_l1_c1.pgm")).unwrap().shape();
    let coarsest = pnm::load_image(dump.join("output_l7_c1.pgm")).unwrap().shape();
    assert_eq!((coarsest.height, coarsest.width), (1, 1));
    assert_eq!((finest.height, finest.width), (64, 64));
    let up = pnm::load_image(dump.join("redu_c7.pgm")).unwrap().shape();
    assert_eq!((up.channels, up.height, up.width), (1, 64, 64));
}

#[test]
fn sweep_rows_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("out");
    let cfg = dir.path().join("sweep.cfg");
    fs::write(
        &cfg,
        format!(
            "source = {}\nsnr_db = 0, 10\nsteps = 30\npairs = 12:25, 6:3\nrepeats = 2\neval_draws = 2\noutdir = {}\n",
            astronaut().display(),
            outdir.display()
        ),
    )
    .unwrap();
    let out = ijscc(&["sweep", "--config", cfg.to_str().unwrap(), "--no-timing"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(outdir.join("results.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    let mut seeds: Vec<&str> = Vec::new();
    for r in &rows {
        let f = |name: &str| r[col(name)].parse::<f64>().unwrap();
        assert_eq!(&r[col("status")], "ok");
        assert!((f("r_x") + f("r_theta") - f("r_total")).abs() < 1e-12);
        assert!(f("psnr_mean").is_finite() && f("psnr_std") >= 0.0);
        assert_eq!(f("encode_seconds"), 0.0);
        seeds.push(&r[col("seed")]);
    }
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), rows.len());
    for name in ["psnr_vs_snr.dat", "psnr_vs_steps.dat", "psnr_vs_mults.dat"] {
        let text = fs::read_to_string(outdir.join(name)).unwrap();
        assert!(text.lines().count() >= 2, "{name}");
    }
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();

    fs::write(path("empty.cfg"), "snr_db =\n").unwrap();
    fs::write(path("unknown.cfg"), "colour = red\n").unwrap();
    assert_eq!(code(&ijscc(&["sweep", "--config", &path("empty.cfg")])), 1);
    assert_eq!(code(&ijscc(&["sweep", "--config", &path("unknown.cfg")])), 2);
    assert_eq!(code(&ijscc(&["encode", "-i", &path("missing.ppm"), "-o", &path("x")])), 1);
    assert_eq!(code(&ijscc(&["encode", "--bogus"])), 1);
    assert_eq!(code(&ijscc(&["--help"])), 0);

    fs::write(path("bad.ppm"), "P6\n4 4\n255\nshort").unwrap();
    assert_eq!(code(&ijscc(&["encode", "-i", &path("bad.ppm"), "-o", &path("x")])), 2);

    let (a, _) = encode(dir.path(), "a.ijsc", &["--steps", "5"]);
    let mut bytes = fs::read(&a).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(path("cut.ijsc"), &bytes).unwrap();
    assert_eq!(code(&ijscc(&["decode", "-a", &path("cut.ijsc"), "-o", &path("r.ppm")])), 2);
    bytes[0] = b'X';
    fs::write(path("magic.ijsc"), &bytes).unwrap();
    assert_eq!(code(&ijscc(&["decode", "-a", &path("magic.ijsc"), "-o", &path("r.ppm")])), 2);
}

#[test]
fn info_reports_reference_counts() {
    let out = ijscc(&["info", "--height", "512", "--width", "768", "--budget", "0.2292"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(number_after(&text, "params:") as usize, 607);
    assert_eq!(number_after(&text, "kappa_redu from budget:") as usize, 45);
    assert!(number_after(&text, "r_total=") <= 0.2292);
    assert_eq!(code(&ijscc(&["info", "--height", "64"])), 1);
}
