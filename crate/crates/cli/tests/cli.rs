use std::path::Path;
use std::process::{Command, Output};

use mssnet_cli::commands::sidecar_path;
use mssnet_cli::config::RunConfig;
use mssnet_cli::image_io::{load_image, save_image};
use mssnet_cli::weights::save_weights;
use mssnet_core::model::{build_model, preset};
use mssnet_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mssnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mssnet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn audit_reports_and_exit_codes() {
    let o = mssnet(&["audit", "MSSNet-small"]);
    let text = stdout(&o);
    assert!(text.contains("720x1280"), "{text}");
    assert!(text.contains("params") && text.contains("PASS"));
    let o = mssnet(&["audit", "MSSNet-large", "--format", "kv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let kv = stdout(&o);
    assert!(kv.lines().any(|l| l == "pass.params = true"));
    assert!(kv.lines().any(|l| l.starts_with("total.macs = ")));

    assert_eq!(mssnet(&["audit", "tiny"]).status.code(), Some(1));
    assert_eq!(mssnet(&["audit", "NoSuchNet"]).status.code(), Some(1));
}

#[test]
fn usage_errors_are_nonzero() {
    let o = mssnet(&["frobnicate"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_ne!(mssnet(&["audit", "MSSNet", "--bogus"]).status.code(), Some(0));
}

fn zeroed_tiny_checkpoint(dir: &Path) -> std::path::PathBuf {
    let mut m = build_model::<f32>(&preset("tiny").unwrap(), 0).unwrap();
    let id = m.store.id("final").unwrap();
    m.store.value_mut(id).fill(0.0);
    let w = dir.join("zero.mssw");
    save_weights(&m.store, &w).unwrap();
    RunConfig::default().save(&sidecar_path(&w)).unwrap();
    w
}

#[test]
fn infer_with_zeroed_final_head_returns_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let w = zeroed_tiny_checkpoint(dir.path());
    let input = dir.path().join("in.png");
    let img = Tensor::<f32>::uniform([1, 3, 21, 30], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    save_image(&img, &input).unwrap();
    let out = dir.path().join("out.png");
    let o = mssnet(&["infer", "--weights", p(&w), "--in", p(&input), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_image::<f32>(&out).unwrap(), load_image::<f32>(&input).unwrap());

    let missing = mssnet(&["infer", "--weights", p(&w), "--in", "/nonexistent.png", "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn eval_on_identical_pairs_hits_the_caps() {
    let dir = tempfile::tempdir().unwrap();
    let w = zeroed_tiny_checkpoint(dir.path());
    let data = dir.path().join("data");
    let o = mssnet(&["make-toy-data", "--out", p(&data), "--len", "1", "--count", "3", "--size", "24"]);
    assert_eq!(o.status.code(), Some(0));
    for n in ["0000.png", "0001.png", "0002.png"] {
        let b = load_image::<f32>(&data.join("blur").join(n)).unwrap();
        assert_eq!(b, load_image::<f32>(&data.join("sharp").join(n)).unwrap());
    }
    let o = mssnet(&["eval", "--weights", p(&w), "--data", p(&data), "--per-image"]);
    let text = stdout(&o);
    assert!(text.contains("images 3 psnr 100.0000 ssim 1.00000"), "{text}");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn make_toy_data_blurs_supplied_images() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    save_image(&Tensor::<f32>::full([1, 3, 16, 16], 0.4), &src.join("flat.png")).unwrap();
    let out = dir.path().join("pairs");
    let o = mssnet(&["make-toy-data", "--sharp", p(&src), "--out", p(&out), "--len", "9", "--angle", "35"]);
    assert_eq!(o.status.code(), Some(0));
    let b = load_image::<f32>(&out.join("blur/flat.png")).unwrap();
    assert_eq!(b, load_image::<f32>(&src.join("flat.png")).unwrap());
}

#[test]
fn training_is_bit_reproducible_and_resumable_as_inference() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(mssnet(&["make-toy-data", "--out", p(&data), "--count", "2", "--size", "32"]).status.code(), Some(0));
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "variant = \"tiny\"\niters = 4\nbatch = 2\npatch = 16\nseed = 5\n").unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.mssw"));
        let o = mssnet(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let hist = std::fs::read_to_string(format!("{}.csv", out.display())).unwrap();
        (std::fs::read(&out).unwrap(), hist, out)
    };
    let (wa, ha, out) = run("a");
    let (wb, hb, _) = run("b");
    assert_eq!(wa, wb);
    assert_eq!(ha, hb);
    assert_eq!(ha.lines().next(), Some("iteration,lr,cont,freq,total"));
    assert_eq!(ha.lines().count(), 5);
    assert!(sidecar_path(&out).exists());

    let img = data.join("blur/0000.png");
    let res = dir.path().join("res.png");
    let o = mssnet(&["infer", "--weights", p(&out), "--in", p(&img), "--out", p(&res)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(load_image::<f32>(&res).unwrap().shape(), load_image::<f32>(&img).unwrap().shape());

    std::fs::write(&cfg, "variant = \"tiny\"\nepochs = 3\n").unwrap();
    let o = mssnet(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_subcommand() {
    let o = mssnet(&["gradcheck", "tiny"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
}
