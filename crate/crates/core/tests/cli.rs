mod oracles;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcv::geometry::Lattice;
use mcv::imageio::{load_labels, load_pnm, save_labels, save_pnm, ImageBuffer, LabelFormat, LabelImage, PnmFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn mcv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcv")).args(args).output().expect("spawn mcv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pgm(dir: &Path, name: &str, w: u32, h: u32, f: impl FnMut(mcv::Pixel) -> f64) -> PathBuf {
    let img = ImageBuffer::from_fn(Lattice::new(w, h).unwrap(), 255, f).unwrap();
    let path = dir.join(name);
    fs::write(&path, save_pnm(&img, PnmFormat::P5).unwrap()).unwrap();
    path
}

fn write_labels(dir: &Path, name: &str, w: u32, h: u32, labels: Vec<u32>) -> PathBuf {
    let lm = LabelImage::new(Lattice::new(w, h).unwrap(), labels).unwrap();
    let path = dir.join(name);
    fs::write(&path, save_labels(&lm, LabelFormat::Csv).unwrap()).unwrap();
    path
}

fn stats(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("stats.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn stat(dir: &Path, key: &str) -> String {
    stats(dir).into_iter().find(|(k, _)| k == key).map(|(_, v)| v).unwrap_or_default()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn segment_constant_image() {
    let tmp = TempDir::new().unwrap();
    let input = write_pgm(tmp.path(), "flat.pgm", 8, 8, |_| 100.0);
    let out = tmp.path().join("out");
    let o = mcv(&["segment", s(&input), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let color = load_pnm(&fs::read(out.join("final.ppm")).unwrap()).unwrap();
    assert_eq!(color.bands(), 3);
    let first = color.pixel_at(0).to_vec();
    assert!((0..64).all(|i| color.pixel_at(i) == first.as_slice()));

    for i in 1..=9 {
        assert!(out.join(format!("level_{i}.pgm")).exists(), "level {i}");
    }
    let last = load_labels(&fs::read(out.join("level_9.pgm")).unwrap()).unwrap();
    assert!(last.labels().iter().all(|&l| l == 0));
    assert_eq!(stat(&out, "final_regions"), "1");
    assert_eq!(stat(&out, "level_9_regions"), "1");
    assert!(stat(&out, "elapsed_ms").is_empty());
}

#[test]
fn missing_input_leaves_nothing_behind() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = mcv(&["segment", s(&tmp.path().join("nope.pgm")), "--out", s(&out)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(!out.exists());
}

#[test]
fn bad_image_and_bad_config_fail_cleanly() {
    let tmp = TempDir::new().unwrap();
    let junk = tmp.path().join("junk.pgm");
    fs::write(&junk, b"P5\n4 4\n255\nabc").unwrap();
    let out = tmp.path().join("out");
    let o = mcv(&["segment", s(&junk), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
    assert!(!out.exists());

    let input = write_pgm(tmp.path(), "a.pgm", 4, 4, |_| 1.0);
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = mcv(&["segment", s(&input), "--out", s(&out), "--config", s(&cfg)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = write_pgm(tmp.path(), "noise.pgm", 20, 15, |p| {
        (if p.col > 10 { 180.0 } else { 40.0 }) + rng.gen_range(0..6) as f64
    });
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = mcv(&["segment", s(&input), "--out", s(out), "--levels", "3", "--seed", "7"]);
        assert!(o.status.success());
    }
    let ta = tree(&a);
    assert_eq!(ta.len(), 5);
    assert_eq!(ta, tree(&b));
    let c = tmp.path().join("c");
    assert!(mcv(&["segment", s(&input), "--out", s(&c), "--levels", "3", "--seed", "7", "--workers", "3"])
        .status
        .success());
    assert_eq!(ta, tree(&c));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let input = write_pgm(tmp.path(), "in.pgm", 6, 5, |p| f64::from(p.col * 20));
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# settings\nmax_level = 2\nseed = 3\npermutation = raster\nrho = 5\n").unwrap();
    let out = tmp.path().join("out");
    let o = mcv(&["segment", s(&input), "--out", s(&out), "--config", s(&cfg), "--seed", "11", "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stat(&out, "levels"), "2");
    assert_eq!(stat(&out, "seed"), "11");
    assert_eq!(stat(&out, "permutation"), "raster");
    assert_eq!(stat(&out, "rho"), "5");
    assert!(out.join("level_2.csv").exists());
    assert!(!out.join("level_3.csv").exists());
}

#[test]
fn permutation_file_matches_raster() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let input = write_pgm(tmp.path(), "in.pgm", 7, 6, |_| rng.gen_range(0..30) as f64);
    let perm = tmp.path().join("perm.txt");
    fs::write(&perm, (0..42).map(|i| format!("{i}\n")).collect::<String>()).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let file_arg = format!("file:{}", s(&perm));
    assert!(mcv(&["segment", s(&input), "--out", s(&a), "--levels", "3", "--perm", &file_arg]).status.success());
    assert!(mcv(&["segment", s(&input), "--out", s(&b), "--levels", "3", "--perm", "raster"]).status.success());
    for i in 1..=3 {
        let name = format!("level_{i}.pgm");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    fs::write(&perm, "0\n1\n").unwrap();
    assert!(!mcv(&["segment", s(&input), "--out", s(&tmp.path().join("c")), "--perm", &file_arg]).status.success());
}

#[test]
fn all_segment_flags_are_accepted() {
    let tmp = TempDir::new().unwrap();
    let input = write_pgm(tmp.path(), "in.pgm", 9, 9, |p| f64::from(p.row));
    let out = tmp.path().join("out");
    let o = mcv(&[
        "segment", s(&input), "--out", s(&out), "--levels", "2", "--seed", "1", "--perm", "random",
        "--rho", "3", "--temp", "2", "--metric", "l1", "--eval", "pyramid", "--workers", "2",
        "--neighborhood", "4", "--timing",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stat(&out, "elapsed_ms").is_empty());
    assert_eq!(stat(&out, "temperature"), "2");
    assert!(!mcv(&["segment", s(&input), "--out", s(&out), "--neighborhood", "6"]).status.success());
}

#[test]
fn components_command() {
    let tmp = TempDir::new().unwrap();
    let constant = write_labels(tmp.path(), "c.csv", 5, 4, vec![3; 20]);
    let out = tmp.path().join("c_out.csv");
    assert!(mcv(&["components", s(&constant), s(&out)]).status.success());
    assert!(load_labels(&fs::read(&out).unwrap()).unwrap().labels().iter().all(|&l| l == 0));

    let half = write_pgm(tmp.path(), "half.pgm", 6, 4, |p| if p.col <= 3 { 0.0 } else { 1.0 });
    let out = tmp.path().join("half_out.pgm");
    assert!(mcv(&["components", s(&half), s(&out)]).status.success());
    let got = load_labels(&fs::read(&out).unwrap()).unwrap();
    let mut distinct = got.labels().to_vec();
    distinct.sort();
    distinct.dedup();
    assert_eq!(distinct.len(), 2);

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let classes: Vec<u32> = (0..256).map(|_| rng.gen_range(0..2)).collect();
    let input = write_labels(tmp.path(), "bin.csv", 16, 16, classes.clone());
    let out = tmp.path().join("bin_out.csv");
    assert!(mcv(&["components", s(&input), s(&out)]).status.success());
    let got = load_labels(&fs::read(&out).unwrap()).unwrap();
    // Components of each class separately, combined with distinct numbering.
    let mut want = vec![0u32; 256];
    for class in 0..2 {
        let mask: Vec<bool> = classes.iter().map(|&c| c == class).collect();
        let comp = oracles::bfs_components(&mask, 16, 16, true);
        for i in 0..256 {
            if mask[i] {
                want[i] = comp[i] * 2 + class;
            }
        }
    }
    assert_eq!(got.labels(), oracles::first_occurrence(&want).as_slice());
}

#[test]
fn rand_command() {
    let tmp = TempDir::new().unwrap();
    let a = write_labels(tmp.path(), "a.csv", 3, 1, vec![0, 0, 1]);
    let b = write_labels(tmp.path(), "b.csv", 3, 1, vec![0, 1, 1]);
    let run = |x: &Path, y: &Path| {
        let o = mcv(&["rand", s(x), s(y)]);
        assert!(o.status.success());
        String::from_utf8(o.stdout).unwrap()
    };
    assert_eq!(run(&a, &a), "1.000000\n");
    assert_eq!(run(&a, &b), "0.333333\n");
    let single = write_labels(tmp.path(), "s.csv", 2, 1, vec![0, 1]);
    let block = write_labels(tmp.path(), "k.csv", 2, 1, vec![5, 5]);
    assert_eq!(run(&single, &block), "0.000000\n");

    let tall = write_labels(tmp.path(), "t.csv", 1, 3, vec![0, 0, 1]);
    let o = mcv(&["rand", s(&a), s(&tall)]);
    assert!(!o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stderr).trim_end().lines().count(), 1);
}

#[test]
fn usage_errors() {
    assert!(!mcv(&[]).status.success());
    assert!(!mcv(&["segment"]).status.success());
    assert!(mcv(&["--help"]).status.success());
}
