use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fallsense_core::Report;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fallsense"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(count: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let out = run(&["synth", "--root", s(&corpus), "--count", &count.to_string(), "--duration", "4"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn extract(&self) -> PathBuf {
        let cache = self.path("features.csv");
        let out = run(&["extract", "--root", s(&self.path("corpus")), "--cache", s(&cache)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        cache
    }
}

fn read_report(dir: &Path) -> Report {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn extract_without_root_is_config_error() {
    let out = run(&["extract"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("root"));
}

#[test]
fn extract_missing_or_empty_root_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(code(&run(&["extract", "--root", s(&missing), "--cache", s(&dir.path().join("c.csv"))])), 2);
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(code(&run(&["extract", "--root", s(&empty), "--cache", s(&dir.path().join("c.csv"))])), 2);
}

#[test]
fn malformed_line_exits_3_with_location() {
    let f = Fixture::new(2);
    let bad = f.path("corpus").join("SY01").join("F01_SY01_R01.txt");
    let mut text = std::fs::read_to_string(&bad).unwrap();
    text.push_str("1,2,three,4,5,6,7,8,9;\n");
    std::fs::write(&bad, text).unwrap();
    let out = run(&["extract", "--root", s(&f.path("corpus")), "--cache", s(&f.path("c.csv"))]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("F01_SY01_R01.txt"), "{err}");
    assert!(!f.path("c.csv").exists(), "no partial cache on failure");
}

#[test]
fn evaluate_without_cache_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["evaluate", "--cache", s(&dir.path().join("missing.csv")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_flags_exit_2() {
    assert_eq!(code(&run(&["evaluate", "--folds", "1"])), 2);
    assert_eq!(code(&run(&["evaluate", "--classifiers", "knn,forest"])), 2);
    assert_eq!(code(&run(&["evaluate", "--workers", "0"])), 2);
}

#[test]
fn corrupt_cache_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c.csv");
    std::fs::write(&cache, "meta,label\nF01_SA01_R01.txt,FALL\n").unwrap();
    let out = run(&["evaluate", "--cache", s(&cache), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn single_class_cache_exits_4() {
    let f = Fixture::new(6);
    let cache = f.extract();
    let text = std::fs::read_to_string(&cache).unwrap();
    let falls: Vec<&str> = text.lines().filter(|l| !l.contains(",ADL,")).collect();
    std::fs::write(&cache, falls.join("\n") + "\n").unwrap();
    let out = run(&["evaluate", "--cache", s(&cache), "--out", s(&f.path("r")), "--folds", "3"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unwritable_out_dir_exits_2() {
    let f = Fixture::new(5);
    let cache = f.extract();
    let blocker = f.path("blocker");
    std::fs::write(&blocker, "file, not a directory").unwrap();
    let out = run(&["evaluate", "--cache", s(&cache), "--out", s(&blocker.join("sub")), "--folds", "2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn classifier_subset_and_outputs() {
    let f = Fixture::new(10);
    let cache = f.extract();
    let out_dir = f.path("reports");
    let out = run(&[
        "evaluate", "--cache", s(&cache), "--out", s(&out_dir), "--classifiers", "knn,svm", "--folds", "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("KNN") && table.contains("SVM") && !table.contains("DT "));
    let report = read_report(&out_dir);
    assert_eq!(report.classifiers.len(), 2);
    assert_eq!(report.rows, 20);
    for c in &report.classifiers {
        assert_eq!(c.per_fold.len(), 5);
        assert_eq!(c.pooled.total(), 20);
    }
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("classifier,fold,tp,fn,fp,tn"));
    assert!(out_dir.join("timing.json").is_file());
}

#[test]
fn cli_flags_override_config_file() {
    let f = Fixture::new(8);
    let cache = f.extract();
    let cfg = f.path("run.cfg");
    std::fs::write(
        &cfg,
        format!("# test\nseed = 5\nfolds = 4\nclassifiers = dt,lr\ncache = {}\n", cache.display()),
    )
    .unwrap();
    let out_dir = f.path("r");
    let out = run(&["evaluate", "--config", s(&cfg), "--seed", "7", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&out_dir);
    assert_eq!(report.config.seed, 7);
    assert_eq!(report.config.folds, 4);
    assert_eq!(report.classifiers.len(), 2);
}

#[test]
fn bad_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "folds = ten\n").unwrap();
    assert_eq!(code(&run(&["evaluate", "--config", s(&cfg)])), 2);
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&run(&["evaluate", "--config", s(&cfg)])), 2);
}

#[test]
fn filter_check_prints_response() {
    let out = run(&["filter-check"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frequency_hz,magnitude,analytic_magnitude"));
    assert!(lines.count() >= 50);

    let dir = tempfile::tempdir().unwrap();
    let out = run(&["filter-check", "--points", "10", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0);
    let written = std::fs::read_to_string(dir.path().join("filter_response.csv")).unwrap();
    assert!(written.lines().count() > 10);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str, seed: &str| {
        let root = dir.path().join(name);
        assert_eq!(code(&run(&["synth", "--root", s(&root), "--count", "3", "--duration", "2", "--seed", seed])), 0);
        let mut files: Vec<(String, Vec<u8>)> = walk(&root)
            .into_iter()
            .map(|p| (p.strip_prefix(&root).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let a = gen("a", "11");
    assert_eq!(a.len(), 6);
    assert_eq!(a, gen("b", "11"));
    assert_ne!(a, gen("c", "12"));
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn workers_do_not_change_results() {
    let f = Fixture::new(8);
    let root = f.path("corpus");
    let c1 = f.path("c1.csv");
    let c4 = f.path("c4.csv");
    assert_eq!(code(&run(&["extract", "--root", s(&root), "--cache", s(&c1), "--workers", "1"])), 0);
    assert_eq!(code(&run(&["extract", "--root", s(&root), "--cache", s(&c4), "--workers", "4"])), 0);
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c4).unwrap());
    let r1 = f.path("r1");
    let r4 = f.path("r4");
    assert_eq!(code(&run(&["evaluate", "--cache", s(&c1), "--out", s(&r1), "--workers", "1", "--folds", "4"])), 0);
    assert_eq!(code(&run(&["evaluate", "--cache", s(&c1), "--out", s(&r4), "--workers", "4", "--folds", "4"])), 0);
    assert_eq!(std::fs::read(r1.join("report.json")).unwrap(), std::fs::read(r4.join("report.json")).unwrap());
}
