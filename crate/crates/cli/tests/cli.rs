use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
# small and quick
n_students = 60
n_courses = 4
courses_per_student = 2
weeks = 3
";

fn attend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attend"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new(extra: &str) -> Self {
        Self::raw(&format!("{SMALL}{extra}"))
    }

    fn raw(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.conf"), config).unwrap();
        Work { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn conf(&self) -> PathBuf {
        self.path("run.conf")
    }

    fn simulate(&self, seed: &str) -> PathBuf {
        let out = self.path("data");
        let o = attend(&["simulate", "--config", p(&self.conf()), "--seed", seed, "--output", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }

    fn pipeline(&self, data: &Path, name: &str, extra: &[&str]) -> (Output, PathBuf) {
        let out = self.path(name);
        let conf = self.conf();
        let mut args = vec!["pipeline", "--config", p(&conf), "--input", p(data), "--output", p(&out)];
        args.extend_from_slice(extra);
        (attend(&args), out)
    }
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn simulate_requires_a_seed() {
    let w = Work::new("");
    let o = attend(&["simulate", "--config", p(&w.conf()), "--output", p(&w.path("data"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&attend(&["frobnicate"])), 1);
    assert_eq!(code(&attend(&["pipeline", "--input", "x"])), 1);
    let w = Work::new("no_such_key = 3\n");
    let o = attend(&["simulate", "--config", p(&w.conf()), "--seed", "1", "--output", p(&w.path("d"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no_such_key"));
}

#[test]
fn simulate_writes_dataset_truth_and_stable_manifest() {
    let w = Work::new("");
    let data = w.simulate("5");
    for f in [
        "fixes.csv",
        "scans.csv",
        "roster.csv",
        "schedule.csv",
        "grades.csv",
        "messages.csv",
        "campus.csv",
        "truth.csv",
        "true_locations.csv",
        "manifest.json",
    ] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let first = fs::read(data.join("manifest.json")).unwrap();
    w.simulate("5");
    assert_eq!(first, fs::read(data.join("manifest.json")).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 9);
}

#[test]
fn noiseless_pipeline_is_exact_and_leaves_input_alone() {
    let w = Work::new("gps_sigma = 0\nbt_detect_prob = 1\n");
    let data = w.simulate("2");
    let before = read_dir_bytes(&data);
    let (o, out) = w.pipeline(&data, "pipe", &["--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(before, read_dir_bytes(&data));

    let accuracy = fs::read_to_string(out.join("accuracy.csv")).unwrap();
    let mut lines = accuracy.lines();
    assert_eq!(lines.next(), Some("distance_m,cum_fraction"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.starts_with("0,")));
    assert!(rows.last().unwrap().ends_with(",1"));

    let v = attend(&["verify", "--config", p(&w.conf()), "--input", p(&data), "--pipeline", p(&out)]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.path("verify").join("verify_report.json")).unwrap()).unwrap();
    for key in ["within_50", "within_100", "within_200", "precision", "recall"] {
        assert_eq!(report[key], 1.0, "{key}");
    }
}

#[test]
fn verify_names_the_failing_metric() {
    let w = Work::new("verify_min_precision = 1.5\n");
    let data = w.simulate("3");
    let (o, out) = w.pipeline(&data, "pipe", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = attend(&["verify", "--config", p(&w.conf()), "--input", p(&data), "--pipeline", p(&out)]);
    assert_eq!(code(&v), 3);
    assert!(stderr(&v).contains("precision"), "{}", stderr(&v));

    fs::remove_file(data.join("truth.csv")).unwrap();
    let v = attend(&["verify", "--config", p(&w.conf()), "--input", p(&data), "--pipeline", p(&out)]);
    assert_eq!(code(&v), 2);
    assert!(stderr(&v).contains("truth"));
}

#[test]
fn verify_rejects_outputs_from_another_run() {
    let w = Work::new("");
    let data = w.simulate("3");
    let (_, out) = w.pipeline(&data, "pipe", &[]);
    let other = w.path("other");
    assert_eq!(
        code(&attend(&["simulate", "--config", p(&w.conf()), "--seed", "4", "--output", p(&other)])),
        0
    );
    let v = attend(&["verify", "--config", p(&w.conf()), "--input", p(&other), "--pipeline", p(&out)]);
    assert_eq!(code(&v), 2);
    assert!(stderr(&v).contains("does not match"), "{}", stderr(&v));
}

#[test]
fn wider_radius_gives_attendee_supersets() {
    let w = Work::new("oncampus_absent_frac = 0.5\n");
    let data = w.simulate("6");
    let (a, narrow) = w.pipeline(&data, "r200", &[]);
    let (b, wide) = w.pipeline(&data, "r300", &["--radius-m", "300"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    let rows = |d: &Path| -> std::collections::BTreeSet<String> {
        fs::read_to_string(d.join("attendees.csv")).unwrap().lines().skip(1).map(String::from).collect()
    };
    let (small, large) = (rows(&narrow), rows(&wide));
    assert!(small.is_subset(&large));
    assert!(large.len() > small.len());
}

#[test]
fn too_small_courses_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("fixes.csv"), "participant,t,lat,lon,accuracy\n").unwrap();
    fs::write(d.join("scans.csv"), "scanner,seen,t\n").unwrap();
    fs::write(d.join("roster.csv"), "course,participant\nc,a\nc,b\nc,d\n").unwrap();
    fs::write(
        d.join("schedule.csv"),
        "course,start,duration_s,week,official_lat,official_lon\nc,0,14400,1,,\n",
    )
    .unwrap();
    fs::write(d.join("grades.csv"), "participant,course,grade,no_show\n").unwrap();
    fs::write(d.join("messages.csv"), "sender,receiver,t\n").unwrap();
    fs::write(d.join("campus.csv"), "lat,lon\n55.78,12.51\n55.78,12.53\n55.79,12.53\n55.79,12.51\n").unwrap();
    let o = attend(&["pipeline", "--input", p(d), "--output", p(&d.join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zero eligible courses"), "{}", stderr(&o));
}

#[test]
fn strict_mode_fails_where_lenient_reports() {
    let w = Work::new("");
    let data = w.simulate("7");
    let fixes = fs::read_to_string(data.join("fixes.csv")).unwrap();
    let mut lines: Vec<String> = fixes.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[3].split(',').map(String::from).collect();
    cols[4] = "-5".into();
    lines[3] = cols.join(",");
    fs::write(data.join("fixes.csv"), lines.join("\n") + "\n").unwrap();

    let (o, _) = w.pipeline(&data, "strict", &["--strict"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("fixes.csv:4"), "{}", stderr(&o));

    let (o, out) = w.pipeline(&data, "lenient", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rejected = fs::read_to_string(out.join("rejected.csv")).unwrap();
    assert_eq!(rejected.lines().count(), 2);
    assert!(rejected.contains("fixes.csv,4,"));
}

#[test]
fn analyze_emits_summary_and_tables() {
    let w = Work::raw("n_students = 120\nn_courses = 6\nweeks = 3\ncoupling = 1\n");
    let data = w.simulate("8");
    let (o, pipe) = w.pipeline(&data, "pipe", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = w.path("analysis");
    let a = attend(&["analyze", "--config", p(&w.conf()), "--input", p(&data), "--pipeline", p(&pipe), "--output", p(&out)]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    for f in [
        "analysis_summary.json",
        "grade_box.csv",
        "quintiles.csv",
        "trends.csv",
        "slope_hist.csv",
        "course_corr.csv",
        "peer_scatter.csv",
        "corrected_scatter.csv",
        "peer_trends.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("analysis_summary.json")).unwrap()).unwrap();
    assert!(summary["attendance_grade_spearman"].as_f64().unwrap() > 0.0);
    let table = summary["quintile_p_values"].as_array().unwrap();
    assert_eq!(table.len(), 5);
    assert!(table.iter().all(|row| row.as_array().unwrap().len() == 5));

    fs::remove_file(data.join("grades.csv")).unwrap();
    let a = attend(&["analyze", "--input", p(&data), "--pipeline", p(&pipe), "--output", p(&w.path("again"))]);
    assert_eq!(code(&a), 2);
    assert!(stderr(&a).contains("grades.csv"), "{}", stderr(&a));
}

#[test]
fn analyze_skips_grade_analyses_when_everyone_is_a_no_show() {
    let w = Work::new("no_show_prob = 1\n");
    let data = w.simulate("9");
    let (_, pipe) = w.pipeline(&data, "pipe", &[]);
    let out = w.path("analysis");
    let a = attend(&["analyze", "--input", p(&data), "--pipeline", p(&pipe), "--output", p(&out)]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("analysis_summary.json")).unwrap()).unwrap();
    assert!(summary["attendance_grade_spearman"].is_null());
    let notes = summary["notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("no graded records")));
}

#[test]
fn all_is_deterministic() {
    let w = Work::new("");
    let run = |name: &str| {
        let out = w.path(name);
        let o = attend(&["all", "--config", p(&w.conf()), "--seed", "12", "--output", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_dir_bytes(&out)
    };
    let (a, b) = (run("one"), run("two"));
    for sub in ["dataset/", "pipeline/", "analysis/", "verify/"] {
        assert!(a.keys().any(|k| k.starts_with(sub)), "{sub}");
    }
    assert_eq!(a, b);
}
