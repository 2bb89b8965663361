use std::path::Path;
use std::process::{Command, Output};

use swipt_sim::results::strip_timing;

fn swipt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn rows(text: &str) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn single_trial_perfect_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = swipt(&["power-min", "--trials", "1", "--model", "perfect", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    assert!(text.starts_with("trial,model,scheme,status,objective_w,rho,max_rank,worst_margin,outage_emp,solve_ms\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 1);
    assert_eq!(&r[0][1], "perfect");
    assert_eq!(&r[0][3], "optimal");
    // 12 significant digits
    assert_eq!(r[0][4].split('e').next().unwrap().len(), 13);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = swipt(&[
            "power-min", "--trials", "3", "--seed", "11", "--scheme", "noma", "--scheme", "oma", "--jobs", jobs, "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        strip_timing(&read(&out)).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "2");
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 3 * 3 * 2);
}

#[test]
fn bad_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "trials = 3\n\n[network]\nantennas = 4\nantenas = 5\n").unwrap();
    let o = swipt(&["power-min", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn out_of_range_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[network]\np_b_w = -1.0\n").unwrap();
    let o = swipt(&["power-min", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&swipt(&["power-min", "--model", "psychic"])), 2);
    assert_eq!(code(&swipt(&["power-min", "--rho-grid", "0.9:0.1:0.1"])), 2);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let o = swipt(&["power-min", "--trials", "1", "--model", "perfect", "--out", "/dev/null/r.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn solver_outcomes_are_recorded_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    // a budget too small for any draw
    std::fs::write(&cfg, "trials = 2\nmodels = [\"perfect\"]\n[network]\np_b_w = 1e-4\n").unwrap();
    let out = dir.path().join("r.csv");
    let o = swipt(&["power-min", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = rows(&read(&out));
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|x| &x[3] == "infeasible" && &x[4] == "NaN"));
}

#[test]
fn eh_max_and_verify_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eh.csv");
    let o = swipt(&["eh-max", "--trials", "1", "--model", "perfect", "--rho-grid", "0.3:0.2:0.7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = rows(&read(&out));
    assert_eq!(r.len(), 1);
    let eh: f64 = r[0][4].parse().unwrap();
    assert!(eh > 0.0 && eh <= 2.0 * 0.024 + 1e-9);
    let rho: f64 = r[0][5].parse().unwrap();
    assert!([0.3, 0.5, 0.7].iter().any(|g| (g - rho).abs() < 1e-12));

    let vout = dir.path().join("v.csv");
    let o = swipt(&["verify", "--trials", "2", "--model", "bounded", "--out", vout.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failed"));
}

/// 100 rows: two series, some infeasible, with repeated values.
fn fixture() -> (String, Vec<(String, Option<f64>)>) {
    let mut text = String::from("trial,model,scheme,status,objective_w,rho,max_rank,worst_margin,outage_emp,solve_ms\n");
    let mut truth = Vec::new();
    let mut state: u64 = 12345;
    for i in 0..100 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let model = if i % 2 == 0 { "bounded" } else { "gaussian" };
        let feasible = (state >> 40) % 7 != 0;
        let value = ((state >> 33) % 40) as f64 / 8.0 + 0.125;
        if feasible {
            text += &format!("{i},{model},noma,optimal,{value:.11e},5e-1,1,0,0,1.0\n");
            truth.push((model.to_string(), Some(value)));
        } else {
            text += &format!("{i},{model},noma,infeasible,NaN,NaN,0,NaN,NaN,1.0\n");
            truth.push((model.to_string(), None));
        }
    }
    (text, truth)
}

#[test]
fn cdf_matches_independent_sort() {
    let dir = tempfile::tempdir().unwrap();
    let (text, truth) = fixture();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, text).unwrap();
    let plot = dir.path().join("cdf.svg");
    let o = swipt(&["cdf", input.to_str().unwrap(), "--plot", plot.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(read(&plot).starts_with("<svg"));

    let infeasible = truth.iter().filter(|t| t.1.is_none()).count();
    assert!(stdout.starts_with(&format!("# infeasible_rows={infeasible} ")));
    let got = rows(&stdout);
    for model in ["bounded", "gaussian"] {
        let mut vals: Vec<f64> = truth.iter().filter(|t| t.0 == model).filter_map(|t| t.1).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct = vals.clone();
        distinct.dedup();
        let want: Vec<(f64, f64)> = distinct
            .iter()
            .map(|&x| (x, vals.iter().filter(|&&v| v <= x).count() as f64 / vals.len() as f64))
            .collect();
        let have: Vec<(f64, f64)> = got
            .iter()
            .filter(|r| &r[0] == model)
            .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap()))
            .collect();
        assert_eq!(have.len(), want.len());
        for (h, w) in have.iter().zip(&want) {
            assert_eq!(h.0, w.0);
            assert!((h.1 - w.1).abs() < 1e-11);
        }
    }
}

#[test]
fn sweep_aggregates_match_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let plot = dir.path().join("sweep.svg");
    let o = swipt(&[
        "sweep", "--parameter", "gamma_min", "--values", "1,2", "--trials", "4", "--model", "perfect", "--model",
        "gaussian", "--out", out.to_str().unwrap(), "--plot", plot.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&plot).starts_with("<svg"));
    let agg = rows(&read(&out));
    let trials = rows(&read(&dir.path().join("sweep.trials.csv")));
    assert_eq!(agg.len(), 4);
    assert_eq!(trials.len(), 2 * 4 * 2);
    for a in &agg {
        let value: f64 = a[1].parse().unwrap();
        let cell: Vec<&csv::StringRecord> = trials
            .iter()
            .filter(|t| t[0].parse::<f64>().unwrap() == value && t[2] == a[2] && t[3] == a[3])
            .collect();
        let feas: Vec<f64> = cell.iter().filter(|t| &t[4] == "optimal").map(|t| t[5].parse().unwrap()).collect();
        let n = feas.len() as f64;
        let mean = feas.iter().sum::<f64>() / n;
        let var = feas.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert_eq!(a[4].parse::<usize>().unwrap(), cell.len());
        assert_eq!(a[5].parse::<usize>().unwrap(), feas.len());
        let close = |s: &str, want: f64| (s.parse::<f64>().unwrap() - want).abs() <= 1e-10 * want.abs().max(1e-12);
        assert!(close(&a[6], n / cell.len() as f64));
        assert!(close(&a[7], mean), "{} vs {mean}", &a[7]);
        assert!(close(&a[8], var.sqrt()), "{} vs {}", &a[8], var.sqrt());
    }
}

#[test]
fn complexity_reports_sizes() {
    let o = swipt(&["complexity", "--m", "10", "--k", "3", "--n", "2", "--tau", "1e-7"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    let field = |name: &str| -> f64 {
        s.lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(field("n"), 411.0);
    assert_eq!(field("psi1"), 180.0);
    assert_eq!(field("psi2"), 72.0);
    assert_eq!(code(&swipt(&["complexity", "--tau", "0"])), 2);
}

#[test]
fn shipped_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = swipt_sim::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.trials, 100);
    assert_eq!(cfg.sweep.unwrap().values, vec![1.0, 2.0, 3.0]);
}
