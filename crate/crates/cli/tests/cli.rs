use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rtp_arb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtp-arb"))
        .args(args)
        .env_remove("RTP_ARB_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Hourly CSV starting at midnight UTC on `start_day`.
fn write_prices(path: &Path, start_day: &str, prices: &[f64]) {
    let mut text = String::from("hour_start_utc,price_cents_per_kwh\n");
    let start = chrono_free_hours(start_day, prices.len());
    for (stamp, p) in start.iter().zip(prices) {
        text.push_str(&format!("{stamp},{p}\n"));
    }
    fs::write(path, text).unwrap();
}

// Only whole days from the first of a month are needed, so the calendar math
// stays trivial.
fn chrono_free_hours(start_day: &str, n: usize) -> Vec<String> {
    let (ym, day) = start_day.rsplit_once('-').unwrap();
    let day: usize = day.parse().unwrap();
    (0..n)
        .map(|h| format!("{ym}-{:02}T{:02}:00:00Z", day + h / 24, h % 24))
        .collect()
}

fn square(hours: usize, low: f64, high: f64) -> Vec<f64> {
    (0..hours).map(|h| if (h / 12) % 2 == 0 { low } else { high }).collect()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(
        &path,
        format!("[battery]\ncapacity_kwh = 10\nrate_kw = 5\nwindow = 4\n\n[training]\n{extra}"),
    )
    .unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_on_three_prices_prints_four_cents() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("three.csv");
    write_prices(&prices, "2018-07-01", &[3.0, 1.0, 5.0]);
    let conf = dir.path().join("unit.conf");
    fs::write(&conf, "capacity_kwh = 1\nrate_kw = 1\nwindow = 2\n").unwrap();
    let out = rtp_arb(&["oracle", "--prices", arg(&prices), "--config", arg(&conf)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("4.0¢"), "{}", stdout(&out));
}

#[test]
fn missing_prices_file_is_named() {
    let out = rtp_arb(&["train", "--prices", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing.csv"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = rtp_arb(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = rtp_arb(&["oracle"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--prices"));
}

#[test]
fn help_exits_zero() {
    let out = rtp_arb(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("cross-test"));
}

#[test]
fn bad_config_line_is_reported_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("p.csv");
    write_prices(&prices, "2018-07-01", &[1.0, 2.0]);
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "window = 4\nthis line is broken\n").unwrap();
    let out = rtp_arb(&["oracle", "--prices", arg(&prices), "--config", arg(&conf)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.conf:2"), "{}", stderr(&out));
}

#[test]
fn fetch_refuses_2020_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtp_arb(&["fetch", "--year", "2020", "--data-dir", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
}

#[test]
fn fetch_uses_cache_and_flag_beats_env_var() {
    let flag_dir = tempfile::tempdir().unwrap();
    let env_dir = tempfile::tempdir().unwrap();
    write_prices(&flag_dir.path().join("comed_2017.csv"), "2017-01-01", &[1.0; 48]);
    write_prices(&env_dir.path().join("comed_2017.csv"), "2017-01-01", &[1.0; 72]);

    let run = |flag: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rtp-arb"));
        cmd.args(["fetch", "--year", "2017"]).env("RTP_ARB_DATA_DIR", env_dir.path());
        if let Some(f) = flag {
            cmd.args(["--data-dir", arg(f)]);
        }
        cmd.output().unwrap()
    };
    let from_env = run(None);
    assert_eq!(from_env.status.code(), Some(0), "{}", stderr(&from_env));
    assert!(stdout(&from_env).contains("already cached (72 hours)"));
    let from_flag = run(Some(flag_dir.path()));
    assert!(stdout(&from_flag).contains("already cached (48 hours)"));
}

#[test]
fn train_eval_cross_test_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // the file asks for 2000 steps at eval_every 500; --steps overrides the
    // first, the second comes from the file
    let conf = small_config(d, "steps = 2000\neval_every = 500\n");
    let out_dir = d.join("out");
    for (year, day) in [("2018", "2018-07-01"), ("2019", "2019-07-01")] {
        let prices = d.join(format!("{year}.csv"));
        write_prices(&prices, day, &square(24 * 5, 2.0, 6.0));
        let out = rtp_arb(&[
            "train",
            "--prices",
            arg(&prices),
            "--config",
            arg(&conf),
            "--steps",
            "1000",
            "--seed",
            "3",
            "--out",
            arg(&out_dir),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(out_dir.join(format!("agent_{year}.ckpt")).exists());
    }
    let curves = fs::read_to_string(out_dir.join("training_curves.csv")).unwrap();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines[0], "year,step,greedy_return_cents");
    let keys: Vec<(&str, &str)> = lines[1..]
        .iter()
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    assert_eq!(
        keys,
        [("2018", "0"), ("2018", "500"), ("2018", "1000"), ("2019", "0"), ("2019", "500"), ("2019", "1000")]
    );
    let svg = fs::read_to_string(out_dir.join("training_curves.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let eval = rtp_arb(&[
        "eval",
        "--checkpoint",
        arg(&out_dir.join("agent_2018.ckpt")),
        "--prices",
        arg(&d.join("2018.csv")),
        "--policy-date",
        "2018-07-02",
        "--out",
        arg(&out_dir),
    ]);
    assert_eq!(eval.status.code(), Some(0), "{}", stderr(&eval));
    assert!(stdout(&eval).contains("greedy return"));
    let daily = fs::read_to_string(out_dir.join("daily_policy.csv")).unwrap();
    assert_eq!(daily.lines().count(), 25);

    let manifest = d.join("manifest.csv");
    fs::write(
        &manifest,
        "year,checkpoint_path,prices_path\n2018,out/agent_2018.ckpt,2018.csv\n2019,out/agent_2019.ckpt,2019.csv\n",
    )
    .unwrap();
    let cross = rtp_arb(&["cross-test", "--manifest", arg(&manifest), "--out", arg(&out_dir)]);
    assert_eq!(cross.status.code(), Some(0), "{}", stderr(&cross));
    let matrix = fs::read_to_string(out_dir.join("cross_test.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 5);

    for svg in ["training_curves.svg", "cross_test.svg", "daily_policy.svg"] {
        fs::remove_file(out_dir.join(svg)).unwrap();
    }
    let plot = rtp_arb(&["plot", "--in", arg(&out_dir)]);
    assert_eq!(plot.status.code(), Some(0), "{}", stderr(&plot));
    for svg in ["training_curves.svg", "cross_test.svg", "daily_policy.svg"] {
        assert!(fs::read_to_string(out_dir.join(svg)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn eval_rejects_date_outside_series() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let conf = small_config(d, "steps = 100\neval_every = 100\n");
    let prices = d.join("p.csv");
    write_prices(&prices, "2018-07-01", &square(48, 2.0, 6.0));
    let out_dir = d.join("out");
    let train = rtp_arb(&["train", "--prices", arg(&prices), "--config", arg(&conf), "--out", arg(&out_dir)]);
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    let eval = rtp_arb(&[
        "eval",
        "--checkpoint",
        arg(&out_dir.join("agent_2018.ckpt")),
        "--prices",
        arg(&prices),
        "--policy-date",
        "2018-08-01",
    ]);
    assert_eq!(eval.status.code(), Some(1));
    assert!(stderr(&eval).contains("2018-08-01"));
}

#[test]
fn malformed_manifest_row_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "2018,a.ckpt,a.csv\n2019,b.ckpt\n").unwrap();
    let out = rtp_arb(&["cross-test", "--manifest", arg(&manifest)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
}

#[test]
fn run_returns_usage_code_in_process() {
    assert_eq!(rtp_arb_cli::run(["rtp-arb", "nope"]), 2);
}
