use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nomasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nomasim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn manifest(text: &str) -> Vec<(&str, &str)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .collect()
}

#[test]
fn bounds_single_load_gives_one_row() {
    let o = nomasim(&["bounds", "--mu-grid", "0.08", "--trials", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].last().unwrap(), "ok");
    let keys: Vec<&str> = manifest(&text).iter().map(|(k, _)| *k).collect();
    for k in ["subcommand", "params", "seed", "version", "threads", "duration_s"] {
        assert!(keys.contains(&k), "missing {k}");
    }
}

#[test]
fn bad_domain_and_usage_exit_two() {
    assert_eq!(nomasim(&["bounds", "--eps", "1.5"]).status.code(), Some(2));
    assert_eq!(nomasim(&["outage", "--snr-grid", "10,5"]).status.code(), Some(2));
    assert_eq!(nomasim(&["link", "--receiver", "zf"]).status.code(), Some(2));
    assert_eq!(nomasim(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn ml_over_sixteen_users_hits_the_guard() {
    let o = nomasim(&["link", "--users", "16", "--spread-len", "16", "--receiver", "ml", "--snr-grid", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("guard"));
}

#[test]
fn noiseless_orthogonal_link_has_zero_ber() {
    let o = nomasim(&[
        "link", "--pool", "orthogonal", "--noiseless", "--snr-grid", "0,10", "--trials", "50", "--self-check",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 3 * 2 * 4);
    for row in r {
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0, "{row:?}");
    }
}

#[test]
fn same_seed_same_output() {
    let args = ["outage", "--k-list", "2,4", "--snr-grid", "10:5:30", "--trials", "3000", "--seed", "7"];
    let a = rows(&stdout(&nomasim(&args)));
    let b = rows(&stdout(&nomasim(&args)));
    assert_eq!(a, b);
    let mut other = args.to_vec();
    other[8] = "8";
    assert_ne!(a, rows(&stdout(&nomasim(&other))));
}

#[test]
fn outage_self_check_passes_and_adds_single_user() {
    let o = nomasim(&["outage", "--k-list", "4", "--snr-grid", "10,20", "--trials", "20000", "--self-check"]);
    assert_eq!(o.status.code(), Some(0));
    let ks: Vec<String> = rows(&stdout(&o)).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(ks, ["1", "1", "4", "4"]);
}

#[test]
fn out_file_and_config_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"outage": {"k_list": [3], "snr_grid": [15.0], "trials": 500}}"#).unwrap();
    let out = dir.path().join("op.csv");
    let o = nomasim(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "outage"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(rows(&text).len(), 2);

    std::fs::write(&cfg, r#"{"no_such_flag": 1}"#).unwrap();
    assert_eq!(nomasim(&["--config", cfg.to_str().unwrap(), "outage"]).status.code(), Some(2));
}

#[test]
fn idle_system_has_no_collisions_and_marks_assumed_defaults() {
    let o = nomasim(&["system", "--devices", "100", "--pa", "0", "--slots", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let aloha = &v["report"]["aloha"];
    assert_eq!(aloha["collision_slots"], 0);
    assert_eq!(aloha["transmissions"], 0);
    assert_eq!(v["report"]["overhead"]["grant_based"]["assumed"], true);
    assert_eq!(v["manifest"]["subcommand"], "system");
}

#[test]
fn profiles_round_trip_through_overhead_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profiles.json");
    let o = nomasim(&["--out", path.to_str().unwrap(), "profiles"]);
    assert_eq!(o.status.code(), Some(0));
    let o = nomasim(&["system", "--slots", "100", "--overhead-config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["overhead"]["grant_based"]["control_bits"], 300);
}

#[test]
fn exported_pool_drives_the_link() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.json");
    let o = nomasim(&["--out", path.to_str().unwrap(), "pool", "--len", "4", "--size", "6", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(Path::new(&path).exists());
    let o = nomasim(&[
        "link", "--pool-file", path.to_str().unwrap(), "--users", "3", "--receiver", "mmse", "--snr-grid", "6",
        "--trials", "20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&stdout(&o)).len(), 3);
}
