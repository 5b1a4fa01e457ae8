use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sensact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensact")).args(args).output().expect("spawn sensact")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gen_random(dir: &Path, name: &str, nodes: usize, seed: u64) -> PathBuf {
    let out = p(dir, name);
    let o = sensact(&["generate", "random", "--nodes", &nodes.to_string(), "--seed", &seed.to_string(), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn generate_dimensions_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.json");
    let b = p(dir.path(), "b.json");
    for path in [&a, &b] {
        let o = sensact(&["generate", "random", "--nodes", "10", "--states-per-node", "2", "--seed", "7", "-o", s(path)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v = read_json(&a);
    assert_eq!(v["N"], 10);
    assert_eq!(v["A"].as_array().unwrap().len(), 20);
    assert_eq!(v["B"][0].as_array().unwrap().len(), 10);
    assert_eq!(v["C"].as_array().unwrap().len(), 20);

    // no silent overwrite
    let o = sensact(&["generate", "random", "--nodes", "3", "--seed", "1", "-o", s(&a)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("--force"));
    let o = sensact(&["generate", "random", "--nodes", "3", "--seed", "1", "-o", s(&a), "--force"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&a)["N"], 3);

    let ms = p(dir.path(), "ms.json");
    let o = sensact(&["generate", "mass-spring", "--masses", "10", "-o", s(&ms)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&ms)["A"].as_array().unwrap().len(), 20);
}

#[test]
fn select_then_verify_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 3, 2);
    for m in ["bsa", "heu", "misdp"] {
        let res = p(dir.path(), &format!("{m}.json"));
        let o = sensact(&["select", m, s(&sys), "-o", s(&res)]);
        assert_eq!(code(&o), 0, "{m}: {}", stderr(&o));
        let v = read_json(&res);
        assert_eq!(v["method"], m);
        assert_eq!(v["status"], "feasible");
        assert!(v["maxReEig"].as_f64().unwrap() < 0.0);
        let o = sensact(&["verify", s(&sys), s(&res)]);
        assert_eq!(code(&o), 0, "{m}: {}", stderr(&o));
        assert!(stderr(&o).contains("PASS"));
    }
    let bsa = read_json(&p(dir.path(), "bsa.json"));
    let misdp = read_json(&p(dir.path(), "misdp.json"));
    assert_eq!(bsa["H"], misdp["H"]);
}

#[test]
fn heuristic_and_misdp_options_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 3, 4);
    let res = p(dir.path(), "heu.json");
    let o = sensact(&[
        "select", "heu", s(&sys), "--max-iter", "50", "--max-infeasibility", "10", "--max-random", "10000", "--seed", "1",
        "-o", s(&res),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&res);
    assert_eq!(v["config"]["max_iter"], 50);
    assert_eq!(v["config"]["max_infeasibility"], 10);
    assert_eq!(v["config"]["max_random"], 10000);
    assert_eq!(v["config"]["seed"], 1);
    assert_eq!(v["seeds"], serde_json::json!([1]));

    let res = p(dir.path(), "misdp.json");
    let log = p(dir.path(), "nodes.jsonl");
    let o = sensact(&[
        "select", "misdp", s(&sys), "--L1", "1e4", "--L2", "5e6", "--L3", "5e6", "-o", s(&res), "--solve-log", s(&log),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&res);
    assert_eq!(v["config"]["L1"].as_f64(), Some(1e4));
    assert_eq!(v["config"]["L2"].as_f64(), Some(5e6));
    assert_eq!(v["config"]["L3"].as_f64(), Some(5e6));
    let lines = std::fs::read_to_string(&log).unwrap();
    assert!(lines.lines().count() >= 1);
    for l in lines.lines() {
        let e: Value = serde_json::from_str(l).unwrap();
        assert!(e["status"].is_string());
    }
}

fn flip(bits: &str, k: usize) -> String {
    bits.chars().enumerate().map(|(i, c)| if i == k { if c == '1' { '0' } else { '1' } } else { c }).collect()
}

#[test]
fn tampered_results_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 3, 2);
    let res = p(dir.path(), "bsa.json");
    assert_eq!(code(&sensact(&["select", "bsa", s(&sys), "-o", s(&res)])), 0);
    let orig = read_json(&res);

    // one selection bit flipped, H kept consistent
    let mut v = orig.clone();
    let pi = v["pi"].as_str().unwrap().to_string();
    let k = pi.find('1').unwrap();
    v["pi"] = flip(&pi, k).into();
    v["H"] = (orig["H"].as_u64().unwrap() - 1).into();
    let bad = p(dir.path(), "flip.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let o = sensact(&["verify", s(&sys), s(&bad)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));

    // zero gain on an open-loop unstable system
    let mut v = orig.clone();
    for row in v["certificate"]["F"].as_array_mut().unwrap() {
        for x in row.as_array_mut().unwrap() {
            *x = 0.0.into();
        }
    }
    let zero = p(dir.path(), "zero.json");
    std::fs::write(&zero, serde_json::to_string(&v).unwrap()).unwrap();
    let o = sensact(&["verify", s(&sys), s(&zero)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not stable"), "{}", stderr(&o));

    // inconsistent H is an input error
    let mut v = orig.clone();
    v["H"] = 99.into();
    let inc = p(dir.path(), "h.json");
    std::fs::write(&inc, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&sensact(&["verify", s(&sys), s(&inc)])), 3);

    // result for another N
    let other = gen_random(dir.path(), "other.json", 4, 2);
    assert_eq!(code(&sensact(&["verify", s(&other), s(&res)])), 3);
}

#[test]
fn infeasible_system_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // second state is unstable and neither actuated nor reachable
    let sys = p(dir.path(), "bad.json");
    let text = r#"{
      "N": 1,
      "node_dims": [{"nx": 2, "nu": 1, "ny": 2}],
      "A": [[1.0, 0.0], [0.0, 1.0]],
      "B": [[1.0], [0.0]],
      "C": [[1.0, 0.0], [0.0, 1.0]]
    }"#;
    std::fs::write(&sys, text).unwrap();
    for m in ["bsa", "heu", "misdp"] {
        let res = p(dir.path(), &format!("{m}.json"));
        let o = sensact(&["select", m, s(&sys), "-o", s(&res)]);
        assert_eq!(code(&o), 2, "{m}: {}", stderr(&o));
        assert_eq!(read_json(&res)["status"], "infeasible");
    }
}

#[test]
fn input_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(dir.path(), "nope.json");
    assert_eq!(code(&sensact(&["select", "bsa", s(&missing)])), 3);
    let junk = p(dir.path(), "junk.json");
    std::fs::write(&junk, "{\"N\": 2}").unwrap();
    let o = sensact(&["select", "bsa", s(&junk), "-o", s(&p(dir.path(), "r.json"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("junk.json"));
    // BSA over the enumeration cap
    let big = gen_random(dir.path(), "big.json", 13, 0);
    let o = sensact(&["select", "bsa", s(&big), "-o", s(&p(dir.path(), "r2.json"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn candidate_db_round_trip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 3, 2);
    let db = p(dir.path(), "cand.txt");
    let o = sensact(&["candidates", "export", "--system", s(&sys), "-o", s(&db)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let with_db = p(dir.path(), "a.json");
    let without = p(dir.path(), "b.json");
    assert_eq!(code(&sensact(&["select", "bsa", s(&sys), "--db", s(&db), "-o", s(&with_db)])), 0);
    assert_eq!(code(&sensact(&["select", "bsa", s(&sys), "-o", s(&without)])), 0);
    let (a, b) = (read_json(&with_db), read_json(&without));
    assert_eq!((&a["pi"], &a["gamma"]), (&b["pi"], &b["gamma"]));

    // a DB built for another constraint is refused
    let cons = p(dir.path(), "c.json");
    std::fs::write(&cons, r#"{"min_actuators": 2, "min_sensors": 1}"#).unwrap();
    let o = sensact(&["select", "bsa", s(&sys), "--constraint", s(&cons), "--db", s(&db), "-o", s(&p(dir.path(), "c.out"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("hash"));
}

#[test]
fn constraint_file_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 3, 2);
    let cons = p(dir.path(), "c.json");
    std::fs::write(&cons, r#"{"forced_on": {"actuators": [2], "sensors": [0]}, "min_total": 3}"#).unwrap();
    let res = p(dir.path(), "r.json");
    let o = sensact(&["select", "bsa", s(&sys), "--constraint", s(&cons), "-o", s(&res)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&res);
    assert_eq!(&v["pi"].as_str().unwrap()[2..3], "1");
    assert_eq!(&v["gamma"].as_str().unwrap()[0..1], "1");
    assert!(v["H"].as_u64().unwrap() >= 3);
}

#[test]
fn bench_writes_canonical_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "suite.json");
    std::fs::write(&cfg, r#"{"systems": [{"kind": "random", "nodes": 2, "seeds": [0, 1, 2]}], "heu_runs": 1}"#).unwrap();
    let csv = p(dir.path(), "out.csv");
    let json = p(dir.path(), "out.json");
    let o = sensact(&["bench", s(&cfg), "--csv", s(&csv), "--json", s(&json), "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,seed,H,maxReEig,eps,wall_s,iters,optimal_flag"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    let keys: Vec<(String, String)> = rows
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split(',').collect();
            (f[1].to_string(), f[0].to_string())
        })
        .collect();
    let expect: Vec<(String, String)> = ["0", "1", "2"]
        .iter()
        .flat_map(|sd| ["bsa", "heu", "misdp"].iter().map(move |m| (sd.to_string(), m.to_string())))
        .collect();
    assert_eq!(keys, expect);
    // 17 significant digits
    let eps = rows[0].split(',').nth(4).unwrap();
    assert_eq!(eps.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    let summary = read_json(&json);
    assert_eq!(summary["groups"].as_array().unwrap().len(), 9);
}

#[test]
fn sweep_prints_one_row_per_margin() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 3, 2);
    let o = sensact(&["sweep", s(&sys), "--eps", "1e-3,1e-2,1e-1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "eps,status,maxReEig");
    assert_eq!(lines.len(), 4);
    for (l, e) in lines[1..].iter().zip([1e-3, 1e-2, 1e-1]) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[1], "feasible");
        assert!(f[2].parse::<f64>().unwrap() <= -e);
    }
}

#[test]
fn dump_sdpa_writes_a_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_random(dir.path(), "sys.json", 2, 0);
    let dump = p(dir.path(), "root.dat-s");
    let o = sensact(&["select", "misdp", s(&sys), "--dump-sdpa", s(&dump), "-o", s(&p(dir.path(), "r.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.lines().filter(|l| !l.starts_with(['"', '*'])).count() > 4);
}
