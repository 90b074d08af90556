use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fadeflow")).args(args).output().expect("binary runs")
}

fn run_config(verb: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![verb, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn csv_rows(o: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn scalar_atom(c: f64) -> String {
    format!(
        "[model]\nfamily = \"compartmental\"\ncompartments = 1\n[[model.neutral]]\ni = 0\nj = 0\ncoef = {c}\ndelay = 1.0\n\
         [grid]\nstep = 0.1\ndepth = 40.0\n"
    )
}

#[test]
fn decay_reaches_exp_minus_one() {
    let o = run_config("simulate", &configs().join("decay.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&o);
    assert_eq!(header, ["t", "theta_1", "theta_2", "z_1"]);
    let last = rows.last().unwrap();
    assert_eq!(last[0], "1.0");
    let z: f64 = last[3].parse().unwrap();
    assert!((z - (-1.0f64).exp()).abs() < 1e-8, "{z}");
}

#[test]
fn neutral_trajectories_carry_w_columns() {
    let o = run_config("simulate", &configs().join("compartments.toml"), &["--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["schema_version"], 1);
    let cols = v["columns"].as_array().unwrap();
    // 1 + d + m + m
    assert_eq!(cols.len(), 1 + 2 + 2 + 2);
    assert_eq!(cols[5], "w_1");
    assert!(v["rows"].as_array().unwrap().iter().all(|r| r.as_array().unwrap().len() == cols.len()));
}

#[test]
fn outputs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("canonical.toml");
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}.json"));
            let o = run_config("verify", &cfg, &["--seed", "11", "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            assert!(o.stdout.is_empty());
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    let v: Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert_eq!(v["settings"]["seed"], 11);
}

#[test]
fn malformed_config_is_located() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.toml", "[model]\nfamily = \"scalar\"\nalpha = = 1\n");
    let o = run_config("simulate", &p, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3, column"), "{}", stderr(&o));
}

#[test]
fn unresolved_coefficient_is_located() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.toml", "[model]\nfamily = \"scalar\"\nalpha = 1.0\nforcing = \"nope\"\n");
    let o = run_config("simulate", &p, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4, column 11") && stderr(&o).contains("`nope`"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_missing_flags_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.toml", "[model]\nfamily = \"scalar\"\nalpha = 1.0\n[grid]\nstpe = 0.1\n");
    assert_eq!(run_config("simulate", &p, &[]).status.code(), Some(2));
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
    let ok = write(&dir, "ok.toml", "[model]\nfamily = \"scalar\"\nalpha = 1.0\n");
    assert_eq!(run_config("simulate", &ok, &["--dt", "-1"]).status.code(), Some(2));
    // No [run].initial.
    assert_eq!(run_config("simulate", &ok, &[]).status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_three() {
    let o = run_config("simulate", &configs().join("blowup.toml"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("blow-up"));
}

#[test]
fn verify_passes_the_canonical_model_with_default_probes() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "c.toml",
        "[model]\nfamily = \"scalar\"\nalpha = 1.0\nbeta = 0.5\nforcing = [{ k = [1, 0], amp = 0.3 }]\n",
    );
    let o = run_config("verify", &p, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["settings"]["n_samples"], 200);
    assert!(v["audit"]["constants"]["lipschitz"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_names_the_failed_hypothesis() {
    let dir = TempDir::new().unwrap();
    let p =
        write(&dir, "f4.toml", "[model]\nfamily = \"scalar\"\nalpha = 1.0\norder = [0.5]\n[probe]\nn_samples = 40\n");
    let o = run_config("verify", &p, &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("F4"), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["passed"], false);
}

#[test]
fn verify_reports_neutral_constants() {
    let o = run_config("verify", &configs().join("compartments.toml"), &[]);
    let v = json(&o);
    let k = &v["audit"]["constants"];
    assert!((k["q"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    assert!((k["k_bound"].as_f64().unwrap() - 1.0 / 0.7).abs() < 1e-12);
}

#[test]
fn invert_examples() {
    let dir = TempDir::new().unwrap();
    let one = run_config("invert", &configs().join("neutral_atom.toml"), &[]);
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    let (header, rows) = csv_rows(&one);
    assert_eq!(header, ["s", "x_1"]);
    assert_eq!(rows.last().unwrap()[0], "0.0");
    assert!(rows.iter().all(|r| (r[1].parse::<f64>().unwrap() - 2.0).abs() < 1e-9));

    let zero = write(&dir, "z.toml", &(scalar_atom(0.5) + "[invert]\nh = { constant = 0.0 }\n"));
    let (_, rows) = csv_rows(&run_config("invert", &zero, &[]));
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0));

    let iterations = |c: f64| {
        let p = write(&dir, "q.toml", &(scalar_atom(c) + "[invert]\nh = { constant = 1.0 }\n"));
        let o = run_config("invert", &p, &["--format", "json"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v = json(&o);
        assert!(v["residual"].as_f64().unwrap() <= 1e-8);
        v["iterations"].as_u64().unwrap()
    };
    assert!(iterations(0.99) > 10 * iterations(0.5));
}

#[test]
fn invert_residual_gate() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "r.toml",
        &(scalar_atom(0.5) + "[invert]\nh = { constant = 1.0 }\ntol = 1e-3\nresidual_tol = 1e-12\n"),
    );
    let o = run_config("invert", &p, &[]);
    assert_eq!(o.status.code(), Some(5));
    assert!(!o.stdout.is_empty());
    let fde = write(&dir, "f.toml", "[model]\nfamily = \"scalar\"\nalpha = 1.0\n[invert]\nh = { constant = 1.0 }\n");
    assert_eq!(run_config("invert", &fde, &[]).status.code(), Some(2));
}

#[test]
fn omega_reports_pairs_and_two_solutions() {
    let o = run_config("omega", &configs().join("canonical.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    let rows = v["report"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["pairs"].as_u64().unwrap() > 0));
    assert!(v["report"]["two_solution_final"].as_f64().unwrap() < 1e-6);
}

#[test]
fn omega_without_returns_exits_with_six() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "w.toml",
        "[model]\nfamily = \"scalar\"\nalpha = 1.0\n[run]\ninitial = { constant = 0.0 }\n\
         [probe]\ntransients = [1.0]\nt_max = 5.0\ndelta_base = 1e-6\n",
    );
    let o = run_config("omega", &p, &[]);
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
}

#[test]
fn sweep_records_blow_ups() {
    let o = run_config("sweep", &configs().join("blowup.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&o);
    assert_eq!(header, ["model.beta", "status", "t_end", "z_1", "sup_norm"]);
    let status: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(status, ["ok", "ok", "blow_up"]);
    assert_eq!(rows[2][3], "");
}

#[test]
fn overrides_change_the_grid() {
    let o = run_config("simulate", &configs().join("decay.toml"), &["--dt", "0.1", "--format", "json"]);
    let v = json(&o);
    assert_eq!(v["step"], 0.1);
    assert_eq!(v["steps"], 10);
}

#[test]
fn initial_data_from_a_file() {
    let dir = TempDir::new().unwrap();
    write(&dir, "x0.csv", "s,x\n-20,1\n0,1\n");
    let p = write(
        &dir,
        "file.toml",
        "[model]\nfamily = \"scalar\"\nalpha = 1.0\n[run]\nhorizon = 1.0\ninitial = { file = \"x0.csv\" }\n[grid]\nstep = 0.02\n",
    );
    let o = run_config("simulate", &p, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (_, rows) = csv_rows(&o);
    let z: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!((z - (-1.0f64).exp()).abs() < 1e-8);
}
