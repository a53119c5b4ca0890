use geflab_cli::{run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("geflab").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const ESTIMATE_HEADER: &str = "event,r,delta,trials,successes,uncertain,p_hat,p_low,p_high,ci_low,ci_high,log_p_hat,seed";
const FIT_HEADER: &str = "event,window_min_r,window_max_r,amplitude,exponent,residual_rms";

#[test]
fn holes_rows_and_fit() {
    let (code, out, _) = call(&["holes", "--r", "0.8,1.0,1.2", "--trials", "20000", "--seed", "7", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], ESTIMATE_HEADER);
    assert!(lines[1..4].iter().all(|l| l.starts_with("hole,")));
    assert_eq!(lines[4], FIT_HEADER);
    assert!(lines[5].starts_with("fit,0.8,1.2,"));
    assert_eq!(lines.len(), 6);
}

#[test]
fn holes_without_enough_radii_has_no_fit() {
    let (code, out, _) = call(&["holes", "--r", "1", "--trials", "100"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().ends_with(",0"));
}

#[test]
fn usage_errors() {
    for args in [
        &["holes", "--trials", "0"][..],
        &["holes", "--r", "abc"],
        &["holes", "--r", "-1"],
        &["counts", "--delta", "0.3"],
        &["nonsense"],
        &["holes", "--bogus"],
        &["omega", "--r", "0.5"],
        &["logm", "--workers", "0"],
    ] {
        let (code, out, err) = call(args);
        assert_eq!(code, EXIT_USAGE, "{args:?}");
        assert!(out.is_empty());
        assert!(!err.is_empty());
    }
}

#[test]
fn help_goes_to_stdout() {
    let (code, out, _) = call(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("holes"));
}

#[test]
fn omega_row() {
    let (code, out, _) = call(&["omega", "--r", "1", "--trials", "10"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "r,log_prob_omega,conditional_samples,holes_certified");
    let f: Vec<&str> = lines[1].split(',').collect();
    let v: f64 = f[1].parse().unwrap();
    assert!((v + 196.44).abs() < 0.005);
    assert_eq!(f[2..], ["10", "10"]);
}

#[test]
fn probe_rows() {
    let (code, out, _) = call(&["probe", "--delta", "0.25,0.04", "--trials", "3", "--placement", "centers"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "delta,r,kappa,n_discs,max_deviation,deviation_over_sqrt_delta");
    assert!(lines[1].starts_with("0.25,1.0,0.29289321881345"));
    assert_eq!(lines.len(), 3);
    let (code, _, _) = call(&["probe", "--placement", "sideways"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn circlemean_and_logm_and_jensen() {
    let (code, out, _) = call(&["circlemean", "--r", "2", "--trials", "50"]);
    assert_eq!(code, EXIT_OK);
    let events: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(events, ["circle_mean_low", "claim34_failure"]);

    let (code, out, _) = call(&["logm", "--r", "2", "--delta", "0.1", "--trials", "50"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().nth(1).unwrap().starts_with("logM_deviation,2.0,0.1,50,"));

    let (code, out, _) = call(&["jensen", "--r", "1,2", "--trials", "5"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().next().unwrap(), "r,trials,max_residual,mean_residual,failures,seed");
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn json_output_matches_csv_fields() {
    let (code, out, _) = call(&["holes", "--r", "0.8,1.0,1.2", "--trials", "2000", "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 4);
    let keys: Vec<&str> = arr[0].as_object().unwrap().keys().map(String::as_str).collect();
    for k in ESTIMATE_HEADER.split(',') {
        assert!(keys.contains(&k), "{k}");
    }
    assert_eq!(arr[3]["event"], "fit");
}

#[test]
fn output_file_and_fit_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("holes.csv");
    let p = path.to_str().unwrap();
    let (code, out, _) = call(&["holes", "--r", "0.6,0.8,1.0,1.2", "--trials", "5000", "--output", p]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    let fit_line = written.lines().last().unwrap().to_string();

    let (code, out, _) = call(&["fit", "--input", p]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().next().unwrap(), FIT_HEADER);
    assert_eq!(out.lines().nth(1).unwrap(), fit_line);

    let (code, out, _) = call(&["fit", "--input", p, "--r", "0.8,1.0,1.2"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().nth(1).unwrap().starts_with("fit,0.8,1.2,"));

    let (code, _, err) = call(&["fit", "--input", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("missing.csv"));
}

#[test]
fn sample_dump() {
    let (code, out, _) = call(&["sample", "--r", "2", "--seed", "3", "--dump-zeros"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["gef"]["degree"], 32);
    assert_eq!(v["gef"]["coefficients"].as_array().unwrap().len(), 33);
    assert!(v["zeros"]["zeros"].is_array());

    let (_, again, _) = call(&["sample", "--r", "2", "--seed", "3", "--dump-zeros"]);
    assert_eq!(out, again);
    let (_, other, _) = call(&["sample", "--r", "2", "--seed", "3", "--trial", "1"]);
    assert_ne!(serde_json::from_str::<serde_json::Value>(&other).unwrap(), v["gef"]);
}

#[test]
fn workers_do_not_change_output() {
    let args = ["counts", "--r", "1,2", "--trials", "3000", "--seed", "11"];
    let (_, one, _) = call(&[&args[..], &["--workers", "1"]].concat());
    let (_, four, _) = call(&[&args[..], &["--workers", "4"]].concat());
    assert_eq!(one, four);
}
