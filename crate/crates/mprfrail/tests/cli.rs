mod common;

use common::{mprfrail, path, write_csv};

#[test]
fn help_and_usage_errors() {
    assert!(mprfrail(&["--help"]).status.success());
    assert_eq!(mprfrail(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(mprfrail(&["fit", "--structure", "XYZ", "--data", "x.csv"]).status.code(), Some(1));
}

#[test]
fn malformed_status_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "cluster,time,status,x\na,1.0,1,0\na,1.5,0,1\nb,2.0,2,1\n").unwrap();
    let out = mprfrail(&["fit", "--data", path(&p)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn missing_data_file_exits_one() {
    assert_eq!(mprfrail(&["fit", "--data", "/nonexistent/data.csv"]).status.code(), Some(1));
    assert_eq!(mprfrail(&["fit"]).status.code(), Some(1));
}

#[test]
fn nf_fit_has_empty_frailty_block() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), 5, 8, 2);
    let out_dir = dir.path().join("nf");
    let out = mprfrail(&["fit", "--data", path(&data), "--structure", "NF", "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let after = text.split("Frailty parameters\n").nth(1).unwrap();
    assert!(after.starts_with("-2 p(h)"), "{text}");
    assert_eq!(std::fs::read_to_string(out_dir.join("fit.txt")).unwrap(), text);
    assert!(out_dir.join("fit.json").exists());
}

#[test]
fn saved_fit_gives_identical_hr_and_frailties() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), 6, 10, 3);
    let d = path(&data);
    let fit_dir = dir.path().join("fit");
    assert!(mprfrail(&["fit", "--data", d, "--structure", "ScF", "--out", path(&fit_dir)]).status.success());
    let saved = fit_dir.join("fit.json");

    let hr = |src: &[&str]| {
        let mut args = vec!["hr", "--covariate", "trt", "--boot", "100", "--seed", "9"];
        args.extend_from_slice(src);
        let o = mprfrail(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let from_fit = hr(&["--fit", path(&saved)]);
    assert_eq!(from_fit, hr(&["--data", d, "--structure", "ScF"]));
    assert_eq!(String::from_utf8_lossy(&from_fit).lines().count(), 51);

    let fr = |src: &[&str]| {
        let mut args = vec!["frailties", "--component", "scale"];
        args.extend_from_slice(src);
        mprfrail(&args).stdout
    };
    let a = fr(&["--fit", path(&saved)]);
    assert_eq!(a, fr(&["--data", d, "--structure", "ScF"]));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("cluster,size,estimate,lower,upper\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn compare_ranks_all_structures() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), 6, 8, 4);
    let out_dir = dir.path().join("cmp");
    let out = mprfrail(&["compare", "--data", path(&data), "--scale-covariates", "trt", "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("selection.csv")).unwrap();
    assert!(csv.lines().count() >= 2, "{csv}");
    assert!(out_dir.join("selection.txt").exists());
    assert!(out_dir.join("fit_NF.json").exists());
}

#[test]
fn simulate_is_reproducible_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.json");
    std::fs::write(
        &scen,
        r#"{"q": 8, "n_i": 5, "beta_true": [1.0, -0.5, 0.5], "alpha_true": [0.5, 0.5, -0.5],
            "sigma_beta": 1.0, "sigma_alpha": 0.5, "rho": -0.5, "censor_rate": 0.25,
            "replicates": 4, "structure": "ScF"}"#,
    )
    .unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = mprfrail(&[
            "simulate",
            "--scenario",
            path(&scen),
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("summary.csv")).unwrap()
    };
    let a = run("1", "a");
    assert_eq!(a, run("1", "b"));
    assert_eq!(a, run("3", "c"));

    let one =
        mprfrail(&["simulate", "--scenario", path(&scen), "--replicates", "1", "--out", path(&dir.path().join("d"))]);
    assert!(one.status.success());
    let csv = std::fs::read_to_string(dir.path().join("d/summary.csv")).unwrap();
    let se = csv.lines().nth(3).unwrap();
    assert!(se.split(',').skip(2).all(str::is_empty), "{se}");
}

#[test]
fn unreachable_censoring_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.json");
    std::fs::write(
        &scen,
        r#"{"q": 4, "n_i": 3, "beta_true": [1.0, -0.5, 0.5], "alpha_true": [0.5, 0.5, -0.5],
            "sigma_beta": 1.0, "sigma_alpha": 0.5, "rho": -0.5, "censor_rate": 0.999999}"#,
    )
    .unwrap();
    assert_eq!(mprfrail(&["simulate", "--scenario", path(&scen)]).status.code(), Some(4));
    let text = std::fs::read_to_string(&scen).unwrap().replace("0.999999", "1.5");
    std::fs::write(&scen, text).unwrap();
    assert_eq!(mprfrail(&["simulate", "--scenario", path(&scen)]).status.code(), Some(1));
}
