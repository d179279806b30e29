use std::fs;
use std::path::Path;

use rqsim::cli::{run, EXIT_CLEAN, EXIT_ERROR, EXIT_SIGNIFICANT};

fn rqsim(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rqsim").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!("lambda_r = [0.5]\nw_r2 = [1.0, 0.25]\nn = [300]\nreps = 20\n{extra}"),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn simulate_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let (code, stdout, _) = rqsim(&["--config", &cfg, "--out-dir", out.to_str().unwrap(), "simulate"]);
    assert_eq!(code, EXIT_CLEAN);
    assert!(stdout.contains("2 conditions x 20 replications"));
    let t1 = lines(&out.join("table1.csv"));
    assert_eq!(
        t1[0],
        "lambda_r,w_r2,n,reps,mean_salient,sd_salient,mean_nonsalient,sd_nonsalient,n_nonconverged,n_heywood"
    );
    assert_eq!(t1.len(), 3);
    let t2 = lines(&out.join("table2.csv"));
    assert_eq!(t2[0], "lambda_r,w_r2,n,reps,test,alpha,detection_rate");
    assert_eq!(t2.len(), 1 + 2 * 3 * 3);
    assert!(t2[1].contains(",small,"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let read = |sub: &str, workers: &str| {
        let out = dir.path().join(sub);
        let (code, _, _) = rqsim(&[
            "--config",
            &cfg,
            "--workers",
            workers,
            "--out-dir",
            out.to_str().unwrap(),
            "simulate",
        ]);
        assert_eq!(code, EXIT_CLEAN);
        (
            fs::read(out.join("table1.csv")).unwrap(),
            fs::read(out.join("table2.csv")).unwrap(),
        )
    };
    let a = read("a", "1");
    let b = read("b", "3");
    assert_eq!(a, read("c", "1"));
    assert_eq!(a, b);
    let (code, _, _) = rqsim(&[
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out-dir",
        dir.path().join("d").to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(code, EXIT_CLEAN);
    assert_ne!(fs::read(dir.path().join("d/table1.csv")).unwrap(), a.0);
}

#[test]
fn bad_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (extra, key) in [("reps = 0", "reps"), ("w_r2 = 1.5", "w_r2"), ("colour = 1", "colour")] {
        let path = dir.path().join("bad.toml");
        fs::write(&path, format!("n = [300]\n{extra}\n")).unwrap();
        let (code, _, err) = rqsim(&[
            "--config",
            path.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "simulate",
        ]);
        assert_eq!(code, EXIT_ERROR);
        assert!(err.contains(&format!("`{key}`")), "{err}");
        assert!(!out.join("table1.csv").exists());
    }
    let (code, _, err) = rqsim(&["--reps", "0", "--out-dir", out.to_str().unwrap(), "simulate"]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("`reps`"));
}

#[test]
fn scatter_rows_and_spread() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, _) = rqsim(&[
        "--reps",
        "1",
        "--out-dir",
        out,
        "scatter",
        "--lambda-r",
        ".5",
        "--w-r2",
        ".25",
        "--n",
        "300",
    ]);
    assert_eq!(code, EXIT_CLEAN);
    let rows = lines(&dir.path().join("scatter_loadings.csv"));
    assert_eq!(rows[0], "rep,variable,salient_factor,loading_f1,loading_f2");
    assert_eq!(rows.len(), 16);

    let spread = |w: &str| {
        let (code, _, _) = rqsim(&[
            "--reps",
            "100",
            "--out-dir",
            out,
            "scatter",
            "--lambda-r",
            ".5",
            "--w-r2",
            w,
            "--n",
            "300",
        ]);
        assert_eq!(code, EXIT_CLEAN);
        let salient: Vec<f64> = lines(&dir.path().join("scatter_loadings.csv"))[1..]
            .iter()
            .filter_map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[2] == "1").then(|| f[3].parse::<f64>().unwrap())
            })
            .collect();
        let m = salient.iter().sum::<f64>() / salient.len() as f64;
        (salient.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (salient.len() - 1) as f64).sqrt()
    };
    assert!(spread(".25") > spread("1"));

    let (code, _, err) = rqsim(&[
        "--out-dir",
        out,
        "scatter",
        "--lambda-r",
        ".6",
        "--w-r2",
        "1",
        "--n",
        "300",
    ]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("no grid condition"));
}

#[test]
fn demo_then_screen() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = rqsim(&["--out-dir", out, "demo-fig3"]);
    assert_eq!(code, EXIT_CLEAN);
    assert!(stdout.contains("r = 0.4000"));
    let tests = lines(&dir.path().join("fig3_tests.csv"));
    assert_eq!(
        tests[0],
        "test,statistic,standardized,df,p_value,significant@.05,significant@.10,significant@.20"
    );
    assert_eq!(tests.len(), 4);
    let mardia: Vec<&str> = tests[3].split(',').collect();
    assert_eq!(mardia[0], "mardia");
    assert!(mardia[2].parse::<f64>().unwrap() < 0.0);

    let points = dir.path().join("fig3_points.csv");
    let pts = lines(&points);
    assert_eq!(pts[0], "z1,z2");
    assert_eq!(lines(&dir.path().join("fig3_groups.csv"))[50], "50,2");
    assert_eq!(pts.len(), 146);
    let (code, _, _) = rqsim(&["--alpha", "0.05", "screen", points.to_str().unwrap()]);
    assert_eq!(code, EXIT_SIGNIFICANT);

    let (code, _, err) = rqsim(&["--out-dir", out, "demo-fig3", "--target-r", "-0.99"]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("infeasible"));
    let (code, stdout, _) = rqsim(&[
        "--out-dir",
        out,
        "demo-fig3",
        "--n",
        "1000",
        "--q-q",
        "2",
        "--target-r",
        "0.5",
    ]);
    assert_eq!(code, EXIT_CLEAN);
    assert!(stdout.contains("r = 0.5000"));
}

#[test]
fn generate_then_screen() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("clean.csv");
    let (code, _, _) = rqsim(&[
        "--seed",
        "4",
        "generate",
        "--w-r2",
        "1",
        "--n",
        "300",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_CLEAN);
    let rows = lines(&file);
    assert_eq!(rows[0], (1..=15).map(|j| format!("v{j}")).collect::<Vec<_>>().join(","));
    assert_eq!(rows.len(), 301);

    let (code, stdout, _) = rqsim(&["screen", file.to_str().unwrap(), "--pairwise"]);
    assert!(code == EXIT_CLEAN || code == EXIT_SIGNIFICANT);
    assert!(stdout.contains("var_i,var_j,statistic,standardized,p_value"));
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.starts_with('v') && !l.starts_with("var_i"))
            .count(),
        105
    );

    let out = dir.path().join("screen");
    let (_, _, _) = rqsim(&["--out-dir", out.to_str().unwrap(), "screen", file.to_str().unwrap()]);
    assert!(out.join("screen_tests.csv").exists());

    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    rqsim(&["--seed", "4", "generate", "--out", a.to_str().unwrap()]);
    rqsim(&["--seed", "4", "generate", "--out", b.to_str().unwrap()]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn screen_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = rqsim(&["screen", "/definitely/not/here.csv"]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("not/here.csv"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,oops\n").unwrap();
    let (code, _, err) = rqsim(&["screen", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("line 3"), "{err}");

    let constant = dir.path().join("constant.csv");
    let body: String = (0..30).map(|i| format!("{i},{}\n", 1.0)).collect();
    fs::write(&constant, format!("a,b\n{body}")).unwrap();
    let (code, _, _) = rqsim(&["screen", constant.to_str().unwrap()]);
    assert_eq!(code, EXIT_ERROR);
}

#[test]
fn help_and_usage() {
    let (code, stdout, _) = rqsim(&["--help"]);
    assert_eq!(code, EXIT_CLEAN);
    for sub in ["simulate", "scatter", "demo-fig3", "generate", "screen"] {
        assert!(stdout.contains(sub));
    }
    let (code, _, _) = rqsim(&["frobnicate"]);
    assert_eq!(code, EXIT_ERROR);
}
