use std::path::Path;
use std::process::Command;

use sacfd::experiment::metrics::{mean_sd, read_aggregate, read_metrics};

fn sacfd(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sacfd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &std::process::Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = "\
scenario.hours = 72
scenario.seed = 3
episodes = 3
seeds = 0, 1
sac.batch_size = 16
sac.hidden = 8, 8
cem.population = 6
cem.hidden = 4
";

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), format!("{SMALL}{extra}")).unwrap();
    dir
}

#[test]
fn generate_then_run_from_file() {
    let dir = setup("");
    ok(&sacfd(dir.path(), &["generate-scenario", "--config", "exp.cfg", "--out", "s.csv"]));
    std::fs::write(
        dir.path().join("file.cfg"),
        format!("{SMALL}scenario.file = s.csv\nagent = rule\nout = from_file\n"),
    )
    .unwrap();
    ok(&sacfd(dir.path(), &["run", "--config", "file.cfg"]));
    let rows = read_metrics(&dir.path().join("from_file/rule_seed0.csv")).unwrap();
    assert_eq!(rows.len(), 1);
}

#[test]
fn baselines_are_single_rows() {
    for agent in ["rule", "fixed", "random"] {
        let dir = setup(&format!("agent = {agent}\n"));
        ok(&sacfd(dir.path(), &["run", "--config", "exp.cfg", "--out", "o"]));
        for seed in [0, 1] {
            let rows = read_metrics(&dir.path().join(format!("o/{agent}_seed{seed}.csv"))).unwrap();
            assert_eq!(rows.len(), 1, "{agent}");
            assert_eq!(rows[0].reported_reward, rows[0].eval_reward);
        }
    }
}

#[test]
fn sacfd_run_aggregate_and_evaluate() {
    let dir = setup("agent = sacfd\n");
    ok(&sacfd(dir.path(), &["run", "--config", "exp.cfg", "--out", "o"]));
    let o = dir.path().join("o");
    let s0 = read_metrics(&o.join("sacfd_seed0.csv")).unwrap();
    let s1 = read_metrics(&o.join("sacfd_seed1.csv")).unwrap();
    let agg = read_aggregate(&o.join("sacfd_aggregate.csv")).unwrap();
    assert_eq!(agg.len(), 3);
    for (e, row) in agg.iter().enumerate() {
        assert_eq!(row.n_seeds, 2);
        let (m, sd) = mean_sd(&[s0[e].eval_reward, s1[e].eval_reward]);
        assert!((row.eval_reward_mean - m).abs() <= 1e-12 * m.abs().max(1.0));
        assert!((row.eval_reward_sd - sd).abs() <= 1e-12 * m.abs().max(1.0));
    }
    let out = sacfd(dir.path(), &["evaluate", "--config", "exp.cfg", "--checkpoint", "o/sacfd_seed0.ckpt"]);
    ok(&out);
    let reward: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let best = s0.iter().map(|m| m.eval_reward).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(reward, best);
}

#[test]
fn seed_override_and_determinism() {
    let dir = setup("agent = sac\n");
    ok(&sacfd(dir.path(), &["run", "--config", "exp.cfg", "--seed", "4", "--out", "a"]));
    ok(&sacfd(dir.path(), &["run", "--config", "exp.cfg", "--seed", "4", "--out", "b"]));
    let a = std::fs::read(dir.path().join("a/sac_seed4.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/sac_seed4.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!dir.path().join("a/sac_seed0.csv").exists());
}

#[test]
fn cem_oracle_sweep_plot() {
    let dir = setup("agent = cem\n");
    ok(&sacfd(dir.path(), &["run", "--config", "exp.cfg", "--out", "o"]));
    let cem = read_metrics(&dir.path().join("o/cem_seed0.csv")).unwrap();
    assert_eq!(cem.len(), 3);

    ok(&sacfd(dir.path(), &["oracle", "--config", "exp.cfg", "--out", "o"]));
    let oracle = read_metrics(&dir.path().join("o/oracle.csv")).unwrap();
    let actions = std::fs::read_to_string(dir.path().join("o/oracle_actions.csv")).unwrap();
    assert_eq!(actions.lines().count(), 73);
    let summary = std::fs::read_to_string(dir.path().join("o/oracle_summary.txt")).unwrap();
    let delta: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("delta = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(cem.iter().all(|m| m.eval_reward <= oracle[0].eval_reward + delta));

    ok(&sacfd(
        dir.path(),
        &["sweep-thresholds", "--config", "exp.cfg", "--out", "sw", "--thresholds", "p5,mean,45"],
    ));
    let sweep = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);

    ok(&sacfd(
        dir.path(),
        &[
            "plot",
            "--series",
            "cem=o/cem_seed0.csv,o/cem_seed1.csv",
            "--baseline",
            "oracle=100",
            "--baseline",
            "zero=0",
            "--out",
            "p.svg",
        ],
    ));
    let svg = std::fs::read_to_string(dir.path().join("p.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="baseline""#).count(), 2);
}

#[test]
fn errors_exit_nonzero() {
    let dir = setup("");
    std::fs::write(dir.path().join("bad.cfg"), "agent = ppo\n").unwrap();
    for args in [
        vec!["run", "--config", "bad.cfg"],
        vec!["run", "--config", "missing.cfg"],
        vec!["plot", "--series", "x=", "--out", "p.svg"],
        vec!["evaluate", "--config", "exp.cfg", "--checkpoint", "nope.ckpt"],
    ] {
        let out = sacfd(dir.path(), &args);
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}
