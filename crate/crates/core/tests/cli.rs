use std::fs;
use std::path::{Path, PathBuf};

use sbi_core::cli::{read_batch, read_checkpoint, read_samples, run, CornerData};
use serde_json::Value;
use tempfile::TempDir;

fn sbi(args: &[&str]) -> i32 {
    run(std::iter::once("sbi").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FAST: &str = "seed = 11\n[train]\nmax_epochs = 5\n[method.estimator]\nhidden = 16\n";

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

#[test]
fn simulate_writes_rows_independent_of_workers() {
    let w = Work::new();
    let cfg = w.config("run.toml", "seed = 3\n");
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "1000", "--workers", "1", "--out", p(&w.path("a"))]), 0);
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "1000", "--workers", "4", "--out", p(&w.path("b"))]), 0);
    assert_eq!(w.read("a/batch.csv"), w.read("b/batch.csv"));
    assert_eq!(w.read("a/batch.csv").lines().count(), 1001);

    // x − θ has the configured noise variance 0.1.
    let b = read_batch(&w.path("a")).unwrap();
    let r = &b.x - &b.theta;
    let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    assert!((var - 0.1).abs() < 0.01, "{var}");
    let header = w.json("a/batch.json");
    assert_eq!(header["n"], 1000);
    assert_eq!(header["provenance"], "simulate:linear-gaussian");
}

#[test]
fn unknown_simulator_lists_the_registry() {
    let w = Work::new();
    let cfg = w.config("run.toml", "seed = 1\n[simulator]\nname = \"lotka-volterra\"\n");
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "10", "--out", p(&w.path("o"))]), 1);
    assert!(!w.path("o/batch.csv").exists());
}

#[test]
fn import_round_trips_and_flags_invalid_rows() {
    let w = Work::new();
    let cfg = w.config("run.toml", "seed = 4\n");
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "50", "--out", p(&w.path("sim"))]), 0);
    let out = w.path("imp");
    let sim_csv = w.path("sim/batch.csv");
    let args = ["import", "--csv", p(&sim_csv), "--theta-dim", "2", "--x-dim", "2"];
    assert_eq!(sbi(&[&args[..], &["--seed", "0", "--out", p(&out)]].concat()), 0);
    assert_eq!(w.read("sim/batch.csv"), w.read("imp/batch.csv"));

    let raw = w.config("raw.csv", "a,b,c,d\n0.1,0.2,0.3,0.4\n0.5,0.6,NaN,0.8\n");
    assert_eq!(sbi(&["import", "--csv", p(&raw), "--theta-dim", "2", "--x-dim", "2", "--out", p(&w.path("raw"))]), 0);
    let lines: Vec<String> = w.read("raw/batch.csv").lines().map(String::from).collect();
    assert!(lines[1].ends_with(",1") && lines[2].ends_with(",0"));

    let bad = w.config("bad.csv", "1,2,3,4\n1,2,3,4\n1,2,3,4\n1,2,3,4\n1,2,3,4\n1,2,3,4\n1,2,3\n");
    assert_eq!(sbi(&["import", "--csv", p(&bad), "--theta-dim", "2", "--x-dim", "2", "--out", p(&w.path("bad"))]), 1);
    let e = sbi_core::cli::import_batch_csv(&bad, 2, 2, 0, "t").unwrap_err();
    assert!(e.to_string().contains("line 7"), "{e}");
}

#[test]
fn full_pipeline_matches_the_exact_posterior() {
    let w = Work::new();
    let cfg = w.config("run.toml", "seed = 11\n");
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "4000", "--out", p(&w.path("sim"))]), 0);
    assert_eq!(sbi(&["train", "--config", p(&cfg), "--batch", p(&w.path("sim")), "--out", p(&w.path("model"))]), 0);
    let ck = w.path("model/model.ckpt");
    let sample = |out: &str| {
        sbi(&[
            "sample",
            "--checkpoint",
            p(&ck),
            "--x-obs",
            "0.8,-0.6",
            "--n",
            "1000",
            "--config",
            p(&cfg),
            "--out",
            p(&w.path(out)),
        ])
    };
    assert_eq!(sample("post"), 0);
    assert_eq!(sample("post2"), 0);
    assert_eq!(w.read("post/samples.csv"), w.read("post2/samples.csv"));
    assert_eq!(w.json("post/report.json")["strategy"], "direct");

    let (post_csv, c2st_out) = (w.path("post/samples.csv"), w.path("c2st"));
    let c2st = ["diagnose", "c2st", "--samples", p(&post_csv), "--oracle"];
    let tail = ["--config", p(&cfg), "--x-obs", "0.8,-0.6", "--out", p(&c2st_out)];
    assert_eq!(sbi(&[&c2st[..], &tail[..]].concat()), 0);
    let report = w.json("c2st/report.json");
    assert_eq!(report["verdict"], "pass", "{report}");

    // The checkpoint reloads to the same estimator and writes back identically.
    let loaded = read_checkpoint(&ck).unwrap();
    sbi_core::cli::write_checkpoint(&w.path("copy.ckpt"), &loaded).unwrap();
    assert_eq!(w.read("model/model.ckpt"), w.read("copy.ckpt"));
    let s = read_samples(&w.path("post/samples.csv")).unwrap();
    sbi_core::cli::write_samples(&w.path("copy.csv"), &s).unwrap();
    assert_eq!(w.read("post/samples.csv"), w.read("copy.csv"));
}

#[test]
fn sbc_with_the_oracle_passes_and_a_widened_oracle_fails() {
    let w = Work::new();
    let cfg = w.config("run.toml", "seed = 5\n");
    let run_sbc = |scale: &str, out: &str| {
        sbi(&[
            "diagnose",
            "sbc",
            "--config",
            p(&cfg),
            "--oracle",
            "--oracle-cov-scale",
            scale,
            "--out",
            p(&w.path(out)),
        ])
    };
    assert_eq!(run_sbc("1", "exact"), 0);
    assert_eq!(w.json("exact/report.json")["verdict"], "pass");
    // A failing verdict is a result, not an error.
    assert_eq!(run_sbc("9", "wide"), 0);
    assert_eq!(w.json("wide/report.json")["verdict"], "fail");
    assert_eq!(w.read("exact/ranks.csv").lines().count(), 201);
}

#[test]
fn method_mismatch_between_config_and_checkpoint_is_rejected() {
    let w = Work::new();
    let cfg = w.config("run.toml", FAST);
    let nle = w.config("nle.toml", &format!("{FAST}[method]\nkind = \"nle\"\n"));
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "300", "--out", p(&w.path("sim"))]), 0);
    assert_eq!(sbi(&["train", "--config", p(&cfg), "--batch", p(&w.path("sim")), "--out", p(&w.path("m"))]), 0);
    let code = sbi(&[
        "sample",
        "--checkpoint",
        p(&w.path("m/model.ckpt")),
        "--x-obs",
        "0,0",
        "--n",
        "10",
        "--config",
        p(&nle),
        "--out",
        p(&w.path("s")),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn misspelled_config_keys_are_usage_errors() {
    let w = Work::new();
    for (i, text) in
        ["seed = 1\nseeds = 2\n", "seed = 1\n[train]\nbatchsize = 5\n", "seed = 1\n[simulatr]\n", "[train]\n"]
            .iter()
            .enumerate()
    {
        let cfg = w.config(&format!("c{i}.toml"), text);
        assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "10", "--out", p(&w.path("o"))]), 1, "{text}");
    }
    assert_eq!(sbi(&["simulate", "--n", "10"]), 1);
    assert_eq!(sbi(&["--help"]), 0);
}

#[test]
fn replay_reproduces_outputs_bit_for_bit() {
    let w = Work::new();
    let cfg = w.config("run.toml", FAST);
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "300", "--out", p(&w.path("sim"))]), 0);
    assert_eq!(sbi(&["train", "--config", p(&cfg), "--batch", p(&w.path("sim")), "--out", p(&w.path("m"))]), 0);
    let ck = w.path("m/model.ckpt");
    let args = ["sample", "--checkpoint", p(&ck), "--x-obs", "0.1,-0.4", "--n", "200"];
    assert_eq!(sbi(&[&args[..], &["--config", p(&cfg), "--out", p(&w.path("s"))]].concat()), 0);

    // The original config may change afterwards; the manifest carries it.
    fs::write(&cfg, "seed = 999\n").unwrap();
    for dir in ["sim", "s"] {
        let out = w.path(&format!("{dir}-replay"));
        assert_eq!(sbi(&["replay", "--manifest", p(&w.path(&format!("{dir}/manifest.json"))), "--out", p(&out)]), 0);
    }
    assert_eq!(w.read("sim/batch.csv"), w.read("sim-replay/batch.csv"));
    assert_eq!(w.read("s/samples.csv"), w.read("s-replay/samples.csv"));
}

#[test]
fn corner_marginals_and_conditionals() {
    let w = Work::new();
    let mut text = String::from("theta_0,theta_1\n");
    for i in 0..400 {
        let (a, b) = ((i % 20) as f64, (i / 20) as f64);
        text.push_str(&format!("{a},{b}\n"));
    }
    let samples = w.config("s.csv", &text);
    assert_eq!(sbi(&["corner", "--samples", p(&samples), "--bins", "4", "--out", p(&w.path("c"))]), 0);
    let c: CornerData = serde_json::from_str(&w.read("c/corner.json")).unwrap();
    // A product grid gives a pair histogram equal to the outer product of marginals.
    let (m0, m1) = (&c.marginals[0].mass, &c.marginals[1].mass);
    for (row, pa) in c.pairs[0].mass.iter().zip(m0) {
        for (v, pb) in row.iter().zip(m1) {
            assert!((v - pa * pb).abs() < 1e-12);
        }
    }

    // An unbounded band keeps every sample, and only the other dimension is shown.
    let cond = ["corner", "--samples", p(&samples), "--bins", "4", "--condition-dim", "0", "--condition-value", "-3"];
    assert_eq!(sbi(&[&cond[..], &["--band", "inf", "--out", p(&w.path("k"))]].concat()), 0);
    let k: CornerData = serde_json::from_str(&w.read("k/corner.json")).unwrap();
    assert_eq!(k.n_used, 400);
    assert_eq!(k.dims, vec![1]);
    assert_eq!(k.marginals[0].mass, *m1);

    assert_eq!(sbi(&[&cond[..], &["--band", "0.5", "--out", p(&w.path("e"))]].concat()), 1);
}

#[test]
fn all_failed_simulations_are_a_numerical_error() {
    let w = Work::new();
    let cfg = w.config("run.toml", &format!("{FAST}[simulator]\nfailure_rate = 0.999\n"));
    assert_eq!(sbi(&["simulate", "--config", p(&cfg), "--n", "20", "--out", p(&w.path("sim"))]), 2);

    // An imported batch of failed rows fails at training instead.
    let raw = w.config("raw.csv", &"0.1,0.2,NaN,NaN\n".repeat(20));
    assert_eq!(sbi(&["import", "--csv", p(&raw), "--theta-dim", "2", "--x-dim", "2", "--out", p(&w.path("imp"))]), 0);
    assert_eq!(w.json("imp/batch.json")["n_valid"], 0);
    assert_eq!(sbi(&["train", "--config", p(&cfg), "--batch", p(&w.path("imp")), "--out", p(&w.path("m"))]), 2);
}
