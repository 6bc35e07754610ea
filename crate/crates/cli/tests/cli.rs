use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use prnu_cli::commands::interior_max;
use prnu_cli::config::ExperimentConfig;
use prnu_cli::error::CliError;
use prnu_cli::{run, run_from_args, Cli};

const SMALL: &str = "\
[dataset]
width = 64
height = 64
alice_pool = 40
flat_field = 12
negatives = 30
targets = 3
";

fn prnu(args: &[&str]) -> i32 {
    run_from_args(std::iter::once("prnu").chain(args.iter().copied()))
}

fn try_prnu(args: &[&str]) -> Result<(), CliError> {
    run(Cli::try_parse_from(std::iter::once("prnu").chain(args.iter().copied())).expect("arguments parse"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small simulated dataset; returns (config path, manifest path).
fn small_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let config = dir.join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let data = dir.join("data");
    assert_eq!(prnu(&["simulate", "--config", s(&config), "--out", s(&data)]), 0);
    (config, data.join("manifest.json"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn simulate_writes_default_desk_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(prnu(&["simulate", "--out", s(&data)]), 0);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 430);
    assert_eq!(manifest["width"], 128);
    for f in files {
        assert!(data.join(f["path"].as_str().unwrap()).is_file());
    }
}

#[test]
fn attack_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let args = [
            "attack", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out), "--N", "20", "--l", "32",
            "--r", "10", "--A", "50", "--seed", "7", "--targets", "3",
        ];
        assert_eq!(prnu(&args), 0);
        trees.push(tree(&out));
    }
    assert_eq!(trees[0].len(), 1 + 2 * 3);
    assert_eq!(trees[0], trees[1]);
    let csv = String::from_utf8(trees[0][Path::new("attack.csv")].clone()).unwrap();
    assert!(csv.starts_with("method,l,r,N,A,seed,"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn seed_changes_forgeries() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let mut trees = Vec::new();
    for seed in ["7", "8"] {
        let out = dir.path().join(seed);
        let args = [
            "attack", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out), "--N", "20", "--seed", seed,
        ];
        assert_eq!(prnu(&args), 0);
        trees.push(tree(&out));
    }
    let key = Path::new("forgeries/forgery_0000.pgm");
    assert_ne!(trees[0][key], trees[1][key]);
}

#[test]
fn pipeline_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let out = dir.path().join("out");
    let common = ["--config", s(&config), "--manifest", s(&manifest), "--out", s(&out)];
    let with = |cmd: &[&str], extra: &[&str]| -> i32 {
        let args: Vec<&str> = cmd.iter().chain(common.iter()).chain(extra.iter()).copied().collect();
        prnu(&args)
    };
    assert_eq!(with(&["fingerprint"], &[]), 0);
    assert!(out.join("fingerprint.prnu").is_file());
    let fp = out.join("fingerprint.prnu");
    assert_eq!(with(&["identify"], &["--fingerprint", s(&fp)]), 0);
    assert!(out.join("identify.csv").is_file());
    let small = ["--N", "10", "--r", "5", "--forgeries", "2", "--fit-count", "10"];
    assert_eq!(with(&["triangle", "individual"], &small), 0);
    assert_eq!(with(&["triangle", "multi"], &small), 0);
    let pooled = [&small[..], &["--k", "5", "--repetitions", "50", "--ratios", "0.5,1"]].concat();
    assert_eq!(with(&["triangle", "pooled"], &pooled), 0);
    for name in ["triangle_individual", "triangle_multi", "triangle_pooled"] {
        let csv = fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        assert!(csv.starts_with("method,l,r,N,A,seed,"), "{name}: {csv}");
        let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join(format!("{name}.json"))).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
    }
}

#[test]
fn r_above_n_is_config_error_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let out = dir.path().join("out");
    let err = try_prnu(&[
        "attack", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out), "--N", "10", "--r", "11",
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("attack.r"), "{err}");
}

#[test]
fn n_above_pool_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let out = dir.path().join("out");
    let err = try_prnu(&["attack", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out), "--N", "41"])
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("attack.n"), "{err}");
}

#[test]
fn missing_manifest_role_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let mut doc: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    doc["files"].as_array_mut().unwrap().retain(|f| f["role"] != "eve_target");
    fs::write(&manifest, serde_json::to_vec(&doc).unwrap()).unwrap();
    let out = dir.path().join("out");
    let err = try_prnu(&["attack", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out), "--N", "10"])
        .unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("manifest") && err.to_string().contains("eve_target"), "{err}");
}

#[test]
fn inconsistent_dimensions_are_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (config, manifest) = small_dataset(dir.path());
    let mut doc: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    doc["width"] = 32.into();
    fs::write(&manifest, serde_json::to_vec(&doc).unwrap()).unwrap();
    let out = dir.path().join("out");
    let err = try_prnu(&["fingerprint", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out)])
        .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn missing_manifest_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(prnu(&["fingerprint", "--manifest", s(&missing), "--out", s(dir.path())]), 3);
}

#[test]
fn command_without_manifest_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = try_prnu(&["attack", "--out", s(dir.path())]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("manifest"), "{err}");
}

#[test]
fn unknown_config_key_names_key() {
    let err = ExperimentConfig::parse("[attack]\nbogus = 3\n").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("bogus"), "{err}");
}

#[test]
fn invalid_probabilities_and_psnr_are_rejected() {
    for text in [
        "[detector]\npfa = 0.0\n",
        "[triangle]\npfa = 1.5\n",
        "[attack]\na = 80.0\n",
        "[attack]\nl = 4\n",
        "[triangle]\nfit_count = 2\n",
    ] {
        let err = ExperimentConfig::parse(text).and_then(|c| c.validate().map(|_| c)).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text}");
    }
}

#[test]
fn config_defaults_and_file_values() {
    let cfg = ExperimentConfig::parse("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!((cfg.attack.n, cfg.attack.r, cfg.attack.l, cfg.attack.a), (60, 10, 32, 50.0));
    let cfg = ExperimentConfig::parse("seed = 4\n[attack]\nn = 30\nmethod = \"conventional\"\n").unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.attack.n, 30);
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "seed = 4\n[attack]\nn = 30\nr = 5\n[pooled]\nratios = [0.5]\n").unwrap();
    let cli = Cli::try_parse_from([
        "prnu", "attack", "--config", s(&config), "--seed", "9", "--r", "7", "--ratios", "0.25,1",
    ])
    .unwrap();
    let prnu_cli::Command::Attack { o } = cli.command else { panic!("wrong command") };
    let cfg = o.resolve().unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.attack.n, 30);
    assert_eq!(cfg.attack.r, 7);
    assert_eq!(cfg.pooled.ratios, vec![0.25, 1.0]);
}

#[test]
fn dataset_overrides_merge_onto_preset() {
    let cfg = ExperimentConfig::parse("[dataset]\npreset = \"attack\"\nwidth = 64\n[dataset.eve]\nsigma_k = 0.01\n").unwrap();
    let bc = cfg.dataset.bench_config(3, prnu_cli::config::Preset::Desk).unwrap();
    assert_eq!((bc.width, bc.height, bc.alice_pool, bc.seed), (64, 256, 400, 3));
    assert_eq!(bc.eve.sigma_k, 0.01);
    assert_eq!(bc.eve.read_noise_spread, 4.0);
}

#[test]
fn bad_dataset_override_is_config_error() {
    let cfg = ExperimentConfig::parse("[dataset]\nwidth = 0\n").unwrap();
    let err = cfg.dataset.bench_config(1, prnu_cli::config::Preset::Desk).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("dataset"), "{err}");
}

#[test]
fn interior_max_shape() {
    assert!(interior_max(&[0.1, 0.3, 0.2]));
    assert!(interior_max(&[0.2, 0.2, 0.2]));
    assert!(!interior_max(&[0.3, 0.2, 0.1]));
    assert!(!interior_max(&[0.1, 0.2, 0.3]));
    assert!(!interior_max(&[0.1, 0.2]));
}

#[test]
fn clap_usage_errors_use_clap_exit_code() {
    assert_eq!(prnu(&["attack", "--bogus"]), 2);
    assert_eq!(prnu(&["nope"]), 2);
}
