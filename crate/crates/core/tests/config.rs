use std::fs;
use std::path::PathBuf;

use ergolab::config::{InstanceConfig, RunConfig};
use ergolab::Error;

fn shipped() -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    let all = shipped();
    assert!(all.len() >= 6);
    for (path, text) in all {
        let cfg = RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.kind().unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again.to_toml().unwrap(), cfg.to_toml().unwrap(), "{}", path.display());
    }
}

#[test]
fn invalid_configs_are_config_errors() {
    let cases = [
        "experiment = \"solve\"\ngrid_sizes = [64, 32]\n[instance]\nalpha = 0.0\nbeta = 1.5\n",
        "experiment = \"solve\"\ngrid_sizes = [64]\n[instance]\nalpha = -0.5\nbeta = 0.4\n",
        "experiment = \"nope\"\n",
        "experiment = \"solve\"\nunknown_key = 1\n",
        "experiment = \"solve\"\ngrid_sizes = [64]\n[instance]\nalpha = 0.0\nbeta = 1.5\nf = \"x +\"\n",
    ];
    for text in cases {
        let r = RunConfig::from_toml(text).and_then(|c| c.validate());
        assert!(matches!(r, Err(Error::Config(_))), "{text:?} -> {r:?}");
    }
}

#[test]
fn instance_round_trip() {
    let text = "operator = \"pucci+\"\na = 1.0\nA = 2.0\nalpha = 0.5\nbeta = 2.0\nb = 1.0\nf = \"1 + x*y\"\nlower = [0.0, 0.0]\nupper = [1.0, 2.0]\n";
    let cfg = InstanceConfig::from_toml(text).unwrap();
    let inst = cfg.to_instance().unwrap();
    assert_eq!(inst.f.eval(&[2.0, 3.0]), 7.0);
    let back = InstanceConfig::from_instance(&inst).unwrap().to_instance().unwrap();
    assert_eq!(back.f.eval(&[2.0, 3.0]), 7.0);
    assert_eq!(back.operator, inst.operator);
}
