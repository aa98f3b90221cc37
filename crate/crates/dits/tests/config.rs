use dits::config::RunConfig;
use dits::dits_core::data::FutureMode;
use dits::dits_core::model::AttentionVariant;
use dits::Error;

const BASE: &str = r#"
seed = 3

[data]
kind = "covariate-regression"
seed = 1
length = 600
n_cov = 2

[window]
history = 48
horizon = 24

[model]
d_model = 8
n_layers = 1
n_heads = 2
"#;

#[test]
fn defaults_fill_in() {
    let cfg = RunConfig::parse(BASE).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.model.patch_len, 24);
    assert_eq!(cfg.flow.sample_steps, 5);
    assert_eq!(cfg.flow.ensemble_size, 10);
    assert_eq!(cfg.train.lr, 1e-4);
    assert_eq!(cfg.train.batch_size, 32);
    assert_eq!(cfg.window.future, FutureMode::WithFuture);
    assert_eq!(cfg.model.attention, AttentionVariant::Dits);
    assert_eq!(cfg.ablate.steps, vec![1, 2, 5, 10, 25]);
    assert_eq!(cfg.model_config(2).hist_len, 48);
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    for extra in [
        "colour = 1\n",
        "[model]\nd_modle = 8\n",
        "[train]\nlearning_rate = 1.0\n",
    ] {
        let text = format!("{BASE}{extra}");
        // a repeated [model] table is itself an error; either way parsing fails
        assert!(matches!(RunConfig::parse(&text), Err(Error::Format { .. })), "{extra}");
    }
    let text = BASE.replace("n_cov = 2", "n_cov = 2\nnoise = 0.1");
    assert!(matches!(RunConfig::parse(&text), Err(Error::Format { .. })));
}

#[test]
fn every_problem_is_reported_at_once() {
    let text = BASE
        .replace("horizon = 24", "horizon = 20")
        .replace("n_heads = 2", "n_heads = 3")
        .replace(
            "seed = 3",
            "seed = 3\n[flow]\nsample_steps = 0\n[train]\nbatch_size = 0",
        );
    let cfg = RunConfig::parse(&text).unwrap();
    let issues = cfg.issues();
    assert!(issues.len() >= 4, "{issues:?}");
    for needle in ["multiple of the patch length", "n_heads", "sample_steps", "batch_size"] {
        assert!(
            issues.iter().any(|i| i.contains(needle)),
            "{needle} missing from {issues:?}"
        );
    }
    assert!(matches!(cfg.validate(), Err(Error::Config(v)) if v == issues));
}

#[test]
fn grid_expands_to_the_product() {
    let text = format!("{BASE}\n[grid]\nlr = [1e-4, 3e-4]\nd_model = [8]\n");
    let cfg = RunConfig::parse(&text).unwrap();
    let cells = cfg.cells();
    assert_eq!(cells.len(), 2);
    assert_eq!(cfg.with_cell(&cells[1]).train.lr, 3e-4);
    let text = format!("{BASE}\n[grid]\nlr = [1e-4, 3e-4, 1e-3]\nn_layers = [1, 2]\n");
    assert_eq!(RunConfig::parse(&text).unwrap().cells().len(), 6);
}

#[test]
fn hash_tracks_content() {
    let a = RunConfig::parse(BASE).unwrap();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    b.out = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn toml_round_trip() {
    let a = RunConfig::parse(BASE).unwrap();
    let b = RunConfig::parse(&a.to_toml()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn variant_names_parse() {
    let text = BASE.replace(
        "n_heads = 2",
        "n_heads = 2\nattention = \"timer-xl\"\ntime_mask = \"causal\"",
    );
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.model.attention, AttentionVariant::TimerXl);
    let bad = BASE.replace("n_heads = 2", "n_heads = 2\nattention = \"perceiver\"");
    assert!(RunConfig::parse(&bad).is_err());
    let clash = BASE.replace(
        "n_heads = 2",
        "n_heads = 2\nattention = \"prefix\"\ncondition = \"joint\"",
    );
    let issues = RunConfig::parse(&clash).unwrap().issues();
    assert!(issues.iter().any(|i| i.contains("only be combined")), "{issues:?}");
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            let cfg = RunConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            // templates may point at data that is not shipped
            let issues: Vec<_> = cfg
                .issues()
                .into_iter()
                .filter(|i| !i.starts_with("data.manifest"))
                .collect();
            assert!(issues.is_empty(), "{}: {issues:?}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
