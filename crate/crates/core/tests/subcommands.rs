//! Worked examples for each subcommand, run in memory.

use gapinit_lab::adapter::load_adapter;
use gapinit_lab::harness::{execute, Command, CsvTable, ExperimentConfig, Outputs};
use gapinit_lab::DenseMatrix;

fn run(cmd: Command, text: &str) -> Outputs {
    let cfg = ExperimentConfig::parse(text, cmd).unwrap();
    let outcome = execute(cmd, &cfg, None).unwrap();
    assert!(outcome.deferred_error.is_none());
    outcome.outputs
}

fn table(out: &Outputs, name: &str) -> CsvTable {
    CsvTable::parse(std::str::from_utf8(out.get(name).unwrap()).unwrap()).unwrap()
}

fn column(t: &CsvTable, name: &str) -> Vec<String> {
    let c = t.column_index(name).unwrap();
    t.rows().iter().map(|r| r[c].to_string()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn suppression_reports_slope_footer() {
    let out = run(Command::Suppression, "dims = [64, 256, 1024]\nn_samples = 4000\n");
    let t = table(&out, "suppression.csv");
    assert_eq!(t.header(), ["d", "mean_abs_cos_random", "mean_abs_cos_gapinit"]);
    let last = t.rows().last().unwrap();
    assert_eq!(last[0].to_string(), "slope");
    let slope = last[1].as_f64().unwrap();
    assert!((-0.55..=-0.45).contains(&slope), "{slope}");
    for v in column(&t, "mean_abs_cos_gapinit").iter().take(3) {
        assert_eq!(num(v), 1.0);
    }
    assert!(std::str::from_utf8(out.get("suppression.svg").unwrap()).unwrap().contains("fitted slope"));
}

#[test]
fn concentration_bound_column() {
    let out = run(Command::Concentration, "dims = [4096]\nn_samples = 20000\neps_list = [0.05]\n");
    let t = table(&out, "concentration.csv");
    let bound = num(&column(&t, "bound")[0]);
    assert!((bound - 0.011966995).abs() < 1e-8, "{bound}");
    assert!(num(&column(&t, "empirical_tail")[0]) <= bound);
}

#[test]
fn noiseless_spectrum_and_collapsed_cone() {
    let out = run(Command::Spectrum, "d = 10\nsigma = 0.0\nn_samples = 30\n");
    let t = table(&out, "spectrum.csv");
    assert!((num(&column(&t, "explained_fraction")[0]) - 1.0).abs() < 1e-12);

    let out = run(Command::Cone, "d = 10\nsigma = 0.0\nn_samples = 30\n");
    for v in column(&table(&out, "cone.csv"), "mean_cos") {
        assert!((num(&v) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn planted_spectrum_top_fraction() {
    let out = run(Command::Spectrum, "d = 100\nsigma = 0.05\nn_samples = 4000\n");
    let f = num(&column(&table(&out, "spectrum.csv"), "explained_fraction")[0]);
    assert!((f - 0.67).abs() < 0.01, "{f}");
}

#[test]
fn calibrate_selects_planted_layers_and_feeds_training() {
    let out = run(Command::Calibrate, "");
    let t = table(&out, "layer_scores.csv");
    let selected: Vec<usize> = column(&t, "selected")
        .iter()
        .enumerate()
        .filter(|(_, s)| s.as_str() == "1")
        .map(|(l, _)| l)
        .collect();
    assert_eq!(selected, [3, 6]);

    let dir = tempfile::tempdir().unwrap();
    out.write_to(dir.path()).unwrap();
    let gaps = dir.path().join("gaps.json");
    let text = format!("d = 64\nn_samples = 64\nn_steps = 5\nseeds = [1]\ngaps_file = {:?}\ngap_layer = 3\n", gaps);
    let train = run(Command::Train, &text);
    assert!(train.get("adapter_seed1.json").is_some());
}

#[test]
fn noiseless_gap_training_reaches_zero_loss() {
    let out = run(Command::Train, "d = 32\nsigma = 0.0\nn_samples = 64\nn_steps = 3000\nseeds = [1]\n");
    let loss = num(&column(&table(&out, "final.csv"), "final_loss")[0]);
    // Unit gap, so the threshold is 1e-6·‖g‖².
    assert!(loss < 1e-6, "{loss}");
}

#[test]
fn zero_steps_give_a_header_only_trace() {
    let out = run(Command::Train, "d = 8\nn_samples = 16\nn_steps = 0\nseeds = [1, 2]\n");
    assert_eq!(std::str::from_utf8(out.get("trace.csv").unwrap()).unwrap(), "seed,init,step,loss,alignment,status\n");
}

#[test]
fn noise_ablation_eps_zero_row_matches_clean_row() {
    let out = run(Command::Ablate, "mode = \"noise\"\nd = 64\nn_samples = 128\nn_steps = 50\n");
    let t = table(&out, "ablation.csv");
    let rows = t.rows();
    assert_eq!(rows[0][0].to_string(), "gap");
    assert_eq!(num(&rows[1][1].to_string()), 0.0);
    assert_eq!(rows[0][2..], rows[1][2..]);
    let align = column(&t, "mean_init_alignment");
    assert!(num(align.last().unwrap()) < 0.5 * num(&align[1]));
}

#[test]
fn calib_size_and_composition_ablations() {
    let out = run(Command::Ablate, "mode = \"calib-size\"\nd = 64\n");
    let errs: Vec<f64> = column(&table(&out, "ablation.csv"), "mean_relative_error").iter().map(|s| num(s)).collect();
    assert!(errs[..4].windows(2).all(|w| w[1] < w[0]));

    let out = run(Command::Ablate, "mode = \"composition\"\nd = 64\nn_samples = 4000\n");
    let cos: Vec<f64> = column(&table(&out, "ablation.csv"), "cos_to_in_gap").iter().map(|s| num(s)).collect();
    assert!(cos[0] > 0.99 && cos.last().unwrap().abs() < 0.1);

    let wider = run(Command::Ablate, "mode = \"composition\"\nd = 64\nn_samples = 20000\nood = \"wider\"\nmix_list = [0.0, 0.5]\n");
    let cos: Vec<f64> = column(&table(&wider, "ablation.csv"), "cos_to_in_gap").iter().map(|s| num(s)).collect();
    assert!((cos[1] - cos[0]).abs() < 0.01 * cos[0], "{cos:?}");
}

#[test]
fn committed_checkpoint_still_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/adapter_v1.json");
    let a = load_adapter(&path).unwrap();
    assert_eq!((a.d(), a.k(), a.rank(), a.alpha()), (3, 2, 2, 4.0));
    let expected = DenseMatrix::new(3, 2, vec![0.5, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!(a.delta_w().unwrap(), expected);
    assert_eq!(gapinit_lab::adapter::to_json(&a), std::fs::read_to_string(&path).unwrap());
}
