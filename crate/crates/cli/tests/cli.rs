use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use dolb::accelerated::FieldDump;
use dolb::cases::{CaseKind, CollisionKind, Drive};
use dolb::diagnostics::DiagnosticsSeries;
use dolb_cli::config::{resolve, FileConfig, Overrides};
use dolb_cli::run::{execute, replay, RunManifest};
use dolb_cli::{required_models, write_models, Cli};

fn cli(args: &[&str]) -> anyhow::Result<String> {
    let mut out = Vec::new();
    let parsed = Cli::try_parse_from(std::iter::once("dolb").chain(args.iter().copied()))?;
    dolb_cli::execute(parsed, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn series(dir: &Path) -> DiagnosticsSeries {
    DiagnosticsSeries::read_csv(fs::File::open(dir.join("series.csv")).unwrap()).unwrap()
}

fn column(s: &DiagnosticsSeries, name: &str) -> Vec<f64> {
    let i = s.extra_names.iter().position(|n| n == name).unwrap();
    s.rows.iter().map(|r| r.extra[i]).collect()
}

#[test]
fn tgv_series_has_normalized_columns_and_replays_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tgv");
    cli(&[
        "run",
        "--case",
        "tgv",
        "--L",
        "16",
        "--Re",
        "400",
        "--Ma",
        "0.1",
        "--collision",
        "rr",
        "--blocks",
        "2,1,2",
        "--workers",
        "2",
        "--tmax",
        "0.5tc",
        "--output-every",
        "5",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let s = series(&out);
    assert_eq!(s.extra_names, ["k_over_k0", "eps_over_eps0"]);
    assert_eq!(s.rows[0].step, 0);
    assert_eq!(column(&s, "k_over_k0")[0], 1.0);
    assert!(s.rows.windows(2).all(|w| w[0].step < w[1].step));
    let k: Vec<f64> = s.rows.iter().map(|r| r.k / s.rows[0].k).collect();
    assert_eq!(k, column(&s, "k_over_k0"));

    let manifest = RunManifest::load(&out.join("manifest.toml")).unwrap();
    assert_eq!(manifest.dispatch, ["COLL_RR"]);
    assert_eq!(manifest.registry.len(), 1);
    assert_eq!(manifest.plan.config.block_grid, [2, 1, 2]);
    for f in &manifest.files {
        assert!(out.join(f).exists(), "{f}");
    }

    let again = tmp.path().join("again");
    replay(&out.join("manifest.toml"), Some(again.clone()), true).unwrap();
    assert_eq!(
        fs::read(out.join("series.csv")).unwrap(),
        fs::read(again.join("series.csv")).unwrap()
    );

    let mut text = fs::read_to_string(out.join("series.csv")).unwrap();
    text = text.replacen(",1,1\n", ",1,1.0000000000000002\n", 1);
    fs::write(out.join("series.csv"), text).unwrap();
    let err = replay(&out.join("manifest.toml"), Some(tmp.path().join("third")), true).unwrap_err();
    assert!(err.to_string().contains("differs"), "{err}");
}

#[test]
fn single_precision_run_with_reference_check_stays_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f32");
    let text = cli(&[
        "run",
        "--case",
        "cavity",
        "--L",
        "16",
        "--Re",
        "100",
        "--precision",
        "f32",
        "--tmax",
        "30",
        "--output-every",
        "10",
        "--reference-check",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    assert!(text.contains("max population difference 0e0"), "{text}");
    assert!(column(&series(&out), "ref_divergence").iter().all(|&d| d == 0.0));
}

#[test]
fn cavity_writes_averaged_profiles_and_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cavity");
    cli(&[
        "run",
        "--case",
        "cavity",
        "--L",
        "16",
        "--Re",
        "100",
        "--Ma",
        "0.1",
        "--tmax",
        "2tc",
        "--dump-every",
        "1tc",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let profiles = fs::read_to_string(out.join("profiles.csv")).unwrap();
    let mut lines = profiles.lines();
    assert_eq!(lines.next(), Some("line,coordinate,value"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|r| r.starts_with("ux_vs_z,")).count(), 18);
    assert_eq!(rows.iter().filter(|r| r.starts_with("uz_vs_x,")).count(), 18);

    let manifest = RunManifest::load(&out.join("manifest.toml")).unwrap();
    let dumps: Vec<&String> = manifest.files.iter().filter(|f| f.ends_with(".dolb")).collect();
    assert_eq!(dumps.len(), 3);
    let dump = FieldDump::read_from(fs::File::open(out.join(dumps[2])).unwrap()).unwrap();
    assert_eq!(dump.dims, [18, 18, 18]);
    assert!(dump.data.iter().all(|v| v.is_finite()));
}

#[test]
fn plate_channel_reaches_the_poiseuille_permeability() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("plates");
    cli(&[
        "run",
        "--case",
        "porous",
        "--geometry",
        "plates",
        "--H",
        "11",
        "--drive",
        "pressure",
        "--tmax",
        "6000",
        "--output-every",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let s = series(&out);
    let k = *column(&s, "k_fluid").last().unwrap();
    let rel = k / (11.0 * 11.0 / 12.0) - 1.0;
    assert!(rel.abs() < 0.01, "k = {k} ({rel:+.3e})");
    assert!(column(&s, "dp").iter().all(|&dp| dp > 0.0));
}

#[test]
fn show_models_lists_the_dispatch_stanza() {
    assert_eq!(
        cli(&["show-models", "--case", "tgv", "--collision", "bgk"]).unwrap(),
        "COLL_BGK\n"
    );
    let porous = cli(&["show-models", "--case", "porous"]).unwrap();
    let listed: Vec<&str> = porous.lines().collect();
    assert!(listed.contains(&"BounceBack"));
    assert!(listed.contains(&"Boundary_RegularizedVelocity_0_M1|COLL_TRT"));
    assert!(listed.contains(&"Boundary_RegularizedPressure_0_1|COLL_TRT"));
    assert!(listed.contains(&"COLL_TRT"));
}

#[test]
fn written_models_round_trip_through_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("case.toml");
    fs::write(
        &path,
        "# channel\n[case]\nkind = \"porous\"\nL = 6\n\n[porous]\nheight = 7\nupstream = 4\ndownstream = 4\n\n[run]\ntmax = 4\noutput_every = 2\n",
    )
    .unwrap();
    let listed = cli(&["show-models", "--config", path.to_str().unwrap(), "--write"]).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# channel\n"));
    let file = FileConfig::load(&path).unwrap();
    let models = file.dispatch.models.clone().unwrap();
    assert_eq!(listed.lines().take(models.len()).collect::<Vec<_>>(), models);

    let out = tmp.path().join("out");
    cli(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();

    write_models(&path, &models[1..]).unwrap();
    let err = cli(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap_err();
    assert!(format!("{err:#}").contains(&models[0]), "{err:#}");
}

#[test]
fn required_models_always_suffice() {
    let tmp = tempfile::tempdir().unwrap();
    for &case in CaseKind::ALL {
        for &collision in CollisionKind::ALL {
            for smagorinsky in [0.0, 0.12] {
                for &drive in Drive::ALL {
                    let mut file: FileConfig = toml::from_str(
                        "[porous]\nheight = 7\nupstream = 3\ndownstream = 3\n[run]\ntmax = 3\noutput_every = 1\n",
                    )
                    .unwrap();
                    file.case.l = Some(if case == CaseKind::Porous { 5 } else { 16 });
                    file.case.re = Some(50.0);
                    let flags = Overrides {
                        case: Some(case),
                        collision: Some(collision),
                        smagorinsky: Some(smagorinsky),
                        drive: Some(drive),
                        blocks: Some([2, 1, 1]),
                        out: Some(tmp.path().join("sweep")),
                        ..Default::default()
                    };
                    let mut plan = resolve(&file, &flags).unwrap();
                    plan.dispatch = Some(required_models(&plan).unwrap());
                    let outcome =
                        execute(&plan).unwrap_or_else(|e| panic!("{case} {collision} {smagorinsky} {drive}: {e:#}"));
                    assert_eq!(outcome.perf.steps, 3);
                    assert!(outcome.series.rows.iter().all(|r| r.step <= 3));
                }
            }
        }
    }
}

#[test]
fn configuration_errors_name_the_valid_choices() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[case]\nkind = \"channel\"\n").unwrap();
    let err = cli(&["run", "--config", path.to_str().unwrap()]).unwrap_err();
    let msg = format!("{err:#}");
    assert!(
        msg.contains("tgv") && msg.contains("cavity") && msg.contains("porous"),
        "{msg}"
    );

    let err = cli(&["run", "--case", "tgv", "--collision", "mrt"]).unwrap_err();
    assert!(err.to_string().contains("bgk, trt, rr"), "{err}");

    let err = cli(&["run", "--case", "cavity", "--L", "16", "--Ma", "0"]).unwrap_err();
    assert!(format!("{err:#}").contains("outside the stable interval"), "{err:#}");
}

#[test]
fn binary_exit_status_reflects_success() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_dolb");
    let ok = Process::new(bin)
        .args(["run", "--case", "tgv", "--L", "8", "--tmax", "2", "--out"])
        .arg(tmp.path().join("ok"))
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let bad = Process::new(bin)
        .args(["run", "--case", "tgv", "--blocks", "3,1"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let missing = Process::new(bin).args(["run"]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no case selected"));
}

#[test]
fn perf_reports_the_bandwidth_model() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = tmp.path().join("devices.toml");
    fs::write(
        &catalog,
        "[[device]]\nname = \"toy\"\nbandwidth_gbs = 164\ncapacity_gb = 1\n",
    )
    .unwrap();
    let config = tmp.path().join("perf.toml");
    fs::write(
        &config,
        format!(
            "[case]\nkind = \"tgv\"\nL = 8\n[numerics]\nprecision = \"f32\"\n[perf]\ndevice = \"toy\"\ncatalog = {:?}\nwarmup = 1\nsteps = 2\n[run]\nout = {:?}\n",
            catalog.to_str().unwrap(),
            tmp.path().join("p").to_str().unwrap()
        ),
    )
    .unwrap();
    let text = cli(&["perf", "--config", config.to_str().unwrap()]).unwrap();
    assert!(text.contains("toy: 164 bytes/cell, peak 1.000 GLUPS"), "{text}");
    assert!(tmp.path().join("p/perf.csv").exists());
}
