use std::path::Path;
use std::process::Command;

use mrv_cli::commands::{self, GenerateArgs};
use mrv_cli::config::RunConfig;
use mrv_core::synth::Profile;

fn mrvsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mrvsim"))
        .args(args)
        .output()
        .unwrap()
}

fn generate(out: &Path, seed: u64, days: usize, profile: Profile) {
    let args = GenerateArgs {
        seed,
        days,
        profile,
        out: out.to_path_buf(),
        horizon: 24,
        corpus: false,
        no_quantiles: false,
    };
    commands::generate(&args).unwrap();
}

fn netload(dir: &Path) -> Vec<(String, f64)> {
    let mut r = csv::Reader::from_path(dir.join("netload.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_owned(), rec[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    generate(&a, 7, 3, Profile::SpringPv);
    generate(&b, 7, 3, Profile::SpringPv);
    generate(&c, 8, 3, Profile::SpringPv);
    assert_eq!(netload(&a).len(), 72);
    for f in [
        "netload.csv",
        "tariff.csv",
        "quantiles.csv",
        "scenario.toml",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("netload.csv")).unwrap(),
        std::fs::read(c.join("netload.csv")).unwrap()
    );
}

#[test]
fn pv_profiles_have_the_expected_sign_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let (nopv, summer) = (tmp.path().join("nopv"), tmp.path().join("summer"));
    generate(&nopv, 3, 7, Profile::NoPv);
    generate(&summer, 3, 7, Profile::SummerPv);
    assert!(netload(&nopv).iter().all(|(_, v)| *v >= 0.0));
    let midday: Vec<f64> = netload(&summer)
        .into_iter()
        .filter(|(t, _)| matches!(&t[11..13], "11" | "12" | "13"))
        .map(|(_, v)| v)
        .collect();
    let negative = midday.iter().filter(|&&v| v < 0.0).count();
    assert!(
        negative * 4 >= midday.len() * 3,
        "{negative} of {} midday hours negative",
        midday.len()
    );
}

#[test]
fn zero_load_rule_based_run_reports_zeros() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("zero");
    std::fs::create_dir_all(&dir).unwrap();
    let mut net = String::from("timestamp,netload_kw\n");
    let mut tariff = String::from("timestamp,price_eur_per_kwh,c_buy,c_sell\n");
    for h in 0..24 {
        net += &format!("2023-06-01T{h:02}:00:00,0\n");
        tariff += &format!("2023-06-01T{h:02}:00:00,0.1,0.4,0.08\n");
    }
    std::fs::write(dir.join("netload.csv"), net).unwrap();
    std::fs::write(dir.join("tariff.csv"), tariff).unwrap();
    let out = tmp.path().join("out");
    let cfg = RunConfig {
        scenarios: vec![dir],
        controllers: vec!["RBC".into()],
        out: out.clone(),
        ..RunConfig::default()
    };
    let report = commands::run(&cfg).unwrap();
    let row = &report.summary[0];
    assert_eq!(
        (
            row.import_kwh,
            row.export_kwh,
            row.total_cost_eur,
            row.tightenings
        ),
        (0.0, 0.0, 0.0, 0)
    );
    for f in [
        "report.csv",
        "report.json",
        "scenarios.csv",
        "zero/trace_RBC.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(out.join("zero/trace_RBC.csv")).unwrap();
    assert_eq!(trace.lines().count(), 25);
}

#[test]
fn run_writes_reports_traces_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    generate(&bundle, 11, 2, Profile::SummerPv);
    let out = tmp.path().join("out");
    let o = mrvsim(&[
        "run",
        "--scenario",
        bundle.to_str().unwrap(),
        "--controllers",
        "SMPC-FG,MPC-Ideal,RBC,SMPC-FB",
        "--out",
        out.to_str().unwrap(),
        "--emit-plots",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let name = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    for f in [
        "trace_SMPC-FG.csv",
        "trace_MPC-Ideal.csv",
        "trace_RBC.csv",
        "plot_timeseries.csv",
        "plot_density_SMPC-FG.csv",
        "plot_density_SMPC-FB.csv",
        "plot_density_RBC.csv",
    ] {
        assert!(name.join(f).is_file(), "{f}");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("controller,import_kwh,import_cost_eur,export_kwh,export_revenue_eur,total_cost_eur,regret_pct,rank"));
    assert_eq!(report.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["summary"].as_array().unwrap().len(), 4);
    assert_eq!(json["settings"]["battery"]["e_max"], 7.68);

    // The density table carries both point masses and integrates to one per variable.
    let mut r = csv::Reader::from_path(name.join("plot_density_SMPC-FG.csv")).unwrap();
    let rows: Vec<(String, String, f64, f64)> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (
                rec[0].to_owned(),
                rec[1].to_owned(),
                rec[2].parse().unwrap(),
                rec[3].parse().unwrap(),
            )
        })
        .collect();
    for var in ["P_B", "P_G"] {
        let dens: Vec<&(String, String, f64, f64)> = rows
            .iter()
            .filter(|r| r.0 == var && r.1 == "density")
            .collect();
        let area: f64 = dens
            .windows(2)
            .map(|w| 0.5 * (w[0].3 + w[1].3) * (w[1].2 - w[0].2))
            .sum();
        let mass: f64 = rows
            .iter()
            .filter(|r| r.0 == var && r.1 == "mass")
            .map(|r| r.3)
            .sum();
        assert!((area + mass - 1.0).abs() < 2e-2, "{var}: {area} + {mass}");
    }
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("b");
    generate(&bundle, 1, 1, Profile::WinterPv);
    let b = bundle.to_str().unwrap();

    let o = mrvsim(&["run", "--scenario", b, "--controllers", "SMPC-FG,LQR"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LQR"));

    assert_eq!(mrvsim(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        mrvsim(&["run", "--scenario", b, "--horizon", "0"])
            .status
            .code(),
        Some(2)
    );

    // Malformed value on the third data line of the net-load file.
    let text = std::fs::read_to_string(bundle.join("netload.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[3] = format!("{},abc", lines[3].split(',').next().unwrap());
    std::fs::write(bundle.join("netload.csv"), lines.join("\n") + "\n").unwrap();
    let o = mrvsim(&[
        "run",
        "--scenario",
        b,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("netload.csv:4"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let missing = tmp.path().join("nowhere");
    assert_eq!(
        mrvsim(&["run", "--scenario", missing.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn help_lists_every_flag() {
    let o = mrvsim(&["run", "--help"]);
    assert!(o.status.success());
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--config",
        "--scenario",
        "--controllers",
        "--horizon",
        "--seed",
        "--out",
        "--emit-plots",
        "--plot-hour",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
    let top = String::from_utf8_lossy(&mrvsim(&["--help"]).stdout).into_owned();
    for cmd in ["generate", "run", "fit-forecast", "tariff"] {
        assert!(top.contains(cmd), "{cmd}");
    }
}

#[test]
fn fit_forecast_and_tariff_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("b");
    generate(&bundle, 5, 1, Profile::SpringPv);
    let fits = tmp.path().join("fits.csv");
    let o = mrvsim(&[
        "fit-forecast",
        "--quantiles",
        bundle.join("quantiles.csv").to_str().unwrap(),
        "--out",
        fits.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&fits).unwrap();
    let rms_col = r
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "rms_kw")
        .unwrap();
    let rows: Vec<f64> = r
        .records()
        .map(|rec| rec.unwrap()[rms_col].parse().unwrap())
        .collect();
    // One day of rolling 24-hour forecasts truncated at the scenario end.
    assert_eq!(rows.len(), 24 * 25 / 2);
    assert!(rows.iter().all(|&e| e < 0.05));

    let wholesale = tmp.path().join("wholesale.csv");
    let mut text = String::from("timestamp,price_eur_per_kwh\n");
    for h in 0..48 {
        text += &format!(
            "2023-03-01 {:02}:00,{}\n",
            h % 24,
            -0.05 + 0.01 * f64::from(h % 24)
        );
    }
    // The second day repeats the first day's clock, so the file is not hourly.
    std::fs::write(&wholesale, &text).unwrap();
    let out = tmp.path().join("tariff.csv");
    let args = [
        "tariff",
        "--wholesale",
        wholesale.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(mrvsim(&args).status.code(), Some(3));

    let mut text = String::from("timestamp,price_eur_per_kwh\n");
    for h in 0..24 {
        text += &format!("2023-03-01 {h:02}:00,{}\n", -0.05 + 0.01 * f64::from(h));
    }
    std::fs::write(&wholesale, &text).unwrap();
    let o = mrvsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let (mut buy, mut sell) = (0.0, 0.0);
    for rec in r.records() {
        let rec = rec.unwrap();
        buy += rec[2].parse::<f64>().unwrap() / 24.0;
        let s: f64 = rec[3].parse().unwrap();
        assert!(s >= 0.0);
        sell += s / 24.0;
    }
    assert!((buy - 0.4).abs() < 1e-9 && (sell - 0.08).abs() < 1e-9);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("scen");
    generate(&bundle, 2, 1, Profile::NoPv);
    let cfg_path = tmp.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "scenarios = [\"scen\"]\ncontrollers = [\"rbc\", \"mpc_ideal\"]\nout = \"from-config\"\n[battery]\ne_max = 5.0\n",
    )
    .unwrap();
    let o = mrvsim(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--controllers",
        "RBC",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("from-config/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["settings"]["controllers"], serde_json::json!(["RBC"]));
    assert_eq!(json["settings"]["battery"]["e_max"], 5.0);
}
