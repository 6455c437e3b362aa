use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pubtrend::report::fmt_g9;
use pubtrend::{trendfit, ColumnMapping, Corpus, EntityId};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pubtrend"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a table file, skipping the provenance comment.
fn rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

const TOY_SPEC: &str = r#"
seed = 7
origin_year = 1990

[noise]
kind = "log_normal"
sigma = 0.05

[[entities]]
name = "US"
first_year = 1990
last_year = 2018
keywords = [
  { keyword = "alpha", base = 6.0, slope = 0.1, mu = 0.0 },
  { keyword = "beta", base = 5.5, slope = 0.1, mu = 0.0 },
  { keyword = "gamma", base = 5.0, slope = 0.1, mu = 0.0 },
]

[[entities]]
name = "CN"
first_year = 1990
last_year = 2018
keywords = [
  { keyword = "alpha", base = 3.0, slope = 0.3, mu = 0.0 },
  { keyword = "beta", base = 2.5, slope = 0.3, mu = 0.0 },
  { keyword = "gamma", base = 2.0, slope = 0.3, mu = 0.0 },
]
"#;

/// Synthesizes the toy corpus through the CLI and returns its path.
fn toy_corpus(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.toml");
    fs::write(&spec, TOY_SPEC).unwrap();
    let out = dir.join("synth");
    let o = run(&["synth", "--config", path_str(&spec), "--output-dir", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("corpus.csv")
}

#[test]
fn ingest_prints_summary_and_writes_canonical_corpus() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "entity,year,keyword,count\nUS,2001,Deep Learning,3\nUS,2000,deep learning,1\nCN,2000,lasso,2\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["ingest", "--input", path_str(&input), "--output-dir", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("entity CN: years 2000-2000"), "{s}");
    assert!(s.contains("entity US: years 2000-2001"), "{s}");
    assert!(s.contains("keywords: 2"), "{s}");

    let canonical = fs::read_to_string(out.join("corpus.csv")).unwrap();
    let reloaded = Corpus::load(out.join("corpus.csv"), &ColumnMapping::default()).unwrap();
    let original = Corpus::load(&input, &ColumnMapping::default()).unwrap();
    assert_eq!(reloaded, original);
    assert_eq!(canonical, original.to_csv_string());
    let meta = fs::read_to_string(out.join("metadata.toml")).unwrap();
    assert!(meta.contains(&original.fingerprint()));
}

#[test]
fn ingest_counts_all_64_search_terms() {
    let dir = TempDir::new().unwrap();
    let terms = fs::read_to_string(fixture("search_terms.txt")).unwrap();
    let mut csv = String::from("entity,year,keyword,count\n");
    for (i, t) in terms.lines().enumerate() {
        csv.push_str(&format!("US,2018,{t},{}\n", i + 1));
    }
    let input = dir.path().join("terms.csv");
    fs::write(&input, csv).unwrap();
    let o = run(&["ingest", "--input", path_str(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("keywords: 64"), "{}", stdout(&o));
}

#[test]
fn malformed_row_exits_with_validation_code_and_row_number() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "entity,year,keyword,count\nUS,2000,lasso,1\nUS,2001,lasso,many\n").unwrap();
    let o = run(&["ingest", "--input", path_str(&input)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let o = run(&["ingest", "--input", "/nonexistent/corpus.csv"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_entity_is_a_validation_error() {
    let nn = fixture("neural_network.csv");
    let o = run(&["lag", "--input", path_str(&nn), "--leader", "US", "--follower", "JP"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn lag_on_neural_network_fixture() {
    let nn = fixture("neural_network.csv");
    let o = run(&["lag", "--input", path_str(&nn), "--leader", "US", "--follower", "CN"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    let r = rows(&s);
    assert_eq!(r[0], "keyword,year,lag,defined,flag_zero_threshold");
    assert_eq!(r[1], "neural network,1987,6,1,0");
}

#[test]
fn lag_writes_both_tables_to_output_dir() {
    let dir = TempDir::new().unwrap();
    let nn = fixture("neural_network.csv");
    let o = run(&["lag", "--input", path_str(&nn), "--leader", "US", "--follower", "CN", "--output-dir", path_str(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mean = fs::read_to_string(dir.path().join("mean_lag.csv")).unwrap();
    assert_eq!(rows(&mean), vec!["year,mean_lag,m", "1987,6,1"]);
    assert!(dir.path().join("metadata.toml").exists());
}

#[test]
fn entropy_of_uniform_corpus_is_ln_k() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("u.csv");
    let mut csv = String::from("entity,year,keyword,count\n");
    for y in 2000..2003 {
        for k in ["a", "b", "c", "d"] {
            csv.push_str(&format!("US,{y},{k},5\n"));
        }
    }
    fs::write(&input, csv).unwrap();
    let o = run(&["entropy", "--input", path_str(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ln4 = fmt_g9(4f64.ln());
    let s = stdout(&o);
    let r = rows(&s);
    assert_eq!(r.len(), 4);
    for (i, y) in (2000..2003).enumerate() {
        assert_eq!(r[i + 1], format!("US,{y},{ln4},20"));
    }
}

#[test]
fn fit_hinge_auto_knot_matches_direct_calls() {
    let dir = TempDir::new().unwrap();
    let corpus_path = toy_corpus(dir.path());
    let out = dir.path().join("fit");
    let o = run(&[
        "fit", "--model", "hinge", "--knot", "auto", "--input", path_str(&corpus_path),
        "--leader", "US", "--follower", "CN", "--output-dir", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let corpus = Corpus::load(&corpus_path, &ColumnMapping::default()).unwrap();
    let us = corpus.total_volume(&EntityId::new("US").unwrap()).unwrap();
    let cn = corpus.total_volume(&EntityId::new("CN").unwrap()).unwrap();
    let knot = trendfit::crossing_year(&us, &cn).unwrap();
    let fit = trendfit::fit_volume_hinge(&cn, knot.y0).unwrap();

    let meta: toml::Table = toml::from_str(&fs::read_to_string(out.join("metadata.toml")).unwrap()).unwrap();
    let y0 = meta["knot"]["y0"].as_float().unwrap();
    assert_eq!(fmt_g9(y0), fmt_g9(knot.y0));
    assert_eq!(meta["fit"]["knot"].as_float().map(fmt_g9), Some(fmt_g9(knot.y0)));
    assert_eq!(meta["fit"]["n_obs"].as_integer(), Some(fit.n_obs as i64));

    let table = fs::read_to_string(out.join("fit.csv")).unwrap();
    let r = rows(&table);
    assert_eq!(r[0], "model,coef_name,estimate,hac_se,t_stat");
    assert_eq!(r.len(), 4);
    for (row, c) in r[1..].iter().zip(&fit.coefficients) {
        let want = format!("hinge:CN,{},{},{},{}", c.name, fmt_g9(c.estimate), fmt_g9(c.hac_se), fmt_g9(c.t_stat));
        assert_eq!(*row, want);
    }
}

#[test]
fn fit_rejects_bad_knot() {
    let dir = TempDir::new().unwrap();
    let corpus_path = toy_corpus(dir.path());
    let o = run(&["fit", "--model", "hinge", "--knot", "soon", "--input", path_str(&corpus_path), "--follower", "CN"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_degenerate_series_is_a_computation_error() {
    let nn = fixture("neural_network.csv");
    let o = run(&["fit", "--model", "loglinear", "--input", path_str(&nn), "--leader", "US"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn tvd_self_matrix_has_zero_diagonal() {
    let dir = TempDir::new().unwrap();
    let corpus_path = toy_corpus(dir.path());
    let o = run(&["tvd", "--input", path_str(&corpus_path), "--leader", "US"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    let body = rows(&s);
    assert_eq!(body.len(), 1 + 29 * 29);
    for line in &body[1..] {
        let f: Vec<&str> = line.split(',').collect();
        if f[2] == f[3] {
            assert_eq!(f[4], "0", "{line}");
        }
    }
}

#[test]
fn report_emits_every_table_deterministically() {
    let dir = TempDir::new().unwrap();
    let corpus_path = toy_corpus(dir.path());
    let outs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("report{i}"))).collect();
    for out in &outs {
        let o = run(&["report", "--input", path_str(&corpus_path), "--leader", "US", "--follower", "CN", "--output-dir", path_str(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let expected: [(&str, &str); 12] = [
        ("volume.csv", "entity,year,total"),
        ("fits.csv", "model,coef_name,estimate,hac_se,t_stat"),
        ("tvd_US_US.csv", "entity_row,entity_col,year_row,year_col,tvd,defined"),
        ("tvd_CN_CN.csv", "entity_row,entity_col,year_row,year_col,tvd,defined"),
        ("tvd_US_CN.csv", "entity_row,entity_col,year_row,year_col,tvd,defined"),
        ("entropy.csv", "entity,year,entropy,sample_size"),
        ("shares_timeseries.csv", "entity,keyword,year,share"),
        ("shares_bar.csv", "year,keyword,entity,share"),
        ("lag.csv", "keyword,year,lag,defined,flag_zero_threshold"),
        ("mean_lag.csv", "year,mean_lag,m"),
        ("consistency.csv", "m_leader,m_follower,predicted,observed,observed_hac_se,difference,se_multiples"),
        ("metadata.toml", ""),
    ];
    let fp = Corpus::load(&corpus_path, &ColumnMapping::default()).unwrap().fingerprint();
    for (name, header) in expected {
        let a = fs::read(outs[0].join(name)).unwrap_or_else(|_| panic!("{name} missing"));
        let b = fs::read(outs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains(&fp), "{name} lacks fingerprint");
        if !header.is_empty() {
            assert!(text.starts_with("# corpus_sha256="), "{name}");
            assert_eq!(rows(&text)[0], header, "{name}");
        }
    }
    let fits = fs::read_to_string(outs[0].join("fits.csv")).unwrap();
    let models: Vec<&str> = rows(&fits)[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(models, vec!["loglinear:US", "loglinear:US", "hinge:CN", "hinge:CN", "hinge:CN", "lag:US-CN", "lag:US-CN"]);
}

#[test]
fn report_on_one_year_corpus_skips_fits() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("one.csv");
    fs::write(&input, "entity,year,keyword,count\nUS,2018,a,3\nUS,2018,b,1\nCN,2018,a,1\nCN,2018,b,1\n").unwrap();
    let out = dir.path().join("r");
    let o = bin()
        .env("RUST_LOG", "info")
        .args(["report", "--input", path_str(&input), "--leader", "US", "--follower", "CN", "--output-dir", path_str(&out)])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("fit_leader_loglinear: skipped"), "{}", stdout(&o));
    assert!(stderr(&o).contains("skipped"), "stage skips are logged");
    let tvd = fs::read_to_string(out.join("tvd_US_CN.csv")).unwrap();
    assert_eq!(rows(&tvd).len(), 2);
    let meta = fs::read_to_string(out.join("metadata.toml")).unwrap();
    assert!(meta.contains("status = \"skipped\""));
    assert!(meta.contains("reason = "));
}

#[test]
fn report_requires_output_dir() {
    let nn = fixture("neural_network.csv");
    let o = run(&["report", "--input", path_str(&nn), "--leader", "US", "--follower", "CN"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_seed_flag_controls_output() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, TOY_SPEC).unwrap();
    let gen = |seed: &str| {
        let o = run(&["synth", "--config", path_str(&spec), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    assert_eq!(gen("1"), gen("1"));
    assert_ne!(gen("1"), gen("2"));
}

#[test]
fn synth_invalid_spec_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "seed = \"x\"\n").unwrap();
    let o = run(&["synth", "--config", path_str(&spec)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn harvest_from_fixture_endpoint_round_trips() {
    let dir = TempDir::new().unwrap();
    let plan = dir.path().join("plan.toml");
    let nn = fixture("neural_network.csv");
    fs::write(
        &plan,
        format!(
            r#"
keywords = ["Neural Network"]
first_year = 1987
last_year = 1993
entities = [{{ name = "CN", affiliation = "AFFILCOUNTRY(China)" }}]
missing_policy = "fail"
cache_dir = "{cache}"

[endpoint]
kind = "fixture"
path = "{nn}"

[politeness]
max_requests_per_second = 0
"#,
            cache = dir.path().join("cache").display(),
            nn = nn.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("h");
    let o = run(&["harvest", "--config", path_str(&plan), "--output-dir", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("7 cells, 0 missing, 7 transport calls"), "{}", stdout(&o));
    let corpus = Corpus::load(out.join("corpus.csv"), &ColumnMapping::default()).unwrap();
    let cn = corpus.total_volume(&EntityId::new("CN").unwrap()).unwrap();
    assert_eq!(cn.points.last(), Some(&(1993, 220)));
    let prov = fs::read_to_string(out.join("provenance.csv")).unwrap();
    assert!(prov.starts_with("keyword,entity,year,count,source,timestamp,status"));
    assert_eq!(prov.lines().count(), 8);

    let again = run(&["harvest", "--config", path_str(&plan), "--output-dir", path_str(&out)]);
    assert!(again.status.success());
    assert!(stdout(&again).contains("0 transport calls"), "warm cache: {}", stdout(&again));
}
