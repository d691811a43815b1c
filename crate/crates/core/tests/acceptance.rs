//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs with the stub backend only.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use distress_core::adaptation::{filter_reliable, self_entropy, PseudoLabel};
use distress_core::classifiers::{
    gradient, hazard_fit, hessian, knn_fit, log_likelihood, primal_objective, svm_fit, ClassifierKind, HazardOptions,
    SvmOptions,
};
use distress_core::corpus::{extract_mdna, load_corpus, Sentence};
use distress_core::evaluation::{pseudo_r2, ConfusionCounts};
use distress_core::features::VariableSet;
use distress_core::lexicon::Lexicon;
use distress_core::runner::{generate_synthetic, run, ExperimentConfig, RunOutcome};
use distress_core::scoring::{aggregate_class_sums, ClassProbs, SentenceScore};
use distress_core::seeded_rng;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

const BUNDLED_CONFIG: &str = include_str!("../../../configs/synthetic.toml");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn aggregation() -> Outcome {
    let doc = aggregate_class_sums("sample", [1.0365, 2.2161, 1.1704]).map_err(|e| e.to_string())?;
    // Frozen from direct evaluation: 1.0365 / 4.423 and 2.2161 / 4.423.
    let exact = (doc.pos - 0.234343).abs() < 1e-6 && (doc.neg - 0.501040).abs() < 1e-6;
    ensure(
        (doc.pos - 0.2343).abs() <= 1e-3 && (doc.neg - 0.5010).abs() <= 2e-3 && exact,
        format!("POS = {:.6}, NEG = {:.6}", doc.pos, doc.neg),
    )
}

fn lexicon_counts() -> Outcome {
    let filings = load_corpus(fixtures().join("sample_mdna/index.csv")).map_err(|e| e.to_string())?;
    let doc = extract_mdna(&filings[0]).map_err(|e| e.to_string())?;
    let (n_pos, n_neg, n_tokens) = Lexicon::sample().count_hits(&doc.text);
    ensure(
        n_pos == 4 && n_neg == 1 && doc.sentences.len() == 2,
        format!("n_pos = {n_pos}, n_neg = {n_neg} over {n_tokens} tokens in {} sentences", doc.sentences.len()),
    )
}

fn random_simplex(rng: &mut impl Rng) -> [f64; 3] {
    let e: [f64; 3] = std::array::from_fn(|_| Exp1.sample(&mut *rng));
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn entropy() -> Outcome {
    let uniform = self_entropy(&[1.0 / 3.0; 3]).map_err(|e| e.to_string())?;
    let one_hot = self_entropy(&[0.0, 1.0, 0.0]).map_err(|e| e.to_string())?;
    let skewed = self_entropy(&[0.9, 0.05, 0.05]).map_err(|e| e.to_string())?;
    if format!("{uniform:.6}") != "1.000000" || one_hot != 0.0 || (skewed - 0.3589962496).abs() > 1e-4 {
        return Err(format!("uniform {uniform}, one-hot {one_hot}, skewed {skewed}"));
    }
    let mut rng = seeded_rng(11, 0);
    let labels: Vec<PseudoLabel> = (0..1000)
        .map(|i| {
            let p = random_simplex(&mut rng);
            let sentence = Sentence { doc_id: "d".into(), index: i, text: format!("s{i}"), word_count: 1 };
            let score = SentenceScore { doc_id: "d".into(), sent_index: i, p: ClassProbs::new(p[0], p[1], p[2]).unwrap() };
            PseudoLabel::from_score(sentence, score).unwrap()
        })
        .collect();
    let thresholds = [0.05, 0.1, 0.2, 0.3, 0.5, 0.631, 0.8, 1.0];
    let kept: Vec<Vec<usize>> = thresholds
        .iter()
        .map(|&t| filter_reliable(&labels, t).labels.iter().map(|l| l.sentence.index).collect())
        .collect();
    let nested = kept.windows(2).all(|w| w[0].iter().all(|i| w[1].contains(i)));
    ensure(
        nested && kept.last().is_some_and(|k| k.len() == 1000),
        format!(
            "uniform {uniform:.6}, one-hot {one_hot}, (0.9,0.05,0.05) {skewed:.4}; retained {:?} of 1000",
            kept.iter().map(Vec::len).collect::<Vec<_>>()
        ),
    )
}

fn logistic_data(n: usize, beta: &[f64; 3], seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = seeded_rng(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = beta[0] + beta[1] * row[0] + beta[2] * row[1];
        y.push(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())));
        x.push(row);
    }
    (x, y)
}

fn hazard() -> Outcome {
    let start = Instant::now();
    let planted = [0.5, -1.0, 2.0];
    let (x, y) = logistic_data(20_000, &planted, 2024);
    let names = vec!["x1".to_string(), "x2".to_string()];
    let model = hazard_fit(&x, &y, &names, &HazardOptions::default()).map_err(|e| e.to_string())?;
    let max_beta_err = model.beta.iter().zip(planted).map(|(b, p)| (b - p).abs()).fold(0.0, f64::max);

    let (xs, ys) = logistic_data(400, &planted, 7);
    let mut rng = seeded_rng(99, 0);
    let mut max_rel = 0.0f64;
    for _ in 0..10 {
        let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = gradient(&beta, &xs, &ys);
        let h = hessian(&beta, &xs);
        let step = 1e-5;
        for j in 0..3 {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += step;
            down[j] -= step;
            let fd_g = (log_likelihood(&up, &xs, &ys) - log_likelihood(&down, &xs, &ys)) / (2.0 * step);
            max_rel = max_rel.max((g[j] - fd_g).abs() / g[j].abs().max(1.0));
            let (gu, gd) = (gradient(&up, &xs, &ys), gradient(&down, &xs, &ys));
            for i in 0..3 {
                let fd_h = (gu[i] - gd[i]) / (2.0 * step);
                max_rel = max_rel.max((h[i][j] - fd_h).abs() / h[i][j].abs().max(1.0));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        max_beta_err <= 0.1 && max_rel <= 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "beta = ({:.3}, {:.3}, {:.3}), max |err| {max_beta_err:.3}; derivative rel err {max_rel:.1e}; {:.2}s",
            model.beta[0],
            model.beta[1],
            model.beta[2],
            elapsed.as_secs_f64()
        ),
    )
}

#[derive(serde::Deserialize)]
struct QpCase {
    seed: u64,
    c: f64,
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    objective: f64,
}

#[derive(serde::Deserialize)]
struct QpFixture {
    cases: Vec<QpCase>,
}

fn svm() -> Outcome {
    let text = std::fs::read_to_string(fixtures().join("svm_qp/svm_qp.json")).map_err(|e| e.to_string())?;
    let fixture: QpFixture = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let names: Vec<String> = (0..3).map(|i| format!("x{i}")).collect();
    let mut worst = 0.0f64;
    for case in &fixture.cases {
        let m = svm_fit(&case.x, &case.y, &names, &SvmOptions { c: case.c, ..SvmOptions::default() })
            .map_err(|e| format!("seed {}: {e}", case.seed))?;
        let obj = primal_objective(&m.w, m.b, &case.x, &case.y, case.c);
        worst = worst.max((obj - case.objective).abs() / case.objective.abs());
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    for x1 in [1.0, 1.5, 2.5] {
        for x2 in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            x.push(vec![x1, x2]);
            y.push(1);
            x.push(vec![-x1, x2]);
            y.push(0);
        }
    }
    let m = svm_fit(&x, &y, &names[..2], &SvmOptions { c: 10.0, ..SvmOptions::default() }).map_err(|e| e.to_string())?;
    let offset = (m.b / m.w[0]).abs();
    let tilt = (m.w[1] / m.w[0]).abs();
    ensure(
        worst <= 1e-4 && offset <= 1e-3 && tilt <= 1e-3,
        format!(
            "{} QP cases, worst rel objective err {worst:.1e}; boundary x1 = {offset:.1e}, tilt {tilt:.1e}",
            fixture.cases.len()
        ),
    )
}

fn brute_force_neighbors(x: &[Vec<f64>], q: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> =
        x.iter().enumerate().map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum(), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, i)| i).collect()
}

fn knn() -> Outcome {
    let ks = [3, 5, 7, 9, 11];
    let mut checked = 0;
    for inst in 0..20u64 {
        let mut rng = seeded_rng(500 + inst, 0);
        let n = 50 + 23 * inst as usize;
        let d = 1 + inst as usize % 4;
        let k = ks[inst as usize % 5];
        let grid = inst % 2 == 0;
        let point = |rng: &mut distress_core::SeededRng| -> Vec<f64> {
            (0..d)
                .map(|_| if grid { rng.random_range(0..5) as f64 } else { StandardNormal.sample(&mut *rng) })
                .collect()
        };
        let x: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        let model = knn_fit(&x, &y, k).map_err(|e| e.to_string())?;
        for _ in 0..40 {
            let q = point(&mut rng);
            let expected = brute_force_neighbors(&x, &q, k);
            let votes = expected.iter().filter(|&&i| y[i] == 1).count();
            let got = model.neighbors(&q).map_err(|e| e.to_string())?;
            let pred = model.predict(&q).map_err(|e| e.to_string())?;
            if got != expected || pred != u8::from(2 * votes > k) {
                return Err(format!("instance {inst}: neighbors {got:?} vs {expected:?}"));
            }
            checked += 1;
        }
    }
    Ok(format!("20 instances, {checked} queries identical to brute force"))
}

fn metrics() -> Outcome {
    let n = 1000;
    let n_f = n as f64;
    let r_a = pseudo_r2(-n_f * 0.2, -n_f * 0.7, n).map_err(|e| e.to_string())?;
    let r_b = pseudo_r2(-n_f * 0.6, -n_f * 0.7, n).map_err(|e| e.to_string())?;
    let fixtures_ok = (r_a - 0.6321205588).abs() < 1e-9 && (r_b - 0.1812692469).abs() < 1e-9;
    let mut rng = seeded_rng(3, 0);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let len = rng.random_range(2..300);
        let mut truth: Vec<u8> = (0..len).map(|_| u8::from(rng.random_bool(0.3))).collect();
        truth[0] = 0;
        truth[1] = 1;
        let pred: Vec<u8> = (0..len).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let c = ConfusionCounts::from_predictions(&truth, &pred);
        let (a1, a2) = c.accuracy().map_err(|e| e.to_string())?;
        let fp = truth.iter().zip(&pred).filter(|(t, p)| **t == 0 && **p == 1).count() as f64;
        let fneg = truth.iter().zip(&pred).filter(|(t, p)| **t == 1 && **p == 0).count() as f64;
        let type_i = fp / c.nb as f64;
        let type_ii = fneg / c.b as f64;
        worst = worst
            .max((a1 - (1.0 - type_i)).abs())
            .max((a2 - (1.0 - type_ii)).abs())
            .max((c.type_i_rate().unwrap() - type_i).abs())
            .max((c.type_ii_rate().unwrap() - type_ii).abs());
    }
    ensure(
        fixtures_ok && worst < 1e-12,
        format!("R2 fixtures {r_a:.10} / {r_b:.10}; 500 confusion matrices, max identity err {worst:.1e}"),
    )
}

struct EndToEnd {
    first: RunOutcome,
    table_a: PathBuf,
    table_b: PathBuf,
    first_secs: f64,
    total: Duration,
}

fn bundled_config(root: &Path) -> Result<ExperimentConfig, String> {
    let cfg = ExperimentConfig::from_toml(BUNDLED_CONFIG, &root.join("configs")).map_err(|e| e.to_string())?;
    let spec = cfg.synthetic.clone().ok_or("bundled config has no [synthetic] section")?;
    let dir = cfg.corpus.index.parent().ok_or("corpus index has no parent")?;
    if !cfg.corpus.index.exists() {
        generate_synthetic(&spec, dir).map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

fn end_to_end_runs(root: &Path) -> Result<EndToEnd, String> {
    let start = Instant::now();
    let cfg = bundled_config(root)?;
    let table_a = cfg.out_dir.join("table2.csv");
    let first = run(cfg.clone()).map_err(|e| e.to_string())?;
    let first_secs = start.elapsed().as_secs_f64();
    let mut again = cfg;
    again.out_dir = root.join("rerun");
    let table_b = again.out_dir.join("table2.csv");
    run(again).map_err(|e| e.to_string())?;
    Ok(EndToEnd { first, table_a, table_b, first_secs, total: start.elapsed() })
}

fn ordering(e2e: &EndToEnd) -> Outcome {
    let sets = [VariableSet::Fin, VariableSet::FinDict, VariableSet::FinDapt];
    let mut a2 = Vec::new();
    let mut r2 = Vec::new();
    for set in sets {
        let row = e2e.first.report.row(ClassifierKind::Hazard, set).ok_or(format!("no hazard row for {set}"))?;
        a2.push(row.a2_mean);
        r2.push(row.cox_snell_mean.ok_or(format!("no R2 for {set}"))?);
    }
    let gaps = [a2[1] - a2[0], a2[2] - a2[1]];
    ensure(
        gaps.iter().all(|g| *g >= 0.03) && r2[0] < r2[1] && r2[1] < r2[2] && e2e.first_secs < 300.0,
        format!(
            "hazard A2 {:.2}% < {:.2}% < {:.2}% (gaps {:.1} / {:.1} pp); R2 {:.4} < {:.4} < {:.4}; {:.1}s",
            100.0 * a2[0],
            100.0 * a2[1],
            100.0 * a2[2],
            100.0 * gaps[0],
            100.0 * gaps[1],
            r2[0],
            r2[1],
            r2[2],
            e2e.first_secs
        ),
    )
}

fn determinism(e2e: &EndToEnd) -> Outcome {
    let a = std::fs::read(&e2e.table_a).map_err(|e| e.to_string())?;
    let b = std::fs::read(&e2e.table_b).map_err(|e| e.to_string())?;
    ensure(
        !a.is_empty() && a == b,
        format!("table2.csv {} bytes, identical = {}; both runs {:.1}s", a.len(), a == b, e2e.total.as_secs_f64()),
    )
}

fn report(name: &str, outcome: Outcome, elapsed: Duration, failures: &mut usize) {
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => {
            *failures += 1;
            ("FAIL", d)
        }
    };
    println!("{tag} {name}: {detail} [{:.2}s]", elapsed.as_secs_f64());
}

fn main() -> ExitCode {
    let mut failures = 0;
    let checks: [(&str, fn() -> Outcome); 7] = [
        ("aggregation of the worked class vector", aggregation),
        ("lexicon counts on the sample MD&A", lexicon_counts),
        ("self-entropy values and filter monotonicity", entropy),
        ("hazard MLE recovery and derivatives", hazard),
        ("linear SVM vs QP oracle and symmetric boundary", svm),
        ("kNN vs brute force", knn),
        ("pseudo-R2 fixtures and accuracy identities", metrics),
    ];
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = check();
        report(name, outcome, start.elapsed(), &mut failures);
    }

    let tmp = tempfile::tempdir().expect("temp dir");
    let start = Instant::now();
    match end_to_end_runs(tmp.path()) {
        Ok(e2e) => {
            report("end-to-end variable-set ordering", ordering(&e2e), start.elapsed(), &mut failures);
            report("determinism of repeated runs", determinism(&e2e), e2e.total, &mut failures);
        }
        Err(e) => {
            report("end-to-end variable-set ordering", Err(e.clone()), start.elapsed(), &mut failures);
            report("determinism of repeated runs", Err(e), start.elapsed(), &mut failures);
        }
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
