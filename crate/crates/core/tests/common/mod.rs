//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Days, NaiveDate};
use eccvol_core::corpus::{EccCall, PriceObservation, PriceSeries, Sentence};
use eccvol_core::embedding::{EmbeddingMatrix, EmbeddingProvider, StubProvider};
use eccvol_core::model::{CallInput, Sample};
use ndarray::{Array1, Array2};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Random-walk prices on consecutive calendar days.
pub fn random_prices(rng: &mut ChaCha8Rng, ticker: &str, n: usize) -> PriceSeries {
    let start = date("2020-01-01");
    let mut p: f64 = rng.gen_range(5.0..500.0);
    let observations = (0..n)
        .map(|i| {
            p *= 1.0 + rng.gen_range(-0.05..0.05);
            PriceObservation {
                date: start + Days::new(i as u64),
                adj_close: p,
            }
        })
        .collect();
    PriceSeries {
        ticker: ticker.into(),
        observations,
    }
}

fn ln_bigint(x: &BigInt) -> f64 {
    // ln(m * 2^e) with m holding the top 60 bits
    let bits = x.bits();
    let shift = bits.saturating_sub(60);
    let m = (x >> shift).to_f64().unwrap();
    m.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of a positive rational, accurate to a few ulps of the result.
pub fn ln_rational(v: &BigRational) -> f64 {
    assert!(v.is_positive());
    let (n, d) = (v.numer(), v.denom());
    // bring v into [1, 2) * 2^e exactly, then take the log of the mantissa
    let e = n.bits() as i64 - d.bits() as i64;
    let two = BigInt::from(2);
    let scaled = if e >= 0 {
        BigRational::new(n.clone(), d * num_traits::pow(two, e as usize))
    } else {
        BigRational::new(n * num_traits::pow(two, (-e) as usize), d.clone())
    };
    let mant = (scaled.numer() << 64usize) / scaled.denom();
    ln_bigint(&mant) - 64.0 * std::f64::consts::LN_2 + e as f64 * std::f64::consts::LN_2
}

/// Log-volatility of the `tau + 1` returns ending at the last price, in
/// exact rational arithmetic up to the final logarithm.
pub fn exact_log_volatility(prices: &[f64], tau: usize) -> f64 {
    let q = |x: f64| BigRational::from_float(x).unwrap();
    let tail = &prices[prices.len() - tau - 2..];
    let returns: Vec<BigRational> = tail
        .windows(2)
        .map(|w| (q(w[1]) - q(w[0])) / q(w[0]))
        .collect();
    let count = BigRational::from_integer(BigInt::from(returns.len()));
    let mean = returns.iter().fold(BigRational::zero(), |a, r| a + r) / count;
    let ss = returns
        .iter()
        .fold(BigRational::zero(), |a, r| a + (r - &mean) * (r - &mean));
    let var = ss / BigRational::from_integer(BigInt::from(tau));
    0.5 * ln_rational(&var)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, mask: Vec<bool>, cols: usize) -> EmbeddingMatrix {
    let rows = mask.len();
    let data = (0..rows * cols)
        .map(|i| {
            if mask[i / cols] {
                rng.gen_range(-4.0f32..4.0)
            } else {
                0.0
            }
        })
        .collect();
    EmbeddingMatrix::new(rows, cols, data, mask).unwrap()
}

/// Cosine top-k by sorting every entry; ties go to the lower chunk index.
pub fn brute_force_top_k(vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(usize, f64)> {
    let dot = |a: &[f32], b: &[f32]| {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum::<f64>()
    };
    let qn = dot(query, query).sqrt();
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, dot(v, query) / (dot(v, v).sqrt() * qn)))
        .collect();
    // partial_cmp: -0.0 and 0.0 are the same score
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn call(id: &str, ticker: &str, day: NaiveDate) -> EccCall {
    EccCall {
        call_id: id.into(),
        ticker: ticker.into(),
        call_date: day,
        sentences: vec![Sentence {
            speaker: "CEO".into(),
            text: format!("Results for {id}."),
        }],
        audio_embedding_ref: String::new(),
        sentence_embedding_ref: String::new(),
    }
}

/// Calls on random dates within a few years, with repeated dates.
pub fn random_calls(rng: &mut ChaCha8Rng, n: usize) -> Vec<EccCall> {
    let start = date("2015-01-01");
    (0..n)
        .map(|i| {
            let day = start + Days::new(rng.gen_range(0..1500));
            call(&format!("C{:04}-{i}", rng.gen_range(0..10_000)), "T", day)
        })
        .collect()
}

fn to_rows(vs: &[Vec<f32>]) -> Array2<f64> {
    Array2::from_shape_fn((vs.len(), vs[0].len()), |(r, c)| vs[r][c] as f64)
}

fn to_vec(v: &[f32]) -> Array1<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Calls whose stub features are drawn from the stub provider, labelled by
/// an exact linear function of (mean audio row, mean sentence row, summary,
/// focus). Returns the samples and the stacked linear design matrix.
pub fn linear_corpus(
    n: usize,
    rows: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Sample>, Array2<f64>) {
    let stub = StubProvider::new(seed);
    let mut feats: Vec<(CallInput, Array1<f64>)> = Vec::with_capacity(n);
    for i in 0..n {
        let clips: Vec<String> = (0..rows).map(|r| format!("call{i}/clip{r}")).collect();
        let sents: Vec<String> = (0..rows)
            .map(|r| format!("call {i} sentence {r}."))
            .collect();
        let audio = to_rows(&stub.embed_audio_frames(&clips).unwrap());
        let text = to_rows(&stub.embed_sentences(&sents).unwrap());
        let summary = to_vec(stub.embed_text(&format!("summary {i}")).unwrap().as_slice());
        let focus = to_vec(stub.embed_text(&format!("focus {i}")).unwrap().as_slice());
        let mut design = Vec::new();
        design.extend(audio.mean_axis(ndarray::Axis(0)).unwrap());
        design.extend(text.mean_axis(ndarray::Axis(0)).unwrap());
        design.extend(summary.iter().copied());
        design.extend(focus.iter().copied());
        feats.push((
            CallInput {
                audio: Some(audio),
                text: Some(text),
                extras: vec![summary, focus],
            },
            Array1::from(design),
        ));
    }
    let dim = feats[0].1.len();
    let x = Array2::from_shape_fn((n, dim), |(r, c)| feats[r].1[c]);
    // weights scaled so the targets have roughly unit spread
    let w = Array1::from_shape_fn(dim, |_| {
        rng.gen_range(-1.0..1.0) * (3.0 / dim as f64).sqrt() * 4.0
    });
    let y = x.dot(&w);
    let start = date("2019-01-01");
    let samples = feats
        .into_iter()
        .zip(y.iter())
        .enumerate()
        .map(|(i, ((input, _), &target))| Sample {
            call_id: format!("L{i:03}"),
            date: start + Days::new(i as u64),
            input,
            target,
        })
        .collect();
    (samples, x)
}

pub fn fixture_src() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

/// Fresh copy of the bundled synthetic fixture.
pub fn fixture_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in ["transcripts.jsonl", "prices.csv", "config.toml"] {
        std::fs::copy(fixture_src().join(name), dir.path().join(name)).unwrap();
    }
    dir
}

pub fn eccvol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eccvol"))
        .current_dir(dir)
        .args(["-c", "config.toml"])
        .args(args)
        .output()
        .unwrap()
}

pub fn eccvol_ok(dir: &Path, args: &[&str]) -> Output {
    let out = eccvol(dir, args);
    assert!(
        out.status.success(),
        "eccvol {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// The six pipeline steps, one process each.
pub fn run_steps(dir: &Path) {
    for step in ["ingest", "label", "embed", "analyze", "train", "eval"] {
        eccvol_ok(dir, &[step]);
    }
}
