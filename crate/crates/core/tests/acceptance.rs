//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Every randomized check uses a fixed seed, so a failure reproduces exactly.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use archsearch_core::context::{clean_table, detect_in_image_caption, mine_referring_paragraphs};
use archsearch_core::embed::{Embedding, EmbeddingProvider, HashProvider};
use archsearch_core::eval::{default_benchmark, precision_at_k, reciprocal_rank, Metrics, QueryJudgments};
use archsearch_core::imaging::{otsu_threshold, GrayImage};
use archsearch_core::index::{
    bm25_score, keyword_topk, load, persist, vector_topk, Bm25Params, IndexSnapshot, InvertedIndex, VectorStore,
};
use archsearch_core::ingest::{ingest_dir, IngestOptions};
use archsearch_core::model::{Block, Page};
use archsearch_core::retrieval::{rrf_fuse, RrfParams};
use archsearch_core::{Engine, Modality, Query, RankedList, UnitId};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

const MODALITIES: [Modality; 3] = [Modality::Text, Modality::Image, Modality::Table];

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

fn fixture_snapshot(provider: &dyn EmbeddingProvider) -> IndexSnapshot {
    ingest_dir(&corpus_dir(), provider, &IngestOptions::default()).expect("fixture corpus ingests")
}

fn list(ids: &[u32]) -> RankedList {
    // Strictly decreasing scores keep the given order.
    let n = ids.len();
    RankedList::from_scored(
        ids.iter().enumerate().map(|(i, &u)| (UnitId(u), (n - i) as f64)).collect(),
        n.max(1),
    )
}

// ---------------------------------------------------------------- BM25

fn naive_bm25(corpus: &[(Modality, Vec<String>)], unit: usize, query: &[String], k1: f64, b: f64) -> f64 {
    let modality = corpus[unit].0;
    let part: Vec<&Vec<String>> = corpus.iter().filter(|(m, _)| *m == modality).map(|(_, t)| t).collect();
    let n = part.len() as f64;
    let avgdl = part.iter().map(|t| t.len()).sum::<usize>() as f64 / n;
    let doc = &corpus[unit].1;
    let mut score = 0.0;
    for q in query {
        let f = doc.iter().filter(|t| *t == q).count() as f64;
        if f == 0.0 {
            continue;
        }
        let df = part.iter().filter(|t| t.contains(q)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * doc.len() as f64 / avgdl));
    }
    score
}

fn bm25_oracle() -> Outcome {
    let p = Bm25Params::default();
    let mut idx = InvertedIndex::new();
    let toks = |s: &str| s.split(' ').map(str::to_owned).collect::<Vec<_>>();
    idx.add_unit(Modality::Text, "d", 1, None, &toks("harappan seal")).unwrap();
    idx.add_unit(Modality::Text, "d", 2, None, &toks("copper tools")).unwrap();
    let s = bm25_score(&toks("harappan"), UnitId(0), &idx, &p).map_err(|e| e.to_string())?;
    ensure!((s - std::f64::consts::LN_2).abs() < 1e-9, "worked example scored {s}, expected ln 2");

    let mut rng = StdRng::seed_from_u64(0xB325);
    for case in 0..100 {
        let vocab: Vec<String> = (0..rng.gen_range(1..=50)).map(|i| format!("w{i}")).collect();
        let corpus: Vec<(Modality, Vec<String>)> = (0..rng.gen_range(1..=20))
            .map(|_| {
                let m = MODALITIES[rng.gen_range(0..3)];
                let len = rng.gen_range(1..=30);
                (m, (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect())
            })
            .collect();
        let mut idx = InvertedIndex::new();
        for (m, t) in &corpus {
            idx.add_unit(*m, "d", 1, None, t).unwrap();
        }
        let query: Vec<String> = (0..rng.gen_range(1..=6))
            .map(|_| {
                if rng.gen_bool(0.1) {
                    "unseen".to_owned()
                } else {
                    vocab[rng.gen_range(0..vocab.len())].clone()
                }
            })
            .collect();
        for u in 0..corpus.len() {
            let got = bm25_score(&query, UnitId(u as u32), &idx, &p).unwrap();
            let want = naive_bm25(&corpus, u, &query, 1.2, 0.75);
            ensure!((got - want).abs() <= 1e-9, "case {case} unit {u}: engine {got} vs oracle {want}");
        }
        for m in MODALITIES {
            let mut want: Vec<(usize, f64)> = (0..corpus.len())
                .filter(|&u| corpus[u].0 == m)
                .map(|u| (u, naive_bm25(&corpus, u, &query, 1.2, 0.75)))
                .filter(|(_, s)| *s > 0.0)
                .collect();
            want.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let got = keyword_topk(&query, m, corpus.len(), &idx, &p).unwrap();
            ensure!(got.len() == want.len(), "case {case} {m}: {} hits vs oracle {}", got.len(), want.len());
            for (e, (u, s)) in got.iter().zip(&want) {
                // Allow reordering only among scores equal within tolerance.
                ensure!((e.score - s).abs() <= 1e-9, "case {case} {m}: rank {} score {} vs {s}", e.rank, e.score);
                if e.unit_id.0 as usize != *u {
                    let other = naive_bm25(&corpus, e.unit_id.0 as usize, &query, 1.2, 0.75);
                    ensure!((other - s).abs() <= 1e-9, "case {case} {m}: rank {} unit mismatch", e.rank);
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- Otsu

fn brute_otsu(pixels: &[u8]) -> u8 {
    let distinct: BTreeSet<u8> = pixels.iter().copied().collect();
    if distinct.len() == 1 {
        return pixels[0];
    }
    let n = pixels.len() as f64;
    let variance = |t: u8| {
        let (lo, hi): (Vec<f64>, Vec<f64>) = {
            let lo = pixels.iter().filter(|&&p| p <= t).map(|&p| p as f64).collect();
            let hi = pixels.iter().filter(|&&p| p > t).map(|&p| p as f64).collect();
            (lo, hi)
        };
        if lo.is_empty() || hi.is_empty() {
            return 0.0;
        }
        let w0 = lo.len() as f64 / n;
        let w1 = hi.len() as f64 / n;
        let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
        let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
        w0 * w1 * (m0 - m1) * (m0 - m1)
    };
    let scores: Vec<f64> = (0..=254u8).map(variance).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s >= max - 1e-9 * max.max(1.0)).unwrap() as u8
}

fn otsu_oracle() -> Outcome {
    let example = GrayImage::new(6, 1, vec![10, 10, 10, 200, 200, 200]).unwrap();
    let r = otsu_threshold(&example);
    ensure!(r.threshold == 10, "{{10,200}} example gave t*={}", r.threshold);
    ensure!(r.binary.pixels() == [0, 0, 0, 255, 255, 255], "{{10,200}} binary wrong");

    let mut rng = StdRng::seed_from_u64(0x0750);
    for case in 0..200 {
        // Half the images draw from a few levels, which produces ties.
        let pixels: Vec<u8> = if case % 2 == 0 {
            (0..64).map(|_| rng.gen()).collect()
        } else {
            let levels: Vec<u8> = (0..rng.gen_range(1..=4)).map(|_| rng.gen()).collect();
            (0..64).map(|_| levels[rng.gen_range(0..levels.len())]).collect()
        };
        let img = GrayImage::new(8, 8, pixels.clone()).unwrap();
        let got = otsu_threshold(&img).threshold;
        let want = brute_otsu(&pixels);
        ensure!(got == want, "case {case}: t*={got}, exhaustive scan says {want}");
    }
    Ok(())
}

// ---------------------------------------------------------------- RRF

fn rrf_correctness() -> Outcome {
    let p = RrfParams::default();
    let fused = rrf_fuse(&[list(&[1, 2]), list(&[2, 3])], &p, 10);
    let want = [(2, 1.0 / 62.0 + 1.0 / 61.0), (1, 1.0 / 61.0), (3, 1.0 / 62.0)];
    ensure!(fused.len() == 3, "fixture fused {} units", fused.len());
    for (e, (u, s)) in fused.iter().zip(want) {
        ensure!(e.unit_id == UnitId(u), "rank {} is {:?}, expected u{u}", e.rank, e.unit_id);
        ensure!((e.score - s).abs() <= 1e-12, "u{u} scored {}, expected {s}", e.score);
    }

    let mut rng = StdRng::seed_from_u64(0x4447);
    for case in 0..100 {
        let top = rng.gen_range(0..40u32);
        let lists: Vec<RankedList> = (0..rng.gen_range(1..=5))
            .map(|_| {
                let mut ids = vec![top];
                for _ in 0..rng.gen_range(0..30) {
                    let u = rng.gen_range(0..40u32);
                    if !ids.contains(&u) {
                        ids.push(u);
                    }
                }
                list(&ids)
            })
            .collect();
        let fused = rrf_fuse(&lists, &p, usize::MAX);
        let first = &fused.entries()[0];
        ensure!(first.unit_id == UnitId(top), "case {case}: rank-1 unit not fused first");
        if let Some(second) = fused.entries().get(1) {
            ensure!(first.score > second.score, "case {case}: rank-1 unit not strictly ahead");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- vectors

fn vector_exactness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x7EC7);
    for case in 0..50 {
        let dim = rng.gen_range(16..=256);
        let n = rng.gen_range(0..=1000);
        let mut store = VectorStore::new(Modality::Text, dim).unwrap();
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            // Some duplicates so that ties occur.
            let v = if i > 0 && rng.gen_bool(0.05) {
                raw[rng.gen_range(0..raw.len())].clone()
            } else {
                (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            store.insert(UnitId(i as u32), &Embedding::normalized(&v, Modality::Text).unwrap()).unwrap();
            raw.push(v);
        }
        let qv: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = Embedding::normalized(&qv, Modality::Text).unwrap();

        let mut want: Vec<(UnitId, f64)> = store
            .iter()
            .map(|(id, v)| (id, q.vector.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum()))
            .collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let full = vector_topk(&q, n.max(1), &store).unwrap();
        let got: Vec<(UnitId, f64)> = full.iter().map(|e| (e.unit_id, e.score)).collect();
        ensure!(got == want, "case {case}: full ranking differs from brute force (n={n}, dim={dim})");
        for k in 1..=n + 1 {
            let top = vector_topk(&q, k, &store).unwrap();
            ensure!(top.entries() == &full.entries()[..k.min(n)], "case {case}: top-{k} is not the prefix");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- metrics

fn metric_correctness() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let rel = |ids: &[u32]| QueryJudgments::relevant(ids.iter().map(|&u| UnitId(u)));

    ensure!(close(precision_at_k(&list(&[1, 2, 3, 4, 5]), &rel(&[2, 4]), 5), 0.4), "2 of 5 relevant");
    ensure!(close(precision_at_k(&list(&[]), &rel(&[1]), 5), 0.0), "empty list");
    ensure!(close(precision_at_k(&list(&[1, 2, 3]), &rel(&[1, 2, 3]), 5), 0.6), "3 results, k=5");
    ensure!(close(reciprocal_rank(&list(&[7, 1]), &rel(&[7])), 1.0), "first relevant at 1");
    ensure!(close(reciprocal_rank(&list(&[5, 6, 7, 8]), &rel(&[8])), 0.25), "first relevant at 4");
    ensure!(close(reciprocal_rank(&list(&[5, 6]), &rel(&[9])), 0.0), "none relevant");

    let a = Metrics::of(&list(&[1, 2, 3, 4, 5]), &rel(&[2, 5]));
    let b = Metrics::of(&list(&[7, 8]), &rel(&[7]));
    let m = Metrics::mean(&[a, b]);
    ensure!(
        close(m.p_at_5, 0.3) && close(m.p_at_3, 1.0 / 3.0) && close(m.p_at_1, 0.5) && close(m.mrr, 0.75),
        "2-query macro average {m:?}"
    );

    let mut rng = StdRng::seed_from_u64(0x3333);
    for case in 0..500 {
        let mut ids: Vec<u32> = (0..30).collect();
        ids.truncate(rng.gen_range(0..=30));
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.gen_range(0..=i));
        }
        let judged = rel(&(0..30).filter(|_| rng.gen_bool(0.2)).collect::<Vec<_>>());
        let m = Metrics::of(&list(&ids), &judged);
        ensure!(m.p_at_1 == 0.0 || m.p_at_1 == 1.0, "case {case}: P@1 = {}", m.p_at_1);
        ensure!(m.mrr >= m.p_at_1, "case {case}: MRR {} < P@1 {}", m.mrr, m.p_at_1);
    }
    Ok(())
}

// ---------------------------------------------------------------- end to end

fn pipeline_end_to_end() -> Outcome {
    let provider = Arc::new(HashProvider::new(256).unwrap());
    let snapshot = Arc::new(fixture_snapshot(provider.as_ref()));
    let m = &snapshot.manifest;
    ensure!(
        (m.num_documents, m.num_pages, m.num_images, m.num_tables) == (3, 7, 2, 1),
        "fixture counts {:?}",
        (m.num_documents, m.num_pages, m.num_images, m.num_tables)
    );
    let engine = Engine::new(snapshot.clone(), provider).map_err(|e| e.to_string())?;
    let queries = default_benchmark();
    ensure!(queries.len() == 30, "{} benchmark queries", queries.len());

    for q in &queries {
        for p in ["keyword", "embedding", "hybrid"] {
            let query = Query::new(q.text.clone(), q.modality, p, 5).map_err(|e| e.to_string())?;
            let hits = engine.search(&query).map_err(|e| format!("{} / {p}: {e}", q.query_id))?;
            for e in hits.iter() {
                let unit = snapshot.unit(e.unit_id).ok_or(format!("{}: unknown unit", q.query_id))?;
                ensure!(unit.modality == q.modality, "{} / {p}: {} result", q.query_id, unit.modality);
            }
        }
        let query = Query::new(q.text.clone(), q.modality, "hybrid", 5).unwrap();
        let c = engine.hybrid_candidates(&query).map_err(|e| e.to_string())?;
        let union: BTreeSet<_> = c.keyword.unit_ids().chain(c.embedding.unit_ids()).collect();
        let fused: BTreeSet<_> = c.fused.unit_ids().collect();
        ensure!(union == fused, "{}: fused candidates differ from the union", q.query_id);
    }

    let planted = snapshot
        .find_unit("harappan-economy", 1, None)
        .ok_or("planted page missing from the index")?;
    let text = "Primary crops of the Harappan civilization";
    for p in ["keyword", "hybrid"] {
        let hits = engine.search(&Query::new(text, Modality::Text, p, 5).unwrap()).map_err(|e| e.to_string())?;
        ensure!(hits.rank_of(planted) == Some(1), "{p}: planted page at rank {:?}", hits.rank_of(planted));
    }
    Ok(())
}

// ---------------------------------------------------------------- context

fn context_rules() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xC7C7);
    let cell = |rng: &mut StdRng| match rng.gen_range(0..5) {
        0 => String::new(),
        1 => " \t".to_owned(),
        _ => format!("c{}", rng.gen_range(0..1000)),
    };
    for case in 0..200 {
        let width = rng.gen_range(1..=8);
        let header: Vec<String> = (0..width).map(|i| format!("h{i}")).collect();
        let rows: Vec<Vec<String>> = (0..rng.gen_range(0..=10))
            .map(|_| (0..rng.gen_range(0..=12)).map(|_| cell(&mut rng)).collect())
            .collect();
        let t = clean_table(&header, &rows).map_err(|e| e.to_string())?;
        ensure!(t.rows.len() == rows.len(), "case {case}: row count changed");
        for (out, raw) in t.rows.iter().zip(&rows) {
            ensure!(out.len() == width, "case {case}: row width {} != {width}", out.len());
            for (j, c) in out.iter().enumerate() {
                let want = match raw.get(j) {
                    Some(v) if !v.trim().is_empty() => v.as_str(),
                    _ => "NaN",
                };
                ensure!(c == want, "case {case}: cell {j} is {c:?}, expected {want:?}");
            }
        }
    }

    let page = Page {
        page_no: 1,
        blocks: vec![
            Block::text_block("b1", "Figure 2 shows the map of the Ghaggar basin"),
            Block::text_block("b2", "Figure 21 shows beads"),
        ],
    };
    let found = mine_referring_paragraphs(2, Modality::Image, None, &page, None);
    ensure!(
        found == ["Figure 2 shows the map of the Ghaggar basin"],
        "ordinal 2 mined {found:?}"
    );
    let found21 = mine_referring_paragraphs(21, Modality::Image, None, &page, None);
    ensure!(found21 == ["Figure 21 shows beads"], "ordinal 21 mined {found21:?}");

    let cases: [(&str, Option<(u32, &str)>); 3] = [
        ("FIG. 7 PAINTED POTTERY FROM LOTHAL. Scale 1:4", Some((7, "FIG. 7 PAINTED POTTERY FROM LOTHAL"))),
        ("a map of the region", None),
        ("see figure 12 showing granary plan", Some((12, "figure 12 showing granary plan"))),
    ];
    for (input, want) in cases {
        let got = detect_in_image_caption(input).map(|h| (h.ordinal, h.caption_text));
        ensure!(
            got.as_ref().map(|(o, c)| (*o, c.as_str())) == want,
            "caption detection on {input:?} gave {got:?}"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- persistence

fn persistence_round_trip() -> Outcome {
    let provider = HashProvider::new(256).unwrap();
    let before = fixture_snapshot(&provider);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("index.bin");
    persist(&before, &path).map_err(|e| e.to_string())?;
    let after = load(&path).map_err(|e| e.to_string())?;

    let p = before.bm25;
    ensure!(after.bm25 == p, "BM25 parameters changed");
    let terms: Vec<String> = before.index.postings().map(|(t, _)| t.to_owned()).collect();
    ensure!(!terms.is_empty(), "fixture index has no terms");
    for unit in before.index.units() {
        for t in &terms {
            let q = std::slice::from_ref(t);
            let a = bm25_score(q, unit.unit_id, &before.index, &p).unwrap();
            let b = bm25_score(q, unit.unit_id, &after.index, &p).unwrap();
            ensure!(a.to_bits() == b.to_bits(), "BM25 of {t:?} on {:?}: {a} vs {b}", unit.unit_id);
        }
    }

    let mut queries: HashMap<Modality, Vec<Embedding>> = HashMap::new();
    for q in default_benchmark() {
        let e = provider.embed_text(&q.text, q.modality).map_err(|e| e.to_string())?;
        queries.entry(q.modality).or_default().push(e);
    }
    for m in MODALITIES {
        let (sa, sb) = (before.stores.get(m), after.stores.get(m));
        let (Some(sa), Some(sb)) = (sa, sb) else {
            return Err(format!("{m} store missing after reload"));
        };
        ensure!(sa.raw_data().len() == sb.raw_data().len(), "{m} store size changed");
        ensure!(
            sa.raw_data().iter().zip(sb.raw_data()).all(|(x, y)| x.to_bits() == y.to_bits()),
            "{m} vectors changed"
        );
        for q in queries.get(&m).into_iter().flatten() {
            let k = sa.len().max(1);
            let (ra, rb) = (vector_topk(q, k, sa).unwrap(), vector_topk(q, k, sb).unwrap());
            ensure!(
                ra.iter().zip(rb.iter()).all(|(x, y)| x.unit_id == y.unit_id && x.score.to_bits() == y.score.to_bits())
                    && ra.len() == rb.len(),
                "{m} vector ranking changed"
            );
        }
        for q in default_benchmark() {
            let kw: Vec<String> = archsearch_core::text::tokenize(&q.text);
            let (ra, rb) = (
                keyword_topk(&kw, m, 100, &before.index, &p).unwrap(),
                keyword_topk(&kw, m, 100, &after.index, &p).unwrap(),
            );
            ensure!(
                ra.iter().zip(rb.iter()).all(|(x, y)| x.unit_id == y.unit_id && x.score.to_bits() == y.score.to_bits())
                    && ra.len() == rb.len(),
                "{m} keyword ranking changed for {}",
                q.query_id
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- driver

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "BM25 oracle", limit: Some(Duration::from_secs(5)), run: bm25_oracle },
        Criterion { name: "Otsu oracle", limit: Some(Duration::from_secs(5)), run: otsu_oracle },
        Criterion { name: "RRF correctness", limit: None, run: rrf_correctness },
        Criterion { name: "Vector search exactness", limit: None, run: vector_exactness },
        Criterion { name: "Metric correctness", limit: None, run: metric_correctness },
        Criterion { name: "Pipeline end-to-end", limit: Some(Duration::from_secs(30)), run: pipeline_end_to_end },
        Criterion { name: "Context-extraction rules", limit: None, run: context_rules },
        Criterion { name: "Persistence round-trip", limit: None, run: persistence_round_trip },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(()), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(()) => println!("[PASS] {} ({elapsed:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} ({elapsed:.2?}): {why}", c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
