//! Property suites, one function per invariant. Each takes a case count and
//! returns a failure description; the `properties` and `acceptance` targets
//! both drive them.

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use urban_affect::affectmap::{aggregate_cells, mismatch, smooth, trend, Raster, RasterKind, ScoredPoint, Smoothing};
use urban_affect::geo::{point_in_polygon, BoundingBox, CellIndex, GeoPoint, Grid, ZoneLabel, ZonePolygon, ZoningSet};
use urban_affect::ingest::{
    opinion_to_line, parse_opinion, parse_perception, perception_to_line, EpochSet, OpinionRecord, PerceptionRecord,
    SEGMENT_COUNT,
};
use urban_affect::percept::{aggregate_ratings, bin_score, sample_for_annotation, RatingSheet};
use urban_affect::pipeline::{run, sha256_hex, write_synth_fixture, PipelineConfig};
use urban_affect::regress::{f_p_value, f_statistic, fit_cubic};
use urban_affect::render::{ramp_color, render_raster, ColorRamp};
use urban_affect::synth::{generate_scenario, write_scenario, CellRect, Hotspot, ScenarioSpec};
use urban_affect::textsent::{tokenize, Lexicon, SentimentModel, WhitespaceTokenizer};
use urban_affect::ingest::Channel;

use super::{exhaustive_segmentation, winding_contains};

pub type Suite = fn(u32) -> Result<(), String>;

/// Cases for suites that run a full scenario per case.
pub const HEAVY_CASES: u32 = 6;

pub fn all() -> Vec<(&'static str, Suite, u32)> {
    let std = 1000;
    vec![
        ("geo: cell center locates to its own cell", cell_center_round_trip as Suite, std),
        ("geo: zone assignment ignores polygon order", zone_assignment_order, std),
        ("geo: point in polygon matches winding number", pip_matches_winding, std),
        ("ingest: serialize then parse is identity", ingest_round_trip, std),
        ("ingest: accepted + rejected = lines under corruption", ingest_fuzz_conservation, std),
        ("ingest: order independence, first duplicate wins", ingest_order_independence, std),
        ("textsent: tokens concatenate to the input", tokens_reconstruct_input, std),
        ("textsent: segmentation invariant to frequency scaling", segmentation_scale_invariance, std),
        ("textsent: swapped classes complement the score", swapped_model_complements, std),
        ("textsent: score ignores token order", score_token_order, std),
        ("textsent: tokenizer matches exhaustive oracle", tokenizer_matches_oracle, std),
        ("percept: bins are monotone with ten outputs", bins_monotone, std),
        ("percept: rating means ignore rater order", rating_permutation, std),
        ("percept: distinct seeds give distinct samples", sampling_seed_smoke, 1),
        ("affectmap: trend of a raster with itself is zero", trend_identity, std),
        ("affectmap: mismatch is symmetric", mismatch_symmetry, std),
        ("affectmap: score and mismatch values stay in range", raster_ranges, std),
        ("affectmap: support is conserved", support_conservation, std),
        ("affectmap: aggregation independent of order and workers", aggregation_deterministic, std),
        ("affectmap: idw is idempotent on full rasters", idw_idempotent, std),
        ("regress: p-value decreases in F and in r square", p_value_monotone, std),
        ("regress: df1=2 p-value matches closed form", p_value_closed_form, 1),
        ("regress: residuals orthogonal to the design", residual_orthogonality, std),
        ("regress: fitted values invariant to affine x", affine_invariance, std),
        ("render: ramps are monotone per channel", ramp_monotone, std),
        ("render: every pixel is its cell's ramp color", render_matches_ramp, std),
        ("synth: same seed gives identical files", synth_same_seed_files, HEAVY_CASES),
        ("synth: generated records pass ingest", synth_schema_closure, HEAVY_CASES),
        ("synth: noise-free trends equal the answer key", synth_trends_exact, HEAVY_CASES),
        ("pipeline: outputs identical across worker counts", pipeline_worker_determinism, HEAVY_CASES),
        ("pipeline: manifest lists every output", manifest_complete, HEAVY_CASES),
    ]
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- geo

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (-170.0..170.0f64, -80.0..80.0f64, 0.001..2.0f64, 0.001..2.0f64, 0.0003..0.5f64).prop_map(
        |(west, south, w, h, cell)| {
            Grid::new(BoundingBox::new(west, south, west + w, south + h).unwrap(), cell.min(w).min(h)).unwrap()
        },
    )
}

fn cell_center_round_trip(cases: u32) -> Result<(), String> {
    check(cases, grid_strategy().prop_filter("bounded size", |g| g.cell_count() <= 20_000), |grid| {
        for i in 0..grid.cell_count() {
            let cell = grid.cell_at(i);
            prop_assert_eq!(grid.locate(grid.cell_center(cell)), Some(cell));
        }
        Ok(())
    })
}

fn rect(label: ZoneLabel, w: f64, s: f64, e: f64, n: f64) -> ZonePolygon {
    let p = |lon, lat| GeoPoint { lon, lat };
    ZonePolygon::new(label, vec![vec![p(w, s), p(e, s), p(e, n), p(w, n)]]).unwrap()
}

fn zone_assignment_order(cases: u32) -> Result<(), String> {
    let zone = (0usize..10, 0.0..8.0f64, 0.0..8.0f64, 0.5..4.0f64, 0.5..4.0f64)
        .prop_map(|(l, w, s, dw, dh)| rect(ZoneLabel::ALL[l], w, s, w + dw, s + dh));
    let input = (
        prop::collection::vec(zone, 1..7),
        prop::collection::vec((0.0..12.0f64, 0.0..12.0f64), 1..10),
        any::<u64>(),
    );
    check(cases, input, |(zones, points, seed)| {
        let mut shuffled = zones.clone();
        urban_affect::rng::SeededRng::new(seed).shuffle(&mut shuffled);
        let a = ZoningSet::new(zones);
        let b = ZoningSet::new(shuffled);
        for (lon, lat) in points {
            let p = GeoPoint { lon, lat };
            prop_assert_eq!(a.assign(p), b.assign(p));
        }
        Ok(())
    })
}

fn pip_matches_winding(cases: u32) -> Result<(), String> {
    let polygon = (prop::collection::btree_set(0u32..3600, 3..=8), 0.5..3.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(angles, r, cx, cy)| {
            let ring: Vec<GeoPoint> = angles
                .iter()
                .map(|&a| {
                    let t = f64::from(a).to_radians() / 10.0;
                    GeoPoint {
                        lon: cx + r * t.cos(),
                        lat: cy + r * t.sin(),
                    }
                })
                .collect();
            ring
        });
    let input = (polygon, prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 20));
    check(cases, input, |(ring, points)| {
        let poly = match ZonePolygon::new(ZoneLabel::Green, vec![ring]) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        for (lon, lat) in points {
            let p = GeoPoint { lon, lat };
            prop_assert_eq!(point_in_polygon(p, &poly), winding_contains(p, &poly), "point {:?}", p);
        }
        // vertices lie on the boundary
        for &v in &poly.rings()[0] {
            prop_assert!(point_in_polygon(v, &poly));
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- ingest

fn segments_strategy() -> impl Strategy<Value = [f64; SEGMENT_COUNT]> {
    prop::array::uniform17(0.0..(1.0 / SEGMENT_COUNT as f64))
}

fn perception_strategy() -> impl Strategy<Value = PerceptionRecord> {
    ("[a-z0-9_-]{1,10}", -180.0..=180.0f64, -90.0..=90.0f64, 1990i32..2040, 0.0..=10.0f64, segments_strategy()).prop_map(
        |(id, lon, lat, epoch, score, segments)| PerceptionRecord {
            id,
            point: GeoPoint { lon, lat },
            epoch,
            score,
            segments,
        },
    )
}

fn opinion_strategy() -> impl Strategy<Value = OpinionRecord> {
    (
        "[a-z0-9]{1,10}",
        -180.0..=180.0f64,
        -90.0..=90.0f64,
        1990i32..2040,
        "[a-z 北京好的，\"\\\\]{0,12}[a-z北京]",
        prop::option::of(0.0..=10.0f64),
    )
        .prop_map(|(id, lon, lat, epoch, text, score)| OpinionRecord {
            id,
            point: GeoPoint { lon, lat },
            epoch,
            text,
            score,
        })
}

fn dedup_ids<T: Clone>(records: Vec<T>, id: impl Fn(&T) -> &str) -> Vec<T> {
    let mut seen = std::collections::HashSet::new();
    records.into_iter().filter(|r| seen.insert(id(r).to_string())).collect()
}

fn ingest_round_trip(cases: u32) -> Result<(), String> {
    let input = (
        prop::collection::vec(perception_strategy(), 0..8),
        prop::collection::vec(opinion_strategy(), 0..8),
    );
    check(cases, input, |(p, o)| {
        let p = dedup_ids(p, |r| &r.id);
        let o = dedup_ids(o, |r| &r.id);
        let text: String = p.iter().map(|r| perception_to_line(r) + "\n").collect();
        let (back, rep) = parse_perception(text.as_bytes(), &EpochSet::any()).unwrap();
        prop_assert_eq!(rep.rejected, 0);
        prop_assert_eq!(&back, &p);
        for (a, b) in back.iter().zip(&p) {
            prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
            prop_assert_eq!(a.point.lon.to_bits(), b.point.lon.to_bits());
        }
        let text: String = o.iter().map(|r| opinion_to_line(r) + "\n").collect();
        let (back, rep) = parse_opinion(text.as_bytes(), &EpochSet::any()).unwrap();
        prop_assert_eq!(rep.rejected, 0);
        prop_assert_eq!(&back, &o);
        Ok(())
    })
}

#[derive(Debug, Clone)]
enum Corruption {
    Keep,
    Truncate(usize),
    Insert(usize, u8),
    Replace(Vec<u8>),
    Blank,
}

fn corruption() -> impl Strategy<Value = Corruption> {
    prop_oneof![
        3 => Just(Corruption::Keep),
        1 => any::<usize>().prop_map(Corruption::Truncate),
        1 => (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Corruption::Insert(i, b)),
        1 => prop::collection::vec(any::<u8>(), 0..30).prop_map(Corruption::Replace),
        1 => Just(Corruption::Blank),
    ]
}

fn corrupt(line: String, c: &Corruption) -> Vec<u8> {
    let mut bytes = line.into_bytes();
    match c {
        Corruption::Keep => {}
        Corruption::Truncate(i) => bytes.truncate(i % (bytes.len() + 1)),
        Corruption::Insert(i, b) => bytes.insert(i % (bytes.len() + 1), *b),
        Corruption::Replace(v) => bytes = v.clone(),
        Corruption::Blank => bytes.clear(),
    }
    bytes.retain(|&b| b != b'\n');
    bytes
}

fn ingest_fuzz_conservation(cases: u32) -> Result<(), String> {
    let input = prop::collection::vec((perception_strategy(), corruption(), opinion_strategy(), corruption()), 0..12);
    check(cases, input, |rows| {
        let mut p_bytes = Vec::new();
        let mut o_bytes = Vec::new();
        for (p, pc, o, oc) in &rows {
            p_bytes.extend(corrupt(perception_to_line(p), pc));
            p_bytes.push(b'\n');
            o_bytes.extend(corrupt(opinion_to_line(o), oc));
            o_bytes.push(b'\n');
        }
        let (recs, rep) = parse_perception(p_bytes.as_slice(), &EpochSet::any()).unwrap();
        prop_assert_eq!(rep.total_lines, rows.len());
        prop_assert_eq!(rep.accepted + rep.rejected, rep.total_lines);
        prop_assert_eq!(rep.accepted, recs.len());
        prop_assert_eq!(rep.rejection_reasons.values().sum::<usize>(), rep.rejected);
        let (recs, rep) = parse_opinion(o_bytes.as_slice(), &EpochSet::of([2000, 2010])).unwrap();
        prop_assert_eq!(rep.total_lines, rows.len());
        prop_assert_eq!(rep.accepted + rep.rejected, rep.total_lines);
        prop_assert_eq!(rep.accepted, recs.len());
        Ok(())
    })
}

fn ingest_order_independence(cases: u32) -> Result<(), String> {
    let input = (prop::collection::vec(perception_strategy(), 1..10), any::<u64>(), 0usize..10);
    check(cases, input, |(recs, seed, dup_at)| {
        let recs = dedup_ids(recs, |r| &r.id);
        let mut lines: Vec<String> = recs.iter().map(perception_to_line).collect();
        let mut shuffled = lines.clone();
        urban_affect::rng::SeededRng::new(seed).shuffle(&mut shuffled);
        let parse = |ls: &[String]| {
            let text: String = ls.iter().map(|l| l.clone() + "\n").collect();
            let (mut out, _) = parse_perception(text.as_bytes(), &EpochSet::any()).unwrap();
            out.sort_by(|a, b| a.id.cmp(&b.id));
            out
        };
        prop_assert_eq!(parse(&lines), parse(&shuffled));

        // a later record reusing an id never displaces the first
        let victim = &recs[dup_at % recs.len()];
        let mut impostor = victim.clone();
        impostor.score = 10.0 - victim.score;
        impostor.epoch = victim.epoch + 1;
        lines.push(perception_to_line(&impostor));
        let parsed = parse(&lines);
        let kept = parsed.iter().find(|r| r.id == victim.id).unwrap();
        prop_assert_eq!(kept, victim);
        prop_assert_eq!(parsed.len(), recs.len());
        Ok(())
    })
}

// ---------------------------------------------------------------- textsent

fn lexicon_strategy(alphabet: &'static [char], max_entries: usize) -> impl Strategy<Value = Lexicon> {
    prop::collection::vec((prop::collection::vec(prop::sample::select(alphabet), 1..4), 1u64..30), 1..=max_entries)
        .prop_map(|entries| Lexicon::new(entries.into_iter().map(|(w, c)| (w.into_iter().collect::<String>(), c))).unwrap())
}

const SMALL_ALPHABET: &[char] = &['北', '京', '大', '学'];

fn tokens_reconstruct_input(cases: u32) -> Result<(), String> {
    let input = (lexicon_strategy(SMALL_ALPHABET, 6), any::<String>(), "[北京大学a-z ]{0,12}");
    check(cases, input, |(lex, arbitrary, near)| {
        for text in [&arbitrary, &near] {
            let toks = tokenize(text, &lex);
            prop_assert_eq!(toks.concat(), text.as_str());
            prop_assert!(toks.iter().all(|t| !t.is_empty()));
        }
        Ok(())
    })
}

fn segmentation_scale_invariance(cases: u32) -> Result<(), String> {
    let input = (lexicon_strategy(SMALL_ALPHABET, 6), "[北京大学]{0,10}", 2u64..50);
    check(cases, input, |(lex, text, k)| {
        let scaled = Lexicon::new(lex.sorted_entries().into_iter().map(|(w, c)| (w.to_string(), c * k))).unwrap();
        prop_assert_eq!(tokenize(&text, &lex), tokenize(&text, &scaled));
        Ok(())
    })
}

fn corpus() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("(good|bad|ok|fine|meh|wow)( (good|bad|ok|fine|meh|wow)){0,6}", 1..6)
}

fn swapped_model_complements(cases: u32) -> Result<(), String> {
    let input = (corpus(), corpus(), 0.05..5.0f64, "((good|bad|ok|new|wow) ){0,10}");
    check(cases, input, |(pos, neg, alpha, text)| {
        let m = SentimentModel::train(&pos, &neg, alpha, &WhitespaceTokenizer).unwrap();
        let s = m.score_text(&text, &WhitespaceTokenizer) + m.swapped().score_text(&text, &WhitespaceTokenizer);
        prop_assert!((s - 1.0).abs() <= 1e-12, "sum {}", s);
        Ok(())
    })
}

fn score_token_order(cases: u32) -> Result<(), String> {
    let input = (corpus(), corpus(), prop::collection::vec("good|bad|ok|new|wow", 0..12), any::<u64>());
    check(cases, input, |(pos, neg, tokens, seed)| {
        let m = SentimentModel::train(&pos, &neg, 1.0, &WhitespaceTokenizer).unwrap();
        let mut shuffled = tokens.clone();
        urban_affect::rng::SeededRng::new(seed).shuffle(&mut shuffled);
        let a: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let b: Vec<&str> = shuffled.iter().map(String::as_str).collect();
        prop_assert_eq!(m.score_tokens(&a).to_bits(), m.score_tokens(&b).to_bits());
        Ok(())
    })
}

fn tokenizer_matches_oracle(cases: u32) -> Result<(), String> {
    let input = (lexicon_strategy(&['a', 'b', 'c'], 6), "[abc]{0,8}");
    check(cases, input, |(lex, text)| {
        let got: Vec<String> = tokenize(&text, &lex).into_iter().map(str::to_string).collect();
        prop_assert_eq!(got, exhaustive_segmentation(&text, &lex), "text {:?} lexicon {:?}", text, lex.sorted_entries());
        Ok(())
    })
}

// ---------------------------------------------------------------- percept

fn bins_monotone(cases: u32) -> Result<(), String> {
    check(cases, (0.0..=10.0f64, 0.0..=10.0f64), |(a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bin_score(lo).unwrap() <= bin_score(hi).unwrap());
        Ok(())
    })?;
    let distinct: std::collections::BTreeSet<usize> =
        (0..=100_000).map(|i| bin_score(i as f64 / 10_000.0).unwrap().index()).collect();
    if distinct.len() != 10 {
        return Err(format!("{} distinct bins", distinct.len()));
    }
    Ok(())
}

fn rating_permutation(cases: u32) -> Result<(), String> {
    let input = (prop::collection::vec(0.0..=10.0f64, 1..30), any::<u64>());
    check(cases, input, |(scores, seed)| {
        let rated: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, s)| (format!("r{i}"), *s)).collect();
        let mut shuffled = rated.clone();
        urban_affect::rng::SeededRng::new(seed).shuffle(&mut shuffled);
        let a = aggregate_ratings(&RatingSheet {
            ratings: BTreeMap::from([("img".to_string(), rated)]),
        })
        .unwrap();
        let b = aggregate_ratings(&RatingSheet {
            ratings: BTreeMap::from([("img".to_string(), shuffled)]),
        })
        .unwrap();
        prop_assert!((a["img"] - b["img"]).abs() <= 1e-12);
        prop_assert_eq!(a["img"].to_bits(), b["img"].to_bits());
        Ok(())
    })
}

fn sampling_seed_smoke(_cases: u32) -> Result<(), String> {
    let ids: Vec<String> = (0..1000).map(|i| format!("img{i:04}")).collect();
    let mut same = 0;
    for trial in 0..100u64 {
        let a = sample_for_annotation(&ids, 300, 2 * trial).map_err(|e| e.to_string())?;
        let b = sample_for_annotation(&ids, 300, 2 * trial + 1).map_err(|e| e.to_string())?;
        same += usize::from(a == b);
    }
    if same == 0 {
        Ok(())
    } else {
        Err(format!("{same} of 100 seed pairs produced identical samples"))
    }
}

// ---------------------------------------------------------------- affectmap

fn small_grid() -> Grid {
    Grid::new(BoundingBox::new(0.0, 0.0, 1.0, 0.8).unwrap(), 0.1).unwrap()
}

fn scored_points() -> impl Strategy<Value = Vec<ScoredPoint>> {
    prop::collection::vec((-0.2..1.2f64, -0.2..1.0f64, 0.0..=10.0f64), 0..80).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (lon, lat, score))| ScoredPoint {
                id: format!("r{i:03}"),
                point: GeoPoint { lon, lat },
                score,
            })
            .collect()
    })
}

fn score_raster(points: &[ScoredPoint], channel: Channel, epoch: i32) -> Raster {
    aggregate_cells(&small_grid(), points, channel, epoch).unwrap().0
}

fn trend_identity(cases: u32) -> Result<(), String> {
    check(cases, scored_points(), |pts| {
        let a = score_raster(&pts, Channel::Perception, 2022);
        let mut b = a.clone();
        b.kind = RasterKind::Score {
            channel: Channel::Perception,
            epoch: 2016,
        };
        let t = trend(&a, &b).unwrap();
        for i in 0..a.values.len() {
            prop_assert_eq!(t.values[i], a.values[i].map(|_| 0.0));
        }
        Ok(())
    })
}

fn trend_pair(pts_late: &[ScoredPoint], pts_early: &[ScoredPoint], channel: Channel) -> Raster {
    trend(&score_raster(pts_late, channel, 2022), &score_raster(pts_early, channel, 2016)).unwrap()
}

fn mismatch_symmetry(cases: u32) -> Result<(), String> {
    let input = (scored_points(), scored_points(), scored_points(), scored_points());
    check(cases, input, |(a, b, c, d)| {
        let tp = trend_pair(&a, &b, Channel::Perception);
        let to = trend_pair(&c, &d, Channel::Opinion);
        let m1 = mismatch(&tp, &to).unwrap();
        let mut tp2 = to.clone();
        let mut to2 = tp.clone();
        std::mem::swap(&mut tp2.kind, &mut to2.kind);
        let m2 = mismatch(&tp2, &to2).unwrap();
        prop_assert_eq!(m1.values, m2.values);
        Ok(())
    })
}

fn raster_ranges(cases: u32) -> Result<(), String> {
    let input = (scored_points(), scored_points(), scored_points(), scored_points());
    check(cases, input, |(a, b, c, d)| {
        for pts in [&a, &b, &c, &d] {
            let r = score_raster(pts, Channel::Opinion, 2016);
            prop_assert!(r.present().all(|(_, v)| (0.0..=10.0).contains(&v)));
            for (i, v) in r.values.iter().enumerate() {
                prop_assert_eq!(v.is_some(), r.support[i] > 0);
            }
        }
        let m = mismatch(&trend_pair(&a, &b, Channel::Perception), &trend_pair(&c, &d, Channel::Opinion)).unwrap();
        prop_assert!(m.present().all(|(_, v)| (0.0..=1.0).contains(&v)));
        Ok(())
    })
}

fn support_conservation(cases: u32) -> Result<(), String> {
    check(cases, scored_points(), |pts| {
        let grid = small_grid();
        let (r, rep) = aggregate_cells(&grid, &pts, Channel::Perception, 2016).unwrap();
        let inside = pts.iter().filter(|p| grid.bbox.contains(p.point)).count();
        prop_assert_eq!(r.support.iter().map(|&s| s as usize).sum::<usize>(), inside);
        prop_assert_eq!(rep.used, inside);
        prop_assert_eq!(rep.outside_grid, pts.len() - inside);
        Ok(())
    })
}

fn aggregation_deterministic(cases: u32) -> Result<(), String> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    check(cases, (scored_points(), scored_points(), any::<u64>()), |(a, b, seed)| {
        let mut shuffled = a.clone();
        urban_affect::rng::SeededRng::new(seed).shuffle(&mut shuffled);
        let build = |pts: &[ScoredPoint]| {
            let p = score_raster(pts, Channel::Perception, 2022);
            let q = score_raster(&b, Channel::Perception, 2016);
            let t = trend(&p, &q).unwrap();
            let s = smooth(&p, Smoothing::Idw { power: 2.0, radius: 2 }).unwrap();
            let m = mismatch(&t, &Raster { kind: RasterKind::Trend { channel: Channel::Opinion, early: 2016, late: 2022 }, ..t.clone() })
                .unwrap();
            (p, t, s, m)
        };
        let x = one.install(|| build(&a));
        let y = many.install(|| build(&shuffled));
        let bits = |r: &Raster| r.values.iter().map(|v| v.map(f64::to_bits)).collect::<Vec<_>>();
        prop_assert_eq!(bits(&x.0), bits(&y.0));
        prop_assert_eq!(bits(&x.1), bits(&y.1));
        prop_assert_eq!(bits(&x.2), bits(&y.2));
        prop_assert_eq!(bits(&x.3), bits(&y.3));
        Ok(())
    })
}

fn idw_idempotent(cases: u32) -> Result<(), String> {
    let input = (prop::collection::vec(0.0..=10.0f64, 80), 0.5..4.0f64, 1usize..4);
    check(cases, input, |(values, power, radius)| {
        let grid = small_grid();
        let r = Raster {
            grid,
            kind: RasterKind::Score {
                channel: Channel::Perception,
                epoch: 2016,
            },
            values: values.into_iter().map(Some).collect(),
            support: vec![1; grid.cell_count()],
        };
        let s = smooth(&r, Smoothing::Idw { power, radius }).unwrap();
        prop_assert_eq!(&s, &r);
        prop_assert_eq!(smooth(&s, Smoothing::Idw { power, radius }).unwrap(), s);
        Ok(())
    })
}

// ---------------------------------------------------------------- regress

fn p_value_monotone(cases: u32) -> Result<(), String> {
    let input = (0.01..60.0f64, 0.01..5.0f64, 1usize..6, 2usize..200);
    check(cases, input, |(f, step, df1, df2)| {
        let p1 = f_p_value(f, df1, df2);
        let p2 = f_p_value(f + step, df1, df2);
        // strict where the tail is representable
        prop_assert!(p2 < p1 || (p1 < 1e-300), "F {} -> {}, {} -> {}", f, p1, f + step, p2);
        Ok(())
    })?;
    check(cases, (0.0..0.95f64, 0.001..0.04f64, 1usize..4, 5usize..80), |(r2, step, df1, df2)| {
        let p = |r: f64| f_p_value(f_statistic(r, df1, df2).unwrap(), df1, df2);
        let (a, b) = (p(r2), p(r2 + step));
        prop_assert!(b < a || a < 1e-300, "r2 {} -> {}, {} -> {}", r2, a, r2 + step, b);
        Ok(())
    })
}

fn p_value_closed_form(_cases: u32) -> Result<(), String> {
    for df2 in [1usize, 2, 5, 17, 35, 60, 120, 500] {
        for k in 1..=500 {
            let f = 0.1 * k as f64;
            let closed = (1.0 + 2.0 * f / df2 as f64).powf(-(df2 as f64) / 2.0);
            let got = f_p_value(f, 2, df2);
            if (got - closed).abs() > 1e-9 {
                return Err(format!("F {f}, df2 {df2}: {got} vs {closed}"));
            }
        }
    }
    Ok(())
}

fn regression_data() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec((0.0..1.0f64, -3.0..3.0f64), 8..120), prop::array::uniform4(-20.0..20.0f64)).prop_map(
        |(pts, c)| {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys = pts.iter().map(|&(x, e)| c[0] + x * (c[1] + x * (c[2] + x * c[3])) + e).collect();
            (xs, ys)
        },
    )
}

fn residual_orthogonality(cases: u32) -> Result<(), String> {
    check(cases, regression_data(), |(xs, ys)| {
        let Ok(fit) = fit_cubic(&xs, &ys) else { return Ok(()) };
        let resid: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| y - fit.predict(x)).collect();
        let rn = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        for p in 0..4 {
            if fit.dropped_terms.contains(&p) {
                continue;
            }
            let col: Vec<f64> = xs.iter().map(|x| x.powi(p as i32)).collect();
            let cn = col.iter().map(|c| c * c).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(&resid).map(|(c, r)| c * r).sum();
            prop_assert!(dot.abs() <= 1e-6 * cn * rn.max(1e-300) + 1e-12, "power {} dot {}", p, dot);
        }
        Ok(())
    })
}

fn affine_invariance(cases: u32) -> Result<(), String> {
    check(cases, (regression_data(), 0.1..50.0f64, -10.0..10.0f64), |((xs, ys), a, b)| {
        let Ok(fit) = fit_cubic(&xs, &ys) else { return Ok(()) };
        let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let fit2 = fit_cubic(&moved, &ys).unwrap();
        for (x, m) in xs.iter().zip(&moved) {
            let (u, v) = (fit.predict(*x), fit2.predict(*m));
            prop_assert!((u - v).abs() <= 1e-8 * (1.0 + u.abs()), "{} vs {}", u, v);
        }
        prop_assert!((fit.r_square - fit2.r_square).abs() <= 1e-9);
        Ok(())
    })
}

// ---------------------------------------------------------------- render

fn ramp_monotone(cases: u32) -> Result<(), String> {
    let ramps = [ColorRamp::sequential(), ColorRamp::diverging(), ColorRamp::grayscale_inverted()];
    check(cases, (0usize..3, 0.0..=1.0f64, 0.0..=1.0f64), |(k, a, b)| {
        let ramp = &ramps[k];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // compare within one segment only
        let segments: &[(f64, f64)] = if k == 1 { &[(0.0, 0.5), (0.5, 1.0)] } else { &[(0.0, 1.0)] };
        for &(s0, s1) in segments {
            let (u, v) = (s0 + lo * (s1 - s0), s0 + hi * (s1 - s0));
            let cu = ramp_color(u, ramp, (0.0, 1.0)).unwrap();
            let cv = ramp_color(v, ramp, (0.0, 1.0)).unwrap();
            let c0 = ramp_color(s0, ramp, (0.0, 1.0)).unwrap();
            let c1 = ramp_color(s1, ramp, (0.0, 1.0)).unwrap();
            for ch in 0..3 {
                if c1[ch] >= c0[ch] {
                    prop_assert!(cu[ch] <= cv[ch]);
                } else {
                    prop_assert!(cu[ch] >= cv[ch]);
                }
            }
        }
        Ok(())
    })
}

fn render_matches_ramp(cases: u32) -> Result<(), String> {
    check(cases, (scored_points(), 1usize..4), |(pts, scale)| {
        let r = score_raster(&pts, Channel::Perception, 2016);
        let ramp = ColorRamp::sequential();
        let img = render_raster(&r, &ramp, (0.0, 10.0), scale).unwrap();
        prop_assert_eq!(&img, &render_raster(&r, &ramp, (0.0, 10.0), scale).unwrap());
        prop_assert_eq!((img.width, img.height), (r.grid.n_cols * scale, r.grid.n_rows * scale));
        for i in 0..r.values.len() {
            let c = r.grid.cell_at(i);
            let want = match r.values[i] {
                Some(v) => ramp_color(v, &ramp, (0.0, 10.0)).unwrap(),
                None => urban_affect::render::MISSING_COLOR,
            };
            prop_assert_eq!(img.pixel(c.col * scale + scale - 1, c.row * scale), want);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- synth and pipeline

/// Small scenario for per-case end-to-end checks.
pub fn small_spec(seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::standard(seed);
    spec.bbox = BoundingBox::new(116.30, 39.90, 116.34, 39.932).unwrap();
    spec.perception_per_cell = 6;
    spec.hotspots = vec![Hotspot {
        center: CellIndex { row: 2, col: 2 },
        radius: 1.0,
        perception_delta: [0.0, -2.0],
        opinion_delta: [0.0, 2.0],
    }];
    spec.planted[0].cells = CellRect {
        row0: 5,
        col0: 6,
        row1: 6,
        col1: 8,
    };
    spec.extra_zones.clear();
    spec
}

fn dir_contents(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path()).unwrap());
        }
    }
    out
}

fn synth_same_seed_files(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_scenario(&generate_scenario(&small_spec(seed)).unwrap(), a.path()).unwrap();
        write_scenario(&generate_scenario(&small_spec(seed)).unwrap(), b.path()).unwrap();
        prop_assert_eq!(dir_contents(a.path()), dir_contents(b.path()));
        Ok(())
    })
}

fn synth_schema_closure(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let s = generate_scenario(&small_spec(seed)).unwrap();
        let epochs = EpochSet::of(s.spec.epochs);
        let text: String = s.perception.iter().map(|r| perception_to_line(r) + "\n").collect();
        let (p, rep) = parse_perception(text.as_bytes(), &epochs).unwrap();
        prop_assert_eq!(rep.rejected, 0);
        prop_assert_eq!(p.len(), s.perception.len());
        let text: String = s.opinion.iter().map(|r| opinion_to_line(r) + "\n").collect();
        let (o, rep) = parse_opinion(text.as_bytes(), &epochs).unwrap();
        prop_assert_eq!(rep.rejected, 0);
        prop_assert_eq!(o.len(), s.opinion.len());
        let zones = urban_affect::ingest::parse_zoning(&s.zoning.to_string());
        prop_assert!(zones.is_ok());
        Ok(())
    })
}

fn run_fixture(spec: &ScenarioSpec, workers: usize) -> (tempfile::TempDir, urban_affect::pipeline::RunOutput) {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_synth_fixture(spec, dir.path()).unwrap();
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    cfg.workers = workers;
    let out = run(&cfg).unwrap();
    (dir, out)
}

fn synth_trends_exact(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let mut spec = small_spec(seed);
        spec.epoch_noise = 0.0;
        spec.planted[0].sigma = 0.0;
        let key = generate_scenario(&spec).unwrap().answer_key;
        let (_dir, out) = run_fixture(&spec, 2);
        for (i, v) in out.trend_perception.present() {
            prop_assert_eq!(v, key.trend_perception[i], "perception cell {}", i);
        }
        for (i, v) in out.trend_opinion.present() {
            prop_assert!((v - key.trend_opinion[i]).abs() <= 1e-9, "opinion cell {}: {} vs {}", i, v, key.trend_opinion[i]);
        }
        prop_assert_eq!(out.trend_perception.stats().present, key.trend_perception.len());
        Ok(())
    })
}

fn pipeline_worker_determinism(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let spec = small_spec(seed);
        let (a, _) = run_fixture(&spec, 1);
        let (b, _) = run_fixture(&spec, 4);
        prop_assert_eq!(dir_contents(&a.path().join("out")), dir_contents(&b.path().join("out")));
        Ok(())
    })
}

fn manifest_complete(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let (dir, out) = run_fixture(&small_spec(seed), 0);
        let files = dir_contents(&dir.path().join("out"));
        prop_assert_eq!(files.len(), out.manifest.outputs.len() + 1);
        for f in &out.manifest.outputs {
            let bytes = files.get(&f.file);
            prop_assert!(bytes.is_some(), "{} missing", f.file);
            prop_assert_eq!(&sha256_hex(bytes.unwrap()), &f.sha256);
        }
        prop_assert!(files.contains_key("manifest.json"));
        Ok(())
    })
}
