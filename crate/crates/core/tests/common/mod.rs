//! Independent oracles shared by the integration test targets.
#![allow(dead_code)]

pub mod props;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use urban_affect::geo::{GeoPoint, ZonePolygon};
use urban_affect::textsent::Lexicon;

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

/// Least-squares cubic coefficients from the normal equations `XᵀX β = Xᵀy`
/// solved in exact rational arithmetic, rounded once to f64.
pub fn cubic_normal_equations(xs: &[f64], ys: &[f64]) -> [f64; 4] {
    let mut a = vec![vec![BigRational::zero(); 5]; 4];
    for (&x, &y) in xs.iter().zip(ys) {
        let x = exact(x);
        let y = exact(y);
        let mut powers = vec![BigRational::from_integer(BigInt::from(1))];
        for k in 1..7 {
            let next = &powers[k - 1] * &x;
            powers.push(next);
        }
        for (r, row) in a.iter_mut().enumerate() {
            for c in 0..4 {
                row[c] += &powers[r + c];
            }
            row[4] += &powers[r] * &y;
        }
    }
    // Gauss–Jordan with exact pivots.
    for col in 0..4 {
        let pivot = (col..4).find(|&r| !a[r][col].is_zero()).expect("full rank design");
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for c in col..5 {
            a[col][c] = &a[col][c] / &p;
        }
        for r in 0..4 {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..5 {
                    let delta = &f * &a[col][c];
                    a[r][c] -= delta;
                }
            }
        }
    }
    [0, 1, 2, 3].map(|r| a[r][4].to_f64().expect("representable"))
}

/// Brute-force segmentation: every split of `text` whose pieces are lexicon
/// words, or single characters where no lexicon word matches, scored by
/// `Σ ln(freq / total)` (fallback frequency 1). Among routes within the tie
/// tolerance of the best, the one with the lexicographically largest sequence
/// of token lengths wins.
pub fn exhaustive_segmentation(text: &str, lex: &Lexicon) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }
    let piece = |i: usize, j: usize| chars[i..j].iter().collect::<String>();
    // freq[i][j]: lexicon frequency of chars[i..j]
    let freq: Vec<Vec<Option<u64>>> = (0..n)
        .map(|i| (0..=n).map(|j| if j > i { lex.freq(&piece(i, j)) } else { None }).collect())
        .collect();
    let matches_at: Vec<bool> = (0..n).map(|i| freq[i].iter().any(Option::is_some)).collect();
    let ln_total = (lex.total() as f64).ln();

    // log weight of chars[i..j] as a token, None if it cannot be one
    let weight: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (0..=n)
                .map(|j| match freq.get(i).and_then(|row| row[j]) {
                    Some(f) => Some((f as f64).ln() - ln_total),
                    None if j == i + 1 && !matches_at[i] => Some(1f64.ln() - ln_total),
                    None => None,
                })
                .collect()
        })
        .collect();
    // every complete route as (score, token lengths)
    fn walk(weight: &[Vec<Option<f64>>], i: usize, score: f64, lens: &mut Vec<usize>, out: &mut Vec<(f64, Vec<usize>)>) {
        let n = weight.len();
        if i == n {
            out.push((score, lens.clone()));
            return;
        }
        for j in i + 1..=n {
            if let Some(w) = weight[i][j] {
                lens.push(j - i);
                walk(weight, j, score + w, lens, out);
                lens.pop();
            }
        }
    }
    let mut routes = Vec::new();
    walk(&weight, 0, 0.0, &mut Vec::new(), &mut routes);
    let best = routes.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * (1.0 + best.abs());
    let lens = routes
        .into_iter()
        .filter(|r| r.0 >= best - tol)
        .map(|r| r.1)
        .max()
        .expect("some route exists");
    let mut out = Vec::new();
    let mut i = 0;
    for l in lens {
        out.push(piece(i, i + l));
        i += l;
    }
    out
}

/// Winding-number containment (boundary points count as inside), holes
/// subtracted.
pub fn winding_contains(p: GeoPoint, poly: &ZonePolygon) -> bool {
    let rings = poly.rings();
    if on_any_boundary(p, rings) {
        return true;
    }
    let inside = |ring: &[GeoPoint]| winding_number(p, ring) != 0;
    inside(&rings[0]) && !rings[1..].iter().any(|h| inside(h))
}

fn on_any_boundary(p: GeoPoint, rings: &[Vec<GeoPoint>]) -> bool {
    rings.iter().any(|ring| {
        (0..ring.len()).any(|k| {
            let a = ring[k];
            let b = ring[(k + 1) % ring.len()];
            let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
            cross == 0.0
                && p.lon >= a.lon.min(b.lon)
                && p.lon <= a.lon.max(b.lon)
                && p.lat >= a.lat.min(b.lat)
                && p.lat <= a.lat.max(b.lat)
        })
    })
}

fn winding_number(p: GeoPoint, ring: &[GeoPoint]) -> i32 {
    let mut wn = 0;
    for k in 0..ring.len() {
        let a = ring[k];
        let b = ring[(k + 1) % ring.len()];
        let side = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
        if a.lat <= p.lat {
            if b.lat > p.lat && side > 0.0 {
                wn += 1;
            }
        } else if b.lat <= p.lat && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}
