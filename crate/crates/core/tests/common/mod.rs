//! Reference implementations and fixtures shared by the integration tests.
//!
//! The oracles are deliberately naive: n-grams are listed and counted by
//! linear scan, edit distance fills the whole matrix, and every score that
//! is rational is computed with exact fractions.

#![allow(dead_code)]

use std::sync::Arc;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use cascade_eval::adapters::TextStage;
use cascade_eval::corpus::{EvalItem, SentenceType};
use cascade_eval::normalize;

pub type Q = Ratio<i128>;

fn q(n: usize, d: usize) -> Q {
    Q::new(n as i128, d as i128)
}

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn nfc_words(text: &str) -> Vec<String> {
    let s: String = text.nfc().collect();
    s.split_whitespace().map(str::to_string).collect()
}

fn is_mark(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

/// Whitespace split with every punctuation/symbol code point on its own.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in nfc_words(text) {
        let mut cur = String::new();
        for c in w.chars() {
            if is_mark(c) {
                if !cur.is_empty() {
                    out.push(cur.clone());
                    cur.clear();
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// Corpus WER as an exact fraction of summed edits over summed reference words.
pub fn wer(hyps: &[String], refs: &[String]) -> Q {
    let (mut e, mut n) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (nfc_words(h), nfc_words(r));
        e += edit_distance(&h, &r);
        n += r.len();
    }
    q(100 * e, n)
}

pub fn cer(hyps: &[String], refs: &[String]) -> Q {
    let (mut e, mut n) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let h: Vec<char> = nfc_words(h).join(" ").chars().collect();
        let r: Vec<char> = nfc_words(r).join(" ").chars().collect();
        e += edit_distance(&h, &r);
        n += r.len();
    }
    q(100 * e, n)
}

pub fn ngrams<T: Clone>(units: &[T], n: usize) -> Vec<Vec<T>> {
    if units.len() < n {
        return Vec::new();
    }
    (0..=units.len() - n).map(|i| units[i..i + n].to_vec()).collect()
}

fn count<T: PartialEq>(list: &[Vec<T>], g: &[T]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Sum over distinct hypothesis n-grams of min(hyp count, ceiling(g)).
fn clipped<T: PartialEq + Clone>(hyp: &[Vec<T>], ceiling: impl Fn(&[T]) -> usize) -> usize {
    let mut seen: Vec<&Vec<T>> = Vec::new();
    let mut total = 0;
    for g in hyp {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        total += count(hyp, g).min(ceiling(g));
    }
    total
}

/// Corpus BLEU-4, no smoothing; orders without hypothesis n-grams are dropped.
pub fn bleu(hyps: &[String], refs: &[Vec<String>]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rs) in hyps.iter().zip(refs) {
        let ht = tokens(h);
        let rts: Vec<Vec<String>> = rs.iter().map(|x| tokens(x)).collect();
        c += ht.len();
        let mut best = rts[0].len();
        for rt in &rts {
            let (d, bd) = (rt.len().abs_diff(ht.len()), best.abs_diff(ht.len()));
            if d < bd || (d == bd && rt.len() < best) {
                best = rt.len();
            }
        }
        r += best;
        for n in 1..=4 {
            let hg = ngrams(&ht, n);
            let rgs: Vec<Vec<Vec<String>>> = rts.iter().map(|rt| ngrams(rt, n)).collect();
            matches[n - 1] += clipped(&hg, |g| rgs.iter().map(|rg| count(rg, g)).max().unwrap_or(0));
            totals[n - 1] += hg.len();
        }
    }
    let orders: Vec<usize> = (0..4).filter(|&i| totals[i] > 0).collect();
    if orders.is_empty() || orders.iter().any(|&i| matches[i] == 0) {
        return 0.0;
    }
    let mut product = Q::from_integer(1);
    for &i in &orders {
        product *= q(matches[i], totals[i]);
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    100.0 * bp * to_f64(product).powf(1.0 / orders.len() as f64)
}

#[derive(Clone, Copy, Default)]
struct Counts {
    hyp: usize,
    reference: usize,
    matches: usize,
}

fn order_counts<T: PartialEq + Clone>(h: &[T], r: &[T], n: usize) -> Counts {
    let hg = ngrams(h, n);
    let rg = ngrams(r, n);
    Counts {
        hyp: hg.len(),
        reference: rg.len(),
        matches: clipped(&hg, |g| count(&rg, g)),
    }
}

fn chrf_counts(h: &str, r: &str) -> Vec<Counts> {
    let hc: Vec<char> = nfc_words(h).concat().chars().collect();
    let rc: Vec<char> = nfc_words(r).concat().chars().collect();
    let (hw, rw) = (tokens(h), tokens(r));
    let mut v: Vec<Counts> = (1..=6).map(|n| order_counts(&hc, &rc, n)).collect();
    v.extend((1..=2).map(|n| order_counts(&hw, &rw, n)));
    v
}

fn chrf_score(counts: &[Counts]) -> Q {
    let mut sum = Q::from_integer(0);
    let mut k = 0;
    for c in counts {
        if c.hyp == 0 || c.reference == 0 {
            continue;
        }
        k += 1;
        if c.matches == 0 {
            continue;
        }
        let p = q(c.matches, c.hyp);
        let r = q(c.matches, c.reference);
        sum += Q::from_integer(5) * p * r / (Q::from_integer(4) * p + r);
    }
    if k == 0 {
        Q::from_integer(0)
    } else {
        Q::from_integer(100) * sum / Q::from_integer(k)
    }
}

/// Corpus chrF++ (char 6, word 2, beta 2) with per-item best reference.
pub fn chrf(hyps: &[String], refs: &[Vec<String>]) -> Q {
    let mut total = vec![Counts::default(); 8];
    for (h, rs) in hyps.iter().zip(refs) {
        let mut best: Option<(Q, Vec<Counts>)> = None;
        for r in rs {
            let c = chrf_counts(h, r);
            let s = chrf_score(&c);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, c));
            }
        }
        for (t, c) in total.iter_mut().zip(best.unwrap().1) {
            t.hyp += c.hyp;
            t.reference += c.reference;
            t.matches += c.matches;
        }
    }
    chrf_score(&total)
}

/// Sentence METEOR with exact matching; the k-th occurrence of a word in the
/// hypothesis pairs with its k-th occurrence in the reference.
pub fn meteor_sentence(h: &str, r: &str) -> Option<Q> {
    let ht = tokens(&h.to_lowercase());
    let rt = tokens(&r.to_lowercase());
    if ht.is_empty() || rt.is_empty() {
        return None;
    }
    let mut pairs = Vec::new();
    for (i, w) in ht.iter().enumerate() {
        let k = ht[..i].iter().filter(|x| *x == w).count();
        if let Some((j, _)) = rt.iter().enumerate().filter(|(_, x)| *x == w).nth(k) {
            pairs.push((i, j));
        }
    }
    let m = pairs.len();
    if m == 0 {
        return Some(Q::from_integer(0));
    }
    let mut chunks = 1;
    for w in pairs.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
            chunks += 1;
        }
    }
    let p = q(m, ht.len());
    let rc = q(m, rt.len());
    let f = Q::from_integer(10) * p * rc / (rc + Q::from_integer(9) * p);
    let frag = q(chunks, m);
    let penalty = Q::new(1, 2) * frag * frag * frag;
    Some(Q::from_integer(100) * f * (Q::from_integer(1) - penalty))
}

pub fn meteor(hyps: &[String], refs: &[Vec<String>]) -> Q {
    let mut sum = Q::from_integer(0);
    for (h, rs) in hyps.iter().zip(refs) {
        let best = rs
            .iter()
            .filter_map(|r| meteor_sentence(h, r))
            .max()
            .unwrap_or_else(|| Q::from_integer(0));
        sum += best;
    }
    sum / Q::from_integer(hyps.len() as i128)
}

/// Krippendorff's alpha by enumerating value pairs.
///
/// `D_o` averages the distance over ordered pairs inside each unit (weighted
/// 1/(m_u - 1)); `D_e` averages it over all ordered pairs of pairable values.
pub fn alpha(cells: &[Vec<Option<u8>>], levels: u8, ordinal: bool) -> Option<f64> {
    let n_items = cells.first().map_or(0, Vec::len);
    let units: Vec<Vec<u8>> = (0..n_items)
        .map(|i| cells.iter().filter_map(|row| row[i]).collect::<Vec<u8>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let pooled: Vec<u8> = units.iter().flatten().copied().collect();
    let n = pooled.len();
    if n == 0 {
        return None;
    }
    let freq: Vec<usize> = (1..=levels).map(|g| pooled.iter().filter(|&&v| v == g).count()).collect();
    let delta = |a: u8, b: u8| -> Q {
        if a == b {
            return Q::from_integer(0);
        }
        if !ordinal {
            return Q::from_integer(1);
        }
        let (lo, hi) = (a.min(b) as usize, a.max(b) as usize);
        let span: usize = freq[lo - 1..hi].iter().sum();
        let d = Q::from_integer(span as i128) - q(freq[a as usize - 1] + freq[b as usize - 1], 2);
        d * d
    };
    let mut d_o = Q::from_integer(0);
    for u in &units {
        let mut s = Q::from_integer(0);
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in u.iter().enumerate() {
                if i != j {
                    s += delta(a, b);
                }
            }
        }
        d_o += s / Q::from_integer(u.len() as i128 - 1);
    }
    d_o /= Q::from_integer(n as i128);
    let mut d_e = Q::from_integer(0);
    for (i, &a) in pooled.iter().enumerate() {
        for (j, &b) in pooled.iter().enumerate() {
            if i != j {
                d_e += delta(a, b);
            }
        }
    }
    d_e /= Q::from_integer((n * (n - 1)) as i128);
    if d_e == Q::from_integer(0) {
        return None;
    }
    Some(1.0 - to_f64(d_o / d_e))
}

const WORDS: &[&str] = &[
    "the", "cat", "The", "sat", "on", "mat", "a", "म", "घर", "जान्छु", "नेपाल", "सुन्दर", "देश", "हो", "र", "।",
    "?", ",", "!", "\"", "cat.", "घर।", "नेपाल,",
];

/// A random text of at most `max` tokens drawn from a small mixed vocabulary.
pub fn random_text<R: Rng>(rng: &mut R, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    let mut words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.1) {
        words.insert(0, " ");
    }
    words.join(if rng.gen_bool(0.2) { "  " } else { " " })
}

pub fn random_nonempty<R: Rng>(rng: &mut R, max: usize) -> String {
    loop {
        let t = random_text(rng, max);
        if !tokens(&t).is_empty() {
            return t;
        }
    }
}

pub fn eval_item(id: &str, transcript: &str, translation: &str) -> EvalItem {
    EvalItem {
        id: id.to_string(),
        ref_transcript: normalize(transcript),
        ref_translations: vec![translation.to_string()],
        sentence_type: SentenceType::Statement,
        audio_path: Some(format!("clips/{id}.wav")),
        duration_s: Some(3.0),
        speaker_id: Some("spk1".into()),
        extra: Default::default(),
    }
}

/// Word-for-word Nepali to English translator. A clause only becomes a
/// capitalised sentence with a full stop when it ends in a danda; without
/// one it is rendered as a lowercase fragment.
pub struct DictionaryTranslator;

const DICT: &[(&str, &str)] = &[
    ("म", "i"),
    ("घर", "home"),
    ("जान्छु", "go"),
    ("ऊ", "he"),
    ("स्कुल", "school"),
    ("जान्छ", "goes"),
    ("हामी", "we"),
    ("भात", "rice"),
    ("खान्छौं", "eat"),
    ("आज", "today"),
    ("पानी", "rain"),
    ("पर्यो", "fell"),
    ("तिमी", "you"),
    ("पढ्छौ", "read"),
    ("जान्छौ", "go"),
    ("ठूलो", "big"),
    ("सानो", "small"),
    ("तातो", "hot"),
    ("धेरै", "much"),
    ("किताब", "book"),
];

impl DictionaryTranslator {
    fn word(w: &str) -> String {
        DICT.iter()
            .find(|(np, _)| *np == w)
            .map(|(_, en)| en.to_string())
            .unwrap_or_else(|| w.to_string())
    }
}

impl TextStage for DictionaryTranslator {
    fn identity(&self) -> String {
        "dictionary-v1".into()
    }

    fn process(&self, _id: &str, text: &str) -> Result<String, String> {
        let mut out: Vec<String> = Vec::new();
        let mut rest = text;
        while !rest.trim().is_empty() {
            let (clause, ended) = match rest.find('।') {
                Some(i) => {
                    let c = &rest[..i];
                    rest = &rest[i + '।'.len_utf8()..];
                    (c, true)
                }
                None => {
                    let c = rest;
                    rest = "";
                    (c, false)
                }
            };
            let words: Vec<String> = clause.split_whitespace().map(Self::word).collect();
            if words.is_empty() {
                continue;
            }
            let mut s = words.join(" ");
            if ended {
                let mut chars = s.chars();
                let first = chars.next().unwrap();
                s = first.to_uppercase().collect::<String>() + chars.as_str() + " .";
            }
            out.push(s);
        }
        Ok(out.join(" "))
    }
}

pub fn dictionary_translator() -> Arc<dyn TextStage> {
    Arc::new(DictionaryTranslator)
}

/// Two-sentence items and their English references for the danda fixture.
pub fn danda_corpus() -> Vec<EvalItem> {
    let sentences = [
        ("आज म ठूलो घर जान्छु।", "Today i big home go ."),
        ("ऊ आज सानो स्कुल जान्छ।", "He today small school goes ."),
        ("हामी आज तातो भात खान्छौं।", "We today hot rice eat ."),
        ("आज धेरै ठूलो पानी पर्यो।", "Today much big rain fell ."),
        ("तिमी आज सानो घर जान्छौ।", "You today small home go ."),
        ("तिमी आज धेरै किताब पढ्छौ।", "You today much book read ."),
    ];
    let mut items = Vec::new();
    let mut k = 0;
    for a in &sentences {
        for b in &sentences {
            if a.0 == b.0 {
                continue;
            }
            k += 1;
            items.push(eval_item(
                &format!("d{k:03}"),
                &format!("{} {}", a.0, b.0),
                &format!("{} {}", a.1, b.1),
            ));
        }
    }
    items
}
