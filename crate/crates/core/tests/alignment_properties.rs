use granalign::ctc::{group_words, min_frames, viterbi_align, EmissionMatrix, TargetSequence, TargetWord};
use granalign::syllable::{align_syllables, classify, ssp_syllabify, PhonemeInventory};
use granalign::{AlignedUnit, Error, Granularity};
use proptest::prelude::*;

const SYMBOLS: [&str; 5] = ["<blank>", "p", "a", "t", "s"];

fn emissions(t: usize, logits: &[f64]) -> EmissionMatrix {
    let v = SYMBOLS.len();
    let mut lp = Vec::with_capacity(t * v);
    for row in logits.chunks(v).take(t) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        lp.extend(row.iter().map(|x| x - lse));
    }
    EmissionMatrix::new(lp, 0.02, SYMBOLS.iter().map(|s| s.to_string()).collect(), 0).unwrap()
}

fn target(ids: &[usize], word_len: usize) -> TargetSequence {
    let words: Vec<TargetWord> = ids
        .chunks(word_len)
        .enumerate()
        .map(|(i, c)| TargetWord {
            word: format!("w{i}"),
            phonemes: c.iter().map(|&k| SYMBOLS[k].to_string()).collect(),
        })
        .collect();
    TargetSequence::from_words(&words).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn alignment_is_monotone_and_composes(
        ids in prop::collection::vec(1usize..5, 1..6),
        word_len in 1usize..4,
        t in 1usize..24,
        logits in prop::collection::vec(-3.0f64..3.0, 24 * 5),
    ) {
        let em = emissions(t, &logits);
        let seq = target(&ids, word_len);
        match viterbi_align(&em, &seq) {
            Err(Error::Infeasible { frames, required }) => {
                prop_assert!(t < min_frames(&ids));
                prop_assert_eq!((frames, required), (t, min_frames(&ids)));
            }
            Err(e) => prop_assert!(false, "unexpected {e}"),
            Ok(al) => {
                prop_assert!(t >= min_frames(&ids));
                prop_assert_eq!(al.units.len(), ids.len());
                let mut prev_end: Option<usize> = None;
                for (k, (&(s, e), u)) in al.frame_spans.iter().zip(&al.units).enumerate() {
                    prop_assert!(s <= e && e < t);
                    if let Some(p) = prev_end {
                        prop_assert!(s > p);
                        // Repeated symbols need a blank between them.
                        if ids[k] == ids[k - 1] {
                            prop_assert!(s > p + 1);
                        }
                    }
                    prev_end = Some(e);
                    prop_assert!((u.start_s - s as f64 * 0.02).abs() < 1e-12);
                    prop_assert!((u.end_s - (e + 1) as f64 * 0.02).abs() < 1e-12);
                    prop_assert!(u.confidence > 0.0 && u.confidence <= 1.0);
                }
                let words = group_words(&al.units, &seq).unwrap();
                prop_assert_eq!(words.len(), seq.word_spans.len());
                for (w, &(a, b)) in words.iter().zip(&seq.word_spans) {
                    prop_assert_eq!(w.start_s, al.units[a].start_s);
                    prop_assert_eq!(w.end_s, al.units[b - 1].end_s);
                    prop_assert_eq!(w.granularity, Granularity::Word);
                    let mean = al.units[a..b].iter().map(|u| u.confidence).sum::<f64>() / (b - a) as f64;
                    prop_assert!((w.confidence - mean).abs() < 1e-12);
                }
            }
        }
    }
}

const IPA: [&str; 16] = ["p", "t", "k", "tʃ", "s", "f", "m", "n", "l", "r", "j", "w", "a", "e", "i", "o"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn syllables_partition_words(word in prop::collection::vec(prop::sample::select(&IPA[..]), 1..10)) {
        let inv = PhonemeInventory::default_ipa();
        let syl = ssp_syllabify(&word, &inv).unwrap();
        let vowels = word.iter().filter(|s| classify(s, &inv).rank == 5).count();

        let mut next = 0;
        for s in &syl {
            prop_assert_eq!(s.start, next);
            prop_assert!(s.start <= s.nucleus && s.nucleus < s.end);
            next = s.end;
        }
        prop_assert_eq!(next, word.len());
        if vowels > 0 {
            prop_assert_eq!(syl.len(), vowels);
            for (k, s) in syl.iter().enumerate() {
                prop_assert_eq!(classify(word[s.nucleus], &inv).rank, 5);
                if k > 0 {
                    let onset: Vec<u8> = word[s.start..s.nucleus].iter().map(|p| classify(p, &inv).rank).collect();
                    prop_assert!(onset.windows(2).all(|w| w[0] <= w[1]), "onset {:?}", onset);
                }
            }
        } else {
            prop_assert_eq!(syl.len(), 1);
        }

        let units: Vec<AlignedUnit> = word
            .iter()
            .enumerate()
            .map(|(i, p)| AlignedUnit {
                label: p.to_string(),
                granularity: Granularity::Phoneme,
                start_s: i as f64 * 0.1,
                end_s: (i + 1) as f64 * 0.1,
                confidence: 0.5 + 0.05 * i as f64,
            })
            .collect();
        let sylls = align_syllables(&syl, &units).unwrap();
        prop_assert_eq!(sylls.iter().map(|u| u.label.as_str()).collect::<String>(), word.concat());
        for w in sylls.windows(2) {
            prop_assert_eq!(w[0].end_s, w[1].start_s);
        }
    }
}

#[test]
fn worked_syllabification_examples() {
    let inv = PhonemeInventory::default_ipa();
    let split = |w: &[&str]| -> Vec<String> {
        ssp_syllabify(w, &inv)
            .unwrap()
            .iter()
            .map(|s| w[s.start..s.end].concat())
            .collect()
    };
    assert_eq!(split(&["p", "a", "t", "a", "k", "a"]), ["pa", "ta", "ka"]);
    assert_eq!(split(&["a"]), ["a"]);
    assert_eq!(split(&["e", "s", "t", "r", "a"]), ["es", "tra"]);
    assert!(matches!(ssp_syllabify::<&str>(&[], &inv), Err(Error::EmptyInput(_))));
}
