//! Sonority-driven syllabification of IPA phoneme strings.
//!
//! Every vowel is a nucleus. Consonants before the first vowel join the first
//! syllable and consonants after the last vowel join the last one. Between two
//! nuclei the cluster is cut so that the onset of the second syllable is the
//! longest suffix whose sonority never falls on the way to the nucleus.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::units::{compose, AlignedUnit, Granularity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SonorityClass {
    Plosive,
    Affricate,
    Fricative,
    Nasal,
    Liquid,
    Glide,
    Vowel,
}

impl SonorityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SonorityClass::Plosive => "plosive",
            SonorityClass::Affricate => "affricate",
            SonorityClass::Fricative => "fricative",
            SonorityClass::Nasal => "nasal",
            SonorityClass::Liquid => "liquid",
            SonorityClass::Glide => "glide",
            SonorityClass::Vowel => "vowel",
        }
    }
}

impl fmt::Display for SonorityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SonorityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "plosive" | "stop" => SonorityClass::Plosive,
            "affricate" => SonorityClass::Affricate,
            "fricative" => SonorityClass::Fricative,
            "nasal" => SonorityClass::Nasal,
            "liquid" | "lateral" | "rhotic" => SonorityClass::Liquid,
            "glide" | "approximant" | "semivowel" => SonorityClass::Glide,
            "vowel" => SonorityClass::Vowel,
            other => return Err(Error::Data(format!("unknown sonority class `{other}`"))),
        })
    }
}

/// Rank per sonority class; vowels hold the unique maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct SonorityScale {
    ranks: HashMap<SonorityClass, u8>,
}

impl Default for SonorityScale {
    fn default() -> Self {
        use SonorityClass::*;
        SonorityScale {
            ranks: [
                (Plosive, 0),
                (Affricate, 0),
                (Fricative, 1),
                (Nasal, 2),
                (Liquid, 3),
                (Glide, 4),
                (Vowel, 5),
            ]
            .into_iter()
            .collect(),
        }
    }
}

impl SonorityScale {
    pub fn with_ranks(ranks: HashMap<SonorityClass, u8>) -> Result<Self> {
        let vowel = *ranks
            .get(&SonorityClass::Vowel)
            .ok_or_else(|| Error::InvalidConfig("sonority scale lacks a vowel rank".into()))?;
        if ranks.iter().any(|(c, &r)| *c != SonorityClass::Vowel && r >= vowel) {
            return Err(Error::InvalidConfig("vowels must hold the unique maximal sonority".into()));
        }
        Ok(SonorityScale { ranks })
    }

    pub fn rank(&self, class: SonorityClass) -> u8 {
        self.ranks.get(&class).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct PhonemeInventory {
    entries: HashMap<String, SonorityClass>,
    fallback: SonorityClass,
    scale: SonorityScale,
}

/// Result of [`classify`]; `unknown` is set when the fallback class was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub class: SonorityClass,
    pub rank: u8,
    pub unknown: bool,
}

impl PhonemeInventory {
    pub fn new(entries: HashMap<String, SonorityClass>, fallback: SonorityClass) -> Self {
        PhonemeInventory {
            entries,
            fallback,
            scale: SonorityScale::default(),
        }
    }

    pub fn with_scale(mut self, scale: SonorityScale) -> Self {
        self.scale = scale;
        self
    }

    /// IPA symbols covering Italian, Spanish and English, plus common length
    /// and diphthong variants.
    pub fn default_ipa() -> Self {
        use SonorityClass::*;
        let groups: [(SonorityClass, &[&str]); 7] = [
            (Plosive, &["p", "b", "t", "d", "k", "ɡ", "g", "c", "ɟ", "q", "ʔ", "t̪", "d̪"]),
            (Affricate, &["ts", "dz", "tʃ", "dʒ", "t͡ʃ", "d͡ʒ", "t͡s", "d͡z"]),
            (Fricative, &["f", "v", "θ", "ð", "s", "z", "ʃ", "ʒ", "x", "ɣ", "h", "β", "ç", "χ", "ʝ"]),
            (Nasal, &["m", "n", "ɲ", "ŋ", "ɱ", "ɳ"]),
            (Liquid, &["l", "ʎ", "r", "ɾ", "ɹ", "ʁ", "ɫ", "ɻ"]),
            (Glide, &["j", "w", "ɥ"]),
            (
                Vowel,
                &[
                    "a", "e", "i", "o", "u", "ɛ", "ɔ", "ə", "ɪ", "ʊ", "æ", "ɑ", "ɒ", "ʌ", "ɜ", "ɐ", "y",
                    "ø", "œ", "ɚ", "ɝ", "aː", "eː", "iː", "oː", "uː", "ɑː", "ɔː", "ɜː", "eɪ", "aɪ",
                    "ɔɪ", "aʊ", "oʊ", "əʊ", "ɪə", "eə", "ʊə",
                ],
            ),
        ];
        let entries = groups
            .iter()
            .flat_map(|(class, syms)| syms.iter().map(move |s| (s.to_string(), *class)))
            .collect();
        PhonemeInventory::new(entries, Plosive)
    }

    /// Parses `symbol<TAB>class` lines; `#` starts a comment line.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (sym, class) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("inventory line {}: expected symbol<TAB>class", i + 1)))?;
            entries.insert(sym.trim().to_string(), class.parse()?);
        }
        Ok(PhonemeInventory::new(entries, SonorityClass::Plosive))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort();
        rows.iter().map(|(s, c)| format!("{s}\t{c}\n")).collect()
    }

    pub fn get(&self, symbol: &str) -> Option<SonorityClass> {
        self.entries.get(symbol).copied()
    }

    pub fn scale(&self) -> &SonorityScale {
        &self.scale
    }
}

impl PartialOrd for SonorityClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SonorityClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

pub fn classify(symbol: &str, inv: &PhonemeInventory) -> Classification {
    match inv.get(symbol) {
        Some(class) => Classification {
            class,
            rank: inv.scale.rank(class),
            unknown: false,
        },
        None => {
            warn!("phoneme `{symbol}` not in inventory, treating as {}", inv.fallback);
            Classification {
                class: inv.fallback,
                rank: inv.scale.rank(inv.fallback),
                unknown: true,
            }
        }
    }
}

/// A syllable as a half-open range into its word's phoneme list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Syllable {
    pub start: usize,
    pub end: usize,
    pub nucleus: usize,
}

impl Syllable {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub fn ssp_syllabify<S: AsRef<str>>(phonemes: &[S], inv: &PhonemeInventory) -> Result<Vec<Syllable>> {
    if phonemes.is_empty() {
        return Err(Error::EmptyInput("phoneme list".into()));
    }
    let classes: Vec<Classification> = phonemes.iter().map(|p| classify(p.as_ref(), inv)).collect();
    let nuclei: Vec<usize> = classes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.class == SonorityClass::Vowel)
        .map(|(i, _)| i)
        .collect();

    if nuclei.is_empty() {
        let max = classes.iter().map(|c| c.rank).max().unwrap_or(0);
        let nucleus = classes.iter().position(|c| c.rank == max).unwrap_or(0);
        return Ok(vec![Syllable {
            start: 0,
            end: phonemes.len(),
            nucleus,
        }]);
    }

    let mut out = Vec::with_capacity(nuclei.len());
    let mut start = 0;
    for (k, &nucleus) in nuclei.iter().enumerate() {
        let end = match nuclei.get(k + 1) {
            None => phonemes.len(),
            Some(&next) if next == nucleus + 1 => next,
            Some(&next) => {
                // The consonant next to the following nucleus always opens its
                // onset; extend left while sonority does not fall toward the nucleus.
                let mut onset_start = next - 1;
                while onset_start > nucleus + 1 && classes[onset_start - 1].rank <= classes[onset_start].rank {
                    onset_start -= 1;
                }
                onset_start
            }
        };
        out.push(Syllable { start, end, nucleus });
        start = end;
    }
    Ok(out)
}

/// Syllable-granularity units composed from a word's phoneme units.
pub fn align_syllables(syllables: &[Syllable], phoneme_units: &[AlignedUnit]) -> Result<Vec<AlignedUnit>> {
    let covered = syllables.last().map_or(0, |s| s.end);
    if covered != phoneme_units.len() {
        return Err(Error::Consistency(format!(
            "syllables cover {covered} phonemes but {} phoneme units were given",
            phoneme_units.len()
        )));
    }
    syllables
        .iter()
        .map(|syl| {
            let parts = phoneme_units
                .get(syl.start..syl.end)
                .filter(|p| !p.is_empty())
                .ok_or_else(|| Error::Consistency(format!("bad syllable range [{}, {})", syl.start, syl.end)))?;
            let label: String = parts.iter().map(|u| u.label.as_str()).collect();
            Ok(compose(label, Granularity::Syllable, parts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn render(phonemes: &[&str], syls: &[Syllable]) -> String {
        syls.iter()
            .map(|s| phonemes[s.start..s.end].concat())
            .collect::<Vec<_>>()
            .join(".")
    }

    fn syllabify(word: &[&str]) -> String {
        render(word, &ssp_syllabify(word, &PhonemeInventory::default_ipa()).unwrap())
    }

    #[test]
    fn classify_examples() {
        let inv = PhonemeInventory::default_ipa();
        assert_eq!(
            classify("a", &inv),
            Classification { class: SonorityClass::Vowel, rank: 5, unknown: false }
        );
        assert_eq!(classify("p", &inv).rank, 0);
        let c = classify("ʘ", &inv);
        assert_eq!((c.class, c.rank, c.unknown), (SonorityClass::Plosive, 0, true));
    }

    #[test]
    fn syllabify_examples() {
        assert_eq!(syllabify(&["p", "a", "t", "a", "k", "a"]), "pa.ta.ka");
        assert_eq!(syllabify(&["a"]), "a");
        assert_eq!(syllabify(&["e", "s", "t", "r", "a"]), "es.tra");
        assert_eq!(syllabify(&["k", "a", "r", "t", "a"]), "kar.ta");
        assert_eq!(syllabify(&["a", "i"]), "a.i");
        assert_eq!(syllabify(&["s", "t", "r", "a", "n", "s"]), "strans");
        assert_eq!(syllabify(&["a", "n", "n", "o"]), "a.nno");
    }

    #[test]
    fn vowelless_word_is_one_syllable() {
        let inv = PhonemeInventory::default_ipa();
        let syl = ssp_syllabify(&["p", "s", "t"], &inv).unwrap();
        assert_eq!(syl, vec![Syllable { start: 0, end: 3, nucleus: 1 }]);
    }

    #[test]
    fn empty_word_is_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            ssp_syllabify(&empty, &PhonemeInventory::default_ipa()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn inventory_tsv() {
        let inv = PhonemeInventory::parse_tsv("# comment\na\tvowel\np\tplosive\nl\tliquid\n").unwrap();
        assert_eq!(inv.get("l"), Some(SonorityClass::Liquid));
        assert!(PhonemeInventory::parse_tsv("a vowel\n").is_err());
        assert!(PhonemeInventory::parse_tsv("a\tbogus\n").is_err());
        let round = PhonemeInventory::parse_tsv(&PhonemeInventory::default_ipa().to_tsv()).unwrap();
        assert_eq!(round.get("ʃ"), Some(SonorityClass::Fricative));
    }

    #[test]
    fn custom_scale_must_keep_vowels_on_top() {
        let mut ranks: HashMap<_, _> = [(SonorityClass::Vowel, 3), (SonorityClass::Glide, 3)].into_iter().collect();
        assert!(SonorityScale::with_ranks(ranks.clone()).is_err());
        ranks.insert(SonorityClass::Glide, 2);
        assert!(SonorityScale::with_ranks(ranks).is_ok());
    }

    fn phone(label: &str, s: f64, e: f64, c: f64) -> AlignedUnit {
        AlignedUnit {
            label: label.into(),
            granularity: Granularity::Phoneme,
            start_s: s,
            end_s: e,
            confidence: c,
        }
    }

    #[test]
    fn syllable_spans() {
        let word = ["p", "a", "t", "a", "k", "a"];
        let syls = ssp_syllabify(&word, &PhonemeInventory::default_ipa()).unwrap();
        let phones: Vec<_> = word
            .iter()
            .enumerate()
            .map(|(i, p)| phone(p, i as f64 * 0.05, (i + 1) as f64 * 0.05, 0.9))
            .collect();
        let units = align_syllables(&syls, &phones).unwrap();
        let labels: Vec<_> = units.iter().map(|u| u.label.as_str()).collect();
        assert_eq!(labels, ["pa", "ta", "ka"]);
        assert!(units.windows(2).all(|w| w[0].end_s == w[1].start_s));
        assert!(units.iter().all(|u| u.granularity == Granularity::Syllable));

        let single = align_syllables(&[Syllable { start: 0, end: 1, nucleus: 0 }], &[phone("a", 0.1, 0.2, 0.4)]).unwrap();
        assert_eq!((single[0].start_s, single[0].end_s, single[0].confidence), (0.1, 0.2, 0.4));

        let two = align_syllables(
            &[Syllable { start: 0, end: 2, nucleus: 1 }],
            &[phone("t", 0.0, 0.1, 0.8), phone("a", 0.1, 0.2, 0.6)],
        )
        .unwrap();
        assert_abs_diff_eq!(two[0].confidence, 0.7, epsilon = 1e-12);

        assert!(matches!(align_syllables(&syls, &phones[..4]), Err(Error::Consistency(_))));
    }
}
