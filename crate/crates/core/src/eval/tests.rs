use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::adapters::{LoraAdapter, LoraHyper, ProjectionParams};
use crate::model::{BaseModel, ModelConfig};
use crate::numkernel::Tensor;
use crate::tasks::{gen_compositional, Lang, TaskKind};
use crate::Error;

fn toks(s: &str) -> Vec<String> {
    tokenize(s)
}

#[test]
fn rouge_hand_examples() {
    let p = rouge_n(&toks("a b c"), &toks("a c d"), 1);
    assert_eq!((p.precision, p.recall, p.f1), (2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0));
    let l = rouge_l(&toks("a b c d"), &toks("a c b d"));
    assert_eq!((l.precision, l.recall, l.f1), (0.75, 0.75, 0.75));
    assert_eq!(rouge_n(&toks("x y"), &toks("a b"), 1).f1, 0.0);
    assert_eq!(rouge_l(&toks(""), &toks("a b")).f1, 0.0);
    assert_eq!(score("a b", "").rouge_l_f, 0.0);
    let same = score("The cat sat", "the CAT sat");
    assert_eq!((same.rouge1_f, same.rouge2_f, same.rouge_l_f), (1.0, 1.0, 1.0));
}

#[test]
fn rouge_n_clips_repeated_ngrams() {
    let p = rouge_n(&toks("a a a a"), &toks("a b"), 1);
    assert_eq!(p.precision, 0.25);
    assert_eq!(p.recall, 0.5);
}

#[test]
fn rouge_n_of_a_sequence_with_itself_is_one() {
    let a = toks("a b a c b a d");
    for n in 1..=a.len() {
        assert_eq!(rouge_n(&a, &a, n).f1, 1.0, "n={n}");
    }
}

#[test]
fn timing_summary() {
    let t = Timing::from_samples(&[0.3]);
    assert_eq!((t.mean, t.std, t.n), (0.3, 0.0, 1));
    let t = Timing::from_samples(&[1.0, 2.0, 4.0, 5.0]);
    assert_eq!(t.mean, 3.0);
    assert!((t.std - 2.5f64.sqrt()).abs() < 1e-12);
    assert!(t.min <= t.mean && t.mean <= t.max);
}

#[test]
fn method_names_and_lists() {
    assert_eq!(Method::ALL.len(), 10);
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
        assert_eq!(serde_json::to_value(m).unwrap(), m.name());
    }
    assert_eq!(
        Method::parse_list("linear, projection").unwrap(),
        vec![Method::Linear, Method::Projection]
    );
    assert_eq!(Method::parse_list("all").unwrap().len(), 10);
    let err = Method::parse_list("linear,foo").unwrap_err();
    assert!(err.to_string().contains("two-step"), "{err}");
    assert_eq!(Method::TwoStep.inference_passes(), 2);
}

#[test]
fn subset_sizes() {
    let data = gen_compositional(Lang::Es, 1, 120);
    assert_eq!(subset(&data, 0.2, 0).unwrap().len(), 24);
    assert_eq!(subset(&data, 0.2, 0).unwrap(), subset(&data, 0.2, 0).unwrap());
    assert_eq!(subset(&data[..1], 0.2, 0).unwrap().len(), 1);
    assert!(subset(&data, 0.0, 0).is_err());
}

fn tiny_artifacts() -> Artifacts {
    let config = ModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        n_kv_heads: 1,
        mlp_dim: 32,
        ..ModelConfig::desk()
    };
    let mut model = BaseModel::new(config.clone(), 1).unwrap();
    model.freeze();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hyper = LoraHyper { rank: 4, alpha: 8.0, dropout: 0.0 };
    let mut adapter = |task| {
        let mut a = LoraAdapter::init(&config, task, hyper.clone(), &mut rng).unwrap();
        for f in a.sites.values_mut() {
            f.b = Tensor::randn(f.b.shape(), 0.3, &mut rng);
        }
        a
    };
    let lora1 = adapter(TaskKind::Summarize);
    let lora2 = adapter(TaskKind::Translate(Lang::Es));
    let joint = adapter(TaskKind::Compose(Lang::Es));
    let mut projection = ProjectionParams::init(&config, 1, &mut rng);
    for t in projection.tensors_mut() {
        *t = Tensor::randn(t.shape(), 0.5, &mut rng);
    }
    Artifacts {
        model: model.into(),
        lora1: Some(lora1),
        lora2: Some(lora2),
        joint: Some(joint),
        projection: Some(projection),
        lorahub: Some(vec![0.7, 0.2]),
        lang: Lang::Es,
    }
}

#[test]
fn two_step_is_the_composition_of_single_adapter_passes() {
    let art = tiny_artifacts();
    let (l1, l2) = (art.lora1.clone().unwrap(), art.lora2.clone().unwrap());
    let model = art.model.clone();
    let engine = Engine::new(art, &Method::ALL, MergeSettings::default()).unwrap();
    let v = crate::tasks::Vocab::global();
    for e in gen_compositional(Lang::Es, 3, 4) {
        let inf = engine.infer(Method::TwoStep, &e.input).unwrap();
        let p1 = crate::model::prompt_tokens(TaskKind::Summarize, &e.input);
        let mid = v.decode(&model.generate(&p1, &l1.deltas().unwrap(), 24, v.eos()).unwrap());
        let p2 = crate::model::prompt_tokens(TaskKind::Translate(Lang::Es), &mid);
        let out = v.decode(&model.generate(&p2, &l2.deltas().unwrap(), 24, v.eos()).unwrap());
        assert_eq!(inf.intermediate.as_deref(), Some(mid.as_str()));
        assert_eq!(inf.output, out);
        assert_eq!(inf.passes, 2);
    }
}

#[test]
fn compare_all_is_complete_ordered_and_deterministic() {
    let engine = Engine::new(tiny_artifacts(), &Method::ALL, MergeSettings::default()).unwrap();
    let data = gen_compositional(Lang::Es, 5, 3);
    let mut shuffled = Method::ALL.to_vec();
    shuffled.reverse();
    let a = compare_all(&engine, &shuffled, &data, 7).unwrap();
    let b = compare_all(&engine, &Method::ALL, &data, 7).unwrap();
    let methods: Vec<Method> = a.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::ALL.to_vec());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.rouge, y.rouge);
        assert_eq!(x.n, 3);
    }
    let run = run_method(&engine, Method::Linear, &data).unwrap();
    assert_eq!(run.latencies.len(), data.len());
    let proj = a.row(Method::Projection).unwrap();
    assert_eq!(proj.inference_passes, 1);
    assert_eq!(proj.additional_storage_bytes, proj.additional_params * 8);
    assert_eq!(a.row(Method::TwoStep).unwrap().inference_passes, 2);
    let csv = a.to_csv();
    assert_eq!(csv.lines().count(), 11);
    assert!(a.to_table().contains("Projection merge"));
    let back: EvalReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn missing_artifacts_are_config_errors() {
    let mut art = tiny_artifacts();
    art.projection = None;
    let err = Engine::new(art.clone(), &[Method::Projection], MergeSettings::default()).err().unwrap();
    assert!(matches!(err, Error::Config(ref m) if m.contains("projection")), "{err}");
    assert!(Engine::new(art.clone(), &[Method::Linear], MergeSettings::default()).is_ok());
    art.lora2 = None;
    assert!(Engine::new(art, &[Method::TwoStep], MergeSettings::default()).is_err());
}

#[test]
fn unprepared_method_is_rejected_at_inference() {
    let engine = Engine::new(tiny_artifacts(), &[Method::ZeroShot], MergeSettings::default()).unwrap();
    assert!(matches!(engine.infer(Method::Joint, "anna : hi ."), Err(Error::Config(_))));
}

#[test]
fn inference_never_touches_base_weights() {
    let art = tiny_artifacts();
    let before = art.model.checksum();
    let engine = Engine::new(art, &Method::ALL, MergeSettings::default()).unwrap();
    for m in Method::ALL {
        engine.infer(m, "anna : meet park . bob : bring snacks .").unwrap();
    }
    assert_eq!(engine.model().checksum(), before);
}

/// Strings over {a,b,c} of length ≤ `max`, with each string's set of
/// distinct subsequences. LCS by brute force is the longest subsequence of
/// `a` that is also a subsequence of `b`.
struct SubseqOracle {
    strings: Vec<Vec<u8>>,
    offsets: Vec<usize>,
    /// Per string: bitset of the ids of all its subsequences.
    bits: Vec<Vec<u64>>,
    /// Per string: distinct subsequence ids, longest first.
    desc: Vec<Vec<u32>>,
}

impl SubseqOracle {
    fn new(max: usize) -> Self {
        let mut strings = Vec::new();
        let mut offsets = Vec::new();
        for len in 0..=max {
            offsets.push(strings.len());
            for code in 0..3usize.pow(len as u32) {
                let mut s = vec![0u8; len];
                let mut c = code;
                for slot in s.iter_mut().rev() {
                    *slot = (c % 3) as u8;
                    c /= 3;
                }
                strings.push(s);
            }
        }
        let n = strings.len();
        let words = n.div_ceil(64);
        let id = |s: &[u8]| offsets[s.len()] + s.iter().fold(0usize, |a, &x| a * 3 + x as usize);
        let mut bits = Vec::with_capacity(n);
        let mut desc = Vec::with_capacity(n);
        for s in &strings {
            let mut set = vec![0u64; words];
            let mut ids = Vec::new();
            for mask in 0u32..(1 << s.len()) {
                let sub: Vec<u8> = (0..s.len()).filter(|i| mask >> i & 1 == 1).map(|i| s[i]).collect();
                let k = id(&sub);
                if set[k / 64] >> (k % 64) & 1 == 0 {
                    set[k / 64] |= 1 << (k % 64);
                    ids.push(k as u32);
                }
            }
            ids.sort_by_key(|&k| std::cmp::Reverse(strings_len(&offsets, k as usize)));
            bits.push(set);
            desc.push(ids);
        }
        Self { strings, offsets, bits, desc }
    }

    fn lcs(&self, a: usize, b: usize) -> usize {
        let set = &self.bits[b];
        for &k in &self.desc[a] {
            let k = k as usize;
            if set[k / 64] >> (k % 64) & 1 == 1 {
                return strings_len(&self.offsets, k);
            }
        }
        unreachable!("the empty string is a common subsequence")
    }
}

fn strings_len(offsets: &[usize], id: usize) -> usize {
    offsets.iter().rposition(|&o| o <= id).expect("offsets start at 0")
}

#[test]
fn lcs_dp_matches_brute_force_exhaustively_up_to_length_5() {
    let oracle = SubseqOracle::new(5);
    const LETTERS: [&str; 3] = ["a", "b", "c"];
    let words: Vec<Vec<&str>> = oracle
        .strings
        .iter()
        .map(|s| s.iter().map(|&c| LETTERS[c as usize]).collect())
        .collect();
    for a in 0..words.len() {
        for b in 0..words.len() {
            assert_eq!(lcs_len(&words[a], &words[b]), oracle.lcs(a, b), "{:?} {:?}", words[a], words[b]);
        }
    }
}
