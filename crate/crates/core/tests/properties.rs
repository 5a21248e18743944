mod common;

use std::sync::Mutex;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cultvqa::bundled;
use cultvqa::dsl::{format_program, parse_program, typecheck_program};
use cultvqa::evalkit::{
    bleu4, cohen_kappa, meteor_lite, rouge_l, run_ablation, EvalOptions,
};
use cultvqa::explain::{check_consistency, CheckId, Templates};
use cultvqa::pipeline::{AblationConfig, DetectionSource, Engine};
use cultvqa::progen::{BackendError, GeneratorBackend, ProgramGenerator};

#[test]
fn format_then_parse_is_identity() {
    let kb = bundled::starter_kb();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..500 {
        let p = common::random_program(&mut rng, &kb, true);
        assert!(typecheck_program(&p).is_empty(), "program {i} ill typed");
        let text = format_program(&p);
        let back = parse_program(&text).unwrap_or_else(|e| panic!("program {i}: {e}\n{text}"));
        assert_eq!(back, p, "program {i}:\n{text}");
        assert_eq!(format_program(&back), text);
    }
}

#[test]
fn explanations_of_random_programs_are_consistent() {
    let kb = bundled::starter_kb();
    let fixtures = bundled::fixtures();
    let templates = Templates::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..200 {
        let t = common::constructive_trial(&mut rng, &kb, &fixtures);
        let report = check_consistency(&t.explanation, &t.detections, &kb, &t.trace, &templates);
        assert!(
            report.overall,
            "trial {i} on {}:\n{}\n{:#?}",
            t.image_id,
            format_program(&t.program),
            report.checks
        );
    }
}

#[test]
fn injected_sentences_fail_claim_support() {
    let kb = bundled::starter_kb();
    let fixtures = bundled::fixtures();
    let templates = Templates::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..100 {
        let mut t = common::constructive_trial(&mut rng, &kb, &fixtures);
        let fake = common::hallucinated_sentence(&mut rng);
        let section = if rng.random_bool(0.5) {
            &mut t.explanation.sections.cultural_context
        } else {
            &mut t.explanation.sections.elaboration
        };
        if section.is_empty() {
            *section = fake;
        } else {
            section.push(' ');
            section.push_str(&fake);
        }
        let report = check_consistency(&t.explanation, &t.detections, &kb, &t.trace, &templates);
        assert!(!report.passed(CheckId::ClaimSupported), "trial {i} not flagged");
        assert!(!report.overall);
    }
}

/// Replays a fixed list of responses, then repeats the last one.
struct Adversary {
    responses: Vec<String>,
    next: Mutex<usize>,
}

impl GeneratorBackend for Adversary {
    fn complete(&self, _prompt: &str) -> Result<String, BackendError> {
        let mut i = self.next.lock().unwrap();
        let out = self.responses[(*i).min(self.responses.len() - 1)].clone();
        *i += 1;
        Ok(out)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generator_output_always_typechecks(
        responses in prop::collection::vec(
            prop_oneof![
                ".{0,80}",
                "[a-z]{1,3} = [a-z_]{1,20}\\([a-z\", ]{0,20}\\)",
                Just("a = compose_answer(\"x\")".to_string()),
                Just("```\nr = detect_objects()\n```".to_string()),
            ],
            1..5,
        ),
        question in "\\PC{0,40}",
    ) {
        let backend = Adversary { responses, next: Mutex::new(0) };
        let outcome = ProgramGenerator::default().generate(&question, &["bánh xèo".into()], Some(&backend)).unwrap();
        prop_assert!(typecheck_program(&outcome.program).is_empty());
        prop_assert!(outcome.attempts <= 3);
    }
}

fn tokens() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 0..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bleu_matches_enumeration_oracle(cand in tokens(), refs in prop::collection::vec(tokens(), 1..4)) {
        let got = bleu4::<f64, _, _>(&cand, &refs).score;
        let want = common::bleu_oracle(&cand, &refs);
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn rouge_matches_subsequence_oracle(cand in tokens(), reference in tokens()) {
        let got: f64 = rouge_l(&cand, &reference);
        prop_assert!((got - common::rouge_oracle(&cand, &reference)).abs() < 1e-9);
    }

    #[test]
    fn metrics_stay_in_range(cand in tokens(), reference in tokens(), a in prop::collection::vec(0u8..4, 1..30), flip in prop::collection::vec(any::<bool>(), 30)) {
        for s in [
            bleu4::<f64, _, _>(&cand, std::slice::from_ref(&reference)).score,
            rouge_l::<f64, _>(&cand, &reference),
            meteor_lite::<f64, _>(&cand, &reference),
        ] {
            prop_assert!((0.0..=1.0).contains(&s), "{}", s);
        }
        let f32_bleu = bleu4::<f32, _, _>(&cand, std::slice::from_ref(&reference)).score;
        prop_assert!((0.0..=1.0).contains(&f32_bleu));
        let b: Vec<u8> = a.iter().zip(&flip).map(|(x, f)| if *f { (x + 1) % 4 } else { *x }).collect();
        let k: f64 = cohen_kappa(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k), "{}", k);
    }

    #[test]
    fn corrupting_a_token_never_raises_bleu(s in prop::collection::vec(0u8..5, 4..=10), pos in any::<prop::sample::Index>()) {
        let mut corrupted = s.clone();
        let i = pos.index(s.len());
        corrupted[i] = 9;
        let same = bleu4::<f64, _, _>(&s, std::slice::from_ref(&s)).score;
        prop_assert_eq!(same, 1.0);
        prop_assert!(bleu4::<f64, _, _>(&corrupted, std::slice::from_ref(&s)).score <= same);
        prop_assert_eq!(rouge_l::<f64, _>(&s, &s), 1.0);
    }
}

#[test]
fn aggregate_is_the_mean_of_items() {
    let kb = bundled::starter_kb();
    let records = bundled::sample_manifest(Some(&kb)).records;
    let engine = Engine::new(kb);
    let source = DetectionSource::Fixtures(bundled::fixtures());
    for config in AblationConfig::ALL {
        let r = run_ablation(&engine, &source, &records, config, &EvalOptions::default()).unwrap();
        let n = r.per_item.len() as f64;
        let mean = |f: fn(&cultvqa::evalkit::ItemScores) -> f64| r.per_item.iter().map(f).sum::<f64>() / n;
        assert!((r.aggregate.bleu4 - mean(|i| i.bleu4)).abs() < 1e-12);
        assert!((r.aggregate.rouge_l - mean(|i| i.rouge_l)).abs() < 1e-12);
        assert!((r.aggregate.cultural_accuracy - mean(|i| i.cultural_accuracy)).abs() < 1e-12);
        assert!((r.aggregate.explanation_quality - mean(|i| i.explanation_quality)).abs() < 1e-12);
    }
}

#[test]
fn answers_are_deterministic() {
    let engine = Engine::new(bundled::starter_kb());
    let source = DetectionSource::Fixtures(bundled::fixtures());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ids: Vec<String> = bundled::fixtures().image_ids().map(str::to_string).collect();
    let questions = ["Đây là món gì?", "Công trình này có lịch sử thế nào?", "So sánh các vùng miền", "Mô tả trang phục"];
    for _ in 0..20 {
        let id = ids.choose(&mut rng).unwrap();
        let q = questions.choose(&mut rng).unwrap();
        let a = cultvqa::pipeline::run_answer(&engine, &source, id, q, AblationConfig::Full).unwrap();
        let b = cultvqa::pipeline::run_answer(&engine, &source, id, q, AblationConfig::Full).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
