#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;

use rand::seq::IndexedRandom;
use rand::Rng;

use cultvqa::dsl::{Arg, Builtin, Program, Step, ValueType};
use cultvqa::kb::KnowledgeBase;

const SELECTORS: [&str; 4] = ["largest", "most_confident", "leftmost", "rightmost"];
const ODD_STRINGS: [&str; 8] = [
    "",
    "say \"hi\"",
    "back\\slash",
    "two\nlines",
    "tab\there",
    "# not a comment",
    "phở bò, (nóng)",
    "đ = x",
];

fn fresh_name(rng: &mut impl Rng, taken: &[(String, ValueType)]) -> String {
    loop {
        let len = rng.random_range(1..=6);
        let mut s = String::new();
        s.push(rng.random_range(b'a'..=b'z') as char);
        for _ in 1..len {
            let pool = b"abcdefghijklmnopqrstuvwxyz0123456789_";
            s.push(*pool.choose(rng).unwrap() as char);
        }
        if !taken.iter().any(|(n, _)| *n == s) {
            return s;
        }
    }
}

fn literal(rng: &mut impl Rng, kb: &KnowledgeBase, odd: bool, known: bool) -> String {
    match if known { 1 } else { rng.random_range(0..4) } {
        0 if odd => ODD_STRINGS.choose(rng).unwrap().to_string(),
        1 | 2 => {
            let e = kb.entities().choose(rng).unwrap();
            let names: Vec<&str> = e.all_names().collect();
            names.choose(rng).unwrap().to_string()
        }
        _ => ["chợ", "món lạ", "cái gì đây", "tre"].choose(rng).unwrap().to_string(),
    }
}

/// Random well-typed program. With `odd_strings`, literals include quotes,
/// escapes and other characters that stress the formatter.
pub fn random_program(rng: &mut impl Rng, kb: &KnowledgeBase, odd_strings: bool) -> Program {
    random_program_with(rng, kb, odd_strings, false)
}

/// `resolvable` restricts identification to `identify_object` and text
/// literals to knowledge-base names, so most programs resolve an entity.
pub fn random_program_with(rng: &mut impl Rng, kb: &KnowledgeBase, odd_strings: bool, resolvable: bool) -> Program {
    let mut vars: Vec<(String, ValueType)> = Vec::new();
    let mut steps = Vec::new();
    let body: Vec<Builtin> = Builtin::ALL
        .into_iter()
        .filter(|b| *b != Builtin::ComposeAnswer)
        .filter(|b| !resolvable || !matches!(b.category_family(), Some(f) if !f.is_empty()))
        .collect();
    let n = rng.random_range(1..=7);
    while steps.len() < n {
        let f = *body.choose(rng).unwrap();
        let sig = f.signature();
        let mut args = Vec::new();
        let mut ok = true;
        for (i, t) in sig.param_types.iter().enumerate() {
            let candidates: Vec<&String> = vars.iter().filter(|(_, vt)| vt == t).map(|(n, _)| n).collect();
            if *t == ValueType::Text && (candidates.is_empty() || rng.random_bool(0.8)) {
                let s = if f == Builtin::SelectRegion && i == 1 && (resolvable || rng.random_bool(0.85)) {
                    SELECTORS.choose(rng).unwrap().to_string()
                } else {
                    literal(rng, kb, odd_strings, resolvable)
                };
                args.push(Arg::Str(s));
            } else if let Some(v) = candidates.choose(rng) {
                args.push(Arg::Var((*v).clone()));
            } else {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let var = fresh_name(rng, &vars);
        vars.push((var.clone(), sig.return_type));
        steps.push(Step {
            var,
            func: sig.name.to_string(),
            args,
            line: 0,
        });
    }
    let texts: Vec<&String> = vars.iter().filter(|(_, t)| *t == ValueType::Text).map(|(n, _)| n).collect();
    let mut args = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        match texts.choose(rng) {
            Some(v) if rng.random_bool(0.85) => args.push(Arg::Var((*v).clone())),
            _ => args.push(Arg::Str(literal(rng, kb, odd_strings, resolvable))),
        }
    }
    let var = fresh_name(rng, &vars);
    steps.push(Step {
        var,
        func: Builtin::ComposeAnswer.name().to_string(),
        args,
        line: 0,
    });
    Program { steps }
}

fn occurrences(seq: &[u8], gram: &[u8]) -> usize {
    (0..seq.len()).filter(|&i| i + gram.len() <= seq.len() && seq[i..i + gram.len()] == *gram).count()
}

/// BLEU-4 by direct enumeration of candidate n-grams.
pub fn bleu_oracle(cand: &[u8], refs: &[Vec<u8>]) -> f64 {
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let total = cand.len().saturating_sub(n - 1);
        let mut distinct: Vec<&[u8]> = Vec::new();
        for i in 0..total {
            let g = &cand[i..i + n];
            if !distinct.contains(&g) {
                distinct.push(g);
            }
        }
        let clipped: usize = distinct
            .iter()
            .map(|g| {
                let best = refs.iter().map(|r| occurrences(r, g)).max().unwrap_or(0);
                occurrences(cand, g).min(best)
            })
            .sum();
        let p = if n > 1 && clipped == 0 {
            1.0 / (total as f64 + 1.0)
        } else if total == 0 {
            0.0
        } else {
            clipped as f64 / total as f64
        };
        product *= p;
    }
    if product == 0.0 {
        return 0.0;
    }
    let mut lens: Vec<usize> = refs.iter().map(Vec::len).collect();
    lens.sort_by_key(|&l| (l.abs_diff(cand.len()), l));
    let r = lens[0] as f64;
    let c = cand.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * product.powf(0.25)
}

fn is_subsequence(small: &[u8], big: &[u8]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

/// ROUGE-L F1 with the LCS found by trying every subsequence of the shorter side.
pub fn rouge_oracle(cand: &[u8], reference: &[u8]) -> f64 {
    let (short, long) = if cand.len() <= reference.len() { (cand, reference) } else { (reference, cand) };
    let mut lcs = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<u8> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| short[i]).collect();
        if sub.len() > lcs && is_subsequence(&sub, long) {
            lcs = sub.len();
        }
    }
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub struct MockServer {
    pub url: String,
    handle: JoinHandle<String>,
}

impl MockServer {
    /// Serves exactly one HTTP request with the given status and body.
    pub fn once(status: u16, body: &str) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let body = body.to_string();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut req_body = vec![0; len];
            reader.read_exact(&mut req_body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
            head + &String::from_utf8_lossy(&req_body)
        });
        MockServer { url, handle }
    }

    /// The raw request the server received.
    pub fn request(self) -> String {
        self.handle.join().unwrap()
    }
}

pub struct Trial {
    pub program: Program,
    pub image_id: String,
    pub explanation: cultvqa::explain::Explanation,
    pub trace: cultvqa::dsl::ExecutionTrace,
    pub detections: Vec<cultvqa::perception::Detection>,
}

/// Executes a random program on a random bundled fixture and explains it.
pub fn constructive_trial(
    rng: &mut impl Rng,
    kb: &KnowledgeBase,
    fixtures: &cultvqa::perception::DetectionIndex,
) -> Trial {
    use cultvqa::dsl::{execute_program, ExecConfig, ExecContext};
    use cultvqa::explain::{synthesize_explanation, ExplainConfig};

    let ids: Vec<&str> = fixtures.image_ids().collect();
    let image_id = ids.choose(rng).unwrap().to_string();
    let detections = fixtures.get(&image_id).unwrap().to_vec();
    let resolvable = rng.random_bool(0.5);
    let program = random_program_with(rng, kb, false, resolvable);
    let config = ExecConfig::default();
    let ctx = ExecContext {
        detections: &detections,
        kb,
        question: "",
        config: &config,
    };
    let trace = execute_program(&program, &ctx).expect("generated programs are well typed");
    let explain = ExplainConfig {
        k: rng.random_range(1..=4),
        ..ExplainConfig::default()
    };
    let explanation = synthesize_explanation(&trace, kb, &detections, &explain);
    Trial {
        program,
        image_id,
        explanation,
        trace,
        detections,
    }
}

const FAKE_WORDS: [&str; 8] = ["được", "phát", "minh", "tại", "sao", "hỏa", "bởi", "robot"];

/// A sentence no knowledge-base field contains.
pub fn hallucinated_sentence(rng: &mut impl Rng) -> String {
    let words: Vec<&str> = (0..rng.random_range(3..8)).map(|_| *FAKE_WORDS.choose(rng).unwrap()).collect();
    format!("Nó {} vào năm {}.", words.join(" "), rng.random_range(3000..9999))
}
