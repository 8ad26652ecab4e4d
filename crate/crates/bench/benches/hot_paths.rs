//! Criterion benchmarks for the hot paths: edit distance, BIO span
//! decoding, and a single training step of the small model.

use criterion::{criterion_group, criterion_main, Criterion};

use sidlab_core::corpus::{decode_bio, parse_xsid};
use sidlab_core::distance::levenshtein;
use sidlab_core::model::{init_model, task_loss, optimizer_step, Batch, ModelConfig};
use sidlab_core::model::vocab::Vocab;
use sidlab_core::TaskKind;

fn synthetic_sid(n: usize) -> sidlab_core::Dataset {
    let mut text = String::new();
    for i in 0..n {
        text.push_str(&format!("# intent: intent{}\n", i % 4));
        for j in 0..8 {
            let tag = match j {
                2 => "B-thing",
                3 => "I-thing",
                _ => "O",
            };
            text.push_str(&format!("{}\tword{}\t{}\n", j + 1, (i + j) % 50, tag));
        }
        text.push('\n');
    }
    parse_xsid(&text, "bench", "en").unwrap()
}

fn bench_levenshtein(c: &mut Criterion) {
    let a: Vec<char> = "the quick brown fox jumps over the lazy dog".chars().collect();
    let b: Vec<char> = "da schnelle braune fuchs springt ueber den hund".chars().collect();
    c.bench_function("levenshtein_chars_44x47", |bencher| {
        bencher.iter(|| levenshtein(std::hint::black_box(&a), std::hint::black_box(&b)))
    });
}

fn bench_decode_bio(c: &mut Criterion) {
    let tags: Vec<String> = ["O", "B-a", "I-a", "I-b", "B-b", "O", "I-a", "B-a"]
        .iter()
        .cycle()
        .take(64)
        .map(|s| s.to_string())
        .collect();
    c.bench_function("decode_bio_64_tags", |bencher| {
        bencher.iter(|| decode_bio(std::hint::black_box(&tags)).unwrap())
    });
}

fn bench_train_step(c: &mut Criterion) {
    let data = synthetic_sid(8);
    let vocab = Vocab::build([&data]);
    let mut m = init_model(ModelConfig::default(), vocab, 7).unwrap();
    m.ensure_heads("SID", TaskKind::Sid).unwrap();
    let batch = Batch {
        task_name: "SID".to_string(),
        kind: TaskKind::Sid,
        sentences: data.sentences.clone(),
        mlm: None,
    };
    c.bench_function("sid_train_step_batch8", |bencher| {
        bencher.iter(|| {
            let (_, grads) = task_loss(&m, std::hint::black_box(&batch)).unwrap();
            optimizer_step(&mut m, &grads);
        })
    });
}

criterion_group!(benches, bench_levenshtein, bench_decode_bio, bench_train_step);
criterion_main!(benches);
