use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use seekqa::env::Func;
use seekqa::synth::{synthesize_corpus, SynthSpec};

fn retrieval(c: &mut Criterion) {
    let spec = SynthSpec {
        questions: 200,
        dev_questions: 0,
        ..SynthSpec::default()
    };
    let suite = synthesize_corpus(&spec, 1).unwrap();
    let retriever = suite.retriever(1000).unwrap();
    let queries: Vec<&str> = suite
        .questions
        .iter()
        .take(32)
        .map(|q| q.text.as_str())
        .collect();
    let mut group = c.benchmark_group(format!("retrieve_{}_passages", retriever.corpus().len()));
    for (name, func) in [("sparse", Func::Sparse), ("dense", Func::Dense)] {
        group.bench_function(name, |b| {
            b.iter(|| {
                for q in &queries {
                    black_box(retriever.retrieve(func, black_box(q)).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, retrieval);
criterion_main!(benches);
