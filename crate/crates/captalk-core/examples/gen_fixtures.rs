//! Regenerates the fixture corpus shipped under `fixtures/`.
//!
//! Usage: `cargo run -p captalk-core --example gen_fixtures -- [DIR] [SEED]`

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "fixtures".to_string());
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(42);
    let summary = captalk_core::fixtures::write_fixture_corpus(&dir, seed)
        .expect("fixture generation failed");
    println!(
        "wrote {} utterances across {} sessions to {dir}",
        summary.n_utterances, summary.n_sessions
    );
}
