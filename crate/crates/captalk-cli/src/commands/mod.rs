pub mod assemble;
pub mod build_corpus;
pub mod eval;
pub mod extract_cot;
pub mod fit;
