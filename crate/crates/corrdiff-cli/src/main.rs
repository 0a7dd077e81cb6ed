//! `corrdiff` binary entry point; all behavior lives in the library.

fn main() {
    std::process::exit(corrdiff_cli::run());
}
