fn main() {
    std::process::exit(gola::cli::run(std::env::args_os()));
}
