fn main() {
    std::process::exit(concordance::cli::run(std::env::args_os()));
}
