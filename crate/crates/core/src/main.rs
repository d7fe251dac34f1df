fn main() {
    std::process::exit(adhm_kit::cli::run());
}
