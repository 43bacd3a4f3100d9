fn main() {
    std::process::exit(semdup_cli::run(std::env::args()));
}
