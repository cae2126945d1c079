fn main() {
    std::process::exit(fracwave::cli::run(std::env::args().collect()));
}
