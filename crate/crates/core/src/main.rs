fn main() {
    std::process::exit(capkm::cli::run());
}
