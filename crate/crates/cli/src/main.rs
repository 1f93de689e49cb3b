fn main() {
    std::process::exit(vqace::cli::main());
}
