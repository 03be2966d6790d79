fn main() {
    std::process::exit(demcoh::cli::main());
}
