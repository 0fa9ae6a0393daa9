fn main() {
    std::process::exit(cone_kg::cli::main());
}
