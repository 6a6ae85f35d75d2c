fn main() {
    std::process::exit(shellfill::cli::main_with_args());
}
