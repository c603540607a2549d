fn main() {
    std::process::exit(scopt::cli::main());
}
