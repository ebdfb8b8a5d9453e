fn main() {
    std::process::exit(svlab::cli::main());
}
