fn main() {
    std::process::exit(pharmonic::cli::main());
}
