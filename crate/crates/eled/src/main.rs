fn main() {
    std::process::exit(eled::cli::main());
}
