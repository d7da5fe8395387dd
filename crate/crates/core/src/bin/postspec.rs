fn main() {
    std::process::exit(postspec::cli::main());
}
