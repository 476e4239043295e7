fn main() {
    std::process::exit(mbt::cli::main());
}
