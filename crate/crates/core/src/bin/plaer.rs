fn main() {
    std::process::exit(plaer::cli::main_impl());
}
