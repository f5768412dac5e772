fn main() {
    std::process::exit(qbm::cli::main_entry());
}
