fn main() {
    std::process::exit(mpnn_lab::cli::main_entry());
}
