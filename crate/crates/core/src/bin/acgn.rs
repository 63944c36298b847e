fn main() {
    std::process::exit(acgn::cli::main_from_args(std::env::args_os()));
}
