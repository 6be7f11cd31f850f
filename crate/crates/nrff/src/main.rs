fn main() {
    std::process::exit(nrff::cli::main_with_args(std::env::args_os()));
}
