fn main() {
    std::process::exit(carleman_lab::cli::main_with_args(std::env::args_os()));
}
