fn main() {
    std::process::exit(radgrip::cli::main_with_args(std::env::args_os()));
}
