fn main() {
    std::process::exit(mpp_cli::main_with_args(std::env::args_os()));
}
