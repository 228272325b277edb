fn main() {
    std::process::exit(virtual_levels::cli::main_with_args(std::env::args_os()));
}
