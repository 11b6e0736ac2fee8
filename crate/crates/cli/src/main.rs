fn main() {
    std::process::exit(ergolab_cli::main_with(std::env::args_os()));
}
