fn main() {
    std::process::exit(chemlinker_cli::main_with_args(std::env::args_os()));
}
