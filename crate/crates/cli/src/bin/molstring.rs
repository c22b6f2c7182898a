fn main() {
    std::process::exit(chemlinker_cli::molstring_main(std::env::args_os()));
}
