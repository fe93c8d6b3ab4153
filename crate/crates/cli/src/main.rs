fn main() {
    std::process::exit(expander_lab_cli::run(std::env::args_os()));
}
