fn main() {
    std::process::exit(nonreg_cli::run(std::env::args_os()));
}
