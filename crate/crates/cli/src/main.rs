fn main() {
    std::process::exit(nomasim_cli::run(std::env::args_os()));
}
