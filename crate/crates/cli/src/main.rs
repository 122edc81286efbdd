fn main() {
    std::process::exit(mixmatch_cli::run(std::env::args_os()));
}
