fn main() {
    std::process::exit(falcon_cli::run(std::env::args_os()));
}
