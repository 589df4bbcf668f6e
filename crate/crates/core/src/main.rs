fn main() {
    std::process::exit(trilevel::cli::run(std::env::args_os()));
}
