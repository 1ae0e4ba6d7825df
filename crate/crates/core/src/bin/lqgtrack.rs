fn main() {
    lqgtrack::parallel::configure_from_env();
    std::process::exit(lqgtrack::cli::run(std::env::args_os()));
}
