fn main() {
    std::process::exit(aircast::cli::run_pipeline(std::env::args_os()));
}
