fn main() {
    std::process::exit(goldset_service::cli::run(std::env::args_os()));
}
