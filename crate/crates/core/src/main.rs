fn main() {
    std::process::exit(diploid_sim::cli::run(std::env::args_os()));
}
