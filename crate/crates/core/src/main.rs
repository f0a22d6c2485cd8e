fn main() {
    std::process::exit(fdbeam::cli::run(std::env::args_os()));
}
