fn main() {
    std::process::exit(svnn::cli::run(std::env::args_os()));
}
