fn main() {
    std::process::exit(ctxnet::cli::run(std::env::args_os()));
}
