fn main() {
    std::process::exit(obfscan::cli::run(std::env::args_os()));
}
