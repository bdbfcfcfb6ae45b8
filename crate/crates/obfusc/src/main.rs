fn main() {
    std::process::exit(obfusc::cli::run(std::env::args_os()));
}
