fn main() {
    std::process::exit(irisdeform_cli::app::run(std::env::args_os()));
}
