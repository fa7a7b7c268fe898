fn main() {
    std::process::exit(ncadmm_cli::run(std::env::args_os()));
}
