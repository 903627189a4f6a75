fn main() {
    std::process::exit(sbi_core::cli::run(std::env::args_os()));
}
