fn main() {
    std::process::exit(duo_fmaps::cli::run(std::env::args_os()));
}
