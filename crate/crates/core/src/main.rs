fn main() {
    std::process::exit(roadtopo::cli::run(std::env::args_os()));
}
