fn main() {
    std::process::exit(triplane_core::cli::run());
}
