fn main() {
    std::process::exit(medinet::cli::main());
}
