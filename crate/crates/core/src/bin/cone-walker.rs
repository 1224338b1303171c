fn main() {
    std::process::exit(cone_walker::cli::main_from_env());
}
