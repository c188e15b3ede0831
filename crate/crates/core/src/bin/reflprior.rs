fn main() {
    std::process::exit(reflprior::cli::main());
}
