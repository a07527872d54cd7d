fn main() {
    std::process::exit(payroute::cli::main());
}
