fn main() {
    std::process::exit(kolmo_lab::run());
}
