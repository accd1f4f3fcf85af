fn main() {
    std::process::exit(rating_influence::run())
}
